// fit_io.hpp -- FitResult serialization (fit.json) and reconstruction of the
// frozen intensity used by the resampler.
#pragma once

#include <fstream>
#include <optional>
#include <string>

#include <json.hpp>

#include "lgcp/engine.hpp"
#include "lgcp/pattern_io.hpp"
#include "lgcp/resimulate.hpp"

namespace lgcp {

inline const char* component_kind_name(ComponentKind k) {
  switch (k) {
    case ComponentKind::intercept: return "intercept";
    case ComponentKind::fixed_effect: return "fixed_effect";
    case ComponentKind::rw1_function: return "rw1_function";
    case ComponentKind::rw2_spatial: return "rw2_spatial";
    case ComponentKind::iid: return "iid";
  }
  return "?";
}

// Per-cell predictor of the first Poisson-count block at posterior means,
// excluding constructed-covariate (rw1) terms: the baseline frozen by the
// resampler. Copy scalings enter at their posterior-mean value.
inline std::vector<double> frozen_baseline(const AssembledModel& model, const FitResult& fit,
                                           const ModelData& data) {
  const int n_cells = model.grid.n_cells();
  std::vector<double> base(static_cast<std::size_t>(n_cells), 0.0);
  const BlockSpec* block = nullptr;
  for (const auto& b : model.spec.blocks)
    if (b.family == Family::poisson_count) {
      block = &b;
      break;
    }
  require(block != nullptr, "frozen_baseline: model has no poisson_count block");
  auto hyper_mean = [&](const std::string& name) {
    for (const auto& h : fit.hyper_summaries)
      if (h.name == name) return h.mean;
    throw ModelError("no hyper summary '" + name + "'");
  };
  for (const auto& term : block->terms) {
    int ci = model.component_index(term.component);
    const auto& comp = model.spec.components[static_cast<std::size_t>(ci)];
    if (comp.kind == ComponentKind::rw1_function) continue;
    double scale = term.fixed_scale;
    if (!term.hyper_scale.empty()) scale *= hyper_mean(term.hyper_scale);
    const auto& mean = fit.components[static_cast<std::size_t>(ci)].mean;
    for (int c = 0; c < n_cells; ++c) {
      double mult = 1.0;
      if (!term.obs_multiplier.empty()) {
        auto it = data.cell_fields.find(term.obs_multiplier);
        require(it != data.cell_fields.end(), "frozen_baseline: unknown multiplier");
        mult = it->second[static_cast<std::size_t>(c)];
      }
      int elem = 0;
      switch (comp.kind) {
        case ComponentKind::intercept:
        case ComponentKind::fixed_effect: elem = 0; break;
        case ComponentKind::rw2_spatial: elem = c; break;
        case ComponentKind::iid: elem = c; break;
        default: break;
      }
      base[static_cast<std::size_t>(c)] += scale * mult * mean[static_cast<std::size_t>(elem)];
    }
  }
  return base;
}

struct SavedFit {
  GridSpec grid;
  FitResult fit;
  std::vector<double> baseline_eta;
  std::vector<double> spline_knots, spline_values;
  EdgeRule edge_rule = EdgeRule::none;
  int n_points = 0;

  FittedIntensity fitted_intensity() const {
    FittedIntensity fi;
    fi.grid = grid;
    fi.baseline_eta = baseline_eta;
    fi.edge_rule = edge_rule;
    if (spline_knots.size() >= 3) fi.spline = spline_build(spline_knots, spline_values);
    return fi;
  }

  // posterior-mean intensity per cell (events per unit area)
  std::vector<double> intensity() const {
    auto fi = fitted_intensity();
    std::vector<double> lam(baseline_eta.size());
    for (std::size_t c = 0; c < lam.size(); ++c) lam[c] = std::exp(baseline_eta[c]);
    return lam;
  }
};

inline nlohmann::json fit_to_json(const SavedFit& sf) {
  nlohmann::json j;
  j["config_version"] = 1;
  j["grid"] = {{"rows", sf.grid.n_row},
               {"cols", sf.grid.n_col},
               {"window",
                {{"x_min", sf.grid.window.x_min},
                 {"x_max", sf.grid.window.x_max},
                 {"y_min", sf.grid.window.y_min},
                 {"y_max", sf.grid.window.y_max}}}};
  j["n_points"] = sf.n_points;
  j["edge_rule"] = sf.edge_rule == EdgeRule::censor ? "censor" : "none";
  j["dic"] = sf.fit.dic;
  j["p_d"] = sf.fit.p_d;
  j["deviance_at_mean"] = sf.fit.deviance_at_mean;
  j["mean_deviance"] = sf.fit.mean_deviance;
  j["clamp_count"] = sf.fit.clamp_count;
  j["mode_theta"] = sf.fit.mode_theta;
  j["baseline_eta"] = sf.baseline_eta;
  if (!sf.spline_knots.empty()) {
    j["spline"] = {{"knots", sf.spline_knots}, {"values", sf.spline_values}};
  } else {
    j["spline"] = nullptr;
  }
  for (const auto& p : sf.fit.hyper_points)
    j["hyper_points"].push_back(
        {{"theta", p.theta}, {"log_posterior", p.log_posterior}, {"weight", p.weight}});
  for (const auto& h : sf.fit.hyper_summaries)
    j["hyper_summaries"].push_back(
        {{"name", h.name}, {"mean", h.mean}, {"sd", h.sd}, {"lo95", h.lo95}, {"hi95", h.hi95}});
  for (const auto& c : sf.fit.components) {
    nlohmann::json jc{{"name", c.name},
                      {"kind", component_kind_name(c.kind)},
                      {"mean", c.mean},
                      {"sd", c.sd}};
    if (c.has_cov) jc["cov"] = c.cov;
    j["components"].push_back(jc);
  }
  return j;
}

inline void write_fit_json(const SavedFit& sf, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot open " + path + " for writing");
  out << fit_to_json(sf).dump(1) << "\n";
}

inline SavedFit read_fit_json(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open fit file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  SavedFit sf;
  auto jw = j.at("grid").at("window");
  Window w(jw.at("x_min").get<double>(), jw.at("x_max").get<double>(), jw.at("y_min").get<double>(),
           jw.at("y_max").get<double>());
  sf.grid = GridSpec(j.at("grid").at("rows").get<int>(), j.at("grid").at("cols").get<int>(), w);
  sf.n_points = j.value("n_points", 0);
  sf.edge_rule = j.value("edge_rule", std::string("none")) == "censor" ? EdgeRule::censor
                                                                       : EdgeRule::none;
  sf.baseline_eta = j.at("baseline_eta").get<std::vector<double>>();
  if (!j.at("spline").is_null()) {
    sf.spline_knots = j["spline"].at("knots").get<std::vector<double>>();
    sf.spline_values = j["spline"].at("values").get<std::vector<double>>();
  }
  sf.fit.dic = j.value("dic", 0.0);
  sf.fit.p_d = j.value("p_d", 0.0);
  sf.fit.clamp_count = j.value("clamp_count", 0L);
  if (j.contains("mode_theta")) sf.fit.mode_theta = j["mode_theta"].get<std::vector<double>>();
  if (j.contains("hyper_points"))
    for (const auto& p : j["hyper_points"]) {
      HyperPoint hp;
      hp.theta = p.at("theta").get<std::vector<double>>();
      hp.log_posterior = p.at("log_posterior").get<double>();
      hp.weight = p.at("weight").get<double>();
      sf.fit.hyper_points.push_back(std::move(hp));
    }
  if (j.contains("hyper_summaries"))
    for (const auto& h : j["hyper_summaries"]) {
      HyperSummary hs;
      hs.name = h.at("name").get<std::string>();
      hs.mean = h.at("mean").get<double>();
      hs.sd = h.at("sd").get<double>();
      hs.lo95 = h.at("lo95").get<double>();
      hs.hi95 = h.at("hi95").get<double>();
      sf.fit.hyper_summaries.push_back(std::move(hs));
    }
  if (j.contains("components"))
    for (const auto& c : j["components"]) {
      ComponentSummary cs;
      cs.name = c.at("name").get<std::string>();
      cs.mean = c.at("mean").get<std::vector<double>>();
      cs.sd = c.at("sd").get<std::vector<double>>();
      cs.length = static_cast<int>(cs.mean.size());
      if (c.contains("cov")) {
        cs.cov = c["cov"].get<std::vector<double>>();
        cs.has_cov = true;
      }
      std::string kind = c.value("kind", "intercept");
      if (kind == "rw1_function") cs.kind = ComponentKind::rw1_function;
      else if (kind == "rw2_spatial") cs.kind = ComponentKind::rw2_spatial;
      else if (kind == "iid") cs.kind = ComponentKind::iid;
      else if (kind == "fixed_effect") cs.kind = ComponentKind::fixed_effect;
      sf.fit.components.push_back(std::move(cs));
    }
  return sf;
}

}  // namespace lgcp
