// config.hpp -- model configuration files (JSON key-value tree, version 1).
#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "lgcp/model.hpp"

namespace lgcp {

struct ModelConfig {
  ModelSpec spec;
  int n_bins = 25;
  int grid_rows = 0, grid_cols = 0;  // 0: take from CLI
};

namespace detail {

inline PrecisionPrior prior_from_json(const nlohmann::json& j) {
  return PrecisionPrior(j.value("shape", 1.0), j.value("rate", 5e-5));
}

inline Family family_from_name(const std::string& name) {
  if (name == "poisson_count") return Family::poisson_count;
  if (name == "gaussian") return Family::gaussian;
  if (name == "poisson_log") return Family::poisson_log;
  throw ParseError("config: unknown family '" + name + "'");
}

}  // namespace detail

inline ModelConfig parse_model_config(const nlohmann::json& j) {
  if (j.value("config_version", 0) != 1)
    throw ParseError("config: expected config_version: 1");
  ModelConfig cfg;
  cfg.n_bins = j.value("n_bins", 25);
  if (j.contains("grid")) {
    cfg.grid_rows = j["grid"].value("rows", 0);
    cfg.grid_cols = j["grid"].value("cols", 0);
  }
  for (const auto& jc : j.at("components")) {
    std::string kind = jc.at("kind").get<std::string>();
    std::string name = jc.at("name").get<std::string>();
    ComponentSpec c;
    if (kind == "intercept") {
      c = intercept_component(name, jc.value("precision", 0.001));
    } else if (kind == "fixed_effect") {
      c = fixed_effect_component(name, jc.value("precision", 0.001));
    } else if (kind == "rw1_function") {
      c = rw1_component(name, jc.value("covariate", std::string("zc")),
                        jc.value("bins", cfg.n_bins),
                        jc.contains("prior") ? detail::prior_from_json(jc["prior"]) : PrecisionPrior());
      if (jc.contains("sum_to_zero")) c.sum_to_zero = jc["sum_to_zero"].get<bool>();
    } else if (kind == "rw2_spatial") {
      c = rw2_component(name, jc.contains("prior") ? detail::prior_from_json(jc["prior"])
                                                   : PrecisionPrior());
      if (jc.contains("sum_to_zero")) c.sum_to_zero = jc["sum_to_zero"].get<bool>();
    } else if (kind == "iid") {
      c = iid_component(name, jc.contains("prior") ? detail::prior_from_json(jc["prior"])
                                                   : PrecisionPrior());
      if (jc.contains("length")) c.length = jc["length"].get<int>();
    } else {
      throw ParseError("config: unknown component kind '" + kind + "'");
    }
    cfg.spec.components.push_back(std::move(c));
  }
  if (j.contains("scalings"))
    for (const auto& js : j["scalings"])
      cfg.spec.scalings.push_back(
          {js.at("name").get<std::string>(), js.value("mean", 0.0), js.value("sd", 10.0)});
  for (const auto& jb : j.at("blocks")) {
    BlockSpec b;
    b.name = jb.at("name").get<std::string>();
    b.family = detail::family_from_name(jb.at("family").get<std::string>());
    std::string data = jb.at("data").get<std::string>();
    if (data == "counts") {
      b.unit = ObsUnit::cells;
      b.data = "counts";
    } else if (data.rfind("mark:", 0) == 0) {
      b.unit = ObsUnit::points;
      b.data = data.substr(5);
    } else if (data.rfind("cell:", 0) == 0) {
      b.unit = ObsUnit::cells;
      b.data = data.substr(5);
    } else {
      throw ParseError("config: block data must be 'counts', 'mark:NAME' or 'cell:NAME'");
    }
    if (jb.contains("obs_precision")) {
      const auto& jo = jb["obs_precision"];
      if (jo.contains("fixed")) {
        b.obs_precision.is_hyper = false;
        b.obs_precision.fixed = jo["fixed"].get<double>();
      } else if (jo.contains("prior")) {
        b.obs_precision.is_hyper = true;
        b.obs_precision.prior = detail::prior_from_json(jo["prior"]);
      }
    }
    for (const auto& jt : jb.at("terms")) {
      PredictorTerm t;
      t.component = jt.at("component").get<std::string>();
      t.fixed_scale = jt.value("scale", 1.0);
      t.hyper_scale = jt.value("scale_hyper", std::string());
      t.obs_multiplier = jt.value("multiplier", std::string());
      b.terms.push_back(std::move(t));
    }
    cfg.spec.blocks.push_back(std::move(b));
  }
  return cfg;
}

inline ModelConfig read_model_config(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw ParseError("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    return parse_model_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace lgcp
