// model.hpp -- declarative model description (likelihood blocks, latent
// components, copy links) and its assembly into a stacked latent layout with
// a sparse design map.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lgcp/covariate.hpp"
#include "lgcp/gmrf.hpp"
#include "lgcp/pattern.hpp"

namespace lgcp {

enum class Family { poisson_count, gaussian, poisson_log };
enum class ComponentKind { intercept, fixed_effect, rw1_function, rw2_spatial, iid };
enum class ObsUnit { cells, points };

struct ComponentSpec {
  std::string name;
  ComponentKind kind = ComponentKind::intercept;
  int length = 1;                  // rw1: n_bins, rw2: n_cells, iid: n_cells or n_points
  bool sum_to_zero = false;
  double fixed_precision = 1e-3;   // intercept / fixed_effect Gaussian prior precision
  PrecisionPrior prior;            // rw1 / rw2 / iid precision hyperprior
  std::string covariate;           // rw1_function: which binned covariate drives the bin index

  bool has_precision_hyper() const {
    return kind == ComponentKind::rw1_function || kind == ComponentKind::rw2_spatial ||
           kind == ComponentKind::iid;
  }
};

inline ComponentSpec intercept_component(const std::string& name, double precision = 1e-3) {
  ComponentSpec c;
  c.name = name;
  c.kind = ComponentKind::intercept;
  c.length = 1;
  c.fixed_precision = precision;
  return c;
}

inline ComponentSpec fixed_effect_component(const std::string& name, double precision = 1e-3) {
  ComponentSpec c = intercept_component(name, precision);
  c.kind = ComponentKind::fixed_effect;
  return c;
}

inline ComponentSpec rw1_component(const std::string& name, const std::string& covariate,
                                   int n_bins, PrecisionPrior prior = {}) {
  ComponentSpec c;
  c.name = name;
  c.kind = ComponentKind::rw1_function;
  c.length = n_bins;
  c.covariate = covariate;
  c.sum_to_zero = true;
  c.prior = prior;
  return c;
}

inline ComponentSpec rw2_component(const std::string& name, PrecisionPrior prior = {}) {
  ComponentSpec c;
  c.name = name;
  c.kind = ComponentKind::rw2_spatial;
  c.length = 0;  // resolved to n_cells at assembly
  c.sum_to_zero = true;
  c.prior = prior;
  return c;
}

inline ComponentSpec iid_component(const std::string& name, PrecisionPrior prior = {}) {
  ComponentSpec c;
  c.name = name;
  c.kind = ComponentKind::iid;
  c.length = 0;  // resolved from the using block's unit at assembly
  c.prior = prior;
  return c;
}

// One additive term of a block's linear predictor. The coefficient applied to
// the referenced latent element is fixed_scale, optionally multiplied by a
// copy-scaling hyperparameter and/or a per-observation value (e.g. a mark).
struct PredictorTerm {
  std::string component;
  double fixed_scale = 1.0;
  std::string hyper_scale;     // name in ModelSpec::scalings; "" = none
  std::string obs_multiplier;  // mark or cell-field name; "" = none
};

struct ObsPrecision {
  bool is_hyper = true;
  PrecisionPrior prior;
  double fixed = 1.0;
};

struct BlockSpec {
  std::string name;
  Family family = Family::poisson_count;
  ObsUnit unit = ObsUnit::cells;
  std::string data;  // "counts" | cell-field name | mark name
  std::vector<PredictorTerm> terms;
  ObsPrecision obs_precision;  // gaussian family only
};

// Copy-scaling hyperparameter (a Gaussian-prior multiplier on a shared component).
struct ScalingSpec {
  std::string name;
  double prior_mean = 0.0;
  double prior_sd = 10.0;
};

struct ModelSpec {
  std::vector<ComponentSpec> components;
  std::vector<BlockSpec> blocks;
  std::vector<ScalingSpec> scalings;
};

// Data bundle the spec is resolved against.
struct ModelData {
  GridSpec grid;
  const CountGrid* counts = nullptr;
  std::map<std::string, std::vector<double>> cell_fields;  // per-cell values, NaN = missing
  std::map<std::string, BinnedCovariate> binned;           // rw1 argument grids
  const PointPattern* points = nullptr;                    // for point-unit blocks
};

// ---------------------------------------------------------------------------
// Assembled form consumed by the inference engine.
// ---------------------------------------------------------------------------

struct HyperDef {
  enum class Kind { component_log_precision, obs_log_precision, copy_scaling };
  Kind kind = Kind::component_log_precision;
  int target = -1;  // component index / block index / scaling index
  std::string name;
  PrecisionPrior gamma_prior;
  double normal_mean = 0.0, normal_sd = 10.0;
  double init = 4.0;

  double log_prior(double value) const {
    if (kind == Kind::copy_scaling) {
      double z = (value - normal_mean) / normal_sd;
      return -0.5 * z * z;
    }
    return gamma_prior.log_density_at_log_scale(value);
  }
};

struct ARowEntry {
  int col;
  double coeff;
  int hyper = -1;  // index into hypers (copy scaling); -1 = fixed coefficient
};

struct ObsRow {
  double y = 0.0;
  double offset = 0.0;
  int block = 0;
  std::vector<ARowEntry> entries;
};

struct AssembledModel {
  ModelSpec spec;                   // with resolved lengths
  GridSpec grid;
  std::vector<int> comp_offset;
  int n_latent = 0;
  std::vector<ObsRow> rows;         // non-missing observations, grouped by block
  std::vector<HyperDef> hypers;
  std::vector<int> comp_hyper;      // component -> hyper index or -1
  std::vector<int> block_obs_hyper; // block -> hyper index or -1
  std::vector<int> constrained_components;  // sum-to-zero components
  double jitter_rel = 1e-6;         // relative diagonal jitter for intrinsic blocks
  double log_prior_offset = 0.0;

  int n_hyper() const { return static_cast<int>(hypers.size()); }
  int component_index(const std::string& name) const {
    for (std::size_t k = 0; k < spec.components.size(); ++k)
      if (spec.components[k].name == name) return static_cast<int>(k);
    throw ModelError("unknown component '" + name + "'");
  }
  std::pair<int, int> component_range(int k) const {
    return {comp_offset[static_cast<std::size_t>(k)],
            comp_offset[static_cast<std::size_t>(k)] + spec.components[static_cast<std::size_t>(k)].length};
  }
  std::vector<double> initial_theta() const {
    std::vector<double> t;
    t.reserve(hypers.size());
    for (const auto& h : hypers)
      t.push_back(h.kind == HyperDef::Kind::copy_scaling ? h.normal_mean : h.init);
    return t;
  }
};

namespace detail {

inline int scaling_index(const ModelSpec& spec, const std::string& name) {
  for (std::size_t k = 0; k < spec.scalings.size(); ++k)
    if (spec.scalings[k].name == name) return static_cast<int>(k);
  throw ModelError("unknown copy scaling '" + name + "'");
}

// Per-observation value of a named column for a block.
inline double obs_multiplier_value(const ModelData& data, const BlockSpec& block,
                                   const std::string& name, int obs) {
  if (block.unit == ObsUnit::points) {
    auto it = data.points->marks.find(name);
    if (it != data.points->marks.end()) return it->second[static_cast<std::size_t>(obs)];
    auto cf = data.cell_fields.find(name);
    if (cf != data.cell_fields.end())
      return cf->second[static_cast<std::size_t>(data.grid.cell_of(data.points->points[static_cast<std::size_t>(obs)]))];
    throw ModelError("unknown observation multiplier '" + name + "'");
  }
  auto cf = data.cell_fields.find(name);
  if (cf == data.cell_fields.end()) throw ModelError("unknown observation multiplier '" + name + "'");
  return cf->second[static_cast<std::size_t>(obs)];
}

}  // namespace detail

// Resolves the spec against data: stacks component layout, registers
// hyperparameters, and emits one design-map row per non-missing observation.
// Observations whose covariate-driven element or multiplier is missing are
// dropped (they contribute no likelihood; their latent values are still
// estimated).
inline AssembledModel assemble(const ModelSpec& spec, const ModelData& data) {
  AssembledModel m;
  m.spec = spec;
  m.grid = data.grid;
  const int n_cells = data.grid.n_cells();
  const int n_points = data.points ? static_cast<int>(data.points->size()) : 0;

  // Resolve component lengths.
  for (auto& c : m.spec.components) {
    switch (c.kind) {
      case ComponentKind::intercept:
      case ComponentKind::fixed_effect:
        c.length = 1;
        break;
      case ComponentKind::rw1_function: {
        auto it = data.binned.find(c.covariate);
        if (it == data.binned.end())
          throw ModelError("component '" + c.name + "': no binned covariate '" + c.covariate + "'");
        c.length = it->second.n_bins;
        break;
      }
      case ComponentKind::rw2_spatial:
        c.length = n_cells;
        break;
      case ComponentKind::iid:
        if (c.length <= 0) {
          // default: sized to the unit of the first block referencing it
          int len = -1;
          for (const auto& b : spec.blocks)
            for (const auto& t : b.terms)
              if (t.component == c.name && len < 0)
                len = (b.unit == ObsUnit::cells) ? n_cells : n_points;
          if (len <= 0) throw ModelError("iid component '" + c.name + "' has no resolvable length");
          c.length = len;
        }
        break;
    }
    if (c.length <= 0) throw ModelError("component '" + c.name + "' has nonpositive length");
  }

  m.comp_offset.resize(m.spec.components.size());
  m.n_latent = 0;
  for (std::size_t k = 0; k < m.spec.components.size(); ++k) {
    m.comp_offset[k] = m.n_latent;
    m.n_latent += m.spec.components[k].length;
  }

  // Hyperparameters: component precisions, then Gaussian observation
  // precisions, then copy scalings.
  m.comp_hyper.assign(m.spec.components.size(), -1);
  for (std::size_t k = 0; k < m.spec.components.size(); ++k) {
    const auto& c = m.spec.components[k];
    if (!c.has_precision_hyper()) continue;
    HyperDef h;
    h.kind = HyperDef::Kind::component_log_precision;
    h.target = static_cast<int>(k);
    h.name = "log_prec_" + c.name;
    h.gamma_prior = c.prior;
    m.comp_hyper[k] = m.n_hyper();
    m.hypers.push_back(h);
  }
  m.block_obs_hyper.assign(m.spec.blocks.size(), -1);
  for (std::size_t b = 0; b < m.spec.blocks.size(); ++b) {
    const auto& blk = m.spec.blocks[b];
    if (blk.family != Family::gaussian || !blk.obs_precision.is_hyper) continue;
    HyperDef h;
    h.kind = HyperDef::Kind::obs_log_precision;
    h.target = static_cast<int>(b);
    h.name = "log_prec_obs_" + blk.name;
    h.gamma_prior = blk.obs_precision.prior;
    m.block_obs_hyper[b] = m.n_hyper();
    m.hypers.push_back(h);
  }
  std::vector<int> scaling_hyper(spec.scalings.size(), -1);
  for (std::size_t s = 0; s < spec.scalings.size(); ++s) {
    HyperDef h;
    h.kind = HyperDef::Kind::copy_scaling;
    h.target = static_cast<int>(s);
    h.name = spec.scalings[s].name;
    h.normal_mean = spec.scalings[s].prior_mean;
    h.normal_sd = spec.scalings[s].prior_sd;
    scaling_hyper[s] = m.n_hyper();
    m.hypers.push_back(h);
  }
  if (m.n_hyper() > 7)
    throw ModelError("model has " + std::to_string(m.n_hyper()) + " hyperparameters (limit 7)");

  for (std::size_t k = 0; k < m.spec.components.size(); ++k)
    if (m.spec.components[k].sum_to_zero) m.constrained_components.push_back(static_cast<int>(k));

  // Observation rows.
  const double log_cell_area = std::log(data.grid.cell_area());
  for (std::size_t b = 0; b < m.spec.blocks.size(); ++b) {
    const auto& blk = m.spec.blocks[b];
    int n_obs;
    const std::vector<double>* cell_y = nullptr;
    const std::vector<double>* mark_y = nullptr;
    if (blk.unit == ObsUnit::cells) {
      n_obs = n_cells;
      if (blk.data == "counts") {
        if (!data.counts) throw ModelError("block '" + blk.name + "': no count grid supplied");
      } else {
        auto it = data.cell_fields.find(blk.data);
        if (it == data.cell_fields.end())
          throw ModelError("block '" + blk.name + "': unknown cell field '" + blk.data + "'");
        cell_y = &it->second;
      }
    } else {
      if (!data.points) throw ModelError("block '" + blk.name + "': no point pattern supplied");
      n_obs = n_points;
      auto it = data.points->marks.find(blk.data);
      if (it == data.points->marks.end())
        throw ModelError("block '" + blk.name + "': unknown mark '" + blk.data + "'");
      mark_y = &it->second;
    }

    int rows_emitted = 0;
    for (int obs = 0; obs < n_obs; ++obs) {
      // observation value
      double y;
      if (blk.unit == ObsUnit::cells) {
        if (!data.grid.cell_in_mask(obs)) continue;
        y = (blk.data == "counts") ? static_cast<double>(data.counts->counts[static_cast<std::size_t>(obs)])
                                   : (*cell_y)[static_cast<std::size_t>(obs)];
      } else {
        y = (*mark_y)[static_cast<std::size_t>(obs)];
      }
      if (is_missing(y)) continue;
      if ((blk.family == Family::poisson_count || blk.family == Family::poisson_log) &&
          (y < 0.0 || y != std::floor(y)))
        throw ModelError("block '" + blk.name + "': Poisson observations must be nonnegative integers");

      int obs_cell = (blk.unit == ObsUnit::cells)
                         ? obs
                         : data.grid.cell_of(data.points->points[static_cast<std::size_t>(obs)]);

      ObsRow row;
      row.y = y;
      row.block = static_cast<int>(b);
      row.offset = (blk.family == Family::poisson_count) ? log_cell_area : 0.0;
      bool drop = false;
      for (const auto& term : blk.terms) {
        int ci = m.component_index(term.component);
        const auto& comp = m.spec.components[static_cast<std::size_t>(ci)];
        int elem;
        switch (comp.kind) {
          case ComponentKind::intercept:
          case ComponentKind::fixed_effect:
            elem = 0;
            break;
          case ComponentKind::rw1_function:
            elem = data.binned.at(comp.covariate).bin_index[static_cast<std::size_t>(obs_cell)];
            break;
          case ComponentKind::rw2_spatial:
            elem = obs_cell;
            break;
          case ComponentKind::iid:
            elem = (blk.unit == ObsUnit::cells) ? obs_cell : obs;
            if (elem >= comp.length)
              throw ModelError("iid component '" + comp.name + "' too short for block '" +
                               blk.name + "'");
            break;
        }
        if (elem < 0) {
          drop = true;  // covariate bin missing for this observation
          break;
        }
        ARowEntry e;
        e.col = m.comp_offset[static_cast<std::size_t>(ci)] + elem;
        e.coeff = term.fixed_scale;
        if (!term.obs_multiplier.empty()) {
          double v = detail::obs_multiplier_value(data, blk, term.obs_multiplier, obs);
          if (is_missing(v)) {
            drop = true;
            break;
          }
          e.coeff *= v;
        }
        if (!term.hyper_scale.empty())
          e.hyper = scaling_hyper[static_cast<std::size_t>(detail::scaling_index(spec, term.hyper_scale))];
        row.entries.push_back(e);
      }
      if (drop) continue;
      m.rows.push_back(std::move(row));
      ++rows_emitted;
    }
    if (rows_emitted == 0)
      throw ModelError("block '" + blk.name + "': empty likelihood (all observations missing)");
  }
  return m;
}

// Structure matrix for one resolved component (identity for intercept-like
// kinds; callers scale by the fixed precision).
inline SparseSymMatrix component_structure(const ComponentSpec& c, const GridSpec& grid) {
  switch (c.kind) {
    case ComponentKind::intercept:
    case ComponentKind::fixed_effect:
      return SparseSymMatrix::identity(1);
    case ComponentKind::rw1_function:
      return rw1_structure(c.length);
    case ComponentKind::rw2_spatial:
      return rw2_lattice_structure(grid.n_row, grid.n_col);
    case ComponentKind::iid:
      return iid_structure(c.length);
  }
  throw ModelError("unreachable component kind");
}

}  // namespace lgcp
