// gmrf.hpp -- structure matrices for random-walk and i.i.d. latent components,
// linear constraints, and precision assembly.
#pragma once

#include <cmath>
#include <vector>

#include "lgcp/sparse.hpp"

namespace lgcp {

// Gamma prior on a precision hyperparameter, on the precision scale.
struct PrecisionPrior {
  double shape = 1.0;
  double rate = 5e-5;

  PrecisionPrior() = default;
  PrecisionPrior(double s, double r) : shape(s), rate(r) {
    if (!(shape > 0.0) || !(rate > 0.0)) throw ParameterError("gamma prior: shape, rate > 0");
  }

  // log density of tau = exp(theta) including the Jacobian, up to a constant.
  double log_density_at_log_scale(double theta) const {
    return shape * theta - rate * std::exp(theta);
  }
};

// A'x = target over one component's elements (coefficients dense per element).
struct LinearConstraint {
  std::vector<double> coefficients;
  double target = 0.0;
};

inline LinearConstraint sum_to_zero_constraint(int n) {
  return LinearConstraint{std::vector<double>(static_cast<std::size_t>(n), 1.0), 0.0};
}

// First-order random walk: D'D for the first-difference operator, free
// boundaries. Rank n-1, null space = constants.
inline SparseSymMatrix rw1_structure(int n) {
  if (n < 2) throw DimensionError("rw1_structure: need n >= 2");
  SparseSymBuilder b(n);
  for (int i = 0; i + 1 < n; ++i) {
    b.add(i, i, 1.0);
    b.add(i + 1, i + 1, 1.0);
    b.add(i, i + 1, -1.0);
  }
  return b.build();
}

// Second-order random walk on an n_row x n_col lattice: the thin-plate
// penalty sum (d_hh)^2 + 2 (d_hv)^2 + (d_vv)^2 with free boundaries.
// Rank n_row*n_col - 3; null space = {1, row coordinate, col coordinate}.
inline SparseSymMatrix rw2_lattice_structure(int n_row, int n_col) {
  if (n_row < 3 || n_col < 3) throw DimensionError("rw2_lattice_structure: need >= 3 per axis");
  SparseSymBuilder b(n_row * n_col);
  auto id = [n_col](int i, int j) { return i * n_col + j; };
  auto add_row = [&](const int* cells, const double* coef, int m) {
    for (int a = 0; a < m; ++a)
      for (int c = a; c < m; ++c) b.add(cells[a], cells[c], coef[a] * coef[c]);
  };
  const double second[3] = {1.0, -2.0, 1.0};
  // sqrt(2) weight on the mixed difference gives the cross term weight 2.
  const double s2 = std::sqrt(2.0);
  const double mixed[4] = {s2, -s2, -s2, s2};
  for (int i = 0; i < n_row; ++i)
    for (int j = 0; j + 2 < n_col; ++j) {
      int cells[3] = {id(i, j), id(i, j + 1), id(i, j + 2)};
      add_row(cells, second, 3);
    }
  for (int j = 0; j < n_col; ++j)
    for (int i = 0; i + 2 < n_row; ++i) {
      int cells[3] = {id(i, j), id(i + 1, j), id(i + 2, j)};
      add_row(cells, second, 3);
    }
  for (int i = 0; i + 1 < n_row; ++i)
    for (int j = 0; j + 1 < n_col; ++j) {
      int cells[4] = {id(i, j), id(i, j + 1), id(i + 1, j), id(i + 1, j + 1)};
      add_row(cells, mixed, 4);
    }
  return b.build();
}

inline SparseSymMatrix iid_structure(int n) {
  if (n < 1) throw DimensionError("iid_structure: need n >= 1");
  return SparseSymMatrix::identity(n);
}

// Q = blockdiag(exp(log_precision_k) * R_k) + jitter * I.
inline SparseSymMatrix assemble_precision(
    const std::vector<std::pair<const SparseSymMatrix*, double>>& blocks, double jitter = 0.0) {
  require(!blocks.empty(), "assemble_precision: no blocks");
  require(jitter >= 0.0, "assemble_precision: jitter must be >= 0");
  int dim = 0;
  for (const auto& [structure, log_prec] : blocks) dim += structure->dim;
  SparseSymBuilder b(dim);
  int offset = 0;
  for (const auto& [structure, log_prec] : blocks) {
    double tau = std::exp(log_prec);
    for (const auto& e : structure->entries)
      b.add(offset + e.row, offset + e.col, tau * e.value);
    offset += structure->dim;
  }
  if (jitter > 0.0)
    for (int i = 0; i < dim; ++i) b.add(i, i, jitter);
  return b.build();
}

}  // namespace lgcp
