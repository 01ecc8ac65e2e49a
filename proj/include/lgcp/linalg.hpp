// linalg.hpp -- sparse Cholesky bridge (Eigen SimplicialLDLT) and the
// Takahashi partial inverse used for marginal variances.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <vector>

#include "lgcp/sparse.hpp"

namespace lgcp {

using SpMat = Eigen::SparseMatrix<double>;

inline SpMat to_eigen(const SparseSymMatrix& m) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(m.entries.size() * 2);
  for (const auto& e : m.entries) {
    t.emplace_back(e.row, e.col, e.value);
    if (e.row != e.col) t.emplace_back(e.col, e.row, e.value);
  }
  SpMat out(m.dim, m.dim);
  out.setFromTriplets(t.begin(), t.end());
  return out;
}

// Entries of inv(Q) on the sparsity pattern of Q's Cholesky factor (which
// contains Q's own pattern). Exact on that pattern; entries off the factor
// pattern are unavailable and reported via found=false.
class PartialInverse {
 public:
  PartialInverse() = default;

  // factor: L (unit lower, explicit diagonal allowed), d: LDL^T pivots,
  // perm: original index -> permuted position.
  PartialInverse(const SpMat& L, const Eigen::VectorXd& d, std::vector<int> perm)
      : perm_(std::move(perm)) {
    n_ = static_cast<int>(L.rows());
    colptr_.assign(static_cast<std::size_t>(n_) + 1, 0);
    for (int j = 0; j < n_; ++j)
      for (SpMat::InnerIterator it(L, j); it; ++it)
        if (it.row() > j) colptr_[static_cast<std::size_t>(j) + 1]++;
    for (int j = 0; j < n_; ++j) colptr_[static_cast<std::size_t>(j) + 1] += colptr_[static_cast<std::size_t>(j)];
    rowind_.resize(colptr_[static_cast<std::size_t>(n_)]);
    lval_.resize(rowind_.size());
    {
      std::vector<std::size_t> pos(colptr_.begin(), colptr_.end() - 1);
      for (int j = 0; j < n_; ++j)
        for (SpMat::InnerIterator it(L, j); it; ++it)
          if (it.row() > j) {
            rowind_[pos[static_cast<std::size_t>(j)]] = static_cast<int>(it.row());
            lval_[pos[static_cast<std::size_t>(j)]] = it.value();
            pos[static_cast<std::size_t>(j)]++;
          }
    }
    zval_.assign(rowind_.size(), 0.0);
    zdiag_.assign(static_cast<std::size_t>(n_), 0.0);
    for (int j = n_ - 1; j >= 0; --j) {
      for (std::size_t k = colptr_[static_cast<std::size_t>(j)]; k < colptr_[static_cast<std::size_t>(j) + 1]; ++k) {
        int i = rowind_[k];
        double s = 0.0;
        for (std::size_t m = colptr_[static_cast<std::size_t>(j)]; m < colptr_[static_cast<std::size_t>(j) + 1]; ++m) {
          int r = rowind_[m];
          s += lval_[m] * (r >= i ? lookup_permuted(r, i) : lookup_permuted(i, r));
        }
        zval_[k] = -s;
      }
      double s = 0.0;
      for (std::size_t m = colptr_[static_cast<std::size_t>(j)]; m < colptr_[static_cast<std::size_t>(j) + 1]; ++m)
        s += lval_[m] * zval_[m];
      zdiag_[static_cast<std::size_t>(j)] = 1.0 / d[j] - s;
    }
  }

  // Sigma_{ab} in original indices; found=false when (a,b) is off-pattern.
  double sigma(int a, int b, bool* found = nullptr) const {
    int i = perm_[static_cast<std::size_t>(a)];
    int j = perm_[static_cast<std::size_t>(b)];
    if (i < j) std::swap(i, j);
    if (found) *found = true;
    if (i == j) return zdiag_[static_cast<std::size_t>(i)];
    auto lo = rowind_.begin() + static_cast<std::ptrdiff_t>(colptr_[static_cast<std::size_t>(j)]);
    auto hi = rowind_.begin() + static_cast<std::ptrdiff_t>(colptr_[static_cast<std::size_t>(j) + 1]);
    auto it = std::lower_bound(lo, hi, i);
    if (it != hi && *it == i) return zval_[static_cast<std::size_t>(it - rowind_.begin())];
    if (found) *found = false;
    return 0.0;
  }

  double diagonal(int a) const { return zdiag_[static_cast<std::size_t>(perm_[static_cast<std::size_t>(a)])]; }

 private:
  double lookup_permuted(int i, int j) const {  // i >= j, permuted indices
    if (i == j) return zdiag_[static_cast<std::size_t>(i)];
    auto lo = rowind_.begin() + static_cast<std::ptrdiff_t>(colptr_[static_cast<std::size_t>(j)]);
    auto hi = rowind_.begin() + static_cast<std::ptrdiff_t>(colptr_[static_cast<std::size_t>(j) + 1]);
    auto it = std::lower_bound(lo, hi, i);
    return (it != hi && *it == i) ? zval_[static_cast<std::size_t>(it - rowind_.begin())] : 0.0;
  }

  int n_ = 0;
  std::vector<std::size_t> colptr_;
  std::vector<int> rowind_;
  std::vector<double> lval_, zval_, zdiag_;
  std::vector<int> perm_;
};

// Sparse SPD solver wrapper: factorization, solves, log-determinant, and the
// partial inverse, all from one SimplicialLDLT factor.
class SymSolver {
 public:
  void factorize(const SpMat& Q) {
    if (first_) {
      ldlt_.analyzePattern(Q);
      first_ = false;
    }
    ldlt_.factorize(Q);
    if (ldlt_.info() != Eigen::Success)
      throw ConvergenceError("sparse Cholesky factorization failed (matrix not positive definite)");
    const auto& d = ldlt_.vectorD();
    for (int i = 0; i < d.size(); ++i)
      if (!(d[i] > 0.0))
        throw ConvergenceError("sparse Cholesky factorization failed (nonpositive pivot)");
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& b) const { return ldlt_.solve(b); }
  Eigen::MatrixXd solve(const Eigen::MatrixXd& b) const { return ldlt_.solve(b); }

  double log_determinant() const {
    double s = 0.0;
    const auto& d = ldlt_.vectorD();
    for (int i = 0; i < d.size(); ++i) s += std::log(d[i]);
    return s;
  }

  PartialInverse partial_inverse() const {
    SpMat L = ldlt_.matrixL();
    const auto& idx = ldlt_.permutationP().indices();
    std::vector<int> perm(idx.data(), idx.data() + idx.size());
    return PartialInverse(L, ldlt_.vectorD(), std::move(perm));
  }

 private:
  Eigen::SimplicialLDLT<SpMat> ldlt_;
  bool first_ = true;
};

}  // namespace lgcp
