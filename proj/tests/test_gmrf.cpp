#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cstdio>
#include <fstream>

#include "lgcp/gmrf.hpp"
#include "lgcp/linalg.hpp"
#include "lgcp/rng.hpp"

using namespace lgcp;

namespace {

Eigen::MatrixXd dense_of(const SparseSymMatrix& m) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(m.dim, m.dim);
  for (const auto& e : m.entries) {
    d(e.row, e.col) = e.value;
    d(e.col, e.row) = e.value;
  }
  return d;
}

int dense_rank(const Eigen::MatrixXd& m) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
  lu.setThreshold(1e-9);
  return static_cast<int>(lu.rank());
}

}  // namespace

TEST_CASE("rw1_structure: smallest case and the finite-difference oracle") {
  auto r2 = rw1_structure(2);
  REQUIRE(dense_of(r2) == Eigen::MatrixXd{{1, -1}, {-1, 1}});

  auto r3 = rw1_structure(3);
  Eigen::MatrixXd expect{{1, -1, 0}, {-1, 2, -1}, {0, -1, 1}};
  REQUIRE(dense_of(r3) == expect);

  // D'D oracle for general n
  for (int n : {4, 9, 17}) {
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(n - 1, n);
    for (int i = 0; i + 1 < n; ++i) {
      D(i, i) = -1;
      D(i, i + 1) = 1;
    }
    REQUIRE((dense_of(rw1_structure(n)) - D.transpose() * D).norm() < 1e-14);
  }
  REQUIRE_THROWS_AS(rw1_structure(1), DimensionError);
}

TEST_CASE("rw1_structure: R * 1 = 0 exactly") {
  for (int n : {2, 5, 40}) {
    auto r = rw1_structure(n);
    std::vector<double> ones(static_cast<std::size_t>(n), 1.0), out(static_cast<std::size_t>(n), 0.0);
    r.add_multiply(ones, 1.0, out);
    for (double v : out) REQUIRE(v == 0.0);
  }
}

TEST_CASE("rw2_lattice_structure: null space contains constants and both linear trends") {
  auto r = rw2_lattice_structure(3, 3);
  std::vector<double> constant(9, 1.0), row_trend(9), col_trend(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      row_trend[static_cast<std::size_t>(i * 3 + j)] = i;
      col_trend[static_cast<std::size_t>(i * 3 + j)] = j;
    }
  REQUIRE(r.quadratic_form(constant) == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(r.quadratic_form(row_trend) == Catch::Approx(0.0).margin(1e-14));
  REQUIRE(r.quadratic_form(col_trend) == Catch::Approx(0.0).margin(1e-14));
  REQUIRE_THROWS_AS(rw2_lattice_structure(2, 5), DimensionError);
}

TEST_CASE("rw2_lattice_structure: equals the dense difference-operator product on 4x4") {
  const int nr = 4, nc = 4, n = nr * nc;
  auto id = [nc](int i, int j) { return i * nc + j; };
  std::vector<Eigen::RowVectorXd> rows;
  for (int i = 0; i < nr; ++i)
    for (int j = 0; j + 2 < nc; ++j) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
      r(id(i, j)) = 1;
      r(id(i, j + 1)) = -2;
      r(id(i, j + 2)) = 1;
      rows.push_back(r);
    }
  for (int j = 0; j < nc; ++j)
    for (int i = 0; i + 2 < nr; ++i) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
      r(id(i, j)) = 1;
      r(id(i + 1, j)) = -2;
      r(id(i + 2, j)) = 1;
      rows.push_back(r);
    }
  const double s2 = std::sqrt(2.0);
  for (int i = 0; i + 1 < nr; ++i)
    for (int j = 0; j + 1 < nc; ++j) {
      Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(n);
      r(id(i, j)) = s2;
      r(id(i, j + 1)) = -s2;
      r(id(i + 1, j)) = -s2;
      r(id(i + 1, j + 1)) = s2;
      rows.push_back(r);
    }
  Eigen::MatrixXd D(rows.size(), n);
  for (std::size_t k = 0; k < rows.size(); ++k) D.row(static_cast<Eigen::Index>(k)) = rows[k];
  REQUIRE((dense_of(rw2_lattice_structure(nr, nc)) - D.transpose() * D).norm() < 1e-12);
}

TEST_CASE("ranks: rw1 is n-1, rw2 lattice is n-3") {
  for (int n : {2, 7, 25, 100}) REQUIRE(dense_rank(dense_of(rw1_structure(n))) == n - 1);
  for (auto [r, c] : {std::pair{3, 3}, {4, 5}, {10, 10}})
    REQUIRE(dense_rank(dense_of(rw2_lattice_structure(r, c))) == r * c - 3);
}

TEST_CASE("iid_structure: identity behavior") {
  REQUIRE(dense_of(iid_structure(1)) == Eigen::MatrixXd::Identity(1, 1));
  REQUIRE(dense_of(iid_structure(3)) == Eigen::MatrixXd::Identity(3, 3));
  Rng rng(5);
  std::vector<double> v(6);
  double ss = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    ss += x * x;
  }
  REQUIRE(iid_structure(6).quadratic_form(v) == Catch::Approx(ss));
}

TEST_CASE("semidefiniteness probe: v'Sv >= 0 for 1000 random v") {
  Rng rng(42);
  auto probe = [&](const SparseSymMatrix& s, int reps) {
    std::vector<double> v(static_cast<std::size_t>(s.dim));
    for (int k = 0; k < reps; ++k) {
      for (auto& x : v) x = rng.normal();
      REQUIRE(s.quadratic_form(v) >= -1e-9);
    }
  };
  probe(rw1_structure(13), 400);
  probe(rw2_lattice_structure(5, 7), 400);
  probe(iid_structure(9), 200);
}

TEST_CASE("assemble_precision: scaling and identity behavior") {
  auto r1 = rw1_structure(3);
  auto one = assemble_precision({{&r1, 0.0}}, 0.0);
  REQUIRE((dense_of(one) - dense_of(r1)).norm() == 0.0);

  auto doubled = assemble_precision({{&r1, std::log(2.0)}}, 0.0);
  REQUIRE((dense_of(doubled) - 2.0 * dense_of(r1)).norm() < 1e-14);
}

TEST_CASE("assemble_precision: jitter makes the RW2 block strictly positive definite") {
  auto r = rw2_lattice_structure(4, 4);
  auto q = assemble_precision({{&r, 0.0}}, 1e-6);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense_of(q));
  REQUIRE(es.eigenvalues().minCoeff() >= 1e-6 - 1e-12);

  // and the sparse Cholesky accepts it
  SymSolver solver;
  REQUIRE_NOTHROW(solver.factorize(to_eigen(q)));
}

TEST_CASE("block-diagonal assembly stacks offsets correctly") {
  auto r1 = rw1_structure(3);
  auto i2 = iid_structure(2);
  auto q = assemble_precision({{&r1, 0.0}, {&i2, std::log(3.0)}}, 0.0);
  REQUIRE(q.dim == 5);
  auto d = dense_of(q);
  REQUIRE(d.block(0, 0, 3, 3) == dense_of(r1));
  REQUIRE((d.block(3, 3, 2, 2) - 3.0 * Eigen::MatrixXd::Identity(2, 2)).norm() < 1e-14);
  REQUIRE(d.block(0, 3, 3, 2).norm() == 0.0);
}

TEST_CASE("partial inverse matches the dense inverse on the factor pattern") {
  Rng rng(31);
  for (int trial = 0; trial < 4; ++trial) {
    int n = 30 + 20 * trial;
    SparseSymBuilder b(n);
    for (int i = 0; i < n; ++i) b.add(i, i, 6.0 + rng.uniform());
    for (int i = 0; i + 1 < n; ++i) b.add(i, i + 1, rng.uniform(-1.0, 1.0));
    for (int k = 0; k < n / 2; ++k) {
      int i = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      int j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(n)));
      if (i != j) b.add(i, j, 0.3 * rng.uniform(-1.0, 1.0));
    }
    auto q = b.build();
    SymSolver solver;
    solver.factorize(to_eigen(q));
    auto pi = solver.partial_inverse();
    Eigen::MatrixXd sigma = dense_of(q).inverse();
    for (int i = 0; i < n; ++i)
      REQUIRE(pi.diagonal(i) == Catch::Approx(sigma(i, i)).margin(1e-10));
    for (const auto& e : q.entries) {
      bool found;
      double s = pi.sigma(e.row, e.col, &found);
      REQUIRE(found);
      REQUIRE(s == Catch::Approx(sigma(e.row, e.col)).margin(1e-10));
    }
  }
}

TEST_CASE("triplet CSV export round-trips through text") {
  auto r = rw1_structure(4);
  r.write_triplet_csv("structure.csv");
  std::ifstream in("structure.csv");
  std::string header;
  std::getline(in, header);
  REQUIRE(header == "row,col,value");
  int lines = 0;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  REQUIRE(lines == static_cast<int>(r.entries.size()));
  std::remove("structure.csv");
}
