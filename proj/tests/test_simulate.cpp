#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include "lgcp/simulate.hpp"

using namespace lgcp;

namespace {

bool identical(const PointPattern& a, const PointPattern& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a.points[k].x != b.points[k].x || a.points[k].y != b.points[k].y) return false;
  return true;
}

}  // namespace

TEST_CASE("generators are deterministic given (params, seed)") {
  Window w = Window::unit_square();
  REQUIRE(identical(sim_poisson(50.0, w, 42), sim_poisson(50.0, w, 42)));
  REQUIRE_FALSE(identical(sim_poisson(50.0, w, 42), sim_poisson(50.0, w, 43)));
  ThomasParams tp(10.0, 0.05, 20.0);
  REQUIRE(identical(sim_thomas(tp, w, 7), sim_thomas(tp, w, 7)));
  StraussParams sp(100.0, 0.5, 0.05);
  REQUIRE(identical(sim_strauss(sp, w, 9), sim_strauss(sp, w, 9)));
}

TEST_CASE("sim_poisson: zero intensity gives an empty pattern") {
  REQUIRE(sim_poisson(0.0, Window::unit_square(), 1).empty());
}

TEST_CASE("sim_poisson: negative intensity is a parameter error") {
  REQUIRE_THROWS_AS(sim_poisson(TrendFn::linear(0.0, -3.0), Window::unit_square(), 1),
                    ParameterError);
}

TEST_CASE("sim_poisson: mean count matches lambda |W| within 3 standard errors") {
  const int n_seeds = 500;
  double total = 0.0;
  for (int s = 0; s < n_seeds; ++s)
    total += static_cast<double>(sim_poisson(100.0, Window::unit_square(), 1000 + s).size());
  double mean = total / n_seeds;
  double se = std::sqrt(100.0 / n_seeds);
  REQUIRE(std::abs(mean - 100.0) < 3.0 * se);
}

TEST_CASE("sim_poisson: trend lambda = x/4 has expected count 1/8") {
  const int n_seeds = 4000;
  double total = 0.0;
  for (int s = 0; s < n_seeds; ++s)
    total += static_cast<double>(sim_poisson(TrendFn::linear(0.25, 0.0), Window::unit_square(), 50000 + s).size());
  double mean = total / n_seeds;
  double se = std::sqrt(0.125 / n_seeds);
  REQUIRE(std::abs(mean - 0.125) < 4.0 * se);
}

TEST_CASE("sim_poisson: pooled 10x10 cell counts pass a chi-square uniformity check") {
  const int n_seeds = 500;
  GridSpec grid(10, 10, Window::unit_square());
  std::vector<double> pooled(100, 0.0);
  double total = 0.0;
  for (int s = 0; s < n_seeds; ++s) {
    auto pat = sim_poisson(200.0, grid.window, 77000 + s);
    auto cg = grid_counts(pat, grid);
    for (int c = 0; c < 100; ++c) pooled[static_cast<std::size_t>(c)] += static_cast<double>(cg.counts[static_cast<std::size_t>(c)]);
    total += static_cast<double>(pat.size());
  }
  double expected = total / 100.0;
  double chi2 = 0.0;
  for (double o : pooled) chi2 += (o - expected) * (o - expected) / expected;
  // chi-square(99) 99.9% quantile
  REQUIRE(chi2 < 148.23);
}

TEST_CASE("sim_thomas: tiny mu gives an empty pattern with high probability") {
  int empties = 0;
  for (int s = 0; s < 50; ++s)
    if (sim_thomas(ThomasParams(10.0, 0.05, 1e-4), Window::unit_square(), 300 + s).empty()) ++empties;
  REQUIRE(empties >= 48);
}

TEST_CASE("sim_thomas: homogeneous mean retained count is kappa mu |W| within 5 percent") {
  const int n_seeds = 200;
  double total = 0.0;
  for (int s = 0; s < n_seeds; ++s)
    total += static_cast<double>(sim_thomas(ThomasParams(10.0, 0.05, 50.0), Window::unit_square(), 9000 + s).size());
  double mean = total / n_seeds;
  // 4*sigma parent dilation keeps truncation bias far below the tolerance;
  // points whose cluster center lies outside the window compensate edge loss
  REQUIRE(std::abs(mean - 500.0) / 500.0 < 0.05);
}

TEST_CASE("sim_thomas: inhomogeneous parents 50x gives about 125 offspring") {
  const int n_seeds = 400;
  ThomasParams tp(TrendFn::linear(50.0, 0.0), 0.01, 5.0);
  double total = 0.0;
  for (int s = 0; s < n_seeds; ++s)
    total += static_cast<double>(sim_thomas(tp, Window::unit_square(), 12000 + s).size());
  double mean = total / n_seeds;
  // expected parents 25, offspring 125; allow Monte Carlo + edge slack
  REQUIRE(std::abs(mean - 125.0) / 125.0 < 0.06);
}

TEST_CASE("sim_strauss: gamma=1 reduces to a Poisson process") {
  const int n_seeds = 100;
  const double beta = 300.0;
  std::vector<double> counts;
  for (int s = 0; s < n_seeds; ++s)
    counts.push_back(static_cast<double>(
        sim_strauss(StraussParams(beta, 1.0, 0.05), Window::unit_square(), 400 + s).size()));
  double mean = 0.0, var = 0.0;
  for (double c : counts) mean += c;
  mean /= n_seeds;
  for (double c : counts) var += (c - mean) * (c - mean);
  var /= (n_seeds - 1);
  REQUIRE(std::abs(mean - beta) < 4.0 * std::sqrt(beta / n_seeds));
  double dispersion = var / mean;
  REQUIRE(dispersion > 0.6);
  REQUIRE(dispersion < 1.4);
}

TEST_CASE("sim_strauss: gamma=0 is hard core (no close pairs ever)") {
  for (int s = 0; s < 10; ++s) {
    auto pat = sim_strauss(StraussParams(200.0, 0.0, 0.06), Window::unit_square(), 500 + s);
    REQUIRE(close_pair_count(pat, 0.06) == 0);
    REQUIRE(pat.size() > 0);
  }
}

TEST_CASE("sim_strauss: gamma > 1 is a parameter error") {
  REQUIRE_THROWS_AS(StraussParams(100.0, 1.2, 0.05), ParameterError);
}

TEST_CASE("sim_strauss: medium repulsion inhibits close pairs below Poisson") {
  const int n_seeds = 100;
  double strauss_pairs = 0.0, poisson_pairs = 0.0;
  for (int s = 0; s < n_seeds; ++s) {
    strauss_pairs += static_cast<double>(close_pair_count(
        sim_strauss(StraussParams(700.0, 0.5, 0.05), Window::unit_square(), 600 + s), 0.05));
    poisson_pairs += static_cast<double>(
        close_pair_count(sim_poisson(700.0, Window::unit_square(), 6600 + s), 0.05));
  }
  REQUIRE(strauss_pairs / n_seeds < poisson_pairs / n_seeds);
}

TEST_CASE("sim_strauss: detailed balance on an enumerable state space") {
  // With r wider than the window diagonal every pair interacts, so the count
  // marginal is exactly pi(n) proportional to (beta|W|)^n gamma^{n(n-1)/2} / n!.
  const double beta = 0.6, gamma = 0.2;
  StraussParams sp(beta, gamma, 2.0);
  const int n_samples = 4000;
  std::vector<double> freq(8, 0.0);
  for (int s = 0; s < n_samples; ++s) {
    auto pat = sim_strauss(sp, Window::unit_square(), 800000 + s, 200);
    if (pat.size() < freq.size()) freq[pat.size()] += 1.0 / n_samples;
  }
  std::vector<double> target(8, 0.0);
  double z = 0.0;
  for (int n = 0; n < 8; ++n) {
    double logp = n * std::log(beta) + 0.5 * n * (n - 1) * std::log(gamma) - std::lgamma(n + 1.0);
    target[static_cast<std::size_t>(n)] = std::exp(logp);
    z += target[static_cast<std::size_t>(n)];
  }
  for (auto& t : target) t /= z;
  for (int n = 0; n < 4; ++n)
    REQUIRE(std::abs(freq[static_cast<std::size_t>(n)] - target[static_cast<std::size_t>(n)]) < 0.02);
}

TEST_CASE("superimpose: identity, size additivity, commutativity up to order") {
  auto a = sim_poisson(40.0, Window::unit_square(), 21);
  auto b = sim_poisson(25.0, Window::unit_square(), 22);
  auto ab = superimpose(a, b);
  REQUIRE(ab.size() == a.size() + b.size());
  REQUIRE(identical(superimpose(a, PointPattern(Window::unit_square())), a));

  auto ba = superimpose(b, a);
  auto key = [](const Point& p) { return std::pair<double, double>(p.x, p.y); };
  std::vector<std::pair<double, double>> k1, k2;
  for (const auto& p : ab.points) k1.push_back(key(p));
  for (const auto& p : ba.points) k2.push_back(key(p));
  std::sort(k1.begin(), k1.end());
  std::sort(k2.begin(), k2.end());
  REQUIRE(k1 == k2);

  PointPattern other(Window(0, 2, 0, 1));
  REQUIRE_THROWS_AS(superimpose(a, other), DimensionError);
}
