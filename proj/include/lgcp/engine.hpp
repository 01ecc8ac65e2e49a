// engine.hpp -- approximate Bayesian inference for latent Gaussian models:
// Gaussian approximation of the latent full conditional, Laplace
// hyperparameter posterior, numerical integration over hyperparameters,
// latent marginals, and DIC.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <atomic>
#include <cmath>
#include <map>
#include <memory>
#include <vector>

#include "lgcp/linalg.hpp"
#include "lgcp/model.hpp"

namespace lgcp {

struct EngineOptions {
  int n_threads = 1;
  int max_newton_iter = 50;
  double newton_tol = 1e-6;        // max-norm of the (projected) gradient
  double predictor_clamp = 30.0;   // Poisson linear predictor clamp
  double grid_step = 0.75;         // standardized exploration step
  double grid_drop = 4.0;          // drop grid points this far below the mode
  int max_grid_points = 512;
  double hessian_fd_step = 1e-4;
  double gradient_fd_step = 1e-3;
  int max_mode_iter = 100;
  double mode_tol = 1e-3;          // max-norm of the hyper-posterior FD gradient
  int dense_component_max = 64;    // dense within-component covariance up to this length
};

// Gaussian approximation at one hyperparameter point.
struct GaussianApprox {
  Eigen::VectorXd mode;
  std::vector<double> marginal_var;  // constraint-corrected
  double objective = 0.0;            // log full conditional up to a constant
  double loglik = 0.0;
  double quad_form = 0.0;            // mode' Q mode
  double logdet_precision = 0.0;
  double logdet_constraint = 0.0;
  int iterations = 0;
  long clamp_count = 0;
  std::vector<double> objective_trace;
};

struct HyperPoint {
  std::vector<double> theta;
  double log_posterior = 0.0;
  double weight = 0.0;
};

struct ExploreResult {
  std::vector<HyperPoint> points;
  std::vector<double> mode_theta;
  Eigen::MatrixXd neg_hessian;  // of the log posterior at the mode (standardizing metric)
  Eigen::MatrixXd std_basis;    // theta = mode + std_basis * z
  Eigen::VectorXd mode_latent;  // latent mode at the hyper mode (warm start)
};

struct HyperSummary {
  std::string name;
  double mean = 0.0, sd = 0.0, lo95 = 0.0, hi95 = 0.0;
};

struct ComponentSummary {
  std::string name;
  ComponentKind kind = ComponentKind::intercept;
  int offset = 0, length = 0;
  std::vector<double> mean, sd;
  std::vector<double> cov;  // dense length x length (small components only)
  bool has_cov = false;
};

struct FitResult {
  std::vector<HyperPoint> hyper_points;
  std::vector<HyperSummary> hyper_summaries;
  std::vector<double> mode_theta;
  std::vector<double> latent_mean, latent_sd;
  std::vector<ComponentSummary> components;
  std::vector<double> predictor_mean;  // per observation row (no offset)
  double dic = 0.0, p_d = 0.0;
  double deviance_at_mean = 0.0, mean_deviance = 0.0;
  long clamp_count = 0;
  long pattern_fallbacks = 0;

  const ComponentSummary& component(const std::string& name) const {
    for (const auto& c : components)
      if (c.name == name) return c;
    throw ModelError("no component summary '" + name + "'");
  }
};

// Mixture of Gaussians moment arithmetic shared by marginal extraction.
inline void mix_mean_var(const std::vector<double>& means, const std::vector<double>& vars,
                         const std::vector<double>& weights, double& mean_out, double& var_out) {
  double m = 0.0, s = 0.0;
  for (std::size_t k = 0; k < means.size(); ++k) {
    m += weights[k] * means[k];
    s += weights[k] * (vars[k] + means[k] * means[k]);
  }
  mean_out = m;
  var_out = std::max(0.0, s - m * m);
}

class LgmEngine {
 public:
  LgmEngine(AssembledModel model, EngineOptions opts = {})
      : model_(std::move(model)), opts_(opts) {
    const auto& comps = model_.spec.components;
    structures_.reserve(comps.size());
    for (const auto& c : comps) {
      SparseSymMatrix r = component_structure(c, model_.grid);
      bool intrinsic =
          c.kind == ComponentKind::rw1_function || c.kind == ComponentKind::rw2_spatial;
      if (intrinsic) {
        SparseSymBuilder b(r.dim);
        for (const auto& e : r.entries) b.add(e.row, e.col, e.value);
        for (int i = 0; i < r.dim; ++i) b.add(i, i, model_.jitter_rel);
        r = b.build();
      }
      structures_.push_back(std::move(r));
    }
    for (const auto& row : model_.rows) {
      double y = row.y;
      Family f = model_.spec.blocks[static_cast<std::size_t>(row.block)].family;
      lgamma_y_.push_back((f == Family::gaussian) ? 0.0 : std::lgamma(y + 1.0));
      for (const auto& e : row.entries)
        if (e.hyper >= 0) has_copy_ = true;
    }
    n_con_ = static_cast<int>(model_.constrained_components.size());
  }

  const AssembledModel& model() const { return model_; }
  const EngineOptions& options() const { return opts_; }

  GaussianApprox gaussian_approx(const std::vector<double>& theta,
                                 const Eigen::VectorXd* init = nullptr) const {
    State st = newton(theta, init);
    GaussianApprox out;
    out.mode = st.zeta;
    out.objective = st.objective;
    out.loglik = st.loglik;
    out.quad_form = st.zQz;
    out.logdet_precision = st.logdet_P;
    out.logdet_constraint = st.logdet_SA;
    out.iterations = st.iterations;
    out.clamp_count = st.clamp_count;
    out.objective_trace = st.trace;
    out.marginal_var = marginal_variances(st);
    return out;
  }

  double log_posterior_theta(const std::vector<double>& theta,
                             const Eigen::VectorXd* init = nullptr) const {
    State st = newton(theta, init);
    return log_posterior_from(st, theta);
  }

  ExploreResult explore_theta() const {
    ExploreResult ex;
    const int J = model_.n_hyper();
    if (J == 0) {
      State st = newton({}, nullptr);
      ex.points.push_back({{}, log_posterior_from(st, {}), 1.0});
      ex.mode_latent = st.zeta;
      return ex;
    }

    // ---- mode search: BFGS ascent with finite-difference gradients ----
    std::vector<double> theta = model_.initial_theta();
    Eigen::VectorXd warm;
    double f0;
    {
      State st = newton(theta, nullptr);
      f0 = log_posterior_from(st, theta);
      warm = st.zeta;
    }
    // curvature-scaled initial inverse Hessian
    Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(J, J);
    {
      const double h = 0.1;
      std::vector<double> cur(static_cast<std::size_t>(2 * J));
      batch_eval(theta, make_axial_offsets(J, h), warm, cur);
      for (int j = 0; j < J; ++j) {
        double c = -(cur[static_cast<std::size_t>(2 * j)] + cur[static_cast<std::size_t>(2 * j + 1)] - 2.0 * f0) / (h * h);
        Hinv(j, j) = 1.0 / std::clamp(c, 0.05, 1e6);
      }
    }

    Eigen::VectorXd g = fd_gradient(theta, f0, warm);
    int iter = 0;
    for (; iter < opts_.max_mode_iter; ++iter) {
      if (g.lpNorm<Eigen::Infinity>() < opts_.mode_tol) break;
      Eigen::VectorXd dir = Hinv * g;
      if (!dir.allFinite() || dir.dot(g) <= 0.0) dir = g;  // reset to ascent
      double t = 1.0;
      double f_new = -std::numeric_limits<double>::infinity();
      std::vector<double> theta_new(theta);
      Eigen::VectorXd warm_new;
      bool improved = false;
      for (int ls = 0; ls < 40; ++ls, t *= 0.5) {
        for (int j = 0; j < J; ++j)
          theta_new[static_cast<std::size_t>(j)] = theta[static_cast<std::size_t>(j)] + t * dir[j];
        try {
          State st = newton(theta_new, &warm);
          f_new = log_posterior_from(st, theta_new);
          if (std::isfinite(f_new) && f_new > f0 + 1e-4 * t * dir.dot(g)) {
            warm_new = st.zeta;
            improved = true;
            break;
          }
        } catch (const ConvergenceError&) {
          // step too aggressive; halve
        }
      }
      if (!improved) break;  // no ascent possible at this resolution
      Eigen::VectorXd g_new = fd_gradient(theta_new, f_new, warm_new);
      // BFGS inverse update
      Eigen::VectorXd s(J), yv(J);
      for (int j = 0; j < J; ++j) s[j] = theta_new[static_cast<std::size_t>(j)] - theta[static_cast<std::size_t>(j)];
      yv = g - g_new;  // gradient of -f changes sign; use ascent convention
      double sy = s.dot(yv);
      if (sy > 1e-12) {
        Eigen::MatrixXd I = Eigen::MatrixXd::Identity(J, J);
        Eigen::MatrixXd U = I - (s * yv.transpose()) / sy;
        Hinv = U * Hinv * U.transpose() + (s * s.transpose()) / sy;
      }
      theta = theta_new;
      f0 = f_new;
      g = g_new;
      warm = warm_new;
    }
    if (g.lpNorm<Eigen::Infinity>() >= 10.0 * std::max(opts_.mode_tol, 1e-3) && iter >= opts_.max_mode_iter)
      throw ConvergenceError("hyperparameter mode search did not converge (|grad| = " +
                             std::to_string(g.lpNorm<Eigen::Infinity>()) + ")");

    ex.mode_theta = theta;
    ex.mode_latent = warm;

    // ---- negative Hessian at the mode (finite differences) ----
    ex.neg_hessian = fd_neg_hessian(theta, f0, warm, opts_.hessian_fd_step);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ex.neg_hessian);
    if (es.eigenvalues().minCoeff() <= 1e-8 * std::max(1.0, es.eigenvalues().maxCoeff())) {
      ex.neg_hessian = fd_neg_hessian(theta, f0, warm, 0.05);
      es.compute(ex.neg_hessian);
      if (es.eigenvalues().minCoeff() <= 0.0) {
        ex.neg_hessian = Eigen::MatrixXd::Identity(J, J);
        es.compute(ex.neg_hessian);
      }
    }
    // eigenvalue floor caps the standardized step at a few log-units along
    // weakly identified directions
    ex.std_basis = es.eigenvectors() *
                   es.eigenvalues().cwiseMax(0.035).cwiseSqrt().cwiseInverse().asDiagonal();

    // ---- integration points ----
    auto theta_at = [&](const std::vector<int>& z) {
      std::vector<double> th(theta);
      for (int j = 0; j < J; ++j) {
        double shift = 0.0;
        for (int a = 0; a < J; ++a) shift += ex.std_basis(j, a) * (opts_.grid_step * z[static_cast<std::size_t>(a)]);
        th[static_cast<std::size_t>(j)] += shift;
      }
      return th;
    };

    std::vector<std::vector<int>> zs;
    std::vector<double> fs;
    if (J <= 2) {
      // dense grid by breadth-first expansion from the mode
      std::map<std::vector<int>, int> seen;
      std::vector<std::vector<int>> frontier{std::vector<int>(static_cast<std::size_t>(J), 0)};
      seen[frontier[0]] = 0;
      zs.push_back(frontier[0]);
      fs.push_back(f0);
      while (!frontier.empty() && static_cast<int>(zs.size()) < opts_.max_grid_points) {
        std::vector<std::vector<int>> cand;
        for (const auto& z : frontier)
          for (int a = 0; a < J; ++a)
            for (int dir : {-1, +1}) {
              auto nz = z;
              nz[static_cast<std::size_t>(a)] += dir;
              if (!seen.count(nz)) {
                seen[nz] = 1;
                cand.push_back(nz);
              }
            }
        if (cand.empty()) break;
        std::vector<double> fc(cand.size());
        parallel_for(cand.size(), opts_.n_threads, [&](std::size_t i) {
          fc[i] = eval_logpost_safe(theta_at(cand[i]), warm);
        });
        frontier.clear();
        for (std::size_t i = 0; i < cand.size(); ++i) {
          if (fc[i] >= f0 - opts_.grid_drop &&
              static_cast<int>(zs.size()) < opts_.max_grid_points) {
            zs.push_back(cand[i]);
            fs.push_back(fc[i]);
            frontier.push_back(cand[i]);
          }
        }
      }
    } else {
      zs.push_back(std::vector<int>(static_cast<std::size_t>(J), 0));
      fs.push_back(f0);
      std::vector<std::vector<int>> axial;
      for (int a = 0; a < J; ++a)
        for (int dir : {-1, +1}) {
          std::vector<int> z(static_cast<std::size_t>(J), 0);
          z[static_cast<std::size_t>(a)] = dir;
          axial.push_back(z);
        }
      std::vector<double> fa(axial.size());
      parallel_for(axial.size(), opts_.n_threads, [&](std::size_t i) {
        fa[i] = eval_logpost_safe(theta_at(axial[i]), warm);
      });
      for (std::size_t i = 0; i < axial.size(); ++i) {
        if (!std::isfinite(fa[i])) continue;
        zs.push_back(axial[i]);
        fs.push_back(fa[i]);
      }
    }

    double fmax = *std::max_element(fs.begin(), fs.end());
    double wsum = 0.0;
    for (std::size_t i = 0; i < zs.size(); ++i) {
      HyperPoint p;
      p.theta = theta_at(zs[i]);
      p.log_posterior = fs[i];
      p.weight = std::isfinite(fs[i]) ? std::exp(fs[i] - fmax) : 0.0;
      wsum += p.weight;
      ex.points.push_back(std::move(p));
    }
    for (auto& p : ex.points) p.weight /= wsum;
    return ex;
  }

  FitResult fit() const {
    ExploreResult ex = explore_theta();
    // negligible-weight points carry no information; drop before the heavy pass
    std::erase_if(ex.points, [](const HyperPoint& p) { return p.weight < 1e-14; });
    {
      double w = 0.0;
      for (const auto& p : ex.points) w += p.weight;
      for (auto& p : ex.points) p.weight /= w;
    }
    const std::size_t K = ex.points.size();
    std::vector<FullEval> evals(K);
    const Eigen::VectorXd* warm = (model_.n_hyper() == 0) ? nullptr : &ex.mode_latent;
    parallel_for(K, opts_.n_threads, [&](std::size_t k) {
      evals[k] = full_eval(ex.points[k].theta, warm);
    });

    FitResult fit;
    fit.hyper_points = ex.points;
    fit.mode_theta = ex.mode_theta;
    const int n = model_.n_latent;
    const std::size_t n_rows = model_.rows.size();
    std::vector<double> w(K);
    for (std::size_t k = 0; k < K; ++k) w[k] = ex.points[k].weight;

    fit.latent_mean.assign(static_cast<std::size_t>(n), 0.0);
    fit.latent_sd.assign(static_cast<std::size_t>(n), 0.0);
    std::vector<double> mk(K), vk(K);
    for (int i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < K; ++k) {
        mk[k] = evals[k].mode[i];
        vk[k] = evals[k].marg_var[static_cast<std::size_t>(i)];
      }
      double m, v;
      mix_mean_var(mk, vk, w, m, v);
      fit.latent_mean[static_cast<std::size_t>(i)] = m;
      fit.latent_sd[static_cast<std::size_t>(i)] = std::sqrt(v);
    }

    // component summaries
    for (std::size_t c = 0; c < model_.spec.components.size(); ++c) {
      const auto& comp = model_.spec.components[c];
      ComponentSummary cs;
      cs.name = comp.name;
      cs.kind = comp.kind;
      cs.offset = model_.comp_offset[c];
      cs.length = comp.length;
      cs.mean.assign(fit.latent_mean.begin() + cs.offset,
                     fit.latent_mean.begin() + cs.offset + cs.length);
      cs.sd.assign(fit.latent_sd.begin() + cs.offset,
                   fit.latent_sd.begin() + cs.offset + cs.length);
      if (comp.length <= opts_.dense_component_max) {
        cs.has_cov = true;
        const int L = comp.length;
        cs.cov.assign(static_cast<std::size_t>(L) * L, 0.0);
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(L, L);
        Eigen::VectorXd mbar = Eigen::VectorXd::Zero(L);
        for (std::size_t k = 0; k < K; ++k) {
          Eigen::VectorXd mu = evals[k].mode.segment(cs.offset, L);
          acc += w[k] * (evals[k].comp_cov.at(static_cast<int>(c)) + mu * mu.transpose());
          mbar += w[k] * mu;
        }
        acc -= mbar * mbar.transpose();
        for (int a = 0; a < L; ++a)
          for (int b = 0; b < L; ++b) cs.cov[static_cast<std::size_t>(a) * L + b] = acc(a, b);
      }
      fit.components.push_back(std::move(cs));
    }

    // hyper summaries
    const int J = model_.n_hyper();
    if (J > 0) {
      Eigen::MatrixXd cov = ex.neg_hessian.inverse();
      for (int j = 0; j < J; ++j) {
        HyperSummary hs;
        hs.name = model_.hypers[static_cast<std::size_t>(j)].name;
        double m = 0.0;
        for (std::size_t k = 0; k < K; ++k) m += w[k] * ex.points[k].theta[static_cast<std::size_t>(j)];
        hs.mean = m;
        hs.sd = std::sqrt(std::max(cov(j, j), 0.0));
        hs.lo95 = hs.mean - 1.96 * hs.sd;
        hs.hi95 = hs.mean + 1.96 * hs.sd;
        fit.hyper_summaries.push_back(hs);
      }
    }

    // predictor mixture and DIC
    fit.predictor_mean.assign(n_rows, 0.0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t r = 0; r < n_rows; ++r)
        fit.predictor_mean[r] += w[k] * evals[k].eta[static_cast<Eigen::Index>(r)];

    double mean_dev = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      double dk = -2.0 * evals[k].loglik;
      for (std::size_t r = 0; r < n_rows; ++r)
        dk += evals[k].lik_w[static_cast<Eigen::Index>(r)] * evals[k].pred_var[r];
      mean_dev += w[k] * dk;
    }
    // plug-in deviance at the mixed predictor (Gaussian precisions at their
    // posterior-mean value)
    std::vector<double> tau_bar(model_.spec.blocks.size(), 1.0);
    for (std::size_t b = 0; b < model_.spec.blocks.size(); ++b) {
      const auto& blk = model_.spec.blocks[b];
      if (blk.family != Family::gaussian) continue;
      if (model_.block_obs_hyper[b] >= 0) {
        double t = 0.0;
        for (std::size_t k = 0; k < K; ++k)
          t += w[k] * std::exp(ex.points[k].theta[static_cast<std::size_t>(model_.block_obs_hyper[b])]);
        tau_bar[b] = t;
      } else {
        tau_bar[b] = blk.obs_precision.fixed;
      }
    }
    double dev_at_mean = 0.0;
    long clamp_dummy = 0;
    for (std::size_t r = 0; r < n_rows; ++r) {
      const auto& row = model_.rows[r];
      double ll, u, ww;
      likelihood_terms(row, fit.predictor_mean[r], tau_bar[static_cast<std::size_t>(row.block)],
                       lgamma_y_[r], ll, u, ww, clamp_dummy);
      dev_at_mean -= 2.0 * ll;
    }
    fit.mean_deviance = mean_dev;
    fit.deviance_at_mean = dev_at_mean;
    fit.p_d = mean_dev - dev_at_mean;
    fit.dic = dev_at_mean + 2.0 * fit.p_d;

    for (std::size_t k = 0; k < K; ++k) {
      fit.clamp_count += evals[k].clamp_count;
      fit.pattern_fallbacks += evals[k].pattern_fallbacks;
    }
    return fit;
  }

 private:
  // ----- per-theta resolved quantities -----

  double tau_of(const std::vector<double>& theta, int hyper_idx) const {
    return std::exp(std::clamp(theta[static_cast<std::size_t>(hyper_idx)], -40.0, 40.0));
  }

  SpMat build_Q(const std::vector<double>& theta) const {
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t c = 0; c < model_.spec.components.size(); ++c) {
      const auto& comp = model_.spec.components[c];
      double tau = (model_.comp_hyper[c] >= 0) ? tau_of(theta, model_.comp_hyper[c])
                                               : comp.fixed_precision;
      int off = model_.comp_offset[c];
      for (const auto& e : structures_[c].entries) {
        t.emplace_back(off + e.row, off + e.col, tau * e.value);
        if (e.row != e.col) t.emplace_back(off + e.col, off + e.row, tau * e.value);
      }
    }
    SpMat Q(model_.n_latent, model_.n_latent);
    Q.setFromTriplets(t.begin(), t.end());
    return Q;
  }

  SpMat build_A(const std::vector<double>& theta) const {
    std::vector<Eigen::Triplet<double>> t;
    for (std::size_t r = 0; r < model_.rows.size(); ++r)
      for (const auto& e : model_.rows[r].entries) {
        double v = e.coeff;
        if (e.hyper >= 0) v *= theta[static_cast<std::size_t>(e.hyper)];
        t.emplace_back(static_cast<int>(r), e.col, v);
      }
    SpMat A(static_cast<int>(model_.rows.size()), model_.n_latent);
    A.setFromTriplets(t.begin(), t.end());
    return A;
  }

  void likelihood_terms(const ObsRow& row, double eta, double tau_obs, double lg,
                        double& ll, double& u, double& w, long& clamp_count) const {
    Family f = model_.spec.blocks[static_cast<std::size_t>(row.block)].family;
    if (f == Family::gaussian) {
      double r = row.y - eta;
      ll = 0.5 * (std::log(tau_obs) - kLog2Pi) - 0.5 * tau_obs * r * r;
      u = tau_obs * r;
      w = tau_obs;
      return;
    }
    double v = eta + row.offset;
    if (v > opts_.predictor_clamp || v < -opts_.predictor_clamp) {
      v = std::clamp(v, -opts_.predictor_clamp, opts_.predictor_clamp);
      ++clamp_count;
    }
    double lam = std::exp(v);
    ll = row.y * v - lam - lg;
    u = row.y - lam;
    w = lam;
  }

  // Gaussian observation precision per block at this theta.
  std::vector<double> obs_tau(const std::vector<double>& theta) const {
    std::vector<double> tau(model_.spec.blocks.size(), 1.0);
    for (std::size_t b = 0; b < model_.spec.blocks.size(); ++b) {
      const auto& blk = model_.spec.blocks[b];
      if (blk.family != Family::gaussian) continue;
      tau[b] = (model_.block_obs_hyper[b] >= 0) ? tau_of(theta, model_.block_obs_hyper[b])
                                                : blk.obs_precision.fixed;
    }
    return tau;
  }

  // ----- Newton optimization of the latent full conditional -----

  struct State {
    Eigen::VectorXd zeta;
    Eigen::VectorXd eta;     // A zeta per row
    Eigen::VectorXd lik_w;   // curvature weights at mode
    double loglik = 0.0;
    double zQz = 0.0;
    double objective = 0.0;
    double logdet_P = 0.0;
    double logdet_SA = 0.0;
    int iterations = 0;
    long clamp_count = 0;
    std::vector<double> trace;
    std::shared_ptr<SymSolver> solver;
    Eigen::MatrixXd V;     // P^{-1} Acon'
    Eigen::MatrixXd Sinv;  // (Acon V)^{-1}
    SpMat Q, A;
  };

  void constraint_apply(const Eigen::VectorXd& x, Eigen::VectorXd& out) const {
    // out = Acon x (sum over each constrained component's range)
    for (int c = 0; c < n_con_; ++c) {
      auto [lo, hi] = model_.component_range(model_.constrained_components[static_cast<std::size_t>(c)]);
      out[c] = x.segment(lo, hi - lo).sum();
    }
  }

  State newton(const std::vector<double>& theta, const Eigen::VectorXd* init) const {
    State st;
    st.Q = build_Q(theta);
    st.A = build_A(theta);
    auto tau = obs_tau(theta);
    const int n = model_.n_latent;
    const auto n_rows = static_cast<Eigen::Index>(model_.rows.size());

    st.zeta = init ? *init : Eigen::VectorXd::Zero(n);
    if (n_con_ > 0) {
      // project the start onto the constraint manifold
      Eigen::VectorXd r(n_con_);
      constraint_apply(st.zeta, r);
      for (int c = 0; c < n_con_; ++c) {
        auto [lo, hi] = model_.component_range(model_.constrained_components[static_cast<std::size_t>(c)]);
        st.zeta.segment(lo, hi - lo).array() -= r[c] / (hi - lo);
      }
    }

    Eigen::VectorXd u(n_rows), wdiag(n_rows);
    auto eval_state = [&](const Eigen::VectorXd& z, double& ll, long& clamps,
                          Eigen::VectorXd& eta_out) {
      eta_out = st.A * z;
      ll = 0.0;
      clamps = 0;
      for (Eigen::Index r = 0; r < n_rows; ++r) {
        double l, du, dw;
        likelihood_terms(model_.rows[static_cast<std::size_t>(r)], eta_out[r],
                         tau[static_cast<std::size_t>(model_.rows[static_cast<std::size_t>(r)].block)],
                         lgamma_y_[static_cast<std::size_t>(r)], l, du, dw, clamps);
        ll += l;
        u[r] = du;
        wdiag[r] = dw;
      }
    };

    st.solver = std::make_shared<SymSolver>();
    Eigen::VectorXd eta;
    double obj_prev = -std::numeric_limits<double>::infinity();
    for (int iter = 0;; ++iter) {
      double ll;
      long clamps;
      eval_state(st.zeta, ll, clamps, eta);
      double zQz = st.zeta.dot(st.Q * st.zeta);
      double obj = ll - 0.5 * zQz;
      st.trace.push_back(obj);
      st.loglik = ll;
      st.zQz = zQz;
      st.objective = obj;
      st.clamp_count = clamps;
      st.eta = eta;
      st.lik_w = wdiag;
      st.iterations = iter;

      Eigen::VectorXd grad = st.A.transpose() * u - st.Q * st.zeta;
      SpMat P = st.Q + SpMat(st.A.transpose() * wdiag.asDiagonal() * st.A);
      st.solver->factorize(P);
      if (n_con_ > 0) {
        Eigen::MatrixXd At = Eigen::MatrixXd::Zero(n, n_con_);
        for (int c = 0; c < n_con_; ++c) {
          auto [lo, hi] = model_.component_range(model_.constrained_components[static_cast<std::size_t>(c)]);
          At.block(lo, c, hi - lo, 1).setOnes();
        }
        st.V = st.solver->solve(At);
        Eigen::MatrixXd S(n_con_, n_con_);
        for (int c = 0; c < n_con_; ++c) {
          Eigen::VectorXd col = st.V.col(c);
          Eigen::VectorXd sc(n_con_);
          constraint_apply(col, sc);
          S.col(c) = sc;
        }
        st.Sinv = S.inverse();
        st.logdet_SA = std::log(S.determinant());
      }
      st.logdet_P = st.solver->log_determinant();

      // projected gradient (constraints are disjoint sum-to-zero rows)
      Eigen::VectorXd gp = grad;
      if (n_con_ > 0) {
        Eigen::VectorXd r(n_con_);
        constraint_apply(grad, r);
        for (int c = 0; c < n_con_; ++c) {
          auto [lo, hi] = model_.component_range(model_.constrained_components[static_cast<std::size_t>(c)]);
          gp.segment(lo, hi - lo).array() -= r[c] / (hi - lo);
        }
      }
      double gnorm = gp.lpNorm<Eigen::Infinity>();
      if (gnorm < opts_.newton_tol) break;
      if (iter >= opts_.max_newton_iter)
        throw ConvergenceError("Newton did not converge (gradient max-norm = " +
                               std::to_string(gnorm) + ")");

      Eigen::VectorXd m = st.zeta + st.solver->solve(grad);
      if (n_con_ > 0) {
        Eigen::VectorXd Am(n_con_);
        constraint_apply(m, Am);
        m -= st.V * (st.Sinv * Am);
      }
      Eigen::VectorXd d = m - st.zeta;

      // step-halving line search: require strict increase of the objective
      double t = 1.0;
      bool ok = false;
      for (int ls = 0; ls < 60; ++ls, t *= 0.5) {
        Eigen::VectorXd cand = st.zeta + t * d;
        double ll2;
        long cl2;
        Eigen::VectorXd eta2;
        eval_state(cand, ll2, cl2, eta2);
        double obj2 = ll2 - 0.5 * cand.dot(st.Q * cand);
        if (std::isfinite(obj2) && obj2 > obj) {
          st.zeta = cand;
          ok = true;
          break;
        }
      }
      if (!ok) {
        if (gnorm < 1e-3) break;  // numerically at the mode
        throw ConvergenceError("Newton line search stalled (gradient max-norm = " +
                               std::to_string(gnorm) + ")");
      }
      obj_prev = obj;
      (void)obj_prev;
    }
    return st;
  }

  double log_posterior_from(const State& st, const std::vector<double>& theta) const {
    double lp = model_.log_prior_offset;
    for (std::size_t j = 0; j < model_.hypers.size(); ++j)
      lp += model_.hypers[j].log_prior(theta[j]);
    // prior normalization: 1/2 sum n_k theta_k, minus 1/2 theta_k per
    // sum-to-zero constraint on a tau-scaled component
    for (std::size_t c = 0; c < model_.spec.components.size(); ++c)
      if (model_.comp_hyper[c] >= 0)
        lp += 0.5 * model_.spec.components[c].length * theta[static_cast<std::size_t>(model_.comp_hyper[c])];
    for (int ci : model_.constrained_components)
      if (model_.comp_hyper[static_cast<std::size_t>(ci)] >= 0)
        lp -= 0.5 * theta[static_cast<std::size_t>(model_.comp_hyper[static_cast<std::size_t>(ci)])];
    lp += st.loglik - 0.5 * st.zQz;
    lp -= 0.5 * st.logdet_P;
    lp -= 0.5 * st.logdet_SA;
    return lp;
  }

  double eval_logpost_safe(const std::vector<double>& theta, const Eigen::VectorXd& warm) const {
    try {
      State st = newton(theta, &warm);
      return log_posterior_from(st, theta);
    } catch (const ConvergenceError&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  // constraint-corrected marginal variances at one theta
  std::vector<double> marginal_variances(const State& st, long* fallbacks = nullptr,
                                         const PartialInverse* pi_in = nullptr) const {
    PartialInverse pi = pi_in ? *pi_in : st.solver->partial_inverse();
    const int n = model_.n_latent;
    std::vector<double> var(static_cast<std::size_t>(n));
    Eigen::MatrixXd VS;
    if (n_con_ > 0) VS = st.V * st.Sinv;
    for (int i = 0; i < n; ++i) {
      double v = pi.diagonal(i);
      if (n_con_ > 0) v -= st.V.row(i).dot(VS.row(i));
      var[static_cast<std::size_t>(i)] = std::max(v, 0.0);
    }
    (void)fallbacks;
    return var;
  }

  struct FullEval {
    Eigen::VectorXd mode;
    std::vector<double> marg_var;
    Eigen::VectorXd eta;
    Eigen::VectorXd lik_w;
    std::vector<double> pred_var;
    std::map<int, Eigen::MatrixXd> comp_cov;  // small components
    double loglik = 0.0;
    long clamp_count = 0;
    long pattern_fallbacks = 0;
  };

  FullEval full_eval(const std::vector<double>& theta, const Eigen::VectorXd* warm) const {
    State st = newton(theta, warm);
    FullEval fe;
    fe.mode = st.zeta;
    fe.eta = st.eta;
    fe.lik_w = st.lik_w;
    fe.loglik = st.loglik;
    fe.clamp_count = st.clamp_count;
    PartialInverse pi = st.solver->partial_inverse();
    fe.marg_var = marginal_variances(st, nullptr, &pi);

    Eigen::MatrixXd VS;
    if (n_con_ > 0) VS = st.V * st.Sinv;

    // predictor variances: a' Sigma_c a per observation row
    fe.pred_var.assign(model_.rows.size(), 0.0);
    std::map<int, Eigen::VectorXd> col_cache;  // off-pattern fallback columns
    for (std::size_t r = 0; r < model_.rows.size(); ++r) {
      const auto& row = model_.rows[r];
      double v = 0.0;
      for (std::size_t a = 0; a < row.entries.size(); ++a) {
        double ca = row.entries[a].coeff;
        if (row.entries[a].hyper >= 0) ca *= theta[static_cast<std::size_t>(row.entries[a].hyper)];
        for (std::size_t b = 0; b < row.entries.size(); ++b) {
          double cb = row.entries[b].coeff;
          if (row.entries[b].hyper >= 0) cb *= theta[static_cast<std::size_t>(row.entries[b].hyper)];
          bool found;
          double s = pi.sigma(row.entries[a].col, row.entries[b].col, &found);
          if (!found) {
            ++fe.pattern_fallbacks;
            auto it = col_cache.find(row.entries[b].col);
            if (it == col_cache.end()) {
              Eigen::VectorXd e = Eigen::VectorXd::Zero(model_.n_latent);
              e[row.entries[b].col] = 1.0;
              it = col_cache.emplace(row.entries[b].col, st.solver->solve(e)).first;
            }
            s = it->second[row.entries[a].col];
          }
          v += ca * cb * s;
        }
      }
      if (n_con_ > 0) {
        Eigen::VectorXd av = Eigen::VectorXd::Zero(n_con_);
        for (const auto& e : row.entries) {
          double c = e.coeff;
          if (e.hyper >= 0) c *= theta[static_cast<std::size_t>(e.hyper)];
          av += c * st.V.row(e.col).transpose();
        }
        v -= av.dot(st.Sinv * av);
      }
      fe.pred_var[r] = std::max(v, 0.0);
    }

    // dense within-component covariance for small components
    for (std::size_t c = 0; c < model_.spec.components.size(); ++c) {
      const auto& comp = model_.spec.components[c];
      if (comp.length > opts_.dense_component_max) continue;
      auto [lo, hi] = model_.component_range(static_cast<int>(c));
      const int L = hi - lo;
      Eigen::MatrixXd E = Eigen::MatrixXd::Zero(model_.n_latent, L);
      for (int a = 0; a < L; ++a) E(lo + a, a) = 1.0;
      Eigen::MatrixXd X = st.solver->solve(E);
      Eigen::MatrixXd cov = X.middleRows(lo, L);
      if (n_con_ > 0) {
        Eigen::MatrixXd Vr = st.V.middleRows(lo, L);
        cov -= Vr * st.Sinv * Vr.transpose();
      }
      fe.comp_cov[static_cast<int>(c)] = 0.5 * (cov + cov.transpose());
    }
    return fe;
  }

  Eigen::VectorXd fd_gradient(const std::vector<double>& theta, double f0,
                              const Eigen::VectorXd& warm) const {
    const int J = model_.n_hyper();
    const double h = opts_.gradient_fd_step;
    std::vector<double> vals(static_cast<std::size_t>(2 * J));
    batch_eval(theta, make_axial_offsets(J, h), warm, vals);
    Eigen::VectorXd g(J);
    for (int j = 0; j < J; ++j)
      g[j] = (vals[static_cast<std::size_t>(2 * j)] - vals[static_cast<std::size_t>(2 * j + 1)]) / (2.0 * h);
    (void)f0;
    return g;
  }

  Eigen::MatrixXd fd_neg_hessian(const std::vector<double>& theta, double f0,
                                 const Eigen::VectorXd& warm, double h) const {
    const int J = model_.n_hyper();
    std::vector<std::vector<double>> offs;
    // diagonal: +-h per coordinate; off-diagonal: four corners per pair
    for (int j = 0; j < J; ++j) {
      std::vector<double> p(static_cast<std::size_t>(J), 0.0);
      p[static_cast<std::size_t>(j)] = h;
      offs.push_back(p);
      p[static_cast<std::size_t>(j)] = -h;
      offs.push_back(p);
    }
    for (int a = 0; a < J; ++a)
      for (int b = a + 1; b < J; ++b)
        for (int sa : {+1, -1})
          for (int sb : {+1, -1}) {
            std::vector<double> p(static_cast<std::size_t>(J), 0.0);
            p[static_cast<std::size_t>(a)] = sa * h;
            p[static_cast<std::size_t>(b)] = sb * h;
            offs.push_back(p);
          }
    std::vector<double> vals(offs.size());
    batch_eval(theta, offs, warm, vals);
    Eigen::MatrixXd H(J, J);
    for (int j = 0; j < J; ++j) {
      double fp = vals[static_cast<std::size_t>(2 * j)];
      double fm = vals[static_cast<std::size_t>(2 * j + 1)];
      H(j, j) = -(fp + fm - 2.0 * f0) / (h * h);
    }
    std::size_t idx = static_cast<std::size_t>(2 * J);
    for (int a = 0; a < J; ++a)
      for (int b = a + 1; b < J; ++b) {
        double fpp = vals[idx++], fpm = vals[idx++], fmp = vals[idx++], fmm = vals[idx++];
        double v = -(fpp - fpm - fmp + fmm) / (4.0 * h * h);
        H(a, b) = H(b, a) = v;
      }
    return H;
  }

  static std::vector<std::vector<double>> make_axial_offsets(int J, double h) {
    std::vector<std::vector<double>> offs;
    for (int j = 0; j < J; ++j) {
      std::vector<double> p(static_cast<std::size_t>(J), 0.0);
      p[static_cast<std::size_t>(j)] = h;
      offs.push_back(p);
      p[static_cast<std::size_t>(j)] = -h;
      offs.push_back(p);
    }
    return offs;
  }

  void batch_eval(const std::vector<double>& theta, const std::vector<std::vector<double>>& offsets,
                  const Eigen::VectorXd& warm, std::vector<double>& out) const {
    parallel_for(offsets.size(), opts_.n_threads, [&](std::size_t i) {
      std::vector<double> th(theta);
      for (std::size_t j = 0; j < th.size(); ++j) th[j] += offsets[i][j];
      out[i] = eval_logpost_safe(th, warm);
    });
  }

  static constexpr double kLog2Pi = 1.8378770664093454835606594728112;

  AssembledModel model_;
  EngineOptions opts_;
  std::vector<SparseSymMatrix> structures_;
  std::vector<double> lgamma_y_;
  bool has_copy_ = false;
  int n_con_ = 0;
};

}  // namespace lgcp
