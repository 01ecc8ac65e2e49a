// Test-only oracles, independent of the inference engine: dense GMRF
// conditioning and brute-force quadrature for tiny latent Gaussian models.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <vector>

namespace oracles {

// Exact conditioning of a Gaussian prior N(0, Qp^-1) on y = A zeta + noise
// (noise precision tau_obs), optionally with hard sum-to-zero constraints
// given as rows of C. Returns posterior mean and covariance.
struct GaussianPosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline GaussianPosterior dense_gmrf_conditioning(const Eigen::MatrixXd& Qp,
                                                 const Eigen::MatrixXd& A,
                                                 const Eigen::VectorXd& y, double tau_obs,
                                                 const Eigen::MatrixXd& C = Eigen::MatrixXd()) {
  Eigen::MatrixXd P = Qp + tau_obs * A.transpose() * A;
  Eigen::MatrixXd Sigma = P.inverse();
  Eigen::VectorXd m = Sigma * (tau_obs * A.transpose() * y);
  if (C.size() > 0) {
    Eigen::MatrixXd W = Sigma * C.transpose();
    Eigen::MatrixXd S = C * W;
    Eigen::MatrixXd Si = S.inverse();
    m -= W * Si * (C * m);
    Sigma -= W * Si * W.transpose();
  }
  return {m, Sigma};
}

// Log marginal likelihood of a single Poisson count y ~ Po(exp(zeta)),
// zeta ~ N(0, 1/tau), by Simpson quadrature.
inline double poisson1_log_marginal(double y, double tau, double lo = -12.0, double hi = 12.0,
                                    int n = 24000) {
  double h = (hi - lo) / n;
  double lgy = std::lgamma(y + 1.0);
  auto f = [&](double z) {
    double ll = y * z - std::exp(z) - lgy;
    double lp = 0.5 * std::log(tau / (2.0 * M_PI)) - 0.5 * tau * z * z;
    return std::exp(ll + lp);
  };
  double s = f(lo) + f(hi);
  for (int i = 1; i < n; ++i) s += f(lo + i * h) * (i % 2 ? 4.0 : 2.0);
  return std::log(s * h / 3.0);
}

// Brute-force posterior for a 2-cell Poisson model:
//   y_i ~ Po(exp(zeta_i)), zeta ~ N(0, (tau R)^{-1}), tau = exp(theta),
//   theta ~ log-gamma(shape, rate).
// Tensor-product quadrature over (theta, zeta1, zeta2). R is 2x2 SPD.
struct Quad2Result {
  double theta_mean = 0.0;
  Eigen::Vector2d zeta_mean;
  Eigen::Vector2d zeta_sd;
};

inline Quad2Result poisson2_quadrature(double y1, double y2, const Eigen::Matrix2d& R,
                                       double shape, double rate, double theta_lo,
                                       double theta_hi, int n_theta, double z_lo, double z_hi,
                                       int n_z) {
  double lg1 = std::lgamma(y1 + 1.0), lg2 = std::lgamma(y2 + 1.0);
  double dth = (theta_hi - theta_lo) / n_theta;
  double dz = (z_hi - z_lo) / n_z;
  double mass = 0.0, th_acc = 0.0;
  Eigen::Vector2d m_acc = Eigen::Vector2d::Zero();
  Eigen::Vector2d m2_acc = Eigen::Vector2d::Zero();
  for (int t = 0; t <= n_theta; ++t) {
    double theta = theta_lo + t * dth;
    double tau = std::exp(theta);
    double log_prior_theta = shape * theta - rate * tau;
    double logdet = std::log(tau * tau * R.determinant());
    for (int i = 0; i <= n_z; ++i) {
      double z1 = z_lo + i * dz;
      for (int j = 0; j <= n_z; ++j) {
        double z2 = z_lo + j * dz;
        double quad = tau * (R(0, 0) * z1 * z1 + 2.0 * R(0, 1) * z1 * z2 + R(1, 1) * z2 * z2);
        double lp = log_prior_theta + 0.5 * logdet - 0.5 * quad + y1 * z1 - std::exp(z1) - lg1 +
                    y2 * z2 - std::exp(z2) - lg2;
        double w = std::exp(lp);
        mass += w;
        th_acc += w * theta;
        m_acc += w * Eigen::Vector2d(z1, z2);
        m2_acc += w * Eigen::Vector2d(z1 * z1, z2 * z2);
      }
    }
  }
  Quad2Result out;
  out.theta_mean = th_acc / mass;
  out.zeta_mean = m_acc / mass;
  out.zeta_sd = (m2_acc / mass - out.zeta_mean.cwiseProduct(out.zeta_mean)).cwiseSqrt();
  return out;
}

// Quadrature oracle for the constrained model
//   y_i ~ Po(exp(b0 + s_i f)), s = (+1, -1), f has the sum-to-zero-reduced
//   RW1(2) prior (quadratic form tau * c_f * f^2), b0 ~ N(0, 1/prec_b0),
//   tau = exp(theta) ~ log-gamma(shape, rate).
struct QuadConstrainedResult {
  double theta_mean = 0.0;
  double b0_mean = 0.0, b0_sd = 0.0;
  double f_mean = 0.0, f_sd = 0.0;  // first element of (f, -f)
};

inline QuadConstrainedResult poisson2_constrained_quadrature(
    double y1, double y2, double c_f, double prec_b0, double shape, double rate,
    double theta_lo, double theta_hi, int n_theta, double b_lo, double b_hi, int n_b,
    double f_lo, double f_hi, int n_f) {
  double lg1 = std::lgamma(y1 + 1.0), lg2 = std::lgamma(y2 + 1.0);
  double dth = (theta_hi - theta_lo) / n_theta;
  double db = (b_hi - b_lo) / n_b;
  double df = (f_hi - f_lo) / n_f;
  double mass = 0.0, th_acc = 0.0, b_acc = 0.0, b2_acc = 0.0, f_acc = 0.0, f2_acc = 0.0;
  for (int t = 0; t <= n_theta; ++t) {
    double theta = theta_lo + t * dth;
    double tau = std::exp(theta);
    double lpt = shape * theta - rate * tau + 0.5 * theta;  // 1-dim effective Gaussian in f
    for (int i = 0; i <= n_b; ++i) {
      double b0 = b_lo + i * db;
      double lpb = -0.5 * prec_b0 * b0 * b0;
      for (int j = 0; j <= n_f; ++j) {
        double f = f_lo + j * df;
        double eta1 = b0 + f, eta2 = b0 - f;
        double lp = lpt + lpb - 0.5 * tau * c_f * f * f + y1 * eta1 - std::exp(eta1) - lg1 +
                    y2 * eta2 - std::exp(eta2) - lg2;
        double w = std::exp(lp);
        mass += w;
        th_acc += w * theta;
        b_acc += w * b0;
        b2_acc += w * b0 * b0;
        f_acc += w * f;
        f2_acc += w * f * f;
      }
    }
  }
  QuadConstrainedResult out;
  out.theta_mean = th_acc / mass;
  out.b0_mean = b_acc / mass;
  out.b0_sd = std::sqrt(b2_acc / mass - out.b0_mean * out.b0_mean);
  out.f_mean = f_acc / mass;
  out.f_sd = std::sqrt(f2_acc / mass - out.f_mean * out.f_mean);
  return out;
}

}  // namespace oracles
