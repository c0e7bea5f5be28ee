#pragma once

#include <cmath>
#include <numbers>

#include "kpstream/types.hpp"

namespace kpstream {

/// Diagonal Gaussian stored as (mean, log-variance).
struct DiagGaussian {
  Vector mean;
  Vector log_var;

  Eigen::Index dim() const { return mean.size(); }
  Vector stddev() const { return (0.5 * log_var.array()).exp().matrix(); }
  Vector variance() const { return log_var.array().exp().matrix(); }

  static DiagGaussian standard(Eigen::Index dim) { return {Vector::Zero(dim), Vector::Zero(dim)}; }
};

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

// The free functions below accept any Eigen expressions of matching shape and
// reduce over every entry, so a column batch is summed as independent samples.

/// mean + exp(0.5 * log_var) * eps, elementwise.
template <typename M, typename L, typename E>
auto reparameterize(const Eigen::MatrixBase<M>& mean, const Eigen::MatrixBase<L>& log_var,
                    const Eigen::MatrixBase<E>& eps) {
  return (mean.array() + (0.5 * log_var.array()).exp() * eps.array()).matrix();
}

/// KL(q || p) in closed form for diagonal Gaussians.
template <typename MQ, typename LQ, typename MP, typename LP>
double gaussian_kl(const Eigen::MatrixBase<MQ>& mean_q, const Eigen::MatrixBase<LQ>& log_var_q,
                   const Eigen::MatrixBase<MP>& mean_p, const Eigen::MatrixBase<LP>& log_var_p) {
  const auto diff = (mean_q - mean_p).array();
  return 0.5 * (log_var_p.array() - log_var_q.array() +
                (log_var_q.array().exp() + diff.square()) * (-log_var_p.array()).exp() - 1.0)
                   .sum();
}

/// -log N(x; mean, exp(log_var)).
template <typename X, typename M, typename L>
double gaussian_nll(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<M>& mean,
                    const Eigen::MatrixBase<L>& log_var) {
  return 0.5 * (kLog2Pi + log_var.array() + (x - mean).array().square() * (-log_var.array()).exp()).sum();
}

inline Vector reparameterize(const DiagGaussian& g, const Eigen::Ref<const Vector>& eps) {
  require_same_size(g.dim(), eps.size(), "reparameterize");
  require_same_size(g.dim(), g.log_var.size(), "reparameterize");
  return reparameterize(g.mean, g.log_var, eps);
}

inline double gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  require_same_size(q.dim(), p.dim(), "gaussian_kl");
  require_same_size(q.dim(), q.log_var.size(), "gaussian_kl");
  require_same_size(p.dim(), p.log_var.size(), "gaussian_kl");
  return gaussian_kl(q.mean, q.log_var, p.mean, p.log_var);
}

inline double gaussian_nll(const Eigen::Ref<const Vector>& x, const DiagGaussian& g) {
  require_same_size(x.size(), g.dim(), "gaussian_nll");
  require_same_size(g.dim(), g.log_var.size(), "gaussian_nll");
  return gaussian_nll(x, g.mean, g.log_var);
}

/// Standard-normal draws, one per entry, column by column.
inline Matrix standard_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n01(rng);
  }
  return m;
}

}  // namespace kpstream
