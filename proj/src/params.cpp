#include "kpstream/params.hpp"

#include <cmath>

namespace kpstream {

Param& ParamStore::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  if (rows <= 0 || cols <= 0) throw InvalidArgument("parameter '" + name + "' needs positive shape");
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw InvalidArgument("duplicate parameter name '" + name + "'");
  Param& p = it->second;
  p.value = Matrix::Zero(rows, cols);
  p.grad = Matrix::Zero(rows, cols);
  p.m = Matrix::Zero(rows, cols);
  p.v = Matrix::Zero(rows, cols);
  return p;
}

Param& ParamStore::add_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  Param& p = add(name, rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> u(-limit, limit);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) p.value(r, c) = u(rng);
  }
  return p;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("unknown parameter '" + name + "'");
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

Eigen::Index ParamStore::num_scalars() const {
  Eigen::Index n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

double global_grad_norm(const ParamStore& params) {
  double sq = 0.0;
  for (const auto& [name, p] : params) sq += p.grad.squaredNorm();
  return std::sqrt(sq);
}

void adam_step(ParamStore& params, const AdamOptions& opt) {
  for (const auto& [name, p] : params) {
    if (!p.grad.allFinite()) throw NonFiniteError("non-finite gradient in parameter '" + name + "'", name);
  }
  double scale = 1.0;
  if (opt.clip_norm > 0.0) {
    const double norm = global_grad_norm(params);
    if (norm > opt.clip_norm) scale = opt.clip_norm / norm;
  }
  const long t = params.step() + 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
  for (auto& [name, p] : params) {
    const auto g = (scale * p.grad.array()).eval();
    p.m.array() = opt.beta1 * p.m.array() + (1.0 - opt.beta1) * g;
    p.v.array() = opt.beta2 * p.v.array() + (1.0 - opt.beta2) * g.square();
    p.value.array() -= opt.lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + opt.eps);
  }
  params.set_step(t);
}

}  // namespace kpstream
