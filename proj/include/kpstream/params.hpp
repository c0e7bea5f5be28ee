#pragma once

#include <map>
#include <string>

#include "kpstream/types.hpp"

namespace kpstream {

struct Param {
  Matrix value;
  Matrix grad;
  Matrix m;  // first moment
  Matrix v;  // second moment
};

/// Named parameters with matching gradient and optimizer-moment buffers.
/// Iteration is in name order, which keeps every traversal deterministic.
class ParamStore {
 public:
  /// Adds a zero-initialised parameter. Names must be unique.
  Param& add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  /// Adds a weight drawn uniformly from +-sqrt(6 / (fan_in + fan_out)), with
  /// fan_in = cols and fan_out = rows.
  Param& add_glorot(const std::string& name, Eigen::Index rows, Eigen::Index cols, Rng& rng);

  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  void zero_grad();
  std::size_t size() const { return params_.size(); }
  Eigen::Index num_scalars() const;

  /// Completed optimizer steps; drives Adam bias correction.
  long step() const { return step_; }
  void set_step(long s) { step_ = s; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Param> params_;
  long step_ = 0;
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm cap applied before the update; <= 0 disables it.
  double clip_norm = 5.0;
};

/// Global L2 norm over every gradient buffer.
double global_grad_norm(const ParamStore& params);

/// Clips gradients by global norm, then applies one bias-corrected Adam step.
/// Throws NonFiniteError naming the parameter if any gradient is NaN/Inf.
void adam_step(ParamStore& params, const AdamOptions& opt);

}  // namespace kpstream
