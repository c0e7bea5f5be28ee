#pragma once

#include <optional>
#include <span>

#include "kpstream/checkpoint.hpp"
#include "kpstream/gaussian.hpp"
#include "kpstream/layers.hpp"
#include "kpstream/training.hpp"

namespace kpstream {

struct VrnnConfig {
  int input_dim = kFrameDims;
  int hidden_dim = 128;
  int latent_dim = 32;
  /// Width of the phi_x and phi_z feature layers.
  int feature_dim = 64;
  /// Hidden width of the prior, encoder and decoder networks.
  int net_hidden = 64;
  CellKind cell = CellKind::Gated;
  double min_log_var = -10.0;
  /// Training windows are 2k frames.
  int k = 6;
  TrainOptions train;
  std::uint64_t seed = 1;
};

enum class RolloutMode { Mean, Sample };

/// Variational recurrent forecaster. With h the state before frame t:
///   prior      p(z_t)       from phi_prior(h)
///   posterior  q(z_t | x_t) from phi_enc([phi_x(x_t); h])
///   emission   p(x_t | z_t) from phi_dec([phi_z(z_t); h])
///   recurrence h' = f([phi_x(x_t); phi_z(z_t)], h)
class VrnnModel {
 public:
  explicit VrnnModel(const VrnnConfig& config);

  const VrnnConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  NormalizationStats stats;
  std::vector<double> loss_history;

  Vector zero_state() const { return Vector::Zero(config_.hidden_dim); }
  DiagGaussian prior(const Vector& h) const;
  DiagGaussian posterior(const Vector& h, const Vector& x) const;
  DiagGaussian generate(const Vector& h, const Vector& z) const;
  Vector recur(const Vector& h, const Vector& x, const Vector& z) const;

  using GaussianVars = std::pair<ad::Var, ad::Var>;
  GaussianVars prior(ad::Tape& tape, ad::Var h) const;
  GaussianVars posterior(ad::Tape& tape, ad::Var h, ad::Var x) const;
  GaussianVars generate(ad::Tape& tape, ad::Var h, ad::Var z) const;
  ad::Var recur(ad::Tape& tape, ad::Var h, ad::Var x, ad::Var z) const;

  /// Sum over t of KL(q_t || p_t) + nll(x_t | z_t, h), summed over batch
  /// columns. `sequence` and `eps` are time-major with one entry per step.
  ad::Var sequence_loss(ad::Tape& tape, std::span<const Matrix> sequence, std::span<const Matrix> eps) const;
  /// Per-step (kl, nll) contributions for a single sequence (columns are steps).
  std::vector<std::pair<double, double>> step_terms(const Matrix& sequence, const Matrix& eps) const;
  double sequence_loss(const Matrix& sequence, const Matrix& eps) const;

  void fit(std::span<const Matrix> sequences);

  /// Posterior-mean warm-up over `context` (keypoint space), then `horizon`
  /// rollout steps driven by the prior; emission means are fed back.
  Matrix predict_block(const Matrix& context, int horizon, RolloutMode mode = RolloutMode::Mean,
                       std::uint64_t seed = 0) const;

  Checkpoint to_checkpoint() const;
  static VrnnModel from_checkpoint(const Checkpoint& c);

 private:
  GaussianVars split(ad::Var out, Eigen::Index n, bool floor_log_var) const;

  VrnnConfig config_;
  ParamStore params_;
  Mlp phi_x_;
  Mlp phi_z_;
  Mlp phi_prior_;
  Mlp phi_enc_;
  Mlp phi_dec_;
  RecurrentCell cell_;
};

VrnnModel vrnn_train(std::span<const KeypointSequence> dataset, const VrnnConfig& config,
                     std::optional<NormalizationStats> stats = std::nullopt);

}  // namespace kpstream
