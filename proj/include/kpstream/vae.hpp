#pragma once

#include <optional>
#include <span>

#include "kpstream/checkpoint.hpp"
#include "kpstream/gaussian.hpp"
#include "kpstream/layers.hpp"
#include "kpstream/training.hpp"

namespace kpstream {

struct VaeConfig {
  int input_dim = kFrameDims;
  int latent_dim = 32;
  std::vector<int> encoder_hidden{128};
  std::vector<int> decoder_hidden{128};
  /// Largest lag the decoder is conditioned on; lags are 1..max_lag.
  int max_lag = 6;
  /// Weight on the KL term.
  double beta = 1.0;
  /// Floor on the decoder log-variance.
  double min_log_var = -10.0;
  /// Train as a plain autoencoder: target = input, lag fixed at 1.
  bool autoencode = false;
  TrainOptions train;
  std::uint64_t seed = 1;
};

/// Lag-conditioned VAE: encodes frame x_t and decodes x_{t+lag}, with the lag
/// supplied to the decoder as a one-hot code appended to z.
class VaeModel {
 public:
  explicit VaeModel(const VaeConfig& config);

  const VaeConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  NormalizationStats stats;
  std::vector<double> loss_history;

  DiagGaussian encode(const Vector& x) const;
  DiagGaussian decode(const Vector& z, int lag) const;

  /// Encoder output for a batch: (mean, log_var), each latent x B.
  std::pair<ad::Var, ad::Var> encode(ad::Tape& tape, ad::Var x) const;
  /// Decoder output for a batch with per-column lags.
  std::pair<ad::Var, ad::Var> decode(ad::Tape& tape, ad::Var z, std::span<const int> lags) const;

  /// Single-sample ELBO loss summed over the batch columns:
  /// nll(target | decode(reparam(encode(in), eps), lag)) + beta * KL(encode(in) || N(0, I)).
  ad::Var loss(ad::Tape& tape, const Matrix& x_in, const Matrix& x_target, std::span<const int> lags,
               const Matrix& eps) const;
  double loss(const Vector& x_in, const Vector& x_target, int lag, const Vector& eps) const;

  void fit(std::span<const Matrix> sequences);

  /// For lag = 1..horizon, the decoder mean at z = encoder mean of the last
  /// context frame. With `sample_rng` set, z is drawn from the posterior instead.
  Matrix predict_block(const Matrix& context, int horizon, Rng* sample_rng = nullptr) const;

  Checkpoint to_checkpoint() const;
  static VaeModel from_checkpoint(const Checkpoint& c);

 private:
  Matrix lag_codes(std::span<const int> lags) const;

  VaeConfig config_;
  ParamStore params_;
  Mlp encoder_;
  Mlp decoder_;
};

/// Throws InvalidArgument for an empty dataset or max_lag >= the shortest sequence.
VaeModel vae_train(std::span<const KeypointSequence> dataset, const VaeConfig& config,
                   std::optional<NormalizationStats> stats = std::nullopt);

}  // namespace kpstream
