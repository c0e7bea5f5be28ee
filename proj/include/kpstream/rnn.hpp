#pragma once

#include <optional>
#include <span>

#include "kpstream/checkpoint.hpp"
#include "kpstream/layers.hpp"
#include "kpstream/training.hpp"

namespace kpstream {

struct RnnConfig {
  int input_dim = kFrameDims;
  int hidden_dim = 128;
  CellKind cell = CellKind::Gated;
  /// Hidden widths of the output head g; its last layer is linear.
  std::vector<int> head_hidden{128};
  /// Block length: training windows are 2k frames, k of context then k closed-loop.
  int k = 6;
  TrainOptions train;
  std::uint64_t seed = 1;
};

/// Deterministic recurrent forecaster: h_t = f(x_t, h_{t-1}) and a point
/// prediction x_{t+1} = g(h_t). All inputs here are in normalised space
/// unless stated otherwise.
class RnnModel {
 public:
  explicit RnnModel(const RnnConfig& config);

  const RnnConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  NormalizationStats stats;
  std::vector<double> loss_history;

  Vector zero_state() const { return Vector::Zero(config_.hidden_dim); }
  /// One recurrent update.
  Vector step(const Vector& h, const Vector& x) const;
  /// Point prediction of the next frame from the current state.
  Vector output(const Vector& h) const;

  ad::Var step(ad::Tape& tape, ad::Var h, ad::Var x) const;
  ad::Var output(ad::Tape& tape, ad::Var h) const;

  /// Mean squared error per dimension over a time-major window batch: the first
  /// `context_len` frames are fed as inputs (teacher forcing) and every later
  /// prediction is fed back (closed loop). All W - 1 next-frame predictions count.
  ad::Var window_loss(ad::Tape& tape, std::span<const Matrix> window, int context_len) const;

  /// Trains on already-normalised dim x T sequences with windows of 2k frames.
  void fit(std::span<const Matrix> sequences);

  /// Warm up from the zero state over `context` (keypoint space, one frame per
  /// column), then roll out `horizon` frames closed-loop. Output is in keypoint space.
  Matrix predict_block(const Matrix& context, int horizon) const;

  Checkpoint to_checkpoint() const;
  static RnnModel from_checkpoint(const Checkpoint& c);

 private:
  RnnConfig config_;
  ParamStore params_;
  RecurrentCell cell_;
  Mlp head_;
};

/// Trains from keypoint sequences. Statistics default to the dataset's own.
/// Throws InvalidArgument for an empty dataset or sequences shorter than 2k.
RnnModel rnn_train(std::span<const KeypointSequence> dataset, const RnnConfig& config,
                   std::optional<NormalizationStats> stats = std::nullopt);

}  // namespace kpstream
