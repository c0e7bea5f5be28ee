#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "kpstream/keypoint.hpp"
#include "kpstream/params.hpp"
#include "kpstream/tape.hpp"

namespace kpstream {

struct TrainOptions {
  int steps = 1500;
  int batch_size = 32;
  AdamOptions adam;
};

/// Uniform sampler over every length-`length` window of a set of sequences
/// (each a dim x T matrix). Batches are time-major: entry t is a dim x B
/// matrix holding frame t of each sampled window.
class WindowSampler {
 public:
  WindowSampler(std::span<const Matrix> sequences, int length);

  std::size_t num_windows() const { return starts_.size(); }
  std::vector<Matrix> sample(Rng& rng, int batch) const;
  /// Deterministic window i (in enumeration order), batch of one.
  std::vector<Matrix> window(std::size_t i) const;

 private:
  std::span<const Matrix> sequences_;
  int length_;
  std::vector<std::pair<std::size_t, Eigen::Index>> starts_;
};

/// One optimizer step per iteration: zero grads, build the loss on a fresh
/// tape, backprop, Adam. Returns the loss recorded at every step.
/// Throws NonFiniteError naming the step if the loss is not finite.
using BatchLoss = std::function<ad::Var(ad::Tape&, Rng&)>;
std::vector<double> run_training(ParamStore& params, const TrainOptions& opt, Rng& rng, const BatchLoss& loss);

/// Normalises each sequence into a dim x T matrix.
std::vector<Matrix> normalized_matrices(std::span<const KeypointSequence> seqs, const NormalizationStats& stats);

/// Mean of the first / last `n` entries of a loss history.
double head_mean(const std::vector<double>& h, std::size_t n);
double tail_mean(const std::vector<double>& h, std::size_t n);

}  // namespace kpstream
