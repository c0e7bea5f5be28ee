#include "kpstream/training.hpp"

#include <cmath>
#include <numeric>

namespace kpstream {

WindowSampler::WindowSampler(std::span<const Matrix> sequences, int length)
    : sequences_(sequences), length_(length) {
  if (length < 1) throw InvalidArgument("window length must be positive");
  for (std::size_t s = 0; s < sequences.size(); ++s) {
    for (Eigen::Index t = 0; t + length <= sequences[s].cols(); ++t) starts_.emplace_back(s, t);
  }
  if (starts_.empty()) {
    throw InvalidArgument("no training windows of length " + std::to_string(length) + " are available");
  }
}

std::vector<Matrix> WindowSampler::sample(Rng& rng, int batch) const {
  std::uniform_int_distribution<std::size_t> pick(0, starts_.size() - 1);
  const Eigen::Index dim = sequences_.front().rows();
  std::vector<Matrix> out(static_cast<std::size_t>(length_), Matrix(dim, batch));
  for (int b = 0; b < batch; ++b) {
    const auto [s, start] = starts_[pick(rng)];
    for (int t = 0; t < length_; ++t) out[static_cast<std::size_t>(t)].col(b) = sequences_[s].col(start + t);
  }
  return out;
}

std::vector<Matrix> WindowSampler::window(std::size_t i) const {
  const auto [s, start] = starts_.at(i);
  std::vector<Matrix> out;
  for (int t = 0; t < length_; ++t) out.emplace_back(sequences_[s].col(start + t));
  return out;
}

std::vector<double> run_training(ParamStore& params, const TrainOptions& opt, Rng& rng, const BatchLoss& loss) {
  if (opt.steps < 0 || opt.batch_size < 1) throw InvalidArgument("invalid training options");
  std::vector<double> history;
  history.reserve(static_cast<std::size_t>(opt.steps));
  for (int step = 0; step < opt.steps; ++step) {
    params.zero_grad();
    ad::Tape tape(true);
    const ad::Var l = loss(tape, rng);
    const double value = l.value()(0, 0);
    if (!std::isfinite(value)) {
      throw NonFiniteError("non-finite training loss at step " + std::to_string(step), "step " + std::to_string(step));
    }
    tape.backward(l, params);
    adam_step(params, opt.adam);
    history.push_back(value);
  }
  return history;
}

std::vector<Matrix> normalized_matrices(std::span<const KeypointSequence> seqs, const NormalizationStats& stats) {
  std::vector<Matrix> out;
  out.reserve(seqs.size());
  for (const auto& s : seqs) out.push_back(normalize_columns(s.to_matrix(), stats));
  return out;
}

double head_mean(const std::vector<double>& h, std::size_t n) {
  n = std::min(n, h.size());
  if (n == 0) return 0.0;
  return std::accumulate(h.begin(), h.begin() + static_cast<long>(n), 0.0) / static_cast<double>(n);
}

double tail_mean(const std::vector<double>& h, std::size_t n) {
  n = std::min(n, h.size());
  if (n == 0) return 0.0;
  return std::accumulate(h.end() - static_cast<long>(n), h.end(), 0.0) / static_cast<double>(n);
}

}  // namespace kpstream
