#pragma once

#include <limits>
#include <memory>
#include <string>

#include "kpstream/checkpoint.hpp"
#include "kpstream/rnn.hpp"
#include "kpstream/vae.hpp"
#include "kpstream/vrnn.hpp"

namespace kpstream {

struct BlockRequest {
  /// Frames available to the receiver, oldest first, one per column (keypoint space).
  const Matrix& context;
  /// Stream index of the first frame to predict.
  std::size_t first_index;
  int horizon;
};

/// Anything that can fill a skipped block from the frames before it.
class BlockPredictor {
 public:
  virtual ~BlockPredictor() = default;
  virtual std::string name() const = 0;
  virtual Eigen::Index frame_dim() const = 0;
  virtual int max_horizon() const { return std::numeric_limits<int>::max(); }
  /// Returns `horizon` frames as columns, in keypoint space.
  virtual Matrix predict(const BlockRequest& req) const = 0;
};

/// Repeats the last context frame.
class PersistencePredictor final : public BlockPredictor {
 public:
  explicit PersistencePredictor(Eigen::Index dim = kFrameDims) : dim_(dim) {}
  std::string name() const override { return "persistence"; }
  Eigen::Index frame_dim() const override { return dim_; }
  Matrix predict(const BlockRequest& req) const override;

 private:
  Eigen::Index dim_;
};

/// Replays the ground-truth stream it was built with.
class OracleReplayPredictor final : public BlockPredictor {
 public:
  explicit OracleReplayPredictor(Matrix truth) : truth_(std::move(truth)) {}
  std::string name() const override { return "oracle"; }
  Eigen::Index frame_dim() const override { return truth_.rows(); }
  Matrix predict(const BlockRequest& req) const override;

 private:
  Matrix truth_;
};

class RnnPredictor final : public BlockPredictor {
 public:
  explicit RnnPredictor(RnnModel m) : model_(std::move(m)) {}
  std::string name() const override { return "rnn"; }
  Eigen::Index frame_dim() const override { return model_.config().input_dim; }
  Matrix predict(const BlockRequest& req) const override { return model_.predict_block(req.context, req.horizon); }
  const RnnModel& model() const { return model_; }

 private:
  RnnModel model_;
};

class VaePredictor final : public BlockPredictor {
 public:
  explicit VaePredictor(VaeModel m) : model_(std::move(m)) {}
  std::string name() const override { return "vae"; }
  Eigen::Index frame_dim() const override { return model_.config().input_dim; }
  int max_horizon() const override { return model_.config().max_lag; }
  Matrix predict(const BlockRequest& req) const override { return model_.predict_block(req.context, req.horizon); }
  const VaeModel& model() const { return model_; }

 private:
  VaeModel model_;
};

class VrnnPredictor final : public BlockPredictor {
 public:
  explicit VrnnPredictor(VrnnModel m, RolloutMode mode = RolloutMode::Mean, std::uint64_t seed = 0)
      : model_(std::move(m)), mode_(mode), seed_(seed) {}
  std::string name() const override { return "vrnn"; }
  Eigen::Index frame_dim() const override { return model_.config().input_dim; }
  /// In sample mode each block uses a seed derived from (seed, first_index).
  Matrix predict(const BlockRequest& req) const override {
    return model_.predict_block(req.context, req.horizon, mode_, seed_ ^ (0x9E3779B97F4A7C15ULL * (req.first_index + 1)));
  }
  const VrnnModel& model() const { return model_; }

 private:
  VrnnModel model_;
  RolloutMode mode_;
  std::uint64_t seed_;
};

std::unique_ptr<BlockPredictor> make_predictor(const Checkpoint& c, RolloutMode mode = RolloutMode::Mean,
                                               std::uint64_t seed = 0);

/// Normalisation stats stored in a model checkpoint.
NormalizationStats checkpoint_stats(const Checkpoint& c);

}  // namespace kpstream
