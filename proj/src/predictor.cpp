#include "kpstream/predictor.hpp"

namespace kpstream {

Matrix PersistencePredictor::predict(const BlockRequest& req) const {
  if (req.context.cols() < 1) throw InvalidArgument("persistence: empty context");
  return req.context.col(req.context.cols() - 1).replicate(1, req.horizon);
}

Matrix OracleReplayPredictor::predict(const BlockRequest& req) const {
  const auto first = static_cast<Eigen::Index>(req.first_index);
  if (first + req.horizon > truth_.cols()) throw InvalidArgument("oracle: request runs past the end of the stream");
  return truth_.middleCols(first, req.horizon);
}

std::unique_ptr<BlockPredictor> make_predictor(const Checkpoint& c, RolloutMode mode, std::uint64_t seed) {
  switch (c.kind) {
    case ModelKind::Rnn: return std::make_unique<RnnPredictor>(RnnModel::from_checkpoint(c));
    case ModelKind::Vae: return std::make_unique<VaePredictor>(VaeModel::from_checkpoint(c));
    case ModelKind::Vrnn: return std::make_unique<VrnnPredictor>(VrnnModel::from_checkpoint(c), mode, seed);
  }
  throw DecodeError("unknown model kind");
}

NormalizationStats checkpoint_stats(const Checkpoint& c) { return c.stats(); }

}  // namespace kpstream
