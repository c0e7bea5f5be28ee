#include "kpstream/model_io.hpp"

namespace kpstream {

void put_train_options(Checkpoint& c, const TrainOptions& t) {
  c.put_scalar("cfg.train.steps", t.steps);
  c.put_scalar("cfg.train.batch_size", t.batch_size);
  c.put_scalar("cfg.train.lr", t.adam.lr);
  c.put_scalar("cfg.train.beta1", t.adam.beta1);
  c.put_scalar("cfg.train.beta2", t.adam.beta2);
  c.put_scalar("cfg.train.eps", t.adam.eps);
  c.put_scalar("cfg.train.clip_norm", t.adam.clip_norm);
}

TrainOptions get_train_options(const Checkpoint& c) {
  TrainOptions t;
  t.steps = c.integer("cfg.train.steps");
  t.batch_size = c.integer("cfg.train.batch_size");
  t.adam.lr = c.scalar("cfg.train.lr");
  t.adam.beta1 = c.scalar("cfg.train.beta1");
  t.adam.beta2 = c.scalar("cfg.train.beta2");
  t.adam.eps = c.scalar("cfg.train.eps");
  t.adam.clip_norm = c.scalar("cfg.train.clip_norm");
  return t;
}

void put_seed(Checkpoint& c, std::uint64_t seed) {
  c.put_scalar("cfg.seed_lo", static_cast<double>(seed & 0xFFFFFFFFULL));
  c.put_scalar("cfg.seed_hi", static_cast<double>(seed >> 32));
}

std::uint64_t get_seed(const Checkpoint& c) {
  const auto lo = static_cast<std::uint64_t>(c.scalar("cfg.seed_lo"));
  const auto hi = static_cast<std::uint64_t>(c.scalar("cfg.seed_hi"));
  return (hi << 32) | lo;
}

}  // namespace kpstream
