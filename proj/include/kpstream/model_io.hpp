#pragma once

#include "kpstream/checkpoint.hpp"
#include "kpstream/training.hpp"

namespace kpstream {

// Shared checkpoint fields for the three forecasters.

void put_train_options(Checkpoint& c, const TrainOptions& t);
TrainOptions get_train_options(const Checkpoint& c);

/// 64-bit seeds are stored as two exact 32-bit halves.
void put_seed(Checkpoint& c, std::uint64_t seed);
std::uint64_t get_seed(const Checkpoint& c);

}  // namespace kpstream
