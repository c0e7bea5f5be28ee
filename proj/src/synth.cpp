#include "kpstream/synth.hpp"

#include <cmath>
#include <numbers>

namespace kpstream {

namespace {

double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

// Kept out of line: GCC 11 SLP vectorisation drops the float round trip when inlined.
[[gnu::noinline]] double to_single(double v) { return static_cast<double>(static_cast<float>(v)); }

void check_common(int num_sequences, int T, double fps) {
  if (T < 4) throw InvalidArgument("synthetic sequences need T >= 4, got " + std::to_string(T));
  if (num_sequences < 0) throw InvalidArgument("num_sequences must be non-negative");
  if (!(fps > 0.0)) throw InvalidArgument("fps must be positive");
}

std::array<double, kNumKeypoints> draw_phases(Rng& rng) {
  std::array<double, kNumKeypoints> p{};
  for (auto& v : p) v = uniform(rng, 0.0, 2.0 * std::numbers::pi);
  return p;
}

}  // namespace

MotionTemplate MotionTemplate::draw(Rng& rng, const SynthRanges& r) {
  MotionTemplate tpl;
  const double scale_half = 0.5 * (r.scale_max - r.scale_min);
  for (auto& kp : tpl.keypoints) {
    kp.center = Vector2(uniform(rng, r.center_min, r.center_max), uniform(rng, r.center_min, r.center_max));
    kp.amplitude = r.amplitude_scale * uniform(rng, r.amplitude_min, r.amplitude_max);
    kp.omega = uniform(rng, r.omega_min, r.omega_max);
    kp.phase_gap = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    kp.rot_amp = r.amplitude_scale * uniform(rng, 0.0, r.max_rotation);
    kp.rot_omega = uniform(rng, r.omega_min, r.omega_max);
    for (int a = 0; a < 2; ++a) {
      kp.scale_mid[a] = uniform(rng, r.scale_min + 0.5 * scale_half, r.scale_max - 0.5 * scale_half);
      kp.scale_amp[a] = r.amplitude_scale * uniform(rng, 0.0, 0.5 * scale_half);
      kp.scale_omega[a] = uniform(rng, r.omega_min, r.omega_max);
    }
  }
  return tpl;
}

KeypointFrame MotionTemplate::evaluate(double t, const std::array<double, kNumKeypoints>& phase) const {
  KeypointFrame f;
  for (int i = 0; i < kNumKeypoints; ++i) {
    const Keypoint& kp = keypoints[static_cast<std::size_t>(i)];
    const double p = phase[static_cast<std::size_t>(i)];
    const double x = kp.center.x() + kp.amplitude * std::sin(kp.omega * t + p);
    const double y = kp.center.y() + kp.amplitude * std::cos(kp.omega * t + p + kp.phase_gap);
    const double theta = kp.rot_amp * std::sin(kp.rot_omega * t + p);
    const double sx = kp.scale_mid.x() + kp.scale_amp.x() * std::sin(kp.scale_omega.x() * t + p);
    const double sy = kp.scale_mid.y() + kp.scale_amp.y() * std::cos(kp.scale_omega.y() * t + p);
    const double c = std::cos(theta), s = std::sin(theta);
    f.coords[static_cast<std::size_t>(i)] = Vector2(to_single(x), to_single(y));
    Matrix2 j;
    j << c * sx, -s * sy, s * sx, c * sy;
    f.jacobians[static_cast<std::size_t>(i)] = j.unaryExpr([](double v) { return to_single(v); });
  }
  return f;
}

std::vector<KeypointSequence> synth_periodic(std::uint64_t seed, int num_sequences, int T, double fps,
                                             const SynthRanges& ranges) {
  check_common(num_sequences, T, fps);
  Rng rng(seed);
  const MotionTemplate tpl = MotionTemplate::draw(rng, ranges);
  std::vector<KeypointSequence> out;
  out.reserve(static_cast<std::size_t>(num_sequences));
  for (int s = 0; s < num_sequences; ++s) {
    const auto phase = draw_phases(rng);
    KeypointSequence seq;
    seq.fps = fps;
    seq.source_id = "periodic_" + std::to_string(seed) + "_" + std::to_string(s);
    seq.frames.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) seq.frames.push_back(tpl.evaluate(t, phase));
    out.push_back(std::move(seq));
  }
  return out;
}

SwitchingDataset synth_switching_full(std::uint64_t seed, int num_sequences, int T, double fps, int num_regimes,
                                      double switch_prob, const SynthRanges& ranges) {
  check_common(num_sequences, T, fps);
  if (num_regimes < 2) throw InvalidArgument("num_regimes must be >= 2");
  if (!(switch_prob > 0.0 && switch_prob < 1.0)) throw InvalidArgument("switch_prob must lie in (0, 1)");

  Rng rng(seed);
  SwitchingDataset ds;
  for (int r = 0; r < num_regimes; ++r) ds.regimes.push_back(MotionTemplate::draw(rng, ranges));

  std::bernoulli_distribution switch_now(switch_prob);
  std::uniform_int_distribution<int> pick_start(0, num_regimes - 1);
  std::uniform_int_distribution<int> pick_other(0, num_regimes - 2);
  for (int s = 0; s < num_sequences; ++s) {
    const auto phase = draw_phases(rng);
    std::vector<int> path(static_cast<std::size_t>(T));
    int regime = pick_start(rng);
    KeypointSequence seq;
    seq.fps = fps;
    seq.source_id = "switching_" + std::to_string(seed) + "_" + std::to_string(s);
    seq.frames.reserve(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      if (t > 0 && switch_now(rng)) {
        const int other = pick_other(rng);
        regime = other >= regime ? other + 1 : other;
      }
      path[static_cast<std::size_t>(t)] = regime;
      seq.frames.push_back(ds.regimes[static_cast<std::size_t>(regime)].evaluate(t, phase));
    }
    ds.sequences.push_back(std::move(seq));
    ds.regime_paths.push_back(std::move(path));
  }
  return ds;
}

std::vector<KeypointSequence> synth_switching(std::uint64_t seed, int num_sequences, int T, double fps,
                                              int num_regimes, double switch_prob, const SynthRanges& ranges) {
  return synth_switching_full(seed, num_sequences, T, fps, num_regimes, switch_prob, ranges).sequences;
}

}  // namespace kpstream
