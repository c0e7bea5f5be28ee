#pragma once

#include <cstdint>
#include <vector>

#include "kpstream/keypoint.hpp"

namespace kpstream {

/// Parameter ranges for the synthetic motion templates.
struct SynthRanges {
  double center_min = -0.5, center_max = 0.5;
  double amplitude_min = 0.05, amplitude_max = 0.3;
  double omega_min = 0.05, omega_max = 0.5;  // rad/frame
  double scale_min = 0.7, scale_max = 1.3;
  double max_rotation = 0.5;  // rad, peak Jacobian rotation
  /// Multiplies every temporal oscillation; 0 yields constant sequences.
  double amplitude_scale = 1.0;
};

/// Smooth periodic motion of all ten keypoints. One motion template is drawn
/// per dataset; each sequence gets its own per-keypoint phase offsets.
/// Values are rounded to single precision so they survive the wire format.
struct MotionTemplate {
  struct Keypoint {
    Vector2 center;
    double amplitude = 0.0;
    double omega = 0.0;
    double phase_gap = 0.0;  // q - p
    double rot_amp = 0.0, rot_omega = 0.0;
    Vector2 scale_mid, scale_amp, scale_omega;
  };
  std::array<Keypoint, kNumKeypoints> keypoints;

  static MotionTemplate draw(Rng& rng, const SynthRanges& r);

  /// Frame at time t given per-keypoint phase offsets.
  KeypointFrame evaluate(double t, const std::array<double, kNumKeypoints>& phase) const;
};

/// Throws InvalidArgument when T < 4 or the other arguments are invalid.
std::vector<KeypointSequence> synth_periodic(std::uint64_t seed, int num_sequences, int T, double fps,
                                             const SynthRanges& ranges = {});

struct SwitchingDataset {
  std::vector<KeypointSequence> sequences;
  std::vector<MotionTemplate> regimes;
  /// regime_paths[s][t] is the active regime of sequence s at frame t.
  std::vector<std::vector<int>> regime_paths;
};

/// Hidden Markov switching among `num_regimes` motion templates. At every
/// frame after the first the regime changes with probability `switch_prob`
/// to one of the other regimes, chosen uniformly.
SwitchingDataset synth_switching_full(std::uint64_t seed, int num_sequences, int T, double fps, int num_regimes,
                                      double switch_prob, const SynthRanges& ranges = {});

std::vector<KeypointSequence> synth_switching(std::uint64_t seed, int num_sequences, int T, double fps,
                                              int num_regimes, double switch_prob, const SynthRanges& ranges = {});

}  // namespace kpstream
