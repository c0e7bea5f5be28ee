#include <cmath>

#include <Eigen/LU>
#include <gtest/gtest.h>

#include "kpstream/synth.hpp"

using namespace kpstream;

TEST(Periodic, Deterministic) {
  const auto a = synth_periodic(7, 5, 40, 30.0);
  const auto b = synth_periodic(7, 5, 40, 30.0);
  EXPECT_EQ(format_sequences(a), format_sequences(b));
  const auto c = synth_periodic(8, 5, 40, 30.0);
  EXPECT_NE(format_sequences(a), format_sequences(c));
}

TEST(Periodic, RejectsShortSequences) {
  EXPECT_THROW(synth_periodic(1, 2, 3, 30.0), InvalidArgument);
  EXPECT_NO_THROW(synth_periodic(1, 2, 4, 30.0));
}

TEST(Periodic, CoordinatesInsideUnitBox) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& s : synth_periodic(seed, 10, 200, 30.0)) {
      const Matrix m = s.to_matrix();
      EXPECT_LE(m.topRows(kCoordDims).cwiseAbs().maxCoeff(), 1.0);
    }
  }
}

TEST(Periodic, ValuesSurviveSinglePrecision) {
  for (const auto& s : synth_periodic(3, 4, 50, 30.0)) {
    const Matrix m = s.to_matrix();
    EXPECT_EQ(m, m.cast<float>().cast<double>());
  }
}

TEST(Periodic, JacobiansNearIdentityScale) {
  for (const auto& s : synth_periodic(5, 4, 100, 30.0)) {
    for (const auto& f : s.frames) {
      for (const auto& j : f.jacobians) {
        const double det = j.determinant();
        EXPECT_GT(det, 0.7 * 0.7 - 1e-6);
        EXPECT_LT(det, 1.3 * 1.3 + 1e-6);
      }
    }
  }
}

TEST(Periodic, ZeroAmplitudeGivesConstantSequences) {
  SynthRanges r;
  r.amplitude_scale = 0.0;
  const auto seqs = synth_periodic(2, 3, 30, 30.0, r);
  const Matrix first = seqs[0].to_matrix();
  for (const auto& s : seqs) {
    const Matrix m = s.to_matrix();
    for (Eigen::Index t = 0; t < m.cols(); ++t) EXPECT_EQ(m.col(t), first.col(0));
  }
}

TEST(Periodic, AllSequencesValidate) {
  for (const auto& s : synth_periodic(12, 6, 20, 30.0)) EXPECT_NO_THROW(validate(s));
}

TEST(Switching, RejectsBadParameters) {
  EXPECT_THROW(synth_switching(1, 2, 20, 30.0, 1, 0.1), InvalidArgument);
  EXPECT_THROW(synth_switching(1, 2, 20, 30.0, 3, 0.0), InvalidArgument);
  EXPECT_THROW(synth_switching(1, 2, 20, 30.0, 3, 1.0), InvalidArgument);
  EXPECT_THROW(synth_switching(1, 2, 3, 30.0, 3, 0.1), InvalidArgument);
}

TEST(Switching, DeterministicRegimePaths) {
  const auto a = synth_switching_full(9, 10, 80, 30.0, 3, 0.1);
  const auto b = synth_switching_full(9, 10, 80, 30.0, 3, 0.1);
  EXPECT_EQ(a.regime_paths, b.regime_paths);
  EXPECT_EQ(format_sequences(a.sequences), format_sequences(b.sequences));
}

TEST(Switching, VanishingProbabilityKeepsOneRegime) {
  const auto ds = synth_switching_full(4, 50, 100, 30.0, 3, 1e-12);
  for (const auto& path : ds.regime_paths) {
    for (int r : path) EXPECT_EQ(r, path.front());
  }
}

TEST(Switching, SwitchesAlwaysChangeRegime) {
  const auto ds = synth_switching_full(6, 20, 100, 30.0, 4, 0.3);
  for (const auto& path : ds.regime_paths) {
    for (int r : path) {
      EXPECT_GE(r, 0);
      EXPECT_LT(r, 4);
    }
  }
}

TEST(Switching, ExpectedSwitchCountWithinThreeSigma) {
  const int n = 1000, T = 120;
  const double p = 0.05;
  const auto ds = synth_switching_full(21, n, T, 30.0, 3, p);
  long switches = 0;
  for (const auto& path : ds.regime_paths)
    for (int t = 1; t < T; ++t) switches += path[t] != path[t - 1];
  const double trials = static_cast<double>(n) * (T - 1);
  const double expected = p * trials;
  const double sigma = std::sqrt(trials * p * (1 - p));
  EXPECT_LT(std::abs(switches - expected), 3 * sigma);
}

TEST(Switching, FramesFollowActiveRegime) {
  // Position jumps coincide with regime changes: within a regime the motion
  // is smooth, so large steps only occur at switches.
  const auto ds = synth_switching_full(13, 20, 120, 30.0, 3, 0.05);
  double max_smooth_step = 0.0;
  for (std::size_t s = 0; s < ds.sequences.size(); ++s) {
    const Matrix m = ds.sequences[s].to_matrix();
    for (Eigen::Index t = 1; t < m.cols(); ++t) {
      if (ds.regime_paths[s][t] == ds.regime_paths[s][t - 1]) {
        max_smooth_step = std::max(max_smooth_step, (m.col(t) - m.col(t - 1)).topRows(kCoordDims).cwiseAbs().maxCoeff());
      }
    }
  }
  // |d/dt A sin(wt)| <= A w <= 0.3 * 0.5
  EXPECT_LE(max_smooth_step, 0.15 + 1e-6);
}
