#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kpstream/types.hpp"

namespace kpstream {

inline constexpr int kNumKeypoints = 10;
inline constexpr int kCoordDims = 2 * kNumKeypoints;     // 20
inline constexpr int kJacobianDims = 4 * kNumKeypoints;  // 40
inline constexpr int kFrameDims = kCoordDims + kJacobianDims;

using FrameVector = Eigen::Matrix<double, kFrameDims, 1>;

/// One frame of keypoints: a 2D location and a local 2x2 affine Jacobian per keypoint.
struct KeypointFrame {
  std::array<Vector2, kNumKeypoints> coords;
  std::array<Matrix2, kNumKeypoints> jacobians;

  /// All-zero coordinates with identity Jacobians.
  static KeypointFrame identity();

  bool is_finite() const;
  bool operator==(const KeypointFrame& other) const;
};

/// Canonical layout: entries [2i, 2i+1] hold (x, y) of keypoint i, entries
/// [20+4i, 20+4i+3] hold its Jacobian in row-major order.
FrameVector flatten_frame(const KeypointFrame& f);
KeypointFrame unflatten_frame(const Eigen::Ref<const Vector>& v);

enum class Split { Train, Test };

const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct KeypointSequence {
  std::vector<KeypointFrame> frames;
  double fps = 30.0;
  std::string source_id = "unnamed";
  Split split = Split::Train;

  std::size_t size() const { return frames.size(); }

  /// Frames as columns of a 60 x T matrix.
  Matrix to_matrix() const;
  static KeypointSequence from_matrix(const Matrix& m, double fps, std::string source_id,
                                      Split split = Split::Train);
};

/// Throws ParseError naming the offending frame if any entry is non-finite,
/// or InvalidArgument if the sequence is empty or its metadata is invalid.
void validate(const KeypointSequence& seq);

struct NormalizationStats {
  Vector mean;
  Vector std;
  std::string computed_over;

  static constexpr double kStdFloor = 1e-6;

  Eigen::Index dim() const { return mean.size(); }

  /// mean = 0, std = 1 in `dim` dimensions.
  static NormalizationStats identity(Eigen::Index dim);
};

/// Per-dimension z-score statistics over every frame of `seqs`; std floored at 1e-6.
NormalizationStats compute_stats(std::span<const KeypointSequence> seqs, std::string computed_over);

Vector normalize(const Eigen::Ref<const Vector>& v, const NormalizationStats& s);
Vector denormalize(const Eigen::Ref<const Vector>& v, const NormalizationStats& s);
/// Column-wise versions.
Matrix normalize_columns(const Matrix& m, const NormalizationStats& s);
Matrix denormalize_columns(const Matrix& m, const NormalizationStats& s);

// Sequence file ("KPSEQ v1"): any number of blocks, each a header line
//   KPSEQ v1 <num_frames> <fps> <source_id>
// followed by num_frames lines of 60 space-separated decimals in flatten order.
std::vector<KeypointSequence> load_sequences(const std::filesystem::path& path);
std::vector<KeypointSequence> parse_sequences(const std::string& text);
void save_sequences(std::span<const KeypointSequence> seqs, const std::filesystem::path& path);
std::string format_sequences(std::span<const KeypointSequence> seqs);

/// Shortest decimal string that parses back to exactly `v`.
std::string format_double(double v);

struct DatasetManifest {
  struct Entry {
    std::filesystem::path path;  // relative to the manifest directory
    Split split = Split::Train;
  };

  std::string name;
  std::string kind;  // generator name or "external"
  std::optional<std::uint64_t> seed;
  std::vector<Entry> entries;
  NormalizationStats stats;
  /// Extra generator parameters, written back verbatim.
  std::vector<std::pair<std::string, std::string>> extras;

  /// Resolved at load time; entry paths are relative to it.
  std::filesystem::path base_dir;

  std::vector<KeypointSequence> load_split(Split split) const;
  std::vector<KeypointSequence> load_all() const;
};

std::string format_manifest(const DatasetManifest& m);
/// Parses and validates: every referenced file must exist and load cleanly.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Writes `contents` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace kpstream
