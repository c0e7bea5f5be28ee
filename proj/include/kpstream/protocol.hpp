#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kpstream/bytes.hpp"
#include "kpstream/keypoint.hpp"
#include "kpstream/predictor.hpp"

namespace kpstream {

// ---------------------------------------------------------------------------
// Block schedule

enum class SpanKind { Send, Predict };

struct Span {
  SpanKind kind;
  std::size_t start;
  std::size_t end;  // exclusive
  std::size_t size() const { return end - start; }
  bool operator==(const Span&) const = default;
};

struct BlockSchedule {
  std::vector<Span> spans;
  int k_in = 0;
  int k_out = 0;
  std::size_t length = 0;

  std::size_t frames_sent() const;
  std::size_t frames_predicted() const;
  std::size_t complete_cycles() const;
};

/// Greedy left-to-right: while at least k_in + k_out frames remain, send k_in
/// and predict k_out; whatever is left (< k_in + k_out) is sent as a final span.
BlockSchedule schedule_blocks(std::size_t length, int k_in, int k_out);
inline BlockSchedule schedule_blocks(std::size_t length, int k) { return schedule_blocks(length, k, k); }

/// Throws Error describing the first violated invariant: spans partition
/// [0, L); every predict span has length k_out and follows a send span of at
/// least k_in frames; a trailing send span is shorter than k_in + k_out.
void check_schedule(const BlockSchedule& s);

// ---------------------------------------------------------------------------
// Wire codec
//
// "KPS1" | kind u8 (0 = KEY, 1 = SKIP) | session id u64 | frame index u32 |
// KEY only: 60 x f32. Little-endian throughout.

enum class FrameKind : std::uint8_t { Key = 0, Skip = 1 };

inline constexpr std::size_t kWireHeaderBytes = 4 + 1 + 8 + 4;
inline constexpr std::size_t kKeyFrameBytes = kWireHeaderBytes + 4 * kFrameDims;
inline constexpr std::size_t kSkipFrameBytes = kWireHeaderBytes;

struct WireFrame {
  FrameKind kind = FrameKind::Skip;
  std::uint64_t session_id = 0;
  std::uint32_t frame_index = 0;
  std::vector<float> payload;  // 60 values for KEY, empty for SKIP

  static WireFrame key(std::uint64_t session, std::uint32_t index, const Eigen::Ref<const Vector>& values);
  static WireFrame skip(std::uint64_t session, std::uint32_t index);

  /// Bitwise equality, so NaN payloads compare by representation.
  bool operator==(const WireFrame& other) const;
};

Bytes encode_frame(const WireFrame& w);
/// Decodes exactly one frame; throws DecodeError on bad magic, unknown kind,
/// truncation or trailing bytes.
WireFrame decode_frame(std::span<const std::uint8_t> bytes);

/// Concatenated encoded frames, as written to a session log.
Bytes encode_transcript(const std::vector<WireFrame>& frames);
std::vector<WireFrame> decode_transcript(std::span<const std::uint8_t> bytes);
void save_transcript(const std::vector<Bytes>& encoded, const std::filesystem::path& path);
std::vector<WireFrame> load_transcript(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Session simulation

struct SessionOptions {
  int k_in = 6;
  int k_out = 6;
  std::uint64_t session_id = 1;
  /// When set, each prediction sees every frame the receiver holds instead of
  /// only the preceding k_in ground-truth frames.
  bool persistent_context = false;
  /// Statistics for the per-frame error; identity when absent.
  std::optional<NormalizationStats> stats;
  bool keep_transcript = false;
};

struct TransmissionReport {
  std::string model;
  int k_in = 0;
  int k_out = 0;
  std::size_t length = 0;
  std::size_t frames_sent = 0;
  std::size_t frames_predicted = 0;
  std::size_t bytes_sent = 0;
  std::size_t bytes_baseline = 0;
  double bandwidth_ratio = 1.0;
  /// Normalised-space MSE of each predicted frame, in stream order.
  std::vector<double> frame_mse;
  std::vector<std::size_t> predicted_indices;

  double frame_ratio() const { return static_cast<double>(frames_sent) / static_cast<double>(length); }
  double savings_factor() const { return static_cast<double>(length) / static_cast<double>(frames_sent); }
  /// Mean over predicted frames; throws InvalidArgument if nothing was predicted.
  double mean_mse() const;
};

/// Emits one wire frame per stream frame following the schedule.
class Sender {
 public:
  Sender(const Matrix& frames, BlockSchedule schedule, std::uint64_t session_id);
  bool done() const { return next_ >= static_cast<std::size_t>(frames_.cols()); }
  Bytes next();

 private:
  const Matrix& frames_;
  std::vector<SpanKind> kind_of_;
  std::uint64_t session_id_;
  std::size_t next_ = 0;
};

/// Rebuilds the stream from wire frames, filling skipped blocks with the
/// predictor. Frames must arrive in order.
class Receiver {
 public:
  Receiver(const BlockPredictor& predictor, const SessionOptions& opts, std::size_t length);
  void receive(std::span<const std::uint8_t> bytes);

  /// Frames held so far (received or predicted).
  std::size_t frames_available() const { return available_; }
  const Matrix& frames() const { return frames_; }
  const std::vector<std::size_t>& predicted_indices() const { return predicted_; }

 private:
  const BlockPredictor& predictor_;
  SessionOptions opts_;
  Matrix frames_;
  std::vector<bool> received_key_;
  std::size_t available_ = 0;
  std::size_t pending_end_ = 0;  // predicted frames buffered up to here
  std::vector<std::size_t> predicted_;
  std::optional<std::uint32_t> last_index_;
};

struct SessionResult {
  KeypointSequence reconstructed;
  TransmissionReport report;
  std::vector<Bytes> transcript;
};

/// Runs sender and receiver over a lossless in-order channel.
SessionResult simulate_session(const KeypointSequence& sequence, const BlockPredictor& predictor,
                               const SessionOptions& opts);

struct BandwidthRow {
  std::string model;
  int k_in = 0;
  int k_out = 0;
  std::size_t sessions = 0;
  double mean_bandwidth_ratio = 0.0;
  /// Frame-weighted mean over every predicted frame; nullopt if none were predicted.
  std::optional<double> mean_predicted_mse;
  /// Total frames over total frames sent.
  double savings_factor = 1.0;
};

/// Groups by (model, k_in, k_out), in first-seen order.
std::vector<BandwidthRow> bandwidth_summary(std::span<const TransmissionReport> reports);

}  // namespace kpstream
