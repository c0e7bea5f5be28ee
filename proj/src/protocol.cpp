#include "kpstream/protocol.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>
#include <tuple>

namespace kpstream {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic = {'K', 'P', 'S', '1'};

}  // namespace

std::size_t BlockSchedule::frames_sent() const {
  std::size_t n = 0;
  for (const auto& s : spans)
    if (s.kind == SpanKind::Send) n += s.size();
  return n;
}

std::size_t BlockSchedule::frames_predicted() const { return length - frames_sent(); }

std::size_t BlockSchedule::complete_cycles() const {
  return static_cast<std::size_t>(std::count_if(spans.begin(), spans.end(),
                                                [](const Span& s) { return s.kind == SpanKind::Predict; }));
}

BlockSchedule schedule_blocks(std::size_t length, int k_in, int k_out) {
  if (length == 0) throw InvalidArgument("schedule_blocks: L must be at least 1");
  if (k_in < 1 || k_out < 1) throw InvalidArgument("schedule_blocks: k must be at least 1");
  BlockSchedule s;
  s.k_in = k_in;
  s.k_out = k_out;
  s.length = length;
  const auto kin = static_cast<std::size_t>(k_in);
  const auto kout = static_cast<std::size_t>(k_out);
  std::size_t pos = 0;
  while (length - pos >= kin + kout) {
    s.spans.push_back({SpanKind::Send, pos, pos + kin});
    s.spans.push_back({SpanKind::Predict, pos + kin, pos + kin + kout});
    pos += kin + kout;
  }
  if (pos < length) s.spans.push_back({SpanKind::Send, pos, length});
  return s;
}

void check_schedule(const BlockSchedule& s) {
  const auto kin = static_cast<std::size_t>(s.k_in);
  const auto kout = static_cast<std::size_t>(s.k_out);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < s.spans.size(); ++i) {
    const Span& sp = s.spans[i];
    const std::string where = "span " + std::to_string(i);
    if (sp.start != pos) throw Error(where + " starts at " + std::to_string(sp.start) + ", expected " + std::to_string(pos));
    if (sp.end <= sp.start) throw Error(where + " is empty");
    if (sp.kind == SpanKind::Predict) {
      if (sp.size() != kout) throw Error(where + " predicts " + std::to_string(sp.size()) + " frames");
      if (i == 0 || s.spans[i - 1].kind != SpanKind::Send || s.spans[i - 1].size() < kin) {
        throw Error(where + " is not preceded by a send span of at least k_in frames");
      }
    } else if (i + 1 == s.spans.size() && sp.size() >= kin + kout) {
      throw Error("trailing send span has " + std::to_string(sp.size()) + " frames, a full cycle fits");
    }
    pos = sp.end;
  }
  if (pos != s.length) throw Error("spans cover " + std::to_string(pos) + " of " + std::to_string(s.length) + " frames");
}

WireFrame WireFrame::key(std::uint64_t session, std::uint32_t index, const Eigen::Ref<const Vector>& values) {
  require_same_size(values.size(), kFrameDims, "WireFrame::key");
  WireFrame w;
  w.kind = FrameKind::Key;
  w.session_id = session;
  w.frame_index = index;
  w.payload.resize(kFrameDims);
  for (int i = 0; i < kFrameDims; ++i) w.payload[static_cast<std::size_t>(i)] = static_cast<float>(values(i));
  return w;
}

WireFrame WireFrame::skip(std::uint64_t session, std::uint32_t index) {
  WireFrame w;
  w.kind = FrameKind::Skip;
  w.session_id = session;
  w.frame_index = index;
  return w;
}

bool WireFrame::operator==(const WireFrame& o) const {
  return kind == o.kind && session_id == o.session_id && frame_index == o.frame_index &&
         payload.size() == o.payload.size() &&
         std::memcmp(payload.data(), o.payload.data(), payload.size() * sizeof(float)) == 0;
}

Bytes encode_frame(const WireFrame& w) {
  const bool key = w.kind == FrameKind::Key;
  if (!key && w.kind != FrameKind::Skip) throw InvalidArgument("encode_frame: unknown frame kind");
  if (key && w.payload.size() != static_cast<std::size_t>(kFrameDims)) {
    throw ShapeError("encode_frame: KEY payload has " + std::to_string(w.payload.size()) + " values, expected 60");
  }
  if (!key && !w.payload.empty()) throw ShapeError("encode_frame: SKIP frame carries a payload");
  Bytes out;
  out.reserve(key ? kKeyFrameBytes : kSkipFrameBytes);
  for (auto c : kMagic) out.push_back(c);
  out.push_back(static_cast<std::uint8_t>(w.kind));
  put_u64(out, w.session_id);
  put_u32(out, w.frame_index);
  for (float v : w.payload) put_f32(out, v);
  return out;
}

namespace {

WireFrame read_frame(ByteReader& r) {
  const auto magic = r.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), kMagic.begin())) throw DecodeError("bad magic: not a KPS1 frame");
  const std::uint8_t kind = r.u8("kind");
  if (kind > 1) throw DecodeError("unknown frame kind " + std::to_string(kind));
  WireFrame w;
  w.kind = static_cast<FrameKind>(kind);
  w.session_id = r.u64("session id");
  w.frame_index = r.u32("frame index");
  if (w.kind == FrameKind::Key) {
    w.payload.resize(kFrameDims);
    for (auto& v : w.payload) v = r.f32("payload");
  }
  return w;
}

}  // namespace

WireFrame decode_frame(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  WireFrame w = read_frame(r);
  if (r.remaining() != 0) throw DecodeError(std::to_string(r.remaining()) + " trailing bytes after frame");
  return w;
}

Bytes encode_transcript(const std::vector<WireFrame>& frames) {
  Bytes out;
  for (const auto& f : frames) {
    const Bytes b = encode_frame(f);
    out.insert(out.end(), b.begin(), b.end());
  }
  return out;
}

std::vector<WireFrame> decode_transcript(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  std::vector<WireFrame> out;
  while (r.remaining() > 0) out.push_back(read_frame(r));
  return out;
}

void save_transcript(const std::vector<Bytes>& encoded, const std::filesystem::path& path) {
  std::string data;
  for (const auto& b : encoded) data.append(reinterpret_cast<const char*>(b.data()), b.size());
  write_file_atomic(path, data);
}

std::vector<WireFrame> load_transcript(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  return decode_transcript(std::span(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

double TransmissionReport::mean_mse() const {
  if (frame_mse.empty()) throw InvalidArgument("no predicted frames to evaluate");
  double s = 0.0;
  for (double v : frame_mse) s += v;
  return s / static_cast<double>(frame_mse.size());
}

Sender::Sender(const Matrix& frames, BlockSchedule schedule, std::uint64_t session_id)
    : frames_(frames), session_id_(session_id) {
  if (schedule.length != static_cast<std::size_t>(frames.cols())) {
    throw ShapeError("schedule covers " + std::to_string(schedule.length) + " frames but the sequence has " +
                     std::to_string(frames.cols()));
  }
  kind_of_.resize(schedule.length);
  for (const auto& s : schedule.spans)
    for (std::size_t i = s.start; i < s.end; ++i) kind_of_[i] = s.kind;
}

Bytes Sender::next() {
  if (done()) throw Error("sender: stream exhausted");
  const auto i = next_++;
  const auto idx = static_cast<std::uint32_t>(i);
  if (kind_of_[i] == SpanKind::Send) {
    return encode_frame(WireFrame::key(session_id_, idx, frames_.col(static_cast<Eigen::Index>(i))));
  }
  return encode_frame(WireFrame::skip(session_id_, idx));
}

Receiver::Receiver(const BlockPredictor& predictor, const SessionOptions& opts, std::size_t length)
    : predictor_(predictor),
      opts_(opts),
      frames_(Matrix::Zero(kFrameDims, static_cast<Eigen::Index>(length))),
      received_key_(length, false) {
  if (predictor.frame_dim() != kFrameDims) {
    throw ShapeError("predictor '" + predictor.name() + "' works on " + std::to_string(predictor.frame_dim()) +
                     "-dim frames, keyframes have 60");
  }
  if (opts.k_out > predictor.max_horizon()) {
    throw InvalidArgument("predictor '" + predictor.name() + "' supports horizons up to " +
                          std::to_string(predictor.max_horizon()) + ", k_out is " + std::to_string(opts.k_out));
  }
}

void Receiver::receive(std::span<const std::uint8_t> bytes) {
  const WireFrame w = decode_frame(bytes);
  if (w.session_id != opts_.session_id) throw DecodeError("frame from session " + std::to_string(w.session_id));
  if (last_index_ && w.frame_index <= *last_index_) throw DecodeError("frame indices must increase");
  const std::size_t i = w.frame_index;
  if (i != available_) throw DecodeError("frame " + std::to_string(i) + " arrived out of order");
  if (i >= received_key_.size()) throw DecodeError("frame index past the end of the session");
  last_index_ = w.frame_index;

  if (w.kind == FrameKind::Key) {
    if (i < pending_end_) throw DecodeError("KEY frame inside a predicted block");
    for (int d = 0; d < kFrameDims; ++d) frames_(d, static_cast<Eigen::Index>(i)) = w.payload[static_cast<std::size_t>(d)];
    received_key_[i] = true;
  } else if (i >= pending_end_) {
    // First SKIP of a block: predict the whole block from what has been received.
    const auto kin = static_cast<std::size_t>(opts_.k_in);
    const std::size_t horizon = std::min<std::size_t>(static_cast<std::size_t>(opts_.k_out), received_key_.size() - i);
    std::size_t from = 0;
    if (!opts_.persistent_context) {
      if (i < kin) throw DecodeError("SKIP at frame " + std::to_string(i) + " before k_in frames were received");
      from = i - kin;
      for (std::size_t j = from; j < i; ++j)
        if (!received_key_[j]) throw DecodeError("context frame " + std::to_string(j) + " was not transmitted");
    }
    if (i == from) throw DecodeError("SKIP at frame 0 with no context");
    const Matrix context = frames_.middleCols(static_cast<Eigen::Index>(from), static_cast<Eigen::Index>(i - from));
    const Matrix pred = predictor_.predict({context, i, static_cast<int>(horizon)});
    if (pred.rows() != kFrameDims || pred.cols() != static_cast<Eigen::Index>(horizon)) {
      throw ShapeError("predictor '" + predictor_.name() + "' returned " + std::to_string(pred.rows()) + "x" +
                       std::to_string(pred.cols()) + " for a " + std::to_string(horizon) + "-frame block");
    }
    frames_.middleCols(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(horizon)) = pred;
    pending_end_ = i + horizon;
  }
  if (w.kind == FrameKind::Skip) predicted_.push_back(i);
  ++available_;
}

SessionResult simulate_session(const KeypointSequence& sequence, const BlockPredictor& predictor,
                               const SessionOptions& opts) {
  const Matrix truth = sequence.to_matrix();
  const std::size_t L = sequence.size();
  const BlockSchedule schedule = schedule_blocks(L, opts.k_in, opts.k_out);
  Sender sender(truth, schedule, opts.session_id);
  Receiver receiver(predictor, opts, L);

  SessionResult res;
  TransmissionReport& rep = res.report;
  rep.model = predictor.name();
  rep.k_in = opts.k_in;
  rep.k_out = opts.k_out;
  rep.length = L;
  rep.bytes_baseline = L * kKeyFrameBytes;

  std::deque<Bytes> channel;
  while (!sender.done()) {
    channel.push_back(sender.next());
    while (!channel.empty()) {
      const Bytes& b = channel.front();
      rep.bytes_sent += b.size();
      if (b.size() == kKeyFrameBytes) ++rep.frames_sent;
      receiver.receive(b);
      if (opts.keep_transcript) res.transcript.push_back(b);
      channel.pop_front();
    }
  }

  const Matrix& recon = receiver.frames();
  rep.predicted_indices = receiver.predicted_indices();
  rep.frames_predicted = rep.predicted_indices.size();
  rep.bandwidth_ratio = static_cast<double>(rep.bytes_sent) / static_cast<double>(rep.bytes_baseline);
  const NormalizationStats stats = opts.stats ? *opts.stats : NormalizationStats::identity(kFrameDims);
  for (std::size_t i : rep.predicted_indices) {
    const auto c = static_cast<Eigen::Index>(i);
    const Vector diff = normalize(recon.col(c), stats) - normalize(truth.col(c), stats);
    rep.frame_mse.push_back(diff.squaredNorm() / static_cast<double>(kFrameDims));
  }
  res.reconstructed = KeypointSequence::from_matrix(recon, sequence.fps, sequence.source_id, sequence.split);
  return res;
}

std::vector<BandwidthRow> bandwidth_summary(std::span<const TransmissionReport> reports) {
  if (reports.empty()) throw InvalidArgument("bandwidth_summary: no reports");
  struct Acc {
    BandwidthRow row;
    double ratio_sum = 0.0, mse_sum = 0.0;
    std::size_t mse_frames = 0, total = 0, sent = 0;
  };
  std::vector<Acc> accs;
  for (const auto& r : reports) {
    auto it = std::find_if(accs.begin(), accs.end(), [&](const Acc& a) {
      return a.row.model == r.model && a.row.k_in == r.k_in && a.row.k_out == r.k_out;
    });
    if (it == accs.end()) {
      accs.emplace_back();
      it = accs.end() - 1;
      it->row.model = r.model;
      it->row.k_in = r.k_in;
      it->row.k_out = r.k_out;
    }
    ++it->row.sessions;
    it->ratio_sum += r.bandwidth_ratio;
    for (double v : r.frame_mse) it->mse_sum += v;
    it->mse_frames += r.frame_mse.size();
    it->total += r.length;
    it->sent += r.frames_sent;
  }
  std::vector<BandwidthRow> out;
  for (auto& a : accs) {
    a.row.mean_bandwidth_ratio = a.ratio_sum / static_cast<double>(a.row.sessions);
    if (a.mse_frames > 0) a.row.mean_predicted_mse = a.mse_sum / static_cast<double>(a.mse_frames);
    a.row.savings_factor = static_cast<double>(a.total) / static_cast<double>(a.sent);
    out.push_back(a.row);
  }
  return out;
}

}  // namespace kpstream
