#include "kpstream/keypoint.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

namespace kpstream {

KeypointFrame KeypointFrame::identity() {
  KeypointFrame f;
  for (int i = 0; i < kNumKeypoints; ++i) {
    f.coords[i].setZero();
    f.jacobians[i].setIdentity();
  }
  return f;
}

bool KeypointFrame::is_finite() const {
  for (int i = 0; i < kNumKeypoints; ++i) {
    if (!coords[i].allFinite() || !jacobians[i].allFinite()) return false;
  }
  return true;
}

bool KeypointFrame::operator==(const KeypointFrame& other) const {
  for (int i = 0; i < kNumKeypoints; ++i) {
    if (coords[i] != other.coords[i] || jacobians[i] != other.jacobians[i]) return false;
  }
  return true;
}

FrameVector flatten_frame(const KeypointFrame& f) {
  FrameVector v;
  for (int i = 0; i < kNumKeypoints; ++i) {
    v[2 * i] = f.coords[i].x();
    v[2 * i + 1] = f.coords[i].y();
    const Matrix2& j = f.jacobians[i];
    v[kCoordDims + 4 * i + 0] = j(0, 0);
    v[kCoordDims + 4 * i + 1] = j(0, 1);
    v[kCoordDims + 4 * i + 2] = j(1, 0);
    v[kCoordDims + 4 * i + 3] = j(1, 1);
  }
  return v;
}

KeypointFrame unflatten_frame(const Eigen::Ref<const Vector>& v) {
  if (v.size() != kFrameDims) {
    throw ShapeError("unflatten_frame: expected " + std::to_string(kFrameDims) + " entries, got " +
                     std::to_string(v.size()));
  }
  KeypointFrame f;
  for (int i = 0; i < kNumKeypoints; ++i) {
    f.coords[i] = Vector2(v[2 * i], v[2 * i + 1]);
    f.jacobians[i] << v[kCoordDims + 4 * i + 0], v[kCoordDims + 4 * i + 1],
        v[kCoordDims + 4 * i + 2], v[kCoordDims + 4 * i + 3];
  }
  return f;
}

const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  throw ParseError("unknown split tag '" + s + "'");
}

Matrix KeypointSequence::to_matrix() const {
  Matrix m(kFrameDims, static_cast<Eigen::Index>(frames.size()));
  for (std::size_t t = 0; t < frames.size(); ++t) m.col(static_cast<Eigen::Index>(t)) = flatten_frame(frames[t]);
  return m;
}

KeypointSequence KeypointSequence::from_matrix(const Matrix& m, double fps, std::string source_id,
                                               Split split) {
  if (m.rows() != kFrameDims) throw ShapeError("from_matrix: expected 60 rows");
  KeypointSequence seq;
  seq.fps = fps;
  seq.source_id = std::move(source_id);
  seq.split = split;
  seq.frames.reserve(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index t = 0; t < m.cols(); ++t) seq.frames.push_back(unflatten_frame(m.col(t)));
  return seq;
}

void validate(const KeypointSequence& seq) {
  if (seq.frames.empty()) throw InvalidArgument("sequence '" + seq.source_id + "' has no frames");
  if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) {
    throw InvalidArgument("sequence '" + seq.source_id + "' has non-positive fps");
  }
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    if (!seq.frames[t].is_finite()) throw ParseError("non-finite keypoint value", static_cast<long>(t));
  }
}

NormalizationStats NormalizationStats::identity(Eigen::Index dim) {
  return {Vector::Zero(dim), Vector::Ones(dim), "identity"};
}

NormalizationStats compute_stats(std::span<const KeypointSequence> seqs, std::string computed_over) {
  Vector sum = Vector::Zero(kFrameDims);
  Vector sq = Vector::Zero(kFrameDims);
  std::size_t n = 0;
  for (const auto& s : seqs) {
    for (const auto& f : s.frames) {
      const FrameVector v = flatten_frame(f);
      sum += v;
      n += 1;
    }
  }
  if (n == 0) throw InvalidArgument("compute_stats: no frames");
  const Vector mean = sum / static_cast<double>(n);
  // Second pass keeps the variance numerically clean for near-constant dims.
  for (const auto& s : seqs) {
    for (const auto& f : s.frames) sq += (flatten_frame(f) - mean).cwiseAbs2();
  }
  Vector std = (sq / static_cast<double>(n)).cwiseSqrt().cwiseMax(NormalizationStats::kStdFloor);
  return {mean, std, std::move(computed_over)};
}

namespace {

void check_stats(Eigen::Index n, const NormalizationStats& s) {
  require_same_size(n, s.mean.size(), "normalize");
  require_same_size(n, s.std.size(), "normalize");
  if ((s.std.array() <= 0.0).any()) throw InvalidArgument("normalization std must be positive");
}

}  // namespace

Vector normalize(const Eigen::Ref<const Vector>& v, const NormalizationStats& s) {
  check_stats(v.size(), s);
  if (!v.allFinite()) throw InvalidArgument("normalize: non-finite input");
  return (v - s.mean).cwiseQuotient(s.std);
}

Vector denormalize(const Eigen::Ref<const Vector>& v, const NormalizationStats& s) {
  check_stats(v.size(), s);
  if (!v.allFinite()) throw InvalidArgument("denormalize: non-finite input");
  return v.cwiseProduct(s.std) + s.mean;
}

Matrix normalize_columns(const Matrix& m, const NormalizationStats& s) {
  check_stats(m.rows(), s);
  if (!m.allFinite()) throw InvalidArgument("normalize: non-finite input");
  return (m.colwise() - s.mean).array().colwise() / s.std.array();
}

Matrix denormalize_columns(const Matrix& m, const NormalizationStats& s) {
  check_stats(m.rows(), s);
  return (m.array().colwise() * s.std.array()).matrix().colwise() + s.mean;
}

std::string format_double(double v) { return fmt::format("{}", v); }

namespace {

double parse_double(std::string_view tok, long frame) {
  double out = 0.0;
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if (!tok.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("malformed number '" + std::string(tok) + "'", frame);
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

}  // namespace

std::vector<KeypointSequence> parse_sequences(const std::string& text) {
  std::vector<KeypointSequence> out;
  std::istringstream in(text);
  std::string line;
  long line_no = 0;
  auto next_line = [&](std::string& l) {
    while (std::getline(in, l)) {
      ++line_no;
      if (!split_ws(l).empty()) return true;
    }
    return false;
  };
  while (next_line(line)) {
    const auto head = split_ws(line);
    if (head.size() != 5 || head[0] != "KPSEQ") {
      throw ParseError("malformed header at line " + std::to_string(line_no));
    }
    if (head[1] != "v1") throw ParseError("unsupported version '" + std::string(head[1]) + "'");
    long num_frames = 0;
    {
      auto [p, ec] = std::from_chars(head[2].data(), head[2].data() + head[2].size(), num_frames);
      if (ec != std::errc() || p != head[2].data() + head[2].size() || num_frames < 1) {
        throw ParseError("malformed frame count at line " + std::to_string(line_no));
      }
    }
    KeypointSequence seq;
    seq.fps = parse_double(head[3], -1);
    if (!(seq.fps > 0.0) || !std::isfinite(seq.fps)) throw ParseError("fps must be positive");
    seq.source_id = std::string(head[4]);
    seq.frames.reserve(static_cast<std::size_t>(num_frames));
    Vector v(kFrameDims);
    for (long t = 0; t < num_frames; ++t) {
      if (!next_line(line)) throw ParseError("unexpected end of file", t);
      const auto toks = split_ws(line);
      if (toks.size() != static_cast<std::size_t>(kFrameDims)) {
        const std::string kp = toks.size() % 6 == 0 ? std::to_string(toks.size() / 6) + " keypoints"
                                                    : std::to_string(toks.size()) + " values";
        throw ParseError("shape error: frame has " + kp + ", expected " + std::to_string(kNumKeypoints) +
                             " keypoints (" + std::to_string(kFrameDims) + " values)",
                         t);
      }
      for (int i = 0; i < kFrameDims; ++i) v[i] = parse_double(toks[static_cast<std::size_t>(i)], t);
      if (!v.allFinite()) throw ParseError("non-finite keypoint value", t);
      seq.frames.push_back(unflatten_frame(v));
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<KeypointSequence> load_sequences(const std::filesystem::path& path) {
  return parse_sequences(read_file(path));
}

std::string format_sequences(std::span<const KeypointSequence> seqs) {
  std::string out;
  for (const auto& s : seqs) {
    validate(s);
    if (s.source_id.empty() || s.source_id.find_first_of(" \t\r\n") != std::string::npos) {
      throw InvalidArgument("source_id must be a non-empty token without whitespace");
    }
    out += fmt::format("KPSEQ v1 {} {} {}\n", s.frames.size(), format_double(s.fps), s.source_id);
    for (const auto& f : s.frames) {
      const FrameVector v = flatten_frame(f);
      for (int i = 0; i < kFrameDims; ++i) {
        if (i) out += ' ';
        out += format_double(v[i]);
      }
      out += '\n';
    }
  }
  return out;
}

void save_sequences(std::span<const KeypointSequence> seqs, const std::filesystem::path& path) {
  write_file_atomic(path, format_sequences(seqs));
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

std::string join_vector(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += format_double(v[i]);
  }
  return s;
}

Vector parse_vector(const std::string& s) {
  const auto toks = split_ws(s);
  Vector v(static_cast<Eigen::Index>(toks.size()));
  for (std::size_t i = 0; i < toks.size(); ++i) v[static_cast<Eigen::Index>(i)] = parse_double(toks[i], -1);
  return v;
}

}  // namespace

std::string format_manifest(const DatasetManifest& m) {
  std::string out;
  out += "name=" + m.name + "\n";
  out += "kind=" + m.kind + "\n";
  if (m.seed) out += "seed=" + std::to_string(*m.seed) + "\n";
  for (const auto& [k, v] : m.extras) out += k + "=" + v + "\n";
  out += "sequences=" + std::to_string(m.entries.size()) + "\n";
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    out += fmt::format("sequence.{}.path={}\n", i, m.entries[i].path.generic_string());
    out += fmt::format("sequence.{}.split={}\n", i, to_string(m.entries[i].split));
  }
  out += "norm.computed_over=" + m.stats.computed_over + "\n";
  out += "norm.mean=" + join_vector(m.stats.mean) + "\n";
  out += "norm.std=" + join_vector(m.stats.std) + "\n";
  return out;
}

void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
  write_file_atomic(path, format_manifest(m));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  std::map<std::string, std::string> kv;
  std::vector<std::string> order;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("manifest: line without '=': " + line);
    auto key = line.substr(0, eq);
    if (!kv.count(key)) order.push_back(key);
    kv[key] = line.substr(eq + 1);
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw ParseError("manifest: missing key '" + key + "'");
    return it->second;
  };

  DatasetManifest m;
  m.base_dir = path.parent_path();
  m.name = need("name");
  m.kind = need("kind");
  if (kv.count("seed")) m.seed = std::stoull(kv["seed"]);
  const std::size_t n = std::stoul(need("sequences"));
  for (std::size_t i = 0; i < n; ++i) {
    DatasetManifest::Entry e;
    e.path = need(fmt::format("sequence.{}.path", i));
    e.split = split_from_string(need(fmt::format("sequence.{}.split", i)));
    m.entries.push_back(e);
  }
  m.stats.computed_over = need("norm.computed_over");
  m.stats.mean = parse_vector(need("norm.mean"));
  m.stats.std = parse_vector(need("norm.std"));
  if (m.stats.mean.size() != kFrameDims || m.stats.std.size() != kFrameDims) {
    throw ParseError("manifest: normalization stats must have 60 entries");
  }
  if ((m.stats.std.array() <= 0.0).any()) throw ParseError("manifest: std entries must be positive");
  for (const auto& key : order) {
    if (key == "name" || key == "kind" || key == "seed" || key == "sequences" || key.rfind("sequence.", 0) == 0 ||
        key.rfind("norm.", 0) == 0) {
      continue;
    }
    m.extras.emplace_back(key, kv[key]);
  }
  for (const auto& e : m.entries) {
    const auto full = m.base_dir / e.path;
    if (!std::filesystem::exists(full)) throw IoError("manifest references missing file '" + full.string() + "'");
    for (const auto& s : load_sequences(full)) validate(s);
  }
  return m;
}

std::vector<KeypointSequence> DatasetManifest::load_split(Split split) const {
  std::vector<KeypointSequence> out;
  for (const auto& e : entries) {
    if (e.split != split) continue;
    for (auto& s : load_sequences(base_dir / e.path)) {
      s.split = split;
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<KeypointSequence> DatasetManifest::load_all() const {
  std::vector<KeypointSequence> out;
  for (const auto& e : entries) {
    for (auto& s : load_sequences(base_dir / e.path)) {
      s.split = e.split;
      out.push_back(std::move(s));
    }
  }
  return out;
}

}  // namespace kpstream
