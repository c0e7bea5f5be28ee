#include "kpstream/checkpoint.hpp"

#include <cmath>

namespace kpstream {

const char* kind_tag(ModelKind k) {
  switch (k) {
    case ModelKind::Rnn: return "RNN1";
    case ModelKind::Vae: return "VAE1";
    case ModelKind::Vrnn: return "VRN1";
  }
  return "????";
}

const char* kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::Rnn: return "rnn";
    case ModelKind::Vae: return "vae";
    case ModelKind::Vrnn: return "vrnn";
  }
  return "?";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "rnn" || s == "RNN" || s == "RNN1") return ModelKind::Rnn;
  if (s == "vae" || s == "VAE" || s == "VAE1") return ModelKind::Vae;
  if (s == "vrnn" || s == "VRNN" || s == "VRN1") return ModelKind::Vrnn;
  throw InvalidArgument("unknown model kind '" + s + "'");
}

void Checkpoint::put_scalar(const std::string& name, double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  put(name, std::move(m));
}

void Checkpoint::put_vector(const std::string& name, const std::vector<double>& v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  put(name, std::move(m));
}

const Matrix& Checkpoint::get(const std::string& name) const {
  auto it = sections.find(name);
  if (it == sections.end()) throw DecodeError("checkpoint has no section '" + name + "'");
  return it->second;
}

double Checkpoint::scalar(const std::string& name) const {
  const Matrix& m = get(name);
  if (m.size() != 1) throw DecodeError("checkpoint section '" + name + "' is not a scalar");
  return m(0, 0);
}

int Checkpoint::integer(const std::string& name) const {
  const double v = scalar(name);
  if (v != std::floor(v)) throw DecodeError("checkpoint section '" + name + "' is not an integer");
  return static_cast<int>(v);
}

std::vector<double> Checkpoint::vector(const std::string& name) const {
  const Matrix& m = get(name);
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

void Checkpoint::put_params(const ParamStore& params) {
  for (const auto& [name, p] : params) put("param." + name, p.value);
}

void Checkpoint::load_params(ParamStore& params) const {
  for (auto& [name, p] : params) {
    const Matrix& m = get("param." + name);
    if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
      throw DecodeError("checkpoint parameter '" + name + "' has the wrong shape");
    }
    p.value = m;
  }
}

void Checkpoint::put_stats(const NormalizationStats& s) {
  put("norm.mean", s.mean);
  put("norm.std", s.std);
}

NormalizationStats Checkpoint::stats() const {
  NormalizationStats s;
  s.mean = get("norm.mean");
  s.std = get("norm.std");
  s.computed_over = "checkpoint";
  if (s.mean.size() != s.std.size()) throw DecodeError("checkpoint normalisation stats disagree in size");
  return s;
}

Bytes encode_checkpoint(const Checkpoint& c) {
  Bytes out;
  for (char ch : std::string("KPCK")) out.push_back(static_cast<std::uint8_t>(ch));
  put_u16(out, Checkpoint::kVersion);
  for (const char* p = kind_tag(c.kind); *p; ++p) out.push_back(static_cast<std::uint8_t>(*p));
  put_u32(out, static_cast<std::uint32_t>(c.sections.size()));
  for (const auto& [name, m] : c.sections) {
    if (name.size() > 0xFFFF) throw InvalidArgument("checkpoint section name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index col = 0; col < m.cols(); ++col) put_f64(out, m(r, col));
    }
  }
  return out;
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto magic = in.take(4, "magic");
  if (std::string(magic.begin(), magic.end()) != "KPCK") throw DecodeError("not a checkpoint: bad magic");
  const auto version = in.u16("version");
  if (version != Checkpoint::kVersion) {
    throw DecodeError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto tag = in.take(4, "model tag");
  Checkpoint c;
  c.kind = model_kind_from_string(std::string(tag.begin(), tag.end()));
  const auto count = in.u32("section count");
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = in.u16("section name length");
    const auto name_bytes = in.take(len, "section name");
    std::string name(name_bytes.begin(), name_bytes.end());
    const auto rows = in.u32("rows");
    const auto cols = in.u32("cols");
    if (static_cast<std::uint64_t>(rows) * cols * 8 > in.remaining()) {
      throw DecodeError("truncated payload in section '" + name + "'");
    }
    Matrix m(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t col = 0; col < cols; ++col) m(r, col) = in.f64("payload");
    }
    c.sections.emplace(std::move(name), std::move(m));
  }
  if (in.remaining() != 0) throw DecodeError("trailing bytes after checkpoint sections");
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  const Bytes b = encode_checkpoint(c);
  write_file_atomic(path, std::string(b.begin(), b.end()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  const std::string s = read_file(path);
  return decode_checkpoint(std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace kpstream
