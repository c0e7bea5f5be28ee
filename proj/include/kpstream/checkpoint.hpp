#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "kpstream/bytes.hpp"
#include "kpstream/keypoint.hpp"
#include "kpstream/params.hpp"

namespace kpstream {

enum class ModelKind { Rnn, Vae, Vrnn };

/// Four-byte tag stored in checkpoints: "RNN1", "VAE1" or "VRN1".
const char* kind_tag(ModelKind k);
/// Lower-case name used on the command line and in reports.
const char* kind_name(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

/// Binary container of named float64 tensors.
///
/// Layout (little-endian): "KPCK", u16 version, 4-byte model tag, u32 section
/// count, then per section: u16 name length, name bytes, u32 rows, u32 cols,
/// rows*cols float64 values in row-major order.
struct Checkpoint {
  static constexpr std::uint16_t kVersion = 1;

  ModelKind kind = ModelKind::Rnn;
  std::map<std::string, Matrix> sections;

  void put(const std::string& name, Matrix m) { sections[name] = std::move(m); }
  void put_scalar(const std::string& name, double v);
  void put_vector(const std::string& name, const std::vector<double>& v);

  const Matrix& get(const std::string& name) const;
  double scalar(const std::string& name) const;
  int integer(const std::string& name) const;
  std::vector<double> vector(const std::string& name) const;
  bool has(const std::string& name) const { return sections.count(name) != 0; }

  // Parameters live under "param.<name>"; normalisation under "norm.mean"/"norm.std".
  void put_params(const ParamStore& params);
  /// Overwrites every parameter in `params` from the checkpoint; shapes must match.
  void load_params(ParamStore& params) const;
  void put_stats(const NormalizationStats& s);
  NormalizationStats stats() const;
};

Bytes encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace kpstream
