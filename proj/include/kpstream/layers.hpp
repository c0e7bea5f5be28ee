#pragma once

#include <span>
#include <string>
#include <vector>

#include "kpstream/params.hpp"
#include "kpstream/tape.hpp"

namespace kpstream {

enum class Activation { Identity, Tanh, Relu };

const char* to_string(Activation a);
Activation activation_from_string(const std::string& s);

/// Explicit layer for the plain-Eigen evaluation path.
struct DenseLayerRef {
  const Matrix& weight;
  const Vector& bias;
  Activation activation;
};

/// Affine-then-activation composition over explicit weights.
Vector mlp_forward(std::span<const DenseLayerRef> layers, const Eigen::Ref<const Vector>& x);

ad::Var apply_activation(ad::Var x, Activation a);

/// A multilayer perceptron whose weights live in a ParamStore under
/// "<prefix>.l<i>.w" / "<prefix>.l<i>.b".
class Mlp {
 public:
  Mlp() = default;
  /// sizes = {in, hidden..., out}. Hidden layers use `hidden`; the last uses `output`.
  Mlp(ParamStore& store, const std::string& prefix, const std::vector<int>& sizes, Activation hidden,
      Activation output, Rng& rng);

  ad::Var forward(ad::Tape& tape, const ParamStore& store, ad::Var x) const;

  int input_dim() const { return sizes_.front(); }
  int output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return layers_.size(); }

  struct Layer {
    std::string weight;
    std::string bias;
    Activation activation;
  };
  const std::vector<Layer>& layers() const { return layers_; }

 private:
  std::vector<int> sizes_;
  std::vector<Layer> layers_;
};

enum class CellKind { Gated, SimpleTanh };

const char* to_string(CellKind k);
CellKind cell_kind_from_string(const std::string& s);

/// Recurrent update h' = f(x, h).
///
/// SimpleTanh: h' = tanh(Wx x + Wh h + b).
/// Gated (GRU):
///   u = sigmoid(Wu x + Uu h + bu), r = sigmoid(Wr x + Ur h + br)
///   n = tanh(Wn x + Un (r * h) + bn), h' = (1 - u) * n + u * h
class RecurrentCell {
 public:
  RecurrentCell() = default;
  RecurrentCell(ParamStore& store, const std::string& prefix, int input_dim, int hidden_dim, CellKind kind,
                Rng& rng);

  ad::Var step(ad::Tape& tape, const ParamStore& store, ad::Var x, ad::Var h) const;

  CellKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  const std::string& prefix() const { return prefix_; }

 private:
  ad::Var affine(ad::Tape& tape, const ParamStore& store, const std::string& gate, ad::Var x, ad::Var h) const;

  std::string prefix_;
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  CellKind kind_ = CellKind::Gated;
};

}  // namespace kpstream
