#include "kpstream/layers.hpp"

namespace kpstream {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw InvalidArgument("unknown activation '" + s + "'");
}

Vector mlp_forward(std::span<const DenseLayerRef> layers, const Eigen::Ref<const Vector>& x) {
  Vector h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.cols() != h.size() || l.weight.rows() != l.bias.size()) {
      throw ShapeError("mlp_forward: shape mismatch at layer " + std::to_string(i));
    }
    Vector a = l.weight * h + l.bias;
    switch (l.activation) {
      case Activation::Identity: break;
      case Activation::Tanh: a = a.array().tanh().matrix(); break;
      case Activation::Relu: a = a.cwiseMax(0.0); break;
    }
    h = std::move(a);
  }
  return h;
}

ad::Var apply_activation(ad::Var x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Tanh: return ad::tanh(x);
    case Activation::Relu: return ad::relu(x);
  }
  return x;
}

Mlp::Mlp(ParamStore& store, const std::string& prefix, const std::vector<int>& sizes, Activation hidden,
         Activation output, Rng& rng)
    : sizes_(sizes) {
  if (sizes.size() < 2) throw InvalidArgument("Mlp '" + prefix + "' needs at least input and output sizes");
  for (int s : sizes) {
    if (s <= 0) throw InvalidArgument("Mlp '" + prefix + "' has a non-positive layer size");
  }
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    Layer l;
    l.weight = prefix + ".l" + std::to_string(i) + ".w";
    l.bias = prefix + ".l" + std::to_string(i) + ".b";
    l.activation = i + 2 == sizes.size() ? output : hidden;
    store.add_glorot(l.weight, sizes[i + 1], sizes[i], rng);
    store.add(l.bias, sizes[i + 1], 1);
    layers_.push_back(std::move(l));
  }
}

ad::Var Mlp::forward(ad::Tape& tape, const ParamStore& store, ad::Var x) const {
  if (x.rows() != input_dim()) {
    throw ShapeError("Mlp: expected input of " + std::to_string(input_dim()) + " rows, got " +
                     std::to_string(x.rows()));
  }
  ad::Var h = x;
  for (const auto& l : layers_) {
    h = ad::add_bias(ad::matmul(tape.param(store.at(l.weight)), h), tape.param(store.at(l.bias)));
    h = apply_activation(h, l.activation);
  }
  return h;
}

const char* to_string(CellKind k) { return k == CellKind::Gated ? "gated" : "simple-tanh"; }

CellKind cell_kind_from_string(const std::string& s) {
  if (s == "gated" || s == "gru") return CellKind::Gated;
  if (s == "simple-tanh" || s == "simple") return CellKind::SimpleTanh;
  throw InvalidArgument("unknown cell kind '" + s + "'");
}

RecurrentCell::RecurrentCell(ParamStore& store, const std::string& prefix, int input_dim, int hidden_dim,
                             CellKind kind, Rng& rng)
    : prefix_(prefix), input_dim_(input_dim), hidden_dim_(hidden_dim), kind_(kind) {
  if (input_dim <= 0 || hidden_dim <= 0) throw InvalidArgument("RecurrentCell dims must be positive");
  const std::vector<std::string> gates =
      kind == CellKind::Gated ? std::vector<std::string>{"u", "r", "n"} : std::vector<std::string>{"h"};
  for (const auto& g : gates) {
    store.add_glorot(prefix + ".W" + g, hidden_dim, input_dim, rng);
    store.add_glorot(prefix + ".U" + g, hidden_dim, hidden_dim, rng);
    store.add(prefix + ".b" + g, hidden_dim, 1);
  }
}

ad::Var RecurrentCell::affine(ad::Tape& tape, const ParamStore& store, const std::string& gate, ad::Var x,
                              ad::Var h) const {
  const auto wx = ad::matmul(tape.param(store.at(prefix_ + ".W" + gate)), x);
  const auto uh = ad::matmul(tape.param(store.at(prefix_ + ".U" + gate)), h);
  return ad::add_bias(wx + uh, tape.param(store.at(prefix_ + ".b" + gate)));
}

ad::Var RecurrentCell::step(ad::Tape& tape, const ParamStore& store, ad::Var x, ad::Var h) const {
  if (x.rows() != input_dim_ || h.rows() != hidden_dim_) {
    throw ShapeError("RecurrentCell '" + prefix_ + "': expected input " + std::to_string(input_dim_) +
                     " and hidden " + std::to_string(hidden_dim_) + ", got " + std::to_string(x.rows()) + " and " +
                     std::to_string(h.rows()));
  }
  if (kind_ == CellKind::SimpleTanh) return ad::tanh(affine(tape, store, "h", x, h));
  const auto u = ad::sigmoid(affine(tape, store, "u", x, h));
  const auto r = ad::sigmoid(affine(tape, store, "r", x, h));
  const auto wn = ad::matmul(tape.param(store.at(prefix_ + ".Wn")), x);
  const auto un = ad::matmul(tape.param(store.at(prefix_ + ".Un")), ad::hadamard(r, h));
  const auto n = ad::tanh(ad::add_bias(wn + un, tape.param(store.at(prefix_ + ".bn"))));
  return ad::hadamard(ad::one_minus(u), n) + ad::hadamard(u, h);
}

}  // namespace kpstream
