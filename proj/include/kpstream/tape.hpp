#pragma once

#include <functional>
#include <unordered_map>
#include <vector>

#include "kpstream/params.hpp"
#include "kpstream/types.hpp"

namespace kpstream::ad {

class Tape;

/// Handle to a node on a Tape. Values are matrices; vectors are single
/// columns and batches are stacked as columns.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode differentiation tape. Nodes are appended in evaluation order,
/// which is already a topological order, so backward is a single reverse sweep.
///
/// A tape built with record = false only evaluates; it is the inference path.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var constant(Matrix v);
  /// Leaf bound to a stored parameter; repeated calls return the same node.
  Var param(const Param& p);

  const Matrix& value(Var v) const { return value(v.id); }
  /// Gradient of the last backward() target with respect to `v` (zero-sized if
  /// `v` did not contribute).
  const Matrix& grad(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)).grad; }

  /// Back-propagates from the scalar `loss` and adds each parameter's gradient
  /// into the matching entry of `sink`. Gradients accumulate across calls
  /// until the caller zeroes them.
  void backward(Var loss, ParamStore& sink);

  // Used by the op implementations.
  using BackwardFn = std::function<void(Tape&, int self)>;
  Var push(Matrix value, BackwardFn fn);
  const Matrix& value(int id) const;
  const Matrix& grad_at(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  Matrix& grad_ref(int id);

 private:
  struct Node {
    Matrix value;
    const Matrix* ref = nullptr;
    Matrix grad;
    BackwardFn backward;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Param*, int> param_nodes_;
};

Var matmul(Var a, Var b);
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(double c, Var a);
/// Adds an n x 1 bias to every column of `x`.
Var add_bias(Var x, Var bias);
Var hadamard(Var a, Var b);
Var one_minus(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);
Var square(Var a);
/// max(a, floor) elementwise; the gradient is zero where the floor is active.
Var floor_at(Var a, double floor);
/// Stacks a on top of b.
Var concat_rows(Var a, Var b);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
/// Sum of all entries as a 1 x 1 node.
Var sum(Var a);

/// mean + exp(0.5 * log_var) * eps, where eps is treated as a constant input.
Var reparameterize(Var mean, Var log_var, Var eps);
/// Closed-form diagonal-Gaussian KL(q || p), summed over all entries.
Var gaussian_kl(Var mean_q, Var log_var_q, Var mean_p, Var log_var_p);
/// Gaussian negative log-likelihood of x, summed over all entries.
Var gaussian_nll(Var x, Var mean, Var log_var);

}  // namespace kpstream::ad
