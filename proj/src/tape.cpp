#include "kpstream/tape.hpp"

#include "kpstream/gaussian.hpp"

namespace kpstream::ad {

const Matrix& Var::value() const { return tape->value(id); }

Var Tape::constant(Matrix v) { return push(std::move(v), nullptr); }

Var Tape::param(const Param& p) {
  auto it = param_nodes_.find(&p);
  if (it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.ref = &p.value;
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  param_nodes_.emplace(&p, id);
  return {this, id};
}

Var Tape::push(Matrix value, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  if (record_) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.ref ? *n.ref : n.value;
}

Matrix& Tape::grad_ref(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.size() == 0) {
    const Matrix& v = n.ref ? *n.ref : n.value;
    n.grad = Matrix::Zero(v.rows(), v.cols());
  }
  return n.grad;
}

void Tape::backward(Var loss, ParamStore& sink) {
  if (!record_) throw Error("backward: tape was built without recording");
  if (!loss.valid() || loss.tape != this || loss.id >= static_cast<int>(nodes_.size())) {
    throw Error("backward: no forward pass recorded for this loss");
  }
  if (value(loss.id).size() != 1) throw ShapeError("backward: loss must be a scalar");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  grad_ref(loss.id).setConstant(1.0);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, i);
  }
  for (auto& [name, p] : sink) {
    auto it = param_nodes_.find(&p);
    if (it == param_nodes_.end()) continue;
    const Matrix& g = nodes_[static_cast<std::size_t>(it->second)].grad;
    if (g.size() != 0) p.grad += g;
  }
}

namespace {

void same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

Tape& tape_of(Var a) {
  if (!a.valid()) throw Error("operation on an invalid Var");
  return *a.tape;
}

Tape& tape_of(Var a, Var b) {
  Tape& t = tape_of(a);
  if (b.tape != a.tape) throw Error("operands live on different tapes");
  return t;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.rows()) {
    throw ShapeError("matmul: inner dimensions " + std::to_string(A.cols()) + " vs " + std::to_string(B.rows()));
  }
  return t.push(A * B, [ia = a.id, ib = b.id](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    tp.grad_ref(ia).noalias() += g * tp.value(ib).transpose();
    tp.grad_ref(ib).noalias() += tp.value(ia).transpose() * g;
  });
}

Var operator+(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a.value(), b.value(), "add");
  return t.push(a.value() + b.value(), [ia = a.id, ib = b.id](Tape& tp, int self) {
    tp.grad_ref(ia) += tp.grad_at(self);
    tp.grad_ref(ib) += tp.grad_at(self);
  });
}

Var operator-(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a.value(), b.value(), "sub");
  return t.push(a.value() - b.value(), [ia = a.id, ib = b.id](Tape& tp, int self) {
    tp.grad_ref(ia) += tp.grad_at(self);
    tp.grad_ref(ib) -= tp.grad_at(self);
  });
}

Var operator*(double c, Var a) {
  Tape& t = tape_of(a);
  return t.push(c * a.value(), [ia = a.id, c](Tape& tp, int self) { tp.grad_ref(ia) += c * tp.grad_at(self); });
}

Var add_bias(Var x, Var bias) {
  Tape& t = tape_of(x, bias);
  const Matrix& X = x.value();
  const Matrix& b = bias.value();
  if (b.cols() != 1 || b.rows() != X.rows()) throw ShapeError("add_bias: bias must be a column of matching height");
  return t.push(X.colwise() + b.col(0), [ix = x.id, ib = bias.id](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    tp.grad_ref(ix) += g;
    tp.grad_ref(ib) += g.rowwise().sum();
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = tape_of(a, b);
  same_shape(a.value(), b.value(), "hadamard");
  return t.push(a.value().cwiseProduct(b.value()), [ia = a.id, ib = b.id](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    tp.grad_ref(ia) += g.cwiseProduct(tp.value(ib));
    tp.grad_ref(ib) += g.cwiseProduct(tp.value(ia));
  });
}

Var one_minus(Var a) {
  Tape& t = tape_of(a);
  return t.push((1.0 - a.value().array()).matrix(),
                [ia = a.id](Tape& tp, int self) { tp.grad_ref(ia) -= tp.grad_at(self); });
}

Var tanh(Var a) {
  Tape& t = tape_of(a);
  return t.push(a.value().array().tanh().matrix(), [ia = a.id](Tape& tp, int self) {
    const auto y = tp.value(self).array();
    tp.grad_ref(ia).array() += tp.grad_at(self).array() * (1.0 - y.square());
  });
}

Var sigmoid(Var a) {
  Tape& t = tape_of(a);
  Matrix y = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return t.push(std::move(y), [ia = a.id](Tape& tp, int self) {
    const auto y = tp.value(self).array();
    tp.grad_ref(ia).array() += tp.grad_at(self).array() * y * (1.0 - y);
  });
}

Var relu(Var a) {
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseMax(0.0), [ia = a.id](Tape& tp, int self) {
    const auto x = tp.value(ia).array();
    tp.grad_ref(ia).array() += (x > 0.0).select(tp.grad_at(self).array(), 0.0);
  });
}

Var exp(Var a) {
  Tape& t = tape_of(a);
  return t.push(a.value().array().exp().matrix(), [ia = a.id](Tape& tp, int self) {
    tp.grad_ref(ia).array() += tp.grad_at(self).array() * tp.value(self).array();
  });
}

Var square(Var a) {
  Tape& t = tape_of(a);
  return t.push(a.value().array().square().matrix(), [ia = a.id](Tape& tp, int self) {
    tp.grad_ref(ia).array() += 2.0 * tp.grad_at(self).array() * tp.value(ia).array();
  });
}

Var floor_at(Var a, double floor) {
  Tape& t = tape_of(a);
  return t.push(a.value().cwiseMax(floor), [ia = a.id, floor](Tape& tp, int self) {
    const auto x = tp.value(ia).array();
    tp.grad_ref(ia).array() += (x > floor).select(tp.grad_at(self).array(), 0.0);
  });
}

Var concat_rows(Var a, Var b) {
  Tape& t = tape_of(a, b);
  const Matrix& A = a.value();
  const Matrix& B = b.value();
  if (A.cols() != B.cols()) throw ShapeError("concat_rows: column counts differ");
  Matrix out(A.rows() + B.rows(), A.cols());
  out << A, B;
  return t.push(std::move(out), [ia = a.id, ib = b.id, na = A.rows(), nb = B.rows()](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    tp.grad_ref(ia) += g.topRows(na);
    tp.grad_ref(ib) += g.bottomRows(nb);
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  Tape& t = tape_of(a);
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  return t.push(a.value().middleRows(start, count), [ia = a.id, start, count](Tape& tp, int self) {
    tp.grad_ref(ia).middleRows(start, count) += tp.grad_at(self);
  });
}

Var sum(Var a) {
  Tape& t = tape_of(a);
  Matrix s(1, 1);
  s(0, 0) = a.value().sum();
  return t.push(std::move(s), [ia = a.id](Tape& tp, int self) {
    tp.grad_ref(ia).array() += tp.grad_at(self)(0, 0);
  });
}

Var reparameterize(Var mean, Var log_var, Var eps) {
  Tape& t = tape_of(mean, log_var);
  if (eps.tape != &t) throw Error("operands live on different tapes");
  same_shape(mean.value(), log_var.value(), "reparameterize");
  same_shape(mean.value(), eps.value(), "reparameterize");
  Matrix z = kpstream::reparameterize(mean.value(), log_var.value(), eps.value());
  return t.push(std::move(z), [im = mean.id, il = log_var.id, ie = eps.id](Tape& tp, int self) {
    const Matrix& g = tp.grad_at(self);
    tp.grad_ref(im) += g;
    tp.grad_ref(il).array() +=
        g.array() * 0.5 * (0.5 * tp.value(il).array()).exp() * tp.value(ie).array();
  });
}

Var gaussian_kl(Var mean_q, Var log_var_q, Var mean_p, Var log_var_p) {
  Tape& t = tape_of(mean_q, log_var_q);
  if (mean_p.tape != &t || log_var_p.tape != &t) throw Error("operands live on different tapes");
  same_shape(mean_q.value(), log_var_q.value(), "gaussian_kl");
  same_shape(mean_q.value(), mean_p.value(), "gaussian_kl");
  same_shape(mean_q.value(), log_var_p.value(), "gaussian_kl");
  Matrix out(1, 1);
  out(0, 0) = kpstream::gaussian_kl(mean_q.value(), log_var_q.value(), mean_p.value(), log_var_p.value());
  return t.push(std::move(out), [imq = mean_q.id, ilq = log_var_q.id, imp = mean_p.id,
                                 ilp = log_var_p.id](Tape& tp, int self) {
    const double g = tp.grad_at(self)(0, 0);
    const auto mq = tp.value(imq).array();
    const auto lq = tp.value(ilq).array();
    const auto mp = tp.value(imp).array();
    const auto lp = tp.value(ilp).array();
    const Eigen::ArrayXXd inv_vp = (-lp).exp();
    const Eigen::ArrayXXd vq = lq.exp();
    const Eigen::ArrayXXd diff = mq - mp;
    const Eigen::ArrayXXd dmq = diff * inv_vp;
    tp.grad_ref(imq).array() += g * dmq;
    tp.grad_ref(imp).array() -= g * dmq;
    tp.grad_ref(ilq).array() += g * 0.5 * (vq * inv_vp - 1.0);
    tp.grad_ref(ilp).array() += g * 0.5 * (1.0 - (vq + diff.square()) * inv_vp);
  });
}

Var gaussian_nll(Var x, Var mean, Var log_var) {
  Tape& t = tape_of(x, mean);
  if (log_var.tape != &t) throw Error("operands live on different tapes");
  same_shape(x.value(), mean.value(), "gaussian_nll");
  same_shape(x.value(), log_var.value(), "gaussian_nll");
  Matrix out(1, 1);
  out(0, 0) = kpstream::gaussian_nll(x.value(), mean.value(), log_var.value());
  return t.push(std::move(out), [ix = x.id, im = mean.id, il = log_var.id](Tape& tp, int self) {
    const double g = tp.grad_at(self)(0, 0);
    const Eigen::ArrayXXd inv_v = (-tp.value(il).array()).exp();
    const Eigen::ArrayXXd diff = tp.value(ix).array() - tp.value(im).array();
    tp.grad_ref(ix).array() += g * diff * inv_v;
    tp.grad_ref(im).array() -= g * diff * inv_v;
    tp.grad_ref(il).array() += g * 0.5 * (1.0 - diff.square() * inv_v);
  });
}

}  // namespace kpstream::ad
