#include <cmath>

#include <gtest/gtest.h>

#include "kpstream/gaussian.hpp"
#include "kpstream/grad_check.hpp"
#include "kpstream/layers.hpp"
#include "kpstream/tape.hpp"

using namespace kpstream;
namespace ad = kpstream::ad;

namespace {

ParamStore random_store(std::uint64_t seed, const std::vector<std::tuple<std::string, int, int>>& shapes) {
  ParamStore s;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  for (const auto& [name, r, c] : shapes) {
    Param& p = s.add(name, r, c);
    p.value = p.value.unaryExpr([&](double) { return u(rng); });
  }
  return s;
}

double check(const LossBuilder& f, ParamStore& s) {
  Rng rng(1);
  return grad_check(f, s, 0, rng).max_rel_error;
}

}  // namespace

TEST(Backprop, SumOfSquaresGivesTwiceParams) {
  ParamStore s = random_store(2, {{"a", 3, 2}, {"b", 4, 1}});
  ad::Tape tape;
  const auto loss = ad::sum(ad::square(tape.param(s.at("a")))) + ad::sum(ad::square(tape.param(s.at("b"))));
  tape.backward(loss, s);
  EXPECT_TRUE(s.at("a").grad.isApprox(2 * s.at("a").value));
  EXPECT_TRUE(s.at("b").grad.isApprox(2 * s.at("b").value));
}

TEST(Backprop, ConstantLossGivesZeroGradient) {
  ParamStore s = random_store(2, {{"a", 3, 2}});
  ad::Tape tape;
  tape.param(s.at("a"));
  tape.backward(ad::sum(tape.constant(Matrix::Ones(2, 2))), s);
  EXPECT_EQ(s.at("a").grad.norm(), 0.0);
}

TEST(Backprop, GradientsAccumulateUntilCleared) {
  ParamStore s = random_store(3, {{"a", 2, 2}});
  for (int i = 0; i < 2; ++i) {
    ad::Tape tape;
    tape.backward(ad::sum(ad::square(tape.param(s.at("a")))), s);
  }
  EXPECT_TRUE(s.at("a").grad.isApprox(4 * s.at("a").value));
  s.zero_grad();
  EXPECT_EQ(s.at("a").grad.norm(), 0.0);
}

TEST(Backprop, RequiresRecordedScalarLoss) {
  ParamStore s = random_store(3, {{"a", 2, 2}});
  ad::Tape quiet(false);
  EXPECT_THROW(quiet.backward(ad::sum(quiet.param(s.at("a"))), s), Error);
  ad::Tape tape;
  EXPECT_THROW(tape.backward(ad::Var{}, s), Error);
  EXPECT_THROW(tape.backward(tape.param(s.at("a")), s), ShapeError);
}

TEST(Backprop, ParamLeafIsShared) {
  ParamStore s = random_store(3, {{"a", 2, 2}});
  ad::Tape tape;
  EXPECT_EQ(tape.param(s.at("a")).id, tape.param(s.at("a")).id);
}

TEST(GradCheck, LinearLeastSquaresExact) {
  ParamStore s = random_store(4, {{"w", 3, 5}, {"b", 3, 1}});
  Rng rng(9);
  const Matrix X = standard_normal(rng, 5, 7), Y = standard_normal(rng, 3, 7);
  const auto f = [&](ad::Tape& t) {
    const auto pred = ad::add_bias(ad::matmul(t.param(s.at("w")), t.constant(X)), t.param(s.at("b")));
    return ad::sum(ad::square(pred - t.constant(Y)));
  };
  EXPECT_LT(check(f, s), 1e-8);
}

TEST(GradCheck, ElementwiseOps) {
  ParamStore s = random_store(5, {{"a", 3, 4}, {"b", 3, 4}});
  const auto f = [&](ad::Tape& t) {
    const auto a = t.param(s.at("a")), b = t.param(s.at("b"));
    const auto x = ad::hadamard(ad::tanh(a), ad::sigmoid(b)) + 0.3 * ad::exp(ad::one_minus(a));
    return ad::sum(ad::square(x - b));
  };
  EXPECT_LT(check(f, s), 1e-6);
}

TEST(GradCheck, ReluAndFloorAwayFromKinks) {
  ParamStore s = random_store(6, {{"a", 4, 3}});
  s.at("a").value = s.at("a").value.unaryExpr([](double v) { return v + (v > 0 ? 0.1 : -0.1); });
  const auto f = [&](ad::Tape& t) {
    const auto a = t.param(s.at("a"));
    return ad::sum(ad::square(ad::relu(a))) + ad::sum(ad::square(ad::floor_at(a, 0.0)));
  };
  EXPECT_LT(check(f, s), 1e-6);
}

TEST(GradCheck, ConcatAndSlice) {
  ParamStore s = random_store(7, {{"a", 2, 3}, {"b", 4, 3}});
  const auto f = [&](ad::Tape& t) {
    const auto c = ad::concat_rows(t.param(s.at("a")), t.param(s.at("b")));
    return ad::sum(ad::hadamard(ad::slice_rows(c, 1, 4), ad::slice_rows(c, 2, 4)));
  };
  EXPECT_LT(check(f, s), 1e-6);
}

TEST(GradCheck, GaussianNodes) {
  ParamStore s = random_store(8, {{"mq", 4, 3}, {"lq", 4, 3}, {"mp", 4, 3}, {"lp", 4, 3}, {"x", 4, 3}});
  Rng rng(2);
  const Matrix eps = standard_normal(rng, 4, 3);
  const auto f = [&](ad::Tape& t) {
    const auto mq = t.param(s.at("mq")), lq = t.param(s.at("lq"));
    const auto z = ad::reparameterize(mq, lq, t.constant(eps));
    return ad::gaussian_kl(mq, lq, t.param(s.at("mp")), t.param(s.at("lp"))) +
           ad::gaussian_nll(t.param(s.at("x")), z, t.param(s.at("lp")));
  };
  EXPECT_LT(check(f, s), 1e-6);
}

TEST(GaussianNodes, MatchPlainFunctions) {
  Rng rng(3);
  const Matrix mq = standard_normal(rng, 5, 2), lq = standard_normal(rng, 5, 2), mp = standard_normal(rng, 5, 2),
               lp = standard_normal(rng, 5, 2), e = standard_normal(rng, 5, 2);
  ad::Tape t(false);
  const auto kl = ad::gaussian_kl(t.constant(mq), t.constant(lq), t.constant(mp), t.constant(lp));
  const auto nll = ad::gaussian_nll(t.constant(e), t.constant(mq), t.constant(lq));
  const auto z = ad::reparameterize(t.constant(mq), t.constant(lq), t.constant(e));
  EXPECT_NEAR(kl.value()(0, 0), gaussian_kl(mq, lq, mp, lp), 1e-12);
  EXPECT_NEAR(nll.value()(0, 0), gaussian_nll(e, mq, lq), 1e-12);
  EXPECT_TRUE(z.value().isApprox(reparameterize(mq, lq, e).eval()));
}

TEST(Mlp, ZeroWeightsIdentityGivesBias) {
  const Matrix w = Matrix::Zero(3, 2);
  const Vector b = Vector::LinSpaced(3, -1, 1);
  const DenseLayerRef layers[] = {{w, b, Activation::Identity}};
  EXPECT_EQ(mlp_forward(layers, Vector2(4, 5)), b);
}

TEST(Mlp, IdentityTanhOfZero) {
  const Matrix w = Matrix::Identity(2, 2);
  const Vector b = Vector::Zero(2);
  const DenseLayerRef layers[] = {{w, b, Activation::Tanh}};
  EXPECT_EQ(mlp_forward(layers, Vector::Zero(2)), Vector::Zero(2));
}

TEST(Mlp, TwoLayerHandFixture) {
  Matrix w1(2, 2), w2(2, 2);
  w1 << 1, 2, 0, -1;
  w2 << 1, -1, 2, 0;
  const Vector b1 = Vector2(0.5, -0.5), b2 = Vector2(0, 1);
  const DenseLayerRef layers[] = {{w1, b1, Activation::Tanh}, {w2, b2, Activation::Identity}};
  const Vector out = mlp_forward(layers, Vector2(0.2, 0.4));
  EXPECT_NEAR(out(0), 1.6214461238438909, 1e-14);
  EXPECT_NEAR(out(1), 2.810296507289733, 1e-14);
}

TEST(Mlp, ShapeMismatchRejected) {
  const Matrix w = Matrix::Zero(3, 2);
  const Vector b = Vector::Zero(3);
  const DenseLayerRef layers[] = {{w, b, Activation::Relu}};
  EXPECT_THROW(mlp_forward(layers, Vector::Zero(3)), ShapeError);
}

TEST(Mlp, TapePathMatchesPlainPath) {
  ParamStore s;
  Rng rng(11);
  const Mlp net(s, "net", {3, 5, 2}, Activation::Tanh, Activation::Identity, rng);
  s.at("net.l0.b").value.setConstant(0.1);
  const Vector x = Vector::LinSpaced(3, -1, 1);
  const Vector b0 = s.at("net.l0.b").value, b1 = s.at("net.l1.b").value;
  const DenseLayerRef layers[] = {{s.at("net.l0.w").value, b0, Activation::Tanh},
                                  {s.at("net.l1.w").value, b1, Activation::Identity}};
  ad::Tape t(false);
  EXPECT_TRUE(net.forward(t, s, t.constant(x)).value().isApprox(mlp_forward(layers, x)));
}

TEST(Init, GlorotBoundsAndZeroBias) {
  ParamStore s;
  Rng rng(5);
  Mlp net(s, "m", {40, 24}, Activation::Tanh, Activation::Tanh, rng);
  const double bound = std::sqrt(6.0 / (40 + 24));
  EXPECT_LE(s.at("m.l0.w").value.cwiseAbs().maxCoeff(), bound);
  EXPECT_GT(s.at("m.l0.w").value.cwiseAbs().maxCoeff(), 0.9 * bound);
  EXPECT_EQ(s.at("m.l0.b").value.norm(), 0.0);
}

TEST(Cell, SimpleZeroParamsGiveZeroState) {
  ParamStore s;
  Rng rng(1);
  RecurrentCell cell(s, "c", 3, 4, CellKind::SimpleTanh, rng);
  for (auto& [n, p] : s) p.value.setZero();
  ad::Tape t(false);
  EXPECT_EQ(cell.step(t, s, t.constant(Vector::Ones(3)), t.constant(Vector::Ones(4))).value().norm(), 0.0);
}

TEST(Cell, SimpleBiasOnlyGivesTanhBias) {
  ParamStore s;
  Rng rng(1);
  RecurrentCell cell(s, "c", 3, 2, CellKind::SimpleTanh, rng);
  s.at("c.Wh").value.setZero();
  s.at("c.Uh").value.setZero();
  s.at("c.bh").value = Vector2(0.3, -2.0);
  ad::Tape t(false);
  const Vector h = cell.step(t, s, t.constant(Vector::Constant(3, 7.0)), t.constant(Vector2(5, 5))).value();
  EXPECT_NEAR(h(0), std::tanh(0.3), 1e-15);
  EXPECT_NEAR(h(1), std::tanh(-2.0), 1e-15);
}

TEST(Cell, GatedHandFixture) {
  ParamStore s;
  Rng rng(1);
  RecurrentCell cell(s, "g", 1, 1, CellKind::Gated, rng);
  const auto set = [&](const char* n, double v) { s.at(n).value.setConstant(v); };
  set("g.Wu", 0.5), set("g.Uu", -0.3), set("g.bu", 0.1);
  set("g.Wr", 0.2), set("g.Ur", 0.4), set("g.br", -0.1);
  set("g.Wn", 1.0), set("g.Un", 0.7), set("g.bn", 0.05);
  ad::Tape t(false);
  const double h = cell.step(t, s, t.constant(Vector::Constant(1, 0.8)), t.constant(Vector::Constant(1, 0.3))).value()(0);
  EXPECT_NEAR(h, 0.4780121260577097, 1e-14);
}

TEST(Cell, GatedGradientCheck) {
  ParamStore s;
  Rng rng(4);
  RecurrentCell cell(s, "g", 3, 4, CellKind::Gated, rng);
  for (auto& [n, p] : s) p.value += 0.1 * standard_normal(rng, p.value.rows(), p.value.cols());
  const Matrix x = standard_normal(rng, 3, 2);
  const auto f = [&](ad::Tape& t) {
    ad::Var h = t.constant(Matrix::Zero(4, 2));
    for (int i = 0; i < 3; ++i) h = cell.step(t, s, t.constant(x * (i + 1)), h);
    return ad::sum(ad::square(h));
  };
  EXPECT_LT(check(f, s), 1e-6);
}

TEST(Adam, ZeroGradientLeavesParams) {
  ParamStore s = random_store(1, {{"a", 3, 3}});
  const Matrix before = s.at("a").value;
  adam_step(s, {});
  EXPECT_EQ(s.at("a").value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParamStore s;
  s.add("p", 1, 1).value(0, 0) = 1.0;
  s.at("p").grad(0, 0) = 1.0;
  AdamOptions o;
  o.lr = 0.1;
  adam_step(s, o);
  EXPECT_NEAR(s.at("p").value(0, 0), 0.900000001, 1e-12);
  EXPECT_EQ(s.step(), 1);
}

TEST(Adam, ClipsByGlobalNorm) {
  ParamStore s;
  s.add("a", 1, 1).grad(0, 0) = 30.0;
  s.add("b", 1, 1).grad(0, 0) = 40.0;
  EXPECT_DOUBLE_EQ(global_grad_norm(s), 50.0);
  AdamOptions o;
  adam_step(s, o);
  // First moment holds the clipped gradient: (1 - beta1) * g * 5 / 50.
  EXPECT_NEAR(s.at("a").m(0, 0), 0.1 * 3.0, 1e-12);
  EXPECT_NEAR(s.at("b").m(0, 0), 0.1 * 4.0, 1e-12);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
  ParamStore s = random_store(1, {{"enc.w", 2, 2}, {"dec.w", 2, 2}});
  s.at("dec.w").grad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    adam_step(s, {});
    FAIL();
  } catch (const NonFiniteError& e) {
    EXPECT_EQ(e.name(), "dec.w");
  }
}

TEST(Adam, DeterministicTrajectories) {
  const auto run = [] {
    ParamStore s = random_store(9, {{"w", 4, 4}});
    for (int i = 0; i < 20; ++i) {
      s.zero_grad();
      ad::Tape t;
      t.backward(ad::sum(ad::square(ad::tanh(t.param(s.at("w"))))), s);
      adam_step(s, {});
    }
    return s.at("w").value;
  };
  EXPECT_EQ(run(), run());
}
