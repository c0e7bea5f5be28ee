#include "kpstream/vrnn.hpp"

#include "kpstream/model_io.hpp"

namespace kpstream {

VrnnModel::VrnnModel(const VrnnConfig& config) : stats(NormalizationStats::identity(config.input_dim)), config_(config) {
  const auto& c = config_;
  if (c.input_dim <= 0 || c.hidden_dim <= 0 || c.latent_dim <= 0 || c.feature_dim <= 0 || c.net_hidden <= 0 ||
      c.k <= 0) {
    throw InvalidArgument("VrnnConfig: all dims and k must be positive");
  }
  Rng init(c.seed);
  phi_x_ = Mlp(params_, "vrnn.phi_x", {c.input_dim, c.feature_dim}, Activation::Tanh, Activation::Tanh, init);
  phi_z_ = Mlp(params_, "vrnn.phi_z", {c.latent_dim, c.feature_dim}, Activation::Tanh, Activation::Tanh, init);
  phi_prior_ = Mlp(params_, "vrnn.prior", {c.hidden_dim, c.net_hidden, 2 * c.latent_dim}, Activation::Tanh,
                   Activation::Identity, init);
  phi_enc_ = Mlp(params_, "vrnn.enc", {c.feature_dim + c.hidden_dim, c.net_hidden, 2 * c.latent_dim},
                 Activation::Tanh, Activation::Identity, init);
  phi_dec_ = Mlp(params_, "vrnn.dec", {c.feature_dim + c.hidden_dim, c.net_hidden, 2 * c.input_dim},
                 Activation::Tanh, Activation::Identity, init);
  cell_ = RecurrentCell(params_, "vrnn.cell", 2 * c.feature_dim, c.hidden_dim, c.cell, init);
}

VrnnModel::GaussianVars VrnnModel::split(ad::Var out, Eigen::Index n, bool floor_log_var) const {
  ad::Var lv = ad::slice_rows(out, n, n);
  if (floor_log_var) lv = ad::floor_at(lv, config_.min_log_var);
  return {ad::slice_rows(out, 0, n), lv};
}

VrnnModel::GaussianVars VrnnModel::prior(ad::Tape& tape, ad::Var h) const {
  return split(phi_prior_.forward(tape, params_, h), config_.latent_dim, false);
}

VrnnModel::GaussianVars VrnnModel::posterior(ad::Tape& tape, ad::Var h, ad::Var x) const {
  const ad::Var in = ad::concat_rows(phi_x_.forward(tape, params_, x), h);
  return split(phi_enc_.forward(tape, params_, in), config_.latent_dim, false);
}

VrnnModel::GaussianVars VrnnModel::generate(ad::Tape& tape, ad::Var h, ad::Var z) const {
  const ad::Var in = ad::concat_rows(phi_z_.forward(tape, params_, z), h);
  return split(phi_dec_.forward(tape, params_, in), config_.input_dim, true);
}

ad::Var VrnnModel::recur(ad::Tape& tape, ad::Var h, ad::Var x, ad::Var z) const {
  const ad::Var in = ad::concat_rows(phi_x_.forward(tape, params_, x), phi_z_.forward(tape, params_, z));
  return cell_.step(tape, params_, in, h);
}

namespace {

void check(const Vector& v, int n, const char* what) { require_same_size(v.size(), n, what); }

}  // namespace

DiagGaussian VrnnModel::prior(const Vector& h) const {
  check(h, config_.hidden_dim, "vrnn_prior");
  ad::Tape tape(false);
  const auto [m, lv] = prior(tape, tape.constant(h));
  return {m.value(), lv.value()};
}

DiagGaussian VrnnModel::posterior(const Vector& h, const Vector& x) const {
  check(h, config_.hidden_dim, "vrnn_posterior");
  check(x, config_.input_dim, "vrnn_posterior");
  ad::Tape tape(false);
  const auto [m, lv] = posterior(tape, tape.constant(h), tape.constant(x));
  return {m.value(), lv.value()};
}

DiagGaussian VrnnModel::generate(const Vector& h, const Vector& z) const {
  check(h, config_.hidden_dim, "vrnn_generate");
  check(z, config_.latent_dim, "vrnn_generate");
  ad::Tape tape(false);
  const auto [m, lv] = generate(tape, tape.constant(h), tape.constant(z));
  return {m.value(), lv.value()};
}

Vector VrnnModel::recur(const Vector& h, const Vector& x, const Vector& z) const {
  check(h, config_.hidden_dim, "vrnn_recur");
  check(x, config_.input_dim, "vrnn_recur");
  check(z, config_.latent_dim, "vrnn_recur");
  ad::Tape tape(false);
  return recur(tape, tape.constant(h), tape.constant(x), tape.constant(z)).value();
}

ad::Var VrnnModel::sequence_loss(ad::Tape& tape, std::span<const Matrix> sequence, std::span<const Matrix> eps) const {
  if (sequence.size() != eps.size()) {
    throw ShapeError("vrnn_loss: " + std::to_string(sequence.size()) + " frames but " + std::to_string(eps.size()) +
                     " eps draws");
  }
  if (sequence.empty()) throw InvalidArgument("vrnn_loss: empty sequence");
  const Eigen::Index batch = sequence.front().cols();
  ad::Var h = tape.constant(Matrix::Zero(config_.hidden_dim, batch));
  ad::Var total;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const ad::Var x = tape.constant(sequence[t]);
    const auto [qm, qlv] = posterior(tape, h, x);
    const ad::Var z = ad::reparameterize(qm, qlv, tape.constant(eps[t]));
    const auto [pm, plv] = prior(tape, h);
    const auto [xm, xlv] = generate(tape, h, z);
    const ad::Var term = ad::gaussian_kl(qm, qlv, pm, plv) + ad::gaussian_nll(x, xm, xlv);
    total = total.valid() ? total + term : term;
    h = recur(tape, h, x, z);
  }
  return total;
}

std::vector<std::pair<double, double>> VrnnModel::step_terms(const Matrix& sequence, const Matrix& eps) const {
  require_same_size(sequence.cols(), eps.cols(), "vrnn step_terms");
  ad::Tape tape(false);
  ad::Var h = tape.constant(Matrix::Zero(config_.hidden_dim, 1));
  std::vector<std::pair<double, double>> out;
  for (Eigen::Index t = 0; t < sequence.cols(); ++t) {
    const ad::Var x = tape.constant(sequence.col(t));
    const auto [qm, qlv] = posterior(tape, h, x);
    const ad::Var z = ad::reparameterize(qm, qlv, tape.constant(eps.col(t)));
    const auto [pm, plv] = prior(tape, h);
    const auto [xm, xlv] = generate(tape, h, z);
    out.emplace_back(ad::gaussian_kl(qm, qlv, pm, plv).value()(0, 0), ad::gaussian_nll(x, xm, xlv).value()(0, 0));
    h = recur(tape, h, x, z);
  }
  return out;
}

double VrnnModel::sequence_loss(const Matrix& sequence, const Matrix& eps) const {
  require_same_size(sequence.cols(), eps.cols(), "vrnn_loss");
  std::vector<Matrix> xs, es;
  for (Eigen::Index t = 0; t < sequence.cols(); ++t) {
    xs.emplace_back(sequence.col(t));
    es.emplace_back(eps.col(t));
  }
  ad::Tape tape(false);
  return sequence_loss(tape, xs, es).value()(0, 0);
}

void VrnnModel::fit(std::span<const Matrix> sequences) {
  const int W = 2 * config_.k;
  const WindowSampler sampler(sequences, W);
  Rng rng(config_.seed ^ 0x5EED'0003ULL);
  const int B = config_.train.batch_size;
  auto hist = run_training(params_, config_.train, rng, [&](ad::Tape& tape, Rng& r) {
    const auto batch = sampler.sample(r, B);
    std::vector<Matrix> eps;
    eps.reserve(batch.size());
    for (std::size_t t = 0; t < batch.size(); ++t) eps.push_back(standard_normal(r, config_.latent_dim, B));
    return (1.0 / B) * sequence_loss(tape, batch, eps);
  });
  loss_history.insert(loss_history.end(), hist.begin(), hist.end());
}

Matrix VrnnModel::predict_block(const Matrix& context, int horizon, RolloutMode mode, std::uint64_t seed) const {
  if (context.cols() < 1) throw InvalidArgument("vrnn predict_block: empty context");
  if (horizon < 0) throw InvalidArgument("vrnn predict_block: negative horizon");
  require_same_size(context.rows(), config_.input_dim, "vrnn predict_block");
  const Matrix norm = normalize_columns(context, stats);
  ad::Tape tape(false);
  ad::Var h = tape.constant(Matrix::Zero(config_.hidden_dim, 1));
  for (Eigen::Index t = 0; t < norm.cols(); ++t) {
    const ad::Var x = tape.constant(norm.col(t));
    const auto [qm, qlv] = posterior(tape, h, x);
    h = recur(tape, h, x, qm);
  }
  Rng rng(seed);
  Matrix out(config_.input_dim, horizon);
  for (int j = 0; j < horizon; ++j) {
    const auto [pm, plv] = prior(tape, h);
    ad::Var z = pm;
    if (mode == RolloutMode::Sample) {
      z = ad::reparameterize(pm, plv, tape.constant(standard_normal(rng, config_.latent_dim, 1)));
    }
    const auto [xm, xlv] = generate(tape, h, z);
    out.col(j) = xm.value();
    if (j + 1 < horizon) h = recur(tape, h, xm, z);
  }
  return denormalize_columns(out, stats);
}

Checkpoint VrnnModel::to_checkpoint() const {
  Checkpoint c;
  c.kind = ModelKind::Vrnn;
  c.put_scalar("cfg.input_dim", config_.input_dim);
  c.put_scalar("cfg.hidden_dim", config_.hidden_dim);
  c.put_scalar("cfg.latent_dim", config_.latent_dim);
  c.put_scalar("cfg.feature_dim", config_.feature_dim);
  c.put_scalar("cfg.net_hidden", config_.net_hidden);
  c.put_scalar("cfg.cell", config_.cell == CellKind::Gated ? 0 : 1);
  c.put_scalar("cfg.min_log_var", config_.min_log_var);
  c.put_scalar("cfg.k", config_.k);
  put_train_options(c, config_.train);
  put_seed(c, config_.seed);
  c.put_stats(stats);
  c.put_vector("train.loss_history", loss_history);
  c.put_params(params_);
  return c;
}

VrnnModel VrnnModel::from_checkpoint(const Checkpoint& c) {
  if (c.kind != ModelKind::Vrnn) throw DecodeError("checkpoint is not a VRNN model");
  VrnnConfig cfg;
  cfg.input_dim = c.integer("cfg.input_dim");
  cfg.hidden_dim = c.integer("cfg.hidden_dim");
  cfg.latent_dim = c.integer("cfg.latent_dim");
  cfg.feature_dim = c.integer("cfg.feature_dim");
  cfg.net_hidden = c.integer("cfg.net_hidden");
  cfg.cell = c.integer("cfg.cell") == 0 ? CellKind::Gated : CellKind::SimpleTanh;
  cfg.min_log_var = c.scalar("cfg.min_log_var");
  cfg.k = c.integer("cfg.k");
  cfg.train = get_train_options(c);
  cfg.seed = get_seed(c);
  VrnnModel m(cfg);
  m.stats = c.stats();
  m.loss_history = c.vector("train.loss_history");
  c.load_params(m.params_);
  return m;
}

VrnnModel vrnn_train(std::span<const KeypointSequence> dataset, const VrnnConfig& config,
                     std::optional<NormalizationStats> stats) {
  if (dataset.empty()) throw InvalidArgument("vrnn_train: empty dataset");
  VrnnModel model(config);
  model.stats = stats ? *stats : compute_stats(dataset, "training data");
  const auto seqs = normalized_matrices(dataset, model.stats);
  model.fit(seqs);
  return model;
}

}  // namespace kpstream
