#include "kpstream/vae.hpp"

#include "kpstream/model_io.hpp"

namespace kpstream {

namespace {

std::vector<int> sizes(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> s{in};
  s.insert(s.end(), hidden.begin(), hidden.end());
  s.push_back(out);
  return s;
}

}  // namespace

VaeModel::VaeModel(const VaeConfig& config) : stats(NormalizationStats::identity(config.input_dim)), config_(config) {
  if (config_.input_dim <= 0 || config_.latent_dim < 1 || config_.max_lag < 1) {
    throw InvalidArgument("VaeConfig: input_dim, latent_dim and max_lag must be positive");
  }
  Rng init(config_.seed);
  encoder_ = Mlp(params_, "vae.enc", sizes(config_.input_dim, config_.encoder_hidden, 2 * config_.latent_dim),
                 Activation::Tanh, Activation::Identity, init);
  decoder_ = Mlp(params_, "vae.dec",
                 sizes(config_.latent_dim + config_.max_lag, config_.decoder_hidden, 2 * config_.input_dim),
                 Activation::Tanh, Activation::Identity, init);
}

Matrix VaeModel::lag_codes(std::span<const int> lags) const {
  Matrix codes = Matrix::Zero(config_.max_lag, static_cast<Eigen::Index>(lags.size()));
  for (std::size_t i = 0; i < lags.size(); ++i) {
    if (lags[i] < 1 || lags[i] > config_.max_lag) {
      throw InvalidArgument("lag " + std::to_string(lags[i]) + " outside 1.." + std::to_string(config_.max_lag));
    }
    codes(lags[i] - 1, static_cast<Eigen::Index>(i)) = 1.0;
  }
  return codes;
}

std::pair<ad::Var, ad::Var> VaeModel::encode(ad::Tape& tape, ad::Var x) const {
  const ad::Var out = encoder_.forward(tape, params_, x);
  return {ad::slice_rows(out, 0, config_.latent_dim), ad::slice_rows(out, config_.latent_dim, config_.latent_dim)};
}

std::pair<ad::Var, ad::Var> VaeModel::decode(ad::Tape& tape, ad::Var z, std::span<const int> lags) const {
  if (static_cast<Eigen::Index>(lags.size()) != z.cols()) throw ShapeError("vae decode: one lag per column required");
  const ad::Var in = ad::concat_rows(z, tape.constant(lag_codes(lags)));
  const ad::Var out = decoder_.forward(tape, params_, in);
  const ad::Var mean = ad::slice_rows(out, 0, config_.input_dim);
  const ad::Var log_var = ad::floor_at(ad::slice_rows(out, config_.input_dim, config_.input_dim), config_.min_log_var);
  return {mean, log_var};
}

DiagGaussian VaeModel::encode(const Vector& x) const {
  require_same_size(x.size(), config_.input_dim, "vae_encode");
  ad::Tape tape(false);
  const auto [m, lv] = encode(tape, tape.constant(x));
  return {m.value(), lv.value()};
}

DiagGaussian VaeModel::decode(const Vector& z, int lag) const {
  require_same_size(z.size(), config_.latent_dim, "vae_decode");
  ad::Tape tape(false);
  const int lags[] = {lag};
  const auto [m, lv] = decode(tape, tape.constant(z), lags);
  return {m.value(), lv.value()};
}

ad::Var VaeModel::loss(ad::Tape& tape, const Matrix& x_in, const Matrix& x_target, std::span<const int> lags,
                       const Matrix& eps) const {
  if (x_in.rows() != config_.input_dim || x_target.rows() != config_.input_dim || x_in.cols() != x_target.cols()) {
    throw ShapeError("vae_loss: input/target shape mismatch");
  }
  if (eps.rows() != config_.latent_dim || eps.cols() != x_in.cols()) throw ShapeError("vae_loss: eps shape mismatch");
  const auto [qm, qlv] = encode(tape, tape.constant(x_in));
  const ad::Var z = ad::reparameterize(qm, qlv, tape.constant(eps));
  const auto [dm, dlv] = decode(tape, z, lags);
  const ad::Var nll = ad::gaussian_nll(tape.constant(x_target), dm, dlv);
  if (config_.beta == 0.0) return nll;
  const Matrix zeros = Matrix::Zero(qm.rows(), qm.cols());
  const ad::Var kl = ad::gaussian_kl(qm, qlv, tape.constant(zeros), tape.constant(zeros));
  return nll + config_.beta * kl;
}

double VaeModel::loss(const Vector& x_in, const Vector& x_target, int lag, const Vector& eps) const {
  ad::Tape tape(false);
  const int lags[] = {lag};
  return loss(tape, x_in, x_target, lags, eps).value()(0, 0);
}

void VaeModel::fit(std::span<const Matrix> sequences) {
  const int k = config_.max_lag;
  // (sequence, start) pairs per lag.
  std::vector<std::vector<std::pair<std::size_t, Eigen::Index>>> pairs(static_cast<std::size_t>(k) + 1);
  for (int lag = 1; lag <= k; ++lag) {
    const int span = config_.autoencode ? 0 : lag;
    for (std::size_t s = 0; s < sequences.size(); ++s) {
      for (Eigen::Index t = 0; t + span < sequences[s].cols(); ++t) pairs[static_cast<std::size_t>(lag)].emplace_back(s, t);
    }
    if (pairs[static_cast<std::size_t>(lag)].empty()) throw InvalidArgument("vae: no training pairs for lag " + std::to_string(lag));
  }
  const Eigen::Index dim = config_.input_dim;
  const int B = config_.train.batch_size;
  Rng rng(config_.seed ^ 0x5EED'0002ULL);
  auto hist = run_training(params_, config_.train, rng, [&](ad::Tape& tape, Rng& r) {
    std::uniform_int_distribution<int> pick_lag(1, k);
    Matrix in(dim, B), target(dim, B);
    std::vector<int> lags(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      const int lag = config_.autoencode ? 1 : pick_lag(r);
      const auto& cand = pairs[static_cast<std::size_t>(lag)];
      const auto [s, t] = cand[std::uniform_int_distribution<std::size_t>(0, cand.size() - 1)(r)];
      in.col(b) = sequences[s].col(t);
      target.col(b) = sequences[s].col(config_.autoencode ? t : t + lag);
      lags[static_cast<std::size_t>(b)] = lag;
    }
    const Matrix eps = standard_normal(r, config_.latent_dim, B);
    return (1.0 / B) * loss(tape, in, target, lags, eps);
  });
  loss_history.insert(loss_history.end(), hist.begin(), hist.end());
}

Matrix VaeModel::predict_block(const Matrix& context, int horizon, Rng* sample_rng) const {
  if (context.cols() < 1) throw InvalidArgument("vae predict_block: empty context");
  if (horizon < 0 || horizon > config_.max_lag) {
    throw InvalidArgument("vae predict_block: horizon " + std::to_string(horizon) + " exceeds max lag " +
                          std::to_string(config_.max_lag));
  }
  require_same_size(context.rows(), config_.input_dim, "vae predict_block");
  const Vector last = normalize(context.col(context.cols() - 1), stats);
  const DiagGaussian q = encode(last);
  Matrix out(config_.input_dim, horizon);
  for (int lag = 1; lag <= horizon; ++lag) {
    const Vector eps = sample_rng ? Vector(standard_normal(*sample_rng, config_.latent_dim, 1)) : Vector::Zero(config_.latent_dim);
    out.col(lag - 1) = decode(reparameterize(q, eps), lag).mean;
  }
  return denormalize_columns(out, stats);
}

Checkpoint VaeModel::to_checkpoint() const {
  Checkpoint c;
  c.kind = ModelKind::Vae;
  c.put_scalar("cfg.input_dim", config_.input_dim);
  c.put_scalar("cfg.latent_dim", config_.latent_dim);
  c.put_vector("cfg.encoder_hidden", std::vector<double>(config_.encoder_hidden.begin(), config_.encoder_hidden.end()));
  c.put_vector("cfg.decoder_hidden", std::vector<double>(config_.decoder_hidden.begin(), config_.decoder_hidden.end()));
  c.put_scalar("cfg.max_lag", config_.max_lag);
  c.put_scalar("cfg.beta", config_.beta);
  c.put_scalar("cfg.min_log_var", config_.min_log_var);
  c.put_scalar("cfg.autoencode", config_.autoencode ? 1 : 0);
  put_train_options(c, config_.train);
  put_seed(c, config_.seed);
  c.put_stats(stats);
  c.put_vector("train.loss_history", loss_history);
  c.put_params(params_);
  return c;
}

VaeModel VaeModel::from_checkpoint(const Checkpoint& c) {
  if (c.kind != ModelKind::Vae) throw DecodeError("checkpoint is not a VAE model");
  VaeConfig cfg;
  cfg.input_dim = c.integer("cfg.input_dim");
  cfg.latent_dim = c.integer("cfg.latent_dim");
  cfg.encoder_hidden.clear();
  for (double v : c.vector("cfg.encoder_hidden")) cfg.encoder_hidden.push_back(static_cast<int>(v));
  cfg.decoder_hidden.clear();
  for (double v : c.vector("cfg.decoder_hidden")) cfg.decoder_hidden.push_back(static_cast<int>(v));
  cfg.max_lag = c.integer("cfg.max_lag");
  cfg.beta = c.scalar("cfg.beta");
  cfg.min_log_var = c.scalar("cfg.min_log_var");
  cfg.autoencode = c.integer("cfg.autoencode") != 0;
  cfg.train = get_train_options(c);
  cfg.seed = get_seed(c);
  VaeModel m(cfg);
  m.stats = c.stats();
  m.loss_history = c.vector("train.loss_history");
  c.load_params(m.params_);
  return m;
}

VaeModel vae_train(std::span<const KeypointSequence> dataset, const VaeConfig& config,
                   std::optional<NormalizationStats> stats) {
  if (dataset.empty()) throw InvalidArgument("vae_train: empty dataset");
  for (const auto& s : dataset) {
    if (config.max_lag >= static_cast<int>(s.size())) {
      throw InvalidArgument("vae_train: max lag " + std::to_string(config.max_lag) + " >= length of sequence '" +
                            s.source_id + "'");
    }
  }
  VaeModel model(config);
  model.stats = stats ? *stats : compute_stats(dataset, "training data");
  const auto seqs = normalized_matrices(dataset, model.stats);
  model.fit(seqs);
  return model;
}

}  // namespace kpstream
