#include "kpstream/rnn.hpp"

#include "kpstream/model_io.hpp"

namespace kpstream {

namespace {

std::vector<int> head_sizes(const RnnConfig& c) {
  std::vector<int> s{c.hidden_dim};
  s.insert(s.end(), c.head_hidden.begin(), c.head_hidden.end());
  s.push_back(c.input_dim);
  return s;
}

void check_config(const RnnConfig& c) {
  if (c.input_dim <= 0 || c.hidden_dim <= 0 || c.k <= 0) throw InvalidArgument("RnnConfig: dims and k must be positive");
}

}  // namespace

RnnModel::RnnModel(const RnnConfig& config) : stats(NormalizationStats::identity(config.input_dim)), config_(config) {
  check_config(config_);
  Rng init(config_.seed);
  cell_ = RecurrentCell(params_, "rnn.cell", config_.input_dim, config_.hidden_dim, config_.cell, init);
  head_ = Mlp(params_, "rnn.head", head_sizes(config_), Activation::Tanh, Activation::Identity, init);
}

ad::Var RnnModel::step(ad::Tape& tape, ad::Var h, ad::Var x) const { return cell_.step(tape, params_, x, h); }

ad::Var RnnModel::output(ad::Tape& tape, ad::Var h) const { return head_.forward(tape, params_, h); }

Vector RnnModel::step(const Vector& h, const Vector& x) const {
  require_same_size(x.size(), config_.input_dim, "rnn_step");
  require_same_size(h.size(), config_.hidden_dim, "rnn_step");
  ad::Tape tape(false);
  return step(tape, tape.constant(h), tape.constant(x)).value();
}

Vector RnnModel::output(const Vector& h) const {
  require_same_size(h.size(), config_.hidden_dim, "rnn_output");
  ad::Tape tape(false);
  return output(tape, tape.constant(h)).value();
}

ad::Var RnnModel::window_loss(ad::Tape& tape, std::span<const Matrix> window, int context_len) const {
  const int W = static_cast<int>(window.size());
  if (context_len < 1 || context_len >= W) throw InvalidArgument("window_loss: need 1 <= context_len < window length");
  const Eigen::Index batch = window.front().cols();
  ad::Var h = tape.constant(Matrix::Zero(config_.hidden_dim, batch));
  ad::Var total;
  ad::Var pred;
  for (int t = 0; t + 1 < W; ++t) {
    const ad::Var input = t < context_len ? tape.constant(window[static_cast<std::size_t>(t)]) : pred;
    h = step(tape, h, input);
    pred = output(tape, h);
    const ad::Var err = ad::sum(ad::square(pred - tape.constant(window[static_cast<std::size_t>(t + 1)])));
    total = total.valid() ? total + err : err;
  }
  const double denom = static_cast<double>((W - 1) * config_.input_dim * batch);
  return (1.0 / denom) * total;
}

void RnnModel::fit(std::span<const Matrix> sequences) {
  const WindowSampler sampler(sequences, 2 * config_.k);
  Rng rng(config_.seed ^ 0x5EED'0001ULL);
  auto hist = run_training(params_, config_.train, rng, [&](ad::Tape& tape, Rng& r) {
    const auto batch = sampler.sample(r, config_.train.batch_size);
    return window_loss(tape, batch, config_.k);
  });
  loss_history.insert(loss_history.end(), hist.begin(), hist.end());
}

Matrix RnnModel::predict_block(const Matrix& context, int horizon) const {
  if (context.cols() < 1) throw InvalidArgument("rnn predict_block: empty context");
  if (horizon < 0) throw InvalidArgument("rnn predict_block: negative horizon");
  require_same_size(context.rows(), config_.input_dim, "rnn predict_block");
  const Matrix norm = normalize_columns(context, stats);
  ad::Tape tape(false);
  ad::Var h = tape.constant(Matrix::Zero(config_.hidden_dim, 1));
  for (Eigen::Index t = 0; t < norm.cols(); ++t) h = step(tape, h, tape.constant(norm.col(t)));
  Matrix out(config_.input_dim, horizon);
  for (int j = 0; j < horizon; ++j) {
    const ad::Var pred = output(tape, h);
    out.col(j) = pred.value();
    if (j + 1 < horizon) h = step(tape, h, pred);
  }
  return denormalize_columns(out, stats);
}

Checkpoint RnnModel::to_checkpoint() const {
  Checkpoint c;
  c.kind = ModelKind::Rnn;
  c.put_scalar("cfg.input_dim", config_.input_dim);
  c.put_scalar("cfg.hidden_dim", config_.hidden_dim);
  c.put_scalar("cfg.cell", config_.cell == CellKind::Gated ? 0 : 1);
  c.put_vector("cfg.head_hidden", std::vector<double>(config_.head_hidden.begin(), config_.head_hidden.end()));
  c.put_scalar("cfg.k", config_.k);
  put_train_options(c, config_.train);
  put_seed(c, config_.seed);
  c.put_stats(stats);
  c.put_vector("train.loss_history", loss_history);
  c.put_params(params_);
  return c;
}

RnnModel RnnModel::from_checkpoint(const Checkpoint& c) {
  if (c.kind != ModelKind::Rnn) throw DecodeError("checkpoint is not an RNN model");
  RnnConfig cfg;
  cfg.input_dim = c.integer("cfg.input_dim");
  cfg.hidden_dim = c.integer("cfg.hidden_dim");
  cfg.cell = c.integer("cfg.cell") == 0 ? CellKind::Gated : CellKind::SimpleTanh;
  cfg.head_hidden.clear();
  for (double v : c.vector("cfg.head_hidden")) cfg.head_hidden.push_back(static_cast<int>(v));
  cfg.k = c.integer("cfg.k");
  cfg.train = get_train_options(c);
  cfg.seed = get_seed(c);
  RnnModel m(cfg);
  m.stats = c.stats();
  m.loss_history = c.vector("train.loss_history");
  c.load_params(m.params_);
  return m;
}

RnnModel rnn_train(std::span<const KeypointSequence> dataset, const RnnConfig& config,
                   std::optional<NormalizationStats> stats) {
  if (dataset.empty()) throw InvalidArgument("rnn_train: empty dataset");
  for (const auto& s : dataset) {
    if (static_cast<int>(s.size()) < 2 * config.k) {
      throw InvalidArgument("rnn_train: sequence '" + s.source_id + "' is shorter than 2k = " +
                            std::to_string(2 * config.k));
    }
  }
  RnnModel model(config);
  model.stats = stats ? *stats : compute_stats(dataset, "training data");
  const auto seqs = normalized_matrices(dataset, model.stats);
  model.fit(seqs);
  return model;
}

}  // namespace kpstream
