// kpstream: generate keypoint datasets, train forecasters, simulate the
// send/predict protocol and tabulate results.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kpstream/evaluation.hpp"
#include "kpstream/model_io.hpp"
#include "kpstream/predictor.hpp"
#include "kpstream/protocol.hpp"
#include "kpstream/synth.hpp"

namespace fs = std::filesystem;
using namespace kpstream;

namespace {

struct Globals {
  fs::path config;
  std::uint64_t seed = 1;
  fs::path out = "out";
  int jobs = 1;
};

struct GenerateOpts {
  std::string kind = "periodic";
  std::string name;
  int sequences = 20;
  int frames = 120;
  double fps = 30.0;
  int regimes = 3;
  double switch_prob = 0.05;
  double train_fraction = 0.8;
};

struct TrainOpts {
  fs::path manifest;
  std::string model;
  int steps = TrainOptions{}.steps;
  int batch = TrainOptions{}.batch_size;
  double lr = AdamOptions{}.lr;
  double clip = AdamOptions{}.clip_norm;
  int k = 6;
  int hidden = 128;
  int latent = 32;
  std::string cell = "gated";
  double beta = 1.0;
};

struct SimulateOpts {
  fs::path manifest;
  std::vector<fs::path> checkpoints;
  bool oracle = false;
  bool persistence = false;
  std::vector<int> k{6};
  int k_in = 0;
  int k_out = 0;
  bool persistent_context = false;
  std::string mode = "reconstruction";
  std::string split = "test";
  bool transcripts = false;
  bool sample = false;
};

struct ReportOpts {
  std::vector<fs::path> results;
};

/// key = value pairs in file order; '#' starts a comment line.
std::vector<std::pair<std::string, std::string>> read_config(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  for (int n = 1; std::getline(in, line); ++n) {
    const auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError(fmt::format("{}:{}: expected key=value", path.string(), n));
    out.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return out;
}

/// Fills options not given on the command line from the config file.
void apply_config(CLI::App& app, CLI::App& sub, const fs::path& path) {
  for (const auto& [key, value] : read_config(path)) {
    CLI::Option* opt = sub.get_option_no_throw("--" + key);
    if (!opt) opt = app.get_option_no_throw("--" + key);
    if (!opt || key == "config") throw CLI::ValidationError(fmt::format("unknown config key '{}'", key));
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

/// Resolved settings, written next to every command's outputs.
class ConfigRecord {
 public:
  template <typename T>
  ConfigRecord& add(const std::string& key, const T& value) {
    lines_ += fmt::format("{}={}\n", key, value);
    return *this;
  }
  ConfigRecord& add(const std::string& key, const fs::path& value) { return add(key, value.string()); }
  ConfigRecord& add(const std::string& key, bool value) { return add(key, std::string(value ? "true" : "false")); }
  template <typename T>
  ConfigRecord& add_list(const std::string& key, const std::vector<T>& values) {
    std::vector<std::string> parts;
    for (const auto& v : values) {
      if constexpr (std::is_same_v<T, fs::path>) {
        parts.push_back(v.string());
      } else {
        parts.push_back(fmt::format("{}", v));
      }
    }
    return add(key, fmt::format("{}", fmt::join(parts, ",")));
  }
  void write(const fs::path& path) const { write_file_atomic(path, lines_); }

 private:
  std::string lines_;
};

ConfigRecord base_record(const std::string& command, const Globals& g) {
  ConfigRecord r;
  r.add("command", command).add("seed", g.seed).add("out", g.out).add("jobs", g.jobs);
  return r;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(const Globals& g, const GenerateOpts& o) {
  std::vector<KeypointSequence> seqs;
  if (o.kind == "periodic") {
    seqs = synth_periodic(g.seed, o.sequences, o.frames, o.fps);
  } else if (o.kind == "constant") {
    SynthRanges r;
    r.amplitude_scale = 0.0;
    seqs = synth_periodic(g.seed, o.sequences, o.frames, o.fps, r);
  } else {
    seqs = synth_switching(g.seed, o.sequences, o.frames, o.fps, o.regimes, o.switch_prob);
  }
  if (!(o.train_fraction > 0.0 && o.train_fraction <= 1.0)) throw InvalidArgument("train-fraction must lie in (0, 1]");

  // Seeded shuffle of sequence indices; the first share becomes the training split.
  const std::size_t n = seqs.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(g.seed ^ 0x5B1170000ULL);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(o.train_fraction * static_cast<double>(n)));
  n_train = std::clamp<std::size_t>(n_train, 1, n);
  if (n >= 2 && o.train_fraction < 1.0) n_train = std::min(n_train, n - 1);
  std::vector<std::size_t> train_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test_idx(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  std::vector<KeypointSequence> train, test;
  for (auto i : train_idx) train.push_back(seqs[i]);
  for (auto i : test_idx) test.push_back(seqs[i]);
  for (auto& s : train) s.split = Split::Train;
  for (auto& s : test) s.split = Split::Test;

  ensure_dir(g.out);
  save_sequences(train, g.out / "train.kpseq");
  save_sequences(test, g.out / "test.kpseq");
  DatasetManifest m;
  m.name = o.name.empty() ? o.kind : o.name;
  m.kind = o.kind;
  m.seed = g.seed;
  m.entries = {{"train.kpseq", Split::Train}, {"test.kpseq", Split::Test}};
  m.stats = compute_stats(train, m.name + "/train");
  m.extras = {{"sequences", std::to_string(o.sequences)},
              {"frames", std::to_string(o.frames)},
              {"fps", fmt::format("{}", o.fps)},
              {"train_fraction", fmt::format("{}", o.train_fraction)}};
  if (o.kind == "switching") {
    m.extras.emplace_back("regimes", std::to_string(o.regimes));
    m.extras.emplace_back("switch_prob", fmt::format("{}", o.switch_prob));
  }
  save_manifest(m, g.out / "manifest.txt");
  base_record("generate", g)
      .add("kind", o.kind)
      .add("name", m.name)
      .add("sequences", o.sequences)
      .add("frames", o.frames)
      .add("fps", o.fps)
      .add("regimes", o.regimes)
      .add("switch-prob", o.switch_prob)
      .add("train-fraction", o.train_fraction)
      .write(g.out / "generate.config.txt");

  std::size_t tmin = seqs.front().size(), tmax = tmin;
  for (const auto& s : seqs) {
    tmin = std::min(tmin, s.size());
    tmax = std::max(tmax, s.size());
  }
  fmt::print("dataset {}: {} sequences ({} train, {} test), T in [{}, {}], {} fps\n", m.name, n, train.size(),
             test.size(), tmin, tmax, o.fps);
  const auto& st = m.stats;
  fmt::print("coordinates (train): mean in [{:.4f}, {:.4f}], std in [{:.4g}, {:.4g}]\n",
             st.mean.head(kCoordDims).minCoeff(), st.mean.head(kCoordDims).maxCoeff(),
             st.std.head(kCoordDims).minCoeff(), st.std.head(kCoordDims).maxCoeff());
  fmt::print("jacobians (train):   mean in [{:.4f}, {:.4f}], std in [{:.4g}, {:.4g}]\n",
             st.mean.tail(kJacobianDims).minCoeff(), st.mean.tail(kJacobianDims).maxCoeff(),
             st.std.tail(kJacobianDims).minCoeff(), st.std.tail(kJacobianDims).maxCoeff());
  fmt::print("wrote {}\n", (g.out / "manifest.txt").string());
  return 0;
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const Globals& g, const TrainOpts& o) {
  if (o.manifest.empty()) throw CLI::RequiredError("--manifest");
  if (o.model.empty()) throw CLI::RequiredError("--model");
  const DatasetManifest m = load_manifest(o.manifest);
  const auto train = m.load_split(Split::Train);
  TrainOptions t;
  t.steps = o.steps;
  t.batch_size = o.batch;
  t.adam.lr = o.lr;
  t.adam.clip_norm = o.clip;
  const CellKind cell = cell_kind_from_string(o.cell);
  spdlog::info("training {} on {} ({} sequences, {} steps)", o.model, m.name, train.size(), o.steps);

  Checkpoint ckpt;
  std::vector<double> history;
  if (o.model == "rnn") {
    RnnConfig c;
    c.hidden_dim = o.hidden;
    c.head_hidden = {o.hidden};
    c.cell = cell;
    c.k = o.k;
    c.train = t;
    c.seed = g.seed;
    const RnnModel model = rnn_train(train, c, m.stats);
    ckpt = model.to_checkpoint();
    history = model.loss_history;
  } else if (o.model == "vae") {
    VaeConfig c;
    c.latent_dim = o.latent;
    c.encoder_hidden = {o.hidden};
    c.decoder_hidden = {o.hidden};
    c.max_lag = o.k;
    c.beta = o.beta;
    c.train = t;
    c.seed = g.seed;
    const VaeModel model = vae_train(train, c, m.stats);
    ckpt = model.to_checkpoint();
    history = model.loss_history;
  } else {
    VrnnConfig c;
    c.hidden_dim = o.hidden;
    c.latent_dim = o.latent;
    c.cell = cell;
    c.k = o.k;
    c.train = t;
    c.seed = g.seed;
    const VrnnModel model = vrnn_train(train, c, m.stats);
    ckpt = model.to_checkpoint();
    history = model.loss_history;
  }

  ensure_dir(g.out);
  const fs::path ckpt_path = g.out / (o.model + ".ckpt");
  save_checkpoint(ckpt, ckpt_path);
  std::string loss = "step,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i) loss += fmt::format("{},{}\n", i + 1, history[i]);
  write_file_atomic(g.out / (o.model + ".loss.csv"), loss);
  base_record("train", g)
      .add("manifest", o.manifest)
      .add("model", o.model)
      .add("steps", o.steps)
      .add("batch", o.batch)
      .add("lr", o.lr)
      .add("clip", o.clip)
      .add("k", o.k)
      .add("hidden", o.hidden)
      .add("latent", o.latent)
      .add("cell", o.cell)
      .add("beta", o.beta)
      .write(g.out / (o.model + ".train.config.txt"));

  const std::size_t w = std::min<std::size_t>(20, history.size());
  fmt::print("{}: initial loss {:.6g}, final loss {:.6g} (mean of last {} steps {:.6g})\n", o.model,
             history.front(), history.back(), w, tail_mean(history, w));
  fmt::print("wrote {}\n", ckpt_path.string());
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

struct Source {
  std::string label;
  std::optional<Checkpoint> checkpoint;  // empty for the built-in predictors
};

struct CellOutput {
  MetricResult result;
  std::vector<std::string> session_rows;
  std::vector<std::pair<fs::path, std::vector<Bytes>>> transcripts;
};

int cmd_simulate(const Globals& g, const SimulateOpts& o) {
  if (o.manifest.empty()) throw CLI::RequiredError("--manifest");
  if (o.checkpoints.empty() && !o.oracle && !o.persistence) {
    throw CLI::ValidationError("simulate needs --checkpoint, --oracle or --persistence");
  }
  const DatasetManifest m = load_manifest(o.manifest);
  ExperimentData data;
  data.stats = m.stats;
  if (o.split == "all") {
    data.test = m.load_all();
  } else {
    data.test = m.load_split(o.split == "train" ? Split::Train : Split::Test);
  }
  if (data.test.empty()) throw InvalidArgument("manifest has no sequences in split '" + o.split + "'");
  const EvalMode mode = eval_mode_from_string(o.mode);

  std::vector<std::pair<int, int>> blocks;
  if (o.k_in > 0 || o.k_out > 0) {
    if (o.k_in <= 0 || o.k_out <= 0) throw CLI::ValidationError("--k-in and --k-out must be given together");
    blocks.emplace_back(o.k_in, o.k_out);
  } else {
    for (int k : o.k) blocks.emplace_back(k, k);
  }

  std::vector<Source> sources;
  for (const auto& p : o.checkpoints) sources.push_back({p.string(), load_checkpoint(p)});
  if (o.oracle) sources.push_back({"oracle", std::nullopt});
  if (o.persistence) sources.push_back({"persistence", std::nullopt});

  struct Cell {
    const Source* source;
    CellSpec spec;
  };
  std::vector<Cell> cells;
  std::set<std::tuple<std::string, int, int, std::uint64_t>> seen;
  for (const auto& s : sources) {
    const std::string model = s.checkpoint ? kind_name(s.checkpoint->kind) : s.label;
    const std::uint64_t seed = s.checkpoint ? get_seed(*s.checkpoint) : g.seed;
    for (const auto& [kin, kout] : blocks) {
      if (!seen.insert({model, kin, kout, seed}).second) {
        throw CLI::ValidationError(fmt::format("two sources give {} with seed {} at k = {}/{}", model, seed, kin, kout));
      }
      cells.push_back({&s, {m.name, model, kin, kout, seed}});
    }
  }

  std::vector<CellOutput> outputs(cells.size());
  parallel_for(cells.size(), g.jobs, [&](std::size_t c) {
    const Cell& cell = cells[c];
    std::unique_ptr<BlockPredictor> shared;
    if (cell.source->checkpoint) {
      shared = make_predictor(*cell.source->checkpoint, o.sample ? RolloutMode::Sample : RolloutMode::Mean, g.seed);
    } else if (!o.oracle || cell.source->label != "oracle") {
      shared = std::make_unique<PersistencePredictor>();
    }
    SessionOptions opts;
    opts.k_in = cell.spec.k_in;
    opts.k_out = cell.spec.k_out;
    opts.persistent_context = o.persistent_context;
    opts.stats = data.stats;
    opts.keep_transcript = o.transcripts;
    std::vector<SessionResult> sessions;
    CellOutput& out = outputs[c];
    for (std::size_t s = 0; s < data.test.size(); ++s) {
      const KeypointSequence& seq = data.test[s];
      opts.session_id = s + 1;
      std::unique_ptr<BlockPredictor> oracle;
      if (!shared) oracle = std::make_unique<OracleReplayPredictor>(seq.to_matrix());
      SessionResult res = simulate_session(seq, shared ? *shared : *oracle, opts);
      const auto& r = res.report;
      out.session_rows.push_back(fmt::format(
          "{},{},{},{},{},{},{},{},{},{},{}", cell.spec.model, r.k_in, r.k_out, seq.source_id, r.length,
          r.frames_sent, r.frames_predicted, r.bytes_sent, r.bytes_baseline, r.bandwidth_ratio,
          r.frame_mse.empty() ? std::string("nan") : fmt::format("{}", r.mean_mse())));
      if (o.transcripts) {
        const std::string k = r.k_in == r.k_out ? std::to_string(r.k_in) : fmt::format("{}x{}", r.k_in, r.k_out);
        out.transcripts.emplace_back(
            g.out / "transcripts" / fmt::format("{}_{}_{}", cell.spec.model, k, cell.spec.seed) /
                (seq.source_id + ".kps"),
            std::move(res.transcript));
      }
      sessions.push_back(std::move(res));
    }
    out.result = score_cell(cell.spec, mode, data, sessions);
  });

  ensure_dir(g.out);
  std::vector<MetricResult> results;
  std::string session_csv =
      "model,k_in,k_out,sequence,length,frames_sent,frames_predicted,bytes_sent,bytes_baseline,bandwidth_ratio,mse\n";
  std::vector<TransmissionReport> reports;
  for (auto& out : outputs) {
    if (out.result.frames_evaluated == 0) {
      spdlog::warn("{} at k = {}/{}: no sequence is long enough for a send/predict cycle; nothing was predicted",
                   out.result.model, out.result.k_in, out.result.k_out);
    }
    for (const auto& row : out.session_rows) session_csv += row + "\n";
    for (const auto& [path, frames] : out.transcripts) {
      ensure_dir(path.parent_path());
      save_transcript(frames, path);
    }
    write_file_atomic(g.out / trace_file_name(out.result), format_trace(out.result));
    results.push_back(std::move(out.result));
  }
  write_file_atomic(g.out / "results.csv", format_report(results));
  write_file_atomic(g.out / "sessions.csv", session_csv);
  auto rec = base_record("simulate", g);
  rec.add("manifest", o.manifest).add_list("checkpoint", o.checkpoints).add("oracle", o.oracle);
  rec.add("persistence", o.persistence).add_list("k", o.k).add("k-in", o.k_in).add("k-out", o.k_out);
  rec.add("persistent-context", o.persistent_context).add("mode", o.mode).add("split", o.split);
  rec.add("transcripts", o.transcripts).add("sample", o.sample);
  rec.write(g.out / "simulate.config.txt");

  fmt::print("{:<12} {:>4} {:>5} {:>8} {:>11} {:>9} {:>12} {:>12}\n", "model", "k_in", "k_out", "frames",
             "bandwidth", "savings", "mse", "fkd");
  for (const auto& r : results) {
    fmt::print("{:<12} {:>4} {:>5} {:>8} {:>11.4f} {:>9.4f} {:>12.6g} {:>12.6g}\n", r.model, r.k_in, r.k_out,
               r.frames_evaluated, r.bandwidth_ratio, r.savings_factor, r.mse, r.fkd);
  }
  fmt::print("wrote {}\n", (g.out / "results.csv").string());
  return 0;
}

// ---------------------------------------------------------------------------
// report

std::vector<MetricResult::TracePoint> parse_trace(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<MetricResult::TracePoint> out;
  std::getline(in, line);
  if (line != "sequence,frame,mse") throw ParseError("trace file has an unexpected header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.rfind(',');
    const auto b = line.rfind(',', a - 1);
    if (a == std::string::npos || b == std::string::npos) throw ParseError("bad trace line '" + line + "'");
    out.push_back({line.substr(0, b), std::stoul(line.substr(b + 1, a - b - 1)), std::stod(line.substr(a + 1))});
  }
  return out;
}

int cmd_report(const Globals& g, const ReportOpts& o) {
  if (o.results.empty()) throw CLI::RequiredError("--results");
  std::vector<fs::path> files;
  for (const auto& dir : o.results) {
    if (!fs::is_directory(dir)) throw IoError("results directory " + dir.string() + " does not exist");
    for (const auto& e : fs::recursive_directory_iterator(dir))
      if (e.is_regular_file() && e.path().filename() == "results.csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<MetricResult> results;
  for (const auto& f : files) {
    for (auto& r : parse_report(read_file(f))) {
      const fs::path trace = f.parent_path() / trace_file_name(r);
      if (fs::exists(trace)) r.trace = parse_trace(read_file(trace));
      results.push_back(std::move(r));
    }
  }
  if (results.empty()) {
    std::vector<std::string> dirs;
    for (const auto& d : o.results) dirs.push_back(d.string());
    throw IoError(fmt::format("no results found under {}", fmt::join(dirs, ", ")));
  }
  emit_report(results, g.out);
  base_record("report", g).add_list("results", o.results).write(g.out / "report.config.txt");
  fmt::print("{}", format_aggregate(aggregate(results)));
  fmt::print("wrote {}\n", (g.out / "report.csv").string());
  return 0;
}

void setup_logging() {
  auto logger = spdlog::stderr_color_mt("kpstream");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("KPSTREAM_LOG")) {
    const std::string v = env;
    const auto level = spdlog::level::from_str(v);
    if (level == spdlog::level::off && v != "off") {
      spdlog::warn("KPSTREAM_LOG='{}' is not a log level; using info", v);
    } else {
      spdlog::set_level(level);
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  setup_logging();
  CLI::App app{"Keypoint-stream predictive transmission toolkit"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "key=value file; command-line flags take precedence")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_option("--jobs", g.jobs, "Worker threads for independent cells")->check(CLI::PositiveNumber);

  GenerateOpts gen;
  auto* generate = app.add_subcommand("generate", "Write a synthetic keypoint dataset and its manifest");
  generate->add_option("--kind", gen.kind, "periodic, switching or constant")
      ->check(CLI::IsMember({"periodic", "switching", "constant"}));
  generate->add_option("--name", gen.name, "Dataset name (defaults to the kind)");
  generate->add_option("--sequences", gen.sequences, "Number of sequences")->check(CLI::PositiveNumber);
  generate->add_option("--frames", gen.frames, "Frames per sequence (at least 4)");
  generate->add_option("--fps", gen.fps, "Nominal frame rate");
  generate->add_option("--regimes", gen.regimes, "Switching: number of motion regimes");
  generate->add_option("--switch-prob", gen.switch_prob, "Switching: per-frame switch probability");
  generate->add_option("--train-fraction", gen.train_fraction, "Share of sequences in the training split");

  TrainOpts tr;
  auto* train = app.add_subcommand("train", "Train a forecaster on a manifest's training split");
  train->add_option("--manifest", tr.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  train->add_option("--model", tr.model, "rnn, vae or vrnn")->check(CLI::IsMember({"rnn", "vae", "vrnn"}));
  train->add_option("--steps", tr.steps, "Optimizer steps")->check(CLI::PositiveNumber);
  train->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
  train->add_option("--lr", tr.lr, "Adam learning rate");
  train->add_option("--clip", tr.clip, "Global gradient-norm cap (<= 0 disables)");
  train->add_option("--k", tr.k, "Block size (windows of 2k; VAE max lag)")->check(CLI::PositiveNumber);
  train->add_option("--hidden", tr.hidden, "Hidden width")->check(CLI::PositiveNumber);
  train->add_option("--latent", tr.latent, "Latent width (VAE, VRNN)")->check(CLI::PositiveNumber);
  train->add_option("--cell", tr.cell, "Recurrent cell: gated or simple-tanh")
      ->check(CLI::IsMember({"gated", "gru", "simple-tanh", "tanh"}));
  train->add_option("--beta", tr.beta, "VAE KL weight");

  SimulateOpts sim;
  auto* simulate = app.add_subcommand("simulate", "Stream test sequences through the send/predict protocol");
  simulate->add_option("--manifest", sim.manifest, "Dataset manifest")->check(CLI::ExistingFile);
  simulate->add_option("--checkpoint", sim.checkpoints, "Model checkpoint(s)")->check(CLI::ExistingFile)->delimiter(',');
  simulate->add_flag("--oracle", sim.oracle, "Add a predictor that replays ground truth");
  simulate->add_flag("--persistence", sim.persistence, "Add the repeat-last-frame baseline");
  simulate->add_option("--k", sim.k, "Block size(s)")->delimiter(',')->check(CLI::PositiveNumber);
  simulate->add_option("--k-in", sim.k_in, "Context frames per cycle (with --k-out)");
  simulate->add_option("--k-out", sim.k_out, "Predicted frames per cycle (with --k-in)");
  simulate->add_flag("--persistent-context", sim.persistent_context, "Give predictors every frame held so far");
  simulate->add_option("--mode", sim.mode, "reconstruction or transfer")
      ->check(CLI::IsMember({"reconstruction", "transfer"}));
  simulate->add_option("--split", sim.split, "test, train or all")->check(CLI::IsMember({"test", "train", "all"}));
  simulate->add_flag("--transcripts", sim.transcripts, "Write wire transcripts per session");
  simulate->add_flag("--sample", sim.sample, "VRNN: sample latents instead of using means");

  ReportOpts rep;
  auto* report = app.add_subcommand("report", "Collect simulate results into report tables");
  report->add_option("--results", rep.results, "Directories searched for results.csv")->delimiter(',');

  try {
    app.parse(argc, argv);
    CLI::App* sub = app.get_subcommands().front();
    if (!g.config.empty()) apply_config(app, *sub, g.config);
    if (sub == generate) return cmd_generate(g, gen);
    if (sub == train) return cmd_train(g, tr);
    if (sub == simulate) return cmd_simulate(g, sim);
    return cmd_report(g, rep);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const NonFiniteError& e) {
    spdlog::error("{} (parameter '{}')", e.what(), e.name());
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
  }
  return 1;
}
