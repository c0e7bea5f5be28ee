// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. `acceptance 3 5` runs only criteria 3 and 5.

#include <unistd.h>

#include <chrono>
#include <cstring>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>

#include <fmt/format.h>

#include "kpstream/evaluation.hpp"
#include "kpstream/gaussian.hpp"
#include "kpstream/grad_check.hpp"
#include "kpstream/predictor.hpp"
#include "kpstream/protocol.hpp"
#include "kpstream/synth.hpp"

#ifndef KPSTREAM_CLI
#error "KPSTREAM_CLI must name the kpstream executable"
#endif

using namespace kpstream;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + what;
    }
  }
  void note(const std::string& what) { detail += (detail.empty() ? "" : "; ") + what; }
};

void jitter(ParamStore& s, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [n, p] : s) p.value += 0.1 * standard_normal(rng, p.value.rows(), p.value.cols());
}

std::vector<Matrix> time_major(const Matrix& m) {
  std::vector<Matrix> out;
  for (Eigen::Index t = 0; t < m.cols(); ++t) out.emplace_back(m.col(t));
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradients() {
  constexpr int kIn = 6, kHidden = 8, kLatent = 4, kT = 5;
  Outcome o;
  double worst = 0.0;
  const auto check = [&](const std::string& label, const LossBuilder& loss, ParamStore& params, std::uint64_t seed) {
    Rng probe(seed);
    const auto r = grad_check(loss, params, 0, probe);
    worst = std::max(worst, r.max_rel_error);
    o.require(r.max_rel_error < 1e-4, fmt::format("{} {:.2e} at {}[{}]", label, r.max_rel_error, r.worst_param,
                                                  r.worst_index));
  };
  for (CellKind cell : {CellKind::Gated, CellKind::SimpleTanh}) {
    RnnConfig c;
    c.input_dim = kIn;
    c.hidden_dim = kHidden;
    c.head_hidden = {kHidden};
    c.cell = cell;
    c.k = 2;
    RnnModel m(c);
    jitter(m.params(), 1);
    Rng rng(2);
    std::vector<Matrix> batch;
    for (const auto& f : time_major(standard_normal(rng, kIn, kT)))
      batch.push_back(f.replicate(1, 2) + 0.1 * standard_normal(rng, kIn, 2));
    check(std::string("rnn/") + to_string(cell), [&](ad::Tape& t) { return m.window_loss(t, batch, 3); }, m.params(), 3);
  }
  {
    VaeConfig c;
    c.input_dim = kIn;
    c.latent_dim = kLatent;
    c.encoder_hidden = {kHidden};
    c.decoder_hidden = {kHidden};
    c.max_lag = 3;
    VaeModel m(c);
    jitter(m.params(), 4);
    Rng rng(5);
    const Matrix xin = standard_normal(rng, kIn, kT), xt = standard_normal(rng, kIn, kT);
    const Matrix eps = standard_normal(rng, kLatent, kT);
    const std::vector<int> lags = {1, 2, 3, 1, 2};
    check("vae", [&](ad::Tape& t) { return m.loss(t, xin, xt, lags, eps); }, m.params(), 6);
  }
  for (CellKind cell : {CellKind::Gated, CellKind::SimpleTanh}) {
    VrnnConfig c;
    c.input_dim = kIn;
    c.hidden_dim = kHidden;
    c.latent_dim = kLatent;
    c.feature_dim = kHidden;
    c.net_hidden = kHidden;
    c.cell = cell;
    c.k = 2;
    VrnnModel m(c);
    jitter(m.params(), 7);
    Rng rng(8);
    const auto seq = time_major(standard_normal(rng, kIn, kT));
    const auto eps = time_major(standard_normal(rng, kLatent, kT));
    check(std::string("vrnn/") + to_string(cell), [&](ad::Tape& t) { return m.sequence_loss(t, seq, eps); }, m.params(), 9);
  }
  o.note(fmt::format("max relative error {:.2e}", worst));
  return o;
}

Outcome gaussians() {
  Outcome o;
  const Vector z1 = Vector::Zero(1), one = Vector::Ones(1);
  const double kl1 = gaussian_kl(one, z1, z1, z1);
  const double kl2 = gaussian_kl(z1, Vector::Constant(1, std::log(4.0)), z1, z1);
  o.require(std::abs(kl1 - 0.5) <= 1e-12, fmt::format("KL(N(1,1)||N(0,1)) = {:.15g}", kl1));
  o.require(std::abs(kl2 - 0.806853) <= 1e-6, fmt::format("KL(N(0,4)||N(0,1)) = {:.10g}", kl2));

  // Monte Carlo: KL(q||p) = E_q[log q(x) - log p(x)].
  Rng rng(2024);
  const DiagGaussian q{(Vector(3) << 0.3, -1.0, 0.8).finished(), (Vector(3) << 0.2, -0.5, 0.7).finished()};
  const DiagGaussian p{(Vector(3) << 0.0, 0.5, 1.0).finished(), (Vector(3) << -0.3, 0.1, 0.4).finished()};
  const int n = 1'000'000;
  std::normal_distribution<double> n01;
  double acc = 0.0;
  Vector x(3);
  for (int i = 0; i < n; ++i) {
    for (int d = 0; d < 3; ++d) x(d) = n01(rng);
    x = reparameterize(q, x);
    acc += gaussian_nll(x, p) - gaussian_nll(x, q);
  }
  const double mc = acc / n, exact = gaussian_kl(q, p);
  o.require(std::abs(mc - exact) < 1e-2, fmt::format("Monte Carlo KL {:.5f} vs {:.5f}", mc, exact));

  for (int dim : {1, 7, 60}) {
    const Vector m = Vector::LinSpaced(dim, -2.0, 3.0);
    const double nll = gaussian_nll(m, DiagGaussian{m, Vector::Zero(dim)});
    o.require(std::abs(nll - 0.918938533204672741 * dim) <= 1e-9, fmt::format("nll dim {} = {:.12g}", dim, nll));
  }
  o.note(fmt::format("KL {:.15g}, {:.10g}; Monte Carlo {:.5f} vs {:.5f}", kl1, kl2, mc, exact));
  return o;
}

Outcome scheduler() {
  Outcome o;
  const auto a = schedule_blocks(30, 5);
  o.require(a.frames_sent() == 15, fmt::format("(30,5) sends {}", a.frames_sent()));
  o.require(static_cast<double>(a.frames_sent()) / 30.0 == 0.5, "(30,5) fraction is not 0.5");
  const auto b = schedule_blocks(34, 6);
  o.require(b.frames_sent() == 22, fmt::format("(34,6) sends {}", b.frames_sent()));
  std::size_t cases = 0;
  for (std::size_t L = 1; L <= 500; ++L) {
    for (int k = 1; static_cast<std::size_t>(k) <= L; ++k) {
      const auto s = schedule_blocks(L, k);
      try {
        check_schedule(s);
      } catch (const std::exception& e) {
        o.require(false, fmt::format("L={} k={}: {}", L, k, e.what()));
        return o;
      }
      const std::size_t expect = static_cast<std::size_t>(k) * (L / (2 * static_cast<std::size_t>(k)));
      if (s.frames_predicted() != expect) {
        o.require(false, fmt::format("L={} k={} predicts {} not {}", L, k, s.frames_predicted(), expect));
        return o;
      }
      ++cases;
    }
  }
  o.note(fmt::format("(30,5) sends 15/30, (34,6) sends 22/34, {} (L, k) cases hold", cases));
  return o;
}

Outcome codec() {
  Outcome o;
  Rng rng(77);
  std::uniform_real_distribution<float> val(-1e3f, 1e3f);
  std::uniform_int_distribution<std::uint64_t> u64;
  std::uniform_int_distribution<std::uint32_t> u32;
  int failures = 0;
  for (int i = 0; i < 10'000; ++i) {
    WireFrame w;
    w.session_id = u64(rng);
    w.frame_index = u32(rng);
    if (i % 3 == 0) {
      w.kind = FrameKind::Skip;
    } else {
      w.kind = FrameKind::Key;
      w.payload.resize(kFrameDims);
      for (auto& v : w.payload) v = val(rng);
      if (i % 7 == 0) w.payload[i % kFrameDims] = -0.0f;
    }
    const Bytes bytes = encode_frame(w);
    const WireFrame back = decode_frame(bytes);
    const bool same = back.kind == w.kind && back.session_id == w.session_id && back.frame_index == w.frame_index &&
                      back.payload.size() == w.payload.size() &&
                      std::memcmp(back.payload.data(), w.payload.data(), w.payload.size() * sizeof(float)) == 0 &&
                      encode_frame(back) == bytes;
    const std::size_t expect = w.kind == FrameKind::Key ? 257 : 17;
    if (!same || bytes.size() != expect) ++failures;
  }
  o.require(failures == 0, fmt::format("{} of 10000 frames failed to round-trip", failures));
  o.require(kKeyFrameBytes == 257 && kSkipFrameBytes == 17, "frame sizes");

  const auto seq = synth_periodic(5, 1, 30, 30.0).front();
  OracleReplayPredictor oracle(seq.to_matrix());
  SessionOptions opts;
  opts.k_in = opts.k_out = 5;
  const auto r = simulate_session(seq, oracle, opts).report;
  o.require(r.bytes_sent == 4110 && r.bytes_baseline == 7710, fmt::format("bytes {}/{}", r.bytes_sent, r.bytes_baseline));
  o.require(std::abs(r.bandwidth_ratio - 4110.0 / 7710.0) <= 1e-12, fmt::format("ratio {:.15g}", r.bandwidth_ratio));
  o.note(fmt::format("10000 round trips, KEY 257 B, SKIP 17 B, L=30 k=5 ratio {}/{}", r.bytes_sent, r.bytes_baseline));
  return o;
}

Outcome oracle_end_to_end() {
  Outcome o;
  std::size_t sessions = 0;
  for (int L : {4, 5, 7, 11, 12, 13, 17, 24, 25, 30, 34, 47, 60, 61, 97, 120, 121}) {
    const auto seq = synth_switching(static_cast<std::uint64_t>(L), 1, L, 30.0, 3, 0.05).front();
    const Matrix truth = seq.to_matrix();
    OracleReplayPredictor oracle(truth);
    std::vector<std::pair<int, int>> blocks;
    for (int k = 1; k <= std::min(L, 13); ++k) blocks.emplace_back(k, k);
    blocks.insert(blocks.end(), {{3, 2}, {2, 5}, {6, 4}});
    for (const auto& [kin, kout] : blocks) {
      for (bool persistent : {false, true}) {
        SessionOptions opts;
        opts.k_in = kin;
        opts.k_out = kout;
        opts.persistent_context = persistent;
        const auto res = simulate_session(seq, oracle, opts);
        const Matrix rec = res.reconstructed.to_matrix();
        const double mse = keypoint_mse(rec, truth);
        const double fkd = frechet_keypoint_distance(rec, truth);
        double pred_mse = 0.0;
        for (double v : res.report.frame_mse) pred_mse = std::max(pred_mse, v);
        if (mse != 0.0 || fkd != 0.0 || pred_mse != 0.0 || rec != truth) {
          o.require(false, fmt::format("L={} k={}/{}: mse {} fkd {}", L, kin, kout, mse, fkd));
        }
        ++sessions;
      }
    }
  }
  o.note(fmt::format("{} sessions reconstructed exactly", sessions));
  return o;
}

/// Mean MSE per predicted block, in stream order over all test sequences.
std::vector<double> block_mse(const BlockPredictor& p, const std::vector<KeypointSequence>& test,
                              const NormalizationStats& stats, int k) {
  SessionOptions opts;
  opts.k_in = opts.k_out = k;
  opts.stats = stats;
  std::vector<double> out;
  for (const auto& s : test) {
    const auto r = simulate_session(s, p, opts).report;
    for (std::size_t b = 0; b + k <= r.frame_mse.size(); b += k) {
      double m = 0.0;
      for (int j = 0; j < k; ++j) m += r.frame_mse[b + j];
      out.push_back(m / k);
    }
  }
  return out;
}

Outcome learning() {
  Outcome o;
  constexpr int k = 6;
  const auto all = synth_periodic(7, 20, 120, 30.0);
  const std::vector<KeypointSequence> train(all.begin(), all.begin() + 16), test(all.begin() + 16, all.end());
  const auto stats = compute_stats(train, "periodic/train");

  RnnConfig rc;
  rc.k = k;
  VaeConfig vc;
  vc.max_lag = k;
  VrnnConfig qc;
  qc.k = k;
  const RnnModel rnn = rnn_train(train, rc, stats);
  const VaeModel vae = vae_train(train, vc, stats);
  const VrnnModel vrnn = vrnn_train(train, qc, stats);

  const auto halved = [&](const std::string& name, const std::vector<double>& h) {
    const std::vector<double> first(h.begin(), h.begin() + std::min<std::size_t>(500, h.size()));
    const double start = head_mean(first, 10), end = tail_mean(first, 10);
    o.require(end < 0.5 * start, fmt::format("{} loss {:.4g} -> {:.4g} by step 500", name, start, end));
    o.note(fmt::format("{} loss {:.4g} -> {:.4g} by step 500", name, start, end));
  };
  halved("rnn", rnn.loss_history);
  halved("vrnn", vrnn.loss_history);

  const PersistencePredictor persistence;
  const auto base = block_mse(persistence, test, stats, k);
  const RnnPredictor prnn(rnn);
  const VaePredictor pvae(vae);
  const VrnnPredictor pvrnn(vrnn);
  for (const BlockPredictor* p : std::initializer_list<const BlockPredictor*>{&prnn, &pvae, &pvrnn}) {
    const auto m = block_mse(*p, test, stats, k);
    std::size_t wins = 0;
    for (std::size_t w = 0; w < base.size(); ++w) wins += m[w] < base[w];
    const double share = static_cast<double>(wins) / static_cast<double>(base.size());
    o.require(share >= 0.8, fmt::format("{} beats persistence on {}/{} windows", p->name(), wins, base.size()));
    o.note(fmt::format("{} beats persistence on {}/{}", p->name(), wins, base.size()));
  }
  return o;
}

Outcome ranking() {
  Outcome o;
  const auto all = synth_switching(11, 20, 120, 30.0, 3, 0.05);
  ExperimentData data;
  const std::vector<KeypointSequence> train(all.begin(), all.begin() + 16);
  data.test.assign(all.begin() + 16, all.end());
  data.stats = compute_stats(train, "switching/train");
  const std::map<std::string, ExperimentData> sets{{"switching", data}};

  ExperimentGrid grid{{"switching"}, {"vrnn", "rnn", "vae"}, {{5, 5}, {6, 6}}, {1, 2, 3, 4, 5}};
  const PredictorFactory factory = [&](const CellSpec& c) -> std::unique_ptr<BlockPredictor> {
    if (c.model == "rnn") {
      RnnConfig rc;
      rc.k = c.k_in;
      rc.seed = c.seed;
      return std::make_unique<RnnPredictor>(rnn_train(train, rc, data.stats));
    }
    if (c.model == "vae") {
      VaeConfig vc;
      vc.max_lag = c.k_in;
      vc.seed = c.seed;
      return std::make_unique<VaePredictor>(vae_train(train, vc, data.stats));
    }
    VrnnConfig qc;
    qc.k = c.k_in;
    qc.seed = c.seed;
    return std::make_unique<VrnnPredictor>(vrnn_train(train, qc, data.stats));
  };
  const auto rows = aggregate(run_experiment(grid, sets, factory));
  for (int k : {5, 6}) {
    std::map<std::string, double> med;
    for (const auto& r : rows)
      if (r.k_in == k) med[r.model] = r.median_mse;
    const bool best = med["vrnn"] < med["rnn"] && med["vrnn"] < med["vae"];
    const std::string line =
        fmt::format("k={}: vrnn {:.5f}, rnn {:.5f}, vae {:.5f}", k, med["vrnn"], med["rnn"], med["vae"]);
    o.require(best, line);
    if (best) o.note(line);
  }
  return o;
}

Outcome metrics() {
  Outcome o;
  Rng rng(31);
  const Matrix a = standard_normal(rng, kFrameDims, 40), b = standard_normal(rng, kFrameDims, 40);
  o.require(keypoint_mse(a, a) == 0.0, "mse(a, a) != 0");
  for (double d : {0.1, 0.5, 2.0}) {
    const double m = keypoint_mse((a.array() + d).matrix(), a);
    o.require(std::abs(m - d * d) <= 1e-12, fmt::format("offset {}: mse {:.15g}", d, m));
  }
  o.require(frechet_keypoint_distance(a, a) == 0.0, "fkd(a, a) != 0");
  const Matrix fa = fkd_features(a);
  for (double d : {0.1, 0.5, 2.0}) {
    const double f = fkd_from_features((fa.array() + d).matrix(), fa);
    o.require(std::abs(f - 120.0 * d * d) <= 1e-9, fmt::format("feature shift {}: fkd {:.12g}", d, f));
    // Shifting frames moves only the 60 value features; differences are unchanged.
    const double g = frechet_keypoint_distance((a.array() + d).matrix(), a);
    o.require(std::abs(g - 60.0 * d * d) <= 1e-9, fmt::format("frame shift {}: fkd {:.12g}", d, g));
  }
  o.require(keypoint_mse(a, b) == keypoint_mse(b, a), "mse not symmetric");
  o.require(frechet_keypoint_distance(a, b) == frechet_keypoint_distance(b, a), "fkd not symmetric");
  o.note(fmt::format("mse(a,b) {:.6f}, fkd(a,b) {:.6f}", keypoint_mse(a, b), frechet_keypoint_distance(a, b)));
  return o;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return out;
}

Outcome reproducibility() {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / fmt::format("kpstream_acceptance_{}", ::getpid());
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = KPSTREAM_CLI;
  const std::string m = (root / "data" / "manifest.txt").string();
  const std::vector<std::pair<std::string, std::string>> commands = {
      {"data", "--seed 4 generate --kind switching --sequences 8 --frames 48"},
      {"rnn", "--seed 4 train --model rnn --steps 40 --hidden 32 --manifest " + m},
      {"vae", "--seed 4 train --model vae --steps 40 --hidden 32 --latent 8 --manifest " + m},
      {"vrnn", "--seed 4 train --model vrnn --steps 40 --hidden 32 --latent 8 --manifest " + m},
      {"sim", "--seed 4 --jobs 2 simulate --k 5,6 --persistence --oracle --transcripts --manifest " + m +
                  " --checkpoint " + (root / "rnn" / "rnn.ckpt").string() + "," + (root / "vae" / "vae.ckpt").string() +
                  "," + (root / "vrnn" / "vrnn.ckpt").string()},
      {"vrnn_sample", "--seed 4 simulate --sample --k 4 --manifest " + m + " --checkpoint " +
                          (root / "vrnn" / "vrnn.ckpt").string()},
      {"report", "report --results " + (root / "sim").string()},
  };
  for (const auto& [dir, args] : commands) {
    const fs::path out = root / dir;
    const std::string cmd = fmt::format("\"{}\" --out \"{}\" {} > \"{}\" 2>&1", cli, out.string(), args,
                                        (root / (dir + ".log")).string());
    if (std::system(cmd.c_str()) != 0) {
      o.require(false, dir + " failed: " + read_file(root / (dir + ".log")));
      return o;
    }
    const auto first = snapshot(out);
    const std::string stdout1 = read_file(root / (dir + ".log"));
    if (std::system(cmd.c_str()) != 0) {
      o.require(false, dir + " rerun failed");
      return o;
    }
    const auto second = snapshot(out);
    o.require(first == second, dir + " outputs differ on rerun");
    o.require(stdout1 == read_file(root / (dir + ".log")), dir + " console output differs on rerun");
    std::size_t bytes = 0;
    for (const auto& [n, c] : first) bytes += c.size();
    o.note(fmt::format("{} {} files/{} B", dir, first.size(), bytes));
  }
  fs::remove_all(root);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradients},
      {"gaussian identities", gaussians},
      {"scheduler arithmetic", scheduler},
      {"wire codec and byte accounting", codec},
      {"oracle end-to-end", oracle_end_to_end},
      {"learning sanity", learning},
      {"directional ranking (vrnn lowest median mse)", ranking},
      {"metric identities", metrics},
      {"cli reproducibility", reproducibility},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = criteria[i].second();
    } catch (const std::exception& e) {
      r.require(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    fmt::print("{} {}. {} ({:.1f}s): {}\n", r.pass ? "PASS" : "FAIL", id, criteria[i].first, secs, r.detail);
    std::fflush(stdout);
    failed += !r.pass;
  }
  return failed == 0 ? 0 : 1;
}
