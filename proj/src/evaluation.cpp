#include "kpstream/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <fmt/format.h>

namespace kpstream {

double keypoint_mse(const Matrix& pred, const Matrix& truth) {
  return keypoint_mse(pred, truth, NormalizationStats::identity(truth.rows()));
}

double keypoint_mse(const Matrix& pred, const Matrix& truth, const NormalizationStats& stats) {
  require_same_size(pred.rows(), truth.rows(), "keypoint_mse rows");
  require_same_size(pred.cols(), truth.cols(), "keypoint_mse frames");
  if (truth.cols() == 0) throw InvalidArgument("keypoint_mse: no frames to evaluate");
  require_same_size(stats.dim(), truth.rows(), "keypoint_mse stats");
  const Matrix diff = (pred - truth).array().colwise() / stats.std.array();
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

Matrix fkd_features(const Matrix& frames) {
  const Eigen::Index d = frames.rows(), T = frames.cols();
  Matrix f = Matrix::Zero(2 * d, T);
  f.topRows(d) = frames;
  if (T > 1) f.bottomRightCorner(d, T - 1) = frames.rightCols(T - 1) - frames.leftCols(T - 1);
  return f;
}

double fkd_from_features(const Matrix& fa, const Matrix& fb) {
  require_same_size(fa.rows(), fb.rows(), "fkd features");
  if (fa.cols() < 2 || fb.cols() < 2) throw InvalidArgument("fkd: each stream needs at least 2 frames");
  const Vector ma = fa.rowwise().mean(), mb = fb.rowwise().mean();
  const Vector va = (fa.colwise() - ma).array().square().rowwise().mean();
  const Vector vb = (fb.colwise() - mb).array().square().rowwise().mean();
  return (ma - mb).squaredNorm() + (va.array().sqrt() - vb.array().sqrt()).square().sum();
}

double frechet_keypoint_distance(const Matrix& a, const Matrix& b) {
  if (a.cols() < 2 || b.cols() < 2) throw InvalidArgument("fkd: each stream needs at least 2 frames");
  return fkd_from_features(fkd_features(a), fkd_features(b));
}

const char* to_string(EvalMode m) { return m == EvalMode::Reconstruction ? "reconstruction" : "transfer"; }

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "reconstruction") return EvalMode::Reconstruction;
  if (s == "transfer") return EvalMode::Transfer;
  throw InvalidArgument("unknown mode '" + s + "' (expected reconstruction or transfer)");
}

void ExperimentGrid::validate() const {
  if (datasets.empty()) throw InvalidArgument("experiment grid: no datasets");
  if (models.empty()) throw InvalidArgument("experiment grid: no models");
  if (block_sizes.empty()) throw InvalidArgument("experiment grid: no block sizes");
  if (seeds.empty()) throw InvalidArgument("experiment grid: no seeds");
}

MetricResult score_cell(const CellSpec& cell, EvalMode mode, const ExperimentData& data,
                        std::span<const SessionResult> sessions) {
  require_same_size(static_cast<Eigen::Index>(sessions.size()), static_cast<Eigen::Index>(data.test.size()),
                    "score_cell sessions");
  MetricResult r;
  r.dataset = cell.dataset;
  r.mode = mode;
  r.k_in = cell.k_in;
  r.k_out = cell.k_out;
  r.model = cell.model;
  r.seed = cell.seed;

  std::vector<TransmissionReport> reports;
  std::vector<Matrix> pf, tf;
  for (std::size_t s = 0; s < sessions.size(); ++s) {
    const KeypointSequence& seq = data.test[s];
    const SessionResult& res = sessions[s];
    // In transfer mode the reference is the stream delivered without
    // prediction, which at keypoint level is the transmitted sequence itself.
    const Matrix truth = normalize_columns(seq.to_matrix(), data.stats);
    const Matrix recon = normalize_columns(res.reconstructed.to_matrix(), data.stats);
    const Matrix ft = fkd_features(truth), fp = fkd_features(recon);
    const auto& idx = res.report.predicted_indices;
    Matrix a(ft.rows(), static_cast<Eigen::Index>(idx.size())), b(ft.rows(), a.cols());
    for (std::size_t j = 0; j < idx.size(); ++j) {
      a.col(static_cast<Eigen::Index>(j)) = fp.col(static_cast<Eigen::Index>(idx[j]));
      b.col(static_cast<Eigen::Index>(j)) = ft.col(static_cast<Eigen::Index>(idx[j]));
      r.trace.push_back({seq.source_id, idx[j], res.report.frame_mse[j]});
    }
    pf.push_back(std::move(a));
    tf.push_back(std::move(b));
    reports.push_back(res.report);
  }

  const auto rows = bandwidth_summary(reports);
  r.bandwidth_ratio = rows.front().mean_bandwidth_ratio;
  r.savings_factor = rows.front().savings_factor;
  r.frames_evaluated = r.trace.size();
  if (r.frames_evaluated == 0) {
    r.mse = r.fkd = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  double sum = 0.0;
  for (const auto& p : r.trace) sum += p.mse;
  r.mse = sum / static_cast<double>(r.trace.size());
  const auto n = static_cast<Eigen::Index>(r.frames_evaluated);
  Matrix A(pf.front().rows(), n), B(pf.front().rows(), n);
  Eigen::Index c = 0;
  for (std::size_t s = 0; s < pf.size(); ++s) {
    A.middleCols(c, pf[s].cols()) = pf[s];
    B.middleCols(c, tf[s].cols()) = tf[s];
    c += pf[s].cols();
  }
  r.fkd = n >= 2 ? fkd_from_features(A, B) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const int threads = std::clamp(jobs, 1, static_cast<int>(std::max<std::size_t>(n, 1)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);
}

std::vector<MetricResult> run_experiment(const ExperimentGrid& grid, const std::map<std::string, ExperimentData>& data,
                                         const PredictorFactory& factory, int jobs) {
  grid.validate();
  std::vector<CellSpec> cells;
  for (const auto& ds : grid.datasets) {
    if (!data.count(ds)) throw InvalidArgument("no data for dataset '" + ds + "'");
    if (data.at(ds).test.empty()) throw InvalidArgument("dataset '" + ds + "' has no test sequences");
    for (const auto& m : grid.models)
      for (const auto& [kin, kout] : grid.block_sizes)
        for (auto seed : grid.seeds) cells.push_back({ds, m, kin, kout, seed});
  }

  std::vector<MetricResult> out(cells.size());
  parallel_for(cells.size(), jobs, [&](std::size_t i) {
    const CellSpec& cell = cells[i];
    const ExperimentData& d = data.at(cell.dataset);
    const auto predictor = factory(cell);
    if (!predictor) throw InvalidArgument("no predictor for model '" + cell.model + "'");
    SessionOptions opts;
    opts.k_in = cell.k_in;
    opts.k_out = cell.k_out;
    opts.persistent_context = grid.persistent_context;
    opts.stats = d.stats;
    std::vector<SessionResult> sessions;
    for (std::size_t s = 0; s < d.test.size(); ++s) {
      opts.session_id = s + 1;
      sessions.push_back(simulate_session(d.test[s], *predictor, opts));
    }
    out[i] = score_cell(cell, grid.mode, d, sessions);
  });
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw InvalidArgument("median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

namespace {

// Median of the finite entries; NaN marks cells where nothing was predicted.
double median_finite(const std::vector<double>& v) {
  std::vector<double> f;
  for (double x : v)
    if (std::isfinite(x)) f.push_back(x);
  return f.empty() ? std::numeric_limits<double>::quiet_NaN() : median(std::move(f));
}

}  // namespace

std::vector<AggregateRow> aggregate(const std::vector<MetricResult>& results) {
  std::vector<AggregateRow> rows;
  std::vector<std::array<std::vector<double>, 4>> vals;
  for (const auto& r : results) {
    auto it = std::find_if(rows.begin(), rows.end(), [&](const AggregateRow& a) {
      return a.dataset == r.dataset && a.mode == r.mode && a.k_in == r.k_in && a.k_out == r.k_out && a.model == r.model;
    });
    if (it == rows.end()) {
      rows.push_back({r.dataset, r.mode, r.k_in, r.k_out, r.model});
      vals.emplace_back();
      it = rows.end() - 1;
    }
    auto& v = vals[static_cast<std::size_t>(it - rows.begin())];
    ++it->seeds;
    v[0].push_back(r.mse);
    v[1].push_back(r.fkd);
    v[2].push_back(r.bandwidth_ratio);
    v[3].push_back(r.savings_factor);
  }
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].median_mse = median_finite(vals[i][0]);
    rows[i].median_fkd = median_finite(vals[i][1]);
    rows[i].median_bandwidth_ratio = median_finite(vals[i][2]);
    rows[i].median_savings_factor = median_finite(vals[i][3]);
  }
  return rows;
}

std::string format_report(const std::vector<MetricResult>& results) {
  std::string out = "# fkd: Frechet keypoint distance, a keypoint-space proxy for FVD\n";
  out += kReportHeader;
  out += '\n';
  for (const auto& r : results) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.dataset, to_string(r.mode), r.k_in, r.k_out, r.model,
                       format_double(r.mse), format_double(r.fkd), format_double(r.bandwidth_ratio),
                       format_double(r.savings_factor), r.seed);
  }
  return out;
}

std::string format_aggregate(const std::vector<AggregateRow>& rows) {
  std::string out = kAggregateHeader;
  out += '\n';
  for (const auto& a : rows) {
    out += fmt::format("{},{},{},{},{},{},{},{},{},{}\n", a.dataset, to_string(a.mode), a.k_in, a.k_out, a.model,
                       a.seeds, format_double(a.median_mse), format_double(a.median_fkd),
                       format_double(a.median_bandwidth_ratio), format_double(a.median_savings_factor));
  }
  return out;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& s, std::size_t line) {
  T v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ParseError("report line " + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::vector<MetricResult> parse_report(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<MetricResult> out;
  std::size_t n = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    if (line == kReportHeader) {
      header = true;
      continue;
    }
    if (line == kAggregateHeader) break;
    if (!header) throw ParseError("report line " + std::to_string(n) + ": data before header");
    const auto f = split_csv(line);
    if (f.size() != 10) throw ParseError("report line " + std::to_string(n) + ": expected 10 fields");
    MetricResult r;
    r.dataset = f[0];
    r.mode = eval_mode_from_string(f[1]);
    r.k_in = parse_number<int>(f[2], n);
    r.k_out = parse_number<int>(f[3], n);
    r.model = f[4];
    r.mse = parse_number<double>(f[5], n);
    r.fkd = parse_number<double>(f[6], n);
    r.bandwidth_ratio = parse_number<double>(f[7], n);
    r.savings_factor = parse_number<double>(f[8], n);
    r.seed = parse_number<std::uint64_t>(f[9], n);
    out.push_back(std::move(r));
  }
  if (!header) throw ParseError("report has no header");
  return out;
}

std::string format_trace(const MetricResult& r) {
  std::string out = "sequence,frame,mse\n";
  for (const auto& p : r.trace) out += fmt::format("{},{},{}\n", p.source_id, p.frame, format_double(p.mse));
  return out;
}

std::string trace_file_name(const MetricResult& r) {
  const std::string k = r.k_in == r.k_out ? std::to_string(r.k_out) : fmt::format("{}x{}", r.k_in, r.k_out);
  return fmt::format("{}_{}_{}_{}.trace.csv", r.dataset, r.model, k, r.seed);
}

std::vector<std::filesystem::path> emit_report(const std::vector<MetricResult>& results,
                                               const std::filesystem::path& dir) {
  if (results.empty()) throw InvalidArgument("emit_report: no results");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  const auto report = dir / "report.csv";
  write_file_atomic(report, format_report(results) + "\n# aggregate: median over seeds\n" +
                                format_aggregate(aggregate(results)));
  written.push_back(report);
  for (const auto& r : results) {
    const auto p = dir / trace_file_name(r);
    write_file_atomic(p, format_trace(r));
    written.push_back(p);
  }
  return written;
}

}  // namespace kpstream
