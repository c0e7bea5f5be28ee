#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "kpstream/protocol.hpp"

namespace kpstream {

/// Mean over frames and dimensions of the squared difference, in the space
/// normalised by `stats` (identity when omitted). Frames are columns.
double keypoint_mse(const Matrix& pred, const Matrix& truth);
double keypoint_mse(const Matrix& pred, const Matrix& truth, const NormalizationStats& stats);

/// 120 x T feature matrix: frame values stacked on first differences (zero at t = 0).
Matrix fkd_features(const Matrix& frames);

/// Frechet distance between diagonal Gaussians fitted to two feature sets
/// (columns are samples, population variance):
///   |mu_a - mu_b|^2 + sum_i (sqrt(v_a,i) - sqrt(v_b,i))^2
double fkd_from_features(const Matrix& fa, const Matrix& fb);

/// Frechet keypoint distance, a keypoint-space proxy for FVD. Needs >= 2 frames each.
double frechet_keypoint_distance(const Matrix& a, const Matrix& b);

enum class EvalMode { Reconstruction, Transfer };
const char* to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

struct MetricResult {
  std::string dataset;
  EvalMode mode = EvalMode::Reconstruction;
  int k_in = 0;
  int k_out = 0;
  std::string model;
  std::uint64_t seed = 0;
  /// NaN when no frame was predicted.
  double mse = 0.0;
  double fkd = 0.0;
  std::size_t frames_evaluated = 0;
  double bandwidth_ratio = 1.0;
  double savings_factor = 1.0;

  struct TracePoint {
    std::string source_id;
    std::size_t frame = 0;
    double mse = 0.0;
  };
  std::vector<TracePoint> trace;
};

struct ExperimentGrid {
  std::vector<std::string> datasets;
  std::vector<std::string> models;
  /// (k_in, k_out) pairs.
  std::vector<std::pair<int, int>> block_sizes;
  std::vector<std::uint64_t> seeds;
  EvalMode mode = EvalMode::Reconstruction;
  bool persistent_context = false;

  /// Throws InvalidArgument if any axis is empty.
  void validate() const;
};

struct ExperimentData {
  std::vector<KeypointSequence> test;
  /// Training-split statistics; metrics are computed in this normalised space.
  NormalizationStats stats;
};

struct CellSpec {
  std::string dataset;
  std::string model;
  int k_in = 0;
  int k_out = 0;
  std::uint64_t seed = 0;
};

/// Scores one cell from its finished sessions, given in test-sequence order.
/// MSE and FKD pool the predicted frames of all sessions; a cell with no
/// predicted frames reports NaN for both.
MetricResult score_cell(const CellSpec& cell, EvalMode mode, const ExperimentData& data,
                        std::span<const SessionResult> sessions);

/// Runs fn(0..n-1) on up to `jobs` threads. The first exception stops the
/// remaining work and is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

using PredictorFactory = std::function<std::unique_ptr<BlockPredictor>(const CellSpec&)>;

/// One result per (dataset, model, block size, seed), in that nesting order.
/// Every test sequence of a cell is streamed through simulate_session; MSE
/// and FKD pool the predicted frames of all sequences. Cells run on up to
/// `jobs` threads; the factory must be safe to call concurrently.
std::vector<MetricResult> run_experiment(const ExperimentGrid& grid, const std::map<std::string, ExperimentData>& data,
                                         const PredictorFactory& factory, int jobs = 1);

/// Median across seeds of each (dataset, mode, k_in, k_out, model) cell.
struct AggregateRow {
  std::string dataset;
  EvalMode mode = EvalMode::Reconstruction;
  int k_in = 0;
  int k_out = 0;
  std::string model;
  std::size_t seeds = 0;
  double median_mse = 0.0;
  double median_fkd = 0.0;
  double median_bandwidth_ratio = 0.0;
  double median_savings_factor = 0.0;
};

double median(std::vector<double> v);
std::vector<AggregateRow> aggregate(const std::vector<MetricResult>& results);

inline constexpr const char* kReportHeader =
    "dataset,mode,k_in,k_out,model,mse,fkd,bandwidth_ratio,savings_factor,seed";
inline constexpr const char* kAggregateHeader =
    "dataset,mode,k_in,k_out,model,seeds,median_mse,median_fkd,median_bandwidth_ratio,median_savings_factor";

std::string format_report(const std::vector<MetricResult>& results);
/// Parses the result rows of a report (the aggregate block is skipped).
std::vector<MetricResult> parse_report(const std::string& text);
std::string format_aggregate(const std::vector<AggregateRow>& rows);
std::string format_trace(const MetricResult& r);
std::string trace_file_name(const MetricResult& r);

/// Writes `report.csv` and one trace file per result into `dir`; returns the paths written.
std::vector<std::filesystem::path> emit_report(const std::vector<MetricResult>& results,
                                               const std::filesystem::path& dir);

}  // namespace kpstream
