#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dkf/model_io.hpp"

namespace dkf {

enum class DatasetKind { kSyn1, kSyn2, kCsv, kSurrogate };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

// The six filters of the comparison tables.
enum class BenchFilter { kKalman, kEkf, kUkf, kDkfGp, kDkfGpFreq, kDkfNn };

std::string_view to_string(BenchFilter filter);
BenchFilter parse_bench_filter(std::string_view name);
std::vector<BenchFilter> all_bench_filters();
// Comma separated list, e.g. "kalman,dkf-gp".
std::vector<BenchFilter> parse_filter_list(std::string_view list);

struct BenchmarkConfig {
  DatasetKind dataset = DatasetKind::kSyn1;
  std::string csv_path;
  // Declared state dimension for headerless CSV files; m is checked against
  // the file only when d is given.
  std::optional<Eigen::Index> d;
  Eigen::Index m = 5;
  Eigen::Index T = 10000;
  int trials = 5;
  std::vector<BenchFilter> filters = all_bench_filters();
  std::uint64_t seed = 1;
  Eigen::Index gp_cap = 1000;
  // Hyperparameter search subset for the GP variants (0: all retained points).
  Eigen::Index gp_search = 0;
  int lag = 0;
  std::optional<double> split_fraction;
  // CSV trials use contiguous windows: train rows then the next test rows.
  Eigen::Index window_train = 5000;
  Eigen::Index window_test = 5000;
  // Overlapping windows advance by window_train (test rows of one window are
  // the training rows of the next); otherwise by window_train + window_test.
  bool window_overlap = false;
  int jobs = 1;
  std::string out;
  std::string format = "table";

  void validate() const;
};

// Knobs shared by every model fit inside a trial.
struct FitSettings {
  std::uint64_t seed = 0;
  Eigen::Index gp_cap = 1000;
  Eigen::Index gp_search = 0;
};

FitSettings trial_fit_settings(const BenchmarkConfig& config, int trial);

// Trains the model for one filter on the training segment of `data`
// (rows < split_index) only.
ModelBundle fit_filter_model(BenchFilter filter, const TrajectoryDataset& data,
                             const FitSettings& settings);

// Mean squared error divided by the summed population variance of the truth
// columns. Rows are time steps.
double normalized_mse(const Matrix& predicted, const Matrix& truth);

struct TrialResult {
  std::string filter;
  int trial = 0;
  bool ok = false;
  std::string error;
  double nmse = 0.0;
  Matrix predictions;  // posterior means, one row per test step
  double fit_seconds = 0.0;
  double filter_seconds = 0.0;
  FilterDiagnostics diagnostics;
};

struct MetricReport {
  BenchmarkConfig config;
  std::vector<std::string> filters;
  int trials = 0;
  // Filter-major: cells[f * trials + t].
  std::vector<TrialResult> cells;

  const TrialResult& cell(std::size_t filter, int trial) const {
    return cells[filter * static_cast<std::size_t>(trials) + static_cast<std::size_t>(trial)];
  }
  // Mean over successful trials; nullopt when every trial failed.
  std::optional<double> average(std::size_t filter) const;
  FilterDiagnostics diagnostics(std::size_t filter) const;
};

// Dataset used by trial `trial` (0-based) of a configuration.
TrajectoryDataset trial_dataset(const BenchmarkConfig& config, int trial);

MetricReport run_benchmark(const BenchmarkConfig& config);

enum class ReportFormat { kCsv, kTable };

ReportFormat parse_report_format(std::string_view name);

// Columns: filter, trial#1..trial#N, avg. Failed cells are written as "failed".
std::string emit_report(const MetricReport& report, ReportFormat format);

// Parsed form of a CSV report, used to check emitted files.
struct ReportTable {
  std::vector<std::string> header;
  std::vector<std::string> filters;
  std::vector<std::vector<std::optional<double>>> trials;
  std::vector<std::optional<double>> averages;
};
ReportTable parse_report_csv(std::string_view text);

// t,truth_1..d,mean_1..d,sd_1..d; sd is the square root of the covariance diagonal.
void write_trace(std::ostream& out, const std::vector<GaussianBelief>& beliefs, const Matrix& truth,
                 Eigen::Index first_t = 0);
void emit_trace(const std::vector<GaussianBelief>& beliefs, const Matrix& truth,
                const std::filesystem::path& path, Eigen::Index first_t = 0);

struct CsvSchema {
  std::optional<Eigen::Index> d;
  std::optional<Eigen::Index> m;
  int lag = 0;
  std::optional<double> split_fraction;
  std::optional<Eigen::Index> split_index;
};

// Reads a dataset CSV (with the t,z_..,x_.. header or headerless with declared
// d and m, optional leading t column), pairs z_t with x_{t-lag} and sets the
// split (explicit index, fraction, sidecar value when lag is 0, else half).
// NonFinite errors carry the 1-based data row.
TrajectoryDataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema);

// Contiguous train/test windows over a long dataset.
std::vector<TrajectoryDataset> sliding_windows(const TrajectoryDataset& data, Eigen::Index train,
                                               Eigen::Index test, bool overlap, int count);

}  // namespace dkf
