#include "dkf/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "dkf/dataset_io.hpp"
#include "dkf/errors.hpp"

namespace dkf {

namespace {

constexpr std::uint64_t kModelStream = 0x6d6f64656cULL;

std::string trim_copy(std::string_view s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string_view::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(begin, end - begin + 1));
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

bool is_generative_mlp(BenchFilter f) { return f == BenchFilter::kEkf || f == BenchFilter::kUkf; }

CsvSchema csv_schema(const BenchmarkConfig& config) {
  CsvSchema schema;
  schema.lag = config.lag;
  schema.split_fraction = config.split_fraction;
  if (config.d) {
    schema.d = config.d;
    schema.m = config.m;
  }
  return schema;
}

// A single trial on a file shorter than one window uses the whole file.
TrajectoryDataset csv_trial_window(const BenchmarkConfig& config, const TrajectoryDataset& full,
                                   int trial) {
  if (config.trials == 1 && full.length() < config.window_train + config.window_test) return full;
  return sliding_windows(full, config.window_train, config.window_test, config.window_overlap,
                         trial + 1)
      .back();
}

}  // namespace

std::string_view to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kSyn1: return "syn1";
    case DatasetKind::kSyn2: return "syn2";
    case DatasetKind::kCsv: return "csv";
    case DatasetKind::kSurrogate: return "surrogate";
  }
  return "unknown";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  for (auto k : {DatasetKind::kSyn1, DatasetKind::kSyn2, DatasetKind::kCsv, DatasetKind::kSurrogate}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown dataset: " + std::string(name));
}

std::string_view to_string(BenchFilter filter) {
  switch (filter) {
    case BenchFilter::kKalman: return "kalman";
    case BenchFilter::kEkf: return "ekf";
    case BenchFilter::kUkf: return "ukf";
    case BenchFilter::kDkfGp: return "dkf-gp";
    case BenchFilter::kDkfGpFreq: return "dkf-gp-freq";
    case BenchFilter::kDkfNn: return "dkf-nn";
  }
  return "unknown";
}

std::vector<BenchFilter> all_bench_filters() {
  return {BenchFilter::kKalman, BenchFilter::kEkf,      BenchFilter::kUkf,
          BenchFilter::kDkfGp,  BenchFilter::kDkfGpFreq, BenchFilter::kDkfNn};
}

BenchFilter parse_bench_filter(std::string_view name) {
  for (auto f : all_bench_filters()) {
    if (to_string(f) == name) return f;
  }
  throw Error(ErrorKind::kInvalidArgument, "unknown filter: " + std::string(name));
}

std::vector<BenchFilter> parse_filter_list(std::string_view list) {
  std::vector<BenchFilter> filters;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto end = list.find(',', start);
    if (end == std::string_view::npos) end = list.size();
    const auto name = trim_copy(list.substr(start, end - start));
    if (!name.empty()) filters.push_back(parse_bench_filter(name));
    start = end + 1;
  }
  if (filters.empty()) throw Error(ErrorKind::kInvalidArgument, "filter list is empty");
  return filters;
}

void BenchmarkConfig::validate() const {
  if (trials < 1) throw Error(ErrorKind::kInvalidArgument, "trials must be at least 1");
  if (filters.empty()) throw Error(ErrorKind::kInvalidArgument, "no filters requested");
  if (gp_cap < 1) throw Error(ErrorKind::kInvalidArgument, "gp cap must be positive");
  if (gp_search < 0) throw Error(ErrorKind::kInvalidArgument, "gp search subset must be >= 0");
  if (lag < 0) throw Error(ErrorKind::kInvalidArgument, "lag must be non-negative");
  if (jobs < 1) throw Error(ErrorKind::kInvalidArgument, "jobs must be at least 1");
  if (split_fraction && !(*split_fraction > 0.0 && *split_fraction < 1.0)) {
    throw Error(ErrorKind::kInvalidArgument, "split fraction must lie in (0, 1)");
  }
  if (dataset == DatasetKind::kCsv) {
    if (csv_path.empty()) throw Error(ErrorKind::kInvalidArgument, "csv dataset needs a path");
    if (window_train < 2 || window_test < 1) {
      throw Error(ErrorKind::kInvalidArgument, "window sizes must be positive");
    }
  } else {
    if (T < 4) throw Error(ErrorKind::kInvalidArgument, "T must be at least 4");
    if (dataset != DatasetKind::kSyn2 && m < 1) {
      throw Error(ErrorKind::kInvalidArgument, "m must be positive");
    }
  }
}

FitSettings trial_fit_settings(const BenchmarkConfig& config, int trial) {
  // One seed per trial, shared by every filter so cells stay independent of
  // which other filters were requested.
  const RandomSource trial_rng(config.seed + static_cast<std::uint64_t>(trial));
  return {trial_rng.derive(kModelStream).seed(), config.gp_cap, config.gp_search};
}

ModelBundle fit_filter_model(BenchFilter filter, const TrajectoryDataset& data,
                             const FitSettings& settings) {
  data.validate();
  const Matrix train_states = data.train_states();
  const Matrix train_obs = data.train_observations();
  const RandomSource base(settings.seed);

  ModelBundle bundle;
  bundle.filter = std::string(to_string(filter));
  bundle.dynamics = fit_dynamics(train_states);

  switch (filter) {
    case BenchFilter::kKalman:
      bundle.generative = fit_affine_observation(train_states, train_obs);
      break;
    case BenchFilter::kEkf:
    case BenchFilter::kUkf: {
      RandomSource rng = base.derive(2);
      bundle.generative = fit_mlp_observation(train_states, train_obs, rng);
      break;
    }
    case BenchFilter::kDkfGp:
    case BenchFilter::kDkfGpFreq:
    case BenchFilter::kDkfNn: {
      VariantFitOptions options;
      options.seed = base.derive(1).seed();
      options.gp.subsample_cap = settings.gp_cap;
      options.gp.hyperparameter_subset = settings.gp_search;
      const DkfVariant variant = filter == BenchFilter::kDkfGp       ? DkfVariant::kGp
                                 : filter == BenchFilter::kDkfGpFreq ? DkfVariant::kGpFreq
                                                                     : DkfVariant::kNn;
      bundle.discriminative = build_dkf_variant(variant, data, options);
      break;
    }
  }
  return bundle;
}

double normalized_mse(const Matrix& predicted, const Matrix& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols()) {
    throw Error(ErrorKind::kInvalidArgument, "predictions and truth differ in shape");
  }
  if (truth.rows() == 0 || truth.cols() == 0) {
    throw Error(ErrorKind::kInvalidArgument, "normalized MSE needs a nonempty sequence");
  }
  const double n = static_cast<double>(truth.rows());
  const double mse = (predicted - truth).squaredNorm() / n;
  double variance = 0.0;
  for (Eigen::Index i = 0; i < truth.cols(); ++i) {
    const double mean = truth.col(i).mean();
    variance += (truth.col(i).array() - mean).square().sum() / n;
  }
  if (!(variance > 0.0)) {
    throw Error(ErrorKind::kZeroVariance, "test truth is constant in every dimension");
  }
  return mse / variance;
}

std::optional<double> MetricReport::average(std::size_t filter) const {
  double sum = 0.0;
  int count = 0;
  for (int t = 0; t < trials; ++t) {
    const auto& c = cell(filter, t);
    if (c.ok) {
      sum += c.nmse;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

FilterDiagnostics MetricReport::diagnostics(std::size_t filter) const {
  FilterDiagnostics total;
  for (int t = 0; t < trials; ++t) total += cell(filter, t).diagnostics;
  return total;
}

TrajectoryDataset trial_dataset(const BenchmarkConfig& config, int trial) {
  RandomSource rng(config.seed + static_cast<std::uint64_t>(trial));
  TrajectoryDataset data;
  switch (config.dataset) {
    case DatasetKind::kSyn1:
      data = generate_synthetic1(config.T, config.m, rng);
      break;
    case DatasetKind::kSyn2:
      data = generate_synthetic2(config.T, rng);
      break;
    case DatasetKind::kSurrogate:
      data = generate_spike_surrogate(config.T, config.m, rng);
      break;
    case DatasetKind::kCsv:
      return csv_trial_window(config, ingest_csv(config.csv_path, csv_schema(config)), trial);
  }
  if (config.split_fraction) {
    data.split_index = static_cast<Eigen::Index>(
        std::floor(*config.split_fraction * static_cast<double>(data.length())));
    data.validate();
  }
  return data;
}

namespace {

struct TrialCells {
  std::vector<TrialResult> results;  // one per requested filter
};

TrialCells run_trial(const BenchmarkConfig& config, int trial,
                     const std::optional<TrajectoryDataset>& shared_full) {
  TrialCells out;
  out.results.resize(config.filters.size());
  for (std::size_t f = 0; f < config.filters.size(); ++f) {
    out.results[f].filter = std::string(to_string(config.filters[f]));
    out.results[f].trial = trial;
  }

  TrajectoryDataset data;
  try {
    if (shared_full) {
      data = csv_trial_window(config, *shared_full, trial);
    } else {
      data = trial_dataset(config, trial);
    }
  } catch (const std::exception& e) {
    for (auto& r : out.results) r.error = e.what();
    return out;
  }

  const FitSettings settings = trial_fit_settings(config, trial);
  const Matrix truth = data.test_states();
  // EKF and UKF share the learned observation network of their trial.
  std::optional<ModelBundle> generative_mlp;
  std::string generative_error;

  for (std::size_t f = 0; f < config.filters.size(); ++f) {
    const BenchFilter filter = config.filters[f];
    TrialResult& result = out.results[f];
    try {
      const auto fit_start = std::chrono::steady_clock::now();
      ModelBundle bundle;
      if (is_generative_mlp(filter)) {
        if (!generative_mlp && generative_error.empty()) {
          try {
            generative_mlp = fit_filter_model(filter, data, settings);
          } catch (const std::exception& e) {
            generative_error = e.what();
          }
        }
        if (!generative_mlp) throw Error(ErrorKind::kFitFailure, generative_error);
        bundle = *generative_mlp;
        bundle.filter = std::string(to_string(filter));
      } else {
        bundle = fit_filter_model(filter, data, settings);
      }
      result.fit_seconds = seconds_since(fit_start);

      FilterModels models = bundle.to_filter_models();
      models.dkf.on_invalid_posterior = PosteriorFailurePolicy::kDropPriorCorrection;
      const auto filter_start = std::chrono::steady_clock::now();
      FilterRun run = run_filter(bundle.filter_kind(), data, models);
      result.filter_seconds = seconds_since(filter_start);

      result.predictions.resize(data.test_length(), data.state_dim());
      for (std::size_t s = 0; s < run.beliefs.size(); ++s) {
        result.predictions.row(static_cast<Eigen::Index>(s)) = run.beliefs[s].mean.transpose();
      }
      result.diagnostics = run.diagnostics;
      result.nmse = normalized_mse(result.predictions, truth);
      if (!std::isfinite(result.nmse)) {
        throw Error(ErrorKind::kNonFinite, "filter produced non-finite predictions");
      }
      result.ok = true;
    } catch (const Error& e) {
      result.ok = false;
      result.error = std::string(to_string(e.kind())) + ": " + e.what();
    } catch (const std::exception& e) {
      result.ok = false;
      result.error = e.what();
    }
  }
  return out;
}

}  // namespace

MetricReport run_benchmark(const BenchmarkConfig& config) {
  config.validate();
  MetricReport report;
  report.config = config;
  report.trials = config.trials;
  for (auto f : config.filters) report.filters.emplace_back(to_string(f));

  std::optional<TrajectoryDataset> shared_full;
  if (config.dataset == DatasetKind::kCsv) {
    shared_full = ingest_csv(config.csv_path, csv_schema(config));
  }

  std::vector<TrialCells> per_trial(static_cast<std::size_t>(config.trials));
  const int workers = std::min(config.jobs, config.trials);
  if (workers <= 1) {
    for (int t = 0; t < config.trials; ++t) {
      per_trial[static_cast<std::size_t>(t)] = run_trial(config, t, shared_full);
    }
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int t = next++; t < config.trials; t = next++) {
          per_trial[static_cast<std::size_t>(t)] = run_trial(config, t, shared_full);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  report.cells.reserve(config.filters.size() * static_cast<std::size_t>(config.trials));
  for (std::size_t f = 0; f < config.filters.size(); ++f) {
    for (int t = 0; t < config.trials; ++t) {
      report.cells.push_back(std::move(per_trial[static_cast<std::size_t>(t)].results[f]));
    }
  }
  return report;
}

ReportFormat parse_report_format(std::string_view name) {
  if (name == "csv") return ReportFormat::kCsv;
  if (name == "table" || name == "text-table") return ReportFormat::kTable;
  throw Error(ErrorKind::kInvalidArgument, "unknown report format: " + std::string(name));
}

std::string emit_report(const MetricReport& report, ReportFormat format) {
  std::ostringstream out;
  if (format == ReportFormat::kCsv) {
    out << "filter";
    for (int t = 1; t <= report.trials; ++t) out << ",trial#" << t;
    out << ",avg\n";
    for (std::size_t f = 0; f < report.filters.size(); ++f) {
      out << report.filters[f];
      for (int t = 0; t < report.trials; ++t) {
        const auto& c = report.cell(f, t);
        out << ',' << (c.ok ? format_double(c.nmse) : std::string("failed"));
      }
      const auto avg = report.average(f);
      out << ',' << (avg ? format_double(*avg) : std::string("failed")) << '\n';
    }
    return out.str();
  }

  std::size_t name_width = 6;
  for (const auto& name : report.filters) name_width = std::max(name_width, name.size());
  constexpr int kCell = 10;
  out << std::left << std::setw(static_cast<int>(name_width) + 2) << "filter" << std::right;
  for (int t = 1; t <= report.trials; ++t) out << std::setw(kCell) << ("trial#" + std::to_string(t));
  out << std::setw(kCell) << "avg" << '\n';
  out << std::fixed << std::setprecision(4);
  for (std::size_t f = 0; f < report.filters.size(); ++f) {
    out << std::left << std::setw(static_cast<int>(name_width) + 2) << report.filters[f]
        << std::right;
    for (int t = 0; t < report.trials; ++t) {
      const auto& c = report.cell(f, t);
      if (c.ok) {
        out << std::setw(kCell) << c.nmse;
      } else {
        out << std::setw(kCell) << "failed";
      }
    }
    const auto avg = report.average(f);
    if (avg) {
      out << std::setw(kCell) << *avg;
    } else {
      out << std::setw(kCell) << "failed";
    }
    out << '\n';
  }
  bool header_written = false;
  for (std::size_t f = 0; f < report.filters.size(); ++f) {
    const auto diag = report.diagnostics(f);
    if (diag.q_regularizations == 0 && diag.posterior_fallbacks == 0) continue;
    if (!header_written) {
      out << "\nwarnings:\n";
      header_written = true;
    }
    out << "  " << report.filters[f] << ": q_regularizations=" << diag.q_regularizations
        << " posterior_fallbacks=" << diag.posterior_fallbacks << '\n';
  }
  bool failures_written = false;
  for (const auto& c : report.cells) {
    if (c.ok) continue;
    if (!failures_written) {
      out << "\nfailed cells:\n";
      failures_written = true;
    }
    out << "  " << c.filter << " trial#" << c.trial + 1 << ": " << c.error << '\n';
  }
  return out.str();
}

ReportTable parse_report_csv(std::string_view text) {
  ReportTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim_copy(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (first) {
      first = false;
      for (auto f : fields) table.header.emplace_back(trim_copy(f));
      if (table.header.size() < 2 || table.header.front() != "filter" ||
          table.header.back() != "avg") {
        throw Error(ErrorKind::kSchemaMismatch, "report header must be filter,...,avg");
      }
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorKind::kSchemaMismatch, "report row has the wrong number of columns");
    }
    auto value = [](std::string_view token) -> std::optional<double> {
      const auto t = trim_copy(token);
      if (t == "failed") return std::nullopt;
      return parse_double(t);
    };
    table.filters.emplace_back(trim_copy(fields.front()));
    std::vector<std::optional<double>> cells;
    for (std::size_t i = 1; i + 1 < fields.size(); ++i) cells.push_back(value(fields[i]));
    table.trials.push_back(std::move(cells));
    table.averages.push_back(value(fields.back()));
  }
  if (first) throw Error(ErrorKind::kSchemaMismatch, "empty report");
  return table;
}

void write_trace(std::ostream& out, const std::vector<GaussianBelief>& beliefs, const Matrix& truth,
                 Eigen::Index first_t) {
  if (static_cast<Eigen::Index>(beliefs.size()) != truth.rows()) {
    throw Error(ErrorKind::kInvalidArgument, "beliefs and truth differ in length");
  }
  const Eigen::Index d = truth.cols();
  out << 't';
  for (Eigen::Index i = 1; i <= d; ++i) out << ",truth_" << i;
  for (Eigen::Index i = 1; i <= d; ++i) out << ",mean_" << i;
  for (Eigen::Index i = 1; i <= d; ++i) out << ",sd_" << i;
  out << '\n';
  for (std::size_t s = 0; s < beliefs.size(); ++s) {
    const auto r = static_cast<Eigen::Index>(s);
    const auto& b = beliefs[s];
    if (b.dim() != d) throw Error(ErrorKind::kInvalidArgument, "belief dimension mismatch");
    out << first_t + r;
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(truth(r, i));
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(b.mean(i));
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(std::sqrt(b.covariance(i, i)));
    out << '\n';
  }
}

void emit_trace(const std::vector<GaussianBelief>& beliefs, const Matrix& truth,
                const std::filesystem::path& path, Eigen::Index first_t) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  write_trace(out, beliefs, truth, first_t);
}

TrajectoryDataset ingest_csv(const std::filesystem::path& path, const CsvSchema& schema) {
  if (schema.lag < 0) throw Error(ErrorKind::kInvalidArgument, "lag must be non-negative");
  const CsvTable table = read_csv_table(path);
  const Eigen::Index columns = table.values.cols();

  Eigen::Index d = 0;
  Eigen::Index m = 0;
  Eigen::Index first_column = 0;
  if (table.header) {
    const auto& names = *table.header;
    std::size_t i = 0;
    if (!names.empty() && trim_copy(names[0]) == "t") {
      first_column = 1;
      i = 1;
    }
    for (; i < names.size() && trim_copy(names[i]).rfind("z_", 0) == 0; ++i) ++d;
    for (; i < names.size() && trim_copy(names[i]).rfind("x_", 0) == 0; ++i) ++m;
    if (i != names.size() || d == 0 || m == 0) {
      throw Error(ErrorKind::kSchemaMismatch,
                  "header must read t,z_1..z_d,x_1..x_m (t optional)");
    }
    if ((schema.d && *schema.d != d) || (schema.m && *schema.m != m)) {
      throw Error(ErrorKind::kSchemaMismatch, "header dimensions disagree with the declared d, m");
    }
  } else {
    if (!schema.d || !schema.m) {
      throw Error(ErrorKind::kSchemaMismatch, "headerless CSV needs declared d and m");
    }
    d = *schema.d;
    m = *schema.m;
    if (d < 1 || m < 1) throw Error(ErrorKind::kInvalidArgument, "d and m must be positive");
    if (columns == d + m + 1) {
      first_column = 1;
    } else if (columns != d + m) {
      std::ostringstream msg;
      msg << "expected " << d + m << " or " << d + m + 1 << " columns, found " << columns;
      throw Error(ErrorKind::kSchemaMismatch, msg.str());
    }
  }

  const Matrix& values = table.values;
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = first_column; c < values.cols(); ++c) {
      if (!std::isfinite(values(r, c))) {
        std::ostringstream msg;
        msg << "non-finite value in data row " << r + 1 << ", column " << c + 1;
        throw NonFiniteError(msg.str(), static_cast<long>(r + 1));
      }
    }
  }

  const Eigen::Index rows = values.rows() - schema.lag;
  if (rows < 1) throw Error(ErrorKind::kEmptyAfterLag, "no rows remain after applying the lag");

  TrajectoryDataset data;
  data.lag = schema.lag;
  // z_t pairs with x_{t-lag}.
  data.states = values.block(schema.lag, first_column, rows, d);
  data.observations = values.block(0, first_column + d, rows, m);

  std::optional<DatasetMetadata> meta;
  const auto meta_file = metadata_path(path);
  if (std::filesystem::exists(meta_file)) meta = read_metadata(meta_file);
  if (meta) data.seed = meta->seed;

  if (schema.split_index) {
    data.split_index = *schema.split_index;
  } else if (schema.split_fraction) {
    if (!(*schema.split_fraction > 0.0 && *schema.split_fraction < 1.0)) {
      throw Error(ErrorKind::kInvalidArgument, "split fraction must lie in (0, 1)");
    }
    data.split_index = static_cast<Eigen::Index>(
        std::floor(*schema.split_fraction * static_cast<double>(rows)));
  } else if (meta && schema.lag == 0 && meta->d == d && meta->m == m && meta->split_index > 0 &&
             meta->split_index < rows) {
    data.split_index = meta->split_index;
  } else {
    data.split_index = rows / 2;
  }
  data.validate();
  return data;
}

std::vector<TrajectoryDataset> sliding_windows(const TrajectoryDataset& data, Eigen::Index train,
                                               Eigen::Index test, bool overlap, int count) {
  if (train < 2 || test < 1 || count < 1) {
    throw Error(ErrorKind::kInvalidArgument, "window sizes and count must be positive");
  }
  const Eigen::Index stride = overlap ? train : train + test;
  const Eigen::Index needed = stride * (count - 1) + train + test;
  if (data.length() < needed) {
    std::ostringstream msg;
    msg << count << " windows of " << train << '+' << test << " rows need " << needed
        << " rows, dataset has " << data.length();
    throw Error(ErrorKind::kInsufficientData, msg.str());
  }
  std::vector<TrajectoryDataset> windows;
  windows.reserve(static_cast<std::size_t>(count));
  for (int w = 0; w < count; ++w) {
    const Eigen::Index start = stride * w;
    TrajectoryDataset win;
    win.states = data.states.middleRows(start, train + test);
    win.observations = data.observations.middleRows(start, train + test);
    win.split_index = train;
    win.lag = data.lag;
    win.seed = data.seed;
    windows.push_back(std::move(win));
  }
  return windows;
}

}  // namespace dkf
