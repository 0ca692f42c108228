#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "dkf/bench.hpp"
#include "dkf/dataset_io.hpp"
#include "dkf/errors.hpp"
#include "dkf/oracle.hpp"

namespace {

// Raw flag values; translated into a BenchmarkConfig once parsing is done.
struct Flags {
  std::string dataset = "syn1";
  std::string csv_path;
  std::optional<long> d;
  std::optional<long> m;
  std::optional<long> T;
  int trials = 5;
  std::string filters;
  std::uint64_t seed = 1;
  int lag = 0;
  long gp_cap = 1000;
  long gp_search = 0;
  std::optional<double> split_fraction;
  long window_train = 5000;
  long window_test = 5000;
  bool window_overlap = false;
  int jobs = 1;
  std::string out;
  std::string format = "table";
  std::string model;
  int steps = 50;
  long points = 4000;
};

void add_dataset_flags(CLI::App& app, Flags& f) {
  app.add_option("--dataset", f.dataset, "syn1 | syn2 | surrogate | csv")->capture_default_str();
  app.add_option("--csv-path", f.csv_path, "dataset CSV (t,z_1..,x_1.. or headerless)");
  app.add_option("--d", f.d, "state dimension of a headerless CSV");
  app.add_option("--m", f.m, "observation dimension");
  app.add_option("--T", f.T, "sequence length for generated datasets");
  app.add_option("--seed", f.seed, "base seed; trial i uses seed + i")->capture_default_str();
  app.add_option("--lag", f.lag, "bins by which observations lead states")->capture_default_str();
  app.add_option("--split-fraction", f.split_fraction, "training fraction of each sequence");
  app.add_option("--window-train", f.window_train, "CSV window training rows")
      ->capture_default_str();
  app.add_option("--window-test", f.window_test, "CSV window test rows")->capture_default_str();
  app.add_flag("--window-overlap", f.window_overlap,
               "advance CSV windows by the training length only");
}

void add_fit_flags(CLI::App& app, Flags& f) {
  app.add_option("--filters", f.filters, "comma list: kalman,ekf,ukf,dkf-gp,dkf-gp-freq,dkf-nn");
  app.add_option("--gp-cap", f.gp_cap, "GP training points kept after subsampling")
      ->capture_default_str();
  app.add_option("--gp-search", f.gp_search,
                 "points used for the GP hyperparameter search (0 = all kept)")
      ->capture_default_str();
}

dkf::BenchmarkConfig to_config(const Flags& f) {
  dkf::BenchmarkConfig c;
  c.dataset = dkf::parse_dataset_kind(f.dataset);
  c.csv_path = f.csv_path;
  if (c.dataset == dkf::DatasetKind::kSyn2) {
    c.T = 2000;
    c.m = 2;
  } else if (c.dataset == dkf::DatasetKind::kSurrogate) {
    c.T = 10000;
    c.m = 100;
  }
  if (f.T) c.T = *f.T;
  if (f.m) c.m = *f.m;
  if (f.d) c.d = *f.d;
  if (c.dataset == dkf::DatasetKind::kSyn2 && c.m != 2) {
    throw dkf::Error(dkf::ErrorKind::kInvalidArgument, "syn2 has m = 2");
  }
  if (c.dataset != dkf::DatasetKind::kCsv && f.d && *f.d != (c.dataset == dkf::DatasetKind::kSurrogate ? 2 : 1)) {
    throw dkf::Error(dkf::ErrorKind::kInvalidArgument, "--d does not match the generated dataset");
  }
  c.trials = f.trials;
  if (!f.filters.empty()) c.filters = dkf::parse_filter_list(f.filters);
  c.seed = f.seed;
  c.lag = f.lag;
  c.gp_cap = f.gp_cap;
  c.gp_search = f.gp_search;
  c.split_fraction = f.split_fraction;
  c.window_train = f.window_train;
  c.window_test = f.window_test;
  c.window_overlap = f.window_overlap;
  c.jobs = f.jobs;
  c.out = f.out;
  c.format = f.format;
  return c;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw dkf::Error(dkf::ErrorKind::kIoError, "cannot open " + path + " for writing");
  out << text;
}

int cmd_simulate(const Flags& f) {
  auto c = to_config(f);
  if (c.dataset == dkf::DatasetKind::kCsv) {
    throw dkf::Error(dkf::ErrorKind::kInvalidArgument, "simulate needs a generated dataset");
  }
  if (f.out.empty()) throw dkf::Error(dkf::ErrorKind::kInvalidArgument, "simulate needs --out");
  c.trials = 1;
  c.validate();
  const auto data = dkf::trial_dataset(c, 0);
  dkf::save_dataset(data, f.out);
  std::cout << "wrote " << f.out << " rows=" << data.length() << " d=" << data.state_dim()
            << " m=" << data.observation_dim() << " split_index=" << data.split_index << '\n';
  return 0;
}

int cmd_fit(const Flags& f) {
  auto c = to_config(f);
  c.trials = 1;
  c.validate();
  if (f.out.empty()) throw dkf::Error(dkf::ErrorKind::kInvalidArgument, "fit needs --out");
  const auto data = dkf::trial_dataset(c, 0);
  const auto settings = dkf::trial_fit_settings(c, 0);
  const std::filesystem::path out(f.out);
  const bool single_file = c.filters.size() == 1 && out.extension() == ".json";
  if (!single_file) std::filesystem::create_directories(out);
  for (auto filter : c.filters) {
    const auto bundle = dkf::fit_filter_model(filter, data, settings);
    const auto path = single_file ? out : out / (std::string(dkf::to_string(filter)) + ".json");
    dkf::save_model(bundle, path);
    std::cout << "wrote " << path.string() << '\n';
  }
  return 0;
}

int cmd_run(const Flags& f) {
  auto c = to_config(f);
  c.trials = 1;
  c.validate();
  if (f.model.empty()) throw dkf::Error(dkf::ErrorKind::kInvalidArgument, "run needs --model");
  const auto bundle = dkf::load_model(f.model);
  const auto data = dkf::trial_dataset(c, 0);
  auto models = bundle.to_filter_models();
  models.dkf.on_invalid_posterior = dkf::PosteriorFailurePolicy::kDropPriorCorrection;
  const auto run = dkf::run_filter(bundle.filter_kind(), data, models);
  const dkf::Matrix truth = data.test_states();
  if (f.out.empty() || f.out == "-") {
    dkf::write_trace(std::cout, run.beliefs, truth, data.split_index);
  } else {
    dkf::emit_trace(run.beliefs, truth, f.out, data.split_index);
  }
  dkf::Matrix predictions(truth.rows(), truth.cols());
  for (std::size_t s = 0; s < run.beliefs.size(); ++s) {
    predictions.row(static_cast<Eigen::Index>(s)) = run.beliefs[s].mean.transpose();
  }
  std::cerr << "filter=" << bundle.filter << " steps=" << run.beliefs.size()
            << " nmse=" << dkf::format_double(dkf::normalized_mse(predictions, truth))
            << " q_regularizations=" << run.diagnostics.q_regularizations
            << " posterior_fallbacks=" << run.diagnostics.posterior_fallbacks << '\n';
  return 0;
}

int cmd_bench(const Flags& f) {
  const auto c = to_config(f);
  const auto format = dkf::parse_report_format(f.format);
  const auto report = dkf::run_benchmark(c);
  write_text(f.out, dkf::emit_report(report, format));
  for (const auto& cell : report.cells) {
    if (!cell.ok) return 3;
  }
  return 0;
}

int cmd_oracle_check(const Flags& f) {
  dkf::OracleCheckOptions options;
  options.configurations = f.trials;
  options.steps = f.steps;
  options.seed = f.seed;
  options.points = f.points;
  const auto report = dkf::oracle_check(options);
  std::ostringstream out;
  out << "config,a,gamma,S,q,max_mean_dev,max_var_dev\n";
  for (std::size_t i = 0; i < report.cases.size(); ++i) {
    const auto& c = report.cases[i];
    out << i + 1 << ',' << dkf::format_double(c.a) << ',' << dkf::format_double(c.gamma) << ','
        << dkf::format_double(c.S) << ',' << (c.varying_q ? "varying" : "constant") << ','
        << dkf::format_double(c.max_mean_deviation) << ','
        << dkf::format_double(c.max_variance_deviation) << '\n';
  }
  out << "max_mean_deviation=" << dkf::format_double(report.max_mean_deviation) << '\n';
  out << "max_variance_deviation=" << dkf::format_double(report.max_variance_deviation) << '\n';
  write_text(f.out, out.str());
  return 0;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

// Applies key=value lines to options not given on the command line, so flags
// override the file.
void apply_config_file(CLI::App& app, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw dkf::Error(dkf::ErrorKind::kIoError, "cannot open config " + path);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) {
      throw dkf::Error(dkf::ErrorKind::kInvalidArgument,
                       "config line " + std::to_string(number) + " is not key=value");
    }
    auto key = trim(text.substr(0, eq));
    if (key.rfind("--", 0) == 0) key = key.substr(2);
    const auto value = trim(text.substr(eq + 1));
    if (key == "config") continue;
    CLI::Option* opt = nullptr;
    try {
      opt = app.get_option("--" + key);
    } catch (const CLI::OptionNotFound&) {
      throw dkf::Error(dkf::ErrorKind::kInvalidArgument, "unknown config key: " + key);
    }
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

std::string quoted(const std::string& s) {
  std::ostringstream out;
  out << std::quoted(s);
  return out.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Discriminative Kalman filter toolkit"};
  app.require_subcommand(1);
  Flags flags;

  auto* simulate = app.add_subcommand("simulate", "generate a dataset and write it as CSV");
  auto* fit = app.add_subcommand("fit", "train models on the training segment and save them");
  auto* run = app.add_subcommand("run", "filter the test segment with a saved model");
  auto* bench = app.add_subcommand("bench", "run the normalized-MSE comparison table");
  auto* oracle = app.add_subcommand("oracle-check", "compare dkf_step with the grid oracle");

  std::string config_path;
  for (auto* sub : {simulate, fit, run, bench, oracle}) {
    sub->add_option("--config", config_path, "key=value file mirroring the flags");
    sub->add_option("--out", flags.out, "output path (stdout when omitted)");
  }
  for (auto* sub : {simulate, fit, run, bench}) add_dataset_flags(*sub, flags);
  for (auto* sub : {fit, bench}) add_fit_flags(*sub, flags);
  bench->add_option("--trials", flags.trials, "number of trials")->capture_default_str();
  bench->add_option("--format", flags.format, "csv | table")->capture_default_str();
  bench->add_option("--jobs", flags.jobs, "trials run in parallel")->capture_default_str();
  run->add_option("--model", flags.model, "model file written by fit")->required();
  oracle->add_option("--trials", flags.trials, "random configurations")->default_val(20);
  oracle->add_option("--steps", flags.steps, "steps per configuration")->capture_default_str();
  oracle->add_option("--seed", flags.seed, "seed")->capture_default_str();
  oracle->add_option("--points", flags.points, "grid points")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error kind=InvalidArgument message=" << quoted(e.what()) << '\n';
    return 2;
  }

  try {
    for (auto* sub : {simulate, fit, run, bench, oracle}) {
      if (*sub && !config_path.empty()) apply_config_file(*sub, config_path);
    }
    if (*simulate) return cmd_simulate(flags);
    if (*fit) return cmd_fit(flags);
    if (*run) return cmd_run(flags);
    if (*bench) return cmd_bench(flags);
    if (*oracle) return cmd_oracle_check(flags);
  } catch (const dkf::NonFiniteError& e) {
    std::cerr << "error kind=NonFinite row=" << e.row() << " message=" << quoted(e.what()) << '\n';
    return 1;
  } catch (const dkf::FilterStepError& e) {
    std::cerr << "error kind=" << dkf::to_string(e.kind()) << " t=" << e.time_index()
              << " message=" << quoted(e.what()) << '\n';
    return 1;
  } catch (const dkf::Error& e) {
    std::cerr << "error kind=" << dkf::to_string(e.kind()) << " message=" << quoted(e.what())
              << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error kind=Internal message=" << quoted(e.what()) << '\n';
    return 1;
  }
  return 0;
}
