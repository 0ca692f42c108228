#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dkf/statespace.hpp"

namespace dkf {

// Shortest decimal text with 17 significant digits ("%.17g" equivalent);
// parses back to the identical double.
std::string format_double(double value);

// Parses a decimal (or nan/inf) token; throws kSchemaMismatch on junk.
double parse_double(std::string_view token);

std::vector<std::string_view> split_csv_line(std::string_view line);

// Metadata sidecar written next to a dataset CSV as key=value lines.
struct DatasetMetadata {
  Eigen::Index d = 0;
  Eigen::Index m = 0;
  Eigen::Index split_index = 0;
  int lag = 0;
  std::uint64_t seed = 0;
};

std::filesystem::path metadata_path(const std::filesystem::path& csv_path);

void write_metadata(const DatasetMetadata& meta, const std::filesystem::path& path);
DatasetMetadata read_metadata(const std::filesystem::path& path);

// CSV with header t,z_1..z_d,x_1..x_m and one row per time step.
void write_dataset_csv(const TrajectoryDataset& data, std::ostream& out);

// Writes the CSV and its .meta sidecar.
void save_dataset(const TrajectoryDataset& data, const std::filesystem::path& csv_path);

// Raw table read: a header row is detected (first field not numeric) and
// skipped. Rows are returned as-is (including the t column when present).
struct CsvTable {
  std::optional<std::vector<std::string>> header;
  Matrix values;  // rows x columns
};
CsvTable read_csv_table(const std::filesystem::path& path);

// Belief sequences: t,mu_1..mu_d,sigma_11..sigma_dd (row-major covariance).
void write_beliefs_csv(const std::vector<GaussianBelief>& beliefs, std::ostream& out,
                       Eigen::Index first_t = 0);
std::vector<GaussianBelief> read_beliefs_csv(std::istream& in);

}  // namespace dkf
