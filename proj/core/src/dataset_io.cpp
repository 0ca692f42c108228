#include "dkf/dataset_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "dkf/errors.hpp"

namespace dkf {

namespace {

std::string_view trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return text.substr(first, last - first + 1);
}

bool looks_numeric(std::string_view token) {
  token = trim(token);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  return ec == std::errc() && ptr == token.data() + token.size();
}

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] =
      std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::general, 17);
  return std::string(buffer, ptr);
}

double parse_double(std::string_view token) {
  token = trim(token);
  if (!token.empty() && token.front() == '+') token.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec == std::errc::result_out_of_range) {
    return token.find('-') == 0 ? -std::numeric_limits<double>::infinity()
                                : std::numeric_limits<double>::infinity();
  }
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw Error(ErrorKind::kSchemaMismatch, "not a number: '" + std::string(token) + "'");
  }
  return value;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      fields.push_back(trim(line.substr(start)));
      break;
    }
    fields.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return fields;
}

std::filesystem::path metadata_path(const std::filesystem::path& csv_path) {
  auto path = csv_path;
  path += ".meta";
  return path;
}

void write_metadata(const DatasetMetadata& meta, const std::filesystem::path& path) {
  auto out = open_for_write(path);
  out << "d=" << meta.d << '\n'
      << "m=" << meta.m << '\n'
      << "split_index=" << meta.split_index << '\n'
      << "lag=" << meta.lag << '\n'
      << "seed=" << meta.seed << '\n';
}

DatasetMetadata read_metadata(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  DatasetMetadata meta;
  std::string line;
  while (std::getline(in, line)) {
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::kSchemaMismatch, "bad metadata line: " + std::string(text));
    }
    const std::string key(trim(text.substr(0, eq)));
    const std::string value(trim(text.substr(eq + 1)));
    try {
      if (key == "d") {
        meta.d = std::stol(value);
      } else if (key == "m") {
        meta.m = std::stol(value);
      } else if (key == "split_index") {
        meta.split_index = std::stol(value);
      } else if (key == "lag") {
        meta.lag = std::stoi(value);
      } else if (key == "seed") {
        meta.seed = std::stoull(value);
      }
    } catch (const std::logic_error&) {
      throw Error(ErrorKind::kSchemaMismatch, "bad metadata value for " + key + ": " + value);
    }
  }
  return meta;
}

void write_dataset_csv(const TrajectoryDataset& data, std::ostream& out) {
  out << 't';
  for (Eigen::Index i = 1; i <= data.state_dim(); ++i) out << ",z_" << i;
  for (Eigen::Index k = 1; k <= data.observation_dim(); ++k) out << ",x_" << k;
  out << '\n';
  for (Eigen::Index t = 0; t < data.length(); ++t) {
    out << t;
    for (Eigen::Index i = 0; i < data.state_dim(); ++i) out << ',' << format_double(data.states(t, i));
    for (Eigen::Index k = 0; k < data.observation_dim(); ++k) {
      out << ',' << format_double(data.observations(t, k));
    }
    out << '\n';
  }
}

void save_dataset(const TrajectoryDataset& data, const std::filesystem::path& csv_path) {
  auto out = open_for_write(csv_path);
  write_dataset_csv(data, out);
  out.close();
  write_metadata({data.state_dim(), data.observation_dim(), data.split_index, data.lag, data.seed},
                 metadata_path(csv_path));
}

CsvTable read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open " + path.string());
  CsvTable table;
  std::vector<std::vector<double>> rows;
  std::size_t columns = 0;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (first) {
      first = false;
      columns = fields.size();
      if (!looks_numeric(fields.front())) {
        std::vector<std::string> names;
        for (auto f : fields) names.emplace_back(f);
        table.header = std::move(names);
        continue;
      }
    }
    if (fields.size() != columns) {
      std::ostringstream msg;
      msg << "row " << rows.size() + 1 << " has " << fields.size() << " columns, expected "
          << columns;
      throw Error(ErrorKind::kSchemaMismatch, msg.str());
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (auto f : fields) row.push_back(parse_double(f));
    rows.push_back(std::move(row));
  }
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(columns));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < columns; ++c) {
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
  }
  return table;
}

void write_beliefs_csv(const std::vector<GaussianBelief>& beliefs, std::ostream& out,
                       Eigen::Index first_t) {
  const Eigen::Index d = beliefs.empty() ? 0 : beliefs.front().dim();
  out << 't';
  for (Eigen::Index i = 1; i <= d; ++i) out << ",mu_" << i;
  for (Eigen::Index i = 1; i <= d; ++i) {
    for (Eigen::Index j = 1; j <= d; ++j) out << ",sigma_" << i << j;
  }
  out << '\n';
  for (std::size_t s = 0; s < beliefs.size(); ++s) {
    const auto& b = beliefs[s];
    out << first_t + static_cast<Eigen::Index>(s);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_double(b.mean(i));
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << format_double(b.covariance(i, j));
    }
    out << '\n';
  }
}

std::vector<GaussianBelief> read_beliefs_csv(std::istream& in) {
  std::vector<GaussianBelief> beliefs;
  std::string line;
  if (!std::getline(in, line)) return beliefs;
  const auto header = split_csv_line(line);
  // columns = 1 + d + d^2
  const auto columns = static_cast<double>(header.size());
  const auto d = static_cast<Eigen::Index>(std::lround((-1.0 + std::sqrt(4.0 * columns - 3.0)) / 2.0));
  if (1 + d + d * d != static_cast<Eigen::Index>(header.size())) {
    throw Error(ErrorKind::kSchemaMismatch, "belief CSV header has an unexpected column count");
  }
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size()) {
      throw Error(ErrorKind::kSchemaMismatch, "belief CSV row has an unexpected column count");
    }
    GaussianBelief b{Vector(d), Matrix(d, d)};
    for (Eigen::Index i = 0; i < d; ++i) b.mean(i) = parse_double(fields[1 + i]);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) b.covariance(i, j) = parse_double(fields[1 + d + i * d + j]);
    }
    beliefs.push_back(std::move(b));
  }
  return beliefs;
}

}  // namespace dkf
