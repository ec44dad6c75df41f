#include "koopred/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "koopred/errors.hpp"

namespace koopred::data {

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding whitespace
    auto b = cell.find_first_not_of(" \t\r");
    auto e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, int line_no, const std::string& col_name) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    throw DataError("malformed numeric value '" + cell + "' at line " +
                    std::to_string(line_no));
  }
  if (!std::isfinite(v)) {
    throw DataError("non-finite value at line " + std::to_string(line_no) +
                    ", column '" + col_name + "'");
  }
  return v;
}

}  // namespace

void Dataset::validate() const {
  if (dt <= 0.0) throw DataError("dt must be positive, got " + format_double(dt));
  if (states.rows() < 2) throw DataError("dataset needs at least 2 state rows");
  if (inputs.cols() > 0 && inputs.rows() != states.rows() - 1) {
    throw DataError("inputs must have exactly one fewer row than states (" +
                    std::to_string(inputs.rows()) + " vs " +
                    std::to_string(states.rows()) + ")");
  }
  if (!states.allFinite()) throw DataError("states contain non-finite entries");
  if (inputs.size() > 0 && !inputs.allFinite())
    throw DataError("inputs contain non-finite entries");
}

Dataset load_csv(const std::string& path, int n_states, int n_inputs) {
  if (n_states < 1) throw ConfigError("n_states must be >= 1");
  if (n_inputs < 0) throw ConfigError("n_inputs must be >= 0");

  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");

  const int n_cols = n_states + n_inputs;
  std::string line;
  int line_no = 0;
  double dt = 1.0;
  bool have_header = false;
  std::vector<std::string> names;
  std::vector<std::vector<double>> rows;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("dt=");
      if (pos != std::string::npos) {
        std::string value = line.substr(pos + 3);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
        (void)ptr;
        if (ec != std::errc() || !(v > 0.0)) {
          throw DataError("malformed dt comment at line " + std::to_string(line_no));
        }
        dt = v;
      }
      continue;
    }
    if (!have_header) {
      names = split_csv_line(line);
      if (static_cast<int>(names.size()) < n_cols) {
        throw DataError("header at line " + std::to_string(line_no) + " has " +
                        std::to_string(names.size()) + " columns, need " +
                        std::to_string(n_cols));
      }
      have_header = true;
      continue;
    }
    auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) < n_cols) {
      throw DataError("line " + std::to_string(line_no) + " has " +
                      std::to_string(cells.size()) + " cells, need " +
                      std::to_string(n_cols));
    }
    std::vector<double> row(n_cols);
    for (int j = 0; j < n_cols; ++j) row[j] = parse_cell(cells[j], line_no, names[j]);
    rows.push_back(std::move(row));
  }

  if (!have_header) throw DataError("'" + path + "' has no header row");
  if (rows.size() < 2) {
    throw DataError("'" + path + "' has " + std::to_string(rows.size()) +
                    " data rows, need at least 2");
  }

  Dataset d;
  d.dt = dt;
  const auto n_rows = static_cast<Eigen::Index>(rows.size());
  d.states.resize(n_rows, n_states);
  d.inputs.resize(n_rows - 1, n_inputs);
  for (Eigen::Index i = 0; i < n_rows; ++i) {
    for (int j = 0; j < n_states; ++j) d.states(i, j) = rows[i][j];
    if (i < n_rows - 1)
      for (int j = 0; j < n_inputs; ++j) d.inputs(i, j) = rows[i][n_states + j];
  }
  d.column_names.assign(names.begin(), names.begin() + n_cols);
  d.validate();
  return d;
}

void save_csv(const Dataset& d, const std::string& path) {
  d.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");

  out << "# dt=" << format_double(d.dt) << "\n";
  const int n = static_cast<int>(d.n_states());
  const int l = static_cast<int>(d.n_inputs());
  for (int j = 0; j < n + l; ++j) {
    if (j) out << ',';
    if (j < static_cast<int>(d.column_names.size()))
      out << d.column_names[j];
    else
      out << (j < n ? "x" + std::to_string(j) : "u" + std::to_string(j - n));
  }
  out << "\n";
  for (Eigen::Index i = 0; i < d.states.rows(); ++i) {
    for (int j = 0; j < n; ++j) {
      if (j) out << ',';
      out << format_double(d.states(i, j));
    }
    for (int j = 0; j < l; ++j) {
      out << ',' << format_double(i < d.inputs.rows() ? d.inputs(i, j) : 0.0);
    }
    out << "\n";
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

SnapshotPairs snapshot_pairs(const Dataset& d) {
  d.validate();
  const Eigen::Index m = d.n_pairs();
  SnapshotPairs p;
  p.X = d.states.topRows(m);
  p.X_next = d.states.bottomRows(m);
  p.U = d.inputs;
  return p;
}

Eigen::MatrixXd add_measurement_noise(const Eigen::MatrixXd& X, double snr_db,
                                      std::uint64_t seed) {
  if (!X.allFinite()) throw DataError("cannot add noise to non-finite data");
  if (std::isinf(snr_db) && snr_db > 0) return X;
  if (!std::isfinite(snr_db)) throw ConfigError("snr_db must be finite or +inf");

  Eigen::MatrixXd out = X;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double snr_linear = std::pow(10.0, snr_db / 10.0);

  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double mean = X.col(j).mean();
    const double power = (X.col(j).array() - mean).square().mean();
    if (power <= 0.0) {
      throw DataError("column " + std::to_string(j) +
                      " has zero power; noise variance undefined at finite SNR");
    }
    const double sigma = std::sqrt(power / snr_linear);
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i, j) += sigma * gauss(rng);
  }
  return out;
}

Dataset with_noisy_states(const Dataset& d, double snr_db, std::uint64_t seed) {
  Dataset out = d;
  out.states = add_measurement_noise(d.states, snr_db, seed);
  return out;
}

}  // namespace koopred::data
