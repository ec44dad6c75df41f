#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace koopred::data {

// Time-indexed state snapshots plus control inputs with sampling metadata.
// states carries one more row than inputs: the final state has no successor
// and therefore no matching input sample. inputs has zero columns for
// autonomous systems.
struct Dataset {
  Eigen::MatrixXd states;                 // (m+1) x n
  Eigen::MatrixXd inputs;                 // m x l
  double dt = 1.0;                        // seconds per sample
  std::vector<std::string> column_names;  // n state names then l input names

  Eigen::Index n_states() const { return states.cols(); }
  Eigen::Index n_inputs() const { return inputs.cols(); }
  Eigen::Index n_pairs() const { return states.rows() - 1; }

  // Throws DataError on any invariant violation (row mismatch, non-finite
  // entries, non-positive dt).
  void validate() const;
};

// Consecutive-snapshot view: row i of X_next is row i+1 of the source states.
struct SnapshotPairs {
  Eigen::MatrixXd X;       // m x n
  Eigen::MatrixXd X_next;  // m x n
  Eigen::MatrixXd U;       // m x l
};

// CSV ingestion. Expected layout: optional first comment line `# dt=<seconds>`,
// then a header row, then one sample per row in time order. The first
// n_states numeric columns are states, the next n_inputs are inputs; the
// final row's input cells are ignored (inputs end one sample early).
Dataset load_csv(const std::string& path, int n_states, int n_inputs);

// Inverse of load_csv. The final row's input cells are written as 0 and
// dropped again on load.
void save_csv(const Dataset& d, const std::string& path);

SnapshotPairs snapshot_pairs(const Dataset& d);

// Perturbs each column by zero-mean Gaussian noise, independent per column
// and per sample, with variance power_j / 10^(snr_db/10) where power_j is
// the mean squared deviation of column j from its column mean. snr_db of
// +infinity returns X unchanged. A zero-power column with finite snr_db is
// a degenerate signal and throws.
Eigen::MatrixXd add_measurement_noise(const Eigen::MatrixXd& X, double snr_db,
                                      std::uint64_t seed);

// Convenience: same dataset with noisy states. Inputs are commanded, not
// measured, and are never perturbed.
Dataset with_noisy_states(const Dataset& d, double snr_db, std::uint64_t seed);

}  // namespace koopred::data
