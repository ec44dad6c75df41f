#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "koopred/dataset.hpp"

namespace koopred::dict {

// Observable atoms. identity reads one state component; the two kernel
// variants are bounded in (0, 1].
struct Identity {
  int state_index = 0;
};

struct GaussianRbf {
  Eigen::VectorXd center;
  double exponent_coeff = 1.0;  // > 0
};

struct PeriodicRbf {
  Eigen::VectorXd center;
  double exponent_coeff = 1.0;  // > 0
  double frequency = 1.0;       // > 0
};

using ObservableSpec = std::variant<Identity, GaussianRbf, PeriodicRbf>;

double evaluate_observable(const ObservableSpec& obs, const Eigen::VectorXd& x);

// Ordered observable set. The order is stable and fixes the row/column
// indexing of every matrix built from it (design matrix, inclusion matrix,
// fitted operator). Convention: identities first (current state, then
// delayed copies), then Gaussian kernels in center order, then periodic
// kernels.
struct Dictionary {
  std::vector<ObservableSpec> observables;
  std::vector<int> output_indices;  // must point at identity observables
  int n_inputs = 0;
  int embed_delays = 0;
  int state_dim = 0;  // post-embedding state dimension
  std::vector<std::string> state_names;  // optional, post-embedding labels
  std::vector<std::string> input_names;  // optional

  int size() const { return static_cast<int>(observables.size()); }
  void validate() const;

  // phi(x): component i is observable i evaluated at x.
  Eigen::VectorXd evaluate(const Eigen::VectorXd& x) const;

  // Human-readable labels for the L observables followed by the l inputs.
  std::vector<std::string> labels() const;
};

// Lloyd's algorithm with k-means++ seeding, iterated to an assignment fixed
// point or max_rounds. Empty clusters are re-seeded from the point farthest
// from its center. Deterministic given seed. objective_trace, when non-null,
// receives the within-cluster sum of squares after each round.
Eigen::MatrixXd kmeans_centers(const Eigen::MatrixXd& X, int k, std::uint64_t seed,
                               int max_rounds = 300,
                               std::vector<double>* objective_trace = nullptr);

// Augments each state row with its `delays` predecessors:
// row k becomes [x[k], x[k-1], ..., x[k-delays]]. The first `delays` rows
// are dropped and inputs are realigned accordingly.
data::Dataset delay_embed(const data::Dataset& d, int delays);

struct DesignMatrix {
  Eigen::MatrixXd Phi;      // m x (L+l): observables on X, then inputs
  Eigen::MatrixXd targets;  // m x L: column j is observable j on X_next
};

DesignMatrix design_matrix(const Dictionary& dict, const data::SnapshotPairs& pairs);

// Config-driven construction: kernel centers are cluster centers of the
// (embedded) training states.
struct RbfGroupConfig {
  int count = 0;
  std::vector<double> exponent_coeffs{1.0};  // cycled across centers
  std::vector<double> frequencies{1.0};      // periodic kernels only, cycled
};

struct DictionaryConfig {
  int delays = 0;
  RbfGroupConfig gaussian;
  RbfGroupConfig periodic;
  int kmeans_max_rounds = 300;
};

DictionaryConfig dictionary_config_from_json(const std::string& text);

// Builds the dictionary for a raw (un-embedded) training dataset: embeds per
// cfg.delays, clusters for kernel centers, and lays out observables in the
// stable order described on Dictionary. Outputs default to the identity
// observables of the un-delayed current state.
Dictionary build_dictionary(const data::Dataset& train_raw, const DictionaryConfig& cfg,
                            std::uint64_t seed);

std::string to_json(const Dictionary& dict);
Dictionary dictionary_from_json(const std::string& text);

}  // namespace koopred::dict
