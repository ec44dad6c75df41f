#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "koopred/dictionary.hpp"

namespace koopred::graphred {

// Thresholded inclusion matrix viewed as a directed graph over the L
// observable nodes: edge i -> j means observable i is present in the
// regression for observable j. Control rows are kept separately and never
// enter the graph.
struct InclusionGraph {
  int n_obs = 0;
  int n_ctrl = 0;
  std::vector<std::uint8_t> adjacency;     // n_obs * n_obs, row-major
  std::vector<std::uint8_t> control_rows;  // n_ctrl * n_obs, row-major
  double epsilon = 0.0;

  bool edge(int i, int j) const { return adjacency[static_cast<size_t>(i) * n_obs + j] != 0; }
  bool control_edge(int k, int j) const {
    return control_rows[static_cast<size_t>(k) * n_obs + j] != 0;
  }
};

// Strongly connected components plus the condensed DAG; components are
// listed in reverse topological order and dag_edges are deduplicated.
struct Condensation {
  std::vector<std::vector<int>> components;
  std::vector<std::pair<int, int>> dag_edges;
  std::vector<int> node_to_component;
};

// Entries >= epsilon become edges (boundary kept). Gamma is (L+l) x L with
// all entries in [0, 1]; the top L rows form the adjacency, the bottom l
// rows the control block.
InclusionGraph threshold(const Eigen::MatrixXd& Gamma, double epsilon);

// Tarjan's algorithm with an explicit stack.
Condensation scc(const InclusionGraph& g);

// All nodes belonging to components from which some output-containing
// component is reachable in the condensed DAG, including the output
// components themselves. Returned sorted.
std::vector<int> ancestors(const Condensation& c, const std::vector<int>& output_nodes);

struct ReducedDictionary {
  dict::Dictionary dictionary;
  std::vector<int> index_map;  // old observable index -> new index, -1 if dropped
  std::vector<int> kept;       // kept old indices in order
};

// Keeps the output observables and every ancestor of an output node;
// control inputs always survive. Order is preserved and output indices are
// remapped.
ReducedDictionary reduce_dictionary(const dict::Dictionary& d, const Eigen::MatrixXd& Gamma,
                                    double epsilon);

std::string to_json(const InclusionGraph& g);
std::string to_json(const Condensation& c);

// One "src dst" pair per adjacency edge, for external graph viewers.
std::string edge_list_text(const InclusionGraph& g);

}  // namespace koopred::graphred
