#include "koopred/graphred.hpp"

#include <algorithm>
#include <set>

#include <json.hpp>

#include "koopred/errors.hpp"

namespace koopred::graphred {

using nlohmann::json;

InclusionGraph threshold(const Eigen::MatrixXd& Gamma, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ConfigError("epsilon must lie in (0, 1)");
  const Eigen::Index L = Gamma.cols();
  const Eigen::Index rows = Gamma.rows();
  if (rows < L) throw ConfigError("inclusion matrix needs at least L rows");
  if (((Gamma.array() < 0.0) || (Gamma.array() > 1.0)).any())
    throw DataError("inclusion matrix entries must lie in [0, 1]");

  InclusionGraph g;
  g.n_obs = static_cast<int>(L);
  g.n_ctrl = static_cast<int>(rows - L);
  g.epsilon = epsilon;
  g.adjacency.assign(static_cast<size_t>(L) * L, 0);
  g.control_rows.assign(static_cast<size_t>(g.n_ctrl) * L, 0);
  for (Eigen::Index i = 0; i < L; ++i)
    for (Eigen::Index j = 0; j < L; ++j)
      g.adjacency[static_cast<size_t>(i) * L + j] = Gamma(i, j) >= epsilon ? 1 : 0;
  for (Eigen::Index k = 0; k < g.n_ctrl; ++k)
    for (Eigen::Index j = 0; j < L; ++j)
      g.control_rows[static_cast<size_t>(k) * L + j] = Gamma(L + k, j) >= epsilon ? 1 : 0;
  return g;
}

Condensation scc(const InclusionGraph& g) {
  const int n = g.n_obs;
  Condensation cond;
  cond.node_to_component.assign(n, -1);

  // Tarjan with an explicit DFS stack so deep graphs cannot overflow the
  // call stack.
  std::vector<int> index(n, -1), lowlink(n, 0);
  std::vector<std::uint8_t> on_stack(n, 0);
  std::vector<int> stack;
  int next_index = 0;

  struct Frame {
    int v;
    int next_child;
  };
  std::vector<Frame> dfs;

  for (int root = 0; root < n; ++root) {
    if (index[root] != -1) continue;
    dfs.push_back({root, 0});
    index[root] = lowlink[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = 1;

    while (!dfs.empty()) {
      const int v = dfs.back().v;
      bool descended = false;
      while (dfs.back().next_child < n) {
        const int w = dfs.back().next_child++;
        if (!g.edge(v, w)) continue;
        if (index[w] == -1) {
          index[w] = lowlink[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = 1;
          dfs.push_back({w, 0});
          descended = true;
          break;
        }
        if (on_stack[w]) lowlink[v] = std::min(lowlink[v], index[w]);
      }
      if (descended) continue;

      if (lowlink[v] == index[v]) {
        std::vector<int> comp;
        for (;;) {
          const int w = stack.back();
          stack.pop_back();
          on_stack[w] = 0;
          comp.push_back(w);
          cond.node_to_component[w] = static_cast<int>(cond.components.size());
          if (w == v) break;
        }
        std::sort(comp.begin(), comp.end());
        cond.components.push_back(std::move(comp));
      }
      dfs.pop_back();
      if (!dfs.empty()) {
        const int parent = dfs.back().v;
        lowlink[parent] = std::min(lowlink[parent], lowlink[v]);
      }
    }
  }

  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (!g.edge(i, j)) continue;
      const int ci = cond.node_to_component[i];
      const int cj = cond.node_to_component[j];
      if (ci != cj) edges.insert({ci, cj});
    }
  }
  cond.dag_edges.assign(edges.begin(), edges.end());
  return cond;
}

std::vector<int> ancestors(const Condensation& c, const std::vector<int>& output_nodes) {
  if (output_nodes.empty()) throw ConfigError("output node set must be non-empty");
  const int n_comp = static_cast<int>(c.components.size());
  const int n_nodes = static_cast<int>(c.node_to_component.size());

  std::vector<std::uint8_t> reach(n_comp, 0);
  std::vector<int> queue;
  for (int node : output_nodes) {
    if (node < 0 || node >= n_nodes)
      throw ConfigError("output node " + std::to_string(node) + " out of range");
    const int comp = c.node_to_component[node];
    if (!reach[comp]) {
      reach[comp] = 1;
      queue.push_back(comp);
    }
  }

  // reverse reachability over the condensed DAG
  std::vector<std::vector<int>> rev(n_comp);
  for (const auto& [from, to] : c.dag_edges) rev[to].push_back(from);
  while (!queue.empty()) {
    const int comp = queue.back();
    queue.pop_back();
    for (int pred : rev[comp]) {
      if (!reach[pred]) {
        reach[pred] = 1;
        queue.push_back(pred);
      }
    }
  }

  std::vector<int> out;
  for (int comp = 0; comp < n_comp; ++comp) {
    if (!reach[comp]) continue;
    out.insert(out.end(), c.components[comp].begin(), c.components[comp].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ReducedDictionary reduce_dictionary(const dict::Dictionary& d, const Eigen::MatrixXd& Gamma,
                                    double epsilon) {
  d.validate();
  const int L = d.size();
  if (Gamma.cols() != L || Gamma.rows() != L + d.n_inputs)
    throw ConfigError("inclusion matrix shape does not match dictionary");

  const InclusionGraph g = threshold(Gamma, epsilon);
  const Condensation cond = scc(g);
  std::vector<int> keep = ancestors(cond, d.output_indices);

  // outputs are unconditionally retained; ancestors already contain them
  // via their own components, so this is belt only for exotic inputs
  for (int o : d.output_indices)
    if (!std::binary_search(keep.begin(), keep.end(), o)) {
      keep.push_back(o);
      std::sort(keep.begin(), keep.end());
    }

  ReducedDictionary out;
  out.index_map.assign(L, -1);
  out.kept = keep;
  dict::Dictionary nd;
  nd.n_inputs = d.n_inputs;
  nd.embed_delays = d.embed_delays;
  nd.state_dim = d.state_dim;
  nd.state_names = d.state_names;
  nd.input_names = d.input_names;
  for (size_t k = 0; k < keep.size(); ++k) {
    nd.observables.push_back(d.observables[keep[k]]);
    out.index_map[keep[k]] = static_cast<int>(k);
  }
  for (int o : d.output_indices) nd.output_indices.push_back(out.index_map[o]);
  nd.validate();
  out.dictionary = std::move(nd);
  return out;
}

std::string to_json(const InclusionGraph& g) {
  json j;
  j["n_obs"] = g.n_obs;
  j["n_ctrl"] = g.n_ctrl;
  j["epsilon"] = g.epsilon;
  json adj = json::array();
  for (int i = 0; i < g.n_obs; ++i) {
    json row = json::array();
    for (int k = 0; k < g.n_obs; ++k) row.push_back(g.edge(i, k) ? 1 : 0);
    adj.push_back(std::move(row));
  }
  j["adjacency"] = std::move(adj);
  json ctrl = json::array();
  for (int i = 0; i < g.n_ctrl; ++i) {
    json row = json::array();
    for (int k = 0; k < g.n_obs; ++k) row.push_back(g.control_edge(i, k) ? 1 : 0);
    ctrl.push_back(std::move(row));
  }
  j["control_rows"] = std::move(ctrl);
  return j.dump(2);
}

std::string to_json(const Condensation& c) {
  json j;
  j["components"] = c.components;
  json edges = json::array();
  for (const auto& [from, to] : c.dag_edges) edges.push_back({from, to});
  j["dag_edges"] = std::move(edges);
  j["node_to_component"] = c.node_to_component;
  return j.dump(2);
}

std::string edge_list_text(const InclusionGraph& g) {
  std::string out;
  for (int i = 0; i < g.n_obs; ++i)
    for (int j = 0; j < g.n_obs; ++j)
      if (g.edge(i, j)) out += std::to_string(i) + " " + std::to_string(j) + "\n";
  return out;
}

}  // namespace koopred::graphred
