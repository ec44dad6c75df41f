#include "koopred/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <json.hpp>

#include "koopred/errors.hpp"
#include "koopred/random.hpp"

namespace koopred::dict {

using nlohmann::json;

double evaluate_observable(const ObservableSpec& obs, const Eigen::VectorXd& x) {
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, Identity>) {
          if (o.state_index < 0 || o.state_index >= x.size())
            throw ConfigError("identity observable index " +
                              std::to_string(o.state_index) + " out of range");
          return x(o.state_index);
        } else if constexpr (std::is_same_v<T, GaussianRbf>) {
          if (o.center.size() != x.size())
            throw ConfigError("kernel center dimension mismatch");
          const double d2 = (x - o.center).squaredNorm();
          return std::exp(-o.exponent_coeff * d2);
        } else {
          if (o.center.size() != x.size())
            throw ConfigError("kernel center dimension mismatch");
          const double d = (x - o.center).norm();
          const double s = std::sin(M_PI * o.frequency * d);
          return std::exp(-o.exponent_coeff * s * s);
        }
      },
      obs);
}

void Dictionary::validate() const {
  if (state_dim < 1) throw ConfigError("dictionary state_dim must be >= 1");
  if (n_inputs < 0) throw ConfigError("dictionary n_inputs must be >= 0");
  if (embed_delays < 0) throw ConfigError("embed_delays must be >= 0");
  if (observables.empty()) throw ConfigError("dictionary has no observables");
  for (const auto& obs : observables) {
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, Identity>) {
            if (o.state_index < 0 || o.state_index >= state_dim)
              throw ConfigError("identity index out of range");
          } else if constexpr (std::is_same_v<T, GaussianRbf>) {
            if (o.center.size() != state_dim)
              throw ConfigError("gaussian center dimension != state_dim");
            if (!(o.exponent_coeff > 0)) throw ConfigError("exponent_coeff must be > 0");
          } else {
            if (o.center.size() != state_dim)
              throw ConfigError("periodic center dimension != state_dim");
            if (!(o.exponent_coeff > 0)) throw ConfigError("exponent_coeff must be > 0");
            if (!(o.frequency > 0)) throw ConfigError("frequency must be > 0");
          }
        },
        obs);
  }
  if (output_indices.empty()) throw ConfigError("dictionary has no output indices");
  for (int idx : output_indices) {
    if (idx < 0 || idx >= size()) throw ConfigError("output index out of range");
    if (!std::holds_alternative<Identity>(observables[idx]))
      throw ConfigError("output index " + std::to_string(idx) +
                        " does not refer to an identity observable");
  }
}

Eigen::VectorXd Dictionary::evaluate(const Eigen::VectorXd& x) const {
  if (x.size() != state_dim)
    throw ConfigError("state vector has dimension " + std::to_string(x.size()) +
                      ", dictionary expects " + std::to_string(state_dim));
  Eigen::VectorXd phi(size());
  for (int i = 0; i < size(); ++i) phi(i) = evaluate_observable(observables[i], x);
  return phi;
}

std::vector<std::string> Dictionary::labels() const {
  std::vector<std::string> out;
  out.reserve(observables.size() + n_inputs);
  int rbf_count = 0, per_count = 0;
  for (const auto& obs : observables) {
    if (const auto* id = std::get_if<Identity>(&obs)) {
      if (id->state_index < static_cast<int>(state_names.size()))
        out.push_back(state_names[id->state_index]);
      else
        out.push_back("s" + std::to_string(id->state_index));
    } else if (std::holds_alternative<GaussianRbf>(obs)) {
      out.push_back("rbf" + std::to_string(rbf_count++));
    } else {
      out.push_back("per" + std::to_string(per_count++));
    }
  }
  for (int j = 0; j < n_inputs; ++j) {
    if (j < static_cast<int>(input_names.size()))
      out.push_back(input_names[j]);
    else
      out.push_back("u" + std::to_string(j));
  }
  return out;
}

namespace {

Eigen::Index nearest_center(const Eigen::MatrixXd& centers, const Eigen::RowVectorXd& x) {
  Eigen::Index best = 0;
  double best_d = (centers.row(0) - x).squaredNorm();
  for (Eigen::Index c = 1; c < centers.rows(); ++c) {
    const double d = (centers.row(c) - x).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

double uniform01(std::mt19937_64& rng) {
  // 53-bit mantissa draw; keeps the stream portable across standard libraries
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

Eigen::MatrixXd kmeans_centers(const Eigen::MatrixXd& X, int k, std::uint64_t seed,
                               int max_rounds, std::vector<double>* objective_trace) {
  const Eigen::Index m = X.rows();
  const Eigen::Index n = X.cols();
  if (k < 1) throw ConfigError("k must be >= 1");
  if (k > m) throw ConfigError("k = " + std::to_string(k) + " exceeds sample count " +
                               std::to_string(m));
  if (!X.allFinite()) throw DataError("k-means input contains non-finite values");

  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centers(k, n);

  // k-means++ seeding
  centers.row(0) = X.row(static_cast<Eigen::Index>(uniform01(rng) * m));
  Eigen::VectorXd d2 = (X.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double u = uniform01(rng) * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        acc += d2(i);
        if (u <= acc) {
          pick = i;
          break;
        }
      }
    } else {
      pick = c % m;  // all points coincide with existing centers
    }
    centers.row(c) = X.row(pick);
    for (Eigen::Index i = 0; i < m; ++i)
      d2(i) = std::min(d2(i), (X.row(i) - centers.row(c)).squaredNorm());
  }

  std::vector<Eigen::Index> assign(m, -1);
  for (int round = 0; round < max_rounds; ++round) {
    bool changed = false;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index c = nearest_center(centers, X.row(i));
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, n);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < m; ++i) {
      sums.row(assign[i]) += X.row(i);
      counts(assign[i]) += 1.0;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0) {
        centers.row(c) = sums.row(c) / counts(c);
      } else {
        // re-seed the dead center from the globally farthest point
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < m; ++i) {
          const double d = (X.row(i) - centers.row(assign[i])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        centers.row(c) = X.row(far);
        changed = true;
      }
    }
    if (objective_trace) {
      double obj = 0.0;
      for (Eigen::Index i = 0; i < m; ++i)
        obj += (X.row(i) - centers.row(nearest_center(centers, X.row(i)))).squaredNorm();
      objective_trace->push_back(obj);
    }
    if (!changed) break;
  }
  return centers;
}

data::Dataset delay_embed(const data::Dataset& d, int delays) {
  if (delays < 0) throw ConfigError("delays must be >= 0");
  d.validate();
  if (delays == 0) return d;
  if (d.states.rows() < delays + 2)
    throw DataError("need at least " + std::to_string(delays + 2) +
                    " state rows for " + std::to_string(delays) + " delays");

  const Eigen::Index n = d.n_states();
  const Eigen::Index rows = d.states.rows() - delays;
  data::Dataset out;
  out.dt = d.dt;
  out.states.resize(rows, n * (delays + 1));
  for (Eigen::Index i = 0; i < rows; ++i)
    for (int q = 0; q <= delays; ++q)
      out.states.block(i, q * n, 1, n) = d.states.row(i + delays - q);
  if (d.n_inputs() > 0) out.inputs = d.inputs.bottomRows(d.inputs.rows() - delays);
  else out.inputs.resize(rows - 1, 0);

  for (int q = 0; q <= delays; ++q) {
    for (Eigen::Index j = 0; j < n; ++j) {
      std::string base = j < static_cast<Eigen::Index>(d.column_names.size())
                             ? d.column_names[j]
                             : "x" + std::to_string(j);
      out.column_names.push_back(q == 0 ? base : base + "_lag" + std::to_string(q));
    }
  }
  for (Eigen::Index j = 0; j < d.n_inputs(); ++j) {
    const auto idx = n + j;
    out.column_names.push_back(idx < static_cast<Eigen::Index>(d.column_names.size())
                                   ? d.column_names[idx]
                                   : "u" + std::to_string(j));
  }
  return out;
}

DesignMatrix design_matrix(const Dictionary& dict, const data::SnapshotPairs& pairs) {
  dict.validate();
  const Eigen::Index m = pairs.X.rows();
  const int L = dict.size();
  const int l = dict.n_inputs;
  if (pairs.X.cols() != dict.state_dim)
    throw ConfigError("snapshot state dimension " + std::to_string(pairs.X.cols()) +
                      " != dictionary state_dim " + std::to_string(dict.state_dim));
  if (pairs.U.cols() != l)
    throw ConfigError("snapshot input dimension " + std::to_string(pairs.U.cols()) +
                      " != dictionary n_inputs " + std::to_string(l));

  DesignMatrix out;
  out.Phi.resize(m, L + l);
  out.targets.resize(m, L);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd x = pairs.X.row(i);
    const Eigen::VectorXd xn = pairs.X_next.row(i);
    for (int j = 0; j < L; ++j) {
      const double v = evaluate_observable(dict.observables[j], x);
      const double vn = evaluate_observable(dict.observables[j], xn);
      if (!std::isfinite(v) || !std::isfinite(vn))
        throw NumericError("non-finite observable value at row " + std::to_string(i) +
                           ", observable " + std::to_string(j));
      out.Phi(i, j) = v;
      out.targets(i, j) = vn;
    }
    for (int j = 0; j < l; ++j) out.Phi(i, L + j) = pairs.U(i, j);
  }
  return out;
}

namespace {

RbfGroupConfig rbf_group_from_json(const json& j) {
  RbfGroupConfig g;
  g.count = j.value("count", 0);
  if (j.contains("exponent_coeffs")) {
    g.exponent_coeffs = j.at("exponent_coeffs").get<std::vector<double>>();
    if (g.exponent_coeffs.empty()) throw ConfigError("exponent_coeffs must be non-empty");
  }
  if (j.contains("frequencies")) {
    g.frequencies = j.at("frequencies").get<std::vector<double>>();
    if (g.frequencies.empty()) throw ConfigError("frequencies must be non-empty");
  }
  return g;
}

}  // namespace

DictionaryConfig dictionary_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad dictionary config JSON: ") + e.what());
  }
  DictionaryConfig cfg;
  cfg.delays = j.value("delays", 0);
  if (j.contains("gaussian")) cfg.gaussian = rbf_group_from_json(j.at("gaussian"));
  if (j.contains("periodic")) cfg.periodic = rbf_group_from_json(j.at("periodic"));
  cfg.kmeans_max_rounds = j.value("kmeans_max_rounds", 300);
  return cfg;
}

Dictionary build_dictionary(const data::Dataset& train_raw, const DictionaryConfig& cfg,
                            std::uint64_t seed) {
  const data::Dataset embedded = delay_embed(train_raw, cfg.delays);
  const int n_raw = static_cast<int>(train_raw.n_states());
  const int n_emb = static_cast<int>(embedded.n_states());

  Dictionary dict;
  dict.state_dim = n_emb;
  dict.n_inputs = static_cast<int>(embedded.n_inputs());
  dict.embed_delays = cfg.delays;
  const auto& names = embedded.column_names;
  for (int i = 0; i < n_emb; ++i)
    dict.state_names.push_back(i < static_cast<int>(names.size())
                                   ? names[i]
                                   : "s" + std::to_string(i));
  for (int j = 0; j < dict.n_inputs; ++j) {
    const int idx = n_emb + j;
    dict.input_names.push_back(idx < static_cast<int>(names.size())
                                   ? names[idx]
                                   : "u" + std::to_string(j));
  }

  for (int i = 0; i < n_emb; ++i) dict.observables.push_back(Identity{i});
  for (int i = 0; i < n_raw; ++i) dict.output_indices.push_back(i);

  if (cfg.gaussian.count > 0) {
    const Eigen::MatrixXd centers = kmeans_centers(
        embedded.states, cfg.gaussian.count, derive_seed(seed, 0x6b67), cfg.kmeans_max_rounds);
    for (int i = 0; i < cfg.gaussian.count; ++i) {
      GaussianRbf o;
      o.center = centers.row(i);
      o.exponent_coeff = cfg.gaussian.exponent_coeffs[i % cfg.gaussian.exponent_coeffs.size()];
      dict.observables.push_back(std::move(o));
    }
  }
  if (cfg.periodic.count > 0) {
    const Eigen::MatrixXd centers = kmeans_centers(
        embedded.states, cfg.periodic.count, derive_seed(seed, 0x6b70), cfg.kmeans_max_rounds);
    for (int i = 0; i < cfg.periodic.count; ++i) {
      PeriodicRbf o;
      o.center = centers.row(i);
      o.exponent_coeff = cfg.periodic.exponent_coeffs[i % cfg.periodic.exponent_coeffs.size()];
      o.frequency = cfg.periodic.frequencies[i % cfg.periodic.frequencies.size()];
      dict.observables.push_back(std::move(o));
    }
  }
  dict.validate();
  return dict;
}

std::string to_json(const Dictionary& dict) {
  json obs_list = json::array();
  for (const auto& obs : dict.observables) {
    json o;
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, Identity>) {
            o["type"] = "identity";
            o["index"] = v.state_index;
          } else if constexpr (std::is_same_v<T, GaussianRbf>) {
            o["type"] = "gaussian_rbf";
            o["center"] = std::vector<double>(v.center.data(), v.center.data() + v.center.size());
            o["exponent_coeff"] = v.exponent_coeff;
          } else {
            o["type"] = "periodic_rbf";
            o["center"] = std::vector<double>(v.center.data(), v.center.data() + v.center.size());
            o["exponent_coeff"] = v.exponent_coeff;
            o["frequency"] = v.frequency;
          }
        },
        obs);
    obs_list.push_back(std::move(o));
  }
  json j;
  j["observables"] = std::move(obs_list);
  j["output_indices"] = dict.output_indices;
  j["n_inputs"] = dict.n_inputs;
  j["embed_delays"] = dict.embed_delays;
  j["state_dim"] = dict.state_dim;
  j["state_names"] = dict.state_names;
  j["input_names"] = dict.input_names;
  return j.dump(2);
}

Dictionary dictionary_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad dictionary JSON: ") + e.what());
  }
  Dictionary dict;
  try {
    dict.output_indices = j.at("output_indices").get<std::vector<int>>();
    dict.n_inputs = j.at("n_inputs").get<int>();
    dict.embed_delays = j.value("embed_delays", 0);
    dict.state_dim = j.at("state_dim").get<int>();
    dict.state_names = j.value("state_names", std::vector<std::string>{});
    dict.input_names = j.value("input_names", std::vector<std::string>{});
    for (const auto& o : j.at("observables")) {
      const std::string type = o.at("type").get<std::string>();
      if (type == "identity") {
        dict.observables.push_back(Identity{o.at("index").get<int>()});
      } else if (type == "gaussian_rbf") {
        GaussianRbf g;
        auto c = o.at("center").get<std::vector<double>>();
        g.center = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
        g.exponent_coeff = o.at("exponent_coeff").get<double>();
        dict.observables.push_back(std::move(g));
      } else if (type == "periodic_rbf") {
        PeriodicRbf p;
        auto c = o.at("center").get<std::vector<double>>();
        p.center = Eigen::Map<Eigen::VectorXd>(c.data(), c.size());
        p.exponent_coeff = o.at("exponent_coeff").get<double>();
        p.frequency = o.at("frequency").get<double>();
        dict.observables.push_back(std::move(p));
      } else {
        throw ConfigError("unknown observable type '" + type + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad dictionary JSON: ") + e.what());
  }
  dict.validate();
  return dict;
}

}  // namespace koopred::dict
