#include "koopred/harness.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "koopred/baselines.hpp"
#include "koopred/errors.hpp"
#include "koopred/graphred.hpp"
#include "koopred/random.hpp"
#include "koopred/systems.hpp"

namespace koopred::harness {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

koopman::KoopmanModel fit_from_design(koopman::Method method,
                                      const dict::Dictionary& dictionary,
                                      const dict::DesignMatrix& dm,
                                      const FitOptions& opts) {
  switch (method) {
    case koopman::Method::I:
      return koopman::make_model(dictionary, baselines::edmd_pinv(dm.Phi, dm.targets),
                                 method);
    case koopman::Method::II:
      return koopman::make_model(
          dictionary,
          baselines::stls(dm.Phi, dm.targets, opts.stls_lambda, opts.stls_max_rounds),
          method);
    case koopman::Method::III:
      return koopman::make_model(
          dictionary,
          baselines::sbl_matrix(dm.Phi, dm.targets, opts.sbl_max_iter, opts.sbl_tol),
          method);
    case koopman::Method::IV: {
      const vb::FitResult fr =
          vb::fit_all(dm.Phi, dm.targets, opts.priors, opts.vb_threads);
      return koopman::make_model(dictionary, fr.K_F_hat, method, fr.rho_hats, fr.Gamma);
    }
  }
  throw ConfigError("unknown method");
}

}  // namespace

koopman::KoopmanModel fit_model(koopman::Method method, const data::Dataset& train_raw,
                                const dict::Dictionary& dictionary,
                                const FitOptions& opts) {
  const data::Dataset embedded = dict::delay_embed(train_raw, dictionary.embed_delays);
  const dict::DesignMatrix dm =
      dict::design_matrix(dictionary, data::snapshot_pairs(embedded));
  return fit_from_design(method, dictionary, dm, opts);
}

std::vector<std::pair<std::string, double>> evaluate_one_step(
    const koopman::KoopmanModel& model, const data::Dataset& raw) {
  model.validate();
  const dict::Dictionary& d = model.dictionary;
  const data::Dataset embedded = dict::delay_embed(raw, d.embed_delays);
  const data::SnapshotPairs pairs = data::snapshot_pairs(embedded);
  const dict::DesignMatrix dm = dict::design_matrix(d, pairs);

  // one matrix product gives every one-step prediction in lifted space
  const Eigen::MatrixXd lifted_next = dm.Phi * model.K_F_hat;  // m x L
  const Eigen::MatrixXd x_pred = lifted_next * model.C.transpose();

  std::vector<std::pair<std::string, double>> out;
  const auto labels = d.labels();
  for (int r = 0; r < model.n_out(); ++r) {
    const int obs_idx = d.output_indices[r];
    const int state_idx = std::get<dict::Identity>(d.observables[obs_idx]).state_index;
    out.emplace_back(labels[obs_idx],
                     koopman::nmse(pairs.X_next.col(state_idx), x_pred.col(r)));
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (system.type != "lorenz" && system.type != "usv" && system.type != "csv")
    throw ConfigError("system type must be lorenz, usv or csv");
  if (system.type == "csv") {
    if (system.train_path.empty() || system.test_path.empty())
      throw ConfigError("csv system needs train_path and test_path");
    if (system.n_states < 1) throw ConfigError("csv system needs n_states >= 1");
  }
  if (methods.empty()) throw ConfigError("methods must be non-empty");
  if (snr_grid.empty()) throw ConfigError("snr_grid must be non-empty");
  if (mc_runs < 1) throw ConfigError("mc_runs must be >= 1");
  if (epsilon_grid.empty()) throw ConfigError("epsilon_grid must be non-empty");
  for (double e : epsilon_grid)
    if (!(e > 0 && e < 1)) throw ConfigError("epsilon values must lie in (0, 1)");
  if (epsilon_eval != 0 && !(epsilon_eval > 0 && epsilon_eval < 1))
    throw ConfigError("epsilon_eval must lie in (0, 1)");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  priors.validate();
}

ExperimentConfig config_from_json(const std::string& text, const std::string& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config JSON: ") + e.what());
  }

  ExperimentConfig cfg;
  try {
    const json& sys = j.at("system");
    cfg.system.type = sys.value("type", "");
    cfg.system.json_text = sys.dump();
    if (cfg.system.type == "csv") {
      const fs::path base(base_dir);
      cfg.system.train_path = (base / sys.at("train_path").get<std::string>()).string();
      cfg.system.test_path = (base / sys.at("test_path").get<std::string>()).string();
      cfg.system.n_states = sys.at("n_states").get<int>();
      cfg.system.n_inputs = sys.value("n_inputs", 0);
    }
    cfg.system.test_n_steps = sys.value("test_n_steps", 0);
    cfg.system.test_x0_perturb = sys.value("test_x0_perturb", 0.1);

    if (j.contains("dictionary"))
      cfg.dictionary = dict::dictionary_config_from_json(j.at("dictionary").dump());
    if (j.contains("priors")) cfg.priors = vb::priors_from_json(j.at("priors").dump());

    if (j.contains("methods")) {
      cfg.methods.clear();
      for (const auto& s : j.at("methods"))
        cfg.methods.push_back(koopman::method_from_string(s.get<std::string>()));
    }

    cfg.snr_grid.clear();
    if (j.contains("snr_grid")) {
      for (const auto& v : j.at("snr_grid")) {
        if (v.is_string()) {
          const std::string s = v.get<std::string>();
          if (s == "inf" || s == "Inf" || s == "INF")
            cfg.snr_grid.push_back(std::numeric_limits<double>::infinity());
          else
            throw ConfigError("snr_grid entries must be numbers or \"inf\"");
        } else {
          cfg.snr_grid.push_back(v.get<double>());
        }
      }
    } else {
      cfg.snr_grid.push_back(std::numeric_limits<double>::infinity());
    }

    cfg.mc_runs = j.value("mc_runs", 1);
    cfg.epsilon_grid = j.value("epsilon_grid", std::vector<double>{0.1});
    cfg.epsilon_eval = j.value("epsilon_eval", 0.0);
    cfg.stls_lambda = j.value("stls_lambda", 0.05);
    cfg.stls_max_rounds = j.value("stls_max_rounds", 10);
    if (j.contains("sbl")) {
      cfg.sbl_max_iter = j.at("sbl").value("max_iter", cfg.sbl_max_iter);
      cfg.sbl_tol = j.at("sbl").value("tol", cfg.sbl_tol);
    }
    cfg.seed = j.value("seed", 0ull);
    cfg.threads = j.value("threads", 1);
    cfg.save_models = j.value("save_models", true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad experiment config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig config_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), fs::path(path).parent_path().string());
}

namespace {

constexpr std::uint64_t kSaltTrainSim = 0x7261;
constexpr std::uint64_t kSaltTestSim = 0x7465;
constexpr std::uint64_t kSaltNoiseTrain = 0x6e74;
constexpr std::uint64_t kSaltNoiseTest = 0x6e65;
constexpr std::uint64_t kSaltKmeans = 0x6b6d;

data::Dataset simulate_test_trajectory(const ExperimentConfig& cfg,
                                       std::uint64_t run_seed) {
  json sys = json::parse(cfg.system.json_text);
  if (cfg.system.test_n_steps > 0) sys["n_steps"] = cfg.system.test_n_steps;

  // seeded shift of the initial state so the held-out trajectory is unseen
  std::vector<double> x0 = sys.value("x0", std::vector<double>{1.0, 1.0, 1.0});
  std::mt19937_64 rng(derive_seed(run_seed, kSaltTestSim));
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& v : x0) v += cfg.system.test_x0_perturb * gauss(rng);
  sys["x0"] = x0;

  return systems::simulate_from_json(sys.dump(), derive_seed(run_seed, kSaltTestSim));
}

struct RunOutput {
  // values[method][reduced][split] -> one NMSE per output state
  std::vector<std::array<std::array<std::vector<double>, 2>, 2>> values;
  std::vector<int> sizes;  // per epsilon_grid entry
  std::vector<std::pair<koopman::Method, bool>> model_keys;
  std::vector<koopman::KoopmanModel> models;
};

RunOutput execute_run(const ExperimentConfig& cfg, const data::Dataset& train_raw,
                      double snr_db, size_t snr_idx, int run, bool capture_models) {
  const std::uint64_t run_seed = cfg.seed + static_cast<std::uint64_t>(run);

  data::Dataset test_raw;
  if (cfg.system.type == "csv") {
    test_raw = data::load_csv(cfg.system.test_path, cfg.system.n_states,
                              cfg.system.n_inputs);
  } else {
    test_raw = simulate_test_trajectory(cfg, run_seed);
  }

  const data::Dataset train = data::with_noisy_states(
      train_raw, snr_db, derive_seed(run_seed, kSaltNoiseTrain + snr_idx));
  const data::Dataset test = data::with_noisy_states(
      test_raw, snr_db, derive_seed(run_seed, kSaltNoiseTest + snr_idx));

  const dict::Dictionary full_dict = dict::build_dictionary(
      train, cfg.dictionary, derive_seed(run_seed, kSaltKmeans + snr_idx));

  FitOptions opts;
  opts.priors = cfg.priors;
  opts.stls_lambda = cfg.stls_lambda;
  opts.stls_max_rounds = cfg.stls_max_rounds;
  opts.sbl_max_iter = cfg.sbl_max_iter;
  opts.sbl_tol = cfg.sbl_tol;
  opts.vb_threads = cfg.threads;

  const data::Dataset embedded = dict::delay_embed(train, full_dict.embed_delays);
  const data::SnapshotPairs pairs = data::snapshot_pairs(embedded);
  const dict::DesignMatrix dm_full = dict::design_matrix(full_dict, pairs);

  // the spike-and-slab fit always runs: its inclusion matrix drives the
  // reduction even when method IV is not being scored
  const vb::FitResult fr = vb::fit_all(dm_full.Phi, dm_full.targets, cfg.priors,
                                       cfg.threads);

  RunOutput out;
  out.sizes.reserve(cfg.epsilon_grid.size());
  graphred::ReducedDictionary reduced;
  bool have_eval_reduction = false;
  const double eps_eval = cfg.eval_epsilon();
  for (double eps : cfg.epsilon_grid) {
    graphred::ReducedDictionary red =
        graphred::reduce_dictionary(full_dict, fr.Gamma, eps);
    out.sizes.push_back(red.dictionary.size());
    if (eps == eps_eval) {
      reduced = std::move(red);
      have_eval_reduction = true;
    }
  }
  if (!have_eval_reduction)
    reduced = graphred::reduce_dictionary(full_dict, fr.Gamma, eps_eval);

  const dict::DesignMatrix dm_red = dict::design_matrix(reduced.dictionary, pairs);

  out.values.resize(cfg.methods.size());
  for (size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const koopman::Method method = cfg.methods[mi];
    for (int red = 0; red < 2; ++red) {
      const dict::Dictionary& dct = red ? reduced.dictionary : full_dict;
      const dict::DesignMatrix& dm = red ? dm_red : dm_full;
      koopman::KoopmanModel model =
          (!red && method == koopman::Method::IV)
              ? koopman::make_model(dct, fr.K_F_hat, method, fr.rho_hats, fr.Gamma)
              : fit_from_design(method, dct, dm, opts);
      for (int split = 0; split < 2; ++split) {
        const auto scores = evaluate_one_step(model, split ? test : train);
        auto& slot = out.values[mi][red][split];
        slot.reserve(scores.size());
        for (const auto& [label, value] : scores) slot.push_back(value);
      }
      if (capture_models) {
        out.model_keys.emplace_back(method, red != 0);
        out.models.push_back(std::move(model));
      }
    }
  }
  return out;
}

std::vector<std::string> output_state_labels(const ExperimentConfig& cfg,
                                             const data::Dataset& train_raw) {
  // labels follow the raw state columns; the dictionary outputs are exactly
  // the un-delayed identity observables in column order
  std::vector<std::string> labels;
  for (Eigen::Index j = 0; j < train_raw.n_states(); ++j) {
    labels.push_back(j < static_cast<Eigen::Index>(train_raw.column_names.size())
                         ? train_raw.column_names[j]
                         : "s" + std::to_string(j));
  }
  (void)cfg;
  return labels;
}

}  // namespace

SweepResult run_sweep(const ExperimentConfig& cfg) {
  cfg.validate();

  data::Dataset train_raw;
  if (cfg.system.type == "csv") {
    train_raw =
        data::load_csv(cfg.system.train_path, cfg.system.n_states, cfg.system.n_inputs);
  } else {
    train_raw = systems::simulate_from_json(cfg.system.json_text,
                                            derive_seed(cfg.seed, kSaltTrainSim));
  }
  const std::vector<std::string> states = output_state_labels(cfg, train_raw);

  SweepResult result;
  bool models_captured = false;

  // cells indexed [method][reduced][split][state] per snr, filled run by run
  for (size_t snr_idx = 0; snr_idx < cfg.snr_grid.size(); ++snr_idx) {
    const double snr = cfg.snr_grid[snr_idx];

    std::vector<NmseCell> cells;
    for (size_t mi = 0; mi < cfg.methods.size(); ++mi)
      for (int red = 0; red < 2; ++red)
        for (int split = 0; split < 2; ++split)
          for (const auto& st : states) {
            NmseCell cell;
            cell.method = cfg.methods[mi];
            cell.snr_db = snr;
            cell.reduced = red != 0;
            cell.test_split = split != 0;
            cell.state = st;
            cells.push_back(std::move(cell));
          }
    auto cell_at = [&](size_t mi, int red, int split, size_t st) -> NmseCell& {
      return cells[((mi * 2 + red) * 2 + split) * states.size() + st];
    };

    std::vector<SizeRow> snr_sizes;
    int failures = 0;
    for (int run = 0; run < cfg.mc_runs; ++run) {
      const bool capture = cfg.save_models && snr_idx == 0 && !models_captured;
      try {
        RunOutput out = execute_run(cfg, train_raw, snr, snr_idx, run, capture);
        for (size_t mi = 0; mi < cfg.methods.size(); ++mi)
          for (int red = 0; red < 2; ++red)
            for (int split = 0; split < 2; ++split)
              for (size_t st = 0; st < states.size(); ++st)
                cell_at(mi, red, split, st).per_run.push_back(out.values[mi][red][split][st]);
        for (size_t ei = 0; ei < cfg.epsilon_grid.size(); ++ei)
          snr_sizes.push_back({snr, cfg.epsilon_grid[ei], run, out.sizes[ei]});
        if (capture && !out.models.empty()) {
          result.model_keys = std::move(out.model_keys);
          result.models = std::move(out.models);
          models_captured = true;
        }
      } catch (const Error&) {
        ++failures;
      }
    }

    for (auto& cell : cells) {
      cell.n_ok = static_cast<int>(cell.per_run.size());
      cell.n_fail = failures;
      if (cell.n_ok > 0) {
        double sum = 0;
        for (double v : cell.per_run) sum += v;
        cell.mean = sum / cell.n_ok;
        if (cell.n_ok >= 2) {
          double ss = 0;
          for (double v : cell.per_run) ss += (v - cell.mean) * (v - cell.mean);
          const double sd = std::sqrt(ss / (cell.n_ok - 1));
          cell.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(cell.n_ok));
        }
      }
      result.nmse.push_back(std::move(cell));
    }
    // rows ordered by (snr, epsilon, run)
    std::stable_sort(snr_sizes.begin(), snr_sizes.end(),
                     [](const SizeRow& a, const SizeRow& b) {
                       if (a.epsilon != b.epsilon) return a.epsilon < b.epsilon;
                       return a.run < b.run;
                     });
    result.sizes.insert(result.sizes.end(), snr_sizes.begin(), snr_sizes.end());
    result.total_failures += failures;
  }
  return result;
}

std::string nmse_csv(const SweepResult& result) {
  std::string out = "method,snr_db,dict,split,state,mean_nmse,ci95,n_ok,n_fail\n";
  for (const auto& cell : result.nmse) {
    out += koopman::to_string(cell.method);
    out += ',';
    out += format_double(cell.snr_db);
    out += ',';
    out += cell.reduced ? "reduced" : "full";
    out += ',';
    out += cell.test_split ? "test" : "train";
    out += ',';
    out += cell.state;
    out += ',';
    out += cell.n_ok > 0 ? format_double(cell.mean) : "nan";
    out += ',';
    out += cell.n_ok > 0 ? format_double(cell.ci95) : "nan";
    out += ',';
    out += std::to_string(cell.n_ok);
    out += ',';
    out += std::to_string(cell.n_fail);
    out += '\n';
  }
  return out;
}

std::string sizes_csv(const SweepResult& result) {
  std::string out = "snr_db,epsilon,run,reduced_size\n";
  for (const auto& row : result.sizes) {
    out += format_double(row.snr_db);
    out += ',';
    out += format_double(row.epsilon);
    out += ',';
    out += std::to_string(row.run);
    out += ',';
    out += std::to_string(row.size);
    out += '\n';
  }
  return out;
}

void write_sweep_outputs(const SweepResult& result, const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + out_dir + "'");

  auto write_file = [](const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw IoError("write to '" + path.string() + "' failed");
  };

  const fs::path base(out_dir);
  write_file(base / "nmse.csv", nmse_csv(result));
  write_file(base / "sizes.csv", sizes_csv(result));

  if (!result.models.empty()) {
    fs::create_directories(base / "models", ec);
    if (ec) throw IoError("cannot create models directory");
    for (size_t i = 0; i < result.models.size(); ++i) {
      const auto& [method, reduced] = result.model_keys[i];
      const std::string name = "model_" + koopman::to_string(method) +
                               (reduced ? "_reduced" : "_full") + ".json";
      write_file(base / "models" / name, koopman::to_json(result.models[i]));
    }
  }
}

std::string heatmap_csv(const koopman::KoopmanModel& model) {
  const auto labels = model.dictionary.labels();
  const int L = model.dictionary.size();
  std::string out = "row,col,row_label,col_label,abs_value,is_exact_zero\n";
  for (Eigen::Index r = 0; r < model.K_F_hat.rows(); ++r) {
    for (Eigen::Index c = 0; c < model.K_F_hat.cols(); ++c) {
      const double v = model.K_F_hat(r, c);
      out += std::to_string(r);
      out += ',';
      out += std::to_string(c);
      out += ',';
      out += labels[r];
      out += ',';
      out += labels[c];
      out += ',';
      out += format_double(std::abs(v));
      out += ',';
      out += v == 0.0 ? '1' : '0';
      out += '\n';
    }
  }
  (void)L;
  return out;
}

std::string heatmap_export(const SweepResult& result, koopman::Method method,
                           bool reduced) {
  for (size_t i = 0; i < result.model_keys.size(); ++i) {
    if (result.model_keys[i].first == method && result.model_keys[i].second == reduced)
      return heatmap_csv(result.models[i]);
  }
  throw ConfigError("no stored model for method " + koopman::to_string(method) +
                    (reduced ? " (reduced)" : " (full)"));
}

}  // namespace koopred::harness
