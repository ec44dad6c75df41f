#include "koopred.h"

#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include <json.hpp>

#include "koopred/dataset.hpp"
#include "koopred/dictionary.hpp"
#include "koopred/errors.hpp"
#include "koopred/graphred.hpp"
#include "koopred/harness.hpp"
#include "koopred/koopman.hpp"
#include "koopred/systems.hpp"
#include "koopred/vb.hpp"

using namespace koopred;

struct kr_dataset {
  data::Dataset impl;
};

struct kr_dictionary {
  dict::Dictionary impl;
};

struct kr_model {
  koopman::KoopmanModel impl;
};

namespace {

thread_local std::string g_last_error;

kr_status status_from_kind(Error::Kind kind) {
  switch (kind) {
    case Error::Kind::config: return KR_ERR_USAGE;
    case Error::Kind::data: return KR_ERR_DATA;
    case Error::Kind::numeric: return KR_ERR_NUMERIC;
    case Error::Kind::io: return KR_ERR_IO;
  }
  return KR_ERR_USAGE;
}

// Runs the body, translating exceptions into status codes + last-error text.
template <typename Fn>
kr_status guarded(Fn&& fn) {
  try {
    fn();
    return KR_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_from_kind(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return KR_ERR_NUMERIC;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return KR_ERR_NUMERIC;
  }
}

kr_status require(bool ok, const char* msg) {
  if (ok) return KR_OK;
  g_last_error = msg;
  return KR_ERR_USAGE;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

harness::FitOptions fit_options_from_json(const char* options_json) {
  harness::FitOptions opts;
  if (options_json == nullptr || *options_json == '\0') return opts;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(options_json);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad options JSON: ") + e.what());
  }
  if (j.contains("priors")) opts.priors = vb::priors_from_json(j.at("priors").dump());
  opts.stls_lambda = j.value("stls_lambda", opts.stls_lambda);
  opts.stls_max_rounds = j.value("stls_max_rounds", opts.stls_max_rounds);
  if (j.contains("sbl")) {
    opts.sbl_max_iter = j.at("sbl").value("max_iter", opts.sbl_max_iter);
    opts.sbl_tol = j.at("sbl").value("tol", opts.sbl_tol);
  }
  opts.vb_threads = j.value("threads", opts.vb_threads);
  return opts;
}

}  // namespace

extern "C" {

const char* kr_version(void) { return "0.1.0"; }

const char* kr_last_error(void) { return g_last_error.c_str(); }

void kr_string_free(char* s) { delete[] s; }

kr_status kr_dataset_load_csv(const char* path, int n_states, int n_inputs,
                              kr_dataset** out) {
  if (auto st = require(path && out, "path and out must be non-null")) return st;
  return guarded([&] { *out = new kr_dataset{data::load_csv(path, n_states, n_inputs)}; });
}

kr_status kr_dataset_save_csv(const kr_dataset* d, const char* path) {
  if (auto st = require(d && path, "dataset and path must be non-null")) return st;
  return guarded([&] { data::save_csv(d->impl, path); });
}

kr_status kr_dataset_simulate(const char* system_json, uint64_t seed, kr_dataset** out) {
  if (auto st = require(system_json && out, "system_json and out must be non-null"))
    return st;
  return guarded(
      [&] { *out = new kr_dataset{systems::simulate_from_json(system_json, seed)}; });
}

kr_status kr_dataset_add_noise(const kr_dataset* d, double snr_db, uint64_t seed,
                               kr_dataset** out) {
  if (auto st = require(d && out, "dataset and out must be non-null")) return st;
  return guarded(
      [&] { *out = new kr_dataset{data::with_noisy_states(d->impl, snr_db, seed)}; });
}

kr_status kr_dataset_delay_embed(const kr_dataset* d, int delays, kr_dataset** out) {
  if (auto st = require(d && out, "dataset and out must be non-null")) return st;
  return guarded([&] { *out = new kr_dataset{dict::delay_embed(d->impl, delays)}; });
}

int kr_dataset_rows(const kr_dataset* d) {
  return d ? static_cast<int>(d->impl.states.rows()) : 0;
}

int kr_dataset_n_states(const kr_dataset* d) {
  return d ? static_cast<int>(d->impl.n_states()) : 0;
}

int kr_dataset_n_inputs(const kr_dataset* d) {
  return d ? static_cast<int>(d->impl.n_inputs()) : 0;
}

double kr_dataset_dt(const kr_dataset* d) { return d ? d->impl.dt : 0.0; }

void kr_dataset_free(kr_dataset* d) { delete d; }

kr_status kr_dictionary_build(const kr_dataset* train, const char* config_json,
                              uint64_t seed, kr_dictionary** out) {
  if (auto st = require(train && config_json && out,
                        "train, config_json and out must be non-null"))
    return st;
  return guarded([&] {
    const auto cfg = dict::dictionary_config_from_json(config_json);
    *out = new kr_dictionary{dict::build_dictionary(train->impl, cfg, seed)};
  });
}

kr_status kr_dictionary_from_json(const char* json_text, kr_dictionary** out) {
  if (auto st = require(json_text && out, "json_text and out must be non-null"))
    return st;
  return guarded(
      [&] { *out = new kr_dictionary{dict::dictionary_from_json(json_text)}; });
}

kr_status kr_dictionary_to_json(const kr_dictionary* dict, char** out_json) {
  if (auto st = require(dict && out_json, "dict and out_json must be non-null"))
    return st;
  return guarded([&] { *out_json = dup_string(dict::to_json(dict->impl)); });
}

int kr_dictionary_size(const kr_dictionary* dict) { return dict ? dict->impl.size() : 0; }

int kr_dictionary_n_inputs(const kr_dictionary* dict) {
  return dict ? dict->impl.n_inputs : 0;
}

int kr_dictionary_state_dim(const kr_dictionary* dict) {
  return dict ? dict->impl.state_dim : 0;
}

int kr_dictionary_embed_delays(const kr_dictionary* dict) {
  return dict ? dict->impl.embed_delays : 0;
}

void kr_dictionary_free(kr_dictionary* dict) { delete dict; }

kr_status kr_design_matrix_csv(const kr_dataset* d, const kr_dictionary* dict,
                               const char* out_path) {
  if (auto st = require(d && dict && out_path, "all arguments must be non-null"))
    return st;
  return guarded([&] {
    const data::Dataset embedded = dict::delay_embed(d->impl, dict->impl.embed_delays);
    const auto dm = dict::design_matrix(dict->impl, data::snapshot_pairs(embedded));
    std::ofstream out(out_path);
    if (!out) throw IoError(std::string("cannot open '") + out_path + "' for writing");
    const auto labels = dict->impl.labels();
    for (size_t k = 0; k < labels.size(); ++k) {
      if (k) out << ',';
      out << "phi_" << labels[k];
    }
    for (int j = 0; j < dict->impl.size(); ++j) out << ",t_" << labels[j];
    out << "\n";
    for (Eigen::Index i = 0; i < dm.Phi.rows(); ++i) {
      for (Eigen::Index k = 0; k < dm.Phi.cols(); ++k) {
        if (k) out << ',';
        out << dm.Phi(i, k);
      }
      for (Eigen::Index j = 0; j < dm.targets.cols(); ++j) out << ',' << dm.targets(i, j);
      out << "\n";
    }
    if (!out) throw IoError(std::string("write to '") + out_path + "' failed");
  });
}

kr_status kr_fit(const kr_dataset* train, const kr_dictionary* dict, const char* method,
                 const char* options_json, kr_model** out) {
  if (auto st = require(train && dict && method && out,
                        "train, dict, method and out must be non-null"))
    return st;
  return guarded([&] {
    const auto m = koopman::method_from_string(method);
    const auto opts = fit_options_from_json(options_json);
    *out = new kr_model{harness::fit_model(m, train->impl, dict->impl, opts)};
  });
}

kr_status kr_model_to_json(const kr_model* m, char** out_json) {
  if (auto st = require(m && out_json, "model and out_json must be non-null")) return st;
  return guarded([&] { *out_json = dup_string(koopman::to_json(m->impl)); });
}

kr_status kr_model_from_json(const char* json_text, kr_model** out) {
  if (auto st = require(json_text && out, "json_text and out must be non-null"))
    return st;
  return guarded([&] { *out = new kr_model{koopman::model_from_json(json_text)}; });
}

kr_status kr_model_dictionary(const kr_model* m, kr_dictionary** out) {
  if (auto st = require(m && out, "model and out must be non-null")) return st;
  return guarded([&] { *out = new kr_dictionary{m->impl.dictionary}; });
}

kr_status kr_model_reduce(const kr_model* m, double epsilon, kr_dictionary** out_dict,
                          char** out_index_map_json) {
  if (auto st = require(m && out_dict, "model and out_dict must be non-null")) return st;
  return guarded([&] {
    if (m->impl.Gamma.size() == 0)
      throw ConfigError("model carries no inclusion matrix; fit with method IV");
    auto red = graphred::reduce_dictionary(m->impl.dictionary, m->impl.Gamma, epsilon);
    *out_dict = new kr_dictionary{std::move(red.dictionary)};
    if (out_index_map_json) {
      nlohmann::json j;
      j["index_map"] = red.index_map;
      j["kept"] = red.kept;
      *out_index_map_json = dup_string(j.dump(2));
    }
  });
}

kr_status kr_model_evaluate(const kr_model* m, const kr_dataset* data, char** out_csv) {
  if (auto st = require(m && data && out_csv, "all arguments must be non-null"))
    return st;
  return guarded([&] {
    const auto scores = harness::evaluate_one_step(m->impl, data->impl);
    std::string csv = "state,nmse\n";
    for (const auto& [state, value] : scores) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", value);
      csv += state + "," + buf + "\n";
    }
    *out_csv = dup_string(csv);
  });
}

kr_status kr_model_heatmap_csv(const kr_model* m, const char* out_path) {
  if (auto st = require(m && out_path, "model and out_path must be non-null")) return st;
  return guarded([&] {
    std::ofstream out(out_path);
    if (!out) throw IoError(std::string("cannot open '") + out_path + "' for writing");
    out << harness::heatmap_csv(m->impl);
    if (!out) throw IoError(std::string("write to '") + out_path + "' failed");
  });
}

void kr_model_free(kr_model* m) { delete m; }

kr_status kr_run_sweep(const char* config_path, const char* out_dir) {
  if (auto st = require(config_path && out_dir, "config_path and out_dir must be non-null"))
    return st;
  return guarded([&] {
    const auto cfg = harness::config_from_file(config_path);
    const auto result = harness::run_sweep(cfg);
    harness::write_sweep_outputs(result, out_dir);
  });
}

}  // extern "C"
