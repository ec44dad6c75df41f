// koopred command line front end. Talks to the shared library exclusively
// through the C API in koopred.h.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "koopred.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

int exit_code(kr_status st) {
  if (st == KR_OK) return kExitOk;
  if (st == KR_ERR_USAGE) return kExitUsage;
  return kExitData;
}

int fail(kr_status st) {
  std::cerr << "error: " << kr_last_error() << "\n";
  return exit_code(st);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CLI::ValidationError("file", "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
  return static_cast<bool>(out);
}

struct DatasetHandle {
  kr_dataset* ptr = nullptr;
  ~DatasetHandle() { kr_dataset_free(ptr); }
};

struct DictionaryHandle {
  kr_dictionary* ptr = nullptr;
  ~DictionaryHandle() { kr_dictionary_free(ptr); }
};

struct ModelHandle {
  kr_model* ptr = nullptr;
  ~ModelHandle() { kr_model_free(ptr); }
};

struct StringHandle {
  char* ptr = nullptr;
  ~StringHandle() { kr_string_free(ptr); }
};

// Loads a dataset whose shape is dictated by a dictionary: the raw state
// count is the embedded dimension divided by the number of delay taps.
int load_for_dictionary(const kr_dictionary* dict, const std::string& data_path,
                        DatasetHandle& ds) {
  const int taps = kr_dictionary_embed_delays(dict) + 1;
  const int n_states = kr_dictionary_state_dim(dict) / taps;
  const int n_inputs = kr_dictionary_n_inputs(dict);
  if (auto st = kr_dataset_load_csv(data_path.c_str(), n_states, n_inputs, &ds.ptr))
    return fail(st);
  return kExitOk;
}

int cmd_simulate(const std::string& config, const std::string& out, std::uint64_t seed) {
  DatasetHandle ds;
  if (auto st = kr_dataset_simulate(read_file(config).c_str(), seed, &ds.ptr))
    return fail(st);
  if (auto st = kr_dataset_save_csv(ds.ptr, out.c_str())) return fail(st);
  std::cout << "wrote " << out << " (" << kr_dataset_rows(ds.ptr) << " rows)\n";
  return kExitOk;
}

int cmd_featurize(const std::string& data, int n_states, int n_inputs,
                  const std::string& config, std::uint64_t seed,
                  const std::string& out_dir, bool with_design) {
  DatasetHandle ds;
  if (auto st = kr_dataset_load_csv(data.c_str(), n_states, n_inputs, &ds.ptr))
    return fail(st);
  DictionaryHandle dict;
  if (auto st =
          kr_dictionary_build(ds.ptr, read_file(config).c_str(), seed, &dict.ptr))
    return fail(st);
  StringHandle js;
  if (auto st = kr_dictionary_to_json(dict.ptr, &js.ptr)) return fail(st);

  std::filesystem::create_directories(out_dir);
  const auto dict_path = (std::filesystem::path(out_dir) / "dictionary.json").string();
  if (!write_file(dict_path, js.ptr)) {
    std::cerr << "error: cannot write " << dict_path << "\n";
    return kExitData;
  }
  if (with_design) {
    const auto design_path = (std::filesystem::path(out_dir) / "design.csv").string();
    if (auto st = kr_design_matrix_csv(ds.ptr, dict.ptr, design_path.c_str()))
      return fail(st);
  }
  std::cout << "dictionary with " << kr_dictionary_size(dict.ptr)
            << " observables -> " << dict_path << "\n";
  return kExitOk;
}

int cmd_fit(const std::string& data, const std::string& dict_path,
            const std::string& method, const std::string& options_path,
            const std::string& out) {
  DictionaryHandle dict;
  if (auto st = kr_dictionary_from_json(read_file(dict_path).c_str(), &dict.ptr))
    return fail(st);
  DatasetHandle ds;
  if (int rc = load_for_dictionary(dict.ptr, data, ds)) return rc;

  const std::string options = options_path.empty() ? "" : read_file(options_path);
  ModelHandle model;
  if (auto st = kr_fit(ds.ptr, dict.ptr, method.c_str(),
                       options.empty() ? nullptr : options.c_str(), &model.ptr))
    return fail(st);
  StringHandle js;
  if (auto st = kr_model_to_json(model.ptr, &js.ptr)) return fail(st);
  if (!write_file(out, js.ptr)) {
    std::cerr << "error: cannot write " << out << "\n";
    return kExitData;
  }
  std::cout << "fitted method " << method << " -> " << out << "\n";
  return kExitOk;
}

int cmd_reduce(const std::string& model_path, double epsilon,
               const std::string& out_dir) {
  ModelHandle model;
  if (auto st = kr_model_from_json(read_file(model_path).c_str(), &model.ptr))
    return fail(st);
  DictionaryHandle reduced;
  StringHandle map_json;
  if (auto st = kr_model_reduce(model.ptr, epsilon, &reduced.ptr, &map_json.ptr))
    return fail(st);
  StringHandle dict_json;
  if (auto st = kr_dictionary_to_json(reduced.ptr, &dict_json.ptr)) return fail(st);

  std::filesystem::create_directories(out_dir);
  const std::filesystem::path base(out_dir);
  if (!write_file((base / "dictionary.json").string(), dict_json.ptr) ||
      !write_file((base / "index_map.json").string(), map_json.ptr)) {
    std::cerr << "error: cannot write outputs under " << out_dir << "\n";
    return kExitData;
  }
  std::cout << "reduced dictionary: " << kr_dictionary_size(reduced.ptr)
            << " observables -> " << out_dir << "\n";
  return kExitOk;
}

int cmd_evaluate(const std::string& model_path, const std::string& data,
                 const std::string& out) {
  ModelHandle model;
  if (auto st = kr_model_from_json(read_file(model_path).c_str(), &model.ptr))
    return fail(st);
  DictionaryHandle dict;
  if (auto st = kr_model_dictionary(model.ptr, &dict.ptr)) return fail(st);
  DatasetHandle ds;
  if (int rc = load_for_dictionary(dict.ptr, data, ds)) return rc;

  StringHandle csv;
  if (auto st = kr_model_evaluate(model.ptr, ds.ptr, &csv.ptr)) return fail(st);
  std::cout << csv.ptr;
  if (!out.empty() && !write_file(out, csv.ptr)) {
    std::cerr << "error: cannot write " << out << "\n";
    return kExitData;
  }
  return kExitOk;
}

int cmd_sweep(const std::string& config, const std::string& out_dir) {
  if (auto st = kr_run_sweep(config.c_str(), out_dir.c_str())) return fail(st);
  std::cout << "sweep outputs written under " << out_dir << "\n";
  return kExitOk;
}

int cmd_export_heatmap(const std::string& model_path, const std::string& out) {
  ModelHandle model;
  if (auto st = kr_model_from_json(read_file(model_path).c_str(), &model.ptr))
    return fail(st);
  if (auto st = kr_model_heatmap_csv(model.ptr, out.c_str())) return fail(st);
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse Koopman identification with graph-based dictionary reduction"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kr_version()));

  std::string config, data, out, out_dir, dict_path, model_path, method = "IV";
  std::string options_path;
  std::uint64_t seed = 0;
  int n_states = 0, n_inputs = 0;
  double epsilon = 0.1;
  bool with_design = false;

  auto* simulate = app.add_subcommand("simulate", "Integrate a configured system to CSV");
  simulate->add_option("--config", config, "system JSON config")->required();
  simulate->add_option("--out", out, "output CSV path")->required();
  simulate->add_option("--seed", seed, "RNG seed");

  auto* featurize =
      app.add_subcommand("featurize", "Build an observable dictionary from data");
  featurize->add_option("--data", data, "training CSV")->required();
  featurize->add_option("--n-states", n_states, "state column count")->required();
  featurize->add_option("--n-inputs", n_inputs, "input column count");
  featurize->add_option("--config", config, "dictionary JSON config")->required();
  featurize->add_option("--seed", seed, "RNG seed");
  featurize->add_option("--out", out_dir, "output directory")->required();
  featurize->add_flag("--design", with_design, "also write the design matrix CSV");

  auto* fit = app.add_subcommand("fit", "Fit a Koopman model with one method");
  fit->add_option("--data", data, "training CSV")->required();
  fit->add_option("--dict", dict_path, "dictionary JSON")->required();
  fit->add_option("--method", method, "I, II, III or IV");
  fit->add_option("--options", options_path, "fit options JSON");
  fit->add_option("--out", out, "output model JSON")->required();

  auto* reduce = app.add_subcommand("reduce", "Prune the dictionary via graph search");
  reduce->add_option("--model", model_path, "model JSON (method IV)")->required();
  reduce->add_option("--epsilon", epsilon, "inclusion threshold in (0,1)")->required();
  reduce->add_option("--out", out_dir, "output directory")->required();

  auto* evaluate = app.add_subcommand("evaluate", "One-step NMSE of a model on data");
  evaluate->add_option("--model", model_path, "model JSON")->required();
  evaluate->add_option("--data", data, "evaluation CSV")->required();
  evaluate->add_option("--out", out, "optional output CSV");

  auto* sweep = app.add_subcommand("sweep", "Monte Carlo SNR sweep experiment");
  sweep->add_option("--config", config, "experiment JSON config")->required();
  sweep->add_option("--out", out_dir, "output directory")->required();

  auto* heatmap = app.add_subcommand("export-heatmap", "Export |K_F| magnitudes as CSV");
  heatmap->add_option("--model", model_path, "model JSON")->required();
  heatmap->add_option("--out", out, "output CSV")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (simulate->parsed()) return cmd_simulate(config, out, seed);
    if (featurize->parsed())
      return cmd_featurize(data, n_states, n_inputs, config, seed, out_dir, with_design);
    if (fit->parsed()) return cmd_fit(data, dict_path, method, options_path, out);
    if (reduce->parsed()) return cmd_reduce(model_path, epsilon, out_dir);
    if (evaluate->parsed()) return cmd_evaluate(model_path, data, out);
    if (sweep->parsed()) return cmd_sweep(config, out_dir);
    if (heatmap->parsed()) return cmd_export_heatmap(model_path, out);
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
