#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "koopred.h"

namespace {

const char* kLorenzJson =
    R"({"type":"lorenz","x0":[1,1,1],"dt":0.002,"n_steps":800})";
const char* kDictJson =
    R"({"gaussian":{"count":6,"exponent_coeffs":[0.002,0.02]}})";

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("dataset lifecycle across the C boundary") {
  kr_dataset* ds = nullptr;
  REQUIRE(kr_dataset_simulate(kLorenzJson, 1, &ds) == KR_OK);
  CHECK(kr_dataset_rows(ds) == 801);
  CHECK(kr_dataset_n_states(ds) == 3);
  CHECK(kr_dataset_n_inputs(ds) == 0);
  CHECK(kr_dataset_dt(ds) == 0.002);

  const auto csv = temp_path("kr_capi_data.csv");
  REQUIRE(kr_dataset_save_csv(ds, csv.c_str()) == KR_OK);

  kr_dataset* loaded = nullptr;
  REQUIRE(kr_dataset_load_csv(csv.c_str(), 3, 0, &loaded) == KR_OK);
  CHECK(kr_dataset_rows(loaded) == 801);

  kr_dataset* noisy = nullptr;
  REQUIRE(kr_dataset_add_noise(ds, 30.0, 7, &noisy) == KR_OK);
  CHECK(kr_dataset_rows(noisy) == 801);

  kr_dataset* embedded = nullptr;
  REQUIRE(kr_dataset_delay_embed(ds, 1, &embedded) == KR_OK);
  CHECK(kr_dataset_n_states(embedded) == 6);

  kr_dataset_free(embedded);
  kr_dataset_free(noisy);
  kr_dataset_free(loaded);
  kr_dataset_free(ds);
}

TEST_CASE("fit, reduce, evaluate and export through handles") {
  kr_dataset* ds = nullptr;
  REQUIRE(kr_dataset_simulate(kLorenzJson, 3, &ds) == KR_OK);

  kr_dictionary* dict = nullptr;
  REQUIRE(kr_dictionary_build(ds, kDictJson, 11, &dict) == KR_OK);
  CHECK(kr_dictionary_size(dict) == 9);
  CHECK(kr_dictionary_state_dim(dict) == 3);

  char* dict_json = nullptr;
  REQUIRE(kr_dictionary_to_json(dict, &dict_json) == KR_OK);
  kr_dictionary* dict2 = nullptr;
  REQUIRE(kr_dictionary_from_json(dict_json, &dict2) == KR_OK);
  CHECK(kr_dictionary_size(dict2) == 9);
  kr_string_free(dict_json);
  kr_dictionary_free(dict2);

  kr_model* model = nullptr;
  REQUIRE(kr_fit(ds, dict, "IV", R"({"priors":{"max_iter":200}})", &model) == KR_OK);

  char* model_json = nullptr;
  REQUIRE(kr_model_to_json(model, &model_json) == KR_OK);
  kr_model* restored = nullptr;
  REQUIRE(kr_model_from_json(model_json, &restored) == KR_OK);
  kr_string_free(model_json);

  kr_dictionary* reduced = nullptr;
  char* index_map = nullptr;
  REQUIRE(kr_model_reduce(restored, 0.1, &reduced, &index_map) == KR_OK);
  CHECK(kr_dictionary_size(reduced) >= 3);  // outputs always survive
  CHECK(kr_dictionary_size(reduced) <= 9);
  CHECK(std::strstr(index_map, "index_map") != nullptr);
  kr_string_free(index_map);

  char* scores = nullptr;
  REQUIRE(kr_model_evaluate(model, ds, &scores) == KR_OK);
  CHECK(std::strncmp(scores, "state,nmse", 10) == 0);
  kr_string_free(scores);

  const auto heat = temp_path("kr_capi_heat.csv");
  REQUIRE(kr_model_heatmap_csv(model, heat.c_str()) == KR_OK);
  CHECK(read_file(heat).rfind("row,col,", 0) == 0);

  kr_dictionary_free(reduced);
  kr_model_free(restored);
  kr_model_free(model);
  kr_dictionary_free(dict);
  kr_dataset_free(ds);
}

TEST_CASE("errors surface as status codes with messages") {
  kr_dataset* ds = nullptr;
  CHECK(kr_dataset_load_csv("/nonexistent/file.csv", 1, 0, &ds) == KR_ERR_IO);
  CHECK(std::strlen(kr_last_error()) > 0);

  CHECK(kr_dataset_simulate("{not json", 0, &ds) == KR_ERR_USAGE);
  CHECK(kr_dataset_load_csv(nullptr, 1, 0, &ds) == KR_ERR_USAGE);

  kr_model* model = nullptr;
  CHECK(kr_model_from_json("{}", &model) == KR_ERR_USAGE);

  // reducing a model without an inclusion matrix is a usage error
  kr_dataset* data = nullptr;
  REQUIRE(kr_dataset_simulate(kLorenzJson, 5, &data) == KR_OK);
  kr_dictionary* dict = nullptr;
  REQUIRE(kr_dictionary_build(data, kDictJson, 5, &dict) == KR_OK);
  kr_model* pinv_model = nullptr;
  REQUIRE(kr_fit(data, dict, "I", nullptr, &pinv_model) == KR_OK);
  kr_dictionary* reduced = nullptr;
  CHECK(kr_model_reduce(pinv_model, 0.1, &reduced, nullptr) == KR_ERR_USAGE);
  kr_model_free(pinv_model);
  kr_dictionary_free(dict);
  kr_dataset_free(data);
}

TEST_CASE("the sweep entry point writes its outputs") {
  const auto dir = temp_path("kr_capi_sweep");
  std::filesystem::remove_all(dir);

  // a small lorenz sweep config
  const auto cfg_path = temp_path("kr_capi_sweep.json");
  std::ofstream cfg(cfg_path);
  cfg << R"({
    "system": {"type":"lorenz","x0":[1,1,1],"dt":0.002,"n_steps":400,
               "test_n_steps":200,"test_x0_perturb":0.05},
    "dictionary": {"gaussian":{"count":5,"exponent_coeffs":[0.002]}},
    "priors": {"max_iter":150},
    "methods": ["I","IV"],
    "snr_grid": [40],
    "mc_runs": 2,
    "epsilon_grid": [0.1],
    "seed": 3
  })";
  cfg.close();

  REQUIRE(kr_run_sweep(cfg_path.c_str(), dir.c_str()) == KR_OK);
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "nmse.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(dir) / "sizes.csv"));
  const auto nmse = read_file((std::filesystem::path(dir) / "nmse.csv").string());
  CHECK(nmse.rfind("method,snr_db,", 0) == 0);
  CHECK(kr_run_sweep("/nonexistent.json", dir.c_str()) == KR_ERR_IO);
}

TEST_CASE("version string is present") {
  CHECK(std::strlen(kr_version()) > 0);
}
