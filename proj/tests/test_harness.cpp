#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "koopred/errors.hpp"
#include "koopred/harness.hpp"
#include "koopred/systems.hpp"

using namespace koopred;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path.string();
}

// scalar linear system x[k+1] = a x[k], written to CSV for the csv source
std::string scalar_csv(const std::string& name, double a, int rows) {
  std::string content = "# dt=1\nx\n";
  double x = 1.0;
  for (int i = 0; i < rows; ++i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g\n", x);
    content += buf;
    x *= a;
  }
  return write_temp(name, content);
}

harness::ExperimentConfig scalar_config() {
  const auto train = scalar_csv("kr_h_train.csv", 0.9, 40);
  const auto test = scalar_csv("kr_h_test.csv", 0.9, 30);
  std::ostringstream cfg;
  cfg << R"({
    "system": {"type": "csv", "train_path": ")" << std::filesystem::path(train).filename().string()
      << R"(", "test_path": ")" << std::filesystem::path(test).filename().string() << R"(", "n_states": 1},
    "methods": ["I"],
    "snr_grid": ["inf"],
    "mc_runs": 1,
    "epsilon_grid": [0.5]
  })";
  return harness::config_from_json(cfg.str(),
                                   std::filesystem::temp_directory_path().string());
}

const harness::NmseCell& find_cell(const harness::SweepResult& r, koopman::Method m,
                                   double snr, bool reduced, bool test_split,
                                   const std::string& state) {
  for (const auto& cell : r.nmse) {
    if (cell.method == m && cell.snr_db == snr && cell.reduced == reduced &&
        cell.test_split == test_split && cell.state == state)
      return cell;
  }
  throw std::runtime_error("cell not found");
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("a noiseless scalar linear system is fit exactly") {
  const auto result = harness::run_sweep(scalar_config());
  const double inf = std::numeric_limits<double>::infinity();
  const auto& train_cell = find_cell(result, koopman::Method::I, inf, false, false, "x");
  CHECK(train_cell.n_ok == 1);
  CHECK(train_cell.n_fail == 0);
  CHECK(train_cell.ci95 == 0.0);  // single run
  CHECK(train_cell.mean < 1e-10);
  const auto& test_cell = find_cell(result, koopman::Method::I, inf, false, true, "x");
  CHECK(test_cell.mean < 1e-10);
}

TEST_CASE("sizes table has one row per (snr, epsilon, run)") {
  auto cfg = scalar_config();
  cfg.epsilon_grid = {0.01, 0.1, 0.25};
  cfg.mc_runs = 2;
  cfg.snr_grid = {40.0, 20.0};
  const auto result = harness::run_sweep(cfg);
  CHECK(result.sizes.size() == 2 * 3 * 2);
  // non-increasing along epsilon at fixed (snr, run)
  for (const auto& a : result.sizes)
    for (const auto& b : result.sizes)
      if (a.snr_db == b.snr_db && a.run == b.run && a.epsilon < b.epsilon)
        CHECK(a.size >= b.size);
}

TEST_CASE("fit_model and evaluate_one_step agree with a hand-rolled check") {
  const auto d = systems::simulate_lorenz(systems::LorenzParams{}, {1, 1, 1}, 0.01, 300);
  dict::DictionaryConfig dcfg;
  dcfg.gaussian.count = 5;
  dcfg.gaussian.exponent_coeffs = {0.002};
  const auto dictionary = dict::build_dictionary(d, dcfg, 7);
  const auto model = harness::fit_model(koopman::Method::I, d, dictionary);
  const auto scores = harness::evaluate_one_step(model, d);
  REQUIRE(scores.size() == 3);
  CHECK(scores[0].first == "x");
  for (const auto& [state, nmse] : scores) {
    CHECK(std::isfinite(nmse));
    CHECK(nmse < 0.1);  // identity-heavy dictionary nails one-step at dt=0.01
  }
}

TEST_CASE("reduced models are refit, not masked") {
  // the captured reduced model must carry the reduced dictionary size
  auto cfg = scalar_config();
  cfg.methods = {koopman::Method::I, koopman::Method::IV};
  const auto result = harness::run_sweep(cfg);
  REQUIRE(result.models.size() == 4);  // 2 methods x full/reduced
  for (size_t i = 0; i < result.models.size(); ++i) {
    const auto& [method, reduced] = result.model_keys[i];
    const auto& model = result.models[i];
    if (reduced) CHECK(model.dictionary.size() <= 1);
    CHECK(model.K_F_hat.cols() == model.dictionary.size());
    CHECK(model.K_F_hat.rows() == model.dictionary.size() + model.dictionary.n_inputs);
  }
}

TEST_CASE("the csv outputs are deterministic") {
  auto cfg = scalar_config();
  cfg.snr_grid = {30.0};
  cfg.mc_runs = 3;
  const auto a = harness::run_sweep(cfg);
  const auto b = harness::run_sweep(cfg);
  CHECK(harness::nmse_csv(a) == harness::nmse_csv(b));
  CHECK(harness::sizes_csv(a) == harness::sizes_csv(b));
}

TEST_CASE("nmse csv carries the documented header and row count") {
  auto cfg = scalar_config();
  cfg.snr_grid = {40.0, 20.0};
  const auto result = harness::run_sweep(cfg);
  const auto csv = harness::nmse_csv(result);
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "method,snr_db,dict,split,state,mean_nmse,ci95,n_ok,n_fail");
  int rows = 0;
  while (std::getline(lines, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2 * 1 * 2 * 2);  // snr x method x dict x split (1 state)
}

TEST_CASE("heatmap export flags exact zeros only") {
  dict::Dictionary d;
  d.state_dim = 1;
  d.observables = {dict::Identity{0}};
  d.output_indices = {0};
  MatrixXd K(1, 1);
  K << 0.0;
  const auto zero_model = koopman::make_model(d, K, koopman::Method::II);
  const auto csv = harness::heatmap_csv(zero_model);
  CHECK(csv.find("0,0,") != std::string::npos);
  CHECK(csv.rfind(",1\n") == csv.size() - 3);  // mask set on the only row

  K << 1e-8;
  const auto tiny_model = koopman::make_model(d, K, koopman::Method::IV);
  const auto csv2 = harness::heatmap_csv(tiny_model);
  CHECK(csv2.rfind(",0\n") == csv2.size() - 3);  // near-zero but unmasked
}

TEST_CASE("heatmap rows cover the full operator") {
  const auto d = systems::simulate_lorenz(systems::LorenzParams{}, {1, 1, 1}, 0.01, 100);
  dict::DictionaryConfig dcfg;
  dcfg.gaussian.count = 3;
  dcfg.gaussian.exponent_coeffs = {0.01};
  const auto dictionary = dict::build_dictionary(d, dcfg, 5);
  const auto model = harness::fit_model(koopman::Method::I, d, dictionary);
  const auto csv = harness::heatmap_csv(model);
  int rows = -1;  // header
  for (char c : csv)
    if (c == '\n') ++rows;
  CHECK(rows == 6 * 6);
}

TEST_CASE("heatmap lookup by method errors when absent") {
  const auto result = harness::run_sweep(scalar_config());
  CHECK_NOTHROW(harness::heatmap_export(result, koopman::Method::I, false));
  CHECK_THROWS_AS(harness::heatmap_export(result, koopman::Method::III, false),
                  ConfigError);
}

TEST_CASE("write_sweep_outputs produces the documented files") {
  const auto out_dir =
      (std::filesystem::temp_directory_path() / "kr_sweep_out").string();
  std::filesystem::remove_all(out_dir);
  const auto result = harness::run_sweep(scalar_config());
  harness::write_sweep_outputs(result, out_dir);
  CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "nmse.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "sizes.csv"));
  CHECK(std::filesystem::exists(std::filesystem::path(out_dir) / "models" /
                                "model_I_full.json"));
}

TEST_CASE("config parsing validates and fills defaults") {
  CHECK_THROWS_AS(harness::config_from_json(R"({"system":{"type":"bogus"}})", "."),
                  ConfigError);
  CHECK_THROWS_AS(
      harness::config_from_json(
          R"({"system":{"type":"lorenz"},"epsilon_grid":[2.0]})", "."),
      ConfigError);
  const auto cfg = harness::config_from_json(R"({"system":{"type":"lorenz"}})", ".");
  CHECK(cfg.methods.size() == 4);
  CHECK(cfg.mc_runs == 1);
  CHECK(std::isinf(cfg.snr_grid.at(0)));
  CHECK(cfg.eval_epsilon() == 0.1);
}

}  // TEST_SUITE
