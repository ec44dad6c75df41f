#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "koopred/dataset.hpp"
#include "koopred/dictionary.hpp"
#include "koopred/koopman.hpp"
#include "koopred/vb.hpp"

namespace koopred::harness {

struct FitOptions {
  vb::Priors priors;
  double stls_lambda = 0.05;
  int stls_max_rounds = 10;
  int sbl_max_iter = 1000;
  double sbl_tol = 1e-6;
  int vb_threads = 1;
};

// Featurizes `train_raw` with the dictionary (delay embedding applied
// internally) and fits one identification method.
koopman::KoopmanModel fit_model(koopman::Method method, const data::Dataset& train_raw,
                                const dict::Dictionary& dictionary,
                                const FitOptions& opts = {});

// One-step prediction NMSE per output state, measured against the recorded
// next-step states of `raw`.
std::vector<std::pair<std::string, double>> evaluate_one_step(
    const koopman::KoopmanModel& model, const data::Dataset& raw);

// Data source: a simulated system ("lorenz"/"usv", carried as JSON for the
// simulators) or a pair of CSV files ("csv").
struct SystemSpec {
  std::string type;
  std::string json_text;           // simulated types: full system object
  std::string train_path;          // csv type, resolved against the config dir
  std::string test_path;
  int n_states = 0;
  int n_inputs = 0;
  int test_n_steps = 0;            // simulated types; 0 means same as training
  double test_x0_perturb = 0.1;    // stddev of the seeded test initial-state shift
};

struct ExperimentConfig {
  SystemSpec system;
  dict::DictionaryConfig dictionary;
  vb::Priors priors;
  std::vector<koopman::Method> methods{koopman::Method::I, koopman::Method::II,
                                       koopman::Method::III, koopman::Method::IV};
  std::vector<double> snr_grid;     // dB; +inf disables noise injection
  int mc_runs = 1;
  std::vector<double> epsilon_grid;
  double epsilon_eval = 0;          // 0 picks epsilon_grid.front()
  double stls_lambda = 0.05;
  int stls_max_rounds = 10;
  int sbl_max_iter = 1000;
  double sbl_tol = 1e-6;
  std::uint64_t seed = 0;
  int threads = 1;                  // parallelism inside each fit; runs stay ordered
  bool save_models = true;

  void validate() const;
  double eval_epsilon() const { return epsilon_eval > 0 ? epsilon_eval : epsilon_grid.front(); }
};

ExperimentConfig config_from_json(const std::string& text, const std::string& base_dir);
ExperimentConfig config_from_file(const std::string& path);

struct NmseCell {
  koopman::Method method;
  double snr_db = 0;
  bool reduced = false;
  bool test_split = false;
  std::string state;
  double mean = 0;
  double ci95 = 0;                  // 1.96 * sd / sqrt(n_ok), 0 for n_ok < 2
  int n_ok = 0;
  int n_fail = 0;
  std::vector<double> per_run;      // successful runs, in run order
};

struct SizeRow {
  double snr_db = 0;
  double epsilon = 0;
  int run = 0;
  int size = 0;
};

struct SweepResult {
  std::vector<NmseCell> nmse;
  std::vector<SizeRow> sizes;
  std::vector<std::pair<koopman::Method, bool>> model_keys;  // (method, reduced)
  std::vector<koopman::KoopmanModel> models;                 // parallel to model_keys
  int total_failures = 0;
};

// Full Monte Carlo protocol: per (snr, run) noise the data, build the
// dictionary, fit the spike-and-slab model, reduce per epsilon, refit every
// requested method on the full and reduced dictionaries and score one-step
// NMSE on the training and held-out trajectories. Per-run seeds are
// base seed + run index. Per-run failures are recorded, not fatal.
SweepResult run_sweep(const ExperimentConfig& cfg);

std::string nmse_csv(const SweepResult& result);
std::string sizes_csv(const SweepResult& result);

// Writes nmse.csv, sizes.csv and models/*.json under out_dir.
void write_sweep_outputs(const SweepResult& result, const std::string& out_dir);

// |K_F_hat| entries with row/column labels; exact zeros carry a mask flag.
std::string heatmap_csv(const koopman::KoopmanModel& model);
std::string heatmap_export(const SweepResult& result, koopman::Method method,
                           bool reduced);

}  // namespace koopred::harness
