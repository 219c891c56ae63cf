#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "modadc/modcore.hpp"
#include "modadc/ringosc.hpp"
#include "modadc/signals.hpp"

namespace modadc {

enum class Experiment {
  temporal,
  spatial,
  spacetime,
  oversampled,
  ringosc,
  sigma_delta_compare,
  bounds_check,
};

const char* experiment_name(Experiment e);

// Input description as read from the config. `model` covers the stationary
// scalar and two-stream cases; `sigma` holds the per-sample covariance for
// the memoryless vector experiment; `sinusoid` swaps the Gaussian draw for
// a random in-band tone of the same power.
struct SourceSpec {
  ProcessModel model = ProcessModel::flat_band(1, 1.0);
  std::string kind = "flat_band";
  bool sinusoid = false;
  double band_fraction = 0.0;  // tone frequency cap as a fraction of pi
  Eigen::MatrixXd sigma;       // iid_vector only
};

struct RingSpec {
  RingOscProfile profile;
  AffineFrontend frontend{};
  bool do_search = false;  // run the (a,b) grid search instead of `frontend`
  AbGrid grid{};
  long stats_samples = 1000000;
  long pe_blocks = 1000;
  double input_clip_sigmas = 4.0;
  double feas_margin = 0.01;
};

struct DesignSpec {
  int order = 64;
  int half_width = 22;
  long block_len = 2048;
  double eps = 1e-3;
  double delta_override = 0.0;  // 0: derive from (block_len, eps)
  NoiseModel noise = NoiseModel::white_uniform;
};

struct ExperimentConfig {
  Experiment experiment = Experiment::temporal;
  SourceSpec source;
  ModAdcParams adc;  // rate_bits == 0 means: derive from the backoff rule
  bool adc_given = false;
  bool alpha_given = false;  // an explicit gain blocks the matched-design derivation
  std::optional<RingSpec> ring;
  DesignSpec design;
  long trials = 1;
  std::uint64_t master_seed = 1;
  std::string output_path;
  std::vector<double> rate_grid;  // sigma_delta_compare rate axis
  double distortion = 1e-4;       // work point for rate reporting
  // "experiment": "acceptance" configs run checklist criteria instead of a
  // Monte Carlo experiment; only output_path and criteria apply then
  bool acceptance = false;
  std::vector<int> criteria;  // empty = every criterion
};

// Strict parse: unknown keys, wrong types, and cross-field violations all
// throw with the offending key named.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

struct WilsonInterval {
  double lo = 0.0;
  double hi = 1.0;
};

// 95% score interval for a binomial proportion
WilsonInterval wilson_interval(long errors, long n);

struct TrialRecord {
  long trial_id = 0;
  bool block_error = false;
  long overload_count = 0;
  double conditional_mse = 0.0;  // meaningful only when !block_error
  double snr_db = 0.0;
  double rate_bits = 0.0;
  double wall_time_ms = 0.0;  // bookkeeping; kept out of the CSVs
};

struct ExperimentSummary {
  Experiment experiment = Experiment::temporal;
  std::string input_kind;
  long trials = 0;
  long block_errors = 0;
  double p_e = 0.0;
  WilsonInterval p_e_interval;
  double mean_conditional_mse = 0.0;  // over clean trials
  double se_conditional_mse = 0.0;
  double mean_snr_db = 0.0;
  double rate_bits = 0.0;
  // experiment-specific figures, emitted as extra summary columns
  std::vector<std::pair<std::string, double>> extras;
  std::vector<TrialRecord> records;
};

// Runs all trials (parallel per MODADC_THREADS, deterministic regardless)
// and aggregates. Throws on setup errors; per-trial numeric failures are
// logged to stderr and counted as failed trials.
ExperimentSummary run_experiment(const ExperimentConfig& cfg);

void write_trials_csv(const ExperimentSummary& s, const std::string& path);
// One row per summary; `axis_name` empty for a plain run. The
// sigma_delta_compare experiment uses its own fixed column set.
void write_summary_csv(const std::vector<ExperimentSummary>& rows,
                       const std::string& path, const std::string& axis_name,
                       const std::vector<double>& axis_values);

// Returns a copy with one scalar parameter replaced; throws on an unknown
// axis name or an axis that does not apply to the experiment.
ExperimentConfig apply_axis(const ExperimentConfig& cfg,
                            const std::string& axis, double value);

// CLI entry points: orchestrate, write <output>.trials.csv and
// <output>.summary.csv, return a process exit code.
int run_to_files(const ExperimentConfig& cfg);
int sweep_to_files(const ExperimentConfig& cfg, const std::string& axis,
                   const std::vector<double>& values);

}  // namespace modadc
