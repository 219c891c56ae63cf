#include "modadc/harness.hpp"

#include <json.hpp>

#include <Eigen/Cholesky>
#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "modadc/acceptance.hpp"
#include "modadc/iforce.hpp"
#include "modadc/oversample.hpp"
#include "modadc/predict.hpp"
#include "modadc/spacetime.hpp"
#include "modadc/temporal.hpp"

namespace modadc {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

// ---------------------------------------------------------------- config ---

void check_keys(const json& j, const char* ctx,
                std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (item.key() == a) {
        ok = true;
        break;
      }
    }
    if (!ok) fail("unknown key '" + item.key() + "' in " + ctx);
  }
}

double get_num(const json& j, const char* ctx, const char* key, double def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number()) fail(std::string(ctx) + "." + key + " must be a number");
  return v.get<double>();
}

long get_int(const json& j, const char* ctx, const char* key, long def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_number_integer())
    fail(std::string(ctx) + "." + key + " must be an integer");
  return v.get<long>();
}

bool get_bool(const json& j, const char* ctx, const char* key, bool def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_boolean()) fail(std::string(ctx) + "." + key + " must be a bool");
  return v.get<bool>();
}

std::string get_str(const json& j, const char* ctx, const char* key,
                    const std::string& def) {
  if (!j.contains(key)) return def;
  const json& v = j.at(key);
  if (!v.is_string()) fail(std::string(ctx) + "." + key + " must be a string");
  return v.get<std::string>();
}

std::vector<double> get_vec(const json& j, const char* ctx, const char* key) {
  if (!j.contains(key)) return {};
  const json& v = j.at(key);
  if (!v.is_array()) fail(std::string(ctx) + "." + key + " must be an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number())
      fail(std::string(ctx) + "." + key + " entries must be numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

Experiment parse_experiment(const std::string& name) {
  if (name == "temporal") return Experiment::temporal;
  if (name == "spatial") return Experiment::spatial;
  if (name == "spacetime") return Experiment::spacetime;
  if (name == "oversampled") return Experiment::oversampled;
  if (name == "ringosc") return Experiment::ringosc;
  if (name == "sigma_delta_compare") return Experiment::sigma_delta_compare;
  if (name == "bounds_check") return Experiment::bounds_check;
  fail("unknown experiment '" + name +
       "' (expected temporal, spatial, spacetime, oversampled, ringosc, "
       "sigma_delta_compare, or bounds_check)");
}

bool scalar_kind(const std::string& kind) {
  return kind == "flat_band" || kind == "ar1" || kind == "autocov" ||
         kind == "psd";
}

SourceSpec parse_source(const json& j, Experiment exp) {
  SourceSpec s;
  s.kind = get_str(j, "source", "kind", "");
  if (s.kind.empty()) fail("source.kind is required");

  std::set<std::string> allowed = {"kind", "sinusoid", "band_fraction"};
  if (s.kind == "flat_band") {
    allowed.insert({"variance", "oversampling"});
  } else if (s.kind == "ar1") {
    allowed.insert({"variance", "rho"});
  } else if (s.kind == "autocov") {
    allowed.insert("autocov");
  } else if (s.kind == "psd") {
    allowed.insert({"psd", "oversampling"});
  } else if (s.kind == "filtered_pair") {
    allowed.insert({"taps_h", "taps_g"});
  } else if (s.kind == "iid_vector") {
    allowed.insert("sigma");
  } else {
    fail("unknown source.kind '" + s.kind + "'");
  }
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key()))
      fail("key '" + item.key() + "' does not apply to source.kind " + s.kind);
  }

  if (s.kind == "flat_band") {
    long l = get_int(j, "source", "oversampling", 1);
    double var = get_num(j, "source", "variance", 1.0);
    if (l < 1) fail("source.oversampling must be >= 1");
    if (var <= 0) fail("source.variance must be positive");
    s.model = ProcessModel::flat_band(static_cast<int>(l), var);
  } else if (s.kind == "ar1") {
    double rho = get_num(j, "source", "rho", 0.0);
    double var = get_num(j, "source", "variance", 1.0);
    if (std::abs(rho) >= 1.0) fail("source.rho must lie in (-1, 1)");
    if (var <= 0) fail("source.variance must be positive");
    // enough lags that the truncated tail is far below synthesis accuracy
    std::vector<double> c(2049);
    for (size_t r = 0; r < c.size(); ++r)
      c[r] = var * std::pow(rho, static_cast<double>(r));
    s.model = ProcessModel::autocov_seq(std::move(c));
  } else if (s.kind == "autocov") {
    std::vector<double> c = get_vec(j, "source", "autocov");
    if (c.empty()) fail("source.autocov must be a non-empty array");
    if (c[0] <= 0) fail("source.autocov[0] must be positive");
    s.model = ProcessModel::autocov_seq(std::move(c));
  } else if (s.kind == "psd") {
    std::vector<double> p = get_vec(j, "source", "psd");
    if (p.size() < 2) fail("source.psd needs at least two grid points");
    for (double v : p)
      if (v < 0) fail("source.psd entries must be nonnegative");
    long l = get_int(j, "source", "oversampling", 1);
    if (l < 1) fail("source.oversampling must be >= 1");
    s.model = ProcessModel::psd_grid(std::move(p));
    s.model.oversampling = static_cast<int>(l);  // band for the pipeline
  } else if (s.kind == "filtered_pair") {
    std::vector<double> h = get_vec(j, "source", "taps_h");
    std::vector<double> g = get_vec(j, "source", "taps_g");
    if (h.empty() || g.empty())
      fail("source.taps_h and source.taps_g are required for filtered_pair");
    s.model = ProcessModel::filtered_noise_pair(std::move(h), std::move(g));
  } else {  // iid_vector
    if (!j.contains("sigma") || !j.at("sigma").is_array())
      fail("source.sigma must be an array of rows");
    const json& rows = j.at("sigma");
    int k = static_cast<int>(rows.size());
    if (k < 1) fail("source.sigma must be non-empty");
    s.sigma.resize(k, k);
    for (int r = 0; r < k; ++r) {
      const json& row = rows.at(r);
      if (!row.is_array() || static_cast<int>(row.size()) != k)
        fail("source.sigma must be square");
      for (int c = 0; c < k; ++c) {
        if (!row.at(c).is_number()) fail("source.sigma entries must be numbers");
        s.sigma(r, c) = row.at(c).get<double>();
      }
    }
    if (!s.sigma.isApprox(s.sigma.transpose(), 1e-9))
      fail("source.sigma must be symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(s.sigma);
    if (llt.info() != Eigen::Success)
      fail("source.sigma must be positive definite");
  }

  s.sinusoid = get_bool(j, "source", "sinusoid", false);
  s.band_fraction = get_num(j, "source", "band_fraction", 0.0);
  if (s.sinusoid) {
    if (!scalar_kind(s.kind))
      fail("source.sinusoid applies only to scalar sources");
    if (exp == Experiment::temporal || exp == Experiment::bounds_check)
      fail("source.sinusoid is not valid for " +
           std::string(experiment_name(exp)) +
           "; the predictor design needs a Gaussian model");
    if (s.band_fraction <= 0 || s.band_fraction > 1)
      fail("source.band_fraction must lie in (0, 1] when sinusoid is set");
  } else if (j.contains("band_fraction")) {
    fail("source.band_fraction requires source.sinusoid");
  }
  return s;
}

RingSpec parse_ring(const json& j) {
  check_keys(j, "ring",
             {"n_inverters", "sample_period", "curve_csv", "frontend", "search",
              "stats_samples", "pe_blocks", "input_clip_sigmas", "feas_margin"});
  RingSpec r;
  long n = get_int(j, "ring", "n_inverters", 0);
  double ts = get_num(j, "ring", "sample_period", 0.0);
  if (n < 3) fail("ring.n_inverters must be >= 3");
  if (ts <= 0) fail("ring.sample_period must be positive");
  std::string csv = get_str(j, "ring", "curve_csv", "");
  r.profile.n_inverters = static_cast<int>(n);
  r.profile.sample_period = ts;
  r.profile.f_curve = csv.empty() ? default_f_curve() : load_f_curve(csv);

  bool has_fe = j.contains("frontend");
  bool has_search = j.contains("search");
  if (has_fe == has_search)
    fail("ring needs exactly one of 'frontend' and 'search'");
  if (has_fe) {
    const json& fe = j.at("frontend");
    if (!fe.is_object()) fail("ring.frontend must be an object");
    check_keys(fe, "ring.frontend", {"a", "b"});
    r.frontend.a = get_num(fe, "ring.frontend", "a", 0.0);
    r.frontend.b = get_num(fe, "ring.frontend", "b", 0.0);
    if (r.frontend.b <= 0) fail("ring.frontend.b must be positive");
  } else {
    r.do_search = true;
    const json& g = j.at("search");
    if (!g.is_object()) fail("ring.search must be an object");
    check_keys(g, "ring.search", {"a_lo", "a_hi", "na", "b_lo", "b_hi", "nb"});
    r.grid.a_lo = get_num(g, "ring.search", "a_lo", r.grid.a_lo);
    r.grid.a_hi = get_num(g, "ring.search", "a_hi", r.grid.a_hi);
    r.grid.na = static_cast<int>(get_int(g, "ring.search", "na", r.grid.na));
    r.grid.b_lo = get_num(g, "ring.search", "b_lo", r.grid.b_lo);
    r.grid.b_hi = get_num(g, "ring.search", "b_hi", r.grid.b_hi);
    r.grid.nb = static_cast<int>(get_int(g, "ring.search", "nb", r.grid.nb));
    if (r.grid.na < 1 || r.grid.nb < 1) fail("ring.search grid must be non-empty");
    if (r.grid.b_lo <= 0) fail("ring.search.b_lo must be positive");
    if (r.grid.b_hi < r.grid.b_lo || r.grid.a_hi < r.grid.a_lo)
      fail("ring.search grid bounds are inverted");
  }

  r.stats_samples = get_int(j, "ring", "stats_samples", r.stats_samples);
  r.pe_blocks = get_int(j, "ring", "pe_blocks", r.pe_blocks);
  r.input_clip_sigmas =
      get_num(j, "ring", "input_clip_sigmas", r.input_clip_sigmas);
  r.feas_margin = get_num(j, "ring", "feas_margin", r.feas_margin);
  if (r.stats_samples < 1000) fail("ring.stats_samples must be >= 1000");
  if (r.pe_blocks < 1) fail("ring.pe_blocks must be >= 1");
  if (r.input_clip_sigmas <= 0) fail("ring.input_clip_sigmas must be positive");
  if (r.feas_margin <= 0 || r.feas_margin > 1)
    fail("ring.feas_margin must lie in (0, 1]");
  return r;
}

bool power_of_two(long n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

const char* experiment_name(Experiment e) {
  switch (e) {
    case Experiment::temporal: return "temporal";
    case Experiment::spatial: return "spatial";
    case Experiment::spacetime: return "spacetime";
    case Experiment::oversampled: return "oversampled";
    case Experiment::ringosc: return "ringosc";
    case Experiment::sigma_delta_compare: return "sigma_delta_compare";
    case Experiment::bounds_check: return "bounds_check";
  }
  return "?";
}

ExperimentConfig parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    fail(std::string("config parse: ") + e.what());
  }
  if (!j.is_object()) fail("config must be an object");

  ExperimentConfig cfg;
  std::string ename = get_str(j, "config", "experiment", "");
  if (ename.empty()) fail("config.experiment is required");
  if (ename == "acceptance") {
    check_keys(j, "config", {"experiment", "criteria", "output"});
    cfg.acceptance = true;
    cfg.output_path = get_str(j, "config", "output", "");
    if (j.contains("criteria")) {
      const json& c = j.at("criteria");
      if (!c.is_array()) fail("config.criteria must be an array");
      for (const json& e : c) {
        if (!e.is_number_integer())
          fail("config.criteria entries must be integers");
        const long id = e.get<long>();
        if (id < 1 || id > criterion_count())
          fail("config.criteria entries must be in 1.." +
               std::to_string(criterion_count()));
        cfg.criteria.push_back(static_cast<int>(id));
      }
    }
    return cfg;
  }
  check_keys(j, "config", {"experiment", "master_seed", "trials", "output",
                           "distortion", "source", "adc", "ring", "design",
                           "rate_grid"});
  cfg.experiment = parse_experiment(ename);

  long seed = get_int(j, "config", "master_seed", 1);
  if (seed < 0) fail("config.master_seed must be nonnegative");
  cfg.master_seed = static_cast<std::uint64_t>(seed);
  cfg.trials = get_int(j, "config", "trials", 1);
  if (cfg.trials < 1) fail("config.trials must be >= 1");
  cfg.output_path = get_str(j, "config", "output", "");
  cfg.distortion = get_num(j, "config", "distortion", 1e-4);
  if (cfg.distortion <= 0) fail("config.distortion must be positive");

  if (!j.contains("source") || !j.at("source").is_object())
    fail("config.source must be an object");
  cfg.source = parse_source(j.at("source"), cfg.experiment);

  // rate_bits 0 keeps the run on the derived backoff rate
  cfg.adc.rate_bits = 0.0;
  cfg.adc.alpha = 1.0;
  cfg.adc.dither = Dither::subtractive;
  if (j.contains("adc")) {
    const json& a = j.at("adc");
    if (!a.is_object()) fail("config.adc must be an object");
    check_keys(a, "adc", {"rate_bits", "alpha", "dither"});
    cfg.adc_given = true;
    cfg.adc.rate_bits = get_num(a, "adc", "rate_bits", 0.0);
    if (cfg.adc.rate_bits < 0) fail("adc.rate_bits must be nonnegative");
    if (a.contains("alpha")) {
      cfg.alpha_given = true;
      cfg.adc.alpha = get_num(a, "adc", "alpha", 1.0);
      if (cfg.adc.alpha <= 0) fail("adc.alpha must be positive");
    }
    std::string d = get_str(a, "adc", "dither", "subtractive");
    if (d == "subtractive")
      cfg.adc.dither = Dither::subtractive;
    else if (d == "none")
      cfg.adc.dither = Dither::none;
    else
      fail("adc.dither must be 'subtractive' or 'none'");
  }

  bool noise_given = false;
  if (j.contains("design")) {
    const json& d = j.at("design");
    if (!d.is_object()) fail("config.design must be an object");
    check_keys(d, "design",
               {"order", "half_width", "block_len", "eps", "delta", "noise"});
    cfg.design.order = static_cast<int>(get_int(d, "design", "order", 64));
    cfg.design.half_width =
        static_cast<int>(get_int(d, "design", "half_width", 22));
    cfg.design.block_len = get_int(d, "design", "block_len", 2048);
    cfg.design.eps = get_num(d, "design", "eps", 1e-3);
    cfg.design.delta_override = get_num(d, "design", "delta", 0.0);
    if (d.contains("noise")) {
      noise_given = true;
      std::string nm = get_str(d, "design", "noise", "");
      if (nm == "white_uniform")
        cfg.design.noise = NoiseModel::white_uniform;
      else if (nm == "ma1_uniform")
        cfg.design.noise = NoiseModel::ma1_uniform;
      else
        fail("design.noise must be 'white_uniform' or 'ma1_uniform'");
    }
    if (cfg.design.order < 1) fail("design.order must be >= 1");
    if (cfg.design.half_width < 0) fail("design.half_width must be >= 0");
    if (cfg.design.block_len < 1) fail("design.block_len must be >= 1");
    if (cfg.design.eps <= 0 || cfg.design.eps >= 1)
      fail("design.eps must lie in (0, 1)");
    if (cfg.design.delta_override < 0) fail("design.delta must be nonnegative");
  }
  // counter front ends difference the wrap residual
  if (cfg.experiment == Experiment::ringosc && !noise_given)
    cfg.design.noise = NoiseModel::ma1_uniform;

  if (j.contains("ring")) {
    if (cfg.experiment != Experiment::ringosc)
      fail("config.ring applies only to the ringosc experiment");
    if (!j.at("ring").is_object()) fail("config.ring must be an object");
    cfg.ring = parse_ring(j.at("ring"));
  } else if (cfg.experiment == Experiment::ringosc) {
    fail("the ringosc experiment needs a config.ring block");
  }

  cfg.rate_grid = get_vec(j, "config", "rate_grid");
  if (!cfg.rate_grid.empty() &&
      cfg.experiment != Experiment::sigma_delta_compare)
    fail("config.rate_grid applies only to sigma_delta_compare");
  for (double r : cfg.rate_grid)
    if (r <= 0) fail("rate_grid entries must be positive");

  // per-experiment source compatibility
  const std::string& kind = cfg.source.kind;
  switch (cfg.experiment) {
    case Experiment::temporal:
    case Experiment::bounds_check:
      if (!scalar_kind(kind))
        fail("temporal experiments need a scalar source model");
      break;
    case Experiment::spatial:
      if (kind != "iid_vector") fail("spatial needs source.kind iid_vector");
      break;
    case Experiment::spacetime:
      if (kind != "filtered_pair")
        fail("spacetime needs source.kind filtered_pair");
      break;
    case Experiment::oversampled:
    case Experiment::sigma_delta_compare:
      if (!scalar_kind(kind))
        fail("oversampled experiments need a scalar source model");
      if (!power_of_two(cfg.design.block_len))
        fail("oversampled experiments need a power-of-two design.block_len");
      break;
    case Experiment::ringosc:
      if (!scalar_kind(kind)) fail("ringosc needs a scalar source model");
      break;
  }
  if (cfg.experiment == Experiment::sigma_delta_compare &&
      cfg.rate_grid.empty() && cfg.adc.rate_bits <= 0)
    fail("sigma_delta_compare needs a rate_grid or an explicit adc.rate_bits");
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

WilsonInterval wilson_interval(long errors, long n) {
  if (n <= 0) return {0.0, 1.0};
  const double z = 1.959963984540054;  // 95% two-sided
  double nn = static_cast<double>(n);
  double p = static_cast<double>(errors) / nn;
  double z2 = z * z;
  double denom = 1.0 + z2 / nn;
  double center = (p + z2 / (2.0 * nn)) / denom;
  double half =
      z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  WilsonInterval w;
  w.lo = errors == 0 ? 0.0 : std::max(0.0, center - half);
  w.hi = errors == n ? 1.0 : std::min(1.0, center + half);
  return w;
}

namespace {

// ---------------------------------------------------------- trial running ---

int thread_count() {
  const char* s = std::getenv("MODADC_THREADS");
  if (!s || !*s) return 1;
  char* end = nullptr;
  long v = std::strtol(s, &end, 10);
  if (end == s || *end != '\0' || v < 1) return 1;
  return static_cast<int>(std::min(v, 64L));
}

// Deterministic regardless of the thread count: every trial derives its own
// generator and writes only its own slot.
template <class Body>
void for_each_trial(long trials, const Body& body) {
  int nt = thread_count();
  if (nt <= 1 || trials <= 1) {
    for (long t = 0; t < trials; ++t) body(t);
    return;
  }
  std::atomic<long> next{0};
  auto worker = [&] {
    for (long t = next.fetch_add(1); t < trials; t = next.fetch_add(1)) body(t);
  };
  std::vector<std::thread> pool;
  int spawn = static_cast<int>(std::min<long>(nt, trials));
  pool.reserve(spawn);
  for (int i = 0; i < spawn; ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
}

// body(t, rng) -> TrialRecord; exceptions mark the trial failed and the run
// continues.
template <class Body>
std::vector<TrialRecord> run_trials(const ExperimentConfig& cfg,
                                    const Body& body) {
  std::vector<TrialRecord> records(cfg.trials);
  for_each_trial(cfg.trials, [&](long t) {
    auto t0 = std::chrono::steady_clock::now();
    TrialRecord rec;
    rec.trial_id = t;
    try {
      Rng rng = Rng::derive(cfg.master_seed, static_cast<std::uint64_t>(t),
                            "trial");
      rec = body(t, rng);
      rec.trial_id = t;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "[%s] trial %ld failed: %s\n",
                   experiment_name(cfg.experiment), t, e.what());
      rec.block_error = true;
    }
    rec.wall_time_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - t0)
                           .count();
    records[t] = rec;
  });
  return records;
}

ExperimentSummary aggregate(const ExperimentConfig& cfg, double rate_bits,
                            std::vector<TrialRecord> records) {
  ExperimentSummary s;
  s.experiment = cfg.experiment;
  s.input_kind = cfg.source.sinusoid ? "sinusoid" : cfg.source.kind;
  s.trials = static_cast<long>(records.size());
  s.rate_bits = rate_bits;
  long clean = 0;
  double sum = 0, sum2 = 0, snr_sum = 0;
  for (const TrialRecord& r : records) {
    if (r.block_error) {
      ++s.block_errors;
    } else {
      ++clean;
      sum += r.conditional_mse;
      sum2 += r.conditional_mse * r.conditional_mse;
      snr_sum += r.snr_db;
    }
  }
  s.p_e = s.trials > 0 ? static_cast<double>(s.block_errors) / s.trials : 0.0;
  s.p_e_interval = wilson_interval(s.block_errors, s.trials);
  if (clean > 0) {
    s.mean_conditional_mse = sum / clean;
    s.mean_snr_db = snr_sum / clean;
    if (clean > 1) {
      double var = (sum2 - sum * sum / clean) / (clean - 1);
      s.se_conditional_mse = std::sqrt(std::max(0.0, var) / clean);
    }
  }
  s.records = std::move(records);
  return s;
}

double scalar_variance(const SourceSpec& s) {
  if (s.kind == "iid_vector") return s.sigma.diagonal().mean();
  return autocov_from_model(s.model, 0)[0];
}

double resolve_delta(const DesignSpec& d) {
  if (d.delta_override > 0) return d.delta_override;
  return backoff_for_block(static_cast<double>(d.block_len), d.eps);
}

SamplePath draw_scalar_path(const ExperimentConfig& cfg, long n, Rng& rng) {
  if (cfg.source.sinusoid)
    return gen_sinusoid(scalar_variance(cfg.source), cfg.source.band_fraction,
                        n, rng);
  return gen_gaussian(cfg.source.model, n, rng);
}

// ------------------------------------------------------------- experiments ---

ExperimentSummary run_temporal_family(const ExperimentConfig& cfg,
                                      bool per_sample_bookkeeping) {
  const DesignSpec& d = cfg.design;
  std::vector<double> cx = autocov_from_model(cfg.source.model, d.order);
  std::vector<double> cv = quantized_autocov(cx, cfg.adc.alpha, d.noise);
  PredictorFilter f = solve_predictor(cv, d.order);
  f.mean = -0.5;

  double delta = resolve_delta(d);
  double rate = cfg.adc.rate_bits > 0 ? cfg.adc.rate_bits
                                      : rate_for_backoff(f.error_var, delta);
  ModAdcParams params(rate, cfg.adc.alpha, cfg.adc.dither);
  double x_var = cx[0];

  RunOptions opt;
  opt.init = InitMethod::genie;
  opt.genie_history = per_sample_bookkeeping;

  std::atomic<long> total_overloads{0};
  auto records = run_trials(cfg, [&](long, Rng& rng) {
    SamplePath path = gen_gaussian(cfg.source.model, d.block_len + d.order, rng);
    StreamResult res = run_stream(path, params, f, opt, rng);
    TrialRecord rec;
    rec.block_error = res.block_error;
    rec.overload_count = res.overload_count;
    rec.rate_bits = rate;
    total_overloads.fetch_add(res.overload_count);
    if (!res.block_error) {
      rec.conditional_mse = res.conditional_mse;
      rec.snr_db = 10.0 * std::log10(x_var / res.conditional_mse);
    }
    return rec;
  });

  ExperimentSummary s = aggregate(cfg, rate, std::move(records));
  s.extras.emplace_back("delta", delta);
  s.extras.emplace_back("sigma_p_sq", f.error_var);
  if (per_sample_bookkeeping) {
    double samples = static_cast<double>(cfg.trials) * d.block_len;
    double overloads = static_cast<double>(total_overloads.load());
    double observed = samples > 0 ? overloads / samples : 0.0;
    double bound =
        2.0 * chernoff_tail({f.error_var, params.modulo_size() / 2.0});
    double se = std::sqrt(std::max(bound * (1.0 - bound), 0.0) / samples);
    s.extras.emplace_back("samples", samples);
    s.extras.emplace_back("overloads", overloads);
    s.extras.emplace_back("per_sample_rate", observed);
    s.extras.emplace_back("per_sample_bound", bound);
    s.extras.emplace_back("bound_plus_3se", bound + 3.0 * se);
    s.extras.emplace_back("consistent",
                          observed <= bound + 3.0 * se ? 1.0 : 0.0);
  }
  return s;
}

ExperimentSummary run_spatial(const ExperimentConfig& cfg) {
  const Eigen::MatrixXd& sigma = cfg.source.sigma;
  int k = static_cast<int>(sigma.rows());
  double alpha = cfg.adc.alpha;
  Eigen::MatrixXd gram = alpha * alpha * sigma +
                         Eigen::MatrixXd::Identity(k, k) / 12.0;
  IntegerMatrix a = find_A_lll(gram);

  double delta = resolve_delta(cfg.design);
  double worst_row = 0;
  for (int r = 0; r < k; ++r) {
    Eigen::VectorXd row = a.entries.row(r).cast<double>();
    worst_row = std::max(worst_row, row.dot(gram * row));
  }
  double rate = cfg.adc.rate_bits > 0 ? cfg.adc.rate_bits
                                      : rate_for_backoff(worst_row, delta);
  ModAdcParams params(rate, alpha, cfg.adc.dither);
  Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma).matrixL();
  double x_var = sigma.diagonal().mean();
  long block = cfg.design.block_len;

  auto records = run_trials(cfg, [&](long, Rng& rng) {
    long overloads = 0;
    double err2 = 0;
    for (long t = 0; t < block; ++t) {
      Eigen::VectorXd g(k);
      for (int i = 0; i < k; ++i) g[i] = rng.next_gaussian();
      Eigen::VectorXd x = chol * g;
      Eigen::VectorXd y(k), v(k);
      for (int i = 0; i < k; ++i) {
        FoldedSample fs = fold_sample(x[i], params, rng);
        y[i] = fs.y;
        v[i] = fs.v;
      }
      Eigen::VectorXd v_hat = if_decode(y, a, rate);
      bool bad = false;
      for (int i = 0; i < k; ++i)
        if (std::abs(v_hat[i] - v[i]) > 0.5) bad = true;
      if (bad) {
        ++overloads;
      } else {
        for (int i = 0; i < k; ++i) {
          double x_hat = (v_hat[i] + 0.5) / alpha;
          err2 += (x_hat - x[i]) * (x_hat - x[i]);
        }
      }
    }
    TrialRecord rec;
    rec.overload_count = overloads;
    rec.block_error = overloads > 0;
    rec.rate_bits = rate;
    if (!rec.block_error) {
      rec.conditional_mse = err2 / (static_cast<double>(block) * k);
      rec.snr_db = 10.0 * std::log10(x_var / rec.conditional_mse);
    }
    return rec;
  });

  IfRateReport report = rate_report(a, sigma, cfg.distortion);
  ExperimentSummary s = aggregate(cfg, rate, std::move(records));
  s.extras.emplace_back("delta", delta);
  s.extras.emplace_back("r_ifsc", report.r_ifsc);
  s.extras.emplace_back("r_bench", report.r_bench);
  s.extras.emplace_back("rate_gap", report.gap);
  return s;
}

ExperimentSummary run_spacetime(const ExperimentConfig& cfg) {
  const DesignSpec& d = cfg.design;
  double alpha = cfg.alpha_given ? cfg.adc.alpha
                                 : 1.0 / std::sqrt(12.0 * cfg.distortion);
  std::vector<Eigen::MatrixXd> cx = vector_autocov(cfg.source.model, d.order);
  SpaceTimeDesign design = st_design(cx, alpha, d.order, StSearch::lll);

  double delta = resolve_delta(d);
  double rate = cfg.adc.rate_bits > 0 ? cfg.adc.rate_bits
                                      : design.rate_ifsc + delta;
  ModAdcParams params(rate, alpha, cfg.adc.dither);
  double x_var = cx[0].diagonal().mean();

  StRunOptions opt;
  opt.init = InitMethod::genie;

  auto records = run_trials(cfg, [&](long, Rng& rng) {
    SamplePath path = gen_filtered_pair(cfg.source.model.taps_h,
                                        cfg.source.model.taps_g,
                                        d.block_len + d.order, rng);
    StStreamResult res = run_st_stream(path, params, design, opt, rng);
    TrialRecord rec;
    rec.block_error = res.block_error;
    rec.overload_count = res.overload_count;
    rec.rate_bits = rate;
    if (!res.block_error) {
      rec.conditional_mse = res.conditional_mse;
      rec.snr_db = 10.0 * std::log10(x_var / res.conditional_mse);
    }
    return rec;
  });

  MatrixPredictor clean = solve_matrix_predictor(cx, d.order);
  double max_var = 0;
  for (int i = 0; i < cx[0].rows(); ++i)
    max_var = std::max(max_var, cx[0](i, i));
  ExperimentSummary s = aggregate(cfg, rate, std::move(records));
  s.extras.emplace_back("delta", delta);
  s.extras.emplace_back("alpha", alpha);
  s.extras.emplace_back("r_slb", slb_vector(clean.error_cov, cfg.distortion));
  s.extras.emplace_back("r_ifsc", design.rate_ifsc);
  s.extras.emplace_back("r_naive",
                        naive_rate(alpha * alpha * max_var + 1.0 / 12.0, 0.0));
  return s;
}

struct OversampledSetup {
  OversampledConfig cfg;
  double delta = 0;
  double x_var = 0;
};

OversampledSetup resolve_oversampled(const ExperimentConfig& cfg) {
  OversampledSetup out;
  const DesignSpec& d = cfg.design;
  double l = static_cast<double>(cfg.source.model.oversampling);
  double var = scalar_variance(cfg.source);
  double delta = resolve_delta(d);
  double alpha, rate;
  if (cfg.adc.rate_bits > 0 && cfg.alpha_given) {
    rate = cfg.adc.rate_bits;
    alpha = cfg.adc.alpha;
  } else if (cfg.adc.rate_bits > 0) {
    // matched design: spend everything above the backoff on gain
    rate = cfg.adc.rate_bits;
    if (rate <= delta)
      fail("adc.rate_bits must exceed the backoff delta (" +
           std::to_string(delta) + ") for the matched design");
    double s = std::exp2(2.0 * l * (rate - delta)) - 1.0;
    alpha = std::sqrt(s / (12.0 * l * var));
  } else {
    alpha = cfg.adc.alpha;
    double s = 12.0 * alpha * alpha * l * var;
    rate = delta + std::log2(1.0 + s) / (2.0 * l);
  }
  out.cfg.oversampling = l;
  out.cfg.sigma_sq = var;
  out.cfg.rate_bits = rate;
  out.cfg.alpha = alpha;
  out.cfg.order = d.order;
  out.cfg.block_len = d.block_len;
  out.cfg.delta_bits = delta;
  out.delta = delta;
  out.x_var = var;
  return out;
}

ExperimentSummary run_oversampled_exp(const ExperimentConfig& cfg) {
  OversampledSetup setup = resolve_oversampled(cfg);
  const OversampledConfig& oc = setup.cfg;
  long n = cfg.design.block_len + cfg.design.order;

  auto records = run_trials(cfg, [&](long, Rng& rng) {
    SamplePath path = draw_scalar_path(cfg, n, rng);
    OversampledResult res = run_oversampled(path, oc, rng);
    TrialRecord rec;
    rec.block_error = res.block_error;
    rec.overload_count = res.overload_count;
    rec.rate_bits = oc.rate_bits;
    if (!res.block_error) {
      rec.conditional_mse = res.conditional_mse;
      rec.snr_db = res.snr_db;
    }
    return rec;
  });

  double s_gain = 12.0 * oc.alpha * oc.alpha * oc.oversampling * oc.sigma_sq;
  ExperimentSummary s = aggregate(cfg, oc.rate_bits, std::move(records));
  s.extras.emplace_back("delta", setup.delta);
  s.extras.emplace_back("alpha", oc.alpha);
  s.extras.emplace_back("snr_db_theory", 10.0 * std::log10(1.0 + s_gain));
  return s;
}

ExperimentSummary run_sigma_delta_compare(const ExperimentConfig& cfg) {
  if (cfg.adc.rate_bits <= 0)
    fail("sigma_delta_compare runs one rate at a time; set adc.rate_bits or "
         "drive it through rate_grid");
  ExperimentConfig sub = cfg;
  sub.alpha_given = false;  // the comparison always uses the matched gain
  OversampledSetup setup = resolve_oversampled(sub);
  const OversampledConfig& oc = setup.cfg;
  long n = cfg.design.block_len + cfg.design.order;

  SigmaDeltaConfig sd;
  sd.rate_bits = oc.rate_bits;
  sd.shaping_tap = optimal_shaping_tap(oc.oversampling);
  sd.oversampling = oc.oversampling;
  sd.sigma_sq = oc.sigma_sq;
  sd.delta_bits = oc.delta_bits;

  struct Pair {
    double sd_snr = 0;
    bool sd_sat = false;
  };
  std::vector<Pair> sd_out(cfg.trials);

  auto records = run_trials(cfg, [&](long t, Rng& rng) {
    SamplePath path = draw_scalar_path(cfg, n, rng);
    OversampledResult res = run_oversampled(path, oc, rng);
    // same samples through the baseline, on the power-of-two core
    SamplePath core;
    core.samples = path.samples.middleRows(cfg.design.order,
                                           cfg.design.block_len).eval();
    SigmaDeltaResult sres = run_sigma_delta(core, sd);
    sd_out[t].sd_snr = sres.snr_db;
    sd_out[t].sd_sat = sres.block_error;
    TrialRecord rec;
    rec.block_error = res.block_error;
    rec.overload_count = res.overload_count;
    rec.rate_bits = oc.rate_bits;
    if (!res.block_error) {
      rec.conditional_mse = res.conditional_mse;
      rec.snr_db = res.snr_db;
    }
    return rec;
  });

  double sd_snr_sum = 0;
  long sd_sat = 0;
  for (const Pair& p : sd_out) {
    sd_snr_sum += p.sd_snr;
    if (p.sd_sat) ++sd_sat;
  }
  double r_minus_delta = oc.rate_bits - oc.delta_bits;
  ExperimentSummary s = aggregate(cfg, oc.rate_bits, std::move(records));
  s.extras.emplace_back("r_minus_delta", r_minus_delta);
  s.extras.emplace_back(
      "snr_db_modadc_theory",
      10.0 * std::log10(std::exp2(2.0 * oc.oversampling * r_minus_delta)));
  s.extras.emplace_back("snr_db_modadc_sim", s.mean_snr_db);
  s.extras.emplace_back("snr_db_sigmadelta",
                        cfg.trials > 0 ? sd_snr_sum / cfg.trials : 0.0);
  s.extras.emplace_back("sigma_delta_saturated_trials",
                        static_cast<double>(sd_sat));
  return s;
}

ExperimentSummary run_ringosc_exp(const ExperimentConfig& cfg) {
  const RingSpec& ring = cfg.ring.value();
  const DesignSpec& d = cfg.design;
  double x_var = scalar_variance(cfg.source);
  double input_clip = ring.input_clip_sigmas * std::sqrt(x_var);

  AffineFrontend fe = ring.frontend;
  RingStats bundle;
  double search_pe = 0;
  bool searched = ring.do_search;
  if (ring.do_search) {
    RingDesign rd;
    rd.order = d.order;
    rd.half_width = d.half_width;
    rd.block_len = d.block_len;
    rd.eps = d.eps;
    rd.feas_margin = ring.feas_margin;
    rd.noise = d.noise;
    rd.stats_samples = ring.stats_samples;
    rd.pe_blocks = ring.pe_blocks;
    rd.input_clip_sigmas = ring.input_clip_sigmas;
    Rng srng = Rng::derive(cfg.master_seed, 0, "search");
    SearchResult res =
        search_ab(cfg.source.model, ring.profile, rd, ring.grid, srng);
    if (!res.feasible)
      std::fprintf(stderr,
                   "[ringosc] no feasible front end on the grid; running the "
                   "least-bad cell (p_e %.3g)\n",
                   res.p_e);
    fe = res.frontend;
    bundle = res.bundle;
    search_pe = res.p_e;
  } else {
    Rng drng = Rng::derive(cfg.master_seed, 0, "design");
    bundle = design_ring_bundle(cfg.source.model, ring.profile, fe, d.order,
                                d.half_width, d.noise, ring.stats_samples,
                                drng, input_clip);
  }

  double rate = ringosc_rate_bits(ring.profile);
  long n = d.block_len + d.order + 2L * d.half_width;
  auto records = run_trials(cfg, [&](long, Rng& rng) {
    SamplePath path = draw_scalar_path(cfg, n, rng);
    RingRunResult res = run_ringosc(path, ring.profile, fe, bundle, input_clip, rng);
    TrialRecord rec;
    rec.block_error = res.block_error;
    rec.overload_count = res.overload_count;
    rec.rate_bits = rate;
    if (!res.block_error) {
      rec.conditional_mse = res.conditional_mse;
      rec.snr_db = res.snr_db;
    }
    return rec;
  });

  ExperimentSummary s = aggregate(cfg, rate, std::move(records));
  s.extras.emplace_back("frontend_a", fe.a);
  s.extras.emplace_back("frontend_b", fe.b);
  s.extras.emplace_back("predictor_error_var", bundle.predictor.error_var);
  if (searched) s.extras.emplace_back("search_p_e", search_pe);
  return s;
}

}  // namespace

ExperimentSummary run_experiment(const ExperimentConfig& cfg) {
  if (cfg.acceptance)
    fail("acceptance configs run through run_to_files, not run_experiment");
  if (cfg.trials < 1) fail("trials must be >= 1");
  if (cfg.design.eps <= 0 || cfg.design.eps >= 1)
    fail("design.eps must lie in (0, 1)");
  switch (cfg.experiment) {
    case Experiment::temporal:
      return run_temporal_family(cfg, false);
    case Experiment::bounds_check:
      return run_temporal_family(cfg, true);
    case Experiment::spatial:
      return run_spatial(cfg);
    case Experiment::spacetime:
      return run_spacetime(cfg);
    case Experiment::oversampled:
      return run_oversampled_exp(cfg);
    case Experiment::sigma_delta_compare:
      return run_sigma_delta_compare(cfg);
    case Experiment::ringosc:
      return run_ringosc_exp(cfg);
  }
  fail("unhandled experiment");
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_trials_csv(const ExperimentSummary& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("cannot write '" + path + "'");
  out << "# schema=1\n";
  out << "trial_id,block_error,overload_count,conditional_mse,snr_db,rate_bits\n";
  for (const TrialRecord& r : s.records) {
    out << r.trial_id << ',' << (r.block_error ? 1 : 0) << ','
        << r.overload_count << ',';
    if (r.block_error)
      out << ",";  // conditional figures are undefined on a failed block
    else
      out << fmt(r.conditional_mse) << ',' << fmt(r.snr_db);
    out << ',' << fmt(r.rate_bits) << '\n';
  }
  if (!out) fail("write failed on '" + path + "'");
}

void write_summary_csv(const std::vector<ExperimentSummary>& rows,
                       const std::string& path, const std::string& axis_name,
                       const std::vector<double>& axis_values) {
  if (rows.empty()) fail("summary with no rows");
  if (!axis_name.empty() && axis_values.size() != rows.size())
    fail("axis values do not match the summary rows");
  std::ofstream out(path);
  if (!out) fail("cannot write '" + path + "'");
  out << "# schema=1\n";

  if (rows[0].experiment == Experiment::sigma_delta_compare) {
    out << "r_minus_delta,snr_db_modadc_theory,snr_db_modadc_sim,"
           "snr_db_sigmadelta,input_kind\n";
    for (const ExperimentSummary& s : rows) {
      double cols[4] = {0, 0, 0, 0};
      const char* names[4] = {"r_minus_delta", "snr_db_modadc_theory",
                              "snr_db_modadc_sim", "snr_db_sigmadelta"};
      for (int i = 0; i < 4; ++i)
        for (const auto& e : s.extras)
          if (e.first == names[i]) cols[i] = e.second;
      out << fmt(cols[0]) << ',' << fmt(cols[1]) << ',' << fmt(cols[2]) << ','
          << fmt(cols[3]) << ',' << s.input_kind << '\n';
    }
    if (!out) fail("write failed on '" + path + "'");
    return;
  }

  out << "experiment,input_kind,axis,axis_value,trials,block_errors,p_e,"
         "wilson_lo,wilson_hi,mean_conditional_mse,se_conditional_mse,"
         "mean_snr_db,rate_bits";
  for (const auto& e : rows[0].extras) out << ',' << e.first;
  out << '\n';
  for (size_t i = 0; i < rows.size(); ++i) {
    const ExperimentSummary& s = rows[i];
    out << experiment_name(s.experiment) << ',' << s.input_kind << ','
        << axis_name << ',';
    if (!axis_name.empty()) out << fmt(axis_values[i]);
    out << ',' << s.trials << ',' << s.block_errors << ',' << fmt(s.p_e) << ','
        << fmt(s.p_e_interval.lo) << ',' << fmt(s.p_e_interval.hi) << ','
        << fmt(s.mean_conditional_mse) << ',' << fmt(s.se_conditional_mse)
        << ',' << fmt(s.mean_snr_db) << ',' << fmt(s.rate_bits);
    for (const auto& e : rows[0].extras) {
      double v = 0;
      for (const auto& mine : s.extras)
        if (mine.first == e.first) v = mine.second;
      out << ',' << fmt(v);
    }
    out << '\n';
  }
  if (!out) fail("write failed on '" + path + "'");
}

ExperimentConfig apply_axis(const ExperimentConfig& cfg,
                            const std::string& axis, double value) {
  if (cfg.acceptance) fail("acceptance configs have no sweep axes");
  ExperimentConfig out = cfg;
  auto require_integral = [&](double v) {
    if (v < 1 || v != std::floor(v))
      fail("axis " + axis + " needs a positive integer, got " + fmt(v));
    return static_cast<long>(v);
  };
  if (axis == "rate_bits") {
    if (value <= 0) fail("axis rate_bits needs a positive value");
    out.adc.rate_bits = value;
    out.adc_given = true;
  } else if (axis == "alpha") {
    if (value <= 0) fail("axis alpha needs a positive value");
    out.adc.alpha = value;
    out.adc_given = true;
    out.alpha_given = true;
  } else if (axis == "delta") {
    if (value <= 0) fail("axis delta needs a positive value");
    out.design.delta_override = value;
  } else if (axis == "eps") {
    if (value <= 0 || value >= 1) fail("axis eps must lie in (0, 1)");
    out.design.eps = value;
  } else if (axis == "block_len") {
    out.design.block_len = require_integral(value);
  } else if (axis == "trials") {
    out.trials = require_integral(value);
  } else if (axis == "distortion") {
    if (value <= 0) fail("axis distortion needs a positive value");
    out.distortion = value;
  } else if (axis == "oversampling") {
    if (cfg.source.kind != "flat_band" && cfg.source.kind != "psd")
      fail("axis oversampling applies to flat_band or psd sources");
    out.source.model.oversampling = static_cast<int>(require_integral(value));
  } else if (axis == "n_inverters") {
    if (!out.ring) fail("axis n_inverters needs a ring block");
    long n = require_integral(value);
    if (n < 3) fail("axis n_inverters must be >= 3");
    out.ring->profile.n_inverters = static_cast<int>(n);
  } else if (axis == "frontend_a" || axis == "frontend_b") {
    if (!out.ring) fail("axis " + axis + " needs a ring block");
    if (out.ring->do_search)
      fail("axis " + axis + " conflicts with ring.search");
    if (axis == "frontend_a")
      out.ring->frontend.a = value;
    else if (value > 0)
      out.ring->frontend.b = value;
    else
      fail("axis frontend_b needs a positive value");
  } else {
    fail("unknown sweep axis '" + axis + "'");
  }
  return out;
}

int run_to_files(const ExperimentConfig& cfg) {
  try {
    if (cfg.acceptance) {
      const std::vector<CriterionResult> results = run_criteria(cfg.criteria);
      int failures = 0;
      for (const CriterionResult& r : results) failures += r.pass ? 0 : 1;
      if (!cfg.output_path.empty()) {
        const std::string path = cfg.output_path + ".acceptance.csv";
        std::FILE* f = std::fopen(path.c_str(), "w");
        if (!f) fail("cannot open " + path);
        std::fprintf(f, "# schema=1\ncriterion,pass,seconds,name\n");
        for (const CriterionResult& r : results)
          std::fprintf(f, "%d,%d,%.3f,%s\n", r.id, r.pass ? 1 : 0, r.seconds,
                       r.name.c_str());
        std::fclose(f);
      }
      return failures;
    }
    if (cfg.output_path.empty()) fail("config.output is required");
    std::vector<ExperimentSummary> rows;
    std::string axis_name;
    std::vector<double> axis_values;
    if (cfg.experiment == Experiment::sigma_delta_compare &&
        !cfg.rate_grid.empty()) {
      for (double r : cfg.rate_grid) {
        ExperimentConfig sub = cfg;
        sub.adc.rate_bits = r;
        sub.adc_given = true;
        rows.push_back(run_experiment(sub));
      }
      axis_name = "rate_bits";
      axis_values = cfg.rate_grid;
    } else {
      rows.push_back(run_experiment(cfg));
    }
    // one merged trial table; rows carry their own rate column
    ExperimentSummary merged = rows[0];
    for (size_t i = 1; i < rows.size(); ++i)
      merged.records.insert(merged.records.end(), rows[i].records.begin(),
                            rows[i].records.end());
    write_trials_csv(merged, cfg.output_path + ".trials.csv");
    write_summary_csv(rows, cfg.output_path + ".summary.csv", axis_name,
                      axis_values);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

int sweep_to_files(const ExperimentConfig& cfg, const std::string& axis,
                   const std::vector<double>& values) {
  try {
    if (cfg.acceptance) fail("acceptance configs have no sweep axes");
    if (cfg.output_path.empty()) fail("config.output is required");
    if (values.empty()) fail("sweep needs at least one axis value");
    std::vector<ExperimentSummary> rows;
    rows.reserve(values.size());
    for (double v : values) rows.push_back(run_experiment(apply_axis(cfg, axis, v)));
    write_summary_csv(rows, cfg.output_path + ".summary.csv", axis, values);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace modadc
