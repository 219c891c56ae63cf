#pragma once

#include <limits>
#include <span>
#include <string>
#include <vector>

#include "modadc/predict.hpp"
#include "modadc/rng.hpp"
#include "modadc/signals.hpp"

namespace modadc {

// Tabulated voltage to transition-rate curve, interpolated with a monotone
// cubic (shape preserving: a monotone table yields a monotone interpolant,
// and knots reproduce exactly). Evaluation clamps to the domain; callers
// that need to know about out-of-domain inputs clamp and count themselves.
class FCurve {
 public:
  FCurve() = default;
  // volts strictly increasing, rates positive, at least two knots
  FCurve(std::vector<double> volts, std::vector<double> hz);

  double operator()(double v) const;
  // central difference with a window of 1e-6 of the domain span
  double slope(double v) const;

  double v_min() const { return volts_.front(); }
  double v_max() const { return volts_.back(); }
  const std::vector<double>& volts() const { return volts_; }
  const std::vector<double>& hz() const { return hz_; }

 private:
  std::vector<double> volts_, hz_, tangents_;
};

// Synthetic saturating inverter profile: rate = f_max (v-vt)^2 /
// ((v-vt)^2 + vk^2) above the threshold, clamped to a small positive floor
// below it. Tabulated on a dense grid so the interpolant tracks the closed
// form.
FCurve default_f_curve();

// Two-column CSV "volts,hz" with an optional header line; needs at least 8
// rows and strictly increasing volts.
FCurve load_f_curve(const std::string& path);

struct RingOscProfile {
  int n_inverters = 3;  // odd, >= 3; one counter step per inverter flip
  FCurve f_curve;       // transition rate vs control voltage
  double sample_period = 1.0;  // seconds
};

// default_f_curve with a sample period that puts the full curve swing at
// about 45 transitions per sample
RingOscProfile default_profile(int n_inverters);

// the counter reports flips modulo 2N
double ringosc_rate_bits(const RingOscProfile& profile);

struct AffineFrontend {
  double a = 0.0;  // bias, volts
  double b = 0.0;  // volts per unit input
};

struct RingOscCodes {
  std::vector<int> codes;      // per sample, in {0 .. 2N-1}
  std::vector<double> true_v;  // unwrapped flip count per sample (integer
                               // valued; simulation bookkeeping)
  std::vector<double> z;       // phase residual floor(phi)-phi, closed form
                               // route only
  long input_clip_count = 0;
  long domain_clip_count = 0;
};

constexpr double kNoClip = std::numeric_limits<double>::infinity();

// Event-level route: holds the inverter ring and advances one flip at a
// time inside each constant-input sample interval. A flip landing within
// 1e-9 of a sample boundary counts in the closing sample, matching the
// floor convention of the accumulator route.
RingOscCodes simulate_states(const SamplePath& path,
                             const RingOscProfile& profile,
                             const AffineFrontend& fe,
                             double input_clip = kNoClip,
                             double initial_phase = 0.0);

// Accumulator route: phi_n = phi_0 + sum T_s rate_k, code n =
// (floor(phi_n) - floor(phi_{n-1})) mod 2N. Must match simulate_states
// sample for sample; also exposes the deterministic phase residual so the
// iid-uniform noise model can be checked against the truth.
RingOscCodes closed_form_output(const SamplePath& path,
                                const RingOscProfile& profile,
                                const AffineFrontend& fe,
                                double input_clip = kNoClip,
                                double initial_phase = 0.0);

// Decoder-side statistics for one frontend: predictor on the flip counts
// under the chosen counter-noise model, and the window smoother mapping
// recovered counts back to the input. Estimated from a Monte Carlo draw of
// the source.
struct RingStats {
  PredictorFilter predictor;  // mean set to E[T_s f(a + b x)]
  Smoother smoother;
  double mean_w = 0.0;  // E[T_s f(a + b x)]
  double w_var = 0.0;
  double x_var = 0.0;
};

RingStats design_ring_bundle(std::span<const double> x_samples,
                             const RingOscProfile& profile,
                             const AffineFrontend& fe, int order,
                             int half_width, NoiseModel nm,
                             double input_clip = kNoClip);

RingStats design_ring_bundle(const ProcessModel& model,
                             const RingOscProfile& profile,
                             const AffineFrontend& fe, int order,
                             int half_width, NoiseModel nm, long samples,
                             Rng& rng, double input_clip = kNoClip);

struct RingRunResult {
  std::vector<double> v_hat;  // recovered flip counts, one per decoded step
  std::vector<double> x_hat;  // smoother output
  long first_index = 0;       // path index of x_hat[0]
  bool block_error = false;
  long overload_count = 0;
  long input_clip_count = 0;
  long domain_clip_count = 0;
  double conditional_mse = 0.0;
  double snr_db = 0.0;
};

// Encode through the accumulator route with a random initial phase, seed
// the unwrapper with the first `order` true counts, decode the rest, then
// smooth. The smoother trims half_width samples at each end of the decoded
// range.
RingRunResult run_ringosc(const SamplePath& path, const RingOscProfile& profile,
                          const AffineFrontend& fe, const RingStats& bundle,
                          double input_clip, Rng& rng);

// Unwrap a code sequence around the predictor and smooth, given the first
// `order` true counts (oldest first). The building block under run_ringosc
// for callers that already hold codes.
struct RingDecodeOutput {
  std::vector<double> v_hat;
  std::vector<double> x_hat;
  long first_index = 0;  // index into `codes` of x_hat[0]
};
RingDecodeOutput ringosc_decode(const std::vector<int>& codes,
                                const RingOscProfile& profile,
                                const RingStats& bundle,
                                std::span<const double> init_v);

struct RingDesign {
  int order = 25;
  int half_width = 22;
  long block_len = 2048;
  double eps = 1e-3;          // block overload budget
  double feas_margin = 0.01;  // analytic screen must clear eps * margin
  NoiseModel noise = NoiseModel::ma1_uniform;
  long stats_samples = 1000000;
  long pe_blocks = 1000;
  double input_clip_sigmas = 4.0;
};

struct AbGrid {
  double a_lo = 0.0, a_hi = 0.0;  // linear in a
  int na = 16;
  double b_lo = 0.0, b_hi = 0.0;  // log spaced in b, b_lo > 0
  int nb = 24;
};

struct AbCell {
  AffineFrontend fe;
  double p_e = 1.0;  // observed block error rate, or the analytic screen
                     // value for cells the screen rejected
  double mse = 0.0;
  double snr_db = 0.0;
  bool feasible = false;
  bool screened_out = false;
};

struct SearchResult {
  AffineFrontend frontend;
  RingStats bundle;
  double p_e = 1.0;
  double mse = 0.0;
  double snr_db = 0.0;
  bool feasible = false;  // false: nothing passed, best-p_e cell attached
  std::vector<AbCell> cells;
};

// Evaluate the grid, keep cells whose analytic overload bound clears
// eps * feas_margin and whose observed block error count over pe_blocks is
// zero, pick the feasible cell with the smallest measured distortion, then
// refine once on a sub-grid around it. Shared per-block seeds across cells
// keep the comparison paired and the result deterministic.
SearchResult search_ab(const ProcessModel& model, const RingOscProfile& profile,
                       const RingDesign& design, const AbGrid& grid, Rng& rng);

}  // namespace modadc
