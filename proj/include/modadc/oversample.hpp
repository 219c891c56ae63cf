#pragma once

#include <vector>

#include "modadc/modcore.hpp"
#include "modadc/predict.hpp"
#include "modadc/rng.hpp"
#include "modadc/signals.hpp"

namespace modadc {

// End to end oversampled pipeline settings. When built by
// design_operating_point the fields satisfy
// rate_bits = delta_bits + log2(1 + 12 alpha^2 L sigma_sq) / (2L).
struct OversampledConfig {
  double oversampling = 1.0;  // L, band edge at pi/L
  double sigma_sq = 1.0;      // input variance
  double rate_bits = 1.0;
  double alpha = 1.0;
  int order = 1;               // predictor order
  int smoother_halfwidth = 0;  // reserved for window smoothing; the block
                               // pipeline filters in the frequency domain
  long block_len = 0;
  double delta_bits = 0.0;  // backoff the config was designed for
};

struct OversampledResult {
  std::vector<double> x_lpf;  // filtered output, aligned with the decoded
                              // range of the path
  long first_index = 0;       // path index of x_lpf[0]
  bool block_error = false;
  long overload_count = 0;
  double conditional_mse = 0.0;  // vs the input, edges discarded
  double snr_db = 0.0;
  long discard = 0;  // samples skipped at each end of the decoded range
};

// Encode with the modulo front end, decode sample by sample against the
// flat-spectrum predictor (mismatched for any non-flat input by design),
// then apply the in-band Wiener gain as a brick wall over the whole block.
// The decoded length path.n() - cfg.order must be a power of two; the error
// metrics skip 5% of the block at each end.
OversampledResult run_oversampled(const SamplePath& path,
                                  const OversampledConfig& cfg, Rng& rng);

struct RdPoint {
  double rate_bits = 0.0;
  double snr_db = 0.0;
};

// Closed form rate needed for a distortion target at backoff delta_bits:
// R = delta + log2(sigma_sq / distortion) / (2L). Successive points trace a
// line of slope 6.02 L dB per bit.
RdPoint theoretical_rd(double oversampling, double sigma_sq,
                       double distortion, double delta_bits);

// Same curve entered through the front end gain, at the distortion the
// ideal pipeline reaches there: D = sigma_sq / (1 + 12 alpha^2 L sigma_sq).
RdPoint theoretical_rd_alpha(double oversampling, double sigma_sq,
                             double alpha, double delta_bits);

// First order error feedback baseline. The quantizer input is
// x_n - c * e_{n-1} with e the previous quantization error; its dynamic
// range is sized by the same backoff rule as the modulo front end, on the
// loop signal's standard deviation.
struct SigmaDeltaConfig {
  double rate_bits = 1.0;
  double shaping_tap = 0.0;   // c, |c| < 2
  double oversampling = 1.0;  // L
  double sigma_sq = 1.0;      // input variance, sizes the quantizer range
  double delta_bits = 0.0;    // no-saturation backoff on the loop signal
};

struct SigmaDeltaResult {
  std::vector<double> x_hat;  // in-band filtered quantizer output
  bool block_error = false;   // any saturation in the block
  long saturation_count = 0;
  double conditional_mse = 0.0;  // vs the input, edges discarded
  double snr_db = 0.0;
  double step = 0.0;  // quantizer step actually used
};

// Simulate the loop over one block and filter the quantizer output to the
// band. Saturation clamps to the outermost level and is counted; the block
// length must be a power of two.
SigmaDeltaResult run_sigma_delta(const SamplePath& path,
                                 const SigmaDeltaConfig& cfg);

// Tap minimizing the in-band shaped noise: c* = L sin(pi/L) / pi.
double optimal_shaping_tap(double oversampling);

// In-band power of the shaping response per unit quantization noise:
// (1/2pi) integral of |1 - c e^{-jw}|^2 over |w| <= pi/L, in closed form.
double shaped_inband_factor(double oversampling, double shaping_tap);

// Closed form in-band SNR of the loop under the white quantization noise
// model, including the loop variance inflation from the feedback.
double sigma_delta_theory_snr_db(const SigmaDeltaConfig& cfg);

// Zero every bin outside |w| <= pi/L and scale the kept ones; circular over
// the whole block, x.size() must be a power of two.
std::vector<double> brickwall_lowpass(const std::vector<double>& x,
                                      double oversampling, double gain);

struct OperatingPoint {
  OversampledConfig cfg;
  int iterations = 0;        // fixed point steps taken (0 when matching the
                             // pre-filter floor directly)
  double post_lpf_mse = 0;   // sigma_sq / (1 + 12 alpha^2 L sigma_sq)
};

// Pick (alpha, delta, R) for a distortion target over blocks of block_len
// samples with block overload budget eps. By default alpha puts the
// pre-filter error floor 1/(12 alpha^2) at target_d; with match_post_lpf
// the floor is walked by fixed point until the post-filter distortion hits
// target_d instead.
OperatingPoint design_operating_point(double oversampling, double sigma_sq,
                                      double target_d, long block_len,
                                      double eps, bool match_post_lpf = false);

}  // namespace modadc
