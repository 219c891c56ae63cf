#include "modadc/oversample.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

#include "modadc/fft.hpp"
#include "modadc/temporal.hpp"

namespace modadc {

namespace {

constexpr double kPi = 3.141592653589793238462643;

long integral_oversampling(double oversampling, const char* who) {
  const long l = std::lround(oversampling);
  if (l < 1 || std::abs(oversampling - static_cast<double>(l)) > 1e-9)
    throw std::invalid_argument(std::string(who) +
                                ": simulation needs an integer oversampling "
                                "factor");
  return l;
}

bool power_of_two(long n) { return n >= 2 && (n & (n - 1)) == 0; }

}  // namespace

std::vector<double> brickwall_lowpass(const std::vector<double>& x,
                                      double oversampling, double gain) {
  const long n = static_cast<long>(x.size());
  if (!power_of_two(n))
    throw std::invalid_argument("brickwall_lowpass: length must be a power of two");
  if (oversampling < 1.0)
    throw std::invalid_argument("brickwall_lowpass: oversampling must be >= 1");
  std::vector<std::complex<double>> a(x.begin(), x.end());
  fft_inplace(a, false);
  // bin k sits at w = 2 pi f / n with f = k mapped into (-n/2, n/2]; the
  // band edge bin itself is kept
  const double edge = static_cast<double>(n) / (2.0 * oversampling);
  for (long k = 0; k < n; ++k) {
    const double f = k <= n / 2 ? static_cast<double>(k)
                                : static_cast<double>(k) - static_cast<double>(n);
    if (std::abs(f) <= edge * (1.0 + 1e-12))
      a[k] *= gain;
    else
      a[k] = 0.0;
  }
  fft_inplace(a, true);
  std::vector<double> y(n);
  for (long i = 0; i < n; ++i) y[i] = a[i].real();
  return y;
}

OversampledResult run_oversampled(const SamplePath& path,
                                  const OversampledConfig& cfg, Rng& rng) {
  const long l = integral_oversampling(cfg.oversampling, "run_oversampled");
  if (path.streams() != 1)
    throw std::invalid_argument("run_oversampled: one stream expected");
  if (cfg.sigma_sq <= 0.0)
    throw std::invalid_argument("run_oversampled: variance must be positive");
  if (cfg.order < 1)
    throw std::invalid_argument("run_oversampled: predictor order must be positive");
  const long t = path.n() - cfg.order;
  if (t < 16 || !power_of_two(t))
    throw std::invalid_argument(
        "run_oversampled: decoded length path.n() - order must be a power of "
        "two, at least 16");

  const ModAdcParams params(cfg.rate_bits, cfg.alpha, Dither::subtractive);
  const PredictorFilter filter =
      flat_spectrum_predictor(static_cast<int>(l), cfg.alpha, cfg.sigma_sq,
                              cfg.order, NoiseModel::white_uniform);
  RunOptions opt;  // genie start: the first `order` samples seed the history
  const StreamResult res = run_stream(path, params, filter, opt, rng);

  OversampledResult out;
  out.first_index = res.first_index;
  out.block_error = res.block_error;
  out.overload_count = res.overload_count;
  const LpfSpec lpf =
      ideal_lpf_gain(static_cast<int>(l), cfg.alpha, cfg.sigma_sq);
  out.x_lpf = brickwall_lowpass(res.x_hat, cfg.oversampling, lpf.gain);
  out.discard = t / 20;
  double se = 0.0;
  long cnt = 0;
  for (long i = out.discard; i < t - out.discard; ++i) {
    const double d = out.x_lpf[i] - path.x(res.first_index + i, 0);
    se += d * d;
    ++cnt;
  }
  out.conditional_mse = se / static_cast<double>(cnt);
  out.snr_db = 10.0 * std::log10(cfg.sigma_sq / out.conditional_mse);
  return out;
}

RdPoint theoretical_rd(double oversampling, double sigma_sq, double distortion,
                       double delta_bits) {
  if (oversampling < 1.0 || sigma_sq <= 0.0)
    throw std::invalid_argument("theoretical_rd: bad parameters");
  if (distortion <= 0.0 || distortion >= sigma_sq)
    throw std::invalid_argument(
        "theoretical_rd: distortion must be inside (0, sigma_sq)");
  RdPoint p;
  p.rate_bits =
      delta_bits + std::log2(sigma_sq / distortion) / (2.0 * oversampling);
  p.snr_db = 10.0 * std::log10(sigma_sq / distortion);
  return p;
}

RdPoint theoretical_rd_alpha(double oversampling, double sigma_sq, double alpha,
                             double delta_bits) {
  if (alpha <= 0.0)
    throw std::invalid_argument("theoretical_rd_alpha: gain must be positive");
  const double s = 12.0 * alpha * alpha * oversampling * sigma_sq;
  return theoretical_rd(oversampling, sigma_sq, sigma_sq / (1.0 + s),
                        delta_bits);
}

double optimal_shaping_tap(double oversampling) {
  if (oversampling < 1.0)
    throw std::invalid_argument("optimal_shaping_tap: oversampling must be >= 1");
  return oversampling * std::sin(kPi / oversampling) / kPi;
}

double shaped_inband_factor(double oversampling, double shaping_tap) {
  if (oversampling < 1.0)
    throw std::invalid_argument("shaped_inband_factor: oversampling must be >= 1");
  const double c = shaping_tap;
  return (1.0 + c * c) / oversampling -
         (2.0 * c / kPi) * std::sin(kPi / oversampling);
}

namespace {

// sigma_q^2 = loop_var * 4^(delta - R) with the loop variance inflated by
// the fed back noise: loop_var = sigma_sq / (1 - c^2 4^(delta - R))
double sigma_delta_noise_var(const SigmaDeltaConfig& cfg) {
  const double shrink = cfg.shaping_tap * cfg.shaping_tap *
                        std::exp2(2.0 * (cfg.delta_bits - cfg.rate_bits));
  if (shrink >= 1.0)
    throw std::invalid_argument(
        "sigma_delta: shaping feedback exceeds the rate budget");
  const double loop_var = cfg.sigma_sq / (1.0 - shrink);
  return loop_var * std::exp2(2.0 * (cfg.delta_bits - cfg.rate_bits));
}

}  // namespace

double sigma_delta_theory_snr_db(const SigmaDeltaConfig& cfg) {
  const double inband = sigma_delta_noise_var(cfg) *
                        shaped_inband_factor(cfg.oversampling, cfg.shaping_tap);
  return 10.0 * std::log10(cfg.sigma_sq / inband);
}

SigmaDeltaResult run_sigma_delta(const SamplePath& path,
                                 const SigmaDeltaConfig& cfg) {
  integral_oversampling(cfg.oversampling, "run_sigma_delta");
  if (std::abs(cfg.shaping_tap) >= 2.0)
    throw std::invalid_argument("run_sigma_delta: |shaping tap| must be < 2");
  if (cfg.sigma_sq <= 0.0)
    throw std::invalid_argument("run_sigma_delta: variance must be positive");
  if (cfg.rate_bits <= 0.0)
    throw std::invalid_argument("run_sigma_delta: rate must be positive");
  if (path.streams() != 1)
    throw std::invalid_argument("run_sigma_delta: one stream expected");
  const long n = path.n();
  if (!power_of_two(n))
    throw std::invalid_argument(
        "run_sigma_delta: block length must be a power of two");

  const double loop_sd =
      std::sqrt(cfg.sigma_sq + cfg.shaping_tap * cfg.shaping_tap *
                                   sigma_delta_noise_var(cfg));
  const double range = std::sqrt(12.0) * loop_sd * std::exp2(cfg.delta_bits);
  const double step = range * std::exp2(-cfg.rate_bits);
  const double top = range / 2.0;
  const double lim = top - step / 2.0;  // outermost midrise level

  SigmaDeltaResult out;
  out.step = step;
  std::vector<double> quantized(n);
  double e_prev = 0.0;
  for (long i = 0; i < n; ++i) {
    const double u = path.x(i, 0) - cfg.shaping_tap * e_prev;
    if (std::abs(u) > top) ++out.saturation_count;
    const double q =
        std::clamp((std::floor(u / step) + 0.5) * step, -lim, lim);
    e_prev = q - u;
    quantized[i] = q;
  }
  out.block_error = out.saturation_count > 0;
  out.x_hat = brickwall_lowpass(quantized, cfg.oversampling, 1.0);
  const long discard = n / 20;
  double se = 0.0;
  long cnt = 0;
  for (long i = discard; i < n - discard; ++i) {
    const double d = out.x_hat[i] - path.x(i, 0);
    se += d * d;
    ++cnt;
  }
  out.conditional_mse = se / static_cast<double>(cnt);
  out.snr_db = 10.0 * std::log10(cfg.sigma_sq / out.conditional_mse);
  return out;
}

OperatingPoint design_operating_point(double oversampling, double sigma_sq,
                                      double target_d, long block_len,
                                      double eps, bool match_post_lpf) {
  if (oversampling < 1.0 || sigma_sq <= 0.0 || block_len < 1 || eps <= 0.0 ||
      eps >= 1.0)
    throw std::invalid_argument("design_operating_point: bad parameters");
  if (target_d <= 0.0 || target_d >= sigma_sq)
    throw std::invalid_argument(
        "design_operating_point: target distortion must be inside (0, "
        "sigma_sq)");
  double pre = target_d;
  int iters = 0;
  if (match_post_lpf) {
    // per-step distortion pre yields sigma_sq / (1 + L sigma_sq / pre)
    // after the filter; rescale pre until that lands on the target. The
    // map contracts by target_d / sigma_sq per step.
    for (; iters < 60; ++iters) {
      const double post = sigma_sq / (1.0 + oversampling * sigma_sq / pre);
      if (std::abs(post - target_d) <= 1e-10 * target_d) break;
      pre *= target_d / post;
    }
  }
  OperatingPoint out;
  out.cfg.oversampling = oversampling;
  out.cfg.sigma_sq = sigma_sq;
  out.cfg.alpha = 1.0 / std::sqrt(12.0 * pre);
  out.cfg.delta_bits = backoff_for_block(block_len, eps);
  const double s = 12.0 * out.cfg.alpha * out.cfg.alpha * oversampling * sigma_sq;
  out.cfg.rate_bits =
      out.cfg.delta_bits + std::log2(1.0 + s) / (2.0 * oversampling);
  out.cfg.block_len = block_len;
  out.cfg.order = 64;
  out.iterations = iters;
  out.post_lpf_mse = sigma_sq / (1.0 + s);
  return out;
}

}  // namespace modadc
