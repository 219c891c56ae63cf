#include "modadc/modcore.hpp"

#include <cmath>
#include <stdexcept>

namespace modadc {

namespace {
constexpr double kLatticeTol = 1e-9;  // relative to the modulo size
}

ModAdcParams::ModAdcParams(double rate_bits_, double alpha_, Dither dither_)
    : rate_bits(rate_bits_), alpha(alpha_), dither(dither_) {
  if (!(rate_bits > 0.0) || !std::isfinite(rate_bits))
    throw std::invalid_argument("rate_bits must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha))
    throw std::invalid_argument("alpha must be positive");
}

double ModAdcParams::modulo_size() const { return std::exp2(rate_bits); }

double mod_reduce(double x, double delta) {
  if (!std::isfinite(x)) throw std::invalid_argument("mod_reduce: x not finite");
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw std::invalid_argument("mod_reduce: delta must be positive");
  // fmod is exact; only the sign fixup can move the result
  double y = std::fmod(x, delta);
  if (y < 0.0) y += delta;
  if (y >= delta) y -= delta;
  const double tol = kLatticeTol * delta;
  if (y <= tol || delta - y <= tol) y = 0.0;
  return y;
}

double centered_mod(double y, double delta) {
  return mod_reduce(y + 0.5 * delta, delta) - 0.5 * delta;
}

AdcSample adc_sample(double x, const ModAdcParams& params, Rng& rng) {
  if (!std::isfinite(x)) throw std::invalid_argument("adc_sample: x not finite");
  double u = 0.0;
  if (params.dither == Dither::subtractive) u = rng.next_double();
  const double code =
      mod_reduce(std::floor(params.alpha * x + u), params.modulo_size());
  return {code, u};
}

FoldedSample fold_sample(double x, const ModAdcParams& params, Rng& rng) {
  const AdcSample s = adc_sample(x, params, rng);
  const double vi = std::floor(params.alpha * x + s.dither);
  if (params.dither == Dither::subtractive) {
    return {mod_reduce(s.code - s.dither, params.modulo_size()),
            vi - s.dither};
  }
  return {s.code, vi};
}

double chernoff_tail(const TailBoundInput& in) {
  if (!(in.sigma_eff_sq > 0.0) || !std::isfinite(in.sigma_eff_sq))
    throw std::invalid_argument("chernoff_tail: sigma_eff_sq must be positive");
  if (!(in.tau >= 0.0) || !std::isfinite(in.tau))
    throw std::invalid_argument("chernoff_tail: tau must be nonnegative");
  const double e = std::exp(-in.tau * in.tau / (2.0 * in.sigma_eff_sq));
  return e > 1.0 ? 1.0 : e;
}

double rate_for_backoff(double sigma_p_sq, double delta_bits) {
  if (!(sigma_p_sq > 0.0) || !std::isfinite(sigma_p_sq))
    throw std::invalid_argument("rate_for_backoff: sigma_p_sq must be positive");
  if (!std::isfinite(delta_bits))
    throw std::invalid_argument("rate_for_backoff: delta_bits not finite");
  return 0.5 * std::log2(12.0 * sigma_p_sq) + delta_bits;
}

double backoff_for_block(double block_len, double eps) {
  if (!(block_len >= 1.0))
    throw std::invalid_argument("backoff_for_block: block_len must be >= 1");
  if (!(eps > 0.0) || !(eps < 1.0))
    throw std::invalid_argument("backoff_for_block: eps must be in (0,1)");
  return 0.5 * std::log2((2.0 / 3.0) * std::log(2.0 * block_len / eps));
}

}  // namespace modadc
