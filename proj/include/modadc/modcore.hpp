#pragma once

#include "modadc/rng.hpp"

namespace modadc {

enum class Dither { none, subtractive };

// Front-end description: y = floor(alpha * x + u) reduced mod 2^rate_bits.
// rate_bits need not be an integer; the modulo size is 2^rate_bits.
struct ModAdcParams {
  double rate_bits = 1.0;
  double alpha = 1.0;
  Dither dither = Dither::none;

  ModAdcParams() = default;
  ModAdcParams(double rate_bits_, double alpha_, Dither dither_);

  double modulo_size() const;
};

struct AdcSample {
  double code;    // in [0, modulo size)
  double dither;  // u drawn for this sample, 0 when dithering is off
};

// x - delta*floor(x/delta), in [0, delta). Values within 1e-9*delta of a
// lattice point collapse to 0; comparisons against mod boundaries elsewhere
// use the same tolerance.
double mod_reduce(double x, double delta);

// Reduce into [-delta/2, delta/2).
double centered_mod(double y, double delta);

AdcSample adc_sample(double x, const ModAdcParams& params, Rng& rng);

// One encode as the decoder sees it: y has the dither already removed
// (still folded), v is the unfolded value the decoder aims to recover.
struct FoldedSample {
  double y;
  double v;
};

FoldedSample fold_sample(double x, const ModAdcParams& params, Rng& rng);

struct TailBoundInput {
  double sigma_eff_sq;  // sum of a_i^2 var_i over the independent terms
  double tau;
};

// One-sided bound exp(-tau^2 / (2 sigma_eff^2)) for a linear combination of
// independent zero-mean Gaussian and bounded-uniform terms, clamped to 1.
double chernoff_tail(const TailBoundInput& in);

// 0.5*log2(12 sigma_p^2) + delta_bits
double rate_for_backoff(double sigma_p_sq, double delta_bits);

// Backoff so that a length-T block survives with probability >= 1 - eps
// under the two-sided tail bound and a union over the T samples:
// 0.5*log2((2/3) * ln(2T/eps)).
double backoff_for_block(double block_len, double eps);

}  // namespace modadc
