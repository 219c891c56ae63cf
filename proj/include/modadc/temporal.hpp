#pragma once

#include <span>
#include <vector>

#include "modadc/modcore.hpp"
#include "modadc/predict.hpp"
#include "modadc/rng.hpp"
#include "modadc/signals.hpp"

namespace modadc {

// Sample-by-sample decoder state: predicts the next quantized value from the
// last p recovered ones and unwraps the fold around that prediction.
class TemporalDecoderState {
 public:
  TemporalDecoderState(PredictorFilter filter, ModAdcParams params);

  // oldest first; size must equal the filter order
  void init_history(std::span<const double> v);
  bool initialized() const { return init_; }

  double predict() const;
  void push(double v);
  // replace the value stored by the last push (truth injection in
  // simulation-only runs)
  void force_last(double v);

  const PredictorFilter& filter() const { return filter_; }
  const ModAdcParams& params() const { return params_; }

 private:
  PredictorFilter filter_;
  ModAdcParams params_;
  std::vector<double> hist_;  // ring, head_ is the most recent entry
  int head_ = 0;
  bool init_ = false;
};

struct StepOutput {
  double v_hat;
  double x_hat;
};

// One decode step on a folded value with any dither already removed:
// unwraps y around the prediction, advances the history with the result.
// Exact whenever the true value lies within half the modulo size of the
// prediction and the history is correct.
StepOutput decode_step(TemporalDecoderState& state, double y);

enum class InitMethod { genie, ramp_alpha, block_if };

struct RunOptions {
  InitMethod init = InitMethod::genie;
  // predictor always sees the true past; isolates per-step overload
  // statistics from decision-feedback error propagation
  bool genie_history = false;
  double ramp_backoff = 2.0;       // backoff bits used to derive the schedule
  double ramp_ratio_override = 0;  // >0 forces a fixed geometric step
  int if_block = 0;                // block length for block_if, 0 = order+4
  std::vector<double> x_autocov;   // input autocovariance, ramp/block_if only
};

struct StreamResult {
  std::vector<double> v_hat;  // one entry per decoded sample
  std::vector<double> x_hat;
  long first_index = 0;  // path index of the first decoded sample
  bool block_error = false;
  double conditional_mse = 0.0;  // mean squared input error over the block
  std::vector<unsigned char> overload;  // per decoded sample, vs truth
  long overload_count = 0;
  bool init_ok = true;
};

// Encode the path internally (drawing dither from rng), initialize per
// options, then decode sample by sample with decision feedback.
StreamResult run_stream(const SamplePath& path, const ModAdcParams& params,
                        const PredictorFilter& filter, const RunOptions& opt,
                        Rng& rng);

struct RampResult {
  std::vector<double> history;  // recovered values at the final gain
  std::vector<double> true_v;   // matching truth, simulation bookkeeping
  std::vector<double> alphas;   // per-sample gain schedule actually used
  long consumed = 0;
};

// Per-sample gain schedule for the ramp initializer: starts low enough for
// predictor-free unwrapping, grows geometrically (half the predicted
// headroom per step, in log) as recovered samples extend the usable
// predictor order, ends with order-1 entries at the final gain.
// ratio_override > 0 replaces the derived steps with fixed-ratio ones
// (stress runs).
std::vector<double> ramp_schedule(const ModAdcParams& params,
                                  const std::vector<double>& x_autocov,
                                  double backoff_bits, int order,
                                  double ratio_override = 0.0);

// Bootstrap: encode the first samples along ramp_schedule, decoding each
// against a prediction from the already recovered prefix.
RampResult init_ramp_alpha(const SamplePath& path, const ModAdcParams& params,
                           const std::vector<double>& x_autocov,
                           double backoff_bits, int order, Rng& rng,
                           double ratio_override = 0.0);

struct BlockIfResult {
  std::vector<double> history;
  std::vector<double> true_v;
  long consumed = 0;
};

// Bootstrap: treat the first block_len samples as one correlated vector and
// unwrap it jointly through the integer-forcing decoder with a reduced-basis
// combination matrix; return the last `order` entries. Folding errors are
// silent here, as in the running decoder.
BlockIfResult init_block_if(const SamplePath& path, const ModAdcParams& params,
                            const std::vector<double>& x_autocov,
                            int block_len, int order, Rng& rng);

}  // namespace modadc
