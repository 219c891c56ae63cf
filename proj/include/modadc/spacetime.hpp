#pragma once

#include <Eigen/Dense>
#include <vector>

#include "modadc/iforce.hpp"
#include "modadc/modcore.hpp"
#include "modadc/predict.hpp"
#include "modadc/rng.hpp"
#include "modadc/signals.hpp"
#include "modadc/temporal.hpp"

namespace modadc {

// C_V[r] = alpha^2 C_X[r], plus (1/12) I at lag zero for the wrap noise
std::vector<Eigen::MatrixXd> quantized_block_autocov(
    const std::vector<Eigen::MatrixXd>& cx, double alpha);

enum class StSearch { exhaustive, lll };

// Joint decoder design for K parallel front ends: a matrix prediction
// filter in time, then integer row combinations across streams chosen to
// minimize the largest per-row unwrap variance.
struct SpaceTimeDesign {
  MatrixPredictor filter;   // taps H_1..H_p, mean -1/2 per stream
  Eigen::MatrixXd sigma_p;  // prediction error covariance of the filter
  IntegerMatrix a;          // row combinations applied before unwrapping
  double rate_ifsc = 0.0;   // max_k 0.5*log2(12 a_k' sigma_p a_k)
  std::vector<double> per_row_rates;

  int streams() const { return a.dim(); }
};

// x_blocks: C_X[r] = E[X_n X_{n-r}^T] for r = 0..at least `order`.
// exhaustive search enumerates integer rows up to |entry| <= 5 (K <= 4
// only); lll uses the reduced basis of the error covariance form.
SpaceTimeDesign st_design(const std::vector<Eigen::MatrixXd>& x_blocks,
                          double alpha, int order, StSearch search);

// Running state: ring buffer of the last p recovered vectors. The
// combination matrix must be full rank; its factorization is reused on
// every step.
class SpaceTimeDecoderState {
 public:
  SpaceTimeDecoderState(MatrixPredictor filter, IntegerMatrix a,
                        ModAdcParams params);

  // oldest first; size must equal the filter order, entries the stream count
  void init_history(const std::vector<Eigen::VectorXd>& v);
  bool initialized() const { return init_; }

  Eigen::VectorXd predict() const;
  void push(const Eigen::VectorXd& v);
  // replace the vector stored by the last push (truth injection in
  // simulation-only runs)
  void force_last(const Eigen::VectorXd& v);

  int streams() const { return a_.dim(); }
  int order() const { return static_cast<int>(filter_.taps.size()); }
  const MatrixPredictor& filter() const { return filter_; }
  const IntegerMatrix& combination() const { return a_; }
  const Eigen::PartialPivLU<Eigen::MatrixXd>& lu() const { return lu_; }
  const ModAdcParams& params() const { return params_; }

 private:
  MatrixPredictor filter_;
  IntegerMatrix a_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;  // of a_ cast to double
  ModAdcParams params_;
  std::vector<Eigen::VectorXd> hist_;  // ring, head_ is the most recent
  int head_ = 0;
  bool init_ = false;
};

struct StStepOutput {
  Eigen::VectorXd v_hat;
  Eigen::VectorXd x_hat;
};

// One decode step on the K folded values (dither already removed): form the
// prediction, reduce each integer row combination of (codes - prediction)
// into the centered window, undo the combinations, advance the history.
// Exact whenever every row combination of the true prediction error lies
// inside half the modulo size.
StStepOutput st_decode_step(SpaceTimeDecoderState& state,
                            const Eigen::VectorXd& codes);

struct StRunOptions {
  InitMethod init = InitMethod::genie;  // block_if is not supported here
  bool genie_history = false;
  double ramp_backoff = 2.0;
  double ramp_ratio_override = 0;
  // per-stream scalar autocovariances C_kk[r], ramp init only
  std::vector<std::vector<double>> x_autocov;
};

struct StStreamResult {
  Eigen::MatrixXd v_hat;  // one row per decoded sample, one column per stream
  Eigen::MatrixXd x_hat;
  long first_index = 0;
  bool block_error = false;
  double conditional_mse = 0.0;  // averaged over streams and samples
  long overload_count = 0;       // samples with any stream decoded wrong
  bool init_ok = true;
};

// Encode all K streams of the path internally (dither drawn stream by
// stream within each sample), initialize per options, then decode sample by
// sample with decision feedback. The ramp init runs the scalar gain
// schedule per stream, left-padded at the lowest gain so all streams
// consume the same prefix length.
StStreamResult run_st_stream(const SamplePath& path, const ModAdcParams& params,
                             const SpaceTimeDesign& design,
                             const StRunOptions& opt, Rng& rng);

// One-stream lower bound on the rate of any quantizer achieving the given
// distortion on each coordinate: 0.5*log2(|sigma_star|^(1/K) / D), with
// sigma_star the long-filter limit of the prediction error covariance of
// the clean process.
double slb_vector(const Eigen::MatrixXd& sigma_star, double distortion);

// Rate of a non-predictive uniform front end with the same overload
// criterion: 0.5*log2(12 var_v) + delta_bits, var_v the per-sample variance
// seen by the quantizer (alpha^2 Var(X) + 1/12).
double naive_rate(double var_v, double delta_bits);

}  // namespace modadc
