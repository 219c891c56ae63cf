#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "modadc/iforce.hpp"
#include "modadc/modcore.hpp"
#include "modadc/predict.hpp"
#include "modadc/rng.hpp"
#include "modadc/signals.hpp"
#include "modadc/temporal.hpp"

using namespace modadc;

namespace {

std::vector<double> ar1_autocov(double rho, double var, int max_lag) {
  std::vector<double> c(max_lag + 1);
  for (int r = 0; r <= max_lag; ++r) c[r] = var * std::pow(rho, r);
  return c;
}

// design the quantized-domain predictor for an AR(1) input at a given gain
PredictorFilter ar1_v_predictor(double rho, double alpha, int p) {
  auto cv = quantized_autocov(ar1_autocov(rho, 1.0, p), alpha,
                              NoiseModel::white_uniform);
  PredictorFilter f = solve_predictor(cv, p);
  f.mean = -0.5;
  return f;
}

}  // namespace

TEST_CASE("single step recovers a hand-planted value") {
  // h=[0.9], previous value 10.0, current 10.5, modulo size 8: the
  // prediction error 1.55 sits well inside half the modulo size
  PredictorFilter f;
  f.taps = {0.9};
  f.mean = -0.5;
  ModAdcParams params(3.0, 2.0, Dither::none);
  TemporalDecoderState st(f, params);
  const double hist[] = {10.0};
  st.init_history(hist);
  CHECK(st.predict() == doctest::Approx(0.9 * 10.5 - 0.5));

  const double v_true = 10.5;
  const double y = mod_reduce(v_true, 8.0);
  const StepOutput o = decode_step(st, y);
  CHECK(o.v_hat == doctest::Approx(10.5).epsilon(1e-12));
  CHECK(o.x_hat == doctest::Approx(11.0 / 2.0).epsilon(1e-12));
}

TEST_CASE("order zero reduces to a centered unwrap around the mean") {
  PredictorFilter f;
  f.mean = -0.5;
  ModAdcParams params(4.0, 1.0, Dither::none);
  TemporalDecoderState st(f, params);
  st.init_history({});
  for (double y : {0.0, 3.7, 8.0, 12.2, 15.9}) {
    TemporalDecoderState fresh(f, params);
    fresh.init_history({});
    const StepOutput o = decode_step(fresh, y);
    CHECK(o.v_hat ==
          doctest::Approx(-0.5 + centered_mod(y + 0.5, 16.0)).epsilon(1e-12));
  }
}

TEST_CASE("recovery is exact inside the half-window and off by one fold past it") {
  Rng rng = Rng::derive(5100, 0, "exact");
  ModAdcParams params(4.6, 3.0, Dither::none);
  const double delta = params.modulo_size();
  for (int rep = 0; rep < 200; ++rep) {
    PredictorFilter f;
    f.mean = -0.5;
    std::vector<double> hist(3);
    for (int i = 0; i < 3; ++i) {
      f.taps.push_back(1.2 * (rng.next_double() - 0.5));
      hist[i] = 20.0 * (rng.next_double() - 0.5);
    }
    TemporalDecoderState st(f, params);
    st.init_history(hist);
    const double vp = st.predict();

    const bool inside = rep % 2 == 0;
    const double mag = inside ? 0.499 * delta : 0.501 * delta;
    const double sign = (rng.next_u64() & 1) ? 1.0 : -1.0;
    const double v_true = vp + sign * mag;
    const StepOutput o = decode_step(st, mod_reduce(v_true, delta));
    if (inside) {
      CHECK(std::fabs(o.v_hat - v_true) < 1e-8);
    } else {
      CHECK(std::fabs(o.v_hat - (v_true - sign * delta)) < 1e-8);
    }
  }
}

TEST_CASE("stepping an uninitialized state throws") {
  PredictorFilter f;
  f.taps = {0.5};
  TemporalDecoderState st(f, ModAdcParams(3.0, 1.0, Dither::none));
  CHECK_THROWS_AS(decode_step(st, 1.0), std::logic_error);
  CHECK_THROWS_AS(st.init_history(std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("per-step overload stays under the tail bound with true history") {
  // backoff 2 puts the per-step tail at 2exp(-24); a million steps should
  // never trip
  const double rho = 0.99;
  const int p = 8;
  const double alpha = 8.0;
  PredictorFilter f = ar1_v_predictor(rho, alpha, p);
  const double rate = rate_for_backoff(f.error_var, 2.0);
  ModAdcParams params(rate, alpha, Dither::subtractive);

  const long n = 1000000 + p;
  auto m = ProcessModel::autocov_seq(ar1_autocov(rho, 1.0, 4096));
  Rng gen = Rng::derive(5200, 0, "chpath");
  const SamplePath path = gen_gaussian(m, n, gen);

  RunOptions opt;
  opt.init = InitMethod::genie;
  opt.genie_history = true;
  Rng enc = Rng::derive(5200, 1, "chenc");
  const StreamResult r = run_stream(path, params, f, opt, enc);
  CHECK(r.overload_count == 0);
  CHECK_FALSE(r.block_error);
}

TEST_CASE("conditional error matches the dithered quantizer floor") {
  const double rho = 0.95;
  const int p = 16;
  const double alpha = 6.0;
  PredictorFilter f = ar1_v_predictor(rho, alpha, p);
  const double rate = rate_for_backoff(f.error_var, 2.0);
  ModAdcParams params(rate, alpha, Dither::subtractive);
  auto m = ProcessModel::autocov_seq(ar1_autocov(rho, 1.0, 2048));

  const int blocks = 400;
  const long t_len = 1024;
  double se_sum = 0.0;
  long n_cond = 0;
  int overloaded_blocks = 0;
  for (int b = 0; b < blocks; ++b) {
    Rng gen = Rng::derive(5300, b, "msepath");
    const SamplePath path = gen_gaussian(m, t_len + p, gen);
    RunOptions opt;
    Rng enc = Rng::derive(5300, b, "mseenc");
    const StreamResult r = run_stream(path, params, f, opt, enc);
    if (r.block_error) {
      ++overloaded_blocks;
      continue;
    }
    se_sum += r.conditional_mse * static_cast<double>(t_len);
    n_cond += t_len;
  }
  REQUIRE(n_cond > 0);
  const double mse = se_sum / n_cond;
  const double d_floor = 1.0 / (12.0 * alpha * alpha);
  // the error is uniform over one quantizer step wide 1/alpha, so the
  // sample mse concentrates hard around the floor
  const double se4 = d_floor * d_floor * (4.0 / 5.0);
  const double tol = 3.0 * std::sqrt(se4 / n_cond);
  CHECK(mse <= d_floor / (1.0 - 1e-3) + tol);
  CHECK(mse >= d_floor - 5.0 * tol);
  CHECK(overloaded_blocks < blocks / 10);
}

TEST_CASE("block error frequency holds at the design backoff") {
  // block design: eps 1e-3 at length 2048 gives backoff ~1.6717; over
  // 2000 blocks expect ~2 failures, assert mean + 3 sigma of the target
  const double rho = 0.95;
  const int p = 16;
  const double alpha = 6.0;
  PredictorFilter f = ar1_v_predictor(rho, alpha, p);
  const long t_len = 2048;
  const double delta_bits = backoff_for_block(static_cast<double>(t_len), 1e-3);
  const double rate = rate_for_backoff(f.error_var, delta_bits);
  ModAdcParams params(rate, alpha, Dither::subtractive);
  auto m = ProcessModel::autocov_seq(ar1_autocov(rho, 1.0, 2048));

  const int blocks = 2000;
  int bad = 0;
  for (int b = 0; b < blocks; ++b) {
    Rng gen = Rng::derive(5400, b, "blkpath");
    const SamplePath path = gen_gaussian(m, t_len + p, gen);
    RunOptions opt;
    Rng enc = Rng::derive(5400, b, "blkenc");
    const StreamResult r = run_stream(path, params, f, opt, enc);
    if (r.block_error) ++bad;
  }
  const double target = 1e-3 * blocks;
  CHECK(bad <= static_cast<int>(target + 3.0 * std::sqrt(target)) + 1);
}

TEST_CASE("gain ramp reaches the design point and recovers the history") {
  const double rho = 0.99;
  const int p = 4;
  const double alpha_f = 8.0;
  PredictorFilter f = ar1_v_predictor(rho, alpha_f, p);
  const double rate = rate_for_backoff(f.error_var, 2.0);
  ModAdcParams params(rate, alpha_f, Dither::subtractive);
  const auto cx = ar1_autocov(rho, 1.0, 64);
  auto m = ProcessModel::autocov_seq(ar1_autocov(rho, 1.0, 2048));

  int mismatches = 0;
  long max_consumed = 0;
  for (int t = 0; t < 1000; ++t) {
    Rng gen = Rng::derive(5500, t, "ramppath");
    const SamplePath path = gen_gaussian(m, 64, gen);
    Rng enc = Rng::derive(5500, t, "rampenc");
    const RampResult r =
        init_ramp_alpha(path, params, cx, 2.0, p, enc);
    max_consumed = std::max(max_consumed, r.consumed);
    for (int i = 0; i < p; ++i) {
      if (std::fabs(r.history[i] - r.true_v[i]) > 0.5) {
        ++mismatches;
        break;
      }
    }
    REQUIRE(r.alphas.back() == doctest::Approx(alpha_f));
    for (size_t i = 1; i < r.alphas.size(); ++i)
      CHECK(r.alphas[i] >= r.alphas[i - 1] - 1e-12);
  }
  CHECK(mismatches == 0);
  CHECK(max_consumed <= 12);
}

TEST_CASE("over-aggressive ramp steps are caught against ground truth") {
  // slowly-opening predictor: a band-limited process gains little per
  // added tap, so fixed factor-6 jumps overrun the usable headroom
  const int L = 3;
  const int p = 16;
  auto m = ProcessModel::flat_band(L, 1.0);
  const auto cx = autocov_from_model(m, 64);
  PredictorFilter f;
  {
    auto cv = quantized_autocov(cx, 40.0, NoiseModel::white_uniform);
    f = solve_predictor(cv, p);
    f.mean = -0.5;
  }
  const double rate = rate_for_backoff(f.error_var, 2.0);
  ModAdcParams params(rate, 40.0, Dither::subtractive);

  int mismatch_trials = 0;
  for (int t = 0; t < 300; ++t) {
    Rng gen = Rng::derive(5600, t, "aggpath");
    const SamplePath path = gen_gaussian(m, 128, gen);
    Rng enc = Rng::derive(5600, t, "aggenc");
    const RampResult r =
        init_ramp_alpha(path, params, cx, 2.0, p, enc, 6.0);
    for (int i = 0; i < p; ++i) {
      if (std::fabs(r.history[i] - r.true_v[i]) > 0.5) {
        ++mismatch_trials;
        break;
      }
    }
  }
  CHECK(mismatch_trials >= 5);
}

TEST_CASE("block unwrap init on a white input is a per-sample unwrap") {
  const int p = 4;
  const int block = 8;
  std::vector<double> cx(block, 0.0);
  cx[0] = 1.0;
  const double alpha = 2.0;
  ModAdcParams params(rate_for_backoff(alpha * alpha + 1.0 / 12.0, 2.0),
                      alpha, Dither::subtractive);
  auto m = ProcessModel::autocov_seq({1.0});

  for (int t = 0; t < 200; ++t) {
    Rng gen = Rng::derive(5700, t, "whpath");
    const SamplePath path = gen_gaussian(m, block, gen);
    Rng enc = Rng::derive(5700, t, "whenc");
    const BlockIfResult r = init_block_if(path, params, cx, block, p, enc);
    for (int i = 0; i < p; ++i)
      CHECK(std::fabs(r.history[i] - r.true_v[i]) < 1e-8);
  }
}

TEST_CASE("block unwrap init succeeds at its design rate on a slow process") {
  const double rho = 0.99;
  const int p = 4;
  const int block = 16;
  const double alpha = 8.0;
  const auto cx = ar1_autocov(rho, 1.0, block);

  // rate from the joint-unwrap row forms plus the block backoff
  Eigen::MatrixXd gram(block, block);
  const double a2 = 12.0 * alpha * alpha;
  for (int i = 0; i < block; ++i)
    for (int j = 0; j < block; ++j)
      gram(i, j) = a2 * cx[std::abs(i - j)] + (i == j ? 1.0 : 0.0);
  const auto a = find_A_lll(gram);
  double max_form = 0.0;
  for (int r = 0; r < block; ++r) {
    const Eigen::VectorXd row = a.entries.row(r).cast<double>().transpose();
    max_form = std::max(max_form, row.dot(gram * row));
  }
  const double rate = 0.5 * std::log2(max_form) + 1.6717;
  ModAdcParams params(rate, alpha, Dither::subtractive);
  auto m = ProcessModel::autocov_seq(ar1_autocov(rho, 1.0, 2048));

  int ok = 0;
  const int trials = 500;
  for (int t = 0; t < trials; ++t) {
    Rng gen = Rng::derive(5800, t, "bifpath");
    const SamplePath path = gen_gaussian(m, block, gen);
    Rng enc = Rng::derive(5800, t, "bifenc");
    const BlockIfResult r = init_block_if(path, params, cx, block, p, enc);
    bool good = true;
    for (int i = 0; i < p; ++i)
      if (std::fabs(r.history[i] - r.true_v[i]) > 0.5) good = false;
    if (good) ++ok;
  }
  CHECK(ok >= trials - trials / 100);
}

TEST_CASE("both init routes return the exact truth in a one-stage regime") {
  // design the gain low enough that the ramp needs no staging; then both
  // routes must hand back the true values for their own sample windows
  const double rho = 0.9;
  const int p = 3;
  const auto cx = ar1_autocov(rho, 1.0, 16);
  const double rate = 6.0;
  const double budget = std::exp2(2.0 * (rate - 3.0)) - 1.0;
  const double alpha_f = std::sqrt(budget / 12.0);  // allowed gain at order 0
  ModAdcParams params(rate, alpha_f, Dither::subtractive);
  auto m = ProcessModel::autocov_seq(ar1_autocov(rho, 1.0, 1024));

  for (int t = 0; t < 100; ++t) {
    Rng gen = Rng::derive(5900, t, "onestage");
    const SamplePath path = gen_gaussian(m, 16, gen);
    Rng enc_a = Rng::derive(5900, t, "oneenc");
    const RampResult ramp = init_ramp_alpha(path, params, cx, 3.0, p, enc_a);
    CHECK(ramp.consumed == p);
    for (int i = 0; i < p; ++i)
      CHECK(std::fabs(ramp.history[i] - ramp.true_v[i]) < 1e-8);

    Rng enc_b = Rng::derive(5900, t, "oneenc");
    const BlockIfResult bif = init_block_if(path, params, cx, p + 1, p, enc_b);
    for (int i = 0; i < p; ++i)
      CHECK(std::fabs(bif.history[i] - bif.true_v[i]) < 1e-8);
  }
}

TEST_CASE("feedback and true-history runs agree while nothing overloads") {
  const double rho = 0.95;
  const int p = 8;
  const double alpha = 5.0;
  PredictorFilter f = ar1_v_predictor(rho, alpha, p);
  ModAdcParams params(rate_for_backoff(f.error_var, 2.0), alpha,
                      Dither::subtractive);
  auto m = ProcessModel::autocov_seq(ar1_autocov(rho, 1.0, 2048));
  Rng gen = Rng::derive(6000, 0, "fbpath");
  const SamplePath path = gen_gaussian(m, 100000 + p, gen);

  RunOptions fb;
  RunOptions genie;
  genie.genie_history = true;
  Rng e1 = Rng::derive(6000, 1, "fbenc");
  Rng e2 = Rng::derive(6000, 1, "fbenc");
  const StreamResult a = run_stream(path, params, f, fb, e1);
  const StreamResult b = run_stream(path, params, f, genie, e2);
  REQUIRE(a.overload_count == 0);
  REQUIRE(b.overload_count == 0);
  double maxd = 0.0;
  for (size_t i = 0; i < a.v_hat.size(); ++i)
    maxd = std::max(maxd, std::fabs(a.v_hat[i] - b.v_hat[i]));
  CHECK(maxd < 1e-6);
}
