#include "modadc/temporal.hpp"

#include <cmath>
#include <stdexcept>

#include "modadc/iforce.hpp"

namespace modadc {

TemporalDecoderState::TemporalDecoderState(PredictorFilter filter,
                                           ModAdcParams params)
    : filter_(std::move(filter)),
      params_(params),
      hist_(filter_.order(), 0.0) {}

void TemporalDecoderState::init_history(std::span<const double> v) {
  if (static_cast<int>(v.size()) != filter_.order())
    throw std::invalid_argument(
        "init_history: need exactly one value per filter tap");
  for (size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i]))
      throw std::invalid_argument("init_history: non-finite history value");
    hist_[i] = v[i];
  }
  head_ = hist_.empty() ? 0 : static_cast<int>(hist_.size()) - 1;
  init_ = true;
}

double TemporalDecoderState::predict() const {
  if (!init_) throw std::logic_error("predict: history not initialized");
  const int p = filter_.order();
  const double mu = filter_.mean;
  double acc = mu;
  for (int i = 0; i < p; ++i) {
    int idx = head_ - i;
    if (idx < 0) idx += p;
    acc += filter_.taps[i] * (hist_[idx] - mu);
  }
  return acc;
}

void TemporalDecoderState::push(double v) {
  const int p = filter_.order();
  if (p == 0) return;
  head_ = (head_ + 1) % p;
  hist_[head_] = v;
}

void TemporalDecoderState::force_last(double v) {
  if (filter_.order() > 0) hist_[head_] = v;
}

StepOutput decode_step(TemporalDecoderState& state, double y) {
  if (!state.initialized())
    throw std::logic_error("decode_step: uninitialized state");
  const double delta = state.params().modulo_size();
  const double vp = state.predict();
  const double v = vp + centered_mod(y - vp, delta);
  const double x = (v + 0.5) / state.params().alpha;
  state.push(v);
  return {v, x};
}

std::vector<double> ramp_schedule(const ModAdcParams& params,
                                  const std::vector<double>& x_autocov,
                                  double backoff_bits, int order,
                                  double ratio_override) {
  if (order <= 0) throw std::invalid_argument("ramp_schedule: order must be > 0");
  if (static_cast<int>(x_autocov.size()) < order + 1)
    throw std::invalid_argument(
        "ramp_schedule: autocovariance shorter than the filter");
  const double budget =
      std::exp2(2.0 * (params.rate_bits - backoff_bits)) - 1.0;
  if (budget <= 0.0)
    throw std::invalid_argument(
        "ramp_schedule: no headroom at this rate and backoff");

  std::vector<PredictorFilter> xpred(order + 1);
  for (int q = 0; q <= order; ++q) xpred[q] = solve_predictor(x_autocov, q);
  auto allowed = [&](int q) {
    return std::sqrt(budget / (12.0 * xpred[q].error_var));
  };

  const double alpha_f = params.alpha;
  std::vector<double> alphas;
  double a = std::min(alpha_f, allowed(0));
  // regularization inside the order solves perturbs the headroom at the
  // last digit; snap so a feasible single-stage design stays single-stage
  if (a > alpha_f * (1.0 - 1e-9)) a = alpha_f;
  alphas.push_back(a);
  const double slack = std::exp2(0.125);
  while (a < alpha_f) {
    const int q = std::min<long>(static_cast<long>(alphas.size()), order);
    double next;
    if (ratio_override > 0.0) {
      next = std::min(alpha_f, a * ratio_override);
    } else {
      const double target = std::max(allowed(q), a);
      const double g = std::sqrt(a * target);
      next = (g * slack >= alpha_f) ? alpha_f : g;
      // stalled schedule: no prediction gain left below the final value,
      // step there and accept the reduced margin
      if (next <= a * (1.0 + 1e-12)) next = alpha_f;
    }
    a = next;
    alphas.push_back(a);
    if (static_cast<int>(alphas.size()) > 200 + 4 * order) {
      if (alphas.back() != alpha_f) alphas.push_back(alpha_f);
      break;
    }
  }
  for (int i = 1; i < order; ++i) alphas.push_back(alpha_f);
  return alphas;
}

RampResult init_ramp_alpha(const SamplePath& path, const ModAdcParams& params,
                           const std::vector<double>& x_autocov,
                           double backoff_bits, int order, Rng& rng,
                           double ratio_override) {
  if (order < 0) throw std::invalid_argument("init_ramp_alpha: order < 0");
  RampResult out;
  if (order == 0) return out;
  out.alphas =
      ramp_schedule(params, x_autocov, backoff_bits, order, ratio_override);
  std::vector<PredictorFilter> xpred(order + 1);
  for (int q = 0; q <= order; ++q) xpred[q] = solve_predictor(x_autocov, q);

  std::vector<double>& alphas = out.alphas;
  const long total = static_cast<long>(alphas.size());
  if (path.streams() != 1 || path.n() < total)
    throw std::invalid_argument("init_ramp_alpha: path too short");

  const double delta = params.modulo_size();
  std::vector<double> xh(total), vh(total), vt(total);
  for (long i = 0; i < total; ++i) {
    const ModAdcParams pi(params.rate_bits, alphas[i], params.dither);
    const FoldedSample e = fold_sample(path.x(i, 0), pi, rng);
    const int q = static_cast<int>(std::min<long>(i, order));
    double xp = 0.0;
    for (int t = 1; t <= q; ++t) xp += xpred[q].taps[t - 1] * xh[i - t];
    const double vp = alphas[i] * xp - 0.5;
    vh[i] = vp + centered_mod(e.y - vp, delta);
    xh[i] = (vh[i] + 0.5) / alphas[i];
    vt[i] = e.v;
  }
  out.history.assign(vh.end() - order, vh.end());
  out.true_v.assign(vt.end() - order, vt.end());
  out.consumed = total;
  return out;
}

BlockIfResult init_block_if(const SamplePath& path,
                            const ModAdcParams& params,
                            const std::vector<double>& x_autocov,
                            int block_len, int order, Rng& rng) {
  if (order < 0) throw std::invalid_argument("init_block_if: order < 0");
  BlockIfResult out;
  if (order == 0) return out;
  if (block_len <= order)
    throw std::invalid_argument(
        "init_block_if: block must be longer than the filter");
  if (static_cast<int>(x_autocov.size()) < block_len)
    throw std::invalid_argument(
        "init_block_if: autocovariance shorter than the block");
  if (path.streams() != 1 || path.n() < block_len)
    throw std::invalid_argument("init_block_if: path too short");

  const double a2 = 12.0 * params.alpha * params.alpha;
  Eigen::MatrixXd gram(block_len, block_len);
  for (int i = 0; i < block_len; ++i)
    for (int j = 0; j < block_len; ++j)
      gram(i, j) = a2 * x_autocov[std::abs(i - j)] + (i == j ? 1.0 : 0.0);
  const IntegerMatrix a = find_A_lll(gram);

  Eigen::VectorXd codes(block_len);
  std::vector<double> vt(block_len);
  for (int i = 0; i < block_len; ++i) {
    const FoldedSample e = fold_sample(path.x(i, 0), params, rng);
    codes(i) = e.y;
    vt[i] = e.v;
  }
  const Eigen::VectorXd vhat = if_decode(codes, a, params.rate_bits);
  out.history.resize(order);
  out.true_v.resize(order);
  for (int i = 0; i < order; ++i) {
    out.history[i] = vhat(block_len - order + i);
    out.true_v[i] = vt[block_len - order + i];
  }
  out.consumed = block_len;
  return out;
}

StreamResult run_stream(const SamplePath& path, const ModAdcParams& params,
                        const PredictorFilter& filter, const RunOptions& opt,
                        Rng& rng) {
  if (path.streams() != 1)
    throw std::invalid_argument("run_stream: scalar path required");
  const int p = filter.order();
  StreamResult res;

  std::vector<double> history(p);
  std::vector<double> init_truth(p);
  long consumed = 0;
  switch (opt.init) {
    case InitMethod::genie: {
      if (path.n() < p) throw std::invalid_argument("run_stream: path too short");
      for (int i = 0; i < p; ++i) {
        const FoldedSample e = fold_sample(path.x(i, 0), params, rng);
        history[i] = e.v;
        init_truth[i] = e.v;
      }
      consumed = p;
      break;
    }
    case InitMethod::ramp_alpha: {
      const RampResult r =
          init_ramp_alpha(path, params, opt.x_autocov, opt.ramp_backoff, p,
                          rng, opt.ramp_ratio_override);
      history = r.history;
      init_truth = r.true_v;
      consumed = r.consumed;
      break;
    }
    case InitMethod::block_if: {
      const int block = opt.if_block > 0 ? opt.if_block : p + 4;
      const BlockIfResult r =
          init_block_if(path, params, opt.x_autocov, block, p, rng);
      history = r.history;
      init_truth = r.true_v;
      consumed = r.consumed;
      break;
    }
  }
  for (int i = 0; i < p; ++i) {
    if (std::fabs(history[i] - init_truth[i]) > 0.5) res.init_ok = false;
  }

  TemporalDecoderState state(filter, params);
  state.init_history(history);

  const long n = path.n();
  res.first_index = consumed;
  res.v_hat.reserve(n - consumed);
  res.x_hat.reserve(n - consumed);
  res.overload.reserve(n - consumed);
  double se = 0.0;
  for (long i = consumed; i < n; ++i) {
    const double x = path.x(i, 0);
    const FoldedSample e = fold_sample(x, params, rng);
    const StepOutput o = decode_step(state, e.y);
    if (opt.genie_history) state.force_last(e.v);
    const bool bad = std::fabs(o.v_hat - e.v) > 0.5;
    res.v_hat.push_back(o.v_hat);
    res.x_hat.push_back(o.x_hat);
    res.overload.push_back(bad ? 1 : 0);
    if (bad) ++res.overload_count;
    se += (o.x_hat - x) * (o.x_hat - x);
  }
  const long decoded = n - consumed;
  res.conditional_mse = decoded > 0 ? se / decoded : 0.0;
  res.block_error = !res.init_ok || res.overload_count > 0;
  return res;
}

}  // namespace modadc
