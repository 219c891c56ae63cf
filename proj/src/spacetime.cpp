#include "modadc/spacetime.hpp"

#include <cmath>
#include <stdexcept>

namespace modadc {

std::vector<Eigen::MatrixXd> quantized_block_autocov(
    const std::vector<Eigen::MatrixXd>& cx, double alpha) {
  if (cx.empty())
    throw std::invalid_argument("quantized_block_autocov: no blocks");
  const int k = static_cast<int>(cx[0].rows());
  std::vector<Eigen::MatrixXd> out;
  out.reserve(cx.size());
  for (const auto& b : cx) {
    if (b.rows() != k || b.cols() != k)
      throw std::invalid_argument("quantized_block_autocov: ragged blocks");
    out.push_back(alpha * alpha * b);
  }
  out[0] += Eigen::MatrixXd::Identity(k, k) / 12.0;
  return out;
}

SpaceTimeDesign st_design(const std::vector<Eigen::MatrixXd>& x_blocks,
                          double alpha, int order, StSearch search) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("st_design: alpha must be positive");
  const std::vector<Eigen::MatrixXd> v_blocks =
      quantized_block_autocov(x_blocks, alpha);
  const int k = static_cast<int>(v_blocks[0].rows());

  SpaceTimeDesign d;
  d.filter = solve_matrix_predictor(v_blocks, order);
  d.filter.mean = Eigen::VectorXd::Constant(k, -0.5);
  d.sigma_p = d.filter.error_cov;

  const Eigen::MatrixXd gram = 12.0 * d.sigma_p;
  d.a = search == StSearch::exhaustive ? find_A_exhaustive(gram, 5)
                                       : find_A_lll(gram);
  d.per_row_rates.resize(k);
  d.rate_ifsc = 0.0;
  for (int r = 0; r < k; ++r) {
    const Eigen::VectorXd row = d.a.entries.row(r).cast<double>().transpose();
    const double form = row.dot(gram * row);
    d.per_row_rates[r] = 0.5 * std::log2(form);
    if (d.per_row_rates[r] > d.rate_ifsc || r == 0)
      d.rate_ifsc = d.per_row_rates[r];
  }
  return d;
}

SpaceTimeDecoderState::SpaceTimeDecoderState(MatrixPredictor filter,
                                             IntegerMatrix a,
                                             ModAdcParams params)
    : filter_(std::move(filter)), a_(std::move(a)), params_(params) {
  const int k = a_.dim();
  if (k <= 0) throw std::invalid_argument("decoder state: empty combination");
  if (a_.det_abs == 0)
    throw std::invalid_argument("decoder state: combination not full rank");
  if (filter_.mean.size() != k)
    throw std::invalid_argument("decoder state: mean size != stream count");
  for (const auto& h : filter_.taps)
    if (h.rows() != k || h.cols() != k)
      throw std::invalid_argument("decoder state: tap size != stream count");
  lu_.compute(a_.entries.cast<double>());
  hist_.assign(filter_.taps.size(), Eigen::VectorXd::Zero(k));
}

void SpaceTimeDecoderState::init_history(
    const std::vector<Eigen::VectorXd>& v) {
  if (static_cast<int>(v.size()) != order())
    throw std::invalid_argument(
        "init_history: need exactly one vector per filter tap");
  for (size_t i = 0; i < v.size(); ++i) {
    if (v[i].size() != streams())
      throw std::invalid_argument("init_history: wrong vector length");
    if (!v[i].allFinite())
      throw std::invalid_argument("init_history: non-finite history value");
    hist_[i] = v[i];
  }
  head_ = hist_.empty() ? 0 : static_cast<int>(hist_.size()) - 1;
  init_ = true;
}

Eigen::VectorXd SpaceTimeDecoderState::predict() const {
  if (!init_) throw std::logic_error("predict: history not initialized");
  const int p = order();
  Eigen::VectorXd acc = filter_.mean;
  for (int i = 0; i < p; ++i) {
    int idx = head_ - i;
    if (idx < 0) idx += p;
    acc += filter_.taps[i] * (hist_[idx] - filter_.mean);
  }
  return acc;
}

void SpaceTimeDecoderState::push(const Eigen::VectorXd& v) {
  const int p = order();
  if (p == 0) return;
  head_ = (head_ + 1) % p;
  hist_[head_] = v;
}

void SpaceTimeDecoderState::force_last(const Eigen::VectorXd& v) {
  if (order() > 0) hist_[head_] = v;
}

StStepOutput st_decode_step(SpaceTimeDecoderState& state,
                            const Eigen::VectorXd& codes) {
  if (!state.initialized())
    throw std::logic_error("st_decode_step: uninitialized state");
  const int k = state.streams();
  if (codes.size() != k)
    throw std::invalid_argument("st_decode_step: wrong code vector length");
  const double delta = state.params().modulo_size();
  const Eigen::VectorXd vp = state.predict();

  // row combinations commute with the fold, so reducing the combined
  // differences once equals combining per-stream reduced differences
  Eigen::VectorXd gt(k);
  for (int r = 0; r < k; ++r) {
    double s = 0.0;
    for (int j = 0; j < k; ++j)
      s += static_cast<double>(state.combination().entries(r, j)) *
           (codes(j) - vp(j));
    gt(r) = centered_mod(s, delta);
  }

  StStepOutput out;
  out.v_hat = vp + state.lu().solve(gt);
  out.x_hat = (out.v_hat.array() + 0.5) / state.params().alpha;
  state.push(out.v_hat);
  return out;
}

namespace {

struct StInit {
  std::vector<Eigen::VectorXd> history;
  std::vector<Eigen::VectorXd> truth;
  long consumed = 0;
};

StInit st_init_genie(const SamplePath& path, const ModAdcParams& params,
                     int order, Rng& rng) {
  StInit out;
  const int k = path.streams();
  if (path.n() < order)
    throw std::invalid_argument("run_st_stream: path too short");
  for (int i = 0; i < order; ++i) {
    Eigen::VectorXd v(k);
    for (int s = 0; s < k; ++s) v(s) = fold_sample(path.x(i, s), params, rng).v;
    out.history.push_back(v);
    out.truth.push_back(v);
  }
  out.consumed = order;
  return out;
}

StInit st_init_ramp(const SamplePath& path, const ModAdcParams& params,
                    const StRunOptions& opt, int order, Rng& rng) {
  const int k = path.streams();
  if (static_cast<int>(opt.x_autocov.size()) != k)
    throw std::invalid_argument(
        "run_st_stream: need one scalar autocovariance per stream");

  std::vector<std::vector<double>> sched(k);
  std::vector<std::vector<PredictorFilter>> xpred(k);
  long total = 0;
  for (int s = 0; s < k; ++s) {
    sched[s] = ramp_schedule(params, opt.x_autocov[s], opt.ramp_backoff, order,
                             opt.ramp_ratio_override);
    total = std::max(total, static_cast<long>(sched[s].size()));
    xpred[s].resize(order + 1);
    for (int q = 0; q <= order; ++q)
      xpred[s][q] = solve_predictor(opt.x_autocov[s], q);
  }
  if (path.n() < total)
    throw std::invalid_argument("run_st_stream: path too short");

  const double delta = params.modulo_size();
  Eigen::MatrixXd xh(total, k);
  Eigen::MatrixXd vh(total, k);
  Eigen::MatrixXd vt(total, k);
  for (long i = 0; i < total; ++i) {
    for (int s = 0; s < k; ++s) {
      // shorter schedules hold their lowest gain while longer ones catch up
      const long pad = total - static_cast<long>(sched[s].size());
      const double ai = i < pad ? sched[s].front() : sched[s][i - pad];
      const ModAdcParams pi(params.rate_bits, ai, params.dither);
      const FoldedSample e = fold_sample(path.x(i, s), pi, rng);
      const int q = static_cast<int>(std::min<long>(i, order));
      double xp = 0.0;
      for (int t = 1; t <= q; ++t)
        xp += xpred[s][q].taps[t - 1] * xh(i - t, s);
      const double vp = ai * xp - 0.5;
      vh(i, s) = vp + centered_mod(e.y - vp, delta);
      xh(i, s) = (vh(i, s) + 0.5) / ai;
      vt(i, s) = e.v;
    }
  }

  StInit out;
  for (long i = total - order; i < total; ++i) {
    out.history.push_back(vh.row(i).transpose());
    out.truth.push_back(vt.row(i).transpose());
  }
  out.consumed = total;
  return out;
}

}  // namespace

StStreamResult run_st_stream(const SamplePath& path, const ModAdcParams& params,
                             const SpaceTimeDesign& design,
                             const StRunOptions& opt, Rng& rng) {
  const int k = design.streams();
  if (path.streams() != k)
    throw std::invalid_argument("run_st_stream: stream count mismatch");
  const int p = static_cast<int>(design.filter.taps.size());

  StInit init;
  switch (opt.init) {
    case InitMethod::genie:
      init = st_init_genie(path, params, p, rng);
      break;
    case InitMethod::ramp_alpha:
      init = st_init_ramp(path, params, opt, p, rng);
      break;
    case InitMethod::block_if:
      throw std::invalid_argument(
          "run_st_stream: joint block unwrap init is not provided");
  }

  StStreamResult res;
  for (int i = 0; i < p; ++i)
    for (int s = 0; s < k; ++s)
      if (std::fabs(init.history[i](s) - init.truth[i](s)) > 0.5)
        res.init_ok = false;

  SpaceTimeDecoderState state(design.filter, design.a, params);
  state.init_history(init.history);

  const long n = path.n();
  res.first_index = init.consumed;
  const long decoded = n - init.consumed;
  res.v_hat.resize(decoded, k);
  res.x_hat.resize(decoded, k);
  double se = 0.0;
  Eigen::VectorXd codes(k), truth(k), xs(k);
  for (long i = init.consumed; i < n; ++i) {
    for (int s = 0; s < k; ++s) {
      xs(s) = path.x(i, s);
      const FoldedSample e = fold_sample(xs(s), params, rng);
      codes(s) = e.y;
      truth(s) = e.v;
    }
    const StStepOutput o = st_decode_step(state, codes);
    if (opt.genie_history) state.force_last(truth);
    bool bad = false;
    for (int s = 0; s < k; ++s) {
      if (std::fabs(o.v_hat(s) - truth(s)) > 0.5) bad = true;
      se += (o.x_hat(s) - xs(s)) * (o.x_hat(s) - xs(s));
    }
    const long row = i - init.consumed;
    res.v_hat.row(row) = o.v_hat.transpose();
    res.x_hat.row(row) = o.x_hat.transpose();
    if (bad) ++res.overload_count;
  }
  res.conditional_mse = decoded > 0 ? se / (decoded * k) : 0.0;
  res.block_error = !res.init_ok || res.overload_count > 0;
  return res;
}

double slb_vector(const Eigen::MatrixXd& sigma_star, double distortion) {
  if (sigma_star.rows() != sigma_star.cols() || sigma_star.rows() == 0)
    throw std::invalid_argument("slb_vector: need a square covariance");
  if (!(distortion > 0.0))
    throw std::invalid_argument("slb_vector: distortion must be positive");
  const double det = sigma_star.determinant();
  if (!(det > 0.0))
    throw std::invalid_argument("slb_vector: covariance is not regular");
  const double k = static_cast<double>(sigma_star.rows());
  return 0.5 * std::log2(std::pow(det, 1.0 / k) / distortion);
}

double naive_rate(double var_v, double delta_bits) {
  if (!(var_v > 0.0))
    throw std::invalid_argument("naive_rate: variance must be positive");
  return 0.5 * std::log2(12.0 * var_v) + delta_bits;
}

}  // namespace modadc
