#include "modadc/predict.hpp"

#include <cmath>
#include <stdexcept>

#include "modadc/signals.hpp"

namespace modadc {

namespace {
constexpr double kRidge = 1e-10;
}

std::vector<double> noise_autocov(NoiseModel nm, int max_lag) {
  if (max_lag < 0) throw std::invalid_argument("noise_autocov: negative lag");
  std::vector<double> c(static_cast<std::size_t>(max_lag) + 1, 0.0);
  switch (nm) {
    case NoiseModel::white_uniform:
      c[0] = 1.0 / 12.0;
      break;
    case NoiseModel::ma1_uniform:
      c[0] = 1.0 / 6.0;
      if (max_lag >= 1) c[1] = -1.0 / 12.0;
      break;
  }
  return c;
}

std::vector<double> quantized_autocov(const std::vector<double>& cx,
                                      double alpha, NoiseModel nm) {
  if (cx.empty()) throw std::invalid_argument("quantized_autocov: empty autocov");
  if (!(alpha > 0.0)) throw std::invalid_argument("quantized_autocov: alpha");
  const auto cz = noise_autocov(nm, static_cast<int>(cx.size()) - 1);
  std::vector<double> cv(cx.size());
  for (std::size_t r = 0; r < cx.size(); ++r)
    cv[r] = alpha * alpha * cx[r] + cz[r];
  return cv;
}

PredictorFilter solve_predictor(const std::vector<double>& cv, int order) {
  if (order < 0) throw std::invalid_argument("solve_predictor: negative order");
  if (static_cast<int>(cv.size()) < order + 1)
    throw std::invalid_argument("solve_predictor: need C[0..order]");
  if (!(cv[0] > 0.0)) throw std::invalid_argument("solve_predictor: C[0] <= 0");

  const double c0 = cv[0] * (1.0 + kRidge);
  PredictorFilter f;
  if (order == 0) {
    f.error_var = c0;
    return f;
  }
  std::vector<double> h(order, 0.0), prev(order, 0.0);
  double err = c0;
  for (int m = 1; m <= order; ++m) {
    double acc = cv[m];
    for (int j = 1; j < m; ++j) acc -= prev[j - 1] * cv[m - j];
    const double k = acc / err;
    h[m - 1] = k;
    for (int j = 1; j < m; ++j) h[j - 1] = prev[j - 1] - k * prev[m - j - 1];
    err *= (1.0 - k * k);
    if (!(err > 0.0))
      throw std::runtime_error("solve_predictor: sequence is not positive definite");
    prev = h;
  }
  f.taps = std::move(h);
  f.error_var = err;
  return f;
}

PredictorFilter flat_spectrum_predictor(int oversampling, double alpha,
                                        double variance, int order,
                                        NoiseModel nm) {
  const auto cx =
      autocov_from_model(ProcessModel::flat_band(oversampling, variance), order);
  PredictorFilter f = solve_predictor(quantized_autocov(cx, alpha, nm), order);
  f.mean = -0.5;
  return f;
}

MatrixPredictor solve_matrix_predictor(const std::vector<Eigen::MatrixXd>& cv,
                                       int order) {
  if (order < 0) throw std::invalid_argument("solve_matrix_predictor: negative order");
  if (static_cast<int>(cv.size()) < order + 1)
    throw std::invalid_argument("solve_matrix_predictor: need C[0..order]");
  const int K = static_cast<int>(cv[0].rows());
  for (const auto& b : cv)
    if (b.rows() != K || b.cols() != K)
      throw std::invalid_argument("solve_matrix_predictor: ragged blocks");

  MatrixPredictor mp;
  mp.mean = Eigen::VectorXd::Zero(K);
  if (order == 0) {
    mp.error_cov = 0.5 * (cv[0] + cv[0].transpose());
    return mp;
  }

  auto block = [&](int r) -> Eigen::MatrixXd {
    // C[-r] = C[r]^T
    if (r >= 0) return cv[r];
    return cv[-r].transpose();
  };

  // normal equations sum_i H_i C[j-i] = C[j]: row block i, column block j
  // holds C[j-i], so right-multiplying [H_1..H_p] by M sums correctly
  const int n = K * order;
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < order; ++i)
    for (int j = 0; j < order; ++j)
      M.block(i * K, j * K, K, K) = block(j - i);
  const double ridge = kRidge * cv[0].diagonal().mean();
  M += ridge * Eigen::MatrixXd::Identity(n, n);

  // solve [H_1 .. H_p] M = [C_1 .. C_p] via the transposed system
  Eigen::MatrixXd rhs(n, K);
  for (int j = 0; j < order; ++j) rhs.block(j * K, 0, K, K) = block(j + 1).transpose();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(M);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("solve_matrix_predictor: normal matrix not factorable");
  const Eigen::MatrixXd ht = ldlt.solve(rhs);  // n x K, stacked H_i^T

  Eigen::MatrixXd sigma = cv[0];
  for (int i = 0; i < order; ++i) {
    const Eigen::MatrixXd Hi = ht.block(i * K, 0, K, K).transpose();
    mp.taps.push_back(Hi);
    sigma -= Hi * cv[i + 1].transpose();
  }
  mp.error_cov = 0.5 * (sigma + sigma.transpose());
  return mp;
}

Smoother design_smoother(const SmootherSpec& spec, int half_width) {
  if (half_width < 0) throw std::invalid_argument("design_smoother: negative width");
  const int w = 2 * half_width + 1;
  if (static_cast<int>(spec.cross.size()) != w)
    throw std::invalid_argument("design_smoother: cross must have 2k+1 entries");
  if (static_cast<int>(spec.vcov.size()) < w)
    throw std::invalid_argument("design_smoother: vcov must reach lag 2k");
  if (!(spec.x_var > 0.0)) throw std::invalid_argument("design_smoother: x_var");

  Eigen::MatrixXd R(w, w);
  for (int i = 0; i < w; ++i)
    for (int j = 0; j < w; ++j) R(i, j) = spec.vcov[std::abs(i - j)];
  R += kRidge * spec.vcov[0] * Eigen::MatrixXd::Identity(w, w);
  Eigen::VectorXd c(w);
  for (int i = 0; i < w; ++i) c(i) = spec.cross[i];
  Eigen::LDLT<Eigen::MatrixXd> ldlt(R);
  if (ldlt.info() != Eigen::Success)
    throw std::runtime_error("design_smoother: window covariance not factorable");
  const Eigen::VectorXd g = ldlt.solve(c);

  Smoother s;
  s.taps.assign(g.data(), g.data() + w);
  s.expected_mse = spec.x_var - g.dot(c);
  s.mean = spec.mean_v;
  return s;
}

LpfSpec ideal_lpf_gain(int oversampling, double alpha, double variance) {
  if (oversampling < 1) throw std::invalid_argument("ideal_lpf_gain: oversampling");
  if (!(alpha > 0.0) || !(variance > 0.0))
    throw std::invalid_argument("ideal_lpf_gain: bad parameters");
  const double s = 12.0 * alpha * alpha * oversampling * variance;
  return {s / (1.0 + s), M_PI / oversampling};
}

}  // namespace modadc
