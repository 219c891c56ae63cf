#pragma once

#include <Eigen/Dense>
#include <vector>

namespace modadc {

// Second-order model of the wrap error. white_uniform: one U((-1,0]) term
// per sample. ma1_uniform: differenced uniforms Z_n - Z_{n-1}, as produced
// by counter-style front ends.
enum class NoiseModel { white_uniform, ma1_uniform };

std::vector<double> noise_autocov(NoiseModel nm, int max_lag);

// C_V[r] = alpha^2 C_X[r] + C_Z[r]
std::vector<double> quantized_autocov(const std::vector<double>& cx,
                                      double alpha, NoiseModel nm);

struct PredictorFilter {
  std::vector<double> taps;  // h_1..h_p
  double error_var = 0.0;    // one step prediction error variance
  double mean = 0.0;         // process mean removed before filtering

  int order() const { return static_cast<int>(taps.size()); }
};

// Yule-Walker solve by Levinson-Durbin on C_V[0..order]. A ridge of
// 1e-10*C_V[0] is added at lag zero before the recursion.
PredictorFilter solve_predictor(const std::vector<double>& cv, int order);

// Predictor designed against a flat in-band spectrum of the given variance,
// band edge pi/L, front-end gain alpha. mean is set for the ideal front end
// (E[V] = -1/2).
PredictorFilter flat_spectrum_predictor(int oversampling, double alpha,
                                        double variance, int order,
                                        NoiseModel nm);

struct MatrixPredictor {
  std::vector<Eigen::MatrixXd> taps;  // H_1..H_p
  Eigen::MatrixXd error_cov;          // Sigma_p, symmetrized
  Eigen::VectorXd mean;               // per stream mean removed before filtering
};

// Block Yule-Walker solve; cv[r] = E[V_n V_{n-r}^T] for r=0..order. The
// normal matrix is dense Kp x Kp, solved in one shot.
MatrixPredictor solve_matrix_predictor(const std::vector<Eigen::MatrixXd>& cv,
                                       int order);

// Joint second order statistics for a symmetric window estimator of X_n
// from V_{n-k}..V_{n+k}. cross[j+k] = E[X_n (V_{n-j} - mean_v)], j=-k..k.
struct SmootherSpec {
  std::vector<double> cross;
  std::vector<double> vcov;  // C_V[0..2k]
  double x_var = 0.0;
  double mean_v = 0.0;
};

struct Smoother {
  std::vector<double> taps;  // g_{-k}..g_{+k}, applied to V - mean
  double expected_mse = 0.0;
  double mean = 0.0;

  int half_width() const { return (static_cast<int>(taps.size()) - 1) / 2; }
};

Smoother design_smoother(const SmootherSpec& spec, int half_width);

struct LpfSpec {
  double gain;       // in-band gain
  double band_edge;  // radians
};

// Wiener gain for a flat in-band signal observed through the unit-variance
// wrap noise: gain = s/(1+s) with s = 12 alpha^2 L variance.
LpfSpec ideal_lpf_gain(int oversampling, double alpha, double variance);

}  // namespace modadc
