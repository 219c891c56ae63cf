#pragma once

#include <Eigen/Dense>
#include <vector>

#include "modadc/rng.hpp"

namespace modadc {

// Stationary source descriptions. psd_grid tabulates S(omega) at
// omega_k = 2*pi*k/M in FFT ordering (k > M/2 is the negative axis); the
// grid itself is the model, so discrete sums over it are exact.
struct ProcessModel {
  enum class Kind { flat_band, autocov_seq, psd_grid, filtered_noise_pair };

  Kind kind = Kind::flat_band;
  int oversampling = 1;  // flat_band: band edge at pi/oversampling
  double variance = 1.0;
  std::vector<double> autocov;  // autocov_seq: C[0..max]
  std::vector<double> psd;      // psd_grid
  std::vector<double> taps_h;   // filtered_noise_pair
  std::vector<double> taps_g;

  static ProcessModel flat_band(int oversampling, double variance);
  static ProcessModel autocov_seq(std::vector<double> c);
  static ProcessModel psd_grid(std::vector<double> s);
  static ProcessModel filtered_noise_pair(std::vector<double> h,
                                          std::vector<double> g);
};

struct SamplePath {
  Eigen::MatrixXd samples;  // one column per stream
  double sample_period = 1.0;
  bool degenerate_tone = false;  // sinusoid drew less than one full cycle

  long n() const { return samples.rows(); }
  int streams() const { return static_cast<int>(samples.cols()); }
  double x(long i, int k = 0) const { return samples(i, k); }
};

// C[0..max_lag] for the scalar models. flat_band uses the band-integral in
// closed form; psd_grid sums its own grid. filtered_noise_pair is a vector
// model, use vector_autocov.
std::vector<double> autocov_from_model(const ProcessModel& m, int max_lag);

// Blocks C[r] = E[X_n X_{n-r}^T] for r = 0..max_lag (C[-r] = C[r]^T).
std::vector<Eigen::MatrixXd> vector_autocov(const ProcessModel& m, int max_lag);

// Stationary Gaussian synthesis. flat_band / psd_grid draw a Hermitian
// spectrum on a grid of at least max(4n, 2^14) bins; autocov_seq goes
// through circulant embedding of the stored sequence. Deterministic given
// the rng state.
SamplePath gen_gaussian(const ProcessModel& m, long n, Rng& rng);

// sqrt(2 variance) * cos(w0 n + phi), w0 ~ U[0, pi*band_fraction),
// phi ~ U[0, 2 pi). A draw with less than one cycle across the path sets
// degenerate_tone instead of being rejected.
SamplePath gen_sinusoid(double variance, double band_fraction, long n,
                        Rng& rng);

// Two streams driven by a shared unit-variance white source w3 through taps
// h and g, plus independent unit-variance white innovations per stream.
SamplePath gen_filtered_pair(const std::vector<double>& h,
                             const std::vector<double>& g, long n, Rng& rng);

}  // namespace modadc
