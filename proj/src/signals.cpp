#include "modadc/signals.hpp"

#include <cmath>
#include <complex>
#include <stdexcept>

#include "modadc/fft.hpp"

namespace modadc {

namespace {
constexpr long kMinGrid = 1L << 14;

double wrap_to_pi(double w) {
  while (w > M_PI) w -= 2.0 * M_PI;
  while (w < -M_PI) w += 2.0 * M_PI;
  return w;
}
}  // namespace

ProcessModel ProcessModel::flat_band(int oversampling, double variance) {
  if (oversampling < 1)
    throw std::invalid_argument("flat_band: oversampling must be >= 1");
  if (!(variance > 0.0))
    throw std::invalid_argument("flat_band: variance must be positive");
  ProcessModel m;
  m.kind = Kind::flat_band;
  m.oversampling = oversampling;
  m.variance = variance;
  return m;
}

ProcessModel ProcessModel::autocov_seq(std::vector<double> c) {
  if (c.empty()) throw std::invalid_argument("autocov_seq: empty sequence");
  if (!(c[0] > 0.0)) throw std::invalid_argument("autocov_seq: C[0] must be positive");
  ProcessModel m;
  m.kind = Kind::autocov_seq;
  m.variance = c[0];
  m.autocov = std::move(c);
  return m;
}

ProcessModel ProcessModel::psd_grid(std::vector<double> s) {
  if (s.size() < 8) throw std::invalid_argument("psd_grid: too few points");
  const std::size_t M = s.size();
  double mx = 0.0;
  for (double v : s) mx = std::max(mx, v);
  if (!(mx > 0.0)) throw std::invalid_argument("psd_grid: psd is identically zero");
  for (std::size_t k = 0; k < M; ++k) {
    if (s[k] < -1e-12 * mx)
      throw std::invalid_argument("psd_grid: psd must be nonnegative");
    if (s[k] < 0.0) s[k] = 0.0;
    const double sym = s[(M - k) % M];
    if (std::fabs(s[k] - sym) > 1e-9 * mx)
      throw std::invalid_argument("psd_grid: psd must be symmetric");
  }
  ProcessModel m;
  m.kind = Kind::psd_grid;
  double acc = 0.0;
  for (double v : s) acc += v;
  m.variance = acc / static_cast<double>(M);
  m.psd = std::move(s);
  return m;
}

ProcessModel ProcessModel::filtered_noise_pair(std::vector<double> h,
                                               std::vector<double> g) {
  if (h.empty() || g.empty())
    throw std::invalid_argument("filtered_noise_pair: empty taps");
  ProcessModel m;
  m.kind = Kind::filtered_noise_pair;
  m.taps_h = std::move(h);
  m.taps_g = std::move(g);
  double vh = 1.0, vg = 1.0;
  for (double t : m.taps_h) vh += t * t;
  for (double t : m.taps_g) vg += t * t;
  m.variance = std::max(vh, vg);
  return m;
}

std::vector<double> autocov_from_model(const ProcessModel& m, int max_lag) {
  if (max_lag < 0) throw std::invalid_argument("autocov_from_model: negative lag");
  std::vector<double> c(static_cast<std::size_t>(max_lag) + 1, 0.0);
  switch (m.kind) {
    case ProcessModel::Kind::flat_band: {
      const double L = m.oversampling;
      c[0] = m.variance;
      for (int r = 1; r <= max_lag; ++r)
        c[r] = m.variance * L * std::sin(M_PI * r / L) / (M_PI * r);
      return c;
    }
    case ProcessModel::Kind::autocov_seq: {
      for (int r = 0; r <= max_lag; ++r)
        c[r] = r < static_cast<int>(m.autocov.size()) ? m.autocov[r] : 0.0;
      return c;
    }
    case ProcessModel::Kind::psd_grid: {
      const std::size_t M = m.psd.size();
      for (int r = 0; r <= max_lag; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < M; ++k)
          acc += m.psd[k] * std::cos(2.0 * M_PI * k * r / static_cast<double>(M));
        c[r] = acc / static_cast<double>(M);
      }
      return c;
    }
    case ProcessModel::Kind::filtered_noise_pair:
      throw std::invalid_argument(
          "autocov_from_model: vector model, use vector_autocov");
  }
  throw std::logic_error("autocov_from_model: bad kind");
}

std::vector<Eigen::MatrixXd> vector_autocov(const ProcessModel& m, int max_lag) {
  if (m.kind != ProcessModel::Kind::filtered_noise_pair)
    throw std::invalid_argument("vector_autocov: scalar model, use autocov_from_model");
  const auto& h = m.taps_h;
  const auto& g = m.taps_g;
  auto corr = [](const std::vector<double>& a, const std::vector<double>& b,
                 int r) {
    // sum_i a_i b_{i-r}
    double acc = 0.0;
    for (int i = 0; i < static_cast<int>(a.size()); ++i) {
      const int j = i - r;
      if (j >= 0 && j < static_cast<int>(b.size())) acc += a[i] * b[j];
    }
    return acc;
  };
  std::vector<Eigen::MatrixXd> blocks;
  for (int r = 0; r <= max_lag; ++r) {
    Eigen::MatrixXd c(2, 2);
    c(0, 0) = corr(h, h, r) + (r == 0 ? 1.0 : 0.0);
    c(0, 1) = corr(h, g, r);
    c(1, 0) = corr(g, h, r);
    c(1, 1) = corr(g, g, r) + (r == 0 ? 1.0 : 0.0);
    blocks.push_back(c);
  }
  return blocks;
}

namespace {

// Hermitian spectrum draw with E|A_k|^2 = M * S_k, then inverse transform.
// Bin order: k = 0, then pairs (k, M-k), then M/2.
SamplePath synth_from_spectrum(const std::vector<double>& s, long n, Rng& rng) {
  const std::size_t M = s.size();
  std::vector<std::complex<double>> a(M);
  a[0] = std::complex<double>(
      rng.next_gaussian() * std::sqrt(std::max(0.0, s[0]) * M), 0.0);
  for (std::size_t k = 1; k < M / 2; ++k) {
    const double amp = std::sqrt(std::max(0.0, s[k]) * M / 2.0);
    const double re = rng.next_gaussian() * amp;
    const double im = rng.next_gaussian() * amp;
    a[k] = std::complex<double>(re, im);
    a[M - k] = std::conj(a[k]);
  }
  a[M / 2] = std::complex<double>(
      rng.next_gaussian() * std::sqrt(std::max(0.0, s[M / 2]) * M), 0.0);
  fft_inplace(a, true);
  SamplePath p;
  p.samples.resize(n, 1);
  for (long i = 0; i < n; ++i) p.samples(i, 0) = a[i].real();
  return p;
}

}  // namespace

SamplePath gen_gaussian(const ProcessModel& m, long n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("gen_gaussian: n must be positive");
  switch (m.kind) {
    case ProcessModel::Kind::flat_band: {
      const std::size_t M = next_pow2(std::max<long>(4 * n, kMinGrid));
      const double edge = M_PI / m.oversampling;
      std::vector<double> s(M, 0.0);
      for (std::size_t k = 0; k < M; ++k) {
        const double w = wrap_to_pi(2.0 * M_PI * k / static_cast<double>(M));
        if (std::fabs(w) < edge) s[k] = m.oversampling * m.variance;
      }
      return synth_from_spectrum(s, n, rng);
    }
    case ProcessModel::Kind::psd_grid: {
      const std::size_t M0 = m.psd.size();
      const std::size_t M = next_pow2(std::max<long>(
          {4 * n, kMinGrid, static_cast<long>(M0)}));
      std::vector<double> s(M);
      if (M == M0) {
        s = m.psd;
      } else {
        // circular linear interpolation onto the denser grid
        for (std::size_t k = 0; k < M; ++k) {
          const double pos =
              static_cast<double>(k) * static_cast<double>(M0) / static_cast<double>(M);
          const std::size_t k0 = static_cast<std::size_t>(pos) % M0;
          const double frac = pos - std::floor(pos);
          s[k] = (1.0 - frac) * m.psd[k0] + frac * m.psd[(k0 + 1) % M0];
        }
      }
      return synth_from_spectrum(s, n, rng);
    }
    case ProcessModel::Kind::autocov_seq: {
      const long mlen = static_cast<long>(m.autocov.size());
      const std::size_t M =
          next_pow2(std::max<long>({4 * n, kMinGrid, 2 * mlen}));
      std::vector<std::complex<double>> row(M, 0.0);
      for (long r = 0; r < mlen; ++r) {
        row[r] = m.autocov[r];
        if (r > 0) row[M - r] = m.autocov[r];
      }
      fft_inplace(row, false);
      std::vector<double> lam(M);
      double lmax = 0.0, lmin = 0.0;
      for (std::size_t k = 0; k < M; ++k) {
        lam[k] = row[k].real();
        lmax = std::max(lmax, lam[k]);
        lmin = std::min(lmin, lam[k]);
      }
      // truncated sequences may embed with tiny negative eigenvalues
      if (lmin < -1e-8 * lmax)
        throw std::runtime_error("gen_gaussian: autocov sequence is not embeddable");
      return synth_from_spectrum(lam, n, rng);
    }
    case ProcessModel::Kind::filtered_noise_pair:
      return gen_filtered_pair(m.taps_h, m.taps_g, n, rng);
  }
  throw std::logic_error("gen_gaussian: bad kind");
}

SamplePath gen_sinusoid(double variance, double band_fraction, long n,
                        Rng& rng) {
  if (!(variance > 0.0)) throw std::invalid_argument("gen_sinusoid: variance");
  if (!(band_fraction > 0.0) || band_fraction > 1.0)
    throw std::invalid_argument("gen_sinusoid: band_fraction in (0, 1]");
  if (n < 1) throw std::invalid_argument("gen_sinusoid: n must be positive");
  const double w0 = rng.next_double() * M_PI * band_fraction;
  const double phi = rng.next_double() * 2.0 * M_PI;
  SamplePath p;
  p.samples.resize(n, 1);
  const double amp = std::sqrt(2.0 * variance);
  for (long i = 0; i < n; ++i) p.samples(i, 0) = amp * std::cos(w0 * i + phi);
  p.degenerate_tone = w0 * static_cast<double>(n) < 2.0 * M_PI;
  return p;
}

SamplePath gen_filtered_pair(const std::vector<double>& h,
                             const std::vector<double>& g, long n, Rng& rng) {
  if (h.empty() || g.empty()) throw std::invalid_argument("gen_filtered_pair: empty taps");
  if (n < 1) throw std::invalid_argument("gen_filtered_pair: n must be positive");
  const long T = static_cast<long>(std::max(h.size(), g.size()));
  std::vector<double> w3(n + T - 1);
  for (auto& w : w3) w = rng.next_gaussian();
  SamplePath p;
  p.samples.resize(n, 2);
  for (long i = 0; i < n; ++i) {
    double x1 = rng.next_gaussian();
    double x2 = rng.next_gaussian();
    for (long mtap = 0; mtap < static_cast<long>(h.size()); ++mtap)
      x1 += h[mtap] * w3[i - mtap + T - 1];
    for (long mtap = 0; mtap < static_cast<long>(g.size()); ++mtap)
      x2 += g[mtap] * w3[i - mtap + T - 1];
    p.samples(i, 0) = x1;
    p.samples(i, 1) = x2;
  }
  return p;
}

}  // namespace modadc
