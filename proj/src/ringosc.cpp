#include "modadc/ringosc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "modadc/modcore.hpp"
#include "modadc/temporal.hpp"

namespace modadc {

FCurve::FCurve(std::vector<double> volts, std::vector<double> hz)
    : volts_(std::move(volts)), hz_(std::move(hz)) {
  if (volts_.size() != hz_.size() || volts_.size() < 2)
    throw std::invalid_argument("FCurve: need matching columns, two knots or more");
  for (std::size_t i = 0; i < volts_.size(); ++i) {
    if (i > 0 && !(volts_[i] > volts_[i - 1]))
      throw std::invalid_argument("FCurve: volts must be strictly increasing");
    if (!(hz_[i] > 0.0))
      throw std::invalid_argument("FCurve: rates must be positive");
  }
  // shape preserving tangents: zero across local extrema, weighted harmonic
  // mean of the neighbor slopes otherwise
  const std::size_t n = volts_.size();
  tangents_.assign(n, 0.0);
  std::vector<double> d(n - 1), h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = volts_[i + 1] - volts_[i];
    d[i] = (hz_[i + 1] - hz_[i]) / h[i];
  }
  tangents_[0] = d[0];
  tangents_[n - 1] = d[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (d[i - 1] * d[i] <= 0.0) {
      tangents_[i] = 0.0;
    } else {
      const double w1 = 2.0 * h[i] + h[i - 1];
      const double w2 = h[i] + 2.0 * h[i - 1];
      tangents_[i] = (w1 + w2) / (w1 / d[i - 1] + w2 / d[i]);
    }
  }
}

double FCurve::operator()(double v) const {
  if (volts_.empty()) throw std::logic_error("FCurve: empty curve");
  v = std::clamp(v, volts_.front(), volts_.back());
  const auto it = std::upper_bound(volts_.begin(), volts_.end(), v);
  const std::size_t i =
      it == volts_.begin()
          ? 0
          : std::min<std::size_t>(it - volts_.begin() - 1, volts_.size() - 2);
  const double h = volts_[i + 1] - volts_[i];
  const double t = (v - volts_[i]) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2.0 * t3 - 3.0 * t2 + 1.0) * hz_[i] + (t3 - 2.0 * t2 + t) * h * tangents_[i] +
         (-2.0 * t3 + 3.0 * t2) * hz_[i + 1] + (t3 - t2) * h * tangents_[i + 1];
}

double FCurve::slope(double v) const {
  const double w = 1e-6 * (v_max() - v_min());
  const double lo = std::max(v_min(), v - w);
  const double hi = std::min(v_max(), v + w);
  return ((*this)(hi) - (*this)(lo)) / (hi - lo);
}

FCurve default_f_curve() {
  // saturating pull: rate = fmax (v-vt)^2 / ((v-vt)^2 + vk^2), floored to a
  // small positive rate at and below the threshold
  const double fmax = 9e8, vt = 0.5, vk = 0.9, floor_hz = 1e3;
  std::vector<double> volts, hz;
  for (int i = 0; i <= 57; ++i) {
    const double v = 0.45 + 0.05 * i;
    double f = floor_hz;
    if (v > vt) {
      const double u = (v - vt) * (v - vt);
      f = std::max(floor_hz, fmax * u / (u + vk * vk));
    }
    volts.push_back(v);
    hz.push_back(f);
  }
  return FCurve(std::move(volts), std::move(hz));
}

FCurve load_f_curve(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_f_curve: cannot open " + path);
  std::vector<double> volts, hz;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    double v = 0.0, f = 0.0;
    if (!(row >> v >> f)) {
      if (first) {
        first = false;  // header line
        continue;
      }
      throw std::runtime_error("load_f_curve: malformed row: " + line);
    }
    first = false;
    volts.push_back(v);
    hz.push_back(f);
  }
  if (volts.size() < 8)
    throw std::runtime_error("load_f_curve: need at least 8 rows");
  return FCurve(std::move(volts), std::move(hz));
}

RingOscProfile default_profile(int n_inverters) {
  RingOscProfile p;
  p.n_inverters = n_inverters;
  p.f_curve = default_f_curve();
  p.sample_period = 5e-8;
  return p;
}

double ringosc_rate_bits(const RingOscProfile& profile) {
  return std::log2(2.0 * profile.n_inverters);
}

namespace {

void validate_profile(const RingOscProfile& profile) {
  // a physical ring needs odd N to oscillate; the behavioral model is
  // parity-agnostic, and rate sweeps want power-of-two code counts 2N
  if (profile.n_inverters < 3)
    throw std::invalid_argument("ring profile: need at least 3 inverters");
  if (!(profile.sample_period > 0.0))
    throw std::invalid_argument("ring profile: sample period must be positive");
  if (profile.f_curve.volts().empty())
    throw std::invalid_argument("ring profile: no curve");
}

// flips per sample interval, after both clip stages
std::vector<double> flips_per_sample(const SamplePath& path,
                                     const RingOscProfile& profile,
                                     const AffineFrontend& fe,
                                     double input_clip, long* in_clips,
                                     long* dom_clips) {
  if (path.streams() != 1)
    throw std::invalid_argument("ring oscillator: one stream expected");
  const FCurve& f = profile.f_curve;
  std::vector<double> r(path.n());
  for (long i = 0; i < path.n(); ++i) {
    double x = path.x(i, 0);
    if (std::abs(x) > input_clip) {
      x = std::clamp(x, -input_clip, input_clip);
      ++*in_clips;
    }
    double v = fe.a + fe.b * x;
    if (v < f.v_min() || v > f.v_max()) {
      v = std::clamp(v, f.v_min(), f.v_max());
      ++*dom_clips;
    }
    r[i] = profile.sample_period * f(v);
  }
  return r;
}

void validate_phase(double initial_phase) {
  if (!(initial_phase >= 0.0 && initial_phase < 1.0))
    throw std::invalid_argument("ring oscillator: initial phase must be in [0,1)");
}

}  // namespace

RingOscCodes simulate_states(const SamplePath& path,
                             const RingOscProfile& profile,
                             const AffineFrontend& fe, double input_clip,
                             double initial_phase) {
  validate_profile(profile);
  validate_phase(initial_phase);
  RingOscCodes out;
  const std::vector<double> rate = flips_per_sample(
      path, profile, fe, input_clip, &out.input_clip_count,
      &out.domain_clip_count);
  const long n = path.n();
  const int two_n = 2 * profile.n_inverters;
  out.codes.resize(n);
  out.true_v.resize(n);
  std::vector<unsigned char> ring(profile.n_inverters, 0);
  // progress toward the next flip, in flip units
  double pending = initial_phase;
  long q = 0, q_prev = 0;
  for (long i = 0; i < n; ++i) {
    double time_left = 1.0;  // in sample periods; rate[] is flips per sample
    if (rate[i] > 0.0) {
      // a flip within 1e-9 of the closing boundary still lands here, so an
      // exact integer flips-per-sample stream stays aligned with the
      // accumulator route
      while (1.0 - pending <= rate[i] * time_left + 1e-9) {
        time_left -= (1.0 - pending) / rate[i];
        if (time_left < 0.0) time_left = 0.0;
        pending = 0.0;
        ring[q % profile.n_inverters] ^= 1;
        ++q;
      }
      pending += rate[i] * time_left;
    }
    out.codes[i] = static_cast<int>((q - q_prev) % two_n);
    out.true_v[i] = static_cast<double>(q - q_prev);
    q_prev = q;
  }
  return out;
}

RingOscCodes closed_form_output(const SamplePath& path,
                                const RingOscProfile& profile,
                                const AffineFrontend& fe, double input_clip,
                                double initial_phase) {
  validate_profile(profile);
  validate_phase(initial_phase);
  RingOscCodes out;
  const std::vector<double> rate = flips_per_sample(
      path, profile, fe, input_clip, &out.input_clip_count,
      &out.domain_clip_count);
  const long n = path.n();
  const int two_n = 2 * profile.n_inverters;
  out.codes.resize(n);
  out.true_v.resize(n);
  out.z.resize(n);
  double phi = initial_phase;
  long prev = 0;  // floor(phi) at the previous boundary
  for (long i = 0; i < n; ++i) {
    phi += rate[i];
    const long fl = static_cast<long>(std::floor(phi));
    out.codes[i] = static_cast<int>((fl - prev) % two_n);
    out.true_v[i] = static_cast<double>(fl - prev);
    out.z[i] = static_cast<double>(fl) - phi;
    prev = fl;
  }
  return out;
}

RingStats design_ring_bundle(std::span<const double> x_samples,
                             const RingOscProfile& profile,
                             const AffineFrontend& fe, int order,
                             int half_width, NoiseModel nm,
                             double input_clip) {
  validate_profile(profile);
  if (order < 1) throw std::invalid_argument("design_ring_bundle: order must be positive");
  if (half_width < 0)
    throw std::invalid_argument("design_ring_bundle: half width must be >= 0");
  const long n = static_cast<long>(x_samples.size());
  const int max_lag = std::max(order, 2 * half_width);
  if (n < 10L * (max_lag + 1))
    throw std::invalid_argument("design_ring_bundle: draw too short for the lags");

  const FCurve& f = profile.f_curve;
  std::vector<double> w(n);
  double mean_w = 0.0, mean_x = 0.0;
  for (long i = 0; i < n; ++i) {
    const double xc = std::clamp(x_samples[i], -input_clip, input_clip);
    const double v = std::clamp(fe.a + fe.b * xc, f.v_min(), f.v_max());
    w[i] = profile.sample_period * f(v);
    mean_w += w[i];
    mean_x += x_samples[i];
  }
  mean_w /= static_cast<double>(n);
  mean_x /= static_cast<double>(n);
  for (long i = 0; i < n; ++i) w[i] -= mean_w;

  std::vector<double> cw(max_lag + 1, 0.0);
  for (int r = 0; r <= max_lag; ++r) {
    double acc = 0.0;
    for (long i = r; i < n; ++i) acc += w[i] * w[i - r];
    cw[r] = acc / static_cast<double>(n);  // biased, keeps the sequence psd
  }
  double x_var = 0.0;
  for (long i = 0; i < n; ++i)
    x_var += (x_samples[i] - mean_x) * (x_samples[i] - mean_x);
  x_var /= static_cast<double>(n);

  const std::vector<double> cz = noise_autocov(nm, max_lag);
  std::vector<double> cv(max_lag + 1);
  for (int r = 0; r <= max_lag; ++r) cv[r] = cw[r] + cz[r];

  RingStats out;
  out.mean_w = mean_w;
  out.w_var = cw[0];
  out.x_var = x_var;
  out.predictor = solve_predictor(cv, order);
  out.predictor.mean = mean_w;

  SmootherSpec spec;
  spec.x_var = x_var;
  spec.mean_v = mean_w;
  spec.vcov.assign(cv.begin(), cv.begin() + 2 * half_width + 1);
  spec.cross.assign(2 * half_width + 1, 0.0);
  long cnt = 0;
  for (long i = half_width; i < n - half_width; ++i) {
    for (int j = -half_width; j <= half_width; ++j)
      spec.cross[j + half_width] += (x_samples[i] - mean_x) * w[i - j];
    ++cnt;
  }
  for (double& c : spec.cross) c /= static_cast<double>(cnt);
  out.smoother = design_smoother(spec, half_width);
  return out;
}

RingStats design_ring_bundle(const ProcessModel& model,
                             const RingOscProfile& profile,
                             const AffineFrontend& fe, int order,
                             int half_width, NoiseModel nm, long samples,
                             Rng& rng, double input_clip) {
  const SamplePath path = gen_gaussian(model, samples, rng);
  std::vector<double> x(path.n());
  for (long i = 0; i < path.n(); ++i) x[i] = path.x(i, 0);
  return design_ring_bundle(std::span<const double>(x), profile, fe, order,
                            half_width, nm, input_clip);
}

RingDecodeOutput ringosc_decode(const std::vector<int>& codes,
                                const RingOscProfile& profile,
                                const RingStats& bundle,
                                std::span<const double> init_v) {
  validate_profile(profile);
  const int order = bundle.predictor.order();
  const int k = bundle.smoother.half_width();
  const long n = static_cast<long>(codes.size());
  if (static_cast<int>(init_v.size()) != order)
    throw std::invalid_argument("ringosc_decode: history must match the order");
  if (n <= order + 2 * k)
    throw std::invalid_argument("ringosc_decode: sequence too short");
  const int two_n = 2 * profile.n_inverters;
  for (const int c : codes)
    if (c < 0 || c >= two_n)
      throw std::invalid_argument("ringosc_decode: code out of range");

  const ModAdcParams params(ringosc_rate_bits(profile), 1.0, Dither::none);
  TemporalDecoderState state(bundle.predictor, params);
  state.init_history(init_v);

  RingDecodeOutput out;
  out.v_hat.reserve(n - order);
  for (long i = order; i < n; ++i) {
    const StepOutput s = decode_step(state, static_cast<double>(codes[i]));
    out.v_hat.push_back(s.v_hat);
  }
  const long dec = static_cast<long>(out.v_hat.size());
  out.first_index = order + k;
  out.x_hat.reserve(dec - 2 * k);
  const std::vector<double>& g = bundle.smoother.taps;
  for (long d = k; d < dec - k; ++d) {
    double acc = 0.0;
    for (int j = -k; j <= k; ++j)
      acc += g[j + k] * (out.v_hat[d - j] - bundle.smoother.mean);
    out.x_hat.push_back(acc);
  }
  return out;
}

RingRunResult run_ringosc(const SamplePath& path, const RingOscProfile& profile,
                          const AffineFrontend& fe, const RingStats& bundle,
                          double input_clip, Rng& rng) {
  const int order = bundle.predictor.order();
  const int k = bundle.smoother.half_width();
  if (path.n() <= order + 2 * k)
    throw std::invalid_argument("run_ringosc: path too short");
  const double phase = rng.next_double();
  const RingOscCodes enc =
      closed_form_output(path, profile, fe, input_clip, phase);
  const RingDecodeOutput dec =
      ringosc_decode(enc.codes, profile, bundle,
                     std::span<const double>(enc.true_v.data(), order));

  RingRunResult out;
  out.v_hat = dec.v_hat;
  out.x_hat = dec.x_hat;
  out.first_index = dec.first_index;
  out.input_clip_count = enc.input_clip_count;
  out.domain_clip_count = enc.domain_clip_count;
  for (std::size_t d = 0; d < out.v_hat.size(); ++d) {
    if (std::abs(out.v_hat[d] - enc.true_v[order + d]) > 0.5)
      ++out.overload_count;
  }
  out.block_error = out.overload_count > 0;
  double se = 0.0;
  for (std::size_t m = 0; m < out.x_hat.size(); ++m) {
    const double d = out.x_hat[m] - path.x(out.first_index + m, 0);
    se += d * d;
  }
  out.conditional_mse = se / static_cast<double>(out.x_hat.size());
  out.snr_db = 10.0 * std::log10(bundle.x_var / out.conditional_mse);
  return out;
}

namespace {

struct CellContext {
  const RingOscProfile* profile;
  const RingDesign* design;
  const std::vector<double>* stats_x;
  const std::vector<SamplePath>* blocks;
  std::uint64_t master;
  double input_clip;
};

AbCell eval_cell(const CellContext& ctx, double a, double b) {
  AbCell cell;
  cell.fe = AffineFrontend{a, b};
  const RingDesign& dz = *ctx.design;
  const RingStats st = design_ring_bundle(
      std::span<const double>(*ctx.stats_x), *ctx.profile, cell.fe, dz.order,
      dz.half_width, dz.noise, ctx.input_clip);

  // normal approximation of the unwrap margin: the true count is missed
  // when the prediction error passes half the counter span
  const double half_span = static_cast<double>(ctx.profile->n_inverters);
  const double sp = std::sqrt(std::max(st.predictor.error_var, 1e-300));
  const double per_sample = std::erfc(half_span / sp / std::sqrt(2.0));
  const double block_bound = static_cast<double>(dz.block_len) * per_sample;
  cell.mse = st.smoother.expected_mse;
  cell.snr_db = 10.0 * std::log10(st.x_var / std::max(cell.mse, 1e-300));
  if (block_bound > dz.eps * dz.feas_margin) {
    cell.p_e = std::min(1.0, block_bound);
    cell.screened_out = true;
    return cell;
  }

  long errors = 0, clean = 0;
  double se = 0.0;
  for (long t = 0; t < dz.pe_blocks; ++t) {
    Rng brun = Rng::derive(ctx.master, t + 1, "ringrun");
    const RingRunResult r = run_ringosc((*ctx.blocks)[t], *ctx.profile,
                                        cell.fe, st, ctx.input_clip, brun);
    if (r.block_error) {
      ++errors;
    } else {
      se += r.conditional_mse;
      ++clean;
    }
  }
  cell.p_e = static_cast<double>(errors) / static_cast<double>(dz.pe_blocks);
  cell.feasible = errors == 0;
  if (clean > 0) cell.mse = se / static_cast<double>(clean);
  cell.snr_db = 10.0 * std::log10(st.x_var / std::max(cell.mse, 1e-300));
  return cell;
}

}  // namespace

SearchResult search_ab(const ProcessModel& model, const RingOscProfile& profile,
                       const RingDesign& design, const AbGrid& grid, Rng& rng) {
  validate_profile(profile);
  if (grid.na < 1 || grid.nb < 1 || !(grid.b_lo > 0.0) ||
      grid.b_hi < grid.b_lo || grid.a_hi < grid.a_lo)
    throw std::invalid_argument("search_ab: bad grid");
  if (design.eps <= 0.0 || design.eps >= 1.0 || design.pe_blocks < 1 ||
      design.order < 1)
    throw std::invalid_argument("search_ab: bad design");

  const std::uint64_t master = rng.next_u64();
  Rng srng = Rng::derive(master, 0, "ringstats");
  const SamplePath stats_path = gen_gaussian(model, design.stats_samples, srng);
  std::vector<double> xs(stats_path.n());
  double var = 0.0;
  for (long i = 0; i < stats_path.n(); ++i) {
    xs[i] = stats_path.x(i, 0);
    var += xs[i] * xs[i];
  }
  var /= static_cast<double>(stats_path.n());
  const double input_clip = design.input_clip_sigmas * std::sqrt(var);

  const long blk = design.block_len + design.order + 2L * design.half_width;
  std::vector<SamplePath> blocks(design.pe_blocks);
  for (long t = 0; t < design.pe_blocks; ++t) {
    Rng br = Rng::derive(master, t + 1, "ringpe");
    blocks[t] = gen_gaussian(model, blk, br);
  }

  CellContext ctx{&profile, &design, &xs, &blocks, master, input_clip};

  const auto a_at = [&](double lo, double hi, int i, int n) {
    return n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  };
  const auto b_at = [&](double lo, double hi, int i, int n) {
    return n == 1 ? lo
                  : std::exp(std::log(lo) +
                             (std::log(hi) - std::log(lo)) * i / (n - 1));
  };

  SearchResult out;
  int best = -1, best_ia = 0, best_ib = 0;
  const auto better = [&](const AbCell& c, int idx_best) {
    if (idx_best < 0) return true;
    const AbCell& b0 = out.cells[idx_best];
    if (c.feasible != b0.feasible) return c.feasible;
    return c.feasible ? c.mse < b0.mse : c.p_e < b0.p_e;
  };
  for (int ia = 0; ia < grid.na; ++ia) {
    for (int ib = 0; ib < grid.nb; ++ib) {
      const AbCell c =
          eval_cell(ctx, a_at(grid.a_lo, grid.a_hi, ia, grid.na),
                    b_at(grid.b_lo, grid.b_hi, ib, grid.nb));
      out.cells.push_back(c);
      if (better(c, best)) {
        best = static_cast<int>(out.cells.size()) - 1;
        best_ia = ia;
        best_ib = ib;
      }
    }
  }

  // one refinement pass over the winner's neighborhood
  const double a_lo2 = a_at(grid.a_lo, grid.a_hi, std::max(0, best_ia - 1), grid.na);
  const double a_hi2 =
      a_at(grid.a_lo, grid.a_hi, std::min(grid.na - 1, best_ia + 1), grid.na);
  const double b_lo2 = b_at(grid.b_lo, grid.b_hi, std::max(0, best_ib - 1), grid.nb);
  const double b_hi2 =
      b_at(grid.b_lo, grid.b_hi, std::min(grid.nb - 1, best_ib + 1), grid.nb);
  const int na2 = grid.na == 1 ? 1 : 7;
  const int nb2 = grid.nb == 1 ? 1 : 7;
  for (int ia = 0; ia < na2; ++ia) {
    for (int ib = 0; ib < nb2; ++ib) {
      const AbCell c = eval_cell(ctx, a_at(a_lo2, a_hi2, ia, na2),
                                 b_at(b_lo2, b_hi2, ib, nb2));
      out.cells.push_back(c);
      if (better(c, best)) best = static_cast<int>(out.cells.size()) - 1;
    }
  }

  const AbCell& win = out.cells[best];
  out.frontend = win.fe;
  out.p_e = win.p_e;
  out.mse = win.mse;
  out.snr_db = win.snr_db;
  out.feasible = win.feasible;
  out.bundle = design_ring_bundle(std::span<const double>(xs), profile,
                                  win.fe, design.order, design.half_width,
                                  design.noise, input_clip);
  return out;
}

}  // namespace modadc
