#include "modadc/iforce.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace modadc {

namespace {

void require_square(const Eigen::MatrixXd& m, const char* who) {
  if (m.rows() == 0 || m.rows() != m.cols())
    throw std::invalid_argument(std::string(who) + ": square matrix required");
}

double quad_form(const Eigen::MatrixXd& g, const Eigen::VectorXi& a) {
  const Eigen::VectorXd ad = a.cast<double>();
  return ad.dot(g * ad);
}

// Incremental rank over the rationals; the candidate rows are tiny integer
// vectors so double Gram-Schmidt with a fixed threshold is safe.
class RankTracker {
 public:
  bool try_add(const Eigen::VectorXd& v) {
    Eigen::VectorXd r = v;
    for (const auto& b : basis_) r -= b.dot(r) * b;
    if (r.squaredNorm() <= 1e-12 * v.squaredNorm()) return false;
    basis_.push_back(r.normalized());
    return true;
  }
  int rank() const { return static_cast<int>(basis_.size()); }

 private:
  std::vector<Eigen::VectorXd> basis_;
};

struct Row {
  Eigen::VectorXi a;
  double q;
};

bool lex_less(const Eigen::VectorXi& x, const Eigen::VectorXi& y) {
  for (int i = 0; i < x.size(); ++i) {
    if (x(i) != y(i)) return x(i) < y(i);
  }
  return false;
}

}  // namespace

long long integer_det(const Eigen::MatrixXi& m) {
  const int n = static_cast<int>(m.rows());
  if (n == 0 || m.cols() != n)
    throw std::invalid_argument("integer_det: square matrix required");
  Eigen::Matrix<long long, Eigen::Dynamic, Eigen::Dynamic> a =
      m.cast<long long>();
  long long sign = 1;
  long long prev = 1;
  for (int k = 0; k + 1 < n; ++k) {
    if (a(k, k) == 0) {
      int piv = -1;
      for (int i = k + 1; i < n; ++i) {
        if (a(i, k) != 0) {
          piv = i;
          break;
        }
      }
      if (piv < 0) return 0;
      a.row(k).swap(a.row(piv));
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i)
      for (int j = k + 1; j < n; ++j)
        a(i, j) = (a(i, j) * a(k, k) - a(i, k) * a(k, j)) / prev;
    prev = a(k, k);
  }
  return sign * a(n - 1, n - 1);
}

IntegerMatrix find_A_exhaustive(const Eigen::MatrixXd& gram, int coeff_bound) {
  require_square(gram, "find_A_exhaustive");
  const int K = static_cast<int>(gram.rows());
  if (K > 4) throw std::invalid_argument("find_A_exhaustive: dim > 4");
  if (coeff_bound < 1 || coeff_bound > 7)
    throw std::invalid_argument("find_A_exhaustive: coeff_bound outside [1,7]");

  // Sign-canonical candidate rows: first nonzero entry positive.
  std::vector<Row> rows;
  Eigen::VectorXi a = Eigen::VectorXi::Constant(K, -coeff_bound);
  for (;;) {
    int lead = 0;
    while (lead < K && a(lead) == 0) ++lead;
    if (lead < K && a(lead) > 0) rows.push_back({a, quad_form(gram, a)});
    int i = K - 1;
    while (i >= 0 && a(i) == coeff_bound) a(i--) = -coeff_bound;
    if (i < 0) break;
    ++a(i);
  }
  std::sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    if (x.q != y.q) return x.q < y.q;
    return lex_less(x.a, y.a);
  });

  // Greedy over the sorted rows minimizes the maximum form over any
  // full-rank choice (independent sets of rows form a matroid).
  RankTracker tracker;
  std::vector<int> picked;
  for (int i = 0; i < static_cast<int>(rows.size()) && tracker.rank() < K; ++i) {
    if (tracker.try_add(rows[i].a.cast<double>())) picked.push_back(i);
  }
  if (tracker.rank() < K)
    throw std::runtime_error("find_A_exhaustive: no full-rank candidate");
  const double qstar = rows[picked.back()].q;

  auto assemble = [&](const std::vector<int>& idx) {
    IntegerMatrix out;
    out.entries.resize(K, K);
    for (int r = 0; r < K; ++r) out.entries.row(r) = rows[idx[r]].a.transpose();
    out.det_abs = std::llabs(integer_det(out.entries));
    return out;
  };

  // Tie handling: among row sets achieving the optimal max form, prefer
  // smaller |det|, then lexicographic rows. Enumerate only when cheap.
  const double tol = 1e-9 * std::max(1.0, qstar);
  int m = 0;
  while (m < static_cast<int>(rows.size()) && rows[m].q <= qstar + tol) ++m;
  double subsets = 1.0;
  for (int i = 0; i < K; ++i) subsets *= static_cast<double>(m - i) / (i + 1);
  if (subsets > 50000.0) return assemble(picked);

  std::vector<int> best = picked;
  long long best_det = assemble(picked).det_abs;
  std::vector<int> cur(K);
  auto rec = [&](auto&& self, int depth, int start) -> void {
    if (depth == K) {
      Eigen::MatrixXi e(K, K);
      for (int r = 0; r < K; ++r) e.row(r) = rows[cur[r]].a.transpose();
      const long long d = std::llabs(integer_det(e));
      if (d == 0) return;
      bool better = d < best_det;
      if (d == best_det) {
        for (int r = 0; r < K; ++r) {
          if (cur[r] != best[r]) {
            better = lex_less(rows[cur[r]].a, rows[best[r]].a);
            break;
          }
        }
      }
      if (better) {
        best = cur;
        best_det = d;
      }
      return;
    }
    for (int i = start; i < m; ++i) {
      cur[depth] = i;
      self(self, depth + 1, i + 1);
    }
  };
  rec(rec, 0, 0);
  return assemble(best);
}

IntegerMatrix find_A_lll(const Eigen::MatrixXd& gram) {
  require_square(gram, "find_A_lll");
  const int K = static_cast<int>(gram.rows());
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("find_A_lll: gram not positive definite");

  using LVec = Eigen::Matrix<long long, Eigen::Dynamic, 1>;
  std::vector<LVec> b(K);
  for (int i = 0; i < K; ++i) {
    b[i] = LVec::Zero(K);
    b[i](i) = 1;
  }
  auto ip = [&](const LVec& u, const LVec& v) {
    double s = 0.0;
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < K; ++j) s += static_cast<double>(u(i)) * gram(i, j) *
                                       static_cast<double>(v(j));
    return s;
  };

  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(K, K);
  Eigen::VectorXd gs = Eigen::VectorXd::Zero(K);
  auto recompute = [&]() {
    for (int i = 0; i < K; ++i) {
      for (int j = 0; j < i; ++j) {
        double s = ip(b[i], b[j]);
        for (int t = 0; t < j; ++t) s -= mu(j, t) * mu(i, t) * gs(t);
        mu(i, j) = s / gs(j);
      }
      double n = ip(b[i], b[i]);
      for (int j = 0; j < i; ++j) n -= mu(i, j) * mu(i, j) * gs(j);
      gs(i) = n;
    }
  };
  recompute();

  const double delta = 0.75;
  int k = 1;
  int guard = 0;
  while (k < K) {
    for (int j = k - 1; j >= 0; --j) {
      const long long r = std::llround(mu(k, j));
      if (r != 0) {
        b[k] -= r * b[j];
        recompute();
      }
    }
    if (gs(k) >= (delta - mu(k, k - 1) * mu(k, k - 1)) * gs(k - 1)) {
      ++k;
    } else {
      std::swap(b[k], b[k - 1]);
      recompute();
      k = std::max(1, k - 1);
    }
    if (++guard > 100000)
      throw std::runtime_error("find_A_lll: reduction failed to converge");
  }

  std::vector<Row> rows(K);
  for (int i = 0; i < K; ++i) {
    Eigen::VectorXi ai(K);
    for (int j = 0; j < K; ++j) {
      if (b[i](j) > std::numeric_limits<int>::max() ||
          b[i](j) < std::numeric_limits<int>::min())
        throw std::runtime_error("find_A_lll: coefficient overflow");
      ai(j) = static_cast<int>(b[i](j));
    }
    int lead = 0;
    while (lead < K && ai(lead) == 0) ++lead;
    if (lead < K && ai(lead) < 0) ai = -ai;
    rows[i] = {ai, quad_form(gram, ai)};
  }
  // stable: equal-form rows keep basis order, so a diagonal form returns
  // the untouched identity rows
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& x, const Row& y) { return x.q < y.q; });
  IntegerMatrix out;
  out.entries.resize(K, K);
  for (int r = 0; r < K; ++r) out.entries.row(r) = rows[r].a.transpose();
  out.det_abs = std::llabs(integer_det(out.entries));
  return out;
}

Eigen::VectorXd if_decode(const Eigen::VectorXd& codes, const IntegerMatrix& A,
                          double rate_bits) {
  const int K = A.dim();
  if (codes.size() != K)
    throw std::invalid_argument("if_decode: dimension mismatch");
  if (A.det_abs == 0) throw std::invalid_argument("if_decode: singular A");
  const double delta = std::exp2(rate_bits);
  const Eigen::MatrixXd Ad = A.entries.cast<double>();
  const Eigen::VectorXd shifted = codes.array() + 0.5;
  Eigen::VectorXd g(K);
  for (int k = 0; k < K; ++k)
    g(k) = centered_mod(Ad.row(k).dot(shifted), delta);
  const Eigen::VectorXd v = Ad.partialPivLu().solve(g);
  const double scale = std::max(1.0, g.lpNorm<Eigen::Infinity>());
  if ((Ad * v - g).lpNorm<Eigen::Infinity>() > 1e-9 * scale)
    throw std::runtime_error("if_decode: inverse residual too large");
  return v.array() - 0.5;
}

Eigen::VectorXd clp_decode_exact(const Eigen::VectorXd& codes,
                                 const Eigen::MatrixXd& sigma,
                                 const ModAdcParams& params) {
  require_square(sigma, "clp_decode_exact");
  const int K = static_cast<int>(sigma.rows());
  if (K > 4) throw std::invalid_argument("clp_decode_exact: dim > 4");
  if (codes.size() != K)
    throw std::invalid_argument("clp_decode_exact: dimension mismatch");
  const double delta = params.modulo_size();

  const Eigen::MatrixXd cov =
      params.alpha * params.alpha * sigma +
      Eigen::MatrixXd::Identity(K, K) / 12.0;
  const Eigen::MatrixXd w = cov.inverse();
  Eigen::LLT<Eigen::MatrixXd> llt(w);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("clp_decode_exact: weight not positive definite");
  // Upper-triangular factor: cost of candidate b is ||R b - c||^2.
  const Eigen::MatrixXd R = Eigen::MatrixXd(llt.matrixL()).transpose();
  const Eigen::VectorXd c = -(R * (codes.array() + 0.5).matrix()) / delta;

  Eigen::VectorXi best = Eigen::VectorXi::Zero(K);
  double best_cost = std::numeric_limits<double>::infinity();
  Eigen::VectorXi cur = Eigen::VectorXi::Zero(K);

  // Depth-first enumeration from the last coordinate, candidates taken
  // outward from each level's real-valued center so the first leaf is the
  // nearest-plane solution and pruning stays tight.
  auto dive = [&](auto&& self, int level, double cost) -> void {
    if (level < 0) {
      if (cost < best_cost) {
        best_cost = cost;
        best = cur;
      }
      return;
    }
    double acc = 0.0;
    for (int j = level + 1; j < K; ++j) acc += R(level, j) * cur(j);
    const double center = (c(level) - acc) / R(level, level);
    const long base = std::lround(center);
    for (int step = 0;; ++step) {
      long cand;
      if (step == 0) {
        cand = base;
      } else if (step % 2 == 1) {
        cand = base + (center >= base ? (step + 1) / 2 : -(step + 1) / 2);
      } else {
        cand = base + (center >= base ? -step / 2 : step / 2);
      }
      const double d = R(level, level) * (cand - center);
      const double next = cost + d * d;
      if (next >= best_cost) {
        // Offsets alternate sides; once both sides exceed the bound no
        // further candidate at this level can win.
        if (step >= 1) break;
        continue;
      }
      cur(level) = static_cast<int>(cand);
      self(self, level - 1, next);
    }
  };
  dive(dive, K - 1, 0.0);
  return codes + delta * best.cast<double>();
}

IfRateReport rate_report(const IntegerMatrix& A, const Eigen::MatrixXd& sigma,
                         double distortion) {
  require_square(sigma, "rate_report");
  const int K = static_cast<int>(sigma.rows());
  if (A.dim() != K) throw std::invalid_argument("rate_report: dim mismatch");
  if (!(distortion > 0.0))
    throw std::invalid_argument("rate_report: distortion must be positive");
  const Eigen::MatrixXd b =
      Eigen::MatrixXd::Identity(K, K) + sigma / distortion;
  IfRateReport rep;
  rep.per_row_rates.resize(K);
  for (int k = 0; k < K; ++k) {
    const Eigen::VectorXd a = A.entries.row(k).cast<double>().transpose();
    rep.per_row_rates[k] = 0.5 * std::log2(a.dot(b * a));
    rep.r_ifsc = std::max(rep.r_ifsc, rep.per_row_rates[k]);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(b);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("rate_report: benchmark matrix not PD");
  double logdet = 0.0;
  for (int i = 0; i < K; ++i)
    logdet += 2.0 * std::log2(Eigen::MatrixXd(llt.matrixL())(i, i));
  rep.r_bench = logdet / (2.0 * K);
  rep.gap = rep.r_ifsc - rep.r_bench;
  return rep;
}

}  // namespace modadc
