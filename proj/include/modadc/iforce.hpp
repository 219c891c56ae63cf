#pragma once

#include <Eigen/Dense>
#include <vector>

#include "modadc/modcore.hpp"

namespace modadc {

// Full-rank integer combination matrix; rows are the combination vectors.
struct IntegerMatrix {
  Eigen::MatrixXi entries;
  long long det_abs = 0;

  int dim() const { return static_cast<int>(entries.rows()); }
};

// Rates implied by a combination matrix at working distortion D.
struct IfRateReport {
  double r_ifsc = 0.0;
  double r_bench = 0.0;
  double gap = 0.0;
  std::vector<double> per_row_rates;
};

// Exact determinant via fraction-free elimination. Entries must stay within
// long long during elimination; fine for the small reduced matrices used here.
long long integer_det(const Eigen::MatrixXi& m);

// Globally minimal max-row quadratic form a^T gram a over integer matrices
// with entries in [-coeff_bound, coeff_bound] and nonzero determinant.
// Rows are sign-canonical (first nonzero positive) and sorted by form then
// lexicographically; ties between optimal row sets break toward smaller
// |det|, then lexicographic rows. Oracle scale: dim <= 4, coeff_bound <= 7.
IntegerMatrix find_A_exhaustive(const Eigen::MatrixXd& gram, int coeff_bound);

// Lattice-reduced (delta = 0.75) coefficient rows for the lattice whose Gram
// matrix is `gram`; |det| = 1 by construction, rows sorted by form.
IntegerMatrix find_A_lll(const Eigen::MatrixXd& gram);

// Unwrap a folded vector: g_k = centered_mod(a_k . (codes + 1/2), 2^rate),
// output A^{-1} g - 1/2. `codes` must have any dither already removed.
// Recovers the true vector v whenever every |a_k . (v + 1/2)| < 2^rate / 2.
Eigen::VectorXd if_decode(const Eigen::VectorXd& codes, const IntegerMatrix& A,
                          double rate_bits);

// Exact maximum-likelihood unwrap under the Gaussian-plus-uniform model:
// returns codes + 2^R b* with b* the closest lattice point found by full
// enumeration weighted by (alpha^2 sigma + I/12)^{-1}. Oracle scale K <= 4.
Eigen::VectorXd clp_decode_exact(const Eigen::VectorXd& codes,
                                 const Eigen::MatrixXd& sigma,
                                 const ModAdcParams& params);

// Per-row rates 0.5*log2(a_k^T (I + sigma/D) a_k), their max, and the
// benchmark (1/2K) log2 det(I + sigma/D). gap >= 0 for any full-rank A.
IfRateReport rate_report(const IntegerMatrix& A, const Eigen::MatrixXd& sigma,
                         double distortion);

}  // namespace modadc
