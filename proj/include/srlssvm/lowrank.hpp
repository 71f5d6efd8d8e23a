#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "srlssvm/errors.hpp"
#include "srlssvm/kernels.hpp"

namespace srlssvm {

/// P (m x r) with P P' ~ K. `pivots` lists the landmark rows in pivot order.
/// When `triangular_landmarks` holds, the rows of P at `pivots` form a lower
/// triangular block with positive diagonal.
struct LowRankFactor {
  Eigen::MatrixXd P;
  std::vector<Eigen::Index> pivots;
  double residual_trace = 0.0;
  /// Residual trace before the first pivot and after each pivot.
  std::vector<double> trace_history;
  bool triangular_landmarks = true;

  Eigen::Index rows() const { return P.rows(); }
  Eigen::Index rank() const { return P.cols(); }

  /// P_B: rows of P at the landmark indices, in pivot order (r x r).
  Eigen::MatrixXd landmark_block() const {
    Eigen::MatrixXd block(rank(), rank());
    for (Eigen::Index t = 0; t < rank(); ++t) block.row(t) = P.row(pivots[t]);
    return block;
  }
};

inline constexpr double kPivotTieTolerance = 1e-12;
inline constexpr double kNegativeDriftTolerance = 1e-8;

/// Greedy pivoted Cholesky on a lazily evaluated PSD operator. `Op` provides
/// size(), diagonal() and column(j); exactly one column is requested per
/// accepted pivot. Stops early once the largest residual diagonal is <= tol
/// (default 1e-12 * m).
template <class Op>
LowRankFactor pivoted_cholesky(const Op& op, Eigen::Index r,
                               std::optional<double> tol = std::nullopt) {
  const Eigen::Index m = op.size();
  if (m < 1) throw InvalidInput("pivoted_cholesky: empty operator");
  if (r < 1 || r > m)
    throw InvalidInput("pivoted_cholesky: rank " + std::to_string(r) + " must lie in [1, " +
                       std::to_string(m) + "]");
  const double stop = tol.value_or(1e-12 * static_cast<double>(m));
  if (!(stop >= 0.0)) throw InvalidInput("pivoted_cholesky: tol must be >= 0");

  Eigen::VectorXd residual = op.diagonal();
  std::vector<bool> taken(static_cast<std::size_t>(m), false);
  Eigen::MatrixXd P(m, r);
  LowRankFactor out;
  out.trace_history.push_back(residual.sum());

  Eigen::Index t = 0;
  for (; t < r; ++t) {
    Eigen::Index best = -1;
    double best_val = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (taken[static_cast<std::size_t>(i)]) continue;
      double d = residual(i);
      if (d < -kNegativeDriftTolerance)
        throw NumericalError("pivoted_cholesky: residual diagonal " + std::to_string(d) +
                             " at row " + std::to_string(i) + " in pivot step " +
                             std::to_string(t) + " (operator is not PSD)");
      if (d < 0.0) residual(i) = d = 0.0;
      if (best < 0 || d > best_val + kPivotTieTolerance) {
        best = i;
        best_val = d;
      }
    }
    if (best < 0 || best_val <= stop || best_val <= 0.0) break;

    Eigen::VectorXd col = op.column(best);
    if (t > 0) col.noalias() -= P.leftCols(t) * P.row(best).head(t).transpose();
    const double pivot = std::sqrt(best_val);
    P.col(t) = col / pivot;
    taken[static_cast<std::size_t>(best)] = true;
    out.pivots.push_back(best);

    // Earlier landmark rows are reproduced exactly, so their entries in the
    // new column vanish; pin them to keep P_B exactly lower triangular.
    for (std::size_t s = 0; s + 1 < out.pivots.size(); ++s) P(out.pivots[s], t) = 0.0;
    P(best, t) = pivot;
    residual -= P.col(t).cwiseAbs2();
    residual(best) = 0.0;
    double trace = 0.0;
    for (Eigen::Index i = 0; i < m; ++i)
      if (!taken[static_cast<std::size_t>(i)]) trace += std::max(residual(i), 0.0);
    out.trace_history.push_back(trace);
  }

  out.P = P.leftCols(t);
  out.residual_trace = out.trace_history.back();
  out.triangular_landmarks = true;
  return out;
}

inline LowRankFactor pivoted_cholesky(const Eigen::MatrixXd& features, const KernelSpec& spec,
                                      Eigen::Index r, std::optional<double> tol = std::nullopt) {
  return pivoted_cholesky(KernelOperator(spec, features), r, tol);
}

/// P = K_MB * K_BB^{-1/2} from externally chosen landmark blocks. The rows of
/// P at the landmarks are not triangular, so solvers fall back to a general
/// r x r solve. `pivots` is left empty unless the caller fills it in.
inline LowRankFactor from_nystrom(const Eigen::MatrixXd& K_MB, const Eigen::MatrixXd& K_BB) {
  const Eigen::Index r = K_BB.rows();
  if (r < 1 || K_BB.cols() != r || K_MB.cols() != r)
    throw InvalidInput("from_nystrom: K_BB must be r x r and K_MB must be m x r");
  if (!K_BB.isApprox(K_BB.transpose(), 1e-10))
    throw InvalidInput("from_nystrom: K_BB is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (K_BB + K_BB.transpose()));
  const Eigen::VectorXd& w = eig.eigenvalues();
  const double scale = std::max(w.cwiseAbs().maxCoeff(), 1.0);
  if (w.minCoeff() <= 1e-12 * scale)
    throw NumericalError("from_nystrom: K_BB is singular (smallest eigenvalue " +
                         std::to_string(w.minCoeff()) + ")");
  const Eigen::MatrixXd inv_sqrt =
      eig.eigenvectors() * w.cwiseSqrt().cwiseInverse().asDiagonal() *
      eig.eigenvectors().transpose();
  LowRankFactor out;
  out.P = K_MB * inv_sqrt;
  out.triangular_landmarks = false;
  out.residual_trace = 0.0;
  return out;
}

/// Debug dump: "m,r" header, then the pivot list, then P row-major.
inline void write_factor_csv(std::ostream& os, const LowRankFactor& f) {
  os.precision(17);
  os << f.rows() << ',' << f.rank() << '\n';
  for (std::size_t t = 0; t < f.pivots.size(); ++t) os << (t ? "," : "") << f.pivots[t];
  os << '\n';
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index j = 0; j < f.rank(); ++j) os << (j ? "," : "") << f.P(i, j);
    os << '\n';
  }
}

}  // namespace srlssvm
