#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlssvm/data.hpp"
#include "srlssvm/errors.hpp"
#include "srlssvm/kernels.hpp"
#include "srlssvm/losses.hpp"
#include "srlssvm/lowrank.hpp"
#include "srlssvm/model.hpp"
#include "srlssvm/parallel.hpp"

namespace srlssvm {

/// Shrinks tau geometrically whenever the inner iteration has settled.
struct AnnealSchedule {
  double delta = 0.9;
  double tau_min = 0.1;
};

struct SolverConfig {
  /// Regularization expressed as m * lambda.
  double lambda_m = 1e-2;
  double tau = 1.0;
  double p = 1e4;
  double epsilon = 1e-2;
  Eigen::Index rank_r = 50;
  int max_iter = 200;
  std::optional<AnnealSchedule> anneal;
  /// Pivoted Cholesky stopping threshold; defaults to 1e-12 * m.
  std::optional<double> pivot_tol;
  /// Row chunks used to accumulate P'P. The result depends on this count
  /// (at rounding level) but never on the number of worker threads.
  std::size_t gram_chunks = 8;

  LossParams loss() const { return {tau, p}; }

  void validate(Eigen::Index m) const {
    if (!(lambda_m > 0.0) || !std::isfinite(lambda_m)) throw InvalidInput("m*lambda must be > 0");
    loss().validate();
    if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be > 0");
    if (rank_r < 1) throw InvalidInput("rank must be >= 1");
    if (rank_r > m)
      throw InvalidInput("rank r = " + std::to_string(rank_r) + " exceeds the number of samples m = " +
                         std::to_string(m));
    if (max_iter < 1) throw InvalidInput("max_iter must be >= 1");
    if (gram_chunks < 1) throw InvalidInput("gram_chunks must be >= 1");
    if (anneal) {
      if (!(anneal->delta > 0.0 && anneal->delta < 1.0))
        throw InvalidInput("anneal delta must lie in (0, 1)");
      if (!(anneal->tau_min > 0.0)) throw InvalidInput("anneal tau_min must be > 0");
    }
  }
};

/// Everything the CCCP loop reuses: J = m*lambda*I + P'P - P_hat P_hat'/m
/// (Cholesky-factored once), G = (P_B')^{-1} J^{-1}, P_hat = P'e, and the
/// primal LSSVM solution both in landmark coefficients (alpha_ls) and in the
/// factor coordinates (upsilon_ls = P_B' alpha_ls).
struct Precomputed {
  LowRankFactor factor;
  Eigen::VectorXd y;
  double lambda_m = 0.0;
  Eigen::MatrixXd J;
  Eigen::LLT<Eigen::MatrixXd> J_llt;
  Eigen::MatrixXd G;
  Eigen::VectorXd P_hat;
  Eigen::VectorXd alpha_ls;
  Eigen::VectorXd upsilon_ls;
  Eigen::MatrixXd landmark_block;  // P_B
  Eigen::PartialPivLU<Eigen::MatrixXd> landmark_lu;  // only for non-triangular P_B

  Eigen::Index m() const { return factor.rows(); }
  Eigen::Index r() const { return factor.rank(); }

  /// alpha_B = (P_B')^{-1} v
  Eigen::VectorXd landmark_solve(const Eigen::VectorXd& v) const {
    if (factor.triangular_landmarks)
      return landmark_block.transpose().triangularView<Eigen::Upper>().solve(v);
    return landmark_lu.solve(v);
  }
};

/// P'P accumulated as a sum of per-chunk Gram blocks, chunks reduced in order.
inline Eigen::MatrixXd chunked_gram(const Eigen::MatrixXd& P, std::size_t chunks,
                                    std::size_t workers = worker_count()) {
  const Eigen::Index m = P.rows();
  const Eigen::Index r = P.cols();
  chunks = std::clamp<std::size_t>(chunks, 1, static_cast<std::size_t>(std::max<Eigen::Index>(m, 1)));
  std::vector<Eigen::MatrixXd> partial(chunks);
  const Eigen::Index step = (m + static_cast<Eigen::Index>(chunks) - 1) / static_cast<Eigen::Index>(chunks);
  parallel_for(chunks, workers, [&](std::size_t c) {
    const Eigen::Index lo = std::min(m, static_cast<Eigen::Index>(c) * step);
    const Eigen::Index hi = std::min(m, lo + step);
    partial[c] = Eigen::MatrixXd::Zero(r, r);
    if (hi > lo) {
      const auto block = P.middleRows(lo, hi - lo);
      partial[c].selfadjointView<Eigen::Lower>().rankUpdate(block.transpose());
      partial[c].triangularView<Eigen::StrictlyUpper>() = partial[c].transpose();
    }
  });
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(r, r);
  for (const auto& g : partial) gram += g;
  return gram;
}

inline Precomputed precompute(LowRankFactor factor, const Eigen::VectorXd& y, double lambda_m,
                              std::size_t gram_chunks = 8) {
  const Eigen::Index m = factor.rows();
  const Eigen::Index r = factor.rank();
  if (!(lambda_m > 0.0)) throw InvalidInput("precompute: m*lambda must be > 0");
  if (y.size() != m) throw InvalidInput("precompute: target length does not match factor rows");
  if (r < 1) throw InvalidInput("precompute: factor has rank 0");
  if (static_cast<Eigen::Index>(factor.pivots.size()) != r)
    throw InvalidInput("precompute: factor needs one landmark index per column");

  Precomputed pre;
  pre.y = y;
  pre.lambda_m = lambda_m;
  pre.P_hat = factor.P.colwise().sum().transpose();
  pre.J = chunked_gram(factor.P, gram_chunks);
  pre.J.noalias() -= (pre.P_hat * pre.P_hat.transpose()) / static_cast<double>(m);
  pre.J.diagonal().array() += lambda_m;

  pre.J_llt.compute(pre.J);
  if (pre.J_llt.info() != Eigen::Success || pre.J_llt.rcond() < 1e-14)
    throw NumericalError("J is numerically singular (condition estimate above 1e14); "
                         "increase m*lambda");

  pre.factor = std::move(factor);
  pre.landmark_block = pre.factor.landmark_block();
  if (!pre.factor.triangular_landmarks) {
    pre.landmark_lu.compute(pre.landmark_block.transpose());
    if (!(std::abs(pre.landmark_lu.determinant()) > 0.0))
      throw NumericalError("landmark block P_B is singular");
  }

  const Eigen::MatrixXd J_inv = pre.J_llt.solve(Eigen::MatrixXd::Identity(r, r));
  if (pre.factor.triangular_landmarks)
    pre.G = pre.landmark_block.transpose().triangularView<Eigen::Upper>().solve(J_inv);
  else
    pre.G = pre.landmark_lu.solve(J_inv);

  const Eigen::VectorXd rhs =
      pre.factor.P.transpose() * y - (y.sum() / static_cast<double>(m)) * pre.P_hat;
  pre.upsilon_ls = pre.J_llt.solve(rhs);
  pre.alpha_ls = pre.landmark_solve(pre.upsilon_ls);
  if (!pre.alpha_ls.allFinite()) throw NumericalError("primal LSSVM solution is not finite");
  return pre;
}

// ---------------------------------------------------------------------------
// One CCCP update

inline constexpr double kGammaSupportThreshold = 1e-12;

enum class UpdatePath {
  /// alpha = alpha_ls - G (P_S' gamma_S - mean(gamma) P_hat), touching only
  /// the rows where gamma is nonzero.
  sparse,
  /// alpha = (P_B')^{-1} J^{-1} P' (z - mean(z) e), z = y - gamma.
  direct,
};

struct StepResult {
  Eigen::VectorXd upsilon;  // P_B' alpha
  Eigen::VectorXd alpha;    // landmark coefficients
  double b = 0.0;
  Eigen::VectorXd xi;       // y - P upsilon - b
};

inline std::vector<Eigen::Index> gamma_support(const Eigen::VectorXd& gamma) {
  std::vector<Eigen::Index> s;
  for (Eigen::Index i = 0; i < gamma.size(); ++i)
    if (std::abs(gamma(i)) > kGammaSupportThreshold) s.push_back(i);
  return s;
}

namespace detail {

/// q = P_S' gamma_S - mean(gamma) P_hat
inline Eigen::VectorXd sparse_correction(const Precomputed& pre, const Eigen::VectorXd& gamma,
                                         const std::vector<Eigen::Index>& support) {
  Eigen::VectorXd q = -(gamma.sum() / static_cast<double>(pre.m())) * pre.P_hat;
  for (auto i : support) q += gamma(i) * pre.factor.P.row(i).transpose();
  return q;
}

inline void finish_step(const Precomputed& pre, const Eigen::VectorXd& gamma, StepResult& s) {
  const double m = static_cast<double>(pre.m());
  s.b = ((pre.y.sum() - gamma.sum()) - pre.P_hat.dot(s.upsilon)) / m;
  s.xi = pre.y - pre.factor.P * s.upsilon;
  s.xi.array() -= s.b;
}

}  // namespace detail

inline StepResult cccp_step(const Precomputed& pre, const Eigen::VectorXd& gamma,
                            UpdatePath path = UpdatePath::sparse) {
  if (gamma.size() != pre.m()) throw InvalidInput("cccp_step: gamma length must equal m");
  if (!gamma.allFinite()) throw InvalidInput("cccp_step: gamma is not finite");
  StepResult s;
  if (path == UpdatePath::sparse) {
    const Eigen::VectorXd q = detail::sparse_correction(pre, gamma, gamma_support(gamma));
    s.upsilon = pre.upsilon_ls - pre.J_llt.solve(q);
    s.alpha = pre.alpha_ls - pre.G * q;
  } else {
    Eigen::VectorXd z = pre.y - gamma;
    z.array() -= z.mean();
    s.upsilon = pre.J_llt.solve(pre.factor.P.transpose() * z);
    s.alpha = pre.landmark_solve(s.upsilon);
  }
  detail::finish_step(pre, gamma, s);
  return s;
}

// ---------------------------------------------------------------------------
// Objective

/// Smoothed primal objective (lambda/2)|upsilon|^2 + (1/m) sum L_smooth(xi_i)
/// on the low-rank kernel P P'.
inline double objective(const Eigen::VectorXd& upsilon, const Eigen::VectorXd& xi,
                        double lambda_m, const LossParams& lp) {
  const double m = static_cast<double>(xi.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i) loss += smoothed_truncated_loss(xi(i), lp);
  return 0.5 * (lambda_m / m) * upsilon.squaredNorm() + loss / m;
}

/// Same objective for a stored model, evaluated with the exact kernel:
/// (lambda/2) alpha' K_BB alpha + (1/m) sum L_smooth(y_i - f(x_i)).
inline double objective(const Model& model, const Dataset& ds, double lambda_m, const LossParams& lp) {
  if (ds.size() < 1) throw InvalidInput("objective: empty dataset");
  const Eigen::Index r = model.alpha.size();
  double reg = 0.0;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      reg += model.alpha(i) * model.alpha(j) *
             kernel_eval(model.kernel, model.landmarks.row(i), model.landmarks.row(j));
  const Eigen::VectorXd xi = ds.targets - predict_raw(model, ds.features);
  const double m = static_cast<double>(ds.size());
  double loss = 0.0;
  for (Eigen::Index i = 0; i < xi.size(); ++i) loss += smoothed_truncated_loss(xi(i), lp);
  return 0.5 * (lambda_m / m) * reg + loss / m;
}

// ---------------------------------------------------------------------------
// Training

struct TrainState {
  int t = 0;
  Eigen::VectorXd gamma;
  Eigen::VectorXd xi;
  Eigen::VectorXd upsilon;
  double b = 0.0;
  std::vector<Eigen::Index> support;  // S_t
};

struct TrainReport {
  int iterations = 0;
  bool converged = false;
  std::vector<double> gamma_change;
  std::vector<double> objective;
  std::vector<Eigen::Index> support_size;
  std::vector<double> tau;  // tau in force at each iteration
  Eigen::Index rank = 0;
  Eigen::Index n_sv = 0;
  double wall_time_ms = 0.0;

  nlohmann::json to_json(bool with_timing = true) const {
    nlohmann::json j{{"iterations", iterations},     {"converged", converged},
                     {"gamma_change", gamma_change}, {"objective", objective},
                     {"support_size", support_size}, {"tau", tau},
                     {"rank", rank},                 {"n_sv", n_sv}};
    if (with_timing) j["wall_time_ms"] = wall_time_ms;
    return j;
  }
};

struct TrainResult {
  Model model;
  TrainReport report;
  TrainState state;
};

inline Model make_model(const Precomputed& pre, const Eigen::MatrixXd& features,
                        const Eigen::VectorXd& upsilon, double b, const KernelSpec& spec, Task task) {
  Model model;
  model.kernel = spec;
  model.task = task;
  model.b = b;
  model.alpha = pre.landmark_solve(upsilon);
  model.landmarks.resize(pre.r(), features.cols());
  for (Eigen::Index t = 0; t < pre.r(); ++t) model.landmarks.row(t) = features.row(pre.factor.pivots[t]);
  return model;
}

/// Optional per-iteration hook (iteration index, step just taken).
using StepObserver = std::function<void(int, const StepResult&)>;

/// CCCP loop on precomputed factor algebra. Starts from gamma = 0, so the
/// first iterate is the primal LSSVM solution.
inline TrainResult train(const Precomputed& pre, const Dataset& ds, const KernelSpec& spec,
                         const SolverConfig& config, const StepObserver& observer = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  if (ds.size() != pre.m()) throw InvalidInput("train: dataset does not match the precomputed factor");
  config.validate(ds.size());

  LossParams lp = config.loss();
  TrainReport rep;
  TrainState st;
  st.gamma = Eigen::VectorXd::Zero(pre.m());
  StepResult step;

  while (true) {
    st.support = gamma_support(st.gamma);
    const Eigen::VectorXd q = detail::sparse_correction(pre, st.gamma, st.support);
    step.upsilon = pre.upsilon_ls - pre.J_llt.solve(q);
    detail::finish_step(pre, st.gamma, step);
    if (observer) {
      step.alpha = pre.landmark_solve(step.upsilon);
      observer(st.t, step);
    }

    if (st.t == 0 && config.anneal)
      lp.tau = std::max(config.anneal->delta * step.xi.cwiseAbs().maxCoeff(), config.anneal->tau_min);

    Eigen::VectorXd next(pre.m());
    for (Eigen::Index i = 0; i < pre.m(); ++i) next(i) = gamma(step.xi(i), lp);
    const double change = (next - st.gamma).norm();

    rep.gamma_change.push_back(change);
    rep.objective.push_back(objective(step.upsilon, step.xi, config.lambda_m, lp));
    rep.support_size.push_back(static_cast<Eigen::Index>(st.support.size()));
    rep.tau.push_back(lp.tau);
    st.gamma = std::move(next);
    ++st.t;

    if (change < config.epsilon) {
      if (config.anneal && lp.tau > config.anneal->tau_min) {
        lp.tau = std::max(lp.tau * config.anneal->delta, config.anneal->tau_min);
        for (Eigen::Index i = 0; i < pre.m(); ++i) st.gamma(i) = gamma(step.xi(i), lp);
      } else {
        rep.converged = true;
        break;
      }
    }
    if (st.t >= config.max_iter) break;
  }

  st.xi = step.xi;
  st.upsilon = step.upsilon;
  st.b = step.b;
  st.support = gamma_support(st.gamma);

  TrainResult out{make_model(pre, ds.features, step.upsilon, step.b, spec, ds.task), std::move(rep),
                  std::move(st)};
  out.report.iterations = out.state.t;
  out.report.rank = pre.r();
  out.report.n_sv = count_support(out.model.alpha);
  out.report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Factor the kernel, precompute, and run the CCCP loop.
inline TrainResult train(const Dataset& ds, const KernelSpec& spec, const SolverConfig& config,
                         const StepObserver& observer = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ds.validate();
  spec.validate();
  config.validate(ds.size());
  Precomputed pre = precompute(pivoted_cholesky(ds.features, spec, config.rank_r, config.pivot_tol),
                               ds.targets, config.lambda_m, config.gram_chunks);
  TrainResult out = train(pre, ds, spec, config, observer);
  out.report.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Annealed variant; `config.anneal` must be set.
inline TrainResult train_annealed(const Dataset& ds, const KernelSpec& spec, const SolverConfig& config) {
  if (!config.anneal) throw InvalidInput("train_annealed requires an anneal schedule");
  return train(ds, spec, config);
}

/// Plain primal LSSVM on the low-rank factor (the gamma = 0 iterate).
inline Model primal_lssvm_model(const Precomputed& pre, const Dataset& ds, const KernelSpec& spec) {
  StepResult s{pre.upsilon_ls, pre.alpha_ls, 0.0, {}};
  detail::finish_step(pre, Eigen::VectorXd::Zero(pre.m()), s);
  return make_model(pre, ds.features, s.upsilon, s.b, spec, ds.task);
}

/// Weighted LSSVM on the same factor:
/// min (m lambda / 2)|upsilon|^2 + 1/2 sum w_i (y_i - P_i upsilon - b)^2.
inline StepResult solve_weighted_lssvm(const Precomputed& pre, const Eigen::VectorXd& weights) {
  const Eigen::Index m = pre.m();
  const Eigen::Index r = pre.r();
  if (weights.size() != m) throw InvalidInput("weights length must equal m");
  const Eigen::MatrixXd& P = pre.factor.P;
  const Eigen::MatrixXd WP = weights.asDiagonal() * P;
  Eigen::MatrixXd A(r + 1, r + 1);
  A.topLeftCorner(r, r) = P.transpose() * WP;
  A.topLeftCorner(r, r).diagonal().array() += pre.lambda_m;
  A.topRightCorner(r, 1) = WP.colwise().sum().transpose();
  A.bottomLeftCorner(1, r) = A.topRightCorner(r, 1).transpose();
  A(r, r) = weights.sum();
  Eigen::VectorXd rhs(r + 1);
  rhs.head(r) = WP.transpose() * pre.y;
  rhs(r) = weights.dot(pre.y);
  const Eigen::VectorXd sol = A.ldlt().solve(rhs);
  StepResult s;
  s.upsilon = sol.head(r);
  s.b = sol(r);
  s.alpha = pre.landmark_solve(s.upsilon);
  s.xi = pre.y - P * s.upsilon;
  s.xi.array() -= s.b;
  return s;
}

// ---------------------------------------------------------------------------
// Dense reference solver (small problems only)

inline constexpr Eigen::Index kDenseReferenceLimit = 500;

struct DenseReferenceResult {
  Model model;  // one coefficient per training point
  int iterations = 0;
  bool converged = false;
  Eigen::VectorXd gamma;
  Eigen::VectorXd xi;
};

/// Iterates the full (m+1) x (m+1) bordered system
///   [I + K/(m lambda)  e] [beta]   [y - gamma]
///   [e'                0] [b   ] = [0        ]
/// with f(x) = sum_i beta_i k(x_i, x) / (m lambda) + b.
inline DenseReferenceResult dense_reference_train(const Dataset& ds, const KernelSpec& spec,
                                                  const SolverConfig& config) {
  ds.validate();
  spec.validate();
  const Eigen::Index m = ds.size();
  if (m > kDenseReferenceLimit)
    throw InvalidInput("dense_reference_train refuses m = " + std::to_string(m) + " > " +
                       std::to_string(kDenseReferenceLimit));
  SolverConfig cfg = config;
  cfg.rank_r = std::min<Eigen::Index>(cfg.rank_r, m);
  cfg.validate(m);
  const LossParams lp = cfg.loss();

  Eigen::MatrixXd K(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      K(i, j) = K(j, i) = kernel_eval(spec, ds.features.row(i), ds.features.row(j));

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m + 1, m + 1);
  A.topLeftCorner(m, m) = K / cfg.lambda_m;
  A.topLeftCorner(m, m).diagonal().array() += 1.0;
  A.topRightCorner(m, 1).setOnes();
  A.bottomLeftCorner(1, m).setOnes();
  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);

  DenseReferenceResult out;
  Eigen::VectorXd gam = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd beta;
  double b = 0.0;
  Eigen::VectorXd xi;
  for (int t = 0; t < cfg.max_iter; ++t) {
    Eigen::VectorXd rhs(m + 1);
    rhs.head(m) = ds.targets - gam;
    rhs(m) = 0.0;
    const Eigen::VectorXd sol = lu.solve(rhs);
    beta = sol.head(m);
    b = sol(m);
    xi = ds.targets - K * beta / cfg.lambda_m;
    xi.array() -= b;
    Eigen::VectorXd next(m);
    for (Eigen::Index i = 0; i < m; ++i) next(i) = gamma(xi(i), lp);
    const double change = (next - gam).norm();
    gam = std::move(next);
    out.iterations = t + 1;
    if (change < cfg.epsilon) {
      out.converged = true;
      break;
    }
  }
  out.model.kernel = spec;
  out.model.task = ds.task;
  out.model.landmarks = ds.features;
  out.model.alpha = beta / cfg.lambda_m;
  out.model.b = b;
  out.gamma = std::move(gam);
  out.xi = std::move(xi);
  return out;
}

}  // namespace srlssvm
