// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed constants below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "srlssvm/srlssvm.hpp"
#include "test_support.hpp"

using namespace srlssvm;

namespace {

constexpr double kLog2 = std::numbers::ln2;

// Criterion 1
constexpr int kLossGridPoints = 100000;
constexpr double kLossTaus[] = {0.5, 1.2, 2.0};
constexpr double kSmoothingPs[] = {10.0, 1e2, 1e4};
constexpr double kDcUlps = 4.0;
constexpr double kLossBudgetSec = 1.0;
// Criterion 2
constexpr double kGradStep = 1e-6;
constexpr double kGradTol = 1e-4;
constexpr double kGradBudgetSec = 1.0;
// Criterion 3
constexpr int kFactorDatasets = 20;
constexpr double kReconstructTol = 1e-8;
constexpr double kTraceOracleSlack = 1e-6;
constexpr double kFactorBudgetSec = 5.0;
// Criterion 4
constexpr int kOracleDatasets = 10;
constexpr Eigen::Index kOracleM = 50;
constexpr Eigen::Index kOracleTestPoints = 200;
constexpr double kOracleTol = 1e-6;
constexpr double kOracleBudgetSec = 30.0;
// Criterion 5
constexpr double kWarmStartTol = 1e-12;
constexpr double kPathTol = 1e-10;
constexpr int kPathInstances = 100;
// Criterion 6/7
constexpr int kRobustSeeds = 10;
constexpr double kRobustLambdaM = 1e-2;
constexpr double kRobustTau = 1.5;
constexpr Eigen::Index kRobustRank = 2;
constexpr int kMinSrNotWorse = 9;
constexpr double kStabilityPp = 1.0;
constexpr int kMinStable = 8;
constexpr double kOutlierWeightTol = 1e-3;
// Criterion 8
constexpr double kEpsilon = 1e-2;
constexpr int kMaxIter = 200;
constexpr double kDescentExtra = 1e-9;
constexpr int kMaxSyntheticIterations = 35;
// Criterion 9
constexpr Eigen::Index kScaleRank = 100;
constexpr Eigen::Index kScaleSizes[] = {1000, 2000, 4000, 8000};
constexpr int kScaleIterations = 20;
constexpr int kScaleTrials = 15;
constexpr double kScaleRatioLo = 1.4;
constexpr double kScaleRatioHi = 2.6;
constexpr double kScaleBudgetSec = 120.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("[%s] criterion %2d  %-28s %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

/// Runs recorded for criterion 8.
struct RunLog {
  std::string label;
  TrainReport report;
  double p = 1e4;
  bool synthetic_classification = false;
};
std::vector<RunLog> run_log;

TrainResult logged_train(const std::string& label, const Dataset& ds, const KernelSpec& spec,
                         const SolverConfig& cfg, bool synthetic = false,
                         const StepObserver& observer = {}) {
  TrainResult res = train(ds, spec, cfg, observer);
  run_log.push_back({label, res.report, cfg.p, synthetic});
  return res;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  const auto t0 = Clock::now();
  Outcome o;
  double worst_dc = 0.0, worst_gap = 0.0;
  for (double tau : kLossTaus) {
    std::vector<double> grid(kLossGridPoints);
    for (int i = 0; i < kLossGridPoints; ++i)
      grid[static_cast<std::size_t>(i)] = -10.0 * tau + 20.0 * tau * i / (kLossGridPoints - 1);
    if (!reweighted_identity_check(grid, tau)) {
      o.pass = false;
      o.detail += fmt("reweighting identity broken at tau=%g; ", tau);
    }
    for (double xi : grid) {
      const double lhs = squared_loss(xi) - l2_part(xi, tau);
      const double rhs = truncated_loss(xi, tau);
      const double bound = kDcUlps * std::numeric_limits<double>::epsilon() * std::max(1.0, squared_loss(xi));
      worst_dc = std::max(worst_dc, std::abs(lhs - rhs) / bound);
      for (double p : kSmoothingPs) {
        const double gap = smoothed_l2(xi, {tau, p}) - l2_part(xi, tau);
        const double excess = std::max(-gap, gap - kLog2 / p) * p;
        worst_gap = std::max(worst_gap, excess);
      }
    }
  }
  if (worst_dc > 1.0) {
    o.pass = false;
    o.detail += fmt("DC identity off by %.2f x bound; ", worst_dc);
  }
  if (worst_gap > 1e-9) {
    o.pass = false;
    o.detail += fmt("smoothing gap exceeds log2/p (scaled excess %.3g); ", worst_gap);
  }
  const double sec = seconds_since(t0);
  if (sec >= kLossBudgetSec) o.pass = false;
  o.detail += fmt("3x%d points, DC err <= %.2f of %g ulp bound, %.3f s", kLossGridPoints, worst_dc, kDcUlps, sec);
  return o;
}

Outcome criterion2() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  long checked = 0;
  for (double tau : kLossTaus)
    for (double p : kSmoothingPs) {
      const LossParams lp{tau, p};
      for (int i = 0; i < kLossGridPoints; ++i) {
        const double xi = -10.0 * tau + 20.0 * tau * i / (kLossGridPoints - 1);
        if (std::abs(std::abs(xi) - tau) <= 10.0 / std::sqrt(p)) continue;
        const double fd = (smoothed_l2(xi + kGradStep, lp) - smoothed_l2(xi - kGradStep, lp)) / (2 * kGradStep);
        worst = std::max(worst, std::abs(fd - smoothed_l2_grad(xi, lp)));
        ++checked;
      }
    }
  const double sec = seconds_since(t0);
  return {worst <= kGradTol && sec < kGradBudgetSec,
          fmt("%ld points, max |fd - grad| = %.2e (tol %.0e), %.3f s", checked, worst, kGradTol, sec)};
}

Outcome criterion3() {
  const auto t0 = Clock::now();
  Outcome o;
  double worst_rec = 0.0, worst_oracle = std::numeric_limits<double>::infinity();
  bool monotone = true;
  for (int d = 0; d < kFactorDatasets; ++d) {
    const Eigen::Index m = 20 + 4 * d;  // 20..96
    const Eigen::Index l = 1 + d % 5;
    const KernelSpec spec = KernelSpec::gaussian(0.5 + 0.25 * (d % 7));
    const Eigen::MatrixXd X = oracle::random_points(m, l, 1000 + static_cast<std::uint64_t>(d));
    const Eigen::MatrixXd K = oracle::dense_kernel(spec, X);
    const LowRankFactor full = pivoted_cholesky(X, spec, m);
    worst_rec = std::max(worst_rec, (K - full.P * full.P.transpose()).cwiseAbs().maxCoeff());
    for (std::size_t t = 1; t < full.trace_history.size(); ++t)
      monotone = monotone && full.trace_history[t] <= full.trace_history[t - 1];
    for (Eigen::Index r : {Eigen::Index{1}, m / 4, m / 2}) {
      if (r < 1) continue;
      const LowRankFactor f = pivoted_cholesky(X, spec, r);
      const Eigen::MatrixXd E = K - f.P * f.P.transpose();
      worst_oracle = std::min(worst_oracle, E.trace() - oracle::optimal_trace_error(K, f.rank()));
    }
  }
  const double sec = seconds_since(t0);
  o.pass = worst_rec <= kReconstructTol && monotone && worst_oracle >= -kTraceOracleSlack && sec < kFactorBudgetSec;
  o.detail = fmt("max |K - PP'| = %.2e, monotone=%s, min(trace - optimal) = %.2e, %.2f s", worst_rec,
                 monotone ? "yes" : "no", worst_oracle, sec);
  return o;
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  bool fixed_points = true;
  for (int d = 0; d < kOracleDatasets; ++d) {
    const auto seed = 2000 + static_cast<std::uint64_t>(d);
    Dataset ds = oracle::random_classification(kOracleM, 3, seed);
    oracle::flip_evenly(ds, kOracleM / 10);
    const KernelSpec spec = KernelSpec::gaussian(2.0);
    SolverConfig cfg;
    cfg.lambda_m = 0.1;
    cfg.tau = 1.0;
    cfg.rank_r = kOracleM;
    cfg.epsilon = kEpsilon;
    cfg.max_iter = kMaxIter;
    const auto lr = logged_train(fmt("oracle-%d", d), ds, spec, cfg);
    const auto dense = dense_reference_train(ds, spec, cfg);
    fixed_points = fixed_points && lr.report.converged && dense.converged &&
                   dense.iterations == lr.report.iterations;
    const Eigen::MatrixXd T = oracle::random_points(kOracleTestPoints, 3, seed + 7);
    worst = std::max(worst, (predict_raw(lr.model, T) - predict_raw(dense.model, T)).cwiseAbs().maxCoeff());
  }
  const double sec = seconds_since(t0);
  return {worst <= kOracleTol && fixed_points && sec < kOracleBudgetSec,
          fmt("max prediction gap %.2e (tol %.0e), both converged at equal t: %s, %.2f s", worst, kOracleTol,
              fixed_points ? "yes" : "no", sec)};
}

Outcome criterion5() {
  double worst_warm = 0.0, worst_path = 0.0;
  std::mt19937_64 rng(5);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int k = 0; k < kPathInstances; ++k) {
    const Eigen::Index m = 30 + (k % 5) * 10;
    const Eigen::Index r = 5 + k % 11;
    Dataset ds = (k % 2 == 0) ? oracle::random_classification(m, 3, 3000 + k)
                              : make_synthetic_regression(static_cast<int>(m), 3, 3000 + k);
    const KernelSpec spec = KernelSpec::gaussian(0.5 + 0.1 * (k % 4));
    const double lambda_m = std::pow(10.0, -2 + k % 3);
    const Precomputed pre = precompute(pivoted_cholesky(ds.features, spec, r), ds.targets, lambda_m);

    // Closed-form primal LSSVM on the factor: unit weights in the bordered
    // normal equations, solved independently of J.
    const StepResult closed = solve_weighted_lssvm(pre, Eigen::VectorXd::Ones(m));
    SolverConfig cfg;
    cfg.lambda_m = lambda_m;
    cfg.rank_r = r;
    cfg.max_iter = 1;
    StepResult first;
    train(pre, ds, spec, cfg, [&](int t, const StepResult& s) {
      if (t == 0) first = s;
    });
    const double scale = std::max(1.0, closed.upsilon.cwiseAbs().maxCoeff());
    worst_warm = std::max({worst_warm, (first.upsilon - closed.upsilon).cwiseAbs().maxCoeff() / scale,
                           std::abs(first.b - closed.b) / std::max(1.0, std::abs(closed.b)),
                           (first.xi - closed.xi).cwiseAbs().maxCoeff() / std::max(1.0, closed.xi.cwiseAbs().maxCoeff())});

    Eigen::VectorXd gamma(m);
    for (Eigen::Index i = 0; i < m; ++i) gamma(i) = (i % 3 == 0) ? nd(rng) : 0.0;
    const StepResult a = cccp_step(pre, gamma, UpdatePath::sparse);
    const StepResult b = cccp_step(pre, gamma, UpdatePath::direct);
    const double s = std::max(1.0, b.alpha.cwiseAbs().maxCoeff());
    worst_path = std::max({worst_path, (a.alpha - b.alpha).cwiseAbs().maxCoeff() / s,
                           (a.upsilon - b.upsilon).cwiseAbs().maxCoeff(), std::abs(a.b - b.b),
                           (a.xi - b.xi).cwiseAbs().maxCoeff()});
  }
  return {worst_warm <= kWarmStartTol && worst_path <= kPathTol,
          fmt("%d instances: warm start err %.2e (tol %.0e), sparse vs direct %.2e (tol %.0e)", kPathInstances,
              worst_warm, kWarmStartTol, worst_path, kPathTol)};
}

struct RobustRun {
  double sr_acc = 0, ls_acc = 0, clean_acc = 0;
  Eigen::Index n_sv = 0;
  double worst_outlier_weight = 0;
};
std::vector<RobustRun> robust_runs;

Outcome criterion6() {
  int not_worse = 0, stable = 0, sparse = 0;
  std::string accs;
  for (int seed = 0; seed < kRobustSeeds; ++seed) {
    const auto [noisy, test] = make_synthetic_linear(60, 100, 4, static_cast<std::uint64_t>(seed));
    std::vector<Eigen::Index> clean_rows(60);
    std::iota(clean_rows.begin(), clean_rows.end(), Eigen::Index{0});
    const Dataset clean = noisy.subset(clean_rows);
    const KernelSpec spec = KernelSpec::linear();
    SolverConfig cfg;
    cfg.lambda_m = kRobustLambdaM;
    cfg.tau = kRobustTau;
    cfg.rank_r = kRobustRank;
    cfg.epsilon = kEpsilon;
    cfg.max_iter = kMaxIter;

    const auto sr = logged_train(fmt("robust-%d", seed), noisy, spec, cfg, true);
    const auto sr_clean = logged_train(fmt("robust-clean-%d", seed), clean, spec, cfg, true);
    const Precomputed pre = precompute(pivoted_cholesky(noisy.features, spec, cfg.rank_r), noisy.targets, cfg.lambda_m);
    const Model ls = primal_lssvm_model(pre, noisy, spec);

    RobustRun rr;
    rr.sr_acc = evaluate(sr.model, test).accuracy;
    rr.clean_acc = evaluate(sr_clean.model, test).accuracy;
    rr.ls_acc = evaluate(ls, test).accuracy;
    rr.n_sv = sr.report.n_sv;
    for (Eigen::Index i = 60; i < noisy.size(); ++i)
      rr.worst_outlier_weight = std::max(rr.worst_outlier_weight, std::abs(sr.state.gamma(i) - sr.state.xi(i)));
    robust_runs.push_back(rr);

    not_worse += rr.sr_acc >= rr.ls_acc;
    stable += std::abs(rr.sr_acc - rr.clean_acc) * 100.0 <= kStabilityPp + 1e-9;
    sparse += rr.n_sv == cfg.rank_r;
    accs += fmt(" %.0f/%.0f/%.0f", 100 * rr.sr_acc, 100 * rr.ls_acc, 100 * rr.clean_acc);
  }
  return {not_worse >= kMinSrNotWorse && stable >= kMinStable && sparse == kRobustSeeds,
          fmt("SR>=LSSVM %d/10, stable %d/10, nSV=r %d/10; acc%% SR/LSSVM/clean:%s", not_worse, stable, sparse,
              accs.c_str())};
}

Outcome criterion7() {
  double worst = 0.0;
  for (const auto& r : robust_runs) worst = std::max(worst, r.worst_outlier_weight);
  return {!robust_runs.empty() && worst < kOutlierWeightTol,
          fmt("max |gamma - xi| over %zu flipped points = %.2e (tol %.0e)", robust_runs.size() * 4, worst,
              kOutlierWeightTol)};
}

Outcome criterion8() {
  int bad_conv = 0, bad_descent = 0, max_syn_iter = 0;
  double worst_rise = -std::numeric_limits<double>::infinity();
  for (const auto& r : run_log) {
    const auto& rep = r.report;
    if (!rep.converged || rep.iterations > kMaxIter || rep.gamma_change.back() >= kEpsilon) ++bad_conv;
    const double slack = 2.0 * kLog2 / r.p + kDescentExtra;
    for (std::size_t t = 1; t < rep.objective.size(); ++t) {
      const double rise = rep.objective[t] - rep.objective[t - 1];
      worst_rise = std::max(worst_rise, rise);
      if (rise > slack) {
        ++bad_descent;
        break;
      }
    }
    if (r.synthetic_classification) max_syn_iter = std::max(max_syn_iter, rep.iterations);
  }
  return {bad_conv == 0 && bad_descent == 0 && max_syn_iter <= kMaxSyntheticIterations && !run_log.empty(),
          fmt("%zu runs: %d not converged, %d descent violations (max step rise %.2e), max synthetic iterations %d",
              run_log.size(), bad_conv, bad_descent, worst_rise, max_syn_iter)};
}

Outcome criterion9() {
  const auto t0 = Clock::now();
  std::vector<Dataset> sets;
  for (Eigen::Index m : kScaleSizes)
    sets.push_back(inject_target_noise(make_synthetic_regression(static_cast<int>(m), 4, 9), 0.1, 9).data);
  SolverConfig cfg;
  cfg.rank_r = kScaleRank;
  cfg.lambda_m = 1e-2;
  cfg.tau = 0.5;
  cfg.epsilon = 1e-30;  // fixed iteration count at every m
  cfg.max_iter = kScaleIterations;
  // Sizes are interleaved so slow drift in machine load hits all of them.
  std::vector<double> times(sets.size(), std::numeric_limits<double>::infinity());
  for (int k = 0; k < kScaleTrials; ++k)
    for (std::size_t i = 0; i < sets.size(); ++i) {
      const auto s = Clock::now();
      const auto res = train(sets[i], KernelSpec::gaussian(1.0), cfg);
      times[i] = std::min(times[i], seconds_since(s));
      if (res.report.iterations != kScaleIterations) times[i] = std::numeric_limits<double>::quiet_NaN();
    }
  bool ok = true;
  std::string ratios;
  for (std::size_t i = 1; i < times.size(); ++i) {
    const double q = times[i] / times[i - 1];
    ok = ok && q >= kScaleRatioLo && q <= kScaleRatioHi;
    ratios += fmt(" %.2f", q);
  }
  const double sec = seconds_since(t0);
  return {ok && sec < kScaleBudgetSec,
          fmt("times(ms) %.1f %.1f %.1f %.1f, ratios%s (band [%.1f, %.1f]), %.1f s", 1e3 * times[0], 1e3 * times[1],
              1e3 * times[2], 1e3 * times[3], ratios.c_str(), kScaleRatioLo, kScaleRatioHi, sec)};
}

Outcome criterion10() {
  auto train_bytes = [](std::size_t chunks) {
    const auto [tr, te] = make_synthetic_linear(60, 100, 4, 3);
    SolverConfig cfg;
    cfg.rank_r = 20;
    cfg.tau = 1.0;
    cfg.gram_chunks = chunks;
    const auto res = train(tr, KernelSpec::gaussian(0.5), cfg);
    return serialize_model(res.model) + res.report.to_json(false).dump();
  };
  auto bench_bytes = [](std::size_t workers) {
    const Dataset ds = make_synthetic_regression(150, 3, 4);
    BenchConfig bc;
    bc.methods = {Method::srlssvm, Method::lssvm};
    bc.repeats = 4;
    SolverConfig cfg;
    cfg.rank_r = 15;
    std::ostringstream os;
    run_bench(ds, nullptr, KernelSpec::gaussian(1.0), cfg, bc, workers).write_csv(os, false);
    return os.str();
  };
  auto grid_bytes = [](std::size_t workers) {
    const auto [tr, te] = make_synthetic_linear(60, 100, 4, 1);
    SolverConfig cfg;
    cfg.rank_r = 10;
    return grid_search(tr, KernelFamily::gaussian, cfg, {{0.01, 0.1}, {0.5, 1.0}, {1.0, 1.5}}, 3, 2, workers)
        .to_json()
        .dump();
  };
  const bool model_same = train_bytes(8) == train_bytes(8);
  const bool bench_same = bench_bytes(1) == bench_bytes(1) && bench_bytes(1) == bench_bytes(3);
  const bool grid_same = grid_bytes(1) == grid_bytes(4);
  return {model_same && bench_same && grid_same,
          fmt("model+report identical: %s, bench identical across runs/workers: %s, grid: %s",
              model_same ? "yes" : "no", bench_same ? "yes" : "no", grid_same ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"loss identities", criterion1},
      {"gradient check", criterion2},
      {"pivoted Cholesky", criterion3},
      {"dense oracle equivalence", criterion4},
      {"warm start and update paths", criterion5},
      {"robustness on synthetic", criterion6},
      {"outlier weights", criterion7},
      {"convergence and descent", criterion8},
      {"linear-in-m scaling", criterion9},
      {"determinism", criterion10},
  };
  int id = 1;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    report(id++, name, o);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
