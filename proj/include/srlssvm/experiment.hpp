#pragma once

// Cross-validated grid search and repeated outlier benchmarks.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlssvm/data.hpp"
#include "srlssvm/errors.hpp"
#include "srlssvm/model.hpp"
#include "srlssvm/parallel.hpp"
#include "srlssvm/solver.hpp"

namespace srlssvm {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Population mean and standard deviation.
inline MeanStd mean_std(const std::vector<double>& v) {
  if (v.empty()) return {};
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / n)};
}

/// "0.03(0.00)"
inline std::string format_mean_std(const MeanStd& ms, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f(%.*f)", digits, ms.mean, digits, ms.std);
  return buf;
}

/// Classification: accuracy (higher is better). Regression: RMSE (lower).
inline double score(const Model& model, const Dataset& ds) {
  const auto rep = evaluate(model, ds);
  return ds.task == Task::classification ? rep.accuracy : rep.rmse;
}

// ---------------------------------------------------------------------------
// Grid search

struct ParameterGrid {
  std::vector<double> lambda_m;
  std::vector<double> sigma;
  std::vector<double> tau;
};

struct GridPoint {
  double lambda_m = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
  MeanStd score;
  int folds_used = 0;
};

struct GridSearchResult {
  Task task = Task::classification;
  std::vector<GridPoint> table;  // sorted by (lambda_m, sigma, tau)
  std::size_t best = 0;
  std::vector<std::string> warnings;

  const GridPoint& chosen() const { return table.at(best); }

  nlohmann::json to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& g : table)
      rows.push_back({{"mlambda", g.lambda_m},
                      {"sigma", g.sigma},
                      {"tau", g.tau},
                      {"score_mean", g.score.mean},
                      {"score_std", g.score.std},
                      {"folds", g.folds_used}});
    const auto& c = chosen();
    return {{"task", to_string(task)},
            {"metric", task == Task::classification ? "accuracy" : "rmse"},
            {"grid", rows},
            {"best", {{"mlambda", c.lambda_m}, {"sigma", c.sigma}, {"tau", c.tau}}},
            {"warnings", warnings}};
  }

  void write_csv(std::ostream& os) const {
    os.precision(17);
    os << "mlambda,sigma,tau," << (task == Task::classification ? "accuracy" : "rmse")
       << "_mean,std,folds,chosen\n";
    for (std::size_t i = 0; i < table.size(); ++i) {
      const auto& g = table[i];
      os << g.lambda_m << ',' << g.sigma << ',' << g.tau << ',' << g.score.mean << ',' << g.score.std
         << ',' << g.folds_used << ',' << (i == best ? 1 : 0) << '\n';
    }
  }
};

/// Contiguous folds over a seeded permutation of the rows.
inline std::vector<std::vector<Eigen::Index>> make_folds(Eigen::Index m, int k, std::uint64_t seed) {
  if (k < 2 || k > m)
    throw InvalidInput("cross-validation needs 2 <= folds <= m (folds = " + std::to_string(k) +
                       ", m = " + std::to_string(m) + ")");
  const auto perm = shuffled_indices(m, seed);
  std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < m; ++i) folds[static_cast<std::size_t>(i * k / m)].push_back(perm[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Picks the best row: best mean score, then larger lambda_m, smaller sigma,
/// larger tau. Rows that used no folds never win.
inline std::size_t select_best(const std::vector<GridPoint>& table, Task task) {
  std::size_t best = table.size();
  auto better = [&](const GridPoint& a, const GridPoint& b) {
    if (a.score.mean != b.score.mean)
      return task == Task::classification ? a.score.mean > b.score.mean : a.score.mean < b.score.mean;
    if (a.lambda_m != b.lambda_m) return a.lambda_m > b.lambda_m;
    if (a.sigma != b.sigma) return a.sigma < b.sigma;
    return a.tau > b.tau;
  };
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (table[i].folds_used == 0) continue;
    if (best == table.size() || better(table[i], table[best])) best = i;
  }
  return best;
}

/// k-fold cross-validated grid search. `base` supplies rank, p, epsilon,
/// max_iter and annealing; the grid overrides lambda_m, sigma and tau. For a
/// linear kernel the sigma axis is ignored.
inline GridSearchResult grid_search(const Dataset& ds, KernelFamily family, const SolverConfig& base,
                                    ParameterGrid grid, int folds, std::uint64_t seed,
                                    std::size_t workers = worker_count()) {
  ds.validate();
  if (grid.lambda_m.empty() || grid.tau.empty() || (family == KernelFamily::gaussian && grid.sigma.empty()))
    throw InvalidInput("grid search needs nonempty m*lambda, sigma and tau grids");
  if (family == KernelFamily::linear) grid.sigma = {0.0};
  for (auto* axis : {&grid.lambda_m, &grid.sigma, &grid.tau}) {
    std::sort(axis->begin(), axis->end());
    axis->erase(std::unique(axis->begin(), axis->end()), axis->end());
  }

  const auto fold_rows = make_folds(ds.size(), folds, seed);
  GridSearchResult out;
  out.task = ds.task;

  // Split per fold once; skip folds whose training part has a single class.
  struct Fold {
    Dataset train, valid;
    bool usable = true;
  };
  std::vector<Fold> fs(fold_rows.size());
  for (std::size_t f = 0; f < fold_rows.size(); ++f) {
    std::vector<Eigen::Index> tr;
    for (std::size_t g = 0; g < fold_rows.size(); ++g)
      if (g != f) tr.insert(tr.end(), fold_rows[g].begin(), fold_rows[g].end());
    std::sort(tr.begin(), tr.end());
    fs[f].train = ds.subset(tr);
    fs[f].valid = ds.subset(fold_rows[f]);
    if (ds.task == Task::classification) {
      const auto pos = (fs[f].train.targets.array() > 0).count();
      if (pos == 0 || pos == fs[f].train.size()) {
        fs[f].usable = false;
        out.warnings.push_back("fold " + std::to_string(f) + " skipped: training part has a single class");
      }
    }
  }
  if (std::none_of(fs.begin(), fs.end(), [](const Fold& f) { return f.usable; }))
    throw InvalidInput("grid search: every fold was skipped");

  // One task per (lambda_m, sigma, fold); all taus reuse the same precompute.
  const std::size_t nl = grid.lambda_m.size(), ns = grid.sigma.size(), nt = grid.tau.size();
  const std::size_t nf = fs.size();
  std::vector<double> scores(nl * ns * nt * nf, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> task_errors(nl * ns * nf);
  parallel_for(nl * ns * nf, workers, [&](std::size_t task) {
    const std::size_t f = task % nf;
    const std::size_t s = (task / nf) % ns;
    const std::size_t l = task / (nf * ns);
    if (!fs[f].usable) return;
    const KernelSpec spec{family, grid.sigma[s]};
    SolverConfig cfg = base;
    cfg.lambda_m = grid.lambda_m[l];
    cfg.rank_r = std::min(base.rank_r, fs[f].train.size());
    try {
      const Precomputed pre = precompute(pivoted_cholesky(fs[f].train.features, spec, cfg.rank_r, cfg.pivot_tol),
                                         fs[f].train.targets, cfg.lambda_m, cfg.gram_chunks);
      for (std::size_t t = 0; t < nt; ++t) {
        cfg.tau = grid.tau[t];
        const auto res = train(pre, fs[f].train, spec, cfg);
        scores[((l * ns + s) * nt + t) * nf + f] = score(res.model, fs[f].valid);
      }
    } catch (const NumericalError& e) {
      task_errors[task] = e.what();
    }
  });

  for (std::size_t l = 0; l < nl; ++l)
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t t = 0; t < nt; ++t) {
        GridPoint g{grid.lambda_m[l], grid.sigma[s], grid.tau[t], {}, 0};
        std::vector<double> v;
        for (std::size_t f = 0; f < nf; ++f) {
          const double x = scores[((l * ns + s) * nt + t) * nf + f];
          if (!std::isnan(x)) v.push_back(x);
        }
        g.score = mean_std(v);
        g.folds_used = static_cast<int>(v.size());
        out.table.push_back(g);
      }
  for (std::size_t i = 0; i < task_errors.size(); ++i)
    if (!task_errors[i].empty()) out.warnings.push_back("numerical failure: " + task_errors[i]);
  out.best = select_best(out.table, ds.task);
  if (out.best == out.table.size()) throw NumericalError("grid search: no grid point could be trained");
  return out;
}

// ---------------------------------------------------------------------------
// Repeated outlier benchmark

enum class Method { srlssvm, lssvm };

inline std::string to_string(Method m) { return m == Method::srlssvm ? "srlssvm" : "lssvm"; }

inline Method method_from_string(const std::string& s) {
  if (s == "srlssvm" || s == "sr-lssvm") return Method::srlssvm;
  if (s == "lssvm") return Method::lssvm;
  throw InvalidInput("unknown method '" + s + "'");
}

struct BenchConfig {
  std::vector<Method> methods{Method::srlssvm};
  int repeats = 10;
  /// Net fraction of corrupted training samples. Classification flips labels
  /// inside a pool of the 30% samples farthest from the reference boundary.
  double outlier_rate = 0.1;
  double label_pool = 0.30;
  double train_fraction = 2.0 / 3.0;
  std::uint64_t seed = 0;
  bool normalize = true;
};

struct BenchRow {
  Method method = Method::srlssvm;
  Task task = Task::classification;
  double lambda_m = 0.0, sigma = 0.0, tau = 0.0;
  MeanStd iterations, train_seconds, n_sv, score;
  std::vector<double> per_repeat_score;
  int converged_runs = 0;
  int repeats = 0;
};

struct BenchResult {
  std::vector<BenchRow> rows;

  nlohmann::json to_json(bool with_timing = true) const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) {
      const bool cls = r.task == Task::classification;
      nlohmann::json j{{"method", to_string(r.method)},
                       {"task", to_string(r.task)},
                       {"mlambda", r.lambda_m},
                       {"sigma", r.sigma},
                       {"tau", r.tau},
                       {"repeats", r.repeats},
                       {"converged_runs", r.converged_runs},
                       {"iterations_mean", r.iterations.mean},
                       {"iterations_std", r.iterations.std},
                       {"nsv_mean", r.n_sv.mean},
                       {"nsv_std", r.n_sv.std},
                       {cls ? "accuracy_mean" : "rmse_mean", r.score.mean},
                       {cls ? "accuracy_std" : "rmse_std", r.score.std},
                       {cls ? "accuracy_per_repeat" : "rmse_per_repeat", r.per_repeat_score}};
      if (with_timing) {
        j["training_seconds_mean"] = r.train_seconds.mean;
        j["training_seconds_std"] = r.train_seconds.std;
      }
      arr.push_back(std::move(j));
    }
    return {{"rows", arr}};
  }

  /// Table-style CSV; numeric cells are "mean(std)". Accuracies in percent.
  void write_csv(std::ostream& os, bool with_timing = true) const {
    if (rows.empty()) return;
    const bool cls = rows.front().task == Task::classification;
    os << "Algorithms,mlambda,sigma,tau,Iterations," << (with_timing ? "Training," : "") << "nSVs,"
       << (cls ? "Accuracies(%)" : "RMSE") << '\n';
    for (const auto& r : rows) {
      MeanStd s = r.score;
      if (cls) s = {100.0 * s.mean, 100.0 * s.std};
      char params[128];
      std::snprintf(params, sizeof params, "%g,%g,%g", r.lambda_m, r.sigma, r.tau);
      os << to_string(r.method) << ',' << params << ',' << format_mean_std(r.iterations) << ','
         << (with_timing ? format_mean_std(r.train_seconds) + "," : "") << format_mean_std(r.n_sv)
         << ',' << format_mean_std(s, cls ? 2 : 4) << '\n';
    }
  }
};

namespace detail {

struct TrialOutcome {
  double iterations = 0, seconds = 0, n_sv = 0, score = 0;
  bool converged = false;
};

inline Dataset corrupt(const Dataset& train_ds, const KernelSpec& spec, const SolverConfig& config,
                       const BenchConfig& bench, std::uint64_t seed) {
  if (bench.outlier_rate <= 0.0) return train_ds;
  if (train_ds.task == Task::regression)
    return inject_target_noise(train_ds, bench.outlier_rate, seed).data;
  // Reference boundary: plain LSSVM on the clean training data.
  const Precomputed pre = precompute(pivoted_cholesky(train_ds.features, spec, config.rank_r, config.pivot_tol),
                                     train_ds.targets, config.lambda_m, config.gram_chunks);
  const Model reference = primal_lssvm_model(pre, train_ds, spec);
  const double flip = std::min(1.0, bench.outlier_rate / bench.label_pool);
  return inject_label_outliers(train_ds, reference, bench.label_pool, flip, seed).data;
}

}  // namespace detail

/// Runs `repeats` seeded trials of (split, normalize, inject outliers, train,
/// evaluate). With `test` given, the whole of `data` is the training pool and
/// no split happens.
inline BenchResult run_bench(const Dataset& data, const Dataset* test, const KernelSpec& spec,
                             const SolverConfig& config, const BenchConfig& bench,
                             std::size_t workers = worker_count()) {
  data.validate();
  spec.validate();
  if (bench.repeats < 1) throw InvalidInput("repeats must be >= 1");
  if (bench.methods.empty()) throw InvalidInput("bench needs at least one method");
  if (!(bench.outlier_rate >= 0.0 && bench.outlier_rate <= 1.0))
    throw InvalidInput("outlier rate must lie in [0, 1]");

  const std::size_t nm = bench.methods.size();
  const auto nr = static_cast<std::size_t>(bench.repeats);
  std::vector<detail::TrialOutcome> outcomes(nm * nr);
  parallel_for(nr, workers, [&](std::size_t rep) {
    const std::uint64_t seed = bench.seed + rep;
    Dataset tr, te;
    if (test) {
      tr = data;
      te = *test;
    } else {
      std::tie(tr, te) = split(data, bench.train_fraction, seed);
    }
    if (bench.normalize) {
      auto [ntr, norm] = normalize_minmax(tr);
      te = norm.apply(te);
      tr = std::move(ntr);
    }
    SolverConfig cfg = config;
    cfg.rank_r = std::min(cfg.rank_r, tr.size());
    const Dataset noisy = detail::corrupt(tr, spec, cfg, bench, seed);
    for (std::size_t k = 0; k < nm; ++k) {
      auto& o = outcomes[k * nr + rep];
      if (bench.methods[k] == Method::srlssvm) {
        const auto res = train(noisy, spec, cfg);
        o = {static_cast<double>(res.report.iterations), res.report.wall_time_ms / 1e3,
             static_cast<double>(res.report.n_sv), score(res.model, te), res.report.converged};
      } else {
        SolverConfig plain = cfg;
        plain.max_iter = 1;
        const auto res = train(noisy, spec, plain);
        o = {1.0, res.report.wall_time_ms / 1e3, static_cast<double>(res.report.n_sv),
             score(res.model, te), true};
      }
    }
  });

  BenchResult out;
  for (std::size_t k = 0; k < nm; ++k) {
    BenchRow row;
    row.method = bench.methods[k];
    row.task = data.task;
    row.lambda_m = config.lambda_m;
    row.sigma = spec.family == KernelFamily::gaussian ? spec.sigma : 0.0;
    row.tau = config.tau;
    row.repeats = bench.repeats;
    std::vector<double> it, sec, sv, sc;
    for (std::size_t rep = 0; rep < nr; ++rep) {
      const auto& o = outcomes[k * nr + rep];
      it.push_back(o.iterations);
      sec.push_back(o.seconds);
      sv.push_back(o.n_sv);
      sc.push_back(o.score);
      row.converged_runs += o.converged;
    }
    row.iterations = mean_std(it);
    row.train_seconds = mean_std(sec);
    row.n_sv = mean_std(sv);
    row.score = mean_std(sc);
    row.per_repeat_score = sc;
    out.rows.push_back(std::move(row));
  }
  return out;
}

}  // namespace srlssvm
