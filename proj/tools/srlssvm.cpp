// Command-line front end: train, predict, eval, gridsearch, bench, synth.
//
// Exit codes: 0 success (non-convergence only warns), 2 usage error,
// 3 data error, 4 numerical error.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlssvm/srlssvm.hpp"

namespace {

using namespace srlssvm;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string data, test, model_path, out, report, format = "json";
  std::string task = "class", kernel = "gaussian";
  std::vector<double> sigma{1.0}, mlambda{1e-2}, tau{1.0};
  double p = 1e4, epsilon = 1e-2;
  Eigen::Index rank = 50;
  int max_iter = 200;
  std::optional<double> anneal_delta, tau_min;
  double outlier_rate = 0.1;
  std::uint64_t seed = 0;
  int repeats = 10, folds = 5;
  std::vector<std::string> methods{"srlssvm"};
  bool no_timing = false, no_normalize = false;
  // synth
  std::string kind = "linear", out_test;
  int n_train = 60, n_test = 100, n_outliers = 4, dim = 4;
};

Task parsed_task(const Options& o) {
  try {
    return task_from_string(o.task);
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

KernelSpec parsed_kernel(const Options& o, double sigma) {
  try {
    KernelSpec k{kernel_family_from_string(o.kernel), sigma};
    k.validate();
    return k;
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
}

double single(const std::vector<double>& v, const char* name) {
  if (v.size() != 1) throw UsageError(std::string("--") + name + " takes exactly one value here");
  return v.front();
}

SolverConfig solver_config(const Options& o, double lambda_m, double tau) {
  SolverConfig c;
  c.lambda_m = lambda_m;
  c.tau = tau;
  c.p = o.p;
  c.epsilon = o.epsilon;
  c.rank_r = o.rank;
  c.max_iter = o.max_iter;
  if (o.anneal_delta || o.tau_min) {
    if (!o.anneal_delta || !o.tau_min) throw UsageError("--anneal-delta and --tau-min go together");
    c.anneal = AnnealSchedule{*o.anneal_delta, *o.tau_min};
  }
  try {
    c.validate(std::max<Eigen::Index>(c.rank_r, 1));
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  return c;
}

Dataset load_data(const Options& o, const std::string& path, bool is_test = false) {
  const Task task = parsed_task(o);
  if (path.rfind("synthetic", 0) == 0) {
    if (task == Task::classification) {
      auto [tr, te] = make_synthetic_linear(o.n_train, o.n_test, o.n_outliers, o.seed);
      return is_test ? te : tr;
    }
    return make_synthetic_regression(is_test ? o.n_test : o.n_train, o.dim, o.seed + (is_test ? 1 : 0));
  }
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset '" + path + "'");
  return parse_sparse_text(in, task, path);
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write '" + path + "'");
  out << text;
}

int run_train(const Options& o) {
  const KernelSpec spec = parsed_kernel(o, single(o.sigma, "sigma"));
  const SolverConfig cfg = solver_config(o, single(o.mlambda, "mlambda"), single(o.tau, "tau"));
  if (o.data.empty()) throw UsageError("--data is required");
  const Dataset ds = load_data(o, o.data);
  if (cfg.rank_r > ds.size())
    throw InvalidInput("--rank " + std::to_string(cfg.rank_r) + " exceeds the number of samples m = " +
                       std::to_string(ds.size()) + " (requires r <= m)");
  const TrainResult res = train(ds, spec, cfg);

  const std::string model_path = o.out.empty() ? "model.json" : o.out;
  save(res.model, model_path);
  nlohmann::json rep = res.report.to_json(!o.no_timing);
  rep["warning"] = res.report.converged ? "" : "not converged within max_iter";
  write_text(o.report.empty() ? model_path + ".report.json" : o.report, rep.dump(2) + "\n");

  std::cerr << "iterations " << res.report.iterations << (res.report.converged ? "" : " (not converged)")
            << ", rank " << res.report.rank << ", nSVs " << res.report.n_sv;
  if (!o.no_timing) std::cerr << ", time " << res.report.wall_time_ms << " ms";
  std::cerr << '\n';
  if (!res.report.converged) std::cerr << "warning: not converged within max_iter\n";
  return 0;
}

int run_predict(const Options& o) {
  if (o.model_path.empty() || o.data.empty()) throw UsageError("--model and --data are required");
  const Model model = load(o.model_path);
  Options po = o;
  po.task = to_string(model.task);
  const Dataset ds = load_data(po, o.data);
  std::ostringstream os;
  os.precision(17);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    if (model.task == Task::classification)
      os << predict_class(model, ds.features.row(i)) << '\n';
    else
      os << predict_raw(model, ds.features.row(i)) << '\n';
  }
  write_text(o.out, os.str());
  return 0;
}

int run_eval(const Options& o) {
  if (o.model_path.empty() || o.data.empty()) throw UsageError("--model and --data are required");
  const Model model = load(o.model_path);
  Options po = o;
  po.task = to_string(model.task);
  const Dataset ds = load_data(po, o.data, true);
  nlohmann::json j = evaluate(model, ds).to_json();
  if (o.no_timing) j.erase("predict_time_ms");
  write_text(o.out, j.dump(2) + "\n");
  return 0;
}

int run_gridsearch(const Options& o) {
  if (o.mlambda.empty() || o.sigma.empty() || o.tau.empty()) throw UsageError("grids must be nonempty");
  if (o.data.empty()) throw UsageError("--data is required");
  const auto family = parsed_kernel(o, 1.0).family;
  for (double s : o.sigma) parsed_kernel(o, s);
  const SolverConfig base = solver_config(o, o.mlambda.front(), o.tau.front());
  Dataset ds = load_data(o, o.data);
  if (!o.no_normalize) ds = normalize_minmax(ds).first;
  const auto res = grid_search(ds, family, base, {o.mlambda, o.sigma, o.tau}, o.folds, o.seed);
  for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
  std::ostringstream os;
  if (o.format == "csv")
    res.write_csv(os);
  else
    os << res.to_json().dump(2) << '\n';
  write_text(o.out, os.str());
  const auto& c = res.chosen();
  std::cerr << "chosen mlambda=" << c.lambda_m << " sigma=" << c.sigma << " tau=" << c.tau
            << " score=" << c.score.mean << '\n';
  return 0;
}

int run_bench(const Options& o) {
  const KernelSpec spec = parsed_kernel(o, single(o.sigma, "sigma"));
  const SolverConfig cfg = solver_config(o, single(o.mlambda, "mlambda"), single(o.tau, "tau"));
  if (o.data.empty()) throw UsageError("--data is required");
  BenchConfig bc;
  bc.methods.clear();
  try {
    for (const auto& m : o.methods) bc.methods.push_back(method_from_string(m));
  } catch (const InvalidInput& e) {
    throw UsageError(e.what());
  }
  bc.repeats = o.repeats;
  bc.outlier_rate = o.outlier_rate;
  bc.seed = o.seed;
  bc.normalize = !o.no_normalize;
  const Dataset ds = load_data(o, o.data);
  std::optional<Dataset> test;
  if (!o.test.empty()) test = load_data(o, o.test, true);
  const auto res = run_bench(ds, test ? &*test : nullptr, spec, cfg, bc);
  std::ostringstream os;
  if (o.format == "csv")
    res.write_csv(os, !o.no_timing);
  else
    os << res.to_json(!o.no_timing).dump(2) << '\n';
  write_text(o.out, os.str());
  return 0;
}

int run_synth(const Options& o) {
  const Task task = parsed_task(o);
  Dataset tr, te;
  if (task == Task::classification) {
    std::tie(tr, te) = make_synthetic_linear(o.n_train, o.n_test, o.n_outliers, o.seed);
  } else {
    tr = make_synthetic_regression(o.n_train, o.dim, o.seed);
    te = make_synthetic_regression(o.n_test, o.dim, o.seed + 1);
  }
  if (o.out.empty()) throw UsageError("--out is required");
  auto dump = [&](const Dataset& d, const std::string& path) {
    std::ostringstream os;
    if (o.format == "csv")
      write_csv(os, d);
    else
      write_sparse_text(os, d);
    write_text(path, os.str());
  };
  dump(tr, o.out);
  if (!o.out_test.empty()) dump(te, o.out_test);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse robust least-squares SVM (truncated loss, low-rank kernel factor)"};
  app.set_config("--config", "", "Key-value config file (TOML/INI style); command-line flags override it");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sc) {
    sc->add_option("--task", o.task, "class or reg")->check(CLI::IsMember({"class", "reg", "classification", "regression"}));
    sc->add_option("--kernel", o.kernel, "gaussian or linear")->check(CLI::IsMember({"gaussian", "linear"}));
    sc->add_option("--sigma", o.sigma, "Gaussian width in exp(-sigma |x-z|^2) (list for gridsearch)")->delimiter(',');
    sc->add_option("--mlambda", o.mlambda, "Regularization m*lambda (list for gridsearch)")->delimiter(',');
    sc->add_option("--tau", o.tau, "Truncation level (list for gridsearch)")->delimiter(',');
    sc->add_option("--p", o.p, "Smoothing sharpness");
    sc->add_option("--epsilon", o.epsilon, "Stop when |gamma change| < epsilon");
    sc->add_option("--rank", o.rank, "Low-rank factor size r");
    sc->add_option("--max-iter", o.max_iter, "CCCP iteration cap");
    sc->add_option("--anneal-delta", o.anneal_delta, "Tau annealing factor in (0,1)");
    sc->add_option("--tau-min", o.tau_min, "Tau annealing floor");
    sc->add_option("--seed", o.seed, "Random seed");
    sc->add_option("--data", o.data, "Sparse text dataset, or 'synthetic'");
    sc->add_option("--out", o.out, "Output path ('-' for stdout)");
    sc->add_option("--format", o.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    sc->add_flag("--no-timing", o.no_timing, "Omit wall-clock fields for reproducible output");
    sc->add_option("--n-train", o.n_train, "Synthetic training size");
    sc->add_option("--n-test", o.n_test, "Synthetic test size");
    sc->add_option("--n-outliers", o.n_outliers, "Synthetic wrong-labeled points");
    sc->add_option("--dim", o.dim, "Synthetic regression dimension");
  };

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  common(train_cmd);
  train_cmd->add_option("--report", o.report, "TrainReport JSON path (default <out>.report.json)");

  auto* predict_cmd = app.add_subcommand("predict", "Predict with a saved model");
  common(predict_cmd);
  predict_cmd->add_option("--model", o.model_path, "Model file");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a saved model on a dataset");
  common(eval_cmd);
  eval_cmd->add_option("--model", o.model_path, "Model file");

  auto* grid_cmd = app.add_subcommand("gridsearch", "Cross-validated grid search over m*lambda, sigma, tau");
  common(grid_cmd);
  grid_cmd->add_option("--folds", o.folds, "Cross-validation folds");
  grid_cmd->add_flag("--no-normalize", o.no_normalize, "Skip [-1,1] attribute scaling");

  auto* bench_cmd = app.add_subcommand("bench", "Repeated outlier-injection benchmark");
  common(bench_cmd);
  bench_cmd->add_option("--test", o.test, "Held-out test set (otherwise a 2/3 split per repeat)");
  bench_cmd->add_option("--repeats", o.repeats, "Number of seeded trials");
  bench_cmd->add_option("--outlier-rate", o.outlier_rate, "Net fraction of corrupted training samples");
  bench_cmd->add_option("--methods", o.methods, "srlssvm,lssvm")->delimiter(',');
  bench_cmd->add_flag("--no-normalize", o.no_normalize, "Skip [-1,1] attribute scaling");

  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic dataset in sparse text format");
  common(synth_cmd);
  synth_cmd->add_option("--out-test", o.out_test, "Also write the matching test set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train_cmd) return run_train(o);
    if (*predict_cmd) return run_predict(o);
    if (*eval_cmd) return run_eval(o);
    if (*grid_cmd) return run_gridsearch(o);
    if (*bench_cmd) return run_bench(o);
    if (*synth_cmd) return run_synth(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitData;
  } catch (const UnsupportedVersion& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
