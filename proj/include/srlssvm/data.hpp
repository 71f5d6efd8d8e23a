#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "srlssvm/errors.hpp"

namespace srlssvm {

enum class Task { classification, regression };

inline std::string to_string(Task t) {
  return t == Task::classification ? "classification" : "regression";
}

inline Task task_from_string(const std::string& s) {
  if (s == "classification" || s == "class") return Task::classification;
  if (s == "regression" || s == "reg") return Task::regression;
  throw InvalidInput("unknown task '" + s + "'");
}

struct Dataset {
  Eigen::MatrixXd features;  // m x l
  Eigen::VectorXd targets;   // m
  Task task = Task::classification;
  std::string source;
  std::uint64_t seed = 0;
  /// Set when target-noise injection fell back to the mean absolute target.
  bool noise_scale_fallback = false;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index dim() const { return features.cols(); }

  void validate() const {
    if (features.rows() < 1 || features.cols() < 1)
      throw InvalidInput("dataset must have m >= 1 rows and l >= 1 attributes");
    if (targets.size() != features.rows())
      throw InvalidInput("dataset target count does not match row count");
    if (!features.allFinite() || !targets.allFinite())
      throw InvalidInput("dataset contains NaN or Inf");
    if (task == Task::classification)
      for (Eigen::Index i = 0; i < targets.size(); ++i)
        if (targets(i) != 1.0 && targets(i) != -1.0)
          throw InvalidInput("classification targets must be -1 or +1");
  }

  Dataset subset(const std::vector<Eigen::Index>& rows) const {
    Dataset out;
    out.features.resize(static_cast<Eigen::Index>(rows.size()), dim());
    out.targets.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      out.features.row(static_cast<Eigen::Index>(k)) = features.row(rows[k]);
      out.targets(static_cast<Eigen::Index>(k)) = targets(rows[k]);
    }
    out.task = task;
    out.source = source;
    out.seed = seed;
    return out;
  }
};

// ---------------------------------------------------------------------------
// Sparse text format: "label idx:val idx:val ..." with 1-based ascending
// indices. Omitted entries are zero. '#' starts a comment.

namespace detail {

inline bool parse_double(std::string_view tok, double& out) {
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  if (tok.empty()) return false;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

inline bool parse_index(std::string_view tok, long long& out) {
  if (tok.empty()) return false;
  const char* end = tok.data() + tok.size();
  auto [ptr, ec] = std::from_chars(tok.data(), end, out);
  return ec == std::errc() && ptr == end;
}

}  // namespace detail

inline Dataset parse_sparse_text(std::istream& in, Task task, std::string source = {}) {
  struct Row {
    double label;
    std::vector<std::pair<long long, double>> entries;
  };
  std::vector<Row> rows;
  long long dim = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    Row row;
    if (!detail::parse_double(tok, row.label))
      throw ParseError("line " + std::to_string(lineno) + ": bad label '" + tok + "'", lineno);
    long long last = 0;
    while (ls >> tok) {
      const auto colon = tok.find(':');
      long long idx = 0;
      double val = 0.0;
      if (colon == std::string::npos ||
          !detail::parse_index(std::string_view(tok).substr(0, colon), idx) ||
          !detail::parse_double(std::string_view(tok).substr(colon + 1), val))
        throw ParseError("line " + std::to_string(lineno) + ": bad token '" + tok + "'", lineno);
      if (idx < 1)
        throw ParseError("line " + std::to_string(lineno) + ": indices are 1-based", lineno);
      if (idx <= last)
        throw ParseError("line " + std::to_string(lineno) + ": indices must be ascending",
                         lineno);
      last = idx;
      row.entries.emplace_back(idx, val);
    }
    dim = std::max(dim, last);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInput("dataset is empty");
  if (dim < 1) throw InvalidInput("dataset has no attributes");

  Dataset ds;
  ds.task = task;
  ds.source = std::move(source);
  ds.features = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), dim);
  ds.targets.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (auto [idx, val] : rows[i].entries)
      ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(idx - 1)) = val;
    ds.targets(static_cast<Eigen::Index>(i)) = rows[i].label;
  }

  if (task == Task::classification) {
    std::set<double> labels(ds.targets.begin(), ds.targets.end());
    const bool signed_labels =
        std::all_of(labels.begin(), labels.end(), [](double v) { return v == 1.0 || v == -1.0; });
    if (!signed_labels) {
      if (labels.size() != 2)
        throw InvalidInput("classification data needs exactly two distinct labels, found " +
                           std::to_string(labels.size()));
      const double lo = *labels.begin();
      for (auto& y : ds.targets) y = (y == lo) ? -1.0 : 1.0;
    }
  }
  ds.validate();
  return ds;
}

inline Dataset parse_sparse_text(const std::string& text, Task task) {
  std::istringstream in(text);
  return parse_sparse_text(in, task);
}

inline Dataset load_sparse_text(const std::string& path, Task task) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset '" + path + "'");
  return parse_sparse_text(in, task, path);
}

inline void write_sparse_text(std::ostream& os, const Dataset& ds) {
  os.precision(17);
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    os << ds.targets(i);
    for (Eigen::Index j = 0; j < ds.dim(); ++j)
      if (ds.features(i, j) != 0.0) os << ' ' << (j + 1) << ':' << ds.features(i, j);
    os << '\n';
  }
}

/// CSV with header line "m,l,task", then one "y,x_1,...,x_l" row per sample.
inline void write_csv(std::ostream& os, const Dataset& ds) {
  os.precision(17);
  os << ds.size() << ',' << ds.dim() << ',' << to_string(ds.task) << '\n';
  for (Eigen::Index i = 0; i < ds.size(); ++i) {
    os << ds.targets(i);
    for (Eigen::Index j = 0; j < ds.dim(); ++j) os << ',' << ds.features(i, j);
    os << '\n';
  }
}

// ---------------------------------------------------------------------------
// Normalization

/// Per-attribute affine map onto [-1, 1] using training-set ranges.
struct NormalizationSpec {
  Eigen::VectorXd min;
  Eigen::VectorXd max;

  Dataset apply(const Dataset& ds) const {
    if (ds.dim() != min.size()) throw InvalidInput("normalization: attribute count mismatch");
    Dataset out = ds;
    for (Eigen::Index j = 0; j < ds.dim(); ++j) {
      const double range = max(j) - min(j);
      for (Eigen::Index i = 0; i < ds.size(); ++i)
        out.features(i, j) = range > 0.0 ? 2.0 * (ds.features(i, j) - min(j)) / range - 1.0 : 0.0;
    }
    return out;
  }
};

inline std::pair<Dataset, NormalizationSpec> normalize_minmax(const Dataset& ds) {
  if (ds.size() < 1) throw InvalidInput("normalize_minmax: empty dataset");
  NormalizationSpec spec{ds.features.colwise().minCoeff().transpose(),
                         ds.features.colwise().maxCoeff().transpose()};
  return {spec.apply(ds), std::move(spec)};
}

// ---------------------------------------------------------------------------
// Splitting and outlier injection

inline std::vector<Eigen::Index> shuffled_indices(Eigen::Index m, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw InvalidInput("split: fraction must lie in (0, 1)");
  const auto n_train =
      static_cast<Eigen::Index>(std::llround(train_fraction * static_cast<double>(ds.size())));
  if (n_train < 1 || n_train >= ds.size())
    throw InvalidInput("split: fraction " + std::to_string(train_fraction) + " of " +
                       std::to_string(ds.size()) + " samples leaves one side empty");
  auto idx = shuffled_indices(ds.size(), seed);
  std::vector<Eigen::Index> a(idx.begin(), idx.begin() + n_train);
  std::vector<Eigen::Index> b(idx.begin() + n_train, idx.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {ds.subset(a), ds.subset(b)};
}

struct Corrupted {
  Dataset data;
  std::vector<Eigen::Index> indices;  // ascending
};

/// Flips labels of a random `flip_fraction` of the `rate_pool` samples with the
/// largest |score| (scores come from a reference model trained on clean data).
inline Corrupted inject_label_outliers(const Dataset& ds, const Eigen::VectorXd& scores,
                                       double rate_pool, double flip_fraction,
                                       std::uint64_t seed) {
  if (ds.task != Task::classification)
    throw InvalidInput("label outliers require a classification dataset");
  if (scores.size() != ds.size()) throw InvalidInput("score count does not match dataset");
  if (!(rate_pool >= 0.0 && rate_pool <= 1.0) || !(flip_fraction >= 0.0 && flip_fraction <= 1.0))
    throw InvalidInput("outlier rates must lie in [0, 1]");
  std::vector<Eigen::Index> order(static_cast<std::size_t>(ds.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return std::abs(scores(a)) > std::abs(scores(b));
  });
  const auto pool = static_cast<std::size_t>(std::llround(rate_pool * static_cast<double>(ds.size())));
  const auto flips = static_cast<std::size_t>(std::llround(flip_fraction * static_cast<double>(pool)));
  std::vector<Eigen::Index> candidates(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(pool));
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  Corrupted out{ds, {candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(flips)}};
  std::sort(out.indices.begin(), out.indices.end());
  for (auto i : out.indices) out.data.targets(i) = -out.data.targets(i);
  return out;
}

/// Adds N(0, d^2) noise, d = mean(targets) / 2, to a random `rate` of targets.
inline Corrupted inject_target_noise(const Dataset& ds, double rate, std::uint64_t seed) {
  if (ds.task != Task::regression)
    throw InvalidInput("target noise requires a regression dataset");
  if (!(rate >= 0.0 && rate <= 1.0)) throw InvalidInput("noise rate must lie in [0, 1]");
  Corrupted out{ds, {}};
  double d = 0.5 * ds.targets.mean();
  if (d == 0.0) {
    d = 0.5 * ds.targets.cwiseAbs().mean();
    out.data.noise_scale_fallback = true;
  }
  d = std::abs(d);
  const auto count = static_cast<std::size_t>(std::llround(rate * static_cast<double>(ds.size())));
  auto idx = shuffled_indices(ds.size(), seed);
  out.indices.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count));
  std::sort(out.indices.begin(), out.indices.end());
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> noise(0.0, d);
  for (auto i : out.indices) out.data.targets(i) += d > 0.0 ? noise(rng) : 0.0;
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

/// Geometry of the two-blob linear problem. Class means are +/-(mu, mu) with
/// isotropic standard deviation `spread`; the Bayes-optimal boundary is
/// x1 + x2 = 0 with accuracy Phi(sqrt(2) mu / spread).
struct SyntheticLinearGeometry {
  double mu = 0.9;
  double spread = 1.0;
  /// Wrong-labeled points sit near +/-(depth, depth), inside the other class.
  double outlier_depth = 3.0;
  double outlier_jitter = 0.25;
};

inline std::pair<Dataset, Dataset> make_synthetic_linear(int n_train = 60, int n_test = 100,
                                                         int n_outliers = 4,
                                                         std::uint64_t seed = 0,
                                                         SyntheticLinearGeometry g = {}) {
  if (n_train < 1 || n_test < 1 || n_outliers < 0)
    throw InvalidInput("make_synthetic_linear: sizes must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto blob = [&](int n, int extra, const char* name) {
    Dataset ds;
    ds.task = Task::classification;
    ds.source = name;
    ds.seed = seed;
    ds.features.resize(n + extra, 2);
    ds.targets.resize(n + extra);
    for (int i = 0; i < n; ++i) {
      const double y = (i % 2 == 0) ? 1.0 : -1.0;
      ds.targets(i) = y;
      ds.features(i, 0) = y * g.mu + g.spread * gauss(rng);
      ds.features(i, 1) = y * g.mu + g.spread * gauss(rng);
    }
    return ds;
  };
  Dataset train = blob(n_train, n_outliers, "synthetic-linear/train");
  for (int k = 0; k < n_outliers; ++k) {
    const int i = n_train + k;
    const double side = (k % 2 == 0) ? 1.0 : -1.0;
    train.features(i, 0) = side * g.outlier_depth + g.outlier_jitter * gauss(rng);
    train.features(i, 1) = side * g.outlier_depth + g.outlier_jitter * gauss(rng);
    train.targets(i) = -side;
  }
  Dataset test = blob(n_test, 0, "synthetic-linear/test");
  return {std::move(train), std::move(test)};
}

/// Noisy sinc surface in `dim` dimensions on [-1, 1]^dim; targets are shifted
/// to a positive mean so multiplicative noise scales are meaningful.
inline Dataset make_synthetic_regression(int m, int dim = 4, std::uint64_t seed = 0,
                                         double noise = 0.05) {
  if (m < 1 || dim < 1) throw InvalidInput("make_synthetic_regression: sizes must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::normal_distribution<double> gauss(0.0, noise);
  Dataset ds;
  ds.task = Task::regression;
  ds.source = "synthetic-sinc";
  ds.seed = seed;
  ds.features.resize(m, dim);
  ds.targets.resize(m);
  for (int i = 0; i < m; ++i) {
    double r2 = 0.0;
    for (int j = 0; j < dim; ++j) {
      ds.features(i, j) = unif(rng);
      r2 += ds.features(i, j) * ds.features(i, j);
    }
    const double r = 3.0 * std::sqrt(r2);
    ds.targets(i) = 2.0 + (r == 0.0 ? 1.0 : std::sin(r) / r) + gauss(rng);
  }
  return ds;
}

}  // namespace srlssvm
