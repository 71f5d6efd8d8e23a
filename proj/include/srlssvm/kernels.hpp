#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "srlssvm/errors.hpp"

namespace srlssvm {

enum class KernelFamily { gaussian, linear };

inline std::string to_string(KernelFamily f) {
  return f == KernelFamily::gaussian ? "gaussian" : "linear";
}

inline KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "gaussian" || s == "rbf") return KernelFamily::gaussian;
  if (s == "linear") return KernelFamily::linear;
  throw InvalidInput("unknown kernel family '" + s + "'");
}

/// k(x, z) = exp(-sigma * |x - z|^2) for gaussian, x'z for linear.
struct KernelSpec {
  KernelFamily family = KernelFamily::gaussian;
  double sigma = 1.0;

  static KernelSpec gaussian(double sigma) { return {KernelFamily::gaussian, sigma}; }
  static KernelSpec linear() { return {KernelFamily::linear, 0.0}; }

  void validate() const {
    if (family == KernelFamily::gaussian && !(sigma > 0.0 && std::isfinite(sigma)))
      throw InvalidInput("gaussian kernel requires sigma > 0");
  }

  bool operator==(const KernelSpec&) const = default;
};

template <class XA, class XB>
double kernel_eval(const KernelSpec& spec, const Eigen::MatrixBase<XA>& x,
                   const Eigen::MatrixBase<XB>& z) {
  if (x.size() != z.size() || x.size() == 0)
    throw InvalidInput("kernel_eval: dimension mismatch (" + std::to_string(x.size()) +
                       " vs " + std::to_string(z.size()) + ")");
  switch (spec.family) {
    case KernelFamily::gaussian: {
      double d2 = 0.0;
      for (Eigen::Index k = 0; k < x.size(); ++k) {
        const double d = x(k) - z(k);
        d2 += d * d;
      }
      return std::exp(-spec.sigma * d2);
    }
    case KernelFamily::linear: {
      double s = 0.0;
      for (Eigen::Index k = 0; k < x.size(); ++k) s += x(k) * z(k);
      return s;
    }
  }
  return 0.0;
}

/// Column j of the kernel matrix over the rows of `features` (m x l).
inline Eigen::VectorXd kernel_column(const KernelSpec& spec,
                                     const Eigen::Ref<const Eigen::MatrixXd>& features,
                                     Eigen::Index j) {
  if (j < 0 || j >= features.rows())
    throw InvalidInput("kernel_column: index " + std::to_string(j) + " out of range [0, " +
                       std::to_string(features.rows()) + ")");
  const Eigen::Index m = features.rows();
  Eigen::VectorXd col(m);
  const auto xj = features.row(j);
  for (Eigen::Index i = 0; i < m; ++i) col(i) = kernel_eval(spec, features.row(i), xj);
  col(j) = kernel_eval(spec, xj, xj);
  return col;
}

inline Eigen::VectorXd kernel_diag(const KernelSpec& spec,
                                   const Eigen::Ref<const Eigen::MatrixXd>& features) {
  const Eigen::Index m = features.rows();
  if (spec.family == KernelFamily::gaussian) return Eigen::VectorXd::Ones(m);
  return features.rowwise().squaredNorm();
}

/// k(x, z_j) for every row z_j of `points`.
template <class X>
Eigen::VectorXd kernel_row(const KernelSpec& spec, const Eigen::MatrixBase<X>& x,
                           const Eigen::Ref<const Eigen::MatrixXd>& points) {
  Eigen::VectorXd out(points.rows());
  for (Eigen::Index j = 0; j < points.rows(); ++j) out(j) = kernel_eval(spec, x, points.row(j));
  return out;
}

/// Lazily evaluated kernel matrix: exposes only columns and the diagonal.
class KernelOperator {
 public:
  KernelOperator(KernelSpec spec, const Eigen::MatrixXd& features)
      : spec_(spec), features_(features) {
    spec_.validate();
  }

  Eigen::Index size() const { return features_.rows(); }
  Eigen::VectorXd column(Eigen::Index j) const { return kernel_column(spec_, features_, j); }
  Eigen::VectorXd diagonal() const { return kernel_diag(spec_, features_); }

 private:
  KernelSpec spec_;
  const Eigen::MatrixXd& features_;
};

}  // namespace srlssvm
