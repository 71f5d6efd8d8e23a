#pragma once

#include <Eigen/Dense>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "srlssvm/data.hpp"
#include "srlssvm/errors.hpp"
#include "srlssvm/kernels.hpp"

namespace srlssvm {

/// Decision function f(x) = sum_i alpha_i k(landmark_i, x) + b. Only the
/// landmark coefficients are stored; every other training coefficient is zero.
struct Model {
  Eigen::MatrixXd landmarks;  // r x l
  Eigen::VectorXd alpha;      // r
  double b = 0.0;
  KernelSpec kernel;
  Task task = Task::classification;

  Eigen::Index support_size() const { return alpha.size(); }
  Eigen::Index dim() const { return landmarks.cols(); }
};

inline constexpr double kSupportThreshold = 1e-12;

template <class X>
double predict_raw(const Model& model, const Eigen::MatrixBase<X>& x) {
  if (x.size() != model.dim())
    throw InvalidInput("predict: input has " + std::to_string(x.size()) +
                       " attributes, model expects " + std::to_string(model.dim()));
  double f = model.b;
  for (Eigen::Index i = 0; i < model.alpha.size(); ++i)
    f += model.alpha(i) * kernel_eval(model.kernel, model.landmarks.row(i), x);
  return f;
}

inline Eigen::VectorXd predict_raw(const Model& model, const Eigen::MatrixXd& X) {
  Eigen::VectorXd out(X.rows());
  for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict_raw(model, X.row(i));
  return out;
}

/// sgn f(x), with sgn(0) = +1.
template <class X>
double predict_class(const Model& model, const Eigen::MatrixBase<X>& x) {
  if (model.task != Task::classification)
    throw InvalidInput("predict_class called on a regression model");
  return predict_raw(model, x) >= 0.0 ? 1.0 : -1.0;
}

struct EvalReport {
  Task task = Task::classification;
  double accuracy = 0.0;  // classification only
  double rmse = 0.0;      // regression only
  Eigen::Index n_sv = 0;
  double predict_time_ms = 0.0;

  nlohmann::json to_json() const {
    nlohmann::json j{{"task", to_string(task)}, {"n_sv", n_sv},
                     {"predict_time_ms", predict_time_ms}};
    if (task == Task::classification)
      j["accuracy"] = accuracy;
    else
      j["rmse"] = rmse;
    return j;
  }
};

inline Eigen::Index count_support(const Eigen::VectorXd& alpha) {
  return (alpha.array().abs() > kSupportThreshold).count();
}

inline EvalReport evaluate(const Model& model, const Dataset& ds) {
  if (ds.size() < 1) throw InvalidInput("evaluate: empty dataset");
  if (ds.task != model.task)
    throw InvalidInput("evaluate: dataset task " + to_string(ds.task) + " does not match model task " +
                       to_string(model.task));
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::VectorXd f = predict_raw(model, ds.features);
  const auto t1 = std::chrono::steady_clock::now();

  EvalReport rep;
  rep.task = model.task;
  rep.n_sv = count_support(model.alpha);
  rep.predict_time_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  if (model.task == Task::classification) {
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < f.size(); ++i) hits += ((f(i) >= 0.0 ? 1.0 : -1.0) == ds.targets(i));
    rep.accuracy = static_cast<double>(hits) / static_cast<double>(f.size());
  } else {
    rep.rmse = std::sqrt((f - ds.targets).squaredNorm() / static_cast<double>(f.size()));
  }
  return rep;
}

/// Label-flip protocol with a trained reference model supplying |f(x)|.
inline Corrupted inject_label_outliers(const Dataset& ds, const Model& reference,
                                       double rate_pool = 0.30, double flip_fraction = 1.0 / 3.0,
                                       std::uint64_t seed = 0) {
  return inject_label_outliers(ds, predict_raw(reference, ds.features), rate_pool, flip_fraction,
                               seed);
}

// ---------------------------------------------------------------------------
// Persistence: JSON header with base64 encoded little-endian float64 arrays.

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kModelFormatName = "srlssvm-model";

namespace detail {

inline constexpr char kB64[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

inline std::string base64_encode(const std::vector<unsigned char>& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += kB64[(v >> 6) & 63];
    out += kB64[v & 63];
  }
  if (const std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t v = bytes[i] << 16;
    if (rest == 2) v |= bytes[i + 1] << 8;
    out += kB64[(v >> 18) & 63];
    out += kB64[(v >> 12) & 63];
    out += rest == 2 ? kB64[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

inline std::vector<unsigned char> base64_decode(const std::string& s, const std::string& field) {
  auto value = [&](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (s.size() % 4 != 0) throw ParseError("model field '" + field + "': bad base64 length", 0);
  std::vector<unsigned char> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int v[4];
    int pad = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = s[i + k];
      if (c == '=' && i + 4 == s.size() && k >= 2) {
        v[k] = 0;
        ++pad;
      } else if (pad > 0 || (v[k] = value(c)) < 0) {
        throw ParseError("model field '" + field + "': bad base64 character", i + k);
      }
    }
    const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
    out.push_back(static_cast<unsigned char>((w >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<unsigned char>((w >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(w & 0xff));
  }
  return out;
}

inline std::string encode_doubles(const double* data, std::size_t n) {
  std::vector<unsigned char> bytes(n * 8);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(data[i]);
    for (int k = 0; k < 8; ++k) bytes[i * 8 + k] = static_cast<unsigned char>(bits >> (8 * k));
  }
  return base64_encode(bytes);
}

inline std::vector<double> decode_doubles(const std::string& s, std::size_t expected,
                                          const std::string& field) {
  const auto bytes = base64_decode(s, field);
  if (bytes.size() != expected * 8)
    throw ParseError("model field '" + field + "': expected " + std::to_string(expected) +
                         " values, found " + std::to_string(bytes.size() / 8.0),
                     0);
  std::vector<double> out(expected);
  for (std::size_t i = 0; i < expected; ++i) {
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k) bits |= std::uint64_t{bytes[i * 8 + k]} << (8 * k);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

}  // namespace detail

inline nlohmann::json model_to_json(const Model& model) {
  // Landmarks are written row-major.
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = model.landmarks;
  return {
      {"format", kModelFormatName},
      {"version", kModelFormatVersion},
      {"kernel",
       {{"family", to_string(model.kernel.family)},
        {"sigma", detail::encode_doubles(&model.kernel.sigma, 1)}}},
      {"task", to_string(model.task)},
      {"r", model.landmarks.rows()},
      {"l", model.landmarks.cols()},
      {"b", detail::encode_doubles(&model.b, 1)},
      {"alpha", detail::encode_doubles(model.alpha.data(), static_cast<std::size_t>(model.alpha.size()))},
      {"landmarks", detail::encode_doubles(rows.data(), static_cast<std::size_t>(rows.size()))},
  };
}

inline Model model_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string{}) != kModelFormatName)
      throw ParseError("not an srlssvm model file", 0);
    const int version = j.at("version").get<int>();
    if (version != kModelFormatVersion)
      throw UnsupportedVersion("model format version " + std::to_string(version) +
                               " is not supported (expected " +
                               std::to_string(kModelFormatVersion) + ")");
    Model m;
    m.kernel.family = kernel_family_from_string(j.at("kernel").at("family").get<std::string>());
    m.kernel.sigma = detail::decode_doubles(j.at("kernel").at("sigma").get<std::string>(), 1, "sigma")[0];
    m.task = task_from_string(j.at("task").get<std::string>());
    const auto r = j.at("r").get<Eigen::Index>();
    const auto l = j.at("l").get<Eigen::Index>();
    if (r < 0 || l < 1) throw ParseError("model header has invalid shape", 0);
    m.b = detail::decode_doubles(j.at("b").get<std::string>(), 1, "b")[0];
    const auto alpha = detail::decode_doubles(j.at("alpha").get<std::string>(),
                                              static_cast<std::size_t>(r), "alpha");
    const auto lm = detail::decode_doubles(j.at("landmarks").get<std::string>(),
                                           static_cast<std::size_t>(r * l), "landmarks");
    m.alpha = Eigen::Map<const Eigen::VectorXd>(alpha.data(), r);
    m.landmarks = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        lm.data(), r, l);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("model file: ") + e.what(), 0);
  }
}

inline std::string serialize_model(const Model& model) { return model_to_json(model).dump(2) + "\n"; }

inline Model deserialize_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("model file: ") + e.what(), e.byte);
  }
  return model_from_json(j);
}

inline void save(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write model file '" + path + "'");
  out << serialize_model(model);
  if (!out) throw InvalidInput("failed writing model file '" + path + "'");
}

inline Model load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open model file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(text);
}

}  // namespace srlssvm
