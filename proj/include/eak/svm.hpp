#pragma once

// Binary soft-margin SVM trained on the dual
//
//   min_a  1/2 sum_h sum_k y_h y_k a_h a_k K(x_h, x_k) - sum_k a_k
//   s.t.   0 <= a_k <= C * weight(y_k),  sum_k a_k y_k = 0
//
// by pairwise coordinate descent (SMO), choosing the maximal KKT-violating
// pair each step. Decision: D(x) = sum_k a_k y_k K(x_k, x) + b.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/error.hpp"
#include "eak/features.hpp"
#include "eak/parallel.hpp"
#include "eak/rng.hpp"

namespace eak {

enum class KernelKind { linear, rbf };

struct KernelSpec {
  KernelKind kind = KernelKind::linear;
  double gamma = 1.0;

  static KernelSpec linear() { return {KernelKind::linear, 1.0}; }
  static KernelSpec rbf(double gamma) {
    if (!(gamma > 0) || !std::isfinite(gamma)) fail(ErrorKind::Config, "rbf gamma must be finite and > 0");
    return {KernelKind::rbf, gamma};
  }

  double operator()(std::span<const double> u, std::span<const double> v) const {
    if (kind == KernelKind::linear) {
      double s = 0;
      for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * v[i];
      return s;
    }
    double d2 = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      const double d = u[i] - v[i];
      d2 += d * d;
    }
    return std::exp(-gamma * d2);
  }

  friend bool operator==(const KernelSpec&, const KernelSpec&) = default;
};

struct TrainConfig {
  double C = 1.0;
  double class_weight_pos = 1.0;
  double class_weight_neg = 1.0;
  double kkt_tolerance = 1e-3;
  std::int64_t max_passes = 1'000'000;

  double bound(int y) const { return C * (y > 0 ? class_weight_pos : class_weight_neg); }

  void validate() const {
    for (double v : {C, class_weight_pos, class_weight_neg, kkt_tolerance})
      if (!(v > 0) || !std::isfinite(v)) fail(ErrorKind::Config, "SVM configuration values must be positive");
    if (max_passes < 1) fail(ErrorKind::Config, "max_passes must be positive");
  }
};

/// Balanced cost weights: positive errors weighted by n_neg / n_pos.
inline TrainConfig balanced_weights(TrainConfig cfg, const std::vector<int>& labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  const auto neg = static_cast<std::ptrdiff_t>(labels.size()) - pos;
  if (pos > 0 && neg > 0) {
    cfg.class_weight_pos = static_cast<double>(neg) / static_cast<double>(pos);
    cfg.class_weight_neg = 1.0;
  }
  return cfg;
}

struct SvmModel {
  std::vector<std::vector<double>> support_vectors;
  std::vector<double> alphas;
  std::vector<int> labels;
  double bias = 0;
  KernelSpec kernel;
  std::size_t dim = 0;
  TrainConfig config;
  double dual_objective = 0;
  std::int64_t iterations = 0;
  bool converged = true;
};

namespace detail {

inline std::vector<double> kernel_matrix(const FeatureMatrix& X, const KernelSpec& kernel) {
  const std::size_t n = X.rows();
  std::vector<double> K(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) K[i * n + j] = K[j * n + i] = kernel(X.row(i), X.row(j));
  return K;
}

}  // namespace detail

/// Solves the dual on an explicit kernel matrix. Returns the full alpha vector;
/// `bias`, `objective`, `iterations` and `converged` are filled in.
struct DualSolution {
  std::vector<double> alpha;
  double bias = 0;
  double objective = 0;
  std::int64_t iterations = 0;
  bool converged = true;
};

inline DualSolution solve_dual(std::span<const double> K, std::span<const int> y, const TrainConfig& cfg) {
  const std::size_t n = y.size();
  constexpr double tau = 1e-12;
  std::vector<double> alpha(n, 0.0), grad(n, -1.0), upper(n);
  for (std::size_t t = 0; t < n; ++t) upper[t] = cfg.bound(y[t]);
  auto Q = [&](std::size_t a, std::size_t b) { return y[a] * y[b] * K[a * n + b]; };
  auto in_up = [&](std::size_t t) { return y[t] > 0 ? alpha[t] < upper[t] : alpha[t] > 0; };
  auto in_low = [&](std::size_t t) { return y[t] > 0 ? alpha[t] > 0 : alpha[t] < upper[t]; };

  DualSolution sol;
  sol.converged = false;
  std::int64_t iter = 0;
  for (; iter < cfg.max_passes; ++iter) {
    std::size_t i = n, j = n;
    double gmax = -std::numeric_limits<double>::infinity(), gmin = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      if (in_up(t) && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low(t) && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    if (i == n || j == n || gmax - gmin < cfg.kkt_tolerance) {
      sol.converged = true;
      break;
    }

    const double old_i = alpha[i], old_j = alpha[j];
    const double Ci = upper[i], Cj = upper[j];
    if (y[i] != y[j]) {
      double quad = K[i * n + i] + K[j * n + j] - 2 * K[i * n + j];
      if (quad <= 0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0) {
        if (alpha[j] < 0) {
          alpha[j] = 0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = -diff;
      }
      if (diff > Ci - Cj) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = Ci - diff;
        }
      } else if (alpha[j] > Cj) {
        alpha[j] = Cj;
        alpha[i] = Cj + diff;
      }
    } else {
      double quad = K[i * n + i] + K[j * n + j] - 2 * K[i * n + j];
      if (quad <= 0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > Ci) {
        if (alpha[i] > Ci) {
          alpha[i] = Ci;
          alpha[j] = sum - Ci;
        }
      } else if (alpha[j] < 0) {
        alpha[j] = 0;
        alpha[i] = sum;
      }
      if (sum > Cj) {
        if (alpha[j] > Cj) {
          alpha[j] = Cj;
          alpha[i] = sum - Cj;
        }
      } else if (alpha[i] < 0) {
        alpha[i] = 0;
        alpha[j] = sum;
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += Q(t, i) * di + Q(t, j) * dj;
  }
  sol.iterations = iter;

  // b = -rho; rho averages y*grad over free vectors, else the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  double free_sum = 0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (alpha[t] >= upper[t]) {
      if (y[t] < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (alpha[t] <= 0) {
      if (y[t] > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++free_count;
      free_sum += yg;
    }
  }
  const double rho = free_count > 0 ? free_sum / static_cast<double>(free_count) : (ub + lb) / 2;
  sol.bias = std::isfinite(rho) ? -rho : 0.0;

  double obj = 0;
  for (std::size_t t = 0; t < n; ++t) obj += alpha[t] * (grad[t] - 1.0);
  sol.objective = 0.5 * obj;
  sol.alpha = std::move(alpha);
  return sol;
}

inline SvmModel train_svm(const FeatureMatrix& X, const TrainConfig& cfg, const KernelSpec& kernel) {
  cfg.validate();
  if (kernel.kind == KernelKind::rbf && (!(kernel.gamma > 0) || !std::isfinite(kernel.gamma)))
    fail(ErrorKind::Config, "rbf gamma must be finite and > 0");
  if (X.count_label(1) == 0 || X.count_label(-1) == 0)
    fail(ErrorKind::SingleClassInput, "training data needs both classes");
  for (double v : X.values())
    if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "training data contains NaN or Inf");

  const auto K = detail::kernel_matrix(X, kernel);
  const auto sol = solve_dual(K, X.labels(), cfg);

  SvmModel m;
  m.kernel = kernel;
  m.dim = X.cols();
  m.config = cfg;
  m.bias = sol.bias;
  m.dual_objective = sol.objective;
  m.iterations = sol.iterations;
  m.converged = sol.converged;
  for (std::size_t t = 0; t < X.rows(); ++t) {
    if (sol.alpha[t] <= 0) continue;
    const auto r = X.row(t);
    m.support_vectors.emplace_back(r.begin(), r.end());
    m.alphas.push_back(sol.alpha[t]);
    m.labels.push_back(X.labels()[t]);
  }
  return m;
}

inline double decision_value(const SvmModel& m, std::span<const double> x) {
  if (x.size() != m.dim)
    fail(ErrorKind::DimensionMismatch,
         "query has " + std::to_string(x.size()) + " features, model expects " + std::to_string(m.dim));
  double s = 0;
  for (std::size_t k = 0; k < m.alphas.size(); ++k) s += m.alphas[k] * m.labels[k] * m.kernel(m.support_vectors[k], x);
  return s + m.bias;
}

/// sign with sign(0) = +1.
inline int predict(const SvmModel& m, std::span<const double> x) { return decision_value(m, x) >= 0 ? 1 : -1; }

inline std::vector<double> linear_weights(const SvmModel& m) {
  if (m.kernel.kind != KernelKind::linear) fail(ErrorKind::NonLinearKernel, "explicit weights need a linear kernel");
  std::vector<double> w(m.dim, 0.0);
  for (std::size_t k = 0; k < m.alphas.size(); ++k) {
    const double c = m.alphas[k] * m.labels[k];
    for (std::size_t i = 0; i < m.dim; ++i) w[i] += c * m.support_vectors[k][i];
  }
  return w;
}

// Cross-validation

/// Stratified fold index per sample. Each class is shuffled independently and dealt
/// round-robin; the second class continues where the first stopped so fold totals balance.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
  std::vector<int> fold(labels.size(), 0);
  CounterRng rng(seed, 0x464f4c44);  // "FOLD"
  std::size_t offset = 0;
  for (int cls : {1, -1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t p = 0; p < idx.size(); ++p)
      fold[idx[p]] = static_cast<int>((offset + p) % static_cast<std::size_t>(k));
    offset += idx.size();
  }
  return fold;
}

struct Confusion {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::int64_t total() const { return tp + fp + fn + tn; }
  Confusion& operator+=(const Confusion& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  void add(int truth, int predicted) {
    if (truth > 0) (predicted > 0 ? tp : fn)++;
    else (predicted > 0 ? fp : tn)++;
  }
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct CvResult {
  double mean_accuracy = 0;
  int k = 0;
  std::vector<int> fold_assignment;
  std::vector<SvmModel> fold_models;
  std::vector<double> fold_accuracy;
  std::vector<Confusion> fold_confusion;
  std::vector<double> held_out_decision;  // per sample, from the model that did not see it
  std::vector<std::string> warnings;

  /// Mean of max(0, 1 - y f(x)) over held-out predictions.
  double held_out_hinge(const std::vector<int>& labels) const {
    double s = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) s += std::max(0.0, 1.0 - labels[i] * held_out_decision[i]);
    return labels.empty() ? 0.0 : s / static_cast<double>(labels.size());
  }
};

/// Lowers k to the smallest class count when needed; throws when that is below 2.
inline int effective_folds(const FeatureMatrix& X, int k, std::vector<std::string>* warnings = nullptr) {
  if (k < 2) fail(ErrorKind::TooFewFolds, "k-fold cross-validation needs k >= 2");
  const auto smallest = static_cast<int>(std::min(X.count_label(1), X.count_label(-1)));
  if (smallest < 2) fail(ErrorKind::TooFewSamples, "each class needs at least 2 samples for cross-validation");
  if (smallest < k) {
    if (warnings)
      warnings->push_back("k lowered from " + std::to_string(k) + " to " + std::to_string(smallest) +
                          " (smallest class size)");
    return smallest;
  }
  return k;
}

/// Cross-validates with a given fold assignment (values in [0, k)).
inline CvResult cross_validate(const FeatureMatrix& X, const std::vector<int>& folds, int k, const TrainConfig& cfg,
                               const KernelSpec& kernel) {
  CvResult res;
  res.k = k;
  res.fold_assignment = folds;
  res.fold_models.resize(static_cast<std::size_t>(k));
  res.fold_accuracy.resize(static_cast<std::size_t>(k));
  res.fold_confusion.resize(static_cast<std::size_t>(k));
  res.held_out_decision.assign(X.rows(), 0.0);
  parallel_for(static_cast<std::size_t>(k), [&](std::size_t f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == static_cast<int>(f) ? test : train).push_back(i);
    auto model = train_svm(X.select_rows(train), cfg, kernel);
    Confusion c;
    for (auto i : test) {
      const double d = decision_value(model, X.row(i));
      res.held_out_decision[i] = d;
      c.add(X.labels()[i], d >= 0 ? 1 : -1);
    }
    res.fold_confusion[f] = c;
    res.fold_accuracy[f] = c.total() ? static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total()) : 0.0;
    res.fold_models[f] = std::move(model);
  });
  double acc = 0;
  for (double a : res.fold_accuracy) acc += a;
  res.mean_accuracy = acc / k;
  return res;
}

inline CvResult k_fold_cv(const FeatureMatrix& X, int k, const TrainConfig& cfg, const KernelSpec& kernel,
                          std::uint64_t seed) {
  std::vector<std::string> warnings;
  const int kk = effective_folds(X, k, &warnings);
  auto res = cross_validate(X, stratified_folds(X.labels(), kk, seed), kk, cfg, kernel);
  res.warnings = std::move(warnings);
  return res;
}

// Serialization

inline nlohmann::json model_to_json(const SvmModel& m) {
  nlohmann::json j;
  j["kernel"] = {{"kind", m.kernel.kind == KernelKind::linear ? "linear" : "rbf"}, {"gamma", m.kernel.gamma}};
  j["dim"] = m.dim;
  j["bias"] = m.bias;
  j["alphas"] = m.alphas;
  j["labels"] = m.labels;
  j["support_vectors"] = m.support_vectors;
  j["config"] = {{"C", m.config.C},
                 {"class_weight_pos", m.config.class_weight_pos},
                 {"class_weight_neg", m.config.class_weight_neg},
                 {"kkt_tolerance", m.config.kkt_tolerance},
                 {"max_passes", m.config.max_passes}};
  j["dual_objective"] = m.dual_objective;
  j["converged"] = m.converged;
  return j;
}

inline SvmModel model_from_json(const nlohmann::json& j) {
  try {
    SvmModel m;
    const auto kind = j.at("kernel").at("kind").get<std::string>();
    m.kernel = {kind == "rbf" ? KernelKind::rbf : KernelKind::linear, j.at("kernel").at("gamma").get<double>()};
    m.dim = j.at("dim").get<std::size_t>();
    m.bias = j.at("bias").get<double>();
    m.alphas = j.at("alphas").get<std::vector<double>>();
    m.labels = j.at("labels").get<std::vector<int>>();
    m.support_vectors = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    const auto& c = j.at("config");
    m.config = {c.at("C").get<double>(), c.at("class_weight_pos").get<double>(), c.at("class_weight_neg").get<double>(),
                c.at("kkt_tolerance").get<double>(), c.at("max_passes").get<std::int64_t>()};
    m.dual_objective = j.value("dual_objective", 0.0);
    m.converged = j.value("converged", true);
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("model: ") + e.what());
  }
}

}  // namespace eak
