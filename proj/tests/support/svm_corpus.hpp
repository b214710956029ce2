#pragma once

// Fixed corpus of tiny SVM problems (<= 8 samples, <= 3 features) for oracle checks.

#include <cstdint>
#include <vector>

#include "eak/features.hpp"
#include "eak/rng.hpp"
#include "eak/svm.hpp"

namespace eak::testkit {

struct TinyProblem {
  FeatureMatrix X;
  TrainConfig cfg;
  KernelSpec kernel;
};

inline std::vector<TinyProblem> tiny_svm_corpus(std::size_t count = 30) {
  std::vector<TinyProblem> out;
  CounterRng rng(20240601);
  const double Cs[] = {0.5, 1.0, 10.0};
  for (std::size_t p = 0; p < count; ++p) {
    const auto n = static_cast<std::size_t>(2 + rng.below(7));  // 2..8
    const auto d = static_cast<std::size_t>(1 + rng.below(3));  // 1..3
    FeatureMatrix X(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      X.labels()[i] = i == 0 ? 1 : (i == 1 ? -1 : (rng.uniform() < 0.5 ? 1 : -1));
      for (std::size_t j = 0; j < d; ++j) X(i, j) = rng.uniform() + 0.3 * X.labels()[i] * (j == 0);
    }
    TrainConfig cfg;
    cfg.C = Cs[p % 3];
    cfg.kkt_tolerance = 1e-10;
    if (p % 5 == 4) cfg.class_weight_pos = 2.0;
    const KernelSpec k = p % 2 == 0 ? KernelSpec::linear() : KernelSpec::rbf(0.5 + static_cast<double>(p % 4));
    out.push_back({std::move(X), cfg, k});
  }
  return out;
}

}  // namespace eak::testkit
