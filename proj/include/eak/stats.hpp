#pragma once

// Group statistics: Welch two-sample t maps, Student-t tail probabilities via the
// regularized incomplete beta function, and Benjamini-Hochberg FDR.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "eak/error.hpp"
#include "eak/parallel.hpp"
#include "eak/signal.hpp"

namespace eak {

namespace detail {

// Continued fraction for I_x(a, b), modified Lentz.
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300, eps = 1e-16;
  const double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1, d = 1 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1) < eps) return h;
  }
  fail(ErrorKind::Numerical, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) fail(ErrorKind::Numerical, "incomplete beta needs a, b > 0");
  if (x <= 0) return 0;
  if (x >= 1) return 1;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1) / (a + b + 2)) return std::exp(log_front) * detail::beta_continued_fraction(a, b, x) / a;
  return 1 - std::exp(log_front) * detail::beta_continued_fraction(b, a, 1 - x) / b;
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
  if (!(df > 0)) fail(ErrorKind::Numerical, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0;
  return incomplete_beta(df / 2, 0.5, df / (df + t * t));
}

inline double student_t_cdf(double t, double df) {
  const double tail = student_t_two_sided_p(t, df) / 2;
  return t < 0 ? tail : 1 - tail;
}

struct WelchResult {
  double t = 0;
  double df = 0;
  double p = 1;
};

/// Welch t-test; t > 0 when mean(a) > mean(b). Two constant, equal groups give t = 0, p = 1.
inline WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorKind::GroupTooSmall, "each group needs at least 2 samples");
  auto moments = [](std::span<const double> x) {
    const double n = static_cast<double>(x.size());
    double m = 0;
    for (double v : x) m += v;
    m /= n;
    double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::pair{m, ss / (n - 1)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb, se2 = sa + sb;
  WelchResult r;
  if (se2 <= 0) {
    r.df = na + nb - 2;
    if (ma == mb) return r;
    r.t = ma > mb ? std::numeric_limits<double>::max() : -std::numeric_limits<double>::max();
    r.p = 0;
    return r;
  }
  r.t = (ma - mb) / std::sqrt(se2);
  r.df = se2 * se2 / (sa * sa / (na - 1) + sb * sb / (nb - 1));
  r.p = student_t_two_sided_p(r.t, r.df);
  return r;
}

struct TwoSampleMaps {
  StatMap t;
  StatMap p;
};

/// Voxelwise Welch test over the shared mask; group_a is the patient group.
inline TwoSampleMaps two_sample_t(const std::vector<StatMap>& group_a, const std::vector<StatMap>& group_b) {
  if (group_a.size() < 2 || group_b.size() < 2) fail(ErrorKind::GroupTooSmall, "each group needs at least 2 maps");
  const auto& ref = group_a.front();
  for (const auto* g : {&group_a, &group_b})
    for (const auto& m : *g)
      if (!(m.dims == ref.dims) || m.mask != ref.mask) fail(ErrorKind::DimensionMismatch, "maps must share grid and mask");
  TwoSampleMaps out{{ref.dims, std::vector<double>(ref.values.size(), 0.0), ref.mask, MapKind::t},
                    {ref.dims, std::vector<double>(ref.values.size(), 1.0), ref.mask, MapKind::p}};
  parallel_for(ref.values.size(), [&](std::size_t v) {
    if (!ref.mask[v]) return;
    std::vector<double> a, b;
    a.reserve(group_a.size());
    b.reserve(group_b.size());
    for (const auto& m : group_a) a.push_back(m.values[v]);
    for (const auto& m : group_b) b.push_back(m.values[v]);
    const auto r = welch_t(a, b);
    out.t.values[v] = r.t;
    out.p.values[v] = r.p;
  });
  return out;
}

struct FdrResult {
  std::vector<bool> reject;
  std::optional<double> p_threshold;  // largest rejected p-value
  std::size_t n_rejected = 0;
};

/// Benjamini-Hochberg at level q.
inline FdrResult fdr_bh(std::span<const double> p, double q) {
  if (!(q > 0 && q < 1)) fail(ErrorKind::Config, "FDR level must be in (0, 1)");
  for (double v : p)
    if (!(v >= 0 && v <= 1)) fail(ErrorKind::Numerical, "p-values must lie in [0, 1]");
  const std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  FdrResult r;
  r.reject.assign(m, false);
  for (std::size_t i = m; i >= 1; --i) {
    const double pi = p[order[i - 1]];
    if (pi <= static_cast<double>(i) / static_cast<double>(m) * q) {
      r.p_threshold = pi;
      break;
    }
  }
  if (r.p_threshold)
    for (std::size_t i = 0; i < m; ++i)
      if (p[i] <= *r.p_threshold) {
        r.reject[i] = true;
        ++r.n_rejected;
      }
  return r;
}

/// FDR over the masked voxels of a p-map; returns a per-voxel reject mask.
inline std::vector<std::uint8_t> fdr_reject_mask(const StatMap& p_map, double q) {
  const auto voxels = p_map.mask_voxels();
  std::vector<double> p;
  p.reserve(voxels.size());
  for (auto v : voxels) p.push_back(p_map.values[static_cast<std::size_t>(v)]);
  const auto r = fdr_bh(p, q);
  std::vector<std::uint8_t> mask(p_map.values.size(), 0);
  for (std::size_t i = 0; i < voxels.size(); ++i)
    if (r.reject[i]) mask[static_cast<std::size_t>(voxels[i])] = 1;
  return mask;
}

}  // namespace eak
