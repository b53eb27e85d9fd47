#pragma once

// Scalar reference implementations shared by the unit and acceptance tests.
// Each one is written element by element, without the library's vectorized
// paths, so agreement is meaningful.

#include <floro/geoposition.hpp>

#include <cmath>
#include <utility>
#include <vector>

namespace oracle {

inline std::pair<double, double> centroid(const floro::GeoTransform& gt, long long row, long long col, long long p) {
  return {gt.origin_x + (col * p + p * 0.5) * gt.pixel_width, gt.origin_y + (row * p + p * 0.5) * gt.pixel_height};
}

inline double unit(double v, double lo, double hi) {
  double n = (v - lo) / (hi - lo);
  if (n < 0.0) n = 0.0;
  if (n > 1.0) n = 1.0;
  return n;
}

inline double omega(long long k, long long denom) {
  return std::exp(-static_cast<double>(k) / static_cast<double>(denom) * std::log(10000.0));
}

/// Geo table entry k for normalized (x, y) at width D.
inline double geo_entry(double x, double y, long long k, long long dim) {
  const double w = omega(k, dim / 2);
  switch (k % 4) {
    case 0: return std::sin(x * w);
    case 1: return std::cos(x * w);
    case 2: return std::sin(y * w);
    default: return std::cos(y * w);
  }
}

/// Absolute table entry k for patch (row, col) at width D.
inline double abs_entry(long long row, long long col, long long k, long long dim) {
  const long long half = dim / 2;
  const long long pos = k < half ? row : col;
  const long long j = k % half;
  const double w = omega(j / 2, dim / 4);
  return j % 2 == 0 ? std::sin(pos * w) : std::cos(pos * w);
}

/// Σ_p w_p Σ_k (pred - target)² / Σ_p w_p, or 0 when Σ w == 0.
inline double masked_mse(const std::vector<std::vector<double>>& pred, const std::vector<std::vector<double>>& target,
                         const std::vector<double>& w) {
  double num = 0.0, den = 0.0;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    double sq = 0.0;
    for (std::size_t k = 0; k < pred[p].size(); ++k) sq += (pred[p][k] - target[p][k]) * (pred[p][k] - target[p][k]);
    num += w[p] * sq;
    den += w[p];
  }
  return den == 0.0 ? 0.0 : num / den;
}

}  // namespace oracle
