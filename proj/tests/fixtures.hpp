#pragma once

// Small hand-built samples for tests that should not depend on the synthetic generator.

#include <floro/modal_input.hpp>

#include <random>

namespace fixture {

inline floro::GeoTransform utm_like(double ox = 500000.0, double oy = 4650000.0, double res = 10.0) {
  floro::GeoTransform gt;
  gt.origin_x = ox;
  gt.origin_y = oy;
  gt.pixel_width = res;
  gt.pixel_height = -res;
  return gt;
}

/// Random in-range sample with the given streams present and every pixel valid.
inline floro::MultimodalSample random_sample(floro::Index h, floro::Index w,
                                             const std::array<bool, floro::kNumStreams>& present, std::mt19937_64& rng,
                                             std::optional<floro::GeoTransform> gt = utm_like(),
                                             const floro::StreamLayout& layout = {}) {
  floro::MultimodalSample s;
  s.id = "fixture";
  s.height = h;
  s.width = w;
  s.geotransform = gt;
  for (floro::Stream st : floro::kAllStreams) {
    if (!present[floro::index_of(st)]) continue;
    const auto r = floro::clip_range(st);
    std::uniform_real_distribution<float> u(r.lo, r.hi);
    floro::PixelArray px(layout[st] * h * w);
    for (auto& v : px) v = u(rng);
    s.set_stream(st, std::move(px));
  }
  return s;
}

inline constexpr std::array<bool, floro::kNumStreams> kAllPresent = {true, true, true, true, true, true};

}  // namespace fixture
