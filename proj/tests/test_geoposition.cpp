#include <floro/geoposition.hpp>
#include <floro/ops.hpp>

#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"

using namespace floro;

namespace {

GeoTransform worked_gt() {
  GeoTransform gt;
  gt.origin_x = 500000.0;
  gt.origin_y = 4650000.0;
  gt.pixel_width = 10.0;
  gt.pixel_height = -10.0;
  return gt;
}

}  // namespace

TEST(Centroids, WorkedAnchors) {
  const Coords c = patch_centroids(worked_gt(), PatchGrid{3, 3, 16});
  EXPECT_EQ(c(0, 0), 500080.0);
  EXPECT_EQ(c(0, 1), 4649920.0);
  // column 2, row 1
  EXPECT_EQ(c(1 * 3 + 2, 0), 500400.0);
  EXPECT_EQ(c(1 * 3 + 2, 1), 4649760.0);
}

TEST(Centroids, UnitResolution) {
  GeoTransform gt;
  gt.pixel_height = 1.0;
  const Coords c = patch_centroids(gt, PatchGrid{1, 1, 2});
  EXPECT_EQ(c(0, 0), 1.0);
  EXPECT_EQ(c(0, 1), 1.0);
}

TEST(Centroids, RejectsDegenerateInputs) {
  GeoTransform gt;
  gt.pixel_width = 0.0;
  EXPECT_THROW(patch_centroids(gt, PatchGrid{1, 1, 1}), ContractError);
  GeoTransform rot;
  rot.row_rotation = 0.1;
  EXPECT_THROW(patch_centroids(rot, PatchGrid{1, 1, 1}), ContractError);
  EXPECT_THROW(patch_centroids(GeoTransform{}, PatchGrid{0, 1, 1}), ContractError);
  EXPECT_THROW(PatchGrid::for_image(30, 32, 4), ContractError);
  EXPECT_EQ(PatchGrid::for_image(256, 256, 16).num_patches(), 256);
}

TEST(Normalize, Anchors) {
  Coords c(2, 2);
  c << 0.0, 0.0, 10018754.17, 0.0;
  const Coords n = normalize_mercator(c);
  EXPECT_EQ(n(0, 0), 0.5);
  EXPECT_EQ(n(0, 1), 0.5);
  EXPECT_NEAR(n(1, 0), 0.75, 1e-12);
}

TEST(Normalize, ClampsOutOfBounds) {
  Coords c(2, 2);
  c << -3e7, 3e7, 3e7, -3e7;
  const Coords n = normalize_mercator(c);
  EXPECT_EQ(n(0, 0), 0.0);
  EXPECT_EQ(n(0, 1), 1.0);
  EXPECT_EQ(n(1, 0), 1.0);
  EXPECT_EQ(n(1, 1), 0.0);
  const Coords raw = normalize_mercator(c, {}, false);
  EXPECT_LT(raw(0, 0), 0.0);
  EXPECT_GT(raw(0, 1), 1.0);
}

TEST(Normalize, TranslationByExtentShiftsByOne) {
  const MercatorBounds b;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e7, 1e7);
  for (int i = 0; i < 20; ++i) {
    Coords c(1, 2);
    c << u(rng), u(rng);
    Coords shifted = c;
    shifted(0, 0) += b.max_x - b.min_x;
    const double d = normalize_mercator(shifted, b, false)(0, 0) - normalize_mercator(c, b, false)(0, 0);
    EXPECT_NEAR(d, 1.0, 1e-12);
  }
}

TEST(Normalize, RejectsDegenerateBounds) {
  MercatorBounds b;
  b.max_x = b.min_x;
  EXPECT_THROW(normalize_mercator(Coords::Zero(1, 2), b), ContractError);
}

TEST(GeoEmbedding, Anchors) {
  Coords n(1, 2);
  n << 0.5, 0.0;
  const auto t4 = geo_sincos_embedding<double>(n, 4);
  EXPECT_NEAR(t4(0, 0), 0.4794255386, 1e-9);
  EXPECT_EQ(t4(0, 0), std::sin(0.5));
  Coords m(1, 2);
  m << 0.3, 0.7;
  const auto t8 = geo_sincos_embedding<double>(m, 8);
  // omega_3 = 10000^(-3/4) = 0.001 and slot 3 is cos(y * omega)
  EXPECT_NEAR(t8(0, 3), std::cos(0.7 * 0.001), 1e-15);
  EXPECT_THROW(geo_sincos_embedding<double>(m, 6), ContractError);
}

TEST(GeoEmbedding, MatchesLoopOracle) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Index rows = 1 + trial % 7, dim = 4 * (1 + trial % 5);
    Coords n(rows, 2);
    for (Index i = 0; i < rows; ++i) n.row(i) << u(rng), u(rng);
    const auto t = geo_sincos_embedding<double>(n, dim);
    for (Index i = 0; i < rows; ++i)
      for (Index k = 0; k < dim; ++k) EXPECT_NEAR(t(i, k), oracle::geo_entry(n(i, 0), n(i, 1), k, dim), 1e-12);
  }
}

TEST(AbsoluteEmbedding, MatchesLoopOracle) {
  for (int trial = 0; trial < 50; ++trial) {
    const PatchGrid g{1 + trial % 4, 1 + (trial / 4) % 5, 4};
    const Index dim = 4 * (1 + trial % 6);
    const auto t = absolute_2d_sincos<double>(g, dim);
    for (Index r = 0; r < g.rows; ++r)
      for (Index c = 0; c < g.cols; ++c)
        for (Index k = 0; k < dim; ++k) EXPECT_NEAR(t(r * g.cols + c, k), oracle::abs_entry(r, c, k, dim), 1e-12);
  }
}

TEST(AbsoluteEmbedding, OriginRowIsSinCosZero) {
  const auto t = absolute_2d_sincos<double>(PatchGrid{2, 2, 1}, 8);
  for (Index k = 0; k < 8; ++k) EXPECT_EQ(t(0, k), k % 2 == 0 ? 0.0 : 1.0);
}

TEST(CentroidAndNormalize, MatchLoopOracleOnRandomTransforms) {
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> ox(-2.5e7, 2.5e7), res(0.05, 500.0);
  const MercatorBounds b;
  for (int trial = 0; trial < 50; ++trial) {
    GeoTransform gt;
    gt.origin_x = ox(rng);
    gt.origin_y = ox(rng);
    gt.pixel_width = res(rng);
    gt.pixel_height = -res(rng);
    const PatchGrid g{1 + trial % 4, 1 + trial % 3, 1 + trial % 16};
    const Coords c = patch_centroids(gt, g);
    const Coords n = normalize_mercator(c, b);
    for (Index r = 0; r < g.rows; ++r)
      for (Index col = 0; col < g.cols; ++col) {
        const auto [cx, cy] = oracle::centroid(gt, r, col, g.patch_size);
        const Index t = r * g.cols + col;
        EXPECT_NEAR(c(t, 0), cx, 1e-12 * std::max(1.0, std::abs(cx)));
        EXPECT_NEAR(c(t, 1), cy, 1e-12 * std::max(1.0, std::abs(cy)));
        EXPECT_NEAR(n(t, 0), oracle::unit(cx, b.min_x, b.max_x), 1e-12);
        EXPECT_NEAR(n(t, 1), oracle::unit(cy, b.min_y, b.max_y), 1e-12);
      }
  }
}

TEST(GeoEmbeddingFor, AbsentWithoutGeotransform) {
  EXPECT_FALSE(geo_embedding_for<double>(std::nullopt, PatchGrid{2, 2, 4}, 8).has_value());
  const auto t = geo_embedding_for<double>(worked_gt(), PatchGrid{2, 2, 4}, 8);
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->rows(), 4);
}

TEST(CombinePositional, AddsBothTables) {
  const PatchGrid g{2, 2, 4};
  const auto abs = absolute_2d_sincos<double>(g, 8);
  const auto geo = geo_embedding_for<double>(worked_gt(), g, 8);
  auto tokens = Tensor<double>::zeros({3, 4, 8});
  const auto only_abs = combine_positional<double>(tokens, abs, std::nullopt);
  const auto both = combine_positional<double>(tokens, abs, geo);
  for (Index b = 0; b < 3; ++b)
    for (Index t = 0; t < 4; ++t)
      for (Index k = 0; k < 8; ++k) {
        const Index i = (b * 4 + t) * 8 + k;
        EXPECT_EQ(only_abs[i], abs(t, k));
        EXPECT_EQ(both[i], abs(t, k) + (*geo)(t, k));
      }
  EXPECT_THROW(combine_positional<double>(Tensor<double>::zeros({1, 3, 8}), abs, std::nullopt), ShapeError);
}
