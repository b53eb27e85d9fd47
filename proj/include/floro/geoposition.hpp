#pragma once

// Fixed positional encodings: the 2D sin-cos table over patch indices and
// the geo-positional table built from georeferenced patch centroids.

#include <floro/tensor.hpp>

#include <Eigen/Core>

#include <optional>

namespace floro {

/// Six-value affine pixel -> projected-coordinate mapping, in GDAL order.
struct GeoTransform {
  double origin_x = 0.0;
  double pixel_width = 1.0;
  double row_rotation = 0.0;
  double origin_y = 0.0;
  double col_rotation = 0.0;
  double pixel_height = -1.0;

  /// Throws ContractError for zero pixel size or any rotation term.
  void validate() const;

  friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

struct PatchGrid {
  Index rows = 1;
  Index cols = 1;
  Index patch_size = 1;

  Index num_patches() const { return rows * cols; }
  void validate() const;

  /// Grid for an H x W image; throws ContractError unless P divides both.
  static PatchGrid for_image(Index height, Index width, Index patch_size);

  friend bool operator==(const PatchGrid&, const PatchGrid&) = default;
};

/// Global Web Mercator extent (EPSG:3857 meters).
struct MercatorBounds {
  double min_x = -20037508.34;
  double max_x = 20037508.34;
  double min_y = -20048966.10;
  double max_y = 20048966.10;

  void validate() const;
};

/// One (x, y) pair per row.
using Coords = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

template <typename S>
using Table = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Projected centre of every patch in row-major token order. Patch (row r,
/// col c) has column index G_i = c and row index G_j = r:
///   C_x = O_x + (c*P + P/2) * D_x,  C_y = O_y + (r*P + P/2) * D_y
Coords patch_centroids(const GeoTransform& gt, const PatchGrid& grid);

/// Affine rescale into [0, 1] by the Mercator bounds. Out-of-bounds
/// coordinates are clamped unless `clamp` is false.
Coords normalize_mercator(const Coords& coords, const MercatorBounds& bounds = {}, bool clamp = true);

/// Geo-positional table [L, D]: with omega_k = 10000^(-k/(D/2)) taken per raw
/// index k, entry k is sin(x w_k), cos(x w_k), sin(y w_k), cos(y w_k) for
/// k mod 4 = 0, 1, 2, 3.
template <typename S>
Table<S> geo_sincos_embedding(const Coords& normalized, Index dim);

/// Standard fixed 2D table [L, D]: first D/2 entries encode the patch row,
/// last D/2 the patch column, each as (sin, cos) pairs at 10000^(-m/(D/4)).
template <typename S>
Table<S> absolute_2d_sincos(const PatchGrid& grid, Index dim);

/// Geo table for one sample, or nullopt when no georeference exists.
template <typename S>
std::optional<Table<S>> geo_embedding_for(const std::optional<GeoTransform>& gt, const PatchGrid& grid, Index dim,
                                          const MercatorBounds& bounds = {});

/// tokens [B, L, D] + abs_pe [L, D] (+ geo_pe [L, D]) broadcast over the batch.
template <typename S>
Tensor<S> combine_positional(const Tensor<S>& tokens, const Table<S>& abs_pe, const std::optional<Table<S>>& geo_pe);

extern template Table<float> geo_sincos_embedding<float>(const Coords&, Index);
extern template Table<double> geo_sincos_embedding<double>(const Coords&, Index);
extern template Table<float> absolute_2d_sincos<float>(const PatchGrid&, Index);
extern template Table<double> absolute_2d_sincos<double>(const PatchGrid&, Index);
extern template std::optional<Table<float>> geo_embedding_for<float>(const std::optional<GeoTransform>&,
                                                                     const PatchGrid&, Index, const MercatorBounds&);
extern template std::optional<Table<double>> geo_embedding_for<double>(const std::optional<GeoTransform>&,
                                                                       const PatchGrid&, Index,
                                                                       const MercatorBounds&);
extern template Tensor<float> combine_positional<float>(const Tensor<float>&, const Table<float>&,
                                                        const std::optional<Table<float>>&);
extern template Tensor<double> combine_positional<double>(const Tensor<double>&, const Table<double>&,
                                                          const std::optional<Table<double>>&);

}  // namespace floro
