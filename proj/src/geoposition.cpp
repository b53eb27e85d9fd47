#include <floro/geoposition.hpp>

#include <floro/ops.hpp>

#include <algorithm>
#include <cmath>
#include <string>

namespace floro {

void GeoTransform::validate() const {
  if (pixel_width == 0.0 || pixel_height == 0.0) throw ContractError("geotransform has zero pixel size");
  if (row_rotation != 0.0 || col_rotation != 0.0)
    throw ContractError("rotated geotransforms are not supported");
}

void PatchGrid::validate() const {
  if (rows < 1 || cols < 1) throw ContractError("patch grid needs at least one row and column");
  if (patch_size < 1) throw ContractError("patch size must be >= 1");
}

PatchGrid PatchGrid::for_image(Index height, Index width, Index patch_size) {
  if (patch_size < 1) throw ContractError("patch size must be >= 1");
  if (height <= 0 || width <= 0 || height % patch_size != 0 || width % patch_size != 0)
    throw ContractError("image " + std::to_string(height) + "x" + std::to_string(width) +
                        " is not divisible into patches of size " + std::to_string(patch_size));
  return PatchGrid{height / patch_size, width / patch_size, patch_size};
}

void MercatorBounds::validate() const {
  if (!(min_x < max_x) || !(min_y < max_y)) throw ContractError("degenerate Mercator bounds");
}

Coords patch_centroids(const GeoTransform& gt, const PatchGrid& grid) {
  gt.validate();
  grid.validate();
  const double p = static_cast<double>(grid.patch_size);
  Coords out(grid.num_patches(), 2);
  for (Index r = 0; r < grid.rows; ++r)
    for (Index c = 0; c < grid.cols; ++c) {
      const Index t = r * grid.cols + c;
      out(t, 0) = gt.origin_x + (static_cast<double>(c) * p + p / 2.0) * gt.pixel_width;
      out(t, 1) = gt.origin_y + (static_cast<double>(r) * p + p / 2.0) * gt.pixel_height;
    }
  return out;
}

Coords normalize_mercator(const Coords& coords, const MercatorBounds& bounds, bool clamp) {
  bounds.validate();
  Coords out(coords.rows(), 2);
  out.col(0) = (coords.col(0).array() - bounds.min_x) / (bounds.max_x - bounds.min_x);
  out.col(1) = (coords.col(1).array() - bounds.min_y) / (bounds.max_y - bounds.min_y);
  if (clamp) out = out.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

template <typename S>
Table<S> geo_sincos_embedding(const Coords& normalized, Index dim) {
  if (dim <= 0 || dim % 4 != 0) throw ContractError("embedding dim must be a positive multiple of 4");
  const double half = static_cast<double>(dim) / 2.0;
  Eigen::ArrayXd omega(dim);
  for (Index k = 0; k < dim; ++k) omega[k] = std::pow(10000.0, -static_cast<double>(k) / half);

  Table<S> out(normalized.rows(), dim);
  for (Index t = 0; t < normalized.rows(); ++t) {
    const double x = normalized(t, 0);
    const double y = normalized(t, 1);
    for (Index k = 0; k < dim; ++k) {
      double v = 0.0;
      switch (k % 4) {
        case 0: v = std::sin(x * omega[k]); break;
        case 1: v = std::cos(x * omega[k]); break;
        case 2: v = std::sin(y * omega[k]); break;
        default: v = std::cos(y * omega[k]); break;
      }
      out(t, k) = static_cast<S>(v);
    }
  }
  return out;
}

template <typename S>
Table<S> absolute_2d_sincos(const PatchGrid& grid, Index dim) {
  if (dim <= 0 || dim % 4 != 0) throw ContractError("embedding dim must be a positive multiple of 4");
  grid.validate();
  const Index quarter = dim / 4;
  Eigen::ArrayXd omega(quarter);
  for (Index m = 0; m < quarter; ++m)
    omega[m] = std::pow(10000.0, -static_cast<double>(m) / static_cast<double>(quarter));

  Table<S> out(grid.num_patches(), dim);
  for (Index r = 0; r < grid.rows; ++r)
    for (Index c = 0; c < grid.cols; ++c) {
      const Index t = r * grid.cols + c;
      for (Index m = 0; m < quarter; ++m) {
        out(t, 2 * m) = static_cast<S>(std::sin(static_cast<double>(r) * omega[m]));
        out(t, 2 * m + 1) = static_cast<S>(std::cos(static_cast<double>(r) * omega[m]));
        out(t, dim / 2 + 2 * m) = static_cast<S>(std::sin(static_cast<double>(c) * omega[m]));
        out(t, dim / 2 + 2 * m + 1) = static_cast<S>(std::cos(static_cast<double>(c) * omega[m]));
      }
    }
  return out;
}

template <typename S>
std::optional<Table<S>> geo_embedding_for(const std::optional<GeoTransform>& gt, const PatchGrid& grid, Index dim,
                                          const MercatorBounds& bounds) {
  if (!gt) return std::nullopt;
  return geo_sincos_embedding<S>(normalize_mercator(patch_centroids(*gt, grid), bounds), dim);
}

template <typename S>
Tensor<S> combine_positional(const Tensor<S>& tokens, const Table<S>& abs_pe, const std::optional<Table<S>>& geo_pe) {
  if (tokens.rank() != 3 || tokens.dim(1) != abs_pe.rows() || tokens.dim(2) != abs_pe.cols())
    throw ShapeError("combine_positional: tokens " + to_string(tokens.shape()) + " vs table [" +
                     std::to_string(abs_pe.rows()) + "," + std::to_string(abs_pe.cols()) + "]");
  Table<S> pe = abs_pe;
  if (geo_pe) {
    if (geo_pe->rows() != abs_pe.rows() || geo_pe->cols() != abs_pe.cols())
      throw ShapeError("combine_positional: geo table does not match absolute table");
    pe += *geo_pe;
  }
  auto table = Tensor<S>::constant({pe.rows(), pe.cols()},
                                   Eigen::Map<const typename Tensor<S>::Array>(pe.data(), pe.size()));
  return add_broadcast(tokens, table);
}

template Table<float> geo_sincos_embedding<float>(const Coords&, Index);
template Table<double> geo_sincos_embedding<double>(const Coords&, Index);
template Table<float> absolute_2d_sincos<float>(const PatchGrid&, Index);
template Table<double> absolute_2d_sincos<double>(const PatchGrid&, Index);
template std::optional<Table<float>> geo_embedding_for<float>(const std::optional<GeoTransform>&, const PatchGrid&,
                                                              Index, const MercatorBounds&);
template std::optional<Table<double>> geo_embedding_for<double>(const std::optional<GeoTransform>&,
                                                                const PatchGrid&, Index, const MercatorBounds&);
template Tensor<float> combine_positional<float>(const Tensor<float>&, const Table<float>&,
                                                 const std::optional<Table<float>>&);
template Tensor<double> combine_positional<double>(const Tensor<double>&, const Table<double>&,
                                                   const std::optional<Table<double>>&);

}  // namespace floro
