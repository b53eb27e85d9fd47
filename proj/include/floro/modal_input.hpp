#pragma once

// Unified multimodal sample representation and its conversion to patch
// tokens. Optical spectral groups feed one token sequence, auxiliary
// modalities (elevation, SAR) another.

#include <floro/geoposition.hpp>
#include <floro/tensor.hpp>

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace floro {

enum class Stream : int { kBgr = 0, kRedEdge, kNir, kSwir, kElevation, kSar };

inline constexpr std::size_t kNumStreams = 6;
inline constexpr std::array<Stream, kNumStreams> kAllStreams = {Stream::kBgr,  Stream::kRedEdge,   Stream::kNir,
                                                                Stream::kSwir, Stream::kElevation, Stream::kSar};
inline constexpr std::array<Stream, 4> kOpticalStreams = {Stream::kBgr, Stream::kRedEdge, Stream::kNir, Stream::kSwir};
inline constexpr std::array<Stream, 2> kAuxStreams = {Stream::kElevation, Stream::kSar};

constexpr std::size_t index_of(Stream s) { return static_cast<std::size_t>(s); }
constexpr bool is_optical(Stream s) { return index_of(s) < 4; }

std::string_view stream_name(Stream s);
/// Parses BGR, RED_EDGE, NIR, SWIR, ELEVATION, SAR.
std::optional<Stream> parse_stream(std::string_view name);

/// Physical value range each stream is clipped to.
struct ValueRange {
  float lo;
  float hi;
};
ValueRange clip_range(Stream s);

/// Channel count per stream; defaults B2-B4 / B5 / B8 / B11-B12 / DEM / VV-VH.
struct StreamLayout {
  std::array<Index, kNumStreams> channels = {3, 1, 1, 2, 1, 2};

  Index operator[](Stream s) const { return channels[index_of(s)]; }
  void validate() const;
  friend bool operator==(const StreamLayout&, const StreamLayout&) = default;
};

using PixelArray = Eigen::ArrayXf;                             // [C, H, W] row-major
using ValidityMask = Eigen::Array<std::uint8_t, Eigen::Dynamic, 1>;  // [H, W], 1 = observed

struct StreamData {
  bool available = false;
  PixelArray pixels;      // empty when unavailable
  ValidityMask validity;  // empty when unavailable
};

/// One co-registered chip with every stream slot, present or not.
struct MultimodalSample {
  std::string id;
  Index height = 0;
  Index width = 0;
  std::array<StreamData, kNumStreams> streams;
  std::optional<GeoTransform> geotransform;
  std::optional<int> label;

  StreamData& stream(Stream s) { return streams[index_of(s)]; }
  const StreamData& stream(Stream s) const { return streams[index_of(s)]; }

  bool available(Stream s) const { return stream(s).available; }

  float& at(Stream s, Index c, Index y, Index x) { return stream(s).pixels[(c * height + y) * width + x]; }
  float at(Stream s, Index c, Index y, Index x) const { return stream(s).pixels[(c * height + y) * width + x]; }

  /// Installs a present stream with all pixels valid.
  void set_stream(Stream s, PixelArray pixels);
  /// Marks a stream absent and drops its data.
  void drop_stream(Stream s);

  /// Throws ContractError if sizes, channel counts or availability flags are inconsistent.
  void validate(const StreamLayout& layout, std::optional<Index> patch_size = std::nullopt) const;
};

/// Clamps every present stream to its physical range; validity is untouched.
MultimodalSample clip_modalities(MultimodalSample sample);

/// Fixed affine map of a clipped value onto [0, 1] using the stream's clip range.
inline float to_unit(Stream s, float v) {
  const auto r = clip_range(s);
  return (v - r.lo) / (r.hi - r.lo);
}

/// Per-patch fraction of valid pixels [L]; zeros for an absent stream.
Eigen::ArrayXd patch_validity_fraction(const MultimodalSample& sample, Stream s, Index patch_size);

/// Flattens [B, C, H, W] pixels into patch rows [B, L, P*P*C] ordered (py, px, c).
template <typename S>
Tensor<S> patchify_pixels(const Tensor<S>& pixels, Index patch_size);

/// Exact inverse of patchify_pixels.
template <typename S>
Tensor<S> unpatchify(const Tensor<S>& patches, const PatchGrid& grid, Index channels);

/// Reconstruction target rows [L, P*P*C] for one stream: clipped values mapped
/// to unit range, invalid pixels zero-filled, all zeros if the stream is absent.
template <typename S>
Table<S> patch_targets(const MultimodalSample& sample, Stream s, const StreamLayout& layout, Index patch_size);

/// Model-ready arrays for a batch of clipped samples.
template <typename S>
struct ModalBatch {
  Index batch = 0;
  PatchGrid grid;
  StreamLayout layout;
  /// Per stream [B*L, P*P*(C+1)]: unit-range pixels (zero where invalid) then the validity channel.
  std::array<Table<S>, kNumStreams> inputs;
  /// Per stream [B*L, P*P*C].
  std::array<Table<S>, kNumStreams> targets;
  /// Per stream [B*L] valid-pixel fractions.
  std::array<Eigen::Array<S, Eigen::Dynamic, 1>, kNumStreams> validity;
  /// availability[b][stream]
  std::vector<std::array<bool, kNumStreams>> availability;
  std::vector<std::optional<GeoTransform>> geotransforms;
};

template <typename S>
ModalBatch<S> prepare_batch(std::span<const MultimodalSample> samples, const StreamLayout& layout, Index patch_size);

/// Learned linear patch projection per stream plus a learned embedding that
/// stands in for a stream when it is unavailable.
template <typename S>
struct PatchEmbedding {
  std::array<Tensor<S>, kNumStreams> weight;        // [P*P*(C+1), D]
  std::array<Tensor<S>, kNumStreams> bias;          // [D]
  std::array<Tensor<S>, kNumStreams> availability;  // [D]
};

template <typename S>
struct TokenBundle {
  Tensor<S> optical;  // [B, L, D]
  Tensor<S> aux;      // [B, L, D]
  PatchGrid grid;
  std::vector<std::array<bool, kNumStreams>> availability;
};

/// Projects every stream, gates by availability, and sums streams within
/// the optical and auxiliary branches.
template <typename S>
TokenBundle<S> patchify(const ModalBatch<S>& batch, const PatchEmbedding<S>& embed);

extern template Tensor<float> patchify_pixels<float>(const Tensor<float>&, Index);
extern template Tensor<double> patchify_pixels<double>(const Tensor<double>&, Index);
extern template Tensor<float> unpatchify<float>(const Tensor<float>&, const PatchGrid&, Index);
extern template Tensor<double> unpatchify<double>(const Tensor<double>&, const PatchGrid&, Index);
extern template Table<float> patch_targets<float>(const MultimodalSample&, Stream, const StreamLayout&, Index);
extern template Table<double> patch_targets<double>(const MultimodalSample&, Stream, const StreamLayout&, Index);
extern template ModalBatch<float> prepare_batch<float>(std::span<const MultimodalSample>, const StreamLayout&, Index);
extern template ModalBatch<double> prepare_batch<double>(std::span<const MultimodalSample>, const StreamLayout&,
                                                         Index);
extern template TokenBundle<float> patchify<float>(const ModalBatch<float>&, const PatchEmbedding<float>&);
extern template TokenBundle<double> patchify<double>(const ModalBatch<double>&, const PatchEmbedding<double>&);

}  // namespace floro
