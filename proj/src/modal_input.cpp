#include <floro/modal_input.hpp>

#include <floro/ops.hpp>

#include <algorithm>

namespace floro {

namespace {

constexpr std::array<std::string_view, kNumStreams> kNames = {"BGR", "RED_EDGE", "NIR", "SWIR", "ELEVATION", "SAR"};

}  // namespace

std::string_view stream_name(Stream s) { return kNames[index_of(s)]; }

std::optional<Stream> parse_stream(std::string_view name) {
  for (Stream s : kAllStreams)
    if (kNames[index_of(s)] == name) return s;
  return std::nullopt;
}

ValueRange clip_range(Stream s) {
  switch (s) {
    case Stream::kElevation: return {-500.0f, 9000.0f};
    case Stream::kSar: return {-60.0f, 20.0f};
    default: return {0.0f, 1.0f};
  }
}

void StreamLayout::validate() const {
  for (Index c : channels)
    if (c < 1) throw ContractError("stream channel counts must be positive");
}

void MultimodalSample::set_stream(Stream s, PixelArray pixels) {
  auto& st = stream(s);
  st.available = true;
  st.pixels = std::move(pixels);
  st.validity = ValidityMask::Ones(height * width);
}

void MultimodalSample::drop_stream(Stream s) {
  auto& st = stream(s);
  st.available = false;
  st.pixels.resize(0);
  st.validity.resize(0);
}

void MultimodalSample::validate(const StreamLayout& layout, std::optional<Index> patch_size) const {
  if (height <= 0 || width <= 0) throw ContractError("sample " + id + " has empty extent");
  if (patch_size) PatchGrid::for_image(height, width, *patch_size);
  if (geotransform) geotransform->validate();
  for (Stream s : kAllStreams) {
    const auto& st = stream(s);
    const std::string where = "sample " + id + " stream " + std::string(stream_name(s));
    if (!st.available) {
      if (st.pixels.size() != 0 || st.validity.size() != 0) throw ContractError(where + " is absent but carries data");
      continue;
    }
    if (st.pixels.size() != layout[s] * height * width) throw ContractError(where + " has wrong pixel count");
    if (st.validity.size() != height * width) throw ContractError(where + " has wrong validity size");
    if (!st.pixels.allFinite()) throw ContractError(where + " has non-finite pixels");
  }
}

MultimodalSample clip_modalities(MultimodalSample sample) {
  for (Stream s : kAllStreams) {
    auto& st = sample.stream(s);
    if (!st.available) continue;
    const auto r = clip_range(s);
    st.pixels = st.pixels.cwiseMax(r.lo).cwiseMin(r.hi);
  }
  return sample;
}

Eigen::ArrayXd patch_validity_fraction(const MultimodalSample& sample, Stream s, Index patch_size) {
  const auto grid = PatchGrid::for_image(sample.height, sample.width, patch_size);
  Eigen::ArrayXd out = Eigen::ArrayXd::Zero(grid.num_patches());
  const auto& st = sample.stream(s);
  if (!st.available) return out;
  const Index p = patch_size;
  for (Index r = 0; r < grid.rows; ++r)
    for (Index c = 0; c < grid.cols; ++c) {
      Index count = 0;
      for (Index py = 0; py < p; ++py)
        for (Index px = 0; px < p; ++px) count += st.validity[(r * p + py) * sample.width + c * p + px] ? 1 : 0;
      out[r * grid.cols + c] = static_cast<double>(count) / static_cast<double>(p * p);
    }
  return out;
}

template <typename S>
Tensor<S> patchify_pixels(const Tensor<S>& pixels, Index patch_size) {
  if (pixels.rank() != 4) throw ShapeError("patchify_pixels: expected [B, C, H, W], got " + to_string(pixels.shape()));
  const Index b = pixels.dim(0), c = pixels.dim(1);
  const auto grid = PatchGrid::for_image(pixels.dim(2), pixels.dim(3), patch_size);
  const Index p = patch_size;
  auto x = reshape(pixels, {b, c, grid.rows, p, grid.cols, p});
  x = permute(x, {0, 2, 4, 3, 5, 1});
  return reshape(x, {b, grid.num_patches(), p * p * c});
}

template <typename S>
Tensor<S> unpatchify(const Tensor<S>& patches, const PatchGrid& grid, Index channels) {
  grid.validate();
  const Index p = grid.patch_size;
  if (patches.rank() != 3 || patches.dim(1) != grid.num_patches() || patches.dim(2) != p * p * channels)
    throw ShapeError("unpatchify: got " + to_string(patches.shape()) + " for grid " + std::to_string(grid.rows) + "x" +
                     std::to_string(grid.cols) + ", P=" + std::to_string(p) + ", C=" + std::to_string(channels));
  const Index b = patches.dim(0);
  auto x = reshape(patches, {b, grid.rows, grid.cols, p, p, channels});
  x = permute(x, {0, 5, 1, 3, 2, 4});
  return reshape(x, {b, channels, grid.rows * p, grid.cols * p});
}

template <typename S>
Table<S> patch_targets(const MultimodalSample& sample, Stream s, const StreamLayout& layout, Index patch_size) {
  const auto grid = PatchGrid::for_image(sample.height, sample.width, patch_size);
  const Index p = patch_size;
  const Index ch = layout[s];
  Table<S> out = Table<S>::Zero(grid.num_patches(), p * p * ch);
  const auto& st = sample.stream(s);
  if (!st.available) return out;
  for (Index r = 0; r < grid.rows; ++r)
    for (Index c = 0; c < grid.cols; ++c)
      for (Index py = 0; py < p; ++py)
        for (Index px = 0; px < p; ++px) {
          const Index y = r * p + py, x = c * p + px;
          if (!st.validity[y * sample.width + x]) continue;
          for (Index k = 0; k < ch; ++k)
            out(r * grid.cols + c, (py * p + px) * ch + k) = static_cast<S>(to_unit(s, sample.at(s, k, y, x)));
        }
  return out;
}

template <typename S>
ModalBatch<S> prepare_batch(std::span<const MultimodalSample> samples, const StreamLayout& layout, Index patch_size) {
  if (samples.empty()) throw ContractError("prepare_batch: empty batch");
  const Index h = samples.front().height, w = samples.front().width;
  ModalBatch<S> out;
  out.batch = static_cast<Index>(samples.size());
  out.grid = PatchGrid::for_image(h, w, patch_size);
  out.layout = layout;
  const Index l = out.grid.num_patches();
  const Index p = patch_size;
  for (Stream s : kAllStreams) {
    const Index ch = layout[s];
    out.inputs[index_of(s)] = Table<S>::Zero(out.batch * l, p * p * (ch + 1));
    out.targets[index_of(s)] = Table<S>(out.batch * l, p * p * ch);
    out.validity[index_of(s)] = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(out.batch * l);
  }
  for (Index b = 0; b < out.batch; ++b) {
    const auto& sample = samples[static_cast<std::size_t>(b)];
    if (sample.height != h || sample.width != w) throw ShapeError("prepare_batch: samples differ in size");
    sample.validate(layout, patch_size);
    std::array<bool, kNumStreams> avail{};
    for (Stream s : kAllStreams) {
      const auto si = index_of(s);
      avail[si] = sample.available(s);
      const Index ch = layout[s];
      out.targets[si].middleRows(b * l, l) = patch_targets<S>(sample, s, layout, patch_size);
      if (!avail[si]) continue;
      out.validity[si].segment(b * l, l) = patch_validity_fraction(sample, s, patch_size).template cast<S>();
      auto& in = out.inputs[si];
      const auto& tg = out.targets[si];
      const auto& valid = sample.stream(s).validity;
      for (Index t = 0; t < l; ++t) {
        const Index r = t / out.grid.cols, c = t % out.grid.cols;
        for (Index q = 0; q < p * p; ++q) {
          const Index y = r * p + q / p, x = c * p + q % p;
          for (Index k = 0; k < ch; ++k) in(b * l + t, q * (ch + 1) + k) = tg(b * l + t, q * ch + k);
          in(b * l + t, q * (ch + 1) + ch) = valid[y * w + x] ? S(1) : S(0);
        }
      }
    }
    out.availability.push_back(avail);
    out.geotransforms.push_back(sample.geotransform);
  }
  return out;
}

template <typename S>
TokenBundle<S> patchify(const ModalBatch<S>& batch, const PatchEmbedding<S>& embed) {
  const Index b = batch.batch;
  const Index l = batch.grid.num_patches();
  auto stream_tokens = [&](Stream s) {
    const auto si = index_of(s);
    const auto& w = embed.weight[si];
    const auto& table = batch.inputs[si];
    if (w.dim(0) != table.cols())
      throw ShapeError("patchify: embedding for " + std::string(stream_name(s)) + " expects " +
                       std::to_string(w.dim(0)) + " inputs, batch provides " + std::to_string(table.cols()));
    const Index d = w.dim(1);
    Index present = 0;
    for (const auto& a : batch.availability) present += a[si] ? 1 : 0;

    Tensor<S> data;
    if (present > 0) {
      auto x = Tensor<S>::constant({b, l, table.cols()},
                                   Eigen::Map<const typename Tensor<S>::Array>(table.data(), table.size()));
      data = add_broadcast(matmul(x, w), embed.bias[si]);
      if (present == b) return data;
      typename Tensor<S>::Array gate(b * l * d);
      for (Index i = 0; i < b; ++i) gate.segment(i * l * d, l * d).setConstant(batch.availability[i][si] ? S(1) : S(0));
      data = mul_constant(data, gate);
    }
    typename Tensor<S>::Array missing(b * l);
    for (Index i = 0; i < b; ++i) missing.segment(i * l, l).setConstant(batch.availability[i][si] ? S(0) : S(1));
    auto fill = matmul(Tensor<S>::constant({b, l, 1}, std::move(missing)), reshape(embed.availability[si], {1, d}));
    return present > 0 ? add(data, fill) : fill;
  };

  auto branch = [&](std::span<const Stream> streams) {
    Tensor<S> acc;
    for (Stream s : streams) {
      auto t = stream_tokens(s);
      acc = acc.defined() ? add(acc, t) : t;
    }
    return acc;
  };

  TokenBundle<S> out;
  out.optical = branch(kOpticalStreams);
  out.aux = branch(kAuxStreams);
  out.grid = batch.grid;
  out.availability = batch.availability;
  return out;
}

template Tensor<float> patchify_pixels<float>(const Tensor<float>&, Index);
template Tensor<double> patchify_pixels<double>(const Tensor<double>&, Index);
template Tensor<float> unpatchify<float>(const Tensor<float>&, const PatchGrid&, Index);
template Tensor<double> unpatchify<double>(const Tensor<double>&, const PatchGrid&, Index);
template Table<float> patch_targets<float>(const MultimodalSample&, Stream, const StreamLayout&, Index);
template Table<double> patch_targets<double>(const MultimodalSample&, Stream, const StreamLayout&, Index);
template ModalBatch<float> prepare_batch<float>(std::span<const MultimodalSample>, const StreamLayout&, Index);
template ModalBatch<double> prepare_batch<double>(std::span<const MultimodalSample>, const StreamLayout&, Index);
template TokenBundle<float> patchify<float>(const ModalBatch<float>&, const PatchEmbedding<float>&);
template TokenBundle<double> patchify<double>(const ModalBatch<double>&, const PatchEmbedding<double>&);

}  // namespace floro
