#include <floro/net.hpp>

#include <floro/ops.hpp>
#include <floro/random.hpp>

#include <cmath>
#include <string>

namespace floro {

void ModelConfig::validate() const {
  if (patch_size < 1) throw ContractError("patch_size must be >= 1");
  if (encoder_depth < 1 || decoder_depth < 1) throw ContractError("model depths must be >= 1");
  if (encoder_heads < 1 || decoder_heads < 1 || mlp_ratio < 1) throw ContractError("heads and mlp_ratio must be >= 1");
  if (encoder_dim % encoder_heads != 0) throw ContractError("encoder_dim must be divisible by encoder_heads");
  if (decoder_dim % decoder_heads != 0) throw ContractError("decoder_dim must be divisible by decoder_heads");
  if (encoder_dim % 4 != 0 || decoder_dim % 4 != 0) throw ContractError("model widths must be multiples of 4");
  layout.validate();
}

namespace {

template <typename S>
class Initializer {
 public:
  explicit Initializer(Rng rng) : rng_(std::move(rng)) {}

  /// Normal(0, 0.02) truncated to two standard deviations.
  Tensor<S> trunc_normal(Shape shape) {
    std::normal_distribution<double> dist(0.0, 0.02);
    typename Tensor<S>::Array a(numel(shape));
    for (Index i = 0; i < a.size(); ++i) {
      double v = dist(rng_);
      while (std::abs(v) > 0.04) v = dist(rng_);
      a[i] = static_cast<S>(v);
    }
    return Tensor<S>::parameter(std::move(shape), std::move(a));
  }

  Linear<S> linear(Index in, Index out) {
    return {trunc_normal({in, out}), Tensor<S>::zeros({out}, true)};
  }

  Norm<S> norm(Index dim) { return {Tensor<S>::full({dim}, S(1), true), Tensor<S>::zeros({dim}, true)}; }

  Attention<S> attention(Index dim, Index heads) {
    Attention<S> a;
    a.heads = heads;
    a.query = linear(dim, dim);
    a.key = linear(dim, dim);
    a.value = linear(dim, dim);
    a.out = linear(dim, dim);
    return a;
  }

  Mlp<S> mlp(Index dim, Index ratio) { return {linear(dim, dim * ratio), linear(dim * ratio, dim)}; }

 private:
  Rng rng_;
};

template <typename S>
void add_linear(NamedTensors<S>& out, const std::string& name, const Linear<S>& l) {
  out.emplace_back(name + ".weight", l.weight);
  out.emplace_back(name + ".bias", l.bias);
}

template <typename S>
void add_norm(NamedTensors<S>& out, const std::string& name, const Norm<S>& n) {
  out.emplace_back(name + ".gamma", n.gamma);
  out.emplace_back(name + ".beta", n.beta);
}

template <typename S>
void add_attention(NamedTensors<S>& out, const std::string& name, const Attention<S>& a) {
  add_linear(out, name + ".query", a.query);
  add_linear(out, name + ".key", a.key);
  add_linear(out, name + ".value", a.value);
  add_linear(out, name + ".out", a.out);
}

template <typename S>
void add_mlp(NamedTensors<S>& out, const std::string& name, const Mlp<S>& m) {
  add_linear(out, name + ".fc1", m.fc1);
  add_linear(out, name + ".fc2", m.fc2);
}

constexpr std::array<const char*, 2> kBranchNames = {"optical", "aux"};

template <typename S>
Tensor<S> constant_table(const Table<S>& t, Shape shape) {
  return Tensor<S>::constant(std::move(shape), Eigen::Map<const typename Tensor<S>::Array>(t.data(), t.size()));
}

}  // namespace

template <typename S>
Encoder<S> Encoder<S>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer<S> init(keyed_rng({seed, tag(RngDomain::kInit), 0}));
  Encoder enc;
  enc.config = config;
  const Index d = config.encoder_dim;
  const Index pp = config.patch_size * config.patch_size;
  for (Stream s : kAllStreams) {
    const auto si = index_of(s);
    enc.embed.weight[si] = init.trunc_normal({pp * (config.layout[s] + 1), d});
    enc.embed.bias[si] = Tensor<S>::zeros({d}, true);
    enc.embed.availability[si] = init.trunc_normal({d});
  }
  for (auto& t : enc.stream_type) t = init.trunc_normal({d});
  for (Index i = 0; i < config.encoder_depth; ++i) {
    EncoderBlock<S> b;
    b.norm1 = init.norm(d);
    b.attn = init.attention(d, config.encoder_heads);
    b.norm2 = init.norm(d);
    b.mlp = init.mlp(d, config.mlp_ratio);
    enc.blocks.push_back(std::move(b));
  }
  return enc;
}

template <typename S>
NamedTensors<S> Encoder<S>::parameters() const {
  NamedTensors<S> out;
  for (Stream s : kAllStreams) {
    const auto si = index_of(s);
    const std::string base = "encoder.embed." + std::string(stream_name(s));
    out.emplace_back(base + ".weight", embed.weight[si]);
    out.emplace_back(base + ".bias", embed.bias[si]);
    out.emplace_back(base + ".availability", embed.availability[si]);
  }
  for (int b = 0; b < 2; ++b) out.emplace_back(std::string("encoder.stream_type.") + kBranchNames[b], stream_type[b]);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const std::string base = "encoder.blocks." + std::to_string(i);
    add_norm(out, base + ".norm1", blocks[i].norm1);
    add_attention(out, base + ".attn", blocks[i].attn);
    add_norm(out, base + ".norm2", blocks[i].norm2);
    add_mlp(out, base + ".mlp", blocks[i].mlp);
  }
  return out;
}

template <typename S>
Decoder<S> Decoder<S>::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer<S> init(keyed_rng({seed, tag(RngDomain::kInit), 1}));
  Decoder dec;
  const Index d = config.decoder_dim;
  dec.embed_norm = init.norm(config.encoder_dim);
  dec.embed = init.linear(config.encoder_dim, d);
  for (auto& t : dec.mask_token) t = init.trunc_normal({d});
  for (Index i = 0; i < config.decoder_depth; ++i) {
    DecoderBlock<S> block;
    for (auto& sb : block.streams) {
      sb.norm_self = init.norm(d);
      sb.self_attn = init.attention(d, config.decoder_heads);
      sb.norm_query = init.norm(d);
      sb.norm_context = init.norm(d);
      sb.cross_attn = init.attention(d, config.decoder_heads);
      sb.norm_mlp = init.norm(d);
      sb.mlp = init.mlp(d, config.mlp_ratio);
    }
    dec.blocks.push_back(std::move(block));
  }
  for (auto& n : dec.final_norm) n = init.norm(d);
  const Index pp = config.patch_size * config.patch_size;
  for (Stream s : kAllStreams) dec.heads[index_of(s)] = init.linear(d, pp * config.layout[s]);
  return dec;
}

template <typename S>
NamedTensors<S> Decoder<S>::parameters() const {
  NamedTensors<S> out;
  add_norm(out, "decoder.embed_norm", embed_norm);
  add_linear(out, "decoder.embed", embed);
  for (int b = 0; b < 2; ++b) out.emplace_back(std::string("decoder.mask_token.") + kBranchNames[b], mask_token[b]);
  for (std::size_t i = 0; i < blocks.size(); ++i)
    for (int b = 0; b < 2; ++b) {
      const auto& sb = blocks[i].streams[b];
      const std::string base = "decoder.blocks." + std::to_string(i) + "." + kBranchNames[b];
      add_norm(out, base + ".norm_self", sb.norm_self);
      add_attention(out, base + ".self_attn", sb.self_attn);
      add_norm(out, base + ".norm_query", sb.norm_query);
      add_norm(out, base + ".norm_context", sb.norm_context);
      add_attention(out, base + ".cross_attn", sb.cross_attn);
      add_norm(out, base + ".norm_mlp", sb.norm_mlp);
      add_mlp(out, base + ".mlp", sb.mlp);
    }
  for (int b = 0; b < 2; ++b) add_norm(out, std::string("decoder.final_norm.") + kBranchNames[b], final_norm[b]);
  for (Stream s : kAllStreams)
    add_linear(out, "decoder.head." + std::string(stream_name(s)), heads[index_of(s)]);
  return out;
}

template <typename S>
Model<S> Model<S>::init(const ModelConfig& config, std::uint64_t seed) {
  return {config, Encoder<S>::init(config, seed), Decoder<S>::init(config, seed)};
}

template <typename S>
NamedTensors<S> Model<S>::parameters() const {
  auto out = encoder.parameters();
  auto dec = decoder.parameters();
  out.insert(out.end(), dec.begin(), dec.end());
  return out;
}

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Linear<S>& layer) {
  return add_broadcast(matmul(x, layer.weight), layer.bias);
}

template <typename S>
Tensor<S> norm(const Tensor<S>& x, const Norm<S>& n) {
  return layer_norm(x, n.gamma, n.beta);
}

template <typename S>
Tensor<S> attention(const Attention<S>& attn, const Tensor<S>& queries, const Tensor<S>& context) {
  if (queries.rank() != 3 || context.rank() != 3 || queries.dim(0) != context.dim(0) ||
      queries.dim(2) != context.dim(2))
    throw ShapeError("attention: queries " + to_string(queries.shape()) + " vs context " + to_string(context.shape()));
  const Index b = queries.dim(0), lq = queries.dim(1), lk = context.dim(1), d = queries.dim(2);
  const Index h = attn.heads, dh = d / h;
  auto split = [&](const Tensor<S>& t, Index len) {
    return reshape(permute(reshape(t, {b, len, h, dh}), {0, 2, 1, 3}), {b * h, len, dh});
  };
  auto q = split(linear(queries, attn.query), lq);
  auto k = split(linear(context, attn.key), lk);
  auto v = split(linear(context, attn.value), lk);
  auto weights = softmax(scale(matmul(q, transpose(k)), S(1) / std::sqrt(static_cast<S>(dh))));
  auto mixed = matmul(weights, v);  // [B*H, Lq, dh]
  auto merged = reshape(permute(reshape(mixed, {b, h, lq, dh}), {0, 2, 1, 3}), {b, lq, d});
  return linear(merged, attn.out);
}

template <typename S>
Tensor<S> mlp(const Mlp<S>& m, const Tensor<S>& x) {
  return linear(gelu(linear(x, m.fc1)), m.fc2);
}

template <typename S>
TokenBundle<S> embed_tokens(const Encoder<S>& encoder, const ModalBatch<S>& batch, bool use_geo) {
  const Index d = encoder.config.encoder_dim;
  auto tokens = patchify(batch, encoder.embed);
  const Index l = batch.grid.num_patches();
  const Table<S> abs_pe = absolute_2d_sincos<S>(batch.grid, d);
  Table<S> pe(batch.batch * l, d);
  for (Index b = 0; b < batch.batch; ++b) {
    auto rows = pe.middleRows(b * l, l);
    rows = abs_pe;
    if (use_geo) {
      if (auto geo = geo_embedding_for<S>(batch.geotransforms[static_cast<std::size_t>(b)], batch.grid, d)) rows += *geo;
    }
  }
  auto table = constant_table(pe, {batch.batch, l, d});
  tokens.optical = add(tokens.optical, table);
  tokens.aux = add(tokens.aux, table);
  return tokens;
}

template <typename S>
Latents<S> encode(const Encoder<S>& encoder, std::span<const EncoderBlock<S>> blocks, const Tensor<S>& visible_optical,
                  const Tensor<S>& visible_aux) {
  const Index d = encoder.config.encoder_dim;
  if (visible_optical.rank() != 3 || visible_aux.rank() != 3 || visible_optical.dim(2) != d ||
      visible_aux.dim(2) != d || visible_optical.dim(0) != visible_aux.dim(0))
    throw ShapeError("encode: expected [B, V, " + std::to_string(d) + "] inputs, got " +
                     to_string(visible_optical.shape()) + " and " + to_string(visible_aux.shape()));
  const Index vo = visible_optical.dim(1), va = visible_aux.dim(1);
  auto x = concat<S>({add_broadcast(visible_optical, encoder.stream_type[kOpticalBranch]),
                      add_broadcast(visible_aux, encoder.stream_type[kAuxBranch])},
                     1);
  for (const auto& blk : blocks) {
    auto n1 = norm(x, blk.norm1);
    x = add(x, attention(blk.attn, n1, n1));
    x = add(x, mlp(blk.mlp, norm(x, blk.norm2)));
  }
  return {slice(x, 1, 0, vo), slice(x, 1, vo, va)};
}

template <typename S>
Latents<S> encode(const Encoder<S>& encoder, const Tensor<S>& visible_optical, const Tensor<S>& visible_aux) {
  return encode(encoder, std::span<const EncoderBlock<S>>(encoder.blocks), visible_optical, visible_aux);
}

template <typename S>
PretrainOutput<S> decode(const Decoder<S>& decoder, const ModelConfig& config, const PatchGrid& grid,
                         const Latents<S>& latents, std::vector<MaskPlan> optical_plans,
                         std::vector<MaskPlan> aux_plans) {
  const Index b = latents.optical.dim(0);
  const Index l = grid.num_patches();
  const Index d = config.decoder_dim;
  if (static_cast<Index>(optical_plans.size()) != b || static_cast<Index>(aux_plans.size()) != b)
    throw ContractError("decode: one plan per sample and branch is required");

  const Table<S> pe = absolute_2d_sincos<S>(grid, d);
  const auto pe_tensor = constant_table(pe, {l, d});
  std::array<Tensor<S>, 2> x;
  const std::array<const Tensor<S>*, 2> z = {&latents.optical, &latents.aux};
  const std::array<const std::vector<MaskPlan>*, 2> plans = {&optical_plans, &aux_plans};
  for (int br = 0; br < 2; ++br) {
    auto projected = linear(norm(*z[br], decoder.embed_norm), decoder.embed);
    auto restored = restore_with_mask_tokens(projected, std::span<const MaskPlan>(*plans[br]), decoder.mask_token[br]);
    x[br] = add_broadcast(restored, pe_tensor);
  }

  for (const auto& block : decoder.blocks) {
    for (int br = 0; br < 2; ++br) {
      const auto& sb = block.streams[br];
      auto n = norm(x[br], sb.norm_self);
      x[br] = add(x[br], attention(sb.self_attn, n, n));
    }
    std::array<Tensor<S>, 2> crossed;
    for (int br = 0; br < 2; ++br) {
      const auto& sb = block.streams[br];
      crossed[br] = add(x[br], attention(sb.cross_attn, norm(x[br], sb.norm_query), norm(x[1 - br], sb.norm_context)));
    }
    for (int br = 0; br < 2; ++br) {
      const auto& sb = block.streams[br];
      x[br] = add(crossed[br], mlp(sb.mlp, norm(crossed[br], sb.norm_mlp)));
    }
  }

  PretrainOutput<S> out;
  std::array<Tensor<S>, 2> normed = {norm(x[0], decoder.final_norm[0]), norm(x[1], decoder.final_norm[1])};
  for (Stream s : kAllStreams)
    out.reconstructions[index_of(s)] = linear(normed[is_optical(s) ? 0 : 1], decoder.heads[index_of(s)]);
  out.ratio = optical_plans.front().ratio;
  out.optical_plans = std::move(optical_plans);
  out.aux_plans = std::move(aux_plans);
  out.latents = latents;
  return out;
}

std::pair<std::vector<MaskPlan>, std::vector<MaskPlan>> draw_plans(Index length, const ForwardOptions& options) {
  std::pair<std::vector<MaskPlan>, std::vector<MaskPlan>> plans;
  for (std::uint64_t key : options.sample_keys) {
    auto ro = keyed_rng({options.seed, tag(RngDomain::kMask), static_cast<std::uint64_t>(options.epoch), key,
                         static_cast<std::uint64_t>(kOpticalBranch)});
    auto ra = keyed_rng({options.seed, tag(RngDomain::kMask), static_cast<std::uint64_t>(options.epoch), key,
                         static_cast<std::uint64_t>(kAuxBranch)});
    plans.first.push_back(sample_mask(length, options.ratio, ro, kOpticalBranch));
    plans.second.push_back(sample_mask(length, options.ratio, ra, kAuxBranch));
  }
  return plans;
}

template <typename S>
PretrainOutput<S> forward_pretrain(const Model<S>& model, const ModalBatch<S>& batch, const ForwardOptions& options) {
  if (static_cast<Index>(options.sample_keys.size()) != batch.batch)
    throw ContractError("forward_pretrain: need one sample key per sample");
  if (batch.grid.patch_size != model.config.patch_size || !(batch.layout == model.config.layout))
    throw ContractError("forward_pretrain: batch was prepared for a different patch size or layout");
  auto tokens = embed_tokens(model.encoder, batch, options.use_geo);
  auto [optical_plans, aux_plans] = draw_plans(batch.grid.num_patches(), options);
  auto latents = encode(model.encoder, apply_mask(tokens.optical, std::span<const MaskPlan>(optical_plans)),
                        apply_mask(tokens.aux, std::span<const MaskPlan>(aux_plans)));
  return decode(model.decoder, model.config, batch.grid, latents, std::move(optical_plans), std::move(aux_plans));
}

template <typename S>
Tensor<S> pooled_features(const Encoder<S>& encoder, const ModalBatch<S>& batch, bool use_geo) {
  auto tokens = embed_tokens(encoder, batch, use_geo);
  auto latents = encode(encoder, tokens.optical, tokens.aux);
  return mean_axis(concat<S>({latents.optical, latents.aux}, 1), 1);
}

#define FLORO_NET_INSTANTIATE(S)                                                                                   \
  template struct Encoder<S>;                                                                                      \
  template struct Decoder<S>;                                                                                      \
  template struct Model<S>;                                                                                        \
  template Tensor<S> linear<S>(const Tensor<S>&, const Linear<S>&);                                                \
  template Tensor<S> norm<S>(const Tensor<S>&, const Norm<S>&);                                                    \
  template Tensor<S> attention<S>(const Attention<S>&, const Tensor<S>&, const Tensor<S>&);                        \
  template Tensor<S> mlp<S>(const Mlp<S>&, const Tensor<S>&);                                                      \
  template TokenBundle<S> embed_tokens<S>(const Encoder<S>&, const ModalBatch<S>&, bool);                          \
  template Latents<S> encode<S>(const Encoder<S>&, std::span<const EncoderBlock<S>>, const Tensor<S>&,             \
                                const Tensor<S>&);                                                                 \
  template Latents<S> encode<S>(const Encoder<S>&, const Tensor<S>&, const Tensor<S>&);                            \
  template PretrainOutput<S> decode<S>(const Decoder<S>&, const ModelConfig&, const PatchGrid&, const Latents<S>&, \
                                       std::vector<MaskPlan>, std::vector<MaskPlan>);                              \
  template PretrainOutput<S> forward_pretrain<S>(const Model<S>&, const ModalBatch<S>&, const ForwardOptions&);    \
  template Tensor<S> pooled_features<S>(const Encoder<S>&, const ModalBatch<S>&, bool);

FLORO_NET_INSTANTIATE(float)
FLORO_NET_INSTANTIATE(double)

}  // namespace floro
