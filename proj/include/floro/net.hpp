#pragma once

// Pre-norm transformer encoder over the joint optical + auxiliary token
// sequence, and the two-stream modality-aware decoder with per-group heads.

#include <floro/geoposition.hpp>
#include <floro/grad_check.hpp>
#include <floro/masking.hpp>
#include <floro/modal_input.hpp>
#include <floro/tensor.hpp>

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace floro {

struct ModelConfig {
  Index patch_size = 4;
  Index encoder_dim = 64;
  Index encoder_depth = 4;
  Index encoder_heads = 4;
  Index decoder_dim = 32;
  Index decoder_depth = 2;
  Index decoder_heads = 4;
  Index mlp_ratio = 4;
  StreamLayout layout;

  static ModelConfig toy() { return {}; }
  /// ViT-L encoder, 2-block 768-wide decoder, 16x16 patches.
  static ModelConfig paper() { return {16, 1024, 24, 16, 768, 2, 16, 4, {}}; }

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr int kOpticalBranch = 0;
inline constexpr int kAuxBranch = 1;

template <typename S>
struct Linear {
  Tensor<S> weight;  // [in, out]
  Tensor<S> bias;    // [out]
};

template <typename S>
struct Norm {
  Tensor<S> gamma;
  Tensor<S> beta;
};

template <typename S>
struct Attention {
  Index heads = 1;
  Linear<S> query, key, value, out;
};

template <typename S>
struct Mlp {
  Linear<S> fc1, fc2;
};

template <typename S>
struct EncoderBlock {
  Norm<S> norm1;
  Attention<S> attn;
  Norm<S> norm2;
  Mlp<S> mlp;
};

/// One stream's half of a decoder block: self-attention, cross-attention to
/// the other stream, then MLP, each pre-normed with a residual.
template <typename S>
struct DecoderStreamBlock {
  Norm<S> norm_self;
  Attention<S> self_attn;
  Norm<S> norm_query;
  Norm<S> norm_context;
  Attention<S> cross_attn;
  Norm<S> norm_mlp;
  Mlp<S> mlp;
};

template <typename S>
struct DecoderBlock {
  std::array<DecoderStreamBlock<S>, 2> streams;  // optical, auxiliary
};

template <typename S>
struct Encoder {
  ModelConfig config;
  PatchEmbedding<S> embed;
  std::array<Tensor<S>, 2> stream_type;  // added to optical / auxiliary tokens
  std::vector<EncoderBlock<S>> blocks;

  static Encoder init(const ModelConfig& config, std::uint64_t seed);
  NamedTensors<S> parameters() const;
};

template <typename S>
struct Decoder {
  Norm<S> embed_norm;
  Linear<S> embed;                      // encoder_dim -> decoder_dim
  std::array<Tensor<S>, 2> mask_token;  // per branch
  std::vector<DecoderBlock<S>> blocks;
  std::array<Norm<S>, 2> final_norm;
  std::array<Linear<S>, kNumStreams> heads;  // decoder_dim -> P*P*C

  static Decoder init(const ModelConfig& config, std::uint64_t seed);
  NamedTensors<S> parameters() const;
};

template <typename S>
struct Model {
  ModelConfig config;
  Encoder<S> encoder;
  Decoder<S> decoder;

  static Model init(const ModelConfig& config, std::uint64_t seed);
  /// encoder.* followed by decoder.*; handles alias the live parameters.
  NamedTensors<S> parameters() const;
};

template <typename S>
Tensor<S> linear(const Tensor<S>& x, const Linear<S>& layer);

template <typename S>
Tensor<S> norm(const Tensor<S>& x, const Norm<S>& n);

/// Multi-head attention of queries [B, Lq, D] over context [B, Lk, D].
template <typename S>
Tensor<S> attention(const Attention<S>& attn, const Tensor<S>& queries, const Tensor<S>& context);

template <typename S>
Tensor<S> mlp(const Mlp<S>& m, const Tensor<S>& x);

template <typename S>
struct Latents {
  Tensor<S> optical;  // [B, Vo, D]
  Tensor<S> aux;      // [B, Va, D]
};

/// Tokens with the absolute table (and geo table where a sample has a geotransform and use_geo is set).
template <typename S>
TokenBundle<S> embed_tokens(const Encoder<S>& encoder, const ModalBatch<S>& batch, bool use_geo);

/// Adds stream-type embeddings, runs the joint sequence through `blocks`, splits it back.
template <typename S>
Latents<S> encode(const Encoder<S>& encoder, std::span<const EncoderBlock<S>> blocks, const Tensor<S>& visible_optical,
                  const Tensor<S>& visible_aux);

template <typename S>
Latents<S> encode(const Encoder<S>& encoder, const Tensor<S>& visible_optical, const Tensor<S>& visible_aux);

template <typename S>
struct PretrainOutput {
  std::array<Tensor<S>, kNumStreams> reconstructions;  // [B, L, P*P*C]
  std::vector<MaskPlan> optical_plans;
  std::vector<MaskPlan> aux_plans;
  Latents<S> latents;
  double ratio = 0.0;
};

template <typename S>
PretrainOutput<S> decode(const Decoder<S>& decoder, const ModelConfig& config, const PatchGrid& grid,
                         const Latents<S>& latents, std::vector<MaskPlan> optical_plans,
                         std::vector<MaskPlan> aux_plans);

struct ForwardOptions {
  double ratio = 0.0;
  std::uint64_t seed = 0;
  Index epoch = 0;
  std::vector<std::uint64_t> sample_keys;  // one per sample; keys the mask draws
  bool use_geo = true;
};

/// Independent per-sample plans for the two branches, keyed by (seed, epoch, sample key, branch).
std::pair<std::vector<MaskPlan>, std::vector<MaskPlan>> draw_plans(Index length, const ForwardOptions& options);

template <typename S>
PretrainOutput<S> forward_pretrain(const Model<S>& model, const ModalBatch<S>& batch, const ForwardOptions& options);

/// Mean-pooled encoder tokens of both branches with no masking: [B, encoder_dim].
template <typename S>
Tensor<S> pooled_features(const Encoder<S>& encoder, const ModalBatch<S>& batch, bool use_geo);

#define FLORO_NET_EXTERN(S)                                                                                         \
  extern template struct Encoder<S>;                                                                                \
  extern template struct Decoder<S>;                                                                                \
  extern template struct Model<S>;                                                                                  \
  extern template Tensor<S> linear<S>(const Tensor<S>&, const Linear<S>&);                                          \
  extern template Tensor<S> norm<S>(const Tensor<S>&, const Norm<S>&);                                              \
  extern template Tensor<S> attention<S>(const Attention<S>&, const Tensor<S>&, const Tensor<S>&);                  \
  extern template Tensor<S> mlp<S>(const Mlp<S>&, const Tensor<S>&);                                                \
  extern template TokenBundle<S> embed_tokens<S>(const Encoder<S>&, const ModalBatch<S>&, bool);                    \
  extern template Latents<S> encode<S>(const Encoder<S>&, std::span<const EncoderBlock<S>>, const Tensor<S>&,       \
                                       const Tensor<S>&);                                                           \
  extern template Latents<S> encode<S>(const Encoder<S>&, const Tensor<S>&, const Tensor<S>&);                      \
  extern template PretrainOutput<S> decode<S>(const Decoder<S>&, const ModelConfig&, const PatchGrid&,              \
                                              const Latents<S>&, std::vector<MaskPlan>, std::vector<MaskPlan>);     \
  extern template PretrainOutput<S> forward_pretrain<S>(const Model<S>&, const ModalBatch<S>&,                      \
                                                        const ForwardOptions&);                                     \
  extern template Tensor<S> pooled_features<S>(const Encoder<S>&, const ModalBatch<S>&, bool);

FLORO_NET_EXTERN(float)
FLORO_NET_EXTERN(double)
#undef FLORO_NET_EXTERN

}  // namespace floro
