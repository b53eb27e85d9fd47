#pragma once

// Masked, validity-gated reconstruction losses per spectral group / modality
// and their weighted combination into the pretraining objective.

#include <floro/masking.hpp>
#include <floro/modal_input.hpp>
#include <floro/net.hpp>
#include <floro/tensor.hpp>

#include <Eigen/Core>

#include <array>

namespace floro {

struct LossWeights {
  double optical = 1.0;    // multispectral branch
  double auxiliary = 1.0;  // elevation / SAR branch
};

struct LossBreakdown {
  /// Per-group masked MSE, averaged over the samples in which the group is present.
  std::array<double, kNumStreams> group{};
  /// Fraction of samples in which the group is present (0 or 1 for a single sample).
  std::array<double, kNumStreams> gate{};
  LossWeights weights;
  /// Objective that was differentiated: mean over samples of the per-sample objective.
  double total = 0.0;
};

/// Σ_p m_p ||pred_p - target_p||² / Σ_p m_p over rows p of [..., K] inputs,
/// or an exact constant 0 when Σ m_p == 0. Gradient flows into `pred` only.
template <typename S>
Tensor<S> masked_mse(const Tensor<S>& pred, const Tensor<S>& target, const Eigen::Array<S, Eigen::Dynamic, 1>& weights);

/// Effective per-patch weight m_p = masked(p) * validity_fraction(p) * available.
template <typename S>
Eigen::Array<S, Eigen::Dynamic, 1> patch_weights(const MaskPlan& plan,
                                                 const Eigen::Ref<const Eigen::Array<S, Eigen::Dynamic, 1>>& validity,
                                                 bool available);

/// Per-group values and gates; `total` is left at 0.
template <typename S>
LossBreakdown group_losses(const PretrainOutput<S>& output, const ModalBatch<S>& batch);

/// λ_ms · mean(present optical groups) + λ_mod · mean(present auxiliary groups).
double total_loss(const LossBreakdown& breakdown, const LossWeights& weights = {});

template <typename S>
struct Objective {
  Tensor<S> loss;  // scalar [1]
  LossBreakdown breakdown;
};

/// Differentiable batch objective: the per-sample objective averaged over the batch.
template <typename S>
Objective<S> pretrain_objective(const PretrainOutput<S>& output, const ModalBatch<S>& batch,
                                const LossWeights& weights = {});

extern template Tensor<float> masked_mse<float>(const Tensor<float>&, const Tensor<float>&,
                                                const Eigen::Array<float, Eigen::Dynamic, 1>&);
extern template Tensor<double> masked_mse<double>(const Tensor<double>&, const Tensor<double>&,
                                                  const Eigen::Array<double, Eigen::Dynamic, 1>&);
extern template Eigen::ArrayXf patch_weights<float>(const MaskPlan&, const Eigen::Ref<const Eigen::ArrayXf>&, bool);
extern template Eigen::ArrayXd patch_weights<double>(const MaskPlan&, const Eigen::Ref<const Eigen::ArrayXd>&, bool);
extern template LossBreakdown group_losses<float>(const PretrainOutput<float>&, const ModalBatch<float>&);
extern template LossBreakdown group_losses<double>(const PretrainOutput<double>&, const ModalBatch<double>&);
extern template Objective<float> pretrain_objective<float>(const PretrainOutput<float>&, const ModalBatch<float>&,
                                                           const LossWeights&);
extern template Objective<double> pretrain_objective<double>(const PretrainOutput<double>&, const ModalBatch<double>&,
                                                             const LossWeights&);

}  // namespace floro
