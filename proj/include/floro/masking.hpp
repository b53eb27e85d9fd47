#pragma once

// Random patch masking, the staged masking-ratio curriculum, visible-token
// gathering, and mask-token restoration.

#include <floro/random.hpp>
#include <floro/tensor.hpp>

#include <span>
#include <vector>

namespace floro {

struct MaskPlan {
  int stream = 0;
  double ratio = 0.0;
  Index num_visible = 0;
  std::vector<bool> masked;    // [L]
  std::vector<Index> shuffle;  // shuffle[rank] = patch index; ranks < num_visible are kept
  std::vector<Index> restore;  // restore[patch] = rank

  Index length() const { return static_cast<Index>(masked.size()); }
  std::span<const Index> visible() const { return {shuffle.data(), static_cast<std::size_t>(num_visible)}; }
};

/// max(1, floor(L * (1 - ratio)))
Index visible_count(Index length, double ratio);

/// Uniformly random plan; deterministic in the generator state.
MaskPlan sample_mask(Index length, double ratio, Rng& rng, int stream = 0);

/// Plan that keeps every patch in its original order.
MaskPlan identity_plan(Index length, int stream = 0);

/// Throws ContractError unless the plan is a consistent partition/permutation.
void check_plan(const MaskPlan& plan);

struct CurriculumStage {
  Index start_epoch = 0;
  double ratio = 0.0;
};

struct CurriculumSchedule {
  std::vector<CurriculumStage> stages = {{0, 0.25}, {50, 0.50}, {100, 0.75}};

  void validate() const;
  /// Stage boundaries rescaled from a 170-epoch horizon to `total_epochs`.
  CurriculumSchedule scaled_to(Index total_epochs, Index reference_epochs = 170) const;
};

double curriculum_ratio(Index epoch, const CurriculumSchedule& schedule);

/// tokens [B, L, D] -> visible tokens [B, |V|, D] in shuffle order, one plan for the batch.
template <typename S>
Tensor<S> apply_mask(const Tensor<S>& tokens, const MaskPlan& plan);

/// Per-sample plans (all with the same visible count).
template <typename S>
Tensor<S> apply_mask(const Tensor<S>& tokens, std::span<const MaskPlan> plans);

/// latent [B, |V|, D'] -> [B, L, D'] with the shared mask token at masked positions.
template <typename S>
Tensor<S> restore_with_mask_tokens(const Tensor<S>& latent, const MaskPlan& plan, const Tensor<S>& mask_token);

template <typename S>
Tensor<S> restore_with_mask_tokens(const Tensor<S>& latent, std::span<const MaskPlan> plans,
                                   const Tensor<S>& mask_token);

extern template Tensor<float> apply_mask<float>(const Tensor<float>&, const MaskPlan&);
extern template Tensor<double> apply_mask<double>(const Tensor<double>&, const MaskPlan&);
extern template Tensor<float> apply_mask<float>(const Tensor<float>&, std::span<const MaskPlan>);
extern template Tensor<double> apply_mask<double>(const Tensor<double>&, std::span<const MaskPlan>);
extern template Tensor<float> restore_with_mask_tokens<float>(const Tensor<float>&, const MaskPlan&,
                                                              const Tensor<float>&);
extern template Tensor<double> restore_with_mask_tokens<double>(const Tensor<double>&, const MaskPlan&,
                                                                const Tensor<double>&);
extern template Tensor<float> restore_with_mask_tokens<float>(const Tensor<float>&, std::span<const MaskPlan>,
                                                              const Tensor<float>&);
extern template Tensor<double> restore_with_mask_tokens<double>(const Tensor<double>&, std::span<const MaskPlan>,
                                                                const Tensor<double>&);

}  // namespace floro
