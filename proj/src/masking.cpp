#include <floro/masking.hpp>

#include <floro/ops.hpp>

#include <cmath>
#include <numeric>
#include <string>

namespace floro {

Index visible_count(Index length, double ratio) {
  const auto kept = static_cast<Index>(std::floor(static_cast<double>(length) * (1.0 - ratio)));
  return std::max<Index>(1, kept);
}

MaskPlan sample_mask(Index length, double ratio, Rng& rng, int stream) {
  if (length < 1) throw ContractError("sample_mask: need at least one patch");
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ContractError("sample_mask: ratio must lie in [0, 1)");
  MaskPlan plan;
  plan.stream = stream;
  plan.ratio = ratio;
  plan.num_visible = visible_count(length, ratio);
  plan.shuffle.resize(static_cast<std::size_t>(length));
  std::iota(plan.shuffle.begin(), plan.shuffle.end(), Index{0});
  for (Index i = length - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(plan.shuffle[static_cast<std::size_t>(i)], plan.shuffle[static_cast<std::size_t>(pick(rng))]);
  }
  plan.restore.resize(static_cast<std::size_t>(length));
  plan.masked.assign(static_cast<std::size_t>(length), false);
  for (Index r = 0; r < length; ++r) {
    const auto p = static_cast<std::size_t>(plan.shuffle[static_cast<std::size_t>(r)]);
    plan.restore[p] = r;
    plan.masked[p] = r >= plan.num_visible;
  }
  return plan;
}

MaskPlan identity_plan(Index length, int stream) {
  MaskPlan plan;
  plan.stream = stream;
  plan.num_visible = length;
  plan.shuffle.resize(static_cast<std::size_t>(length));
  std::iota(plan.shuffle.begin(), plan.shuffle.end(), Index{0});
  plan.restore = plan.shuffle;
  plan.masked.assign(static_cast<std::size_t>(length), false);
  return plan;
}

void check_plan(const MaskPlan& plan) {
  const Index l = plan.length();
  if (static_cast<Index>(plan.shuffle.size()) != l || static_cast<Index>(plan.restore.size()) != l)
    throw ContractError("mask plan: inconsistent lengths");
  if (plan.num_visible < 1 || plan.num_visible > l) throw ContractError("mask plan: bad visible count");
  for (Index r = 0; r < l; ++r) {
    const Index p = plan.shuffle[static_cast<std::size_t>(r)];
    if (p < 0 || p >= l || plan.restore[static_cast<std::size_t>(p)] != r)
      throw ContractError("mask plan: shuffle and restore are not inverse permutations");
    if (plan.masked[static_cast<std::size_t>(p)] != (r >= plan.num_visible))
      throw ContractError("mask plan: masked flags disagree with the shuffle");
  }
}

void CurriculumSchedule::validate() const {
  if (stages.empty()) throw ContractError("curriculum schedule is empty");
  if (stages.front().start_epoch != 0) throw ContractError("curriculum must start at epoch 0");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!(stages[i].ratio >= 0.0 && stages[i].ratio < 1.0)) throw ContractError("curriculum ratio outside [0, 1)");
    if (i > 0 && stages[i].start_epoch <= stages[i - 1].start_epoch)
      throw ContractError("curriculum start epochs must increase strictly");
  }
}

CurriculumSchedule CurriculumSchedule::scaled_to(Index total_epochs, Index reference_epochs) const {
  validate();
  if (total_epochs < 1 || reference_epochs < 1) throw ContractError("curriculum scaling needs positive horizons");
  CurriculumSchedule out;
  out.stages.clear();
  for (const auto& st : stages) {
    const auto start = static_cast<Index>(std::llround(static_cast<double>(st.start_epoch) *
                                                       static_cast<double>(total_epochs) /
                                                       static_cast<double>(reference_epochs)));
    if (!out.stages.empty() && start <= out.stages.back().start_epoch) {
      out.stages.back().ratio = st.ratio;  // collapsed stage: later ratio wins
      continue;
    }
    out.stages.push_back({start, st.ratio});
  }
  return out;
}

double curriculum_ratio(Index epoch, const CurriculumSchedule& schedule) {
  schedule.validate();
  if (epoch < 0) throw ContractError("curriculum_ratio: negative epoch");
  double ratio = schedule.stages.front().ratio;
  for (const auto& st : schedule.stages)
    if (st.start_epoch <= epoch) ratio = st.ratio;
  return ratio;
}

template <typename S>
Tensor<S> apply_mask(const Tensor<S>& tokens, const MaskPlan& plan) {
  if (tokens.rank() != 3 || tokens.dim(1) != plan.length())
    throw ShapeError("apply_mask: tokens " + to_string(tokens.shape()) + " vs plan over " +
                     std::to_string(plan.length()) + " patches");
  return index_select(tokens, 1, plan.visible());
}

template <typename S>
Tensor<S> apply_mask(const Tensor<S>& tokens, std::span<const MaskPlan> plans) {
  if (tokens.rank() != 3 || static_cast<Index>(plans.size()) != tokens.dim(0))
    throw ShapeError("apply_mask: " + std::to_string(plans.size()) + " plans for tokens " + to_string(tokens.shape()));
  const Index b = tokens.dim(0), l = tokens.dim(1), d = tokens.dim(2);
  const Index v = plans.front().num_visible;
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(b * v));
  for (Index i = 0; i < b; ++i) {
    const auto& plan = plans[static_cast<std::size_t>(i)];
    if (plan.length() != l || plan.num_visible != v)
      throw ShapeError("apply_mask: plan " + std::to_string(i) + " does not match the batch");
    for (Index p : plan.visible()) rows.push_back(i * l + p);
  }
  return reshape(index_select(reshape(tokens, {b * l, d}), 0, rows), {b, v, d});
}

template <typename S>
Tensor<S> restore_with_mask_tokens(const Tensor<S>& latent, const MaskPlan& plan, const Tensor<S>& mask_token) {
  std::vector<MaskPlan> plans(static_cast<std::size_t>(latent.rank() == 3 ? latent.dim(0) : 1), plan);
  return restore_with_mask_tokens(latent, std::span<const MaskPlan>(plans), mask_token);
}

template <typename S>
Tensor<S> restore_with_mask_tokens(const Tensor<S>& latent, std::span<const MaskPlan> plans,
                                   const Tensor<S>& mask_token) {
  if (latent.rank() != 3 || static_cast<Index>(plans.size()) != latent.dim(0))
    throw ShapeError("restore_with_mask_tokens: latent " + to_string(latent.shape()) + " vs " +
                     std::to_string(plans.size()) + " plans");
  const Index b = latent.dim(0), v = latent.dim(1), d = latent.dim(2);
  if (mask_token.numel() != d) throw ShapeError("restore_with_mask_tokens: mask token width mismatch");
  const Index l = plans.front().length();
  std::vector<Index> rows;
  rows.reserve(static_cast<std::size_t>(b * l));
  for (Index i = 0; i < b; ++i) {
    const auto& plan = plans[static_cast<std::size_t>(i)];
    check_plan(plan);
    if (plan.num_visible != v || plan.length() != l)
      throw ContractError("restore_with_mask_tokens: plan " + std::to_string(i) + " disagrees with latent length");
    for (Index p = 0; p < l; ++p) {
      const Index rank = plan.restore[static_cast<std::size_t>(p)];
      rows.push_back(rank < v ? i * v + rank : b * v);
    }
  }
  auto table = concat<S>({reshape(latent, {b * v, d}), reshape(mask_token, {1, d})}, 0);
  return reshape(index_select(table, 0, rows), {b, l, d});
}

template Tensor<float> apply_mask<float>(const Tensor<float>&, const MaskPlan&);
template Tensor<double> apply_mask<double>(const Tensor<double>&, const MaskPlan&);
template Tensor<float> apply_mask<float>(const Tensor<float>&, std::span<const MaskPlan>);
template Tensor<double> apply_mask<double>(const Tensor<double>&, std::span<const MaskPlan>);
template Tensor<float> restore_with_mask_tokens<float>(const Tensor<float>&, const MaskPlan&, const Tensor<float>&);
template Tensor<double> restore_with_mask_tokens<double>(const Tensor<double>&, const MaskPlan&,
                                                         const Tensor<double>&);
template Tensor<float> restore_with_mask_tokens<float>(const Tensor<float>&, std::span<const MaskPlan>,
                                                       const Tensor<float>&);
template Tensor<double> restore_with_mask_tokens<double>(const Tensor<double>&, std::span<const MaskPlan>,
                                                         const Tensor<double>&);

}  // namespace floro
