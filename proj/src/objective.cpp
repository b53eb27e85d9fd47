#include <floro/objective.hpp>

#include <floro/ops.hpp>

#include <string>

namespace floro {

template <typename S>
Tensor<S> masked_mse(const Tensor<S>& pred, const Tensor<S>& target, const Eigen::Array<S, Eigen::Dynamic, 1>& weights) {
  detail::require_same_shape(pred.shape(), target.shape(), "masked_mse");
  const Index rows = pred.numel() / pred.shape().back();
  if (weights.size() != rows)
    throw ShapeError("masked_mse: " + std::to_string(weights.size()) + " weights for " + std::to_string(rows) +
                     " rows of " + to_string(pred.shape()));
  const S total = weights.sum();
  if (total == S(0)) return Tensor<S>::zeros({1});
  auto diff = sub(pred, target.detach());
  return weighted_sum(sum_last(mul(diff, diff)), Eigen::Array<S, Eigen::Dynamic, 1>(weights / total));
}

template <typename S>
Eigen::Array<S, Eigen::Dynamic, 1> patch_weights(const MaskPlan& plan,
                                                 const Eigen::Ref<const Eigen::Array<S, Eigen::Dynamic, 1>>& validity,
                                                 bool available) {
  const Index l = plan.length();
  if (validity.size() != l) throw ShapeError("patch_weights: validity length does not match the plan");
  Eigen::Array<S, Eigen::Dynamic, 1> m = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(l);
  if (!available) return m;
  for (Index p = 0; p < l; ++p)
    if (plan.masked[static_cast<std::size_t>(p)]) m[p] = validity[p];
  return m;
}

namespace {

template <typename S>
const std::vector<MaskPlan>& plans_for(const PretrainOutput<S>& out, Stream s) {
  return is_optical(s) ? out.optical_plans : out.aux_plans;
}

template <typename S>
void check_alignment(const PretrainOutput<S>& output, const ModalBatch<S>& batch) {
  const Index l = batch.grid.num_patches();
  for (Stream s : kAllStreams) {
    const auto& pred = output.reconstructions[index_of(s)];
    const auto& tgt = batch.targets[index_of(s)];
    if (pred.rank() != 3 || pred.dim(0) != batch.batch || pred.dim(1) != l || pred.dim(2) != tgt.cols())
      throw ShapeError("objective: reconstruction " + to_string(pred.shape()) + " for " +
                       std::string(stream_name(s)) + " does not match targets [" + std::to_string(batch.batch) + ", " +
                       std::to_string(l) + ", " + std::to_string(tgt.cols()) + "]");
    if (static_cast<Index>(plans_for(output, s).size()) != batch.batch)
      throw ContractError("objective: one mask plan per sample is required");
  }
}

int present_in_branch(const std::array<bool, kNumStreams>& avail, bool optical) {
  int n = 0;
  for (Stream s : kAllStreams)
    if (is_optical(s) == optical && avail[index_of(s)]) ++n;
  return n;
}

}  // namespace

template <typename S>
LossBreakdown group_losses(const PretrainOutput<S>& output, const ModalBatch<S>& batch) {
  check_alignment(output, batch);
  LossBreakdown out;
  const Index b = batch.batch, l = batch.grid.num_patches();
  for (Stream s : kAllStreams) {
    const auto si = index_of(s);
    const auto& pred = output.reconstructions[si].value();
    const auto& tgt = batch.targets[si];
    const Index k = tgt.cols();
    double acc = 0.0;
    int present = 0;
    for (Index i = 0; i < b; ++i) {
      const bool avail = batch.availability[static_cast<std::size_t>(i)][si];
      if (!avail) continue;
      ++present;
      const auto m = patch_weights<S>(plans_for(output, s)[static_cast<std::size_t>(i)],
                                      batch.validity[si].segment(i * l, l), true);
      const double msum = m.template cast<double>().sum();
      if (msum == 0.0) continue;
      double num = 0.0;
      for (Index p = 0; p < l; ++p) {
        if (m[p] == S(0)) continue;
        double sq = 0.0;
        for (Index c = 0; c < k; ++c) {
          const double d = static_cast<double>(pred[(i * l + p) * k + c]) - static_cast<double>(tgt(i * l + p, c));
          sq += d * d;
        }
        num += static_cast<double>(m[p]) * sq;
      }
      acc += num / msum;
    }
    out.group[si] = present > 0 ? acc / present : 0.0;
    out.gate[si] = static_cast<double>(present) / static_cast<double>(b);
  }
  return out;
}

double total_loss(const LossBreakdown& breakdown, const LossWeights& weights) {
  double ms = 0.0, mod = 0.0;
  int n_ms = 0, n_mod = 0;
  for (Stream s : kAllStreams) {
    const auto si = index_of(s);
    if (breakdown.gate[si] <= 0.0) continue;
    if (is_optical(s)) {
      ms += breakdown.group[si];
      ++n_ms;
    } else {
      mod += breakdown.group[si];
      ++n_mod;
    }
  }
  return weights.optical * (n_ms > 0 ? ms / n_ms : 0.0) + weights.auxiliary * (n_mod > 0 ? mod / n_mod : 0.0);
}

template <typename S>
Objective<S> pretrain_objective(const PretrainOutput<S>& output, const ModalBatch<S>& batch,
                                const LossWeights& weights) {
  if (weights.optical < 0.0 || weights.auxiliary < 0.0) throw ContractError("loss weights must be non-negative");
  Objective<S> out;
  out.breakdown = group_losses(output, batch);
  out.breakdown.weights = weights;
  const Index b = batch.batch, l = batch.grid.num_patches();

  // One weighted sum per group: each sample's masked mean is folded
  // into per-patch weights scaled by λ / (#present groups in its branch) / B.
  Tensor<S> total;
  for (Stream s : kAllStreams) {
    const auto si = index_of(s);
    Eigen::Array<S, Eigen::Dynamic, 1> w = Eigen::Array<S, Eigen::Dynamic, 1>::Zero(b * l);
    bool any = false;
    for (Index i = 0; i < b; ++i) {
      const auto& avail = batch.availability[static_cast<std::size_t>(i)];
      if (!avail[si]) continue;
      const auto m = patch_weights<S>(plans_for(output, s)[static_cast<std::size_t>(i)],
                                      batch.validity[si].segment(i * l, l), true);
      const S msum = m.sum();
      if (msum == S(0)) continue;
      const double lambda = is_optical(s) ? weights.optical : weights.auxiliary;
      const double share = lambda / present_in_branch(avail, is_optical(s)) / static_cast<double>(b);
      if (share == 0.0) continue;
      w.segment(i * l, l) = m * static_cast<S>(share) / msum;
      any = true;
    }
    if (!any) continue;
    const auto& tgt = batch.targets[si];
    auto target = Tensor<S>::constant({b, l, tgt.cols()},
                                      Eigen::Map<const typename Tensor<S>::Array>(tgt.data(), tgt.size()));
    auto diff = sub(output.reconstructions[si], target);
    auto term = weighted_sum(sum_last(mul(diff, diff)), w);
    total = total.defined() ? add(total, term) : term;
  }
  out.loss = total.defined() ? total : Tensor<S>::zeros({1});
  out.breakdown.total = static_cast<double>(out.loss.item());
  return out;
}

template Tensor<float> masked_mse<float>(const Tensor<float>&, const Tensor<float>&,
                                         const Eigen::Array<float, Eigen::Dynamic, 1>&);
template Tensor<double> masked_mse<double>(const Tensor<double>&, const Tensor<double>&,
                                           const Eigen::Array<double, Eigen::Dynamic, 1>&);
template Eigen::ArrayXf patch_weights<float>(const MaskPlan&, const Eigen::Ref<const Eigen::ArrayXf>&, bool);
template Eigen::ArrayXd patch_weights<double>(const MaskPlan&, const Eigen::Ref<const Eigen::ArrayXd>&, bool);
template LossBreakdown group_losses<float>(const PretrainOutput<float>&, const ModalBatch<float>&);
template LossBreakdown group_losses<double>(const PretrainOutput<double>&, const ModalBatch<double>&);
template Objective<float> pretrain_objective<float>(const PretrainOutput<float>&, const ModalBatch<float>&,
                                                    const LossWeights&);
template Objective<double> pretrain_objective<double>(const PretrainOutput<double>&, const ModalBatch<double>&,
                                                      const LossWeights&);

}  // namespace floro
