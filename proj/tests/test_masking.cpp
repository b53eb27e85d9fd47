#include <floro/masking.hpp>
#include <floro/net.hpp>
#include <floro/ops.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace floro;
using T = Tensor<double>;

TEST(VisibleCount, FloorRule) {
  EXPECT_EQ(visible_count(16, 0.75), 4);
  EXPECT_EQ(visible_count(16, 0.0), 16);
  EXPECT_EQ(visible_count(10, 0.25), 7);
  EXPECT_EQ(visible_count(3, 0.75), 1);  // never below one
  EXPECT_EQ(visible_count(1, 0.5), 1);
}

TEST(SampleMask, L16Ratio75) {
  Rng rng(1);
  const auto plan = sample_mask(16, 0.75, rng);
  EXPECT_EQ(plan.num_visible, 4);
  EXPECT_EQ(std::count(plan.masked.begin(), plan.masked.end(), true), 12);
}

TEST(SampleMask, RandomPlansSatisfyInvariants) {
  Rng rng(2);
  const double ratios[] = {0.0, 0.25, 0.5, 0.75};
  for (int i = 0; i < 1000; ++i) {
    const Index l = 1 + i % 64;
    const double r = ratios[i % 4];
    const auto plan = sample_mask(l, r, rng);
    ASSERT_NO_THROW(check_plan(plan));
    std::set<Index> visible(plan.visible().begin(), plan.visible().end());
    EXPECT_EQ(static_cast<Index>(visible.size()), visible_count(l, r));
    for (Index p = 0; p < l; ++p) EXPECT_EQ(plan.masked[p], visible.count(p) == 0);
  }
}

TEST(SampleMask, RejectsBadArguments) {
  Rng rng(3);
  EXPECT_THROW(sample_mask(0, 0.5, rng), ContractError);
  EXPECT_THROW(sample_mask(4, 1.0, rng), ContractError);
  EXPECT_THROW(sample_mask(4, -0.1, rng), ContractError);
}

TEST(SampleMask, CheckPlanCatchesCorruption) {
  Rng rng(4);
  auto plan = sample_mask(8, 0.5, rng);
  auto bad = plan;
  bad.masked[bad.shuffle[0]] = true;
  EXPECT_THROW(check_plan(bad), ContractError);
  bad = plan;
  std::swap(bad.restore[0], bad.restore[1]);
  EXPECT_THROW(check_plan(bad), ContractError);
  bad = plan;
  bad.num_visible = 0;
  EXPECT_THROW(check_plan(bad), ContractError);
}

TEST(SampleMask, PositionsAreUniform) {
  // chi-square on how often each position is masked
  Rng rng(5);
  const Index l = 16;
  const int draws = 20000;
  std::vector<int> hits(l, 0);
  for (int i = 0; i < draws; ++i) {
    const auto plan = sample_mask(l, 0.75, rng);
    for (Index p = 0; p < l; ++p) hits[p] += plan.masked[p] ? 1 : 0;
  }
  const double expect = draws * 12.0 / 16.0;
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - expect) * (h - expect) / expect;
  EXPECT_LT(chi2, 37.7);  // 99.9th percentile, 15 degrees of freedom
}

TEST(DrawPlans, BranchesAreIndependent) {
  // 2x2 contingency of "patch 0 masked" in the optical vs auxiliary plan
  ForwardOptions opt;
  opt.ratio = 0.5;
  opt.seed = 9;
  for (std::uint64_t k = 0; k < 4000; ++k) opt.sample_keys.push_back(k);
  const auto [optical, aux] = draw_plans(8, opt);
  double n[2][2] = {{0, 0}, {0, 0}};
  for (std::size_t i = 0; i < optical.size(); ++i) n[optical[i].masked[0]][aux[i].masked[0]] += 1;
  const double total = static_cast<double>(optical.size());
  double chi2 = 0.0;
  for (int a = 0; a < 2; ++a)
    for (int b = 0; b < 2; ++b) {
      const double e = (n[a][0] + n[a][1]) * (n[0][b] + n[1][b]) / total;
      chi2 += (n[a][b] - e) * (n[a][b] - e) / e;
    }
  EXPECT_LT(chi2, 10.83);  // 99.9th percentile, 1 degree of freedom
}

TEST(DrawPlans, KeyedAndReproducible) {
  ForwardOptions opt;
  opt.ratio = 0.5;
  opt.seed = 1;
  opt.sample_keys = {7, 8};
  const auto a = draw_plans(16, opt);
  const auto b = draw_plans(16, opt);
  EXPECT_EQ(a.first[0].shuffle, b.first[0].shuffle);
  EXPECT_NE(a.first[0].shuffle, a.first[1].shuffle);
  opt.sample_keys = {8};
  EXPECT_EQ(draw_plans(16, opt).first[0].shuffle, a.first[1].shuffle);
  opt.epoch = 1;
  EXPECT_NE(draw_plans(16, opt).first[0].shuffle, a.first[1].shuffle);
}

TEST(Curriculum, DefaultStages) {
  const CurriculumSchedule s;
  EXPECT_EQ(curriculum_ratio(0, s), 0.25);
  EXPECT_EQ(curriculum_ratio(49, s), 0.25);
  EXPECT_EQ(curriculum_ratio(50, s), 0.50);
  EXPECT_EQ(curriculum_ratio(120, s), 0.75);
  EXPECT_THROW(curriculum_ratio(-1, s), ContractError);
}

TEST(Curriculum, ValidationAndScaling) {
  CurriculumSchedule bad;
  bad.stages = {{1, 0.25}};
  EXPECT_THROW(bad.validate(), ContractError);
  bad.stages = {{0, 0.25}, {0, 0.5}};
  EXPECT_THROW(bad.validate(), ContractError);
  bad.stages = {{0, 1.0}};
  EXPECT_THROW(bad.validate(), ContractError);

  const auto s30 = CurriculumSchedule{}.scaled_to(30);
  ASSERT_EQ(s30.stages.size(), 3u);
  EXPECT_EQ(s30.stages[1].start_epoch, 9);
  EXPECT_EQ(s30.stages[2].start_epoch, 18);
  const auto s2 = CurriculumSchedule{}.scaled_to(2);
  EXPECT_EQ(curriculum_ratio(1, s2), 0.75);
}

TEST(ApplyMask, MatchesGatherOracle) {
  Rng rng(6);
  std::normal_distribution<double> nd;
  const Index b = 3, l = 9, d = 4;
  T::Array v(b * l * d);
  for (auto& x : v) x = nd(rng);
  const T tokens = T::constant({b, l, d}, v);
  std::vector<MaskPlan> plans;
  for (Index i = 0; i < b; ++i) plans.push_back(sample_mask(l, 0.5, rng));
  const T vis = apply_mask(tokens, std::span<const MaskPlan>(plans));
  const Index nv = plans[0].num_visible;
  ASSERT_EQ(vis.shape(), (Shape{b, nv, d}));
  for (Index i = 0; i < b; ++i)
    for (Index r = 0; r < nv; ++r)
      for (Index k = 0; k < d; ++k) EXPECT_EQ(vis[(i * nv + r) * d + k], v[(i * l + plans[i].shuffle[r]) * d + k]);
}

TEST(RestoreWithMaskTokens, RoundTripAndMaskFill) {
  Rng rng(7);
  std::normal_distribution<double> nd;
  const Index b = 2, l = 8, d = 3;
  T::Array v(b * l * d);
  for (auto& x : v) x = nd(rng);
  const T tokens = T::constant({b, l, d}, v);
  const T mask = T::constant({d}, (T::Array(d) << 10, 20, 30).finished());
  std::vector<MaskPlan> plans{sample_mask(l, 0.75, rng), sample_mask(l, 0.75, rng)};
  const T full = restore_with_mask_tokens(apply_mask(tokens, std::span<const MaskPlan>(plans)),
                                          std::span<const MaskPlan>(plans), mask);
  ASSERT_EQ(full.shape(), tokens.shape());
  for (Index i = 0; i < b; ++i)
    for (Index p = 0; p < l; ++p)
      for (Index k = 0; k < d; ++k) {
        const Index at = (i * l + p) * d + k;
        EXPECT_EQ(full[at], plans[i].masked[p] ? mask[k] : v[at]);
      }
  // the single-plan overload agrees with a batch of identical plans
  const std::vector<MaskPlan> same{plans[0], plans[0]};
  const T a = restore_with_mask_tokens(apply_mask(tokens, plans[0]), plans[0], mask);
  const T c = restore_with_mask_tokens(apply_mask(tokens, std::span<const MaskPlan>(same)),
                                       std::span<const MaskPlan>(same), mask);
  EXPECT_TRUE((a.value() == c.value()).all());
}

TEST(RestoreWithMaskTokens, GradientsReachLatentAndMaskToken) {
  Rng rng(8);
  std::normal_distribution<double> nd;
  const Index b = 2, l = 6, d = 2;
  auto plan = sample_mask(l, 0.5, rng);
  T::Array lv(b * plan.num_visible * d);
  for (auto& x : lv) x = nd(rng);
  T latent = T::parameter({b, plan.num_visible, d}, lv);
  T mask = T::parameter({d}, (T::Array(d) << 0.3, -0.2).finished());
  T::Array w(b * l * d);
  for (auto& x : w) x = nd(rng);
  NamedTensors<double> params{{"latent", latent}, {"mask", mask}};
  const auto r = grad_check<double>(
      [&] { return weighted_sum(gelu(restore_with_mask_tokens(latent, plan, mask)), w); }, params, 1e-6);
  EXPECT_LT(r.max_relative_error, 1e-7);
}

TEST(IdentityPlan, KeepsEverything) {
  const auto plan = identity_plan(5);
  EXPECT_NO_THROW(check_plan(plan));
  EXPECT_EQ(plan.num_visible, 5);
  EXPECT_EQ(std::count(plan.masked.begin(), plan.masked.end(), true), 0);
}
