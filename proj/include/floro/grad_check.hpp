#pragma once

#include <floro/tensor.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace floro {

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::map<std::string, double> per_parameter_errors;
};

template <typename S>
using NamedTensors = std::vector<std::pair<std::string, Tensor<S>>>;

/// |a - n| / max(1, |a|, |n|)
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

/// Coordinate budget for large models. With max_coords_per_param == 0 every
/// coordinate is perturbed; otherwise that many are drawn per tensor, without
/// replacement, from a generator seeded with `seed`.
struct GradCheckSampling {
  Index max_coords_per_param = 0;
  std::uint64_t seed = 0;
};

/// Compares backward() against central differences (f(θ+ε) - f(θ-ε)) / 2ε
/// for every coordinate of every named parameter. `loss_fn` rebuilds the
/// graph from the current parameter values on each call.
template <typename S>
GradCheckReport grad_check(const std::function<Tensor<S>()>& loss_fn, NamedTensors<S>& params, double epsilon,
                           const GradCheckSampling& sampling = {}) {
  if (!(epsilon > 0.0)) throw ContractError("grad_check: epsilon must be positive");
  if (sampling.max_coords_per_param < 0) throw ContractError("grad_check: negative coordinate budget");
  std::mt19937_64 rng(sampling.seed);
  auto evaluate = [&]() {
    const S v = loss_fn().item();
    if (!std::isfinite(static_cast<double>(v))) throw NumericError("grad_check: loss is not finite");
    return static_cast<double>(v);
  };

  for (auto& [name, p] : params) p.zero_grad();
  Tensor<S> loss = loss_fn();
  if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("grad_check: loss is not finite");
  backward(loss);

  GradCheckReport report;
  for (auto& [name, p] : params) {
    const auto analytic = p.grad();
    double worst = 0.0;
    auto& value = p.mutable_value();
    std::vector<Index> coords(static_cast<std::size_t>(value.size()));
    std::iota(coords.begin(), coords.end(), Index{0});
    if (sampling.max_coords_per_param > 0 && value.size() > sampling.max_coords_per_param) {
      std::vector<Index> picked;
      std::sample(coords.begin(), coords.end(), std::back_inserter(picked), sampling.max_coords_per_param, rng);
      coords = std::move(picked);
    }
    for (const Index i : coords) {
      const S saved = value[i];
      value[i] = saved + static_cast<S>(epsilon);
      const double up = evaluate();
      value[i] = saved - static_cast<S>(epsilon);
      const double down = evaluate();
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      worst = std::max(worst, relative_error(static_cast<double>(analytic[i]), numeric));
    }
    report.per_parameter_errors[name] = worst;
    report.max_relative_error = std::max(report.max_relative_error, worst);
  }
  for (auto& [name, p] : params) p.zero_grad();
  return report;
}

}  // namespace floro
