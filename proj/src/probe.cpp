#include <floro/probe.hpp>

#include <floro/ops.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

namespace floro {

namespace fs = std::filesystem;

std::string_view pe_mode_name(PeMode m) { return m == PeMode::kAbsOnly ? "ABS_ONLY" : "ABS_PLUS_GEO"; }

FeatureSet extract_features(const Encoder<float>& encoder, std::span<const MultimodalSample> samples, PeMode mode,
                            Index batch_size, std::ostream* warnings) {
  if (batch_size < 1) throw ContractError("extract_features: batch size must be >= 1");
  FeatureSet out;
  out.features.resize(static_cast<Index>(samples.size()), encoder.config.encoder_dim);
  const bool geo = mode == PeMode::kAbsPlusGeo;
  for (std::size_t begin = 0; begin < samples.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(samples.size(), begin + static_cast<std::size_t>(batch_size));
    const auto part = samples.subspan(begin, end - begin);
    for (const auto& s : part) {
      out.labels.push_back(s.label ? *s.label : -1);
      if (geo && !s.geotransform) {
        ++out.geo_fallbacks;
        if (warnings) *warnings << "warning: sample " << s.id << " has no geotransform; using absolute encoding only\n";
      }
    }
    const auto batch = prepare_batch<float>(part, encoder.config.layout, encoder.config.patch_size);
    const auto pooled = pooled_features(encoder, batch, geo);
    const Index d = encoder.config.encoder_dim;
    for (std::size_t i = 0; i < part.size(); ++i)
      out.features.row(static_cast<Index>(begin + i)) =
          pooled.value().segment(static_cast<Index>(i) * d, d).cast<double>().transpose();
  }
  return out;
}

ClassificationScores classification_scores(std::span<const int> truth, std::span<const int> predicted,
                                           int num_classes) {
  if (truth.size() != predicted.size() || truth.empty())
    throw ContractError("classification_scores: need equal, non-empty label lists");
  ClassificationScores s;
  s.confusion = Eigen::MatrixXi::Zero(num_classes, num_classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= num_classes || predicted[i] < 0 || predicted[i] >= num_classes)
      throw IndexError("classification_scores: label outside [0, " + std::to_string(num_classes) + ")");
    ++s.confusion(truth[i], predicted[i]);
  }
  s.accuracy = static_cast<double>(s.confusion.trace()) / static_cast<double>(truth.size());
  s.per_class_f1.assign(static_cast<std::size_t>(num_classes), 0.0);
  double f1_sum = 0.0;
  int scored = 0;
  for (int c = 0; c < num_classes; ++c) {
    const double tp = s.confusion(c, c);
    const double fn = s.confusion.row(c).sum() - tp;
    const double fp = s.confusion.col(c).sum() - tp;
    if (tp + fn + fp == 0.0) continue;  // class never seen nor predicted
    s.per_class_f1[static_cast<std::size_t>(c)] = 2.0 * tp / (2.0 * tp + fp + fn);
    f1_sum += s.per_class_f1[static_cast<std::size_t>(c)];
    ++scored;
  }
  s.macro_f1 = scored > 0 ? f1_sum / scored : 0.0;
  return s;
}

namespace {

std::vector<int> predict(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w, const Eigen::RowVectorXd& b) {
  const Eigen::MatrixXd logits = (x * w).rowwise() + b;
  std::vector<int> out(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

}  // namespace

ProbeReport linear_probe(const FeatureSet& train, const FeatureSet& val, int num_classes, const ProbeConfig& config) {
  if (train.features.rows() == 0 || val.features.rows() == 0) throw ContractError("linear_probe: empty split");
  if (train.features.cols() != val.features.cols()) throw ShapeError("linear_probe: feature widths differ");
  if (config.epochs < 1 || config.batch_size < 1) throw ContractError("linear_probe: epochs and batch size must be >= 1");
  const std::set<int> distinct(train.labels.begin(), train.labels.end());
  if (distinct.size() < 2) throw ContractError("linear_probe: training labels contain fewer than two classes");
  for (int l : train.labels)
    if (l < 0 || l >= num_classes) throw ContractError("linear_probe: training label outside the class range");

  // Standardize with training statistics.
  const Eigen::RowVectorXd mu = train.features.colwise().mean();
  Eigen::RowVectorXd sd = ((train.features.rowwise() - mu).array().square().colwise().mean()).sqrt();
  sd = sd.cwiseMax(1e-8);
  const Eigen::MatrixXd xt = (train.features.rowwise() - mu).array().rowwise() / sd.array();
  const Eigen::MatrixXd xv = (val.features.rowwise() - mu).array().rowwise() / sd.array();

  const Index d = xt.cols(), n = xt.rows();
  NamedTensors<double> params = {{"probe.weight", Tensor<double>::zeros({d, num_classes}, true)},
                                 {"probe.bias", Tensor<double>::zeros({num_classes}, true)}};
  AdamWConfig adam;
  adam.lr = config.lr;
  auto state = OptimizerState<double>::init(params, adam);

  ProbeReport report;
  report.pe_mode = config.pe_mode;
  report.num_classes = num_classes;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  auto weights = [&] {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
               params[0].second.value().data(), d, num_classes)
        .eval();
  };
  auto bias = [&] { return Eigen::Map<const Eigen::RowVectorXd>(params[1].second.value().data(), num_classes).eval(); };

  for (Index epoch = 0; epoch < config.epochs; ++epoch) {
    auto rng = keyed_rng({config.seed, tag(RngDomain::kProbe), static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }
    double loss_sum = 0.0;
    for (Index begin = 0; begin < n; begin += config.batch_size) {
      const Index count = std::min(config.batch_size, n - begin);
      Eigen::MatrixXd xb(count, d);
      for (Index i = 0; i < count; ++i) xb.row(i) = xt.row(order[static_cast<std::size_t>(begin + i)]);
      const Eigen::MatrixXd w = weights();
      const Eigen::RowVectorXd b = bias();
      Eigen::MatrixXd logits = (xb * w).rowwise() + b;
      // Softmax cross-entropy; dL/dlogits = (p - onehot) / count.
      Eigen::MatrixXd dlogits(count, num_classes);
      for (Index i = 0; i < count; ++i) {
        const double mx = logits.row(i).maxCoeff();
        Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp();
        const double z = e.sum();
        const int y = train.labels[static_cast<std::size_t>(order[static_cast<std::size_t>(begin + i)])];
        loss_sum += -(logits(i, y) - mx - std::log(z));
        dlogits.row(i) = e / z;
        dlogits(i, y) -= 1.0;
      }
      dlogits /= static_cast<double>(count);
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> gw = xb.transpose() * dlogits;
      const Eigen::RowVectorXd gb = dlogits.colwise().sum();
      std::vector<Eigen::ArrayXd> grads = {Eigen::Map<const Eigen::ArrayXd>(gw.data(), gw.size()),
                                           Eigen::Map<const Eigen::ArrayXd>(gb.data(), gb.size())};
      adamw_step(params, grads, state);
    }
    const auto pred = predict(xv, weights(), bias());
    const auto scores = classification_scores(val.labels, pred, num_classes);
    report.curve.push_back({epoch + 1, loss_sum / static_cast<double>(n), scores.accuracy, scores.macro_f1});
    if (epoch + 1 == config.epochs) {
      report.overall_accuracy = scores.accuracy;
      report.macro_f1 = scores.macro_f1;
      report.per_class_f1 = scores.per_class_f1;
      report.confusion = scores.confusion;
    }
  }
  return report;
}

RegressionScores regression_metrics(std::span<const double> preds, std::span<const double> targets) {
  if (preds.size() != targets.size()) throw ContractError("regression_metrics: length mismatch");
  if (preds.size() < 2) throw ContractError("regression_metrics: need at least two values");
  const double n = static_cast<double>(targets.size());
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / n;
  double sse = 0.0, sst = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    sse += (targets[i] - preds[i]) * (targets[i] - preds[i]);
    sst += (targets[i] - mean) * (targets[i] - mean);
  }
  if (sst == 0.0) throw std::domain_error("regression_metrics: targets have zero variance, R^2 is undefined");
  return {1.0 - sse / sst, std::sqrt(sse / n)};
}

RegressionScores chip_regression_metrics(std::span<const double> preds, std::span<const double> targets,
                                         std::span<const std::string> chip_ids) {
  if (preds.size() != targets.size() || preds.size() != chip_ids.size())
    throw ContractError("chip_regression_metrics: length mismatch");
  std::map<std::string, std::array<double, 3>> acc;  // pred sum, target sum, count
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto& a = acc[chip_ids[i]];
    a[0] += preds[i];
    a[1] += targets[i];
    a[2] += 1.0;
  }
  std::vector<double> p, t;
  for (const auto& [id, a] : acc) {
    p.push_back(a[0] / a[2]);
    t.push_back(a[1] / a[2]);
  }
  return regression_metrics(p, t);
}

AblationResult ablation_run(const Corpus& corpus, const Encoder<float>& encoder, const ProbeConfig& base,
                            std::span<const std::uint64_t> seeds, std::ostream* warnings) {
  if (seeds.empty()) throw ContractError("ablation_run: need at least one seed");
  std::vector<MultimodalSample> train, val;
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    const auto split = corpus.manifest.entries[i].split;
    if (split == Split::kTrain) train.push_back(corpus.samples[i]);
    if (split == Split::kVal) val.push_back(corpus.samples[i]);
  }
  int classes = corpus.manifest.num_classes;
  for (const auto& s : corpus.samples)
    if (s.label) classes = std::max(classes, *s.label + 1);

  AblationResult result;
  for (PeMode mode : {PeMode::kAbsOnly, PeMode::kAbsPlusGeo}) {
    const auto ft = extract_features(encoder, train, mode, 32, warnings);
    const auto fv = extract_features(encoder, val, mode, 32, nullptr);
    for (std::uint64_t seed : seeds) {
      ProbeConfig cfg = base;
      cfg.pe_mode = mode;
      cfg.seed = seed;
      auto report = linear_probe(ft, fv, classes, cfg);
      (mode == PeMode::kAbsOnly ? result.abs_only : result.abs_geo).push_back(std::move(report));
    }
  }
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    result.epoch1_gap += result.abs_geo[i].curve.front().accuracy - result.abs_only[i].curve.front().accuracy;
    result.final_gap += result.abs_geo[i].overall_accuracy - result.abs_only[i].overall_accuracy;
  }
  result.epoch1_gap /= static_cast<double>(seeds.size());
  result.final_gap /= static_cast<double>(seeds.size());
  return result;
}

std::string format_probe_report(const ProbeReport& r) {
  std::ostringstream os;
  char buf[128];
  os << "linear probe (" << pe_mode_name(r.pe_mode) << "), " << r.num_classes << " classes\n";
  std::snprintf(buf, sizeof buf, "overall accuracy  %.4f\nmacro F1          %.4f\n", r.overall_accuracy, r.macro_f1);
  os << buf;
  for (std::size_t c = 0; c < r.per_class_f1.size(); ++c) {
    std::snprintf(buf, sizeof buf, "  class %2zu  F1 %.4f\n", c, r.per_class_f1[c]);
    os << buf;
  }
  os << "epoch  train_loss  accuracy  macro_f1\n";
  for (const auto& e : r.curve) {
    std::snprintf(buf, sizeof buf, "%5lld  %10.5f  %8.4f  %8.4f\n", static_cast<long long>(e.epoch), e.train_loss,
                  e.accuracy, e.macro_f1);
    os << buf;
  }
  return os.str();
}

void write_probe_report(const fs::path& dir, const std::string& prefix, const ProbeReport& r) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  {
    std::ofstream os(dir / (prefix + "report.txt"));
    os << format_probe_report(r);
    if (!os) throw IoError("failed writing probe report under " + dir.string());
  }
  {
    std::ofstream os(dir / (prefix + "metrics.txt"));
    char buf[64];
    os << "pe_mode = " << pe_mode_name(r.pe_mode) << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", r.overall_accuracy);
    os << "overall_accuracy = " << buf << "\n";
    std::snprintf(buf, sizeof buf, "%.6f", r.macro_f1);
    os << "macro_f1 = " << buf << "\n";
    if (!r.curve.empty()) {
      std::snprintf(buf, sizeof buf, "%.6f", r.curve.front().accuracy);
      os << "epoch1_accuracy = " << buf << "\n";
    }
    for (std::size_t c = 0; c < r.per_class_f1.size(); ++c) {
      std::snprintf(buf, sizeof buf, "%.6f", r.per_class_f1[c]);
      os << "f1_class_" << c << " = " << buf << "\n";
    }
    if (!os) throw IoError("failed writing probe metrics under " + dir.string());
  }
  {
    std::ofstream os(dir / (prefix + "confusion.csv"));
    os << "true\\pred";
    for (Index c = 0; c < r.confusion.cols(); ++c) os << "," << c;
    os << "\n";
    for (Index t = 0; t < r.confusion.rows(); ++t) {
      os << t;
      for (Index c = 0; c < r.confusion.cols(); ++c) os << "," << r.confusion(t, c);
      os << "\n";
    }
    if (!os) throw IoError("failed writing confusion matrix under " + dir.string());
  }
}

}  // namespace floro
