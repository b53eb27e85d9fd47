#pragma once

// Frozen-encoder evaluation: pooled features, a linear softmax probe trained
// with AdamW, classification and regression metrics, and the paired
// absolute vs absolute+geo positional-encoding comparison.

#include <floro/net.hpp>
#include <floro/synthcorpus.hpp>
#include <floro/trainer.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace floro {

enum class PeMode { kAbsOnly, kAbsPlusGeo };

std::string_view pe_mode_name(PeMode m);

struct ProbeConfig {
  PeMode pe_mode = PeMode::kAbsPlusGeo;
  Index epochs = 100;
  Index batch_size = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

struct FeatureSet {
  Eigen::MatrixXd features;  // [N, encoder_dim]
  std::vector<int> labels;
  Index geo_fallbacks = 0;  // samples that had no geotransform under ABS_PLUS_GEO
};

/// Mean-pooled unmasked encoder tokens for every sample. Under ABS_PLUS_GEO,
/// samples without a geotransform use the absolute table only; a warning is
/// written to `warnings` (if given) for each of them.
FeatureSet extract_features(const Encoder<float>& encoder, std::span<const MultimodalSample> samples, PeMode mode,
                            Index batch_size = 32, std::ostream* warnings = nullptr);

struct ProbeEpoch {
  Index epoch = 0;  // 1-based
  double train_loss = 0.0;
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

struct ProbeReport {
  PeMode pe_mode = PeMode::kAbsPlusGeo;
  int num_classes = 0;
  double overall_accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  Eigen::MatrixXi confusion;  // [true, predicted]
  std::vector<ProbeEpoch> curve;
};

struct ClassificationScores {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  std::vector<double> per_class_f1;
  Eigen::MatrixXi confusion;
};

ClassificationScores classification_scores(std::span<const int> truth, std::span<const int> predicted,
                                           int num_classes);

/// Linear layer + softmax cross-entropy on standardized features, scored on `val` after every epoch.
ProbeReport linear_probe(const FeatureSet& train, const FeatureSet& val, int num_classes, const ProbeConfig& config);

struct RegressionScores {
  double r2 = 0.0;
  double rmse = 0.0;
};

/// Throws ContractError on length mismatch or fewer than 2 values and
/// std::domain_error when the targets have zero variance.
RegressionScores regression_metrics(std::span<const double> preds, std::span<const double> targets);
/// Averages predictions and targets per chip id before scoring.
RegressionScores chip_regression_metrics(std::span<const double> preds, std::span<const double> targets,
                                         std::span<const std::string> chip_ids);

struct AblationResult {
  std::vector<ProbeReport> abs_only;  // one per seed
  std::vector<ProbeReport> abs_geo;
  double epoch1_gap = 0.0;  // mean OA(geo) - OA(abs) after the first probe epoch
  double final_gap = 0.0;   // same after the last epoch
};

/// Paired probes over the corpus train/val splits; identical seeds, data order and hyperparameters per pair.
AblationResult ablation_run(const Corpus& corpus, const Encoder<float>& encoder, const ProbeConfig& base,
                            std::span<const std::uint64_t> seeds, std::ostream* warnings = nullptr);

/// report.txt, metrics.txt (key = value) and confusion.csv under dir, each prefixed.
void write_probe_report(const std::filesystem::path& dir, const std::string& prefix, const ProbeReport& report);
std::string format_probe_report(const ProbeReport& report);

}  // namespace floro
