#pragma once

// Synthetic georeferenced multimodal chips, the on-disk chip/manifest
// format, and the training-time augmentations (noise, blur, rot90, band
// and modality dropping).

#include <floro/modal_input.hpp>
#include <floro/random.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace floro {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// 10 * log10(linear); throws std::domain_error for linear <= 0.
double sar_to_db(double linear);
double db_to_sar(double db);

/// Sensor configurations and the streams each one provides.
enum class Profile : int { kS1S2 = 0, kHighresOptElev, kUavMsDsm, kUavRgbDsm };

inline constexpr std::array<Profile, 4> kAllProfiles = {Profile::kS1S2, Profile::kHighresOptElev, Profile::kUavMsDsm,
                                                        Profile::kUavRgbDsm};

std::string_view profile_name(Profile p);
/// Accepts S1S2, HIGHRES_OPT_ELEV, UAV_MS_DSM, UAV_RGB_DSM.
std::optional<Profile> parse_profile(std::string_view name);
std::array<bool, kNumStreams> profile_streams(Profile p);
/// Ground sampling distance in meters per pixel.
double profile_resolution(Profile p);

/// Projected window that chip geotransforms are sampled from.
struct Extent {
  double min_x = -16.0e6;
  double max_x = 16.0e6;
  double min_y = -16.0e6;
  double max_y = 16.0e6;
};

struct ScenarioConfig {
  Index size = 32;
  Profile profile = Profile::kS1S2;
  Extent extent;
  int latitude_bands = 4;
  int textures = 2;
  double nodata_probability = 0.15;  // chance that a chip gets a nodata region
  bool georeferenced = true;
  std::uint64_t seed = 0;  // mixed into the per-chip keys by build_corpus

  void validate() const;
  int num_classes() const { return latitude_bands * textures; }
};

/// Latitude band of a chip center northing within the extent, in [0, bands).
int latitude_band(double northing, const Extent& extent, int bands);

/// Class id recomputed from a stored geotransform and texture class.
int chip_label(const GeoTransform& gt, Index size, const ScenarioConfig& scenario, int texture);

MultimodalSample synth_chip(const ScenarioConfig& scenario, Rng& rng);

// ------------------------------------------------------------ augmentations

struct AugmentConfig {
  double max_noise = 0.2;
  double blur_sigma = 1.1;
  double blur_probability = 0.5;
  bool rotate = true;
};

/// Additive N(0, sigma) on valid optical pixels followed by re-clipping.
MultimodalSample add_noise(MultimodalSample sample, double sigma, Rng& rng);
/// Validity-weighted Gaussian blur of every present stream (radius ceil(3 sigma)).
MultimodalSample gaussian_blur(MultimodalSample sample, double sigma);
/// Counter-clockwise rotation by k * 90 degrees of all pixels and masks; the geotransform is kept.
MultimodalSample rotate90(MultimodalSample sample, int k);

MultimodalSample augment(MultimodalSample sample, Rng& rng, const AugmentConfig& config = {});

/// Drops each present non-BGR stream with probability p, keeping at least one optical stream.
MultimodalSample drop_bands(MultimodalSample sample, Rng& rng, double drop_probability);

// ------------------------------------------------------------ corpus on disk

enum class Split : int { kTrain = 0, kVal, kTest };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view name);

struct ManifestEntry {
  std::string id;
  Profile profile = Profile::kS1S2;
  Split split = Split::kTrain;
  std::optional<int> label;
  std::optional<GeoTransform> geotransform;
};

struct CorpusManifest {
  std::vector<ManifestEntry> entries;
  int num_classes = 0;

  std::vector<const ManifestEntry*> in_split(Split s) const;
};

struct Corpus {
  CorpusManifest manifest;
  std::vector<MultimodalSample> samples;  // parallel to manifest.entries
};

/// Deterministic 90/8/2 assignment over n chips.
std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed);

/// In-memory corpus; counts[i] chips from scenarios[i].
Corpus synth_corpus(const std::vector<ScenarioConfig>& scenarios, const std::vector<Index>& counts,
                    std::uint64_t seed);

/// Writes chips under out_dir/chips/<id>/ plus out_dir/manifest.txt.
CorpusManifest build_corpus(const std::vector<ScenarioConfig>& scenarios, const std::vector<Index>& counts,
                            std::uint64_t seed, const std::filesystem::path& out_dir);

void write_chip(const std::filesystem::path& dir, const MultimodalSample& sample);
MultimodalSample read_chip(const std::filesystem::path& dir);

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
CorpusManifest read_manifest(const std::filesystem::path& path);

/// Manifest plus every chip it lists.
Corpus load_corpus(const std::filesystem::path& dir);

}  // namespace floro
