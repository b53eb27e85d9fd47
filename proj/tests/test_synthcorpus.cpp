#include <floro/synthcorpus.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fixtures.hpp"

using namespace floro;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("floro_test_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

bool same_pixels(const MultimodalSample& a, const MultimodalSample& b) {
  if (a.height != b.height || a.width != b.width) return false;
  for (Stream s : kAllStreams) {
    if (a.available(s) != b.available(s)) return false;
    if (!a.available(s)) continue;
    if (!(a.stream(s).pixels == b.stream(s).pixels).all()) return false;
    if (!(a.stream(s).validity == b.stream(s).validity).all()) return false;
  }
  return true;
}

void expect_in_range(const MultimodalSample& s) {
  for (Stream st : kAllStreams) {
    if (!s.available(st)) continue;
    const auto r = clip_range(st);
    EXPECT_GE(s.stream(st).pixels.minCoeff(), r.lo) << stream_name(st);
    EXPECT_LE(s.stream(st).pixels.maxCoeff(), r.hi) << stream_name(st);
  }
}

}  // namespace

TEST(Sar, DecibelAnchors) {
  EXPECT_EQ(sar_to_db(1.0), 0.0);
  EXPECT_EQ(sar_to_db(10.0), 10.0);
  EXPECT_EQ(sar_to_db(0.001), -30.0);
  EXPECT_THROW(sar_to_db(0.0), std::domain_error);
  EXPECT_THROW(sar_to_db(-1.0), std::domain_error);
  EXPECT_NEAR(db_to_sar(sar_to_db(0.37)), 0.37, 1e-15);
}

TEST(Profiles, StreamTableAndNames) {
  using A = std::array<bool, kNumStreams>;
  EXPECT_EQ(profile_streams(Profile::kS1S2), (A{true, true, true, true, false, true}));
  EXPECT_EQ(profile_streams(Profile::kUavRgbDsm), (A{true, false, false, false, true, false}));
  for (Profile p : kAllProfiles) {
    EXPECT_EQ(parse_profile(profile_name(p)), p);
    EXPECT_TRUE(profile_streams(p)[index_of(Stream::kBgr)]);
    EXPECT_GT(profile_resolution(p), 0.0);
  }
  EXPECT_FALSE(parse_profile("S2").has_value());
}

TEST(Scenario, Validation) {
  ScenarioConfig s;
  EXPECT_NO_THROW(s.validate());
  EXPECT_EQ(s.num_classes(), 8);
  s.nodata_probability = 0.25;
  EXPECT_THROW(s.validate(), ContractError);
  s = {};
  s.size = 0;
  EXPECT_THROW(s.validate(), ContractError);
  s = {};
  s.textures = 0;
  EXPECT_THROW(s.validate(), ContractError);
}

TEST(Labels, LatitudeBand) {
  const Extent e;
  EXPECT_EQ(latitude_band(-16.0e6, e, 4), 0);
  EXPECT_EQ(latitude_band(-0.1, e, 4), 1);
  EXPECT_EQ(latitude_band(0.0, e, 4), 2);
  EXPECT_EQ(latitude_band(16.0e6, e, 4), 3);
  EXPECT_EQ(latitude_band(99.0e6, e, 4), 3);
}

TEST(SynthChip, ContractsHoldForEveryProfile) {
  for (Profile p : kAllProfiles) {
    ScenarioConfig sc;
    sc.profile = p;
    sc.size = 16;
    Rng rng(static_cast<std::uint64_t>(p) + 1);
    int nodata = 0;
    for (int i = 0; i < 40; ++i) {
      const auto s = synth_chip(sc, rng);
      ASSERT_NO_THROW(s.validate({}, 4));
      expect_in_range(s);
      for (Stream st : kAllStreams) EXPECT_EQ(s.available(st), profile_streams(p)[index_of(st)]);
      ASSERT_TRUE(s.geotransform && s.label);
      EXPECT_EQ(s.geotransform->pixel_width, profile_resolution(p));
      // label oracle: band of the chip centre northing, recomputed by hand
      const double cy = s.geotransform->origin_y - 8.0 * profile_resolution(p);
      const int band = static_cast<int>(std::floor((cy + 16.0e6) / 32.0e6 * 4.0));
      EXPECT_EQ(*s.label / sc.textures, std::clamp(band, 0, 3));
      EXPECT_LT(*s.label, sc.num_classes());
      if ((s.stream(Stream::kBgr).validity == 0).any()) ++nodata;
      for (Stream st : kAuxStreams)
        if (s.available(st)) EXPECT_TRUE((s.stream(st).validity == 1).all());
    }
    EXPECT_GT(nodata, 0);
    EXPECT_LT(nodata, 20);
  }
}

TEST(SynthChip, UngeoreferencedScenario) {
  ScenarioConfig sc;
  sc.georeferenced = false;
  Rng rng(3);
  const auto s = synth_chip(sc, rng);
  EXPECT_FALSE(s.geotransform.has_value());
  EXPECT_TRUE(s.label.has_value());
}

TEST(Splits, NinetyEightTwo) {
  const auto s = assign_splits(100, 4);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::kTrain), 90);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::kVal), 8);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::kTest), 2);
  EXPECT_EQ(assign_splits(100, 4), s);
  EXPECT_NE(assign_splits(100, 5), s);
  for (Split sp : {Split::kTrain, Split::kVal, Split::kTest}) EXPECT_EQ(parse_split(split_name(sp)), sp);
}

TEST(Corpus, DeterministicAndLabelled) {
  std::vector<ScenarioConfig> sc(2);
  sc[0].size = sc[1].size = 8;
  sc[1].profile = Profile::kUavMsDsm;
  const auto a = synth_corpus(sc, {10, 12}, 3);
  const auto b = synth_corpus(sc, {10, 12}, 3);
  ASSERT_EQ(a.samples.size(), 22u);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    EXPECT_TRUE(same_pixels(a.samples[i], b.samples[i]));
    EXPECT_TRUE(ids.insert(a.manifest.entries[i].id).second);
    EXPECT_EQ(a.manifest.entries[i].label, a.samples[i].label);
    EXPECT_EQ(a.manifest.entries[i].id, a.samples[i].id);
  }
  EXPECT_EQ(a.manifest.num_classes, 8);
  EXPECT_THROW(synth_corpus(sc, {9, 12}, 3), ContractError);
  EXPECT_THROW(synth_corpus(sc, {10}, 3), ContractError);
}

TEST(Corpus, HundredChipBuildSplitsNinetyEightTwo) {
  const auto dir = scratch_dir("split");
  std::vector<ScenarioConfig> sc(1);
  sc[0].size = 8;
  const auto m = build_corpus(sc, {100}, 1, dir);
  EXPECT_EQ(m.in_split(Split::kTrain).size(), 90u);
  EXPECT_EQ(m.in_split(Split::kVal).size(), 8u);
  EXPECT_EQ(m.in_split(Split::kTest).size(), 2u);
  fs::remove_all(dir);
}

TEST(ChipFormat, RoundTripIsBitExact) {
  const auto dir = scratch_dir("chip");
  ScenarioConfig sc;
  sc.size = 8;
  Rng rng(5);
  for (Profile p : kAllProfiles) {
    sc.profile = p;
    auto s = synth_chip(sc, rng);
    s.id = std::string(profile_name(p));
    write_chip(dir / s.id, s);
    const auto back = read_chip(dir / s.id);
    EXPECT_TRUE(same_pixels(s, back));
    EXPECT_EQ(back.geotransform, s.geotransform);
    EXPECT_EQ(back.label, s.label);
  }
  auto plain = fixture::random_sample(4, 4, fixture::kAllPresent, rng, std::nullopt);
  plain.id = "plain";
  write_chip(dir / "plain", plain);
  const auto back = read_chip(dir / "plain");
  EXPECT_FALSE(back.geotransform.has_value());
  EXPECT_FALSE(back.label.has_value());
  EXPECT_TRUE(same_pixels(plain, back));
  plain.id = "";
  EXPECT_THROW(write_chip(dir / "x", plain), ContractError);
  plain.id = "two words";
  EXPECT_THROW(write_chip(dir / "x", plain), ContractError);
  fs::remove_all(dir);
}

TEST(ChipFormat, CorruptionIsReported) {
  const auto dir = scratch_dir("corrupt");
  std::mt19937_64 rng(6);
  auto s = fixture::random_sample(4, 4, fixture::kAllPresent, rng);
  write_chip(dir / "c", s);
  fs::resize_file(dir / "c" / "SAR.f32", 7);
  EXPECT_THROW(read_chip(dir / "c"), IoError);
  write_chip(dir / "d", s);
  {
    std::ofstream meta(dir / "d" / "meta.txt", std::ios::app);
    meta << "colour blue\n";
  }
  EXPECT_THROW(read_chip(dir / "d"), FormatError);
  EXPECT_THROW(read_chip(dir / "missing"), IoError);
  fs::remove_all(dir);
}

TEST(Manifest, RoundTripAndLoad) {
  const auto dir = scratch_dir("manifest");
  std::vector<ScenarioConfig> sc(2);
  sc[0].size = sc[1].size = 8;
  sc[1].profile = Profile::kHighresOptElev;
  sc[1].georeferenced = false;
  const auto m = build_corpus(sc, {10, 10}, 2, dir);
  const auto back = read_manifest(dir / "manifest.txt");
  ASSERT_EQ(back.entries.size(), m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(back.entries[i].id, m.entries[i].id);
    EXPECT_EQ(back.entries[i].profile, m.entries[i].profile);
    EXPECT_EQ(back.entries[i].split, m.entries[i].split);
    EXPECT_EQ(back.entries[i].label, m.entries[i].label);
    EXPECT_EQ(back.entries[i].geotransform, m.entries[i].geotransform);
  }
  const auto corpus = load_corpus(dir);
  const auto fresh = synth_corpus(sc, {10, 10}, 2);
  for (std::size_t i = 0; i < corpus.samples.size(); ++i) {
    EXPECT_TRUE(same_pixels(corpus.samples[i], fresh.samples[i]));
    for (Stream st : kAllStreams)
      EXPECT_EQ(corpus.samples[i].available(st), profile_streams(corpus.manifest.entries[i].profile)[index_of(st)]);
  }
  EXPECT_THROW(load_corpus(dir / "nope"), IoError);
  {
    std::ofstream bad(dir / "bad.txt");
    bad << "# header\nonly three fields\n";
  }
  EXPECT_THROW(read_manifest(dir / "bad.txt"), FormatError);
  fs::remove_all(dir);
}

TEST(Rotate, QuarterTurnMatchesIndexMap) {
  std::mt19937_64 rng(7);
  const auto s = fixture::random_sample(4, 6, fixture::kAllPresent, rng);
  const auto r = rotate90(s, 1);
  ASSERT_EQ(r.height, 6);
  ASSERT_EQ(r.width, 4);
  for (Stream st : kAllStreams)
    for (Index c = 0; c < StreamLayout{}[st]; ++c)
      for (Index y = 0; y < 6; ++y)
        for (Index x = 0; x < 4; ++x) EXPECT_EQ(r.at(st, c, y, x), s.at(st, c, x, 6 - 1 - y));
}

TEST(Rotate, HalfTurnIsInvolutionAndFullTurnIsIdentity) {
  ScenarioConfig sc;
  sc.size = 12;
  Rng rng(8);
  for (int i = 0; i < 10; ++i) {
    const auto s = synth_chip(sc, rng);
    EXPECT_TRUE(same_pixels(rotate90(rotate90(s, 2), 2), s));
    EXPECT_TRUE(same_pixels(rotate90(s, 4), s));
    EXPECT_TRUE(same_pixels(rotate90(rotate90(s, 1), 3), s));
    EXPECT_TRUE(same_pixels(rotate90(s, -1), rotate90(s, 3)));
  }
}

TEST(Noise, OnlyValidOpticalPixelsChange) {
  ScenarioConfig sc;
  sc.size = 16;
  sc.nodata_probability = 0.2;
  Rng rng(9);
  MultimodalSample s;
  do s = synth_chip(sc, rng);
  while (!(s.stream(Stream::kBgr).validity == 0).any());
  const auto n = add_noise(s, 0.2, rng);
  expect_in_range(n);
  EXPECT_TRUE((n.stream(Stream::kSar).pixels == s.stream(Stream::kSar).pixels).all());
  EXPECT_FALSE((n.stream(Stream::kBgr).pixels == s.stream(Stream::kBgr).pixels).all());
  const auto& valid = s.stream(Stream::kBgr).validity;
  for (Index i = 0; i < valid.size(); ++i)
    if (!valid[i]) EXPECT_EQ(n.stream(Stream::kBgr).pixels[i], s.stream(Stream::kBgr).pixels[i]);
  EXPECT_TRUE(same_pixels(add_noise(s, 0.0, rng), s));
  EXPECT_THROW(add_noise(s, -1.0, rng), ContractError);
}

TEST(Blur, PreservesConstantsAndSmooths) {
  MultimodalSample s;
  s.height = s.width = 8;
  s.set_stream(Stream::kBgr, PixelArray::Constant(3 * 64, 0.4f));
  PixelArray spike = PixelArray::Zero(64);
  spike[27] = 1.0f;
  s.set_stream(Stream::kNir, spike);
  s.stream(Stream::kBgr).validity[0] = 0;
  const auto b = gaussian_blur(s, 1.1);
  EXPECT_NEAR(b.stream(Stream::kBgr).pixels.maxCoeff(), 0.4f, 1e-6);
  EXPECT_NEAR(b.stream(Stream::kBgr).pixels.minCoeff(), 0.4f, 1e-6);
  EXPECT_LT(b.stream(Stream::kNir).pixels[27], 1.0f);
  EXPECT_GT(b.stream(Stream::kNir).pixels[28], 0.0f);
  EXPECT_NEAR(b.stream(Stream::kNir).pixels.sum(), 1.0f, 0.05f);
  EXPECT_THROW(gaussian_blur(s, 0.0), ContractError);
}

TEST(DropBands, EmpiricalFrequencyMatchesProbability) {
  std::mt19937_64 frng(10);
  const auto s = fixture::random_sample(4, 4, {true, true, true, true, false, true}, frng);
  Rng rng(11);
  std::array<int, kNumStreams> dropped{};
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto d = drop_bands(s, rng, 0.3);
    for (Stream st : kAllStreams)
      if (s.available(st) && !d.available(st)) ++dropped[index_of(st)];
    EXPECT_NO_THROW(d.validate({}));
  }
  EXPECT_EQ(dropped[index_of(Stream::kBgr)], 0);
  for (Stream st : {Stream::kRedEdge, Stream::kNir, Stream::kSwir, Stream::kSar})
    EXPECT_NEAR(dropped[index_of(st)] / static_cast<double>(draws), 0.3, 0.02) << stream_name(st);
  EXPECT_THROW(drop_bands(s, rng, 1.0), ContractError);
  EXPECT_THROW(drop_bands(s, rng, -0.1), ContractError);
}

TEST(DropBands, KeepsAnOpticalStream) {
  std::mt19937_64 frng(12);
  const auto s = fixture::random_sample(4, 4, {false, true, true, false, true, false}, frng);
  Rng rng(13);
  for (int i = 0; i < 500; ++i) {
    const auto d = drop_bands(s, rng, 0.9);
    EXPECT_TRUE(d.available(Stream::kRedEdge) || d.available(Stream::kNir));
  }
}

TEST(Augment, DeterministicInGeneratorState) {
  ScenarioConfig sc;
  sc.size = 8;
  Rng g(14);
  const auto s = synth_chip(sc, g);
  Rng a(15), b(15);
  const auto x = augment(s, a), y = augment(s, b);
  EXPECT_TRUE(same_pixels(x, y));
  expect_in_range(x);
}
