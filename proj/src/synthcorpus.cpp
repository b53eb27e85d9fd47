#include <floro/synthcorpus.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace floro {

namespace fs = std::filesystem;

double sar_to_db(double linear) {
  if (!(linear > 0.0)) throw std::domain_error("sar_to_db: backscatter must be positive");
  return 10.0 * std::log10(linear);
}

double db_to_sar(double db) { return std::pow(10.0, db / 10.0); }

namespace {

constexpr std::array<std::string_view, 4> kProfileNames = {"S1S2", "HIGHRES_OPT_ELEV", "UAV_MS_DSM", "UAV_RGB_DSM"};
constexpr std::array<std::string_view, 3> kSplitNames = {"train", "val", "test"};

using Field = Eigen::ArrayXXd;  // (y, x)

Field box_smooth(const Field& a, int radius) {
  const Index h = a.rows(), w = a.cols();
  auto clamp = [](Index i, Index n) { return std::clamp<Index>(i, 0, n - 1); };
  Field tmp(h, w), out(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += a(y, clamp(x + d, w));
      tmp(y, x) = s / (2 * radius + 1);
    }
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -radius; d <= radius; ++d) s += tmp(clamp(y + d, h), x);
      out(y, x) = s / (2 * radius + 1);
    }
  return out;
}

/// Zero-mean white noise smoothed twice with a box filter, scaled to [-1, 1].
Field smooth_field(Index h, Index w, int radius, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Field f(h, w);
  for (Index y = 0; y < h; ++y)
    for (Index x = 0; x < w; ++x) f(y, x) = normal(rng);
  f = box_smooth(box_smooth(f, radius), radius);
  f -= f.mean();
  const double m = f.abs().maxCoeff();
  if (m > 0.0) f /= m;
  return f;
}

// Reflectance signatures in stream channel order (B, G, R, RE, NIR, SWIR1, SWIR2).
constexpr std::array<double, 7> kVegetation = {0.04, 0.07, 0.05, 0.22, 0.45, 0.22, 0.11};
constexpr std::array<double, 7> kBareSoil = {0.18, 0.23, 0.29, 0.31, 0.34, 0.42, 0.36};

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_f32(std::ostream& os, const PixelArray& a) {
  for (Index i = 0; i < a.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(a[i]);
    const char bytes[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>((bits >> 24) & 0xff)};
    os.write(bytes, 4);
  }
}

std::vector<unsigned char> read_bytes(const fs::path& path, std::size_t expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (buf.size() != expected)
    throw IoError(path.string() + ": expected " + std::to_string(expected) + " bytes, found " +
                  std::to_string(buf.size()));
  return buf;
}

}  // namespace

std::string_view profile_name(Profile p) { return kProfileNames[static_cast<std::size_t>(p)]; }

std::optional<Profile> parse_profile(std::string_view name) {
  for (Profile p : kAllProfiles)
    if (profile_name(p) == name) return p;
  return std::nullopt;
}

std::array<bool, kNumStreams> profile_streams(Profile p) {
  //                 BGR   RE     NIR    SWIR   ELEV   SAR
  switch (p) {
    case Profile::kS1S2: return {true, true, true, true, false, true};
    case Profile::kHighresOptElev: return {true, false, true, false, true, false};
    case Profile::kUavMsDsm: return {true, true, true, false, true, false};
    case Profile::kUavRgbDsm: return {true, false, false, false, true, false};
  }
  throw ContractError("unknown profile");
}

double profile_resolution(Profile p) {
  switch (p) {
    case Profile::kS1S2: return 10.0;
    case Profile::kHighresOptElev: return 0.5;
    case Profile::kUavMsDsm: return 0.1;
    case Profile::kUavRgbDsm: return 0.05;
  }
  throw ContractError("unknown profile");
}

void ScenarioConfig::validate() const {
  if (size < 1) throw ContractError("scenario chip size must be positive");
  if (!(extent.min_x < extent.max_x) || !(extent.min_y < extent.max_y)) throw ContractError("degenerate extent");
  const double span = static_cast<double>(size) * profile_resolution(profile);
  if (extent.max_x - extent.min_x < span || extent.max_y - extent.min_y < span)
    throw ContractError("extent is smaller than one chip");
  if (latitude_bands < 1 || textures < 1) throw ContractError("class structure needs at least one band and texture");
  if (!(nodata_probability >= 0.0 && nodata_probability <= 0.2))
    throw ContractError("nodata probability must lie in [0, 0.2]");
}

int latitude_band(double northing, const Extent& extent, int bands) {
  const double f = (northing - extent.min_y) / (extent.max_y - extent.min_y);
  return std::clamp(static_cast<int>(std::floor(f * bands)), 0, bands - 1);
}

int chip_label(const GeoTransform& gt, Index size, const ScenarioConfig& scenario, int texture) {
  const double center_y = gt.origin_y + static_cast<double>(size) / 2.0 * gt.pixel_height;
  return latitude_band(center_y, scenario.extent, scenario.latitude_bands) * scenario.textures + texture;
}

MultimodalSample synth_chip(const ScenarioConfig& scenario, Rng& rng) {
  scenario.validate();
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  const Index n = scenario.size;
  const auto streams = profile_streams(scenario.profile);

  MultimodalSample s;
  s.height = n;
  s.width = n;
  const int texture = std::min(scenario.textures - 1, static_cast<int>(unit(rng) * scenario.textures));

  const double res = profile_resolution(scenario.profile);
  const double span = static_cast<double>(n) * res;
  const auto& ext = scenario.extent;
  GeoTransform gt;
  gt.origin_x = ext.min_x + unit(rng) * (ext.max_x - ext.min_x - span);
  gt.origin_y = ext.min_y + span + unit(rng) * (ext.max_y - ext.min_y - span);
  gt.pixel_width = res;
  gt.pixel_height = -res;
  s.label = chip_label(gt, n, scenario, texture);
  if (scenario.georeferenced) s.geotransform = gt;

  const double base = 50.0 + 2500.0 * unit(rng);
  const double relief = 50.0 + 450.0 * unit(rng);
  const Field terrain = smooth_field(n, n, 4, rng);
  const Field pattern = smooth_field(n, n, texture % 2 == 0 ? 3 : 1, rng);
  const double mix = scenario.textures > 1 ? static_cast<double>(texture) / (scenario.textures - 1) : 0.0;

  auto pixels = [&](Index channels) { return PixelArray(channels * n * n); };
  Index band = 0;  // running index into the signature table
  for (Stream st : kOpticalStreams) {
    const Index ch = StreamLayout{}[st];
    if (!streams[index_of(st)]) {
      band += ch;
      continue;
    }
    PixelArray px = pixels(ch);
    for (Index c = 0; c < ch; ++c, ++band) {
      const double sig = (1.0 - mix) * kVegetation[band] + mix * kBareSoil[band];
      for (Index y = 0; y < n; ++y)
        for (Index x = 0; x < n; ++x) {
          const double e = 0.5 * (terrain(y, x) + 1.0);
          const double v = sig * (0.85 + 0.3 * e) + 0.04 * pattern(y, x) + 0.01 * normal(rng);
          px[(c * n + y) * n + x] = static_cast<float>(v);
        }
    }
    s.set_stream(st, std::move(px));
  }

  if (streams[index_of(Stream::kElevation)]) {
    PixelArray px = pixels(1);
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) px[y * n + x] = static_cast<float>(base + relief * terrain(y, x));
    s.set_stream(Stream::kElevation, std::move(px));
  }

  if (streams[index_of(Stream::kSar)]) {
    PixelArray px = pixels(2);
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) {
        const double gy = terrain(std::min(y + 1, n - 1), x) - terrain(std::max<Index>(y - 1, 0), x);
        const double gx = terrain(y, std::min(x + 1, n - 1)) - terrain(y, std::max<Index>(x - 1, 0));
        const double rough = std::min(1.0, std::abs(pattern(y, x)) + 2.0 * std::hypot(gx, gy));
        const double vv = (0.02 + 0.15 * rough + 0.05 * mix) * std::exp(0.2 * normal(rng));
        const double vh = 0.25 * vv * std::exp(0.2 * normal(rng));
        px[y * n + x] = static_cast<float>(sar_to_db(vv));
        px[(n + y) * n + x] = static_cast<float>(sar_to_db(vh));
      }
    s.set_stream(Stream::kSar, std::move(px));
  }

  // Cloud-like nodata rectangle over the optical streams.
  if (unit(rng) < scenario.nodata_probability) {
    std::uniform_int_distribution<Index> extent_dist(std::max<Index>(1, n / 4), std::max<Index>(1, n / 2));
    const Index hh = extent_dist(rng), ww = extent_dist(rng);
    std::uniform_int_distribution<Index> y0_dist(0, n - hh), x0_dist(0, n - ww);
    const Index y0 = y0_dist(rng), x0 = x0_dist(rng);
    for (Stream st : kOpticalStreams) {
      auto& data = s.stream(st);
      if (!data.available) continue;
      const Index ch = StreamLayout{}[st];
      for (Index y = y0; y < y0 + hh; ++y)
        for (Index x = x0; x < x0 + ww; ++x) {
          data.validity[y * n + x] = 0;
          for (Index c = 0; c < ch; ++c) data.pixels[(c * n + y) * n + x] = 0.0f;
        }
    }
  }
  return clip_modalities(std::move(s));
}

MultimodalSample add_noise(MultimodalSample sample, double sigma, Rng& rng) {
  if (sigma < 0.0) throw ContractError("noise sigma must be non-negative");
  if (sigma == 0.0) return sample;
  std::normal_distribution<double> normal(0.0, sigma);
  const Index hw = sample.height * sample.width;
  for (Stream s : kOpticalStreams) {
    auto& st = sample.stream(s);
    if (!st.available) continue;
    for (Index i = 0; i < st.pixels.size(); ++i)
      if (st.validity[i % hw]) st.pixels[i] = static_cast<float>(st.pixels[i] + normal(rng));
  }
  return clip_modalities(std::move(sample));
}

MultimodalSample gaussian_blur(MultimodalSample sample, double sigma) {
  if (!(sigma > 0.0)) throw ContractError("blur sigma must be positive");
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  for (int d = -radius; d <= radius; ++d) kernel[d + radius] = std::exp(-0.5 * d * d / (sigma * sigma));
  const Index h = sample.height, w = sample.width;
  auto convolve = [&](const Field& a) {
    Field tmp(h, w), out(h, w);
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += kernel[d + radius] * a(y, std::clamp<Index>(x + d, 0, w - 1));
        tmp(y, x) = s;
      }
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) {
        double s = 0.0;
        for (int d = -radius; d <= radius; ++d) s += kernel[d + radius] * tmp(std::clamp<Index>(y + d, 0, h - 1), x);
        out(y, x) = s;
      }
    return out;
  };
  for (Stream s : kAllStreams) {
    auto& st = sample.stream(s);
    if (!st.available) continue;
    Field valid(h, w);
    for (Index y = 0; y < h; ++y)
      for (Index x = 0; x < w; ++x) valid(y, x) = st.validity[y * w + x] ? 1.0 : 0.0;
    const Field norm = convolve(valid);
    const Index ch = st.pixels.size() / (h * w);
    for (Index c = 0; c < ch; ++c) {
      Field v(h, w);
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x) v(y, x) = valid(y, x) * st.pixels[(c * h + y) * w + x];
      const Field blurred = convolve(v);
      for (Index y = 0; y < h; ++y)
        for (Index x = 0; x < w; ++x)
          if (valid(y, x) > 0.0) st.pixels[(c * h + y) * w + x] = static_cast<float>(blurred(y, x) / norm(y, x));
    }
  }
  return clip_modalities(std::move(sample));
}

MultimodalSample rotate90(MultimodalSample sample, int k) {
  k = ((k % 4) + 4) % 4;
  for (int turn = 0; turn < k; ++turn) {
    const Index h = sample.height, w = sample.width;
    // new(y', x') = old(x', w - 1 - y') with extents (w, h)
    for (Stream s : kAllStreams) {
      auto& st = sample.stream(s);
      if (!st.available) continue;
      const Index ch = st.pixels.size() / (h * w);
      PixelArray px(st.pixels.size());
      ValidityMask valid(st.validity.size());
      for (Index yp = 0; yp < w; ++yp)
        for (Index xp = 0; xp < h; ++xp) {
          const Index src = xp * w + (w - 1 - yp);
          valid[yp * h + xp] = st.validity[src];
          for (Index c = 0; c < ch; ++c) px[(c * w + yp) * h + xp] = st.pixels[c * h * w + src];
        }
      st.pixels = std::move(px);
      st.validity = std::move(valid);
    }
    std::swap(sample.height, sample.width);
  }
  return sample;
}

MultimodalSample augment(MultimodalSample sample, Rng& rng, const AugmentConfig& config) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sigma = config.max_noise * unit(rng);
  sample = add_noise(std::move(sample), sigma, rng);
  if (unit(rng) < config.blur_probability) sample = gaussian_blur(std::move(sample), config.blur_sigma);
  if (config.rotate) {
    const bool square = sample.height == sample.width;
    std::uniform_int_distribution<int> turns(0, 3);
    int k = turns(rng);
    if (!square) k = 2 * (k / 2);
    sample = rotate90(std::move(sample), k);
  }
  return sample;
}

MultimodalSample drop_bands(MultimodalSample sample, Rng& rng, double drop_probability) {
  if (!(drop_probability >= 0.0 && drop_probability < 1.0))
    throw ContractError("drop probability must lie in [0, 1)");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const MultimodalSample original = sample;
  for (Stream s : kAllStreams) {
    if (s == Stream::kBgr || !sample.available(s)) continue;
    if (unit(rng) < drop_probability) sample.drop_stream(s);
  }
  bool optical = false;
  for (Stream s : kOpticalStreams) optical = optical || sample.available(s);
  if (!optical)
    for (Stream s : kOpticalStreams)
      if (original.available(s)) {
        sample.stream(s) = original.stream(s);
        break;
      }
  return sample;
}

std::string_view split_name(Split s) { return kSplitNames[static_cast<std::size_t>(s)]; }

std::optional<Split> parse_split(std::string_view name) {
  for (std::size_t i = 0; i < kSplitNames.size(); ++i)
    if (kSplitNames[i] == name) return static_cast<Split>(i);
  return std::nullopt;
}

std::vector<const ManifestEntry*> CorpusManifest::in_split(Split s) const {
  std::vector<const ManifestEntry*> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(&e);
  return out;
}

std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto rng = keyed_rng({seed, tag(RngDomain::kSplit)});
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  const auto n_train = static_cast<std::size_t>(std::llround(0.90 * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(0.08 * static_cast<double>(n))));
  std::vector<Split> out(n, Split::kTest);
  for (std::size_t r = 0; r < n; ++r)
    out[order[r]] = r < n_train ? Split::kTrain : (r < n_train + n_val ? Split::kVal : Split::kTest);
  return out;
}

Corpus synth_corpus(const std::vector<ScenarioConfig>& scenarios, const std::vector<Index>& counts,
                    std::uint64_t seed) {
  if (scenarios.size() != counts.size() || scenarios.empty())
    throw ContractError("synth_corpus: one chip count per scenario is required");
  Corpus corpus;
  for (std::size_t si = 0; si < scenarios.size(); ++si) {
    if (counts[si] < 10) throw ContractError("synth_corpus: at least 10 chips per scenario");
    scenarios[si].validate();
    corpus.manifest.num_classes = std::max(corpus.manifest.num_classes, scenarios[si].num_classes());
  }
  for (std::size_t si = 0; si < scenarios.size(); ++si) {
    const auto& sc = scenarios[si];
    for (Index j = 0; j < counts[si]; ++j) {
      auto rng = keyed_rng({seed, tag(RngDomain::kSynth), sc.seed, si, static_cast<std::uint64_t>(j)});
      MultimodalSample chip = synth_chip(sc, rng);
      char id[64];
      std::snprintf(id, sizeof id, "%s-%02zu-%05lld", std::string(profile_name(sc.profile)).c_str(), si,
                    static_cast<long long>(j));
      chip.id = id;
      ManifestEntry e;
      e.id = chip.id;
      e.profile = sc.profile;
      e.label = chip.label;
      e.geotransform = chip.geotransform;
      corpus.manifest.entries.push_back(std::move(e));
      corpus.samples.push_back(std::move(chip));
    }
  }
  const auto splits = assign_splits(corpus.samples.size(), seed);
  for (std::size_t i = 0; i < splits.size(); ++i) corpus.manifest.entries[i].split = splits[i];
  return corpus;
}

CorpusManifest build_corpus(const std::vector<ScenarioConfig>& scenarios, const std::vector<Index>& counts,
                            std::uint64_t seed, const fs::path& out_dir) {
  Corpus corpus = synth_corpus(scenarios, counts, seed);
  std::error_code ec;
  fs::create_directories(out_dir / "chips", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "chips").string() + ": " + ec.message());
  for (const auto& chip : corpus.samples) write_chip(out_dir / "chips" / chip.id, chip);
  write_manifest(out_dir / "manifest.txt", corpus.manifest);
  return corpus.manifest;
}

void write_chip(const fs::path& dir, const MultimodalSample& sample) {
  if (sample.id.empty() || sample.id.find_first_of(" \t\n") != std::string::npos)
    throw ContractError("write_chip: chip id must be a non-empty token, got '" + sample.id + "'");
  sample.validate(StreamLayout{});
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream meta(dir / "meta.txt");
  if (!meta) throw IoError("cannot write " + (dir / "meta.txt").string());
  meta << "id " << sample.id << "\n";
  meta << "height " << sample.height << "\nwidth " << sample.width << "\n";
  meta << "geotransform";
  if (const auto& gt = sample.geotransform) {
    for (double v : {gt->origin_x, gt->pixel_width, gt->row_rotation, gt->origin_y, gt->col_rotation,
                     gt->pixel_height})
      meta << ' ' << format_double(v);
  } else {
    meta << " none";
  }
  meta << "\nlabel " << (sample.label ? std::to_string(*sample.label) : std::string("none")) << "\n";
  const Index hw = sample.height * sample.width;
  for (Stream s : kAllStreams) {
    const auto& st = sample.stream(s);
    const Index ch = st.available ? st.pixels.size() / hw : 0;
    meta << "stream " << stream_name(s) << ' ' << ch << ' ' << (st.available ? "available" : "absent") << "\n";
    if (!st.available) continue;
    const std::string name(stream_name(s));
    std::ofstream px(dir / (name + ".f32"), std::ios::binary);
    write_f32(px, st.pixels);
    std::ofstream mask(dir / (name + ".mask"), std::ios::binary);
    mask.write(reinterpret_cast<const char*>(st.validity.data()), st.validity.size());
    if (!px || !mask) throw IoError("failed writing stream " + name + " under " + dir.string());
  }
  if (!meta) throw IoError("failed writing " + (dir / "meta.txt").string());
}

MultimodalSample read_chip(const fs::path& dir) {
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw IoError("cannot open " + (dir / "meta.txt").string());
  MultimodalSample s;
  std::string line;
  auto bad = [&](const std::string& why) { return FormatError((dir / "meta.txt").string() + ": " + why); };
  while (std::getline(meta, line)) {
    if (line.empty()) continue;
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (key == "id") {
      is >> s.id;
    } else if (key == "height") {
      is >> s.height;
    } else if (key == "width") {
      is >> s.width;
    } else if (key == "geotransform") {
      std::string first;
      is >> first;
      if (first != "none") {
        GeoTransform gt;
        std::istringstream all(first + line.substr(line.find(first) + first.size()));
        if (!(all >> gt.origin_x >> gt.pixel_width >> gt.row_rotation >> gt.origin_y >> gt.col_rotation >>
              gt.pixel_height))
          throw bad("malformed geotransform");
        s.geotransform = gt;
      }
    } else if (key == "label") {
      std::string v;
      is >> v;
      if (v != "none") {
        try {
          s.label = std::stoi(v);
        } catch (const std::exception&) {
          throw bad("malformed label '" + v + "'");
        }
      }
    } else if (key == "stream") {
      std::string name, status;
      Index ch = 0;
      if (!(is >> name >> ch >> status)) throw bad("malformed stream line");
      const auto stream = parse_stream(name);
      if (!stream) throw bad("unknown stream " + name);
      if (status == "absent") continue;
      if (status != "available" || ch < 1) throw bad("bad stream status for " + name);
      if (s.height < 1 || s.width < 1) throw bad("stream listed before chip extent");
      const Index hw = s.height * s.width;
      auto& st = s.stream(*stream);
      st.available = true;
      const auto raw = read_bytes(dir / (name + ".f32"), static_cast<std::size_t>(ch * hw * 4));
      st.pixels.resize(ch * hw);
      for (Index i = 0; i < ch * hw; ++i) {
        const std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                                   (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                                   (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                                   (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
        st.pixels[i] = std::bit_cast<float>(bits);
      }
      const auto mask = read_bytes(dir / (name + ".mask"), static_cast<std::size_t>(hw));
      st.validity = Eigen::Map<const ValidityMask>(mask.data(), hw);
    } else {
      throw bad("unknown key '" + key + "'");
    }
  }
  if (s.id.empty() || s.height < 1 || s.width < 1) throw bad("missing id or extent");
  return s;
}

void write_manifest(const fs::path& path, const CorpusManifest& manifest) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << "# id profile split label origin_x pixel_width row_rotation origin_y col_rotation pixel_height\n";
  for (const auto& e : manifest.entries) {
    os << e.id << ' ' << profile_name(e.profile) << ' ' << split_name(e.split) << ' '
       << (e.label ? std::to_string(*e.label) : std::string("-"));
    if (const auto& gt = e.geotransform) {
      for (double v : {gt->origin_x, gt->pixel_width, gt->row_rotation, gt->origin_y, gt->col_rotation,
                       gt->pixel_height})
        os << ' ' << format_double(v);
    } else {
      os << " - - - - - -";
    }
    os << "\n";
  }
  if (!os) throw IoError("failed writing " + path.string());
}

CorpusManifest read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open manifest " + path.string());
  CorpusManifest m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, profile, split, label;
    std::array<std::string, 6> gt;
    if (!(ls >> id >> profile >> split >> label >> gt[0] >> gt[1] >> gt[2] >> gt[3] >> gt[4] >> gt[5]))
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected 10 fields");
    ManifestEntry e;
    e.id = id;
    const auto p = parse_profile(profile);
    const auto sp = parse_split(split);
    if (!p || !sp) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad profile or split");
    e.profile = *p;
    e.split = *sp;
    try {
      if (label != "-") e.label = std::stoi(label);
      if (gt[0] != "-") {
        GeoTransform g;
        g.origin_x = std::stod(gt[0]);
        g.pixel_width = std::stod(gt[1]);
        g.row_rotation = std::stod(gt[2]);
        g.origin_y = std::stod(gt[3]);
        g.col_rotation = std::stod(gt[4]);
        g.pixel_height = std::stod(gt[5]);
        e.geotransform = g;
      }
    } catch (const std::exception&) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": malformed number");
    }
    if (e.label) m.num_classes = std::max(m.num_classes, *e.label + 1);
    m.entries.push_back(std::move(e));
  }
  return m;
}

Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("corpus directory not found: " + dir.string());
  Corpus c;
  c.manifest = read_manifest(dir / "manifest.txt");
  for (const auto& e : c.manifest.entries) c.samples.push_back(read_chip(dir / "chips" / e.id));
  return c;
}

}  // namespace floro
