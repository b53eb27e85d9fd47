// floro: generate synthetic corpora, pretrain, probe frozen encoders, and
// inspect checkpoints or positional encodings.
//
// Exit codes: 0 success, 1 runtime / I/O / numeric failure, 2 usage error.

#include <floro/geoposition.hpp>
#include <floro/probe.hpp>
#include <floro/synthcorpus.hpp>
#include <floro/trainer.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace floro;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// key = value lines; '#' starts a comment.
std::map<std::string, std::string> read_config_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(path.string() + ":" + std::to_string(lineno) + ": expected 'key = value'");
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

class Settings {
 public:
  explicit Settings(std::map<std::string, std::string> values) : values_(std::move(values)) {}

  template <typename T>
  void take(const std::string& key, T& target) {
    const auto it = values_.find(key);
    if (it == values_.end()) return;
    std::istringstream is(it->second);
    if constexpr (std::is_same_v<T, bool>) {
      std::string v;
      is >> v;
      if (v == "true" || v == "1") target = true;
      else if (v == "false" || v == "0") target = false;
      else throw UsageError("config key " + key + " expects true or false, got '" + it->second + "'");
    } else if (!(is >> target) || !is.eof()) {
      throw UsageError("config key " + key + " has malformed value '" + it->second + "'");
    }
    used_.push_back(key);
  }

  void reject_unknown() const {
    for (const auto& [k, v] : values_)
      if (std::find(used_.begin(), used_.end(), k) == used_.end()) throw UsageError("unknown config key '" + k + "'");
  }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> used_;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(s);
  while (std::getline(is, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::string resolved_train_config(const TrainConfig& c, const fs::path& data) {
  std::ostringstream os;
  const auto& m = c.model;
  os << "command = pretrain\n"
     << "data = " << data.string() << "\n"
     << "patch_size = " << m.patch_size << "\nencoder_dim = " << m.encoder_dim << "\nencoder_depth = "
     << m.encoder_depth << "\nencoder_heads = " << m.encoder_heads << "\ndecoder_dim = " << m.decoder_dim
     << "\ndecoder_depth = " << m.decoder_depth << "\ndecoder_heads = " << m.decoder_heads
     << "\nmlp_ratio = " << m.mlp_ratio << "\n"
     << "epochs = " << c.epochs << "\nseed = " << c.seed << "\n"
     << "lr = " << c.optimizer.lr << "\nbeta1 = " << c.optimizer.beta1 << "\nbeta2 = " << c.optimizer.beta2
     << "\nweight_decay = " << c.optimizer.weight_decay << "\nepsilon = " << c.optimizer.epsilon << "\n"
     << "lambda_ms = " << c.loss_weights.optical << "\nlambda_mod = " << c.loss_weights.auxiliary << "\n"
     << "augment = " << (c.augment ? "true" : "false") << "\ndrop_probability = " << c.drop_probability
     << "\nuse_geo = " << (c.use_geo ? "true" : "false") << "\n";
  for (const auto& st : c.curriculum.scaled_to(c.epochs, c.reference_epochs).stages)
    os << "mask_stage = " << st.start_epoch << " " << st.ratio << "\n";
  for (const auto& st : c.batches.scaled_to(c.epochs, c.reference_epochs).stages)
    os << "batch_stage = " << st.start_epoch << " " << st.local_batch << "x" << st.accumulation << "\n";
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw IoError("cannot write " + path.string());
}

int cmd_gen_data(const fs::path& out, Index chips, Index size, const std::string& profiles, std::uint64_t seed) {
  std::vector<ScenarioConfig> scenarios;
  for (const auto& name : split_list(profiles)) {
    const auto p = parse_profile(name);
    if (!p) throw UsageError("unknown profile '" + name + "' (expected S1S2, HIGHRES_OPT_ELEV, UAV_MS_DSM, UAV_RGB_DSM)");
    ScenarioConfig sc;
    sc.profile = *p;
    sc.size = size;
    scenarios.push_back(sc);
  }
  if (scenarios.empty()) throw UsageError("--profiles must name at least one profile");
  if (chips < 10) throw UsageError("--chips must be at least 10");
  const auto n = static_cast<Index>(scenarios.size());
  if (chips < 10 * n) throw UsageError("--chips must give every profile at least 10 chips");
  if (size < 1) throw UsageError("--size must be positive");
  std::vector<Index> counts(scenarios.size(), chips / n);
  for (Index i = 0; i < chips % n; ++i) ++counts[static_cast<std::size_t>(i)];

  const auto manifest = build_corpus(scenarios, counts, seed, out);
  std::ostringstream cfg;
  cfg << "command = gen-data\nchips = " << chips << "\nsize = " << size << "\nprofiles = " << profiles
      << "\nseed = " << seed << "\n";
  write_text(out / "resolved_config.txt", cfg.str());
  std::size_t split_counts[3] = {0, 0, 0};
  for (const auto& e : manifest.entries) ++split_counts[static_cast<int>(e.split)];
  std::printf("wrote %zu chips to %s (train %zu, val %zu, test %zu)\n", manifest.entries.size(), out.string().c_str(),
              split_counts[0], split_counts[1], split_counts[2]);
  return 0;
}

int cmd_pretrain(const fs::path& data, const fs::path& out, TrainConfig config, const std::string& resume) {
  if (!fs::is_directory(data)) throw IoError("data directory not found: " + data.string());
  const Corpus corpus = load_corpus(data);
  std::optional<Checkpoint> ckpt;
  if (!resume.empty()) ckpt = load_checkpoint(resume);
  fs::create_directories(out);
  write_text(out / "resolved_config.txt", resolved_train_config(config, data));
  auto result = train<float>(corpus, config, out, ckpt ? &*ckpt : nullptr, [](const EpochSummary& e) {
    std::printf("epoch %3lld  ratio %.2f  batch %lldx%lld  steps %3lld  loss %.6f\n", static_cast<long long>(e.epoch),
                e.ratio, static_cast<long long>(e.stage.local_batch), static_cast<long long>(e.stage.accumulation),
                static_cast<long long>(e.optimizer_steps), e.mean_total);
    std::fflush(stdout);
  });
  save_checkpoint(out / "encoder.ckpt",
                  encoder_only(make_checkpoint(result.model, &result.optimizer, config.epochs, result.global_step,
                                               config.seed)));
  std::printf("encoder written to %s\n", (out / "encoder.ckpt").string().c_str());
  return 0;
}

int cmd_probe(const fs::path& data, const fs::path& ckpt_path, const std::string& pe, Index epochs,
              std::uint64_t seed, const fs::path& out) {
  if (pe != "abs" && pe != "geo" && pe != "both") throw UsageError("--pe must be abs, geo or both");
  if (epochs < 1) throw UsageError("--epochs must be >= 1");
  if (!fs::is_directory(data)) throw IoError("data directory not found: " + data.string());
  const auto encoder = restore_encoder<float>(load_checkpoint(ckpt_path));
  const Corpus corpus = load_corpus(data);
  fs::create_directories(out);
  std::ostringstream cfg;
  cfg << "command = probe\ndata = " << data.string() << "\nckpt = " << ckpt_path.string() << "\npe = " << pe
      << "\nepochs = " << epochs << "\nseed = " << seed << "\n";
  write_text(out / "resolved_config.txt", cfg.str());

  ProbeConfig pc;
  pc.epochs = epochs;
  const std::uint64_t seeds[] = {seed};
  const auto result = ablation_run(corpus, encoder, pc, seeds, &std::cerr);
  auto emit = [&](const ProbeReport& r, const std::string& prefix) {
    write_probe_report(out, prefix, r);
    std::cout << format_probe_report(r) << "\n";
  };
  if (pe == "abs" || pe == "both") emit(result.abs_only.front(), "abs_");
  if (pe == "geo" || pe == "both") emit(result.abs_geo.front(), "geo_");
  if (pe == "both") {
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch1_gap = %.6f\nfinal_gap = %.6f\n", result.epoch1_gap, result.final_gap);
    write_text(out / "gap.txt", buf);
    std::printf("accuracy gap (geo - abs): epoch 1 %+.4f, final %+.4f\n", result.epoch1_gap, result.final_gap);
  }
  return 0;
}

int cmd_inspect_ckpt(const fs::path& path) {
  const auto c = load_checkpoint(path);
  const auto& m = c.config;
  std::printf("checkpoint %s\n", path.string().c_str());
  std::printf("  kind        %s\n", c.encoder_only ? "encoder-only" : "full");
  std::printf("  encoder     dim %lld depth %lld heads %lld\n", static_cast<long long>(m.encoder_dim),
              static_cast<long long>(m.encoder_depth), static_cast<long long>(m.encoder_heads));
  std::printf("  decoder     dim %lld depth %lld heads %lld\n", static_cast<long long>(m.decoder_dim),
              static_cast<long long>(m.decoder_depth), static_cast<long long>(m.decoder_heads));
  std::printf("  patch size  %lld, mlp ratio %lld\n", static_cast<long long>(m.patch_size),
              static_cast<long long>(m.mlp_ratio));
  std::printf("  epoch %lld, step %lld, seed %llu, optimizer %s\n", static_cast<long long>(c.epoch),
              static_cast<long long>(c.global_step), static_cast<unsigned long long>(c.seed),
              c.has_optimizer ? "yes" : "no");
  Index total = 0;
  for (const auto& a : c.params) {
    std::printf("  %-48s %s\n", a.name.c_str(), to_string(a.shape).c_str());
    total += a.values.size();
  }
  std::printf("  %zu arrays, %lld values\n", c.params.size(), static_cast<long long>(total));
  return 0;
}

int cmd_inspect_geo(const std::string& geo, const std::vector<Index>& grid_rc, Index patch, Index dim) {
  std::istringstream is(geo);
  GeoTransform gt;
  if (!(is >> gt.origin_x >> gt.origin_y >> gt.pixel_width >> gt.pixel_height))
    throw UsageError("--geo expects four numbers: \"O_x O_y D_x D_y\"");
  if (grid_rc.size() != 2 || grid_rc[0] < 1 || grid_rc[1] < 1) throw UsageError("--grid expects two positive counts");
  if (patch < 1) throw UsageError("--patch must be >= 1");
  if (dim < 4 || dim % 4 != 0) throw UsageError("--dim must be a positive multiple of 4");
  if (gt.pixel_width == 0.0 || gt.pixel_height == 0.0) throw UsageError("pixel sizes must be nonzero");
  const PatchGrid grid{grid_rc[0], grid_rc[1], patch};
  const Coords centroids = patch_centroids(gt, grid);
  const Coords norm = normalize_mercator(centroids);
  const auto table = geo_sincos_embedding<double>(norm, dim);
  std::printf("%5s %4s %4s %22s %22s %20s %20s  embedding\n", "token", "row", "col", "C_x", "C_y", "N_x", "N_y");
  for (Index t = 0; t < grid.num_patches(); ++t) {
    std::printf("%5lld %4lld %4lld %22.10f %22.10f %20.17f %20.17f ", static_cast<long long>(t),
                static_cast<long long>(t / grid.cols), static_cast<long long>(t % grid.cols), centroids(t, 0),
                centroids(t, 1), norm(t, 0), norm(t, 1));
    for (Index k = 0; k < dim; ++k) std::printf(" %.17g", table(t, k));
    std::printf("\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"floro: multimodal masked-autoencoder pretraining on synthetic geospatial chips"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic multimodal corpus");
  std::string gen_out, profiles = "S1S2,HIGHRES_OPT_ELEV,UAV_MS_DSM,UAV_RGB_DSM";
  Index chips = 100, size = 32;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--chips", chips, "Number of chips (>= 10)")->capture_default_str();
  gen->add_option("--size", size, "Chip height and width in pixels")->capture_default_str();
  gen->add_option("--profiles", profiles, "Comma-separated sensor profiles")->capture_default_str();
  gen->add_option("--seed", seed, "Random seed")->envname("FLORO_SEED");

  auto* pre = app.add_subcommand("pretrain", "Pretrain the masked autoencoder");
  std::string pre_data, pre_out, pre_config, resume;
  Index pre_epochs = 30;
  double lr = 0.0;
  pre->add_option("--data", pre_data, "Corpus directory")->required();
  pre->add_option("--out", pre_out, "Output directory")->required();
  pre->add_option("--config", pre_config, "key = value config file");
  auto* epochs_opt = pre->add_option("--epochs", pre_epochs, "Training epochs");
  auto* seed_opt = pre->add_option("--seed", seed, "Random seed")->envname("FLORO_SEED");
  auto* lr_opt = pre->add_option("--lr", lr, "AdamW learning rate");
  pre->add_option("--resume", resume, "Continue from an epoch checkpoint");

  auto* probe = app.add_subcommand("probe", "Linear probe on a frozen encoder");
  std::string probe_data, probe_ckpt, pe = "both", probe_out = "probe";
  Index probe_epochs = 100;
  probe->add_option("--data", probe_data, "Corpus directory")->required();
  probe->add_option("--ckpt", probe_ckpt, "Encoder or full checkpoint")->required();
  probe->add_option("--pe", pe, "abs, geo or both")->capture_default_str();
  probe->add_option("--epochs", probe_epochs, "Probe epochs")->capture_default_str();
  probe->add_option("--seed", seed, "Random seed")->envname("FLORO_SEED");
  probe->add_option("--out", probe_out, "Output directory")->capture_default_str();

  auto* inspect = app.add_subcommand("inspect", "Print checkpoint contents or positional encodings");
  std::string inspect_ckpt, geo;
  std::vector<Index> grid_rc;
  Index patch = 16, dim = 8;
  auto* ckpt_opt = inspect->add_option("--ckpt", inspect_ckpt, "Checkpoint to summarize");
  auto* geo_opt = inspect->add_option("--geo", geo, "\"O_x O_y D_x D_y\"");
  inspect->add_option("--grid", grid_rc, "Patch grid rows and columns")->expected(2);
  inspect->add_option("--patch", patch, "Patch size in pixels")->capture_default_str();
  inspect->add_option("--dim", dim, "Embedding width")->capture_default_str();
  ckpt_opt->excludes(geo_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return cmd_gen_data(gen_out, chips, size, profiles, seed);
    if (*pre) {
      TrainConfig config;
      if (!pre_config.empty()) {
        Settings s(read_config_file(pre_config));
        std::string preset;
        s.take("preset", preset);
        if (preset == "paper") config.model = ModelConfig::paper();
        else if (!preset.empty() && preset != "toy") throw UsageError("preset must be toy or paper");
        auto& m = config.model;
        s.take("patch_size", m.patch_size);
        s.take("encoder_dim", m.encoder_dim);
        s.take("encoder_depth", m.encoder_depth);
        s.take("encoder_heads", m.encoder_heads);
        s.take("decoder_dim", m.decoder_dim);
        s.take("decoder_depth", m.decoder_depth);
        s.take("decoder_heads", m.decoder_heads);
        s.take("mlp_ratio", m.mlp_ratio);
        s.take("epochs", config.epochs);
        s.take("seed", config.seed);
        s.take("lr", config.optimizer.lr);
        s.take("beta1", config.optimizer.beta1);
        s.take("beta2", config.optimizer.beta2);
        s.take("weight_decay", config.optimizer.weight_decay);
        s.take("epsilon", config.optimizer.epsilon);
        s.take("lambda_ms", config.loss_weights.optical);
        s.take("lambda_mod", config.loss_weights.auxiliary);
        s.take("augment", config.augment);
        s.take("drop_probability", config.drop_probability);
        s.take("use_geo", config.use_geo);
        s.reject_unknown();
      }
      if (epochs_opt->count() > 0 || pre_config.empty()) config.epochs = pre_epochs;
      if (seed_opt->count() > 0) config.seed = seed;  // also set when FLORO_SEED is in the environment
      if (lr_opt->count() > 0) config.optimizer.lr = lr;
      if (config.epochs < 1) throw UsageError("--epochs must be >= 1");
      try {
        config.model.validate();
      } catch (const ContractError& e) {
        throw UsageError(std::string("invalid model config: ") + e.what());
      }
      return cmd_pretrain(pre_data, pre_out, config, resume);
    }
    if (*probe) return cmd_probe(probe_data, probe_ckpt, pe, probe_epochs, seed, probe_out);
    if (*inspect) {
      if (!inspect_ckpt.empty()) return cmd_inspect_ckpt(inspect_ckpt);
      if (geo.empty()) throw UsageError("inspect needs --ckpt or --geo");
      if (grid_rc.empty()) grid_rc = {1, 1};
      return cmd_inspect_geo(geo, grid_rc, patch, dim);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
