#include <floro/trainer.hpp>

#include <floro/ops.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

namespace floro {

namespace fs = std::filesystem;

template <typename S>
OptimizerState<S> OptimizerState<S>::init(const NamedTensors<S>& params, const AdamWConfig& config) {
  OptimizerState st;
  st.config = config;
  for (const auto& [name, p] : params) {
    st.m.push_back(Array::Zero(p.numel()));
    st.v.push_back(Array::Zero(p.numel()));
  }
  return st;
}

template <typename S>
void adamw_step(NamedTensors<S>& params, const std::vector<Eigen::Array<S, Eigen::Dynamic, 1>>& grads,
                OptimizerState<S>& state) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ContractError("adamw_step: parameter, gradient and moment counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].second.numel() || state.m[i].size() != grads[i].size())
      throw ShapeError("adamw_step: gradient shape mismatch for " + params[i].first);
    if (!grads[i].allFinite()) throw NumericError("adamw_step: non-finite gradient for " + params[i].first);
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const S b1 = static_cast<S>(c.beta1), b2 = static_cast<S>(c.beta2);
  const S bc1 = static_cast<S>(1.0 - std::pow(c.beta1, t));
  const S bc2 = static_cast<S>(1.0 - std::pow(c.beta2, t));
  const S lr = static_cast<S>(c.lr);
  const S decay = static_cast<S>(1.0 - c.lr * c.weight_decay);
  const S eps = static_cast<S>(c.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    m = b1 * m + (S(1) - b1) * g;
    v = b2 * v + (S(1) - b2) * g.square();
    auto& theta = params[i].second.mutable_value();
    theta = theta * decay - lr * (m / bc1) / ((v / bc2).sqrt() + eps);
  }
}

void BatchSchedule::validate() const {
  if (stages.empty()) throw ContractError("batch schedule is empty");
  if (stages.front().start_epoch != 0) throw ContractError("batch schedule must start at epoch 0");
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (stages[i].local_batch < 1 || stages[i].accumulation < 1)
      throw ContractError("batch sizes and accumulation steps must be >= 1");
    if (i > 0 && stages[i].start_epoch <= stages[i - 1].start_epoch)
      throw ContractError("batch schedule start epochs must increase strictly");
  }
}

const BatchStage& BatchSchedule::at(Index epoch) const {
  validate();
  const BatchStage* out = &stages.front();
  for (const auto& st : stages)
    if (st.start_epoch <= epoch) out = &st;
  return *out;
}

BatchSchedule BatchSchedule::scaled_to(Index total_epochs, Index reference_epochs) const {
  validate();
  if (total_epochs < 1 || reference_epochs < 1) throw ContractError("batch schedule scaling needs positive horizons");
  BatchSchedule out;
  out.stages.clear();
  for (auto st : stages) {
    st.start_epoch = static_cast<Index>(std::llround(static_cast<double>(st.start_epoch) *
                                                     static_cast<double>(total_epochs) /
                                                     static_cast<double>(reference_epochs)));
    if (!out.stages.empty() && st.start_epoch <= out.stages.back().start_epoch) {
      out.stages.back() = {out.stages.back().start_epoch, st.local_batch, st.accumulation};
      continue;
    }
    out.stages.push_back(st);
  }
  return out;
}

template <typename S>
StepLog accumulate_and_step(Model<S>& model, OptimizerState<S>& optimizer, std::span<const MultimodalSample> samples,
                            std::span<const std::uint64_t> keys, Index micro_batch, const StepContext& context) {
  if (samples.empty() || samples.size() != keys.size())
    throw ContractError("accumulate_and_step: need one mask key per sample");
  if (micro_batch < 1) throw ContractError("accumulate_and_step: micro-batch size must be >= 1");
  auto params = model.parameters();
  std::vector<Eigen::Array<S, Eigen::Dynamic, 1>> grads;
  for (const auto& [name, p] : params) grads.push_back(Eigen::Array<S, Eigen::Dynamic, 1>::Zero(p.numel()));

  const auto n = static_cast<Index>(samples.size());
  StepLog log;
  log.epoch = context.epoch;
  log.ratio = context.ratio;
  log.samples = n;
  log.loss.weights = context.loss_weights;
  std::array<double, kNumStreams> group_sum{}, present{};

  for (Index start = 0; start < n; start += micro_batch) {
    const Index count = std::min(micro_batch, n - start);
    const auto part = samples.subspan(static_cast<std::size_t>(start), static_cast<std::size_t>(count));
    const auto batch = prepare_batch<S>(part, model.config.layout, model.config.patch_size);
    ForwardOptions options;
    options.ratio = context.ratio;
    options.seed = context.seed;
    options.epoch = context.epoch;
    options.use_geo = context.use_geo;
    options.sample_keys.assign(keys.begin() + start, keys.begin() + start + count);
    const auto output = forward_pretrain(model, batch, options);
    const auto objective = pretrain_objective(output, batch, context.loss_weights);
    backward(objective.loss);

    const S share = static_cast<S>(count) / static_cast<S>(n);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i].second;
      if (p.has_grad()) grads[i] += share * p.grad();
      p.zero_grad();
    }
    log.loss.total += static_cast<double>(count) / static_cast<double>(n) * objective.breakdown.total;
    for (std::size_t g = 0; g < kNumStreams; ++g) {
      const double k = objective.breakdown.gate[g] * static_cast<double>(count);
      group_sum[g] += objective.breakdown.group[g] * k;
      present[g] += k;
    }
  }
  for (std::size_t g = 0; g < kNumStreams; ++g) {
    log.loss.group[g] = present[g] > 0.0 ? group_sum[g] / present[g] : 0.0;
    log.loss.gate[g] = present[g] / static_cast<double>(n);
  }
  adamw_step(params, grads, optimizer);
  log.step = optimizer.step;
  return log;
}

// ----------------------------------------------------------------- checkpoints

namespace {

constexpr char kMagic[8] = {'F', 'L', 'O', 'R', 'O', 'C', 'K', 'P'};
constexpr std::uint32_t kFlagEncoderOnly = 1u;
constexpr std::uint32_t kFlagOptimizer = 2u;

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    const U bits = std::bit_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(U); ++i) buf_.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xff));
  }
  void str(const std::string& s) {
    le(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  const std::vector<unsigned char>& bytes() const { return buf_; }

 private:
  std::vector<unsigned char> buf_;
};

class ByteReader {
 public:
  ByteReader(std::vector<unsigned char> buf, std::string where) : buf_(std::move(buf)), where_(std::move(where)) {}

  void raw(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  template <typename T>
  T le() {
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    need(sizeof(U));
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) bits |= static_cast<U>(buf_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return std::bit_cast<T>(bits);
  }
  std::string str() {
    const auto n = le<std::uint32_t>();
    if (n > 4096) throw FormatError(where_ + ": implausible name length");
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  bool at_end() const { return pos_ == buf_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > buf_.size()) throw IoError(where_ + ": file is truncated");
  }
  std::vector<unsigned char> buf_;
  std::size_t pos_ = 0;
  std::string where_;
};

template <typename S>
NamedArray to_named(const std::string& name, const Shape& shape, const Eigen::Array<S, Eigen::Dynamic, 1>& values) {
  return {name, shape, values.template cast<float>()};
}

template <typename S>
void load_into(const NamedTensors<S>& params, const Checkpoint& ckpt) {
  for (const auto& [name, tensor] : params) {
    const NamedArray* a = ckpt.find(name);
    if (!a) throw FormatError("checkpoint lacks parameter " + name);
    if (a->shape != tensor.shape())
      throw FormatError("checkpoint parameter " + name + " has shape " + to_string(a->shape) + ", model expects " +
                        to_string(tensor.shape()));
    auto t = tensor;
    t.mutable_value() = a->values.template cast<S>();
  }
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : params)
    if (a.name == name) return &a;
  return nullptr;
}

template <typename S>
Checkpoint make_checkpoint(const Model<S>& model, const OptimizerState<S>* optimizer, Index epoch, Index global_step,
                           std::uint64_t seed) {
  Checkpoint c;
  c.config = model.config;
  c.epoch = epoch;
  c.global_step = global_step;
  c.seed = seed;
  const auto params = model.parameters();
  for (const auto& [name, p] : params) c.params.push_back(to_named<S>(name, p.shape(), p.value()));
  if (optimizer) {
    if (optimizer->m.size() != params.size()) throw ContractError("optimizer state does not match the model");
    c.has_optimizer = true;
    c.adam = optimizer->config;
    c.optimizer_step = optimizer->step;
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.adam_m.push_back(to_named<S>(params[i].first, params[i].second.shape(), optimizer->m[i]));
      c.adam_v.push_back(to_named<S>(params[i].first, params[i].second.shape(), optimizer->v[i]));
    }
  }
  return c;
}

Checkpoint encoder_only(const Checkpoint& full) {
  Checkpoint c;
  c.config = full.config;
  c.encoder_only = true;
  c.epoch = full.epoch;
  c.global_step = full.global_step;
  c.seed = full.seed;
  for (const auto& a : full.params)
    if (a.name.rfind("encoder.", 0) == 0) c.params.push_back(a);
  return c;
}

void save_checkpoint(const fs::path& path, const Checkpoint& ckpt) {
  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.le(kCheckpointVersion);
  w.le(static_cast<std::uint32_t>((ckpt.encoder_only ? kFlagEncoderOnly : 0u) |
                                  (ckpt.has_optimizer ? kFlagOptimizer : 0u)));
  const auto& m = ckpt.config;
  for (Index v : {m.patch_size, m.encoder_dim, m.encoder_depth, m.encoder_heads, m.decoder_dim, m.decoder_depth,
                  m.decoder_heads, m.mlp_ratio})
    w.le(static_cast<std::int64_t>(v));
  for (Index c : m.layout.channels) w.le(static_cast<std::int64_t>(c));
  w.le(ckpt.seed);
  w.le(static_cast<std::int64_t>(ckpt.epoch));
  w.le(static_cast<std::int64_t>(ckpt.global_step));
  for (double h : {ckpt.adam.lr, ckpt.adam.beta1, ckpt.adam.beta2, ckpt.adam.weight_decay, ckpt.adam.epsilon}) w.le(h);
  w.le(static_cast<std::int64_t>(ckpt.optimizer_step));

  std::vector<const NamedArray*> arrays;
  std::vector<std::string> names;
  for (const auto& a : ckpt.params) {
    arrays.push_back(&a);
    names.push_back(a.name);
  }
  if (ckpt.has_optimizer) {
    for (const auto& a : ckpt.adam_m) {
      arrays.push_back(&a);
      names.push_back("adam.m/" + a.name);
    }
    for (const auto& a : ckpt.adam_v) {
      arrays.push_back(&a);
      names.push_back("adam.v/" + a.name);
    }
  }
  w.le(static_cast<std::uint32_t>(arrays.size()));
  for (std::size_t i = 0; i < arrays.size(); ++i) {
    w.str(names[i]);
    w.le(static_cast<std::uint32_t>(arrays[i]->shape.size()));
    for (Index d : arrays[i]->shape) w.le(static_cast<std::int64_t>(d));
  }
  for (const auto* a : arrays) {
    if (a->values.size() != numel(a->shape)) throw ContractError("checkpoint array " + a->name + " has wrong size");
    for (Index i = 0; i < a->values.size(); ++i) w.le(a->values[i]);
  }

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
    if (!os) throw IoError("failed writing checkpoint " + path.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint " + path.string());
  ByteReader r(std::vector<unsigned char>((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>()),
               path.string());
  char magic[8];
  r.raw(magic, sizeof magic);
  if (std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  const auto flags = r.le<std::uint32_t>();
  Checkpoint c;
  c.encoder_only = (flags & kFlagEncoderOnly) != 0;
  c.has_optimizer = (flags & kFlagOptimizer) != 0;
  auto& m = c.config;
  for (Index* v : {&m.patch_size, &m.encoder_dim, &m.encoder_depth, &m.encoder_heads, &m.decoder_dim,
                   &m.decoder_depth, &m.decoder_heads, &m.mlp_ratio})
    *v = r.le<std::int64_t>();
  for (Index& ch : m.layout.channels) ch = r.le<std::int64_t>();
  try {
    m.validate();
  } catch (const ContractError& e) {
    throw FormatError(path.string() + ": invalid model config: " + e.what());
  }
  c.seed = r.le<std::uint64_t>();
  c.epoch = r.le<std::int64_t>();
  c.global_step = r.le<std::int64_t>();
  for (double* h : {&c.adam.lr, &c.adam.beta1, &c.adam.beta2, &c.adam.weight_decay, &c.adam.epsilon})
    *h = r.le<double>();
  c.optimizer_step = r.le<std::int64_t>();

  const auto count = r.le<std::uint32_t>();
  std::vector<std::pair<std::string, Shape>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto name = r.str();
    const auto rank = r.le<std::uint32_t>();
    if (rank == 0 || rank > 8) throw FormatError(path.string() + ": bad rank for " + name);
    Shape shape;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto extent = r.le<std::int64_t>();
      if (extent <= 0 || extent > (1LL << 32)) throw FormatError(path.string() + ": bad extent for " + name);
      shape.push_back(extent);
    }
    table.emplace_back(std::move(name), std::move(shape));
  }
  for (auto& [name, shape] : table) {
    NamedArray a;
    a.shape = shape;
    a.values.resize(numel(shape));
    for (Index i = 0; i < a.values.size(); ++i) a.values[i] = r.le<float>();
    if (name.rfind("adam.m/", 0) == 0) {
      a.name = name.substr(7);
      c.adam_m.push_back(std::move(a));
    } else if (name.rfind("adam.v/", 0) == 0) {
      a.name = name.substr(7);
      c.adam_v.push_back(std::move(a));
    } else {
      a.name = name;
      c.params.push_back(std::move(a));
    }
  }
  if (!r.at_end()) throw FormatError(path.string() + ": trailing bytes after the last array");
  if (c.has_optimizer && (c.adam_m.size() != c.params.size() || c.adam_v.size() != c.params.size()))
    throw FormatError(path.string() + ": optimizer moments do not match the parameter table");
  return c;
}

template <typename S>
Model<S> restore_model(const Checkpoint& ckpt) {
  if (ckpt.encoder_only) throw FormatError("checkpoint holds only the encoder");
  auto model = Model<S>::init(ckpt.config, ckpt.seed);
  load_into(model.parameters(), ckpt);
  return model;
}

template <typename S>
Encoder<S> restore_encoder(const Checkpoint& ckpt) {
  auto enc = Encoder<S>::init(ckpt.config, ckpt.seed);
  load_into(enc.parameters(), ckpt);
  return enc;
}

template <typename S>
OptimizerState<S> restore_optimizer(const Checkpoint& ckpt, const NamedTensors<S>& params) {
  if (!ckpt.has_optimizer) throw FormatError("checkpoint carries no optimizer state");
  auto st = OptimizerState<S>::init(params, ckpt.adam);
  st.step = ckpt.optimizer_step;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i >= ckpt.adam_m.size() || ckpt.adam_m[i].name != params[i].first || ckpt.adam_v[i].name != params[i].first ||
        ckpt.adam_m[i].values.size() != params[i].second.numel())
      throw FormatError("optimizer moments do not line up with parameter " + params[i].first);
    st.m[i] = ckpt.adam_m[i].values.template cast<S>();
    st.v[i] = ckpt.adam_v[i].values.template cast<S>();
  }
  return st;
}

// ----------------------------------------------------------------- training

std::string loss_csv_header() {
  std::string h = "epoch,step,ratio";
  for (Stream s : kAllStreams) h += "," + std::string(stream_name(s));
  return h + ",total";
}

std::string loss_csv_line(const StepLog& log) {
  char buf[64];
  std::string line = std::to_string(log.epoch) + "," + std::to_string(log.step);
  std::snprintf(buf, sizeof buf, ",%.2f", log.ratio);
  line += buf;
  for (double g : log.loss.group) {
    std::snprintf(buf, sizeof buf, ",%.9g", g);
    line += buf;
  }
  std::snprintf(buf, sizeof buf, ",%.9g", log.loss.total);
  return line + buf;
}

template <typename S>
TrainResult<S> train(const Corpus& corpus, const TrainConfig& config, const fs::path& out_dir,
                     const Checkpoint* resume, const EpochCallback& on_epoch) {
  if (config.epochs < 1) throw ContractError("train: epochs must be >= 1");
  config.model.validate();
  const auto curriculum = config.curriculum.scaled_to(config.epochs, config.reference_epochs);
  const auto batches = config.batches.scaled_to(config.epochs, config.reference_epochs);

  std::vector<std::size_t> train_idx;
  for (std::size_t i = 0; i < corpus.manifest.entries.size(); ++i)
    if (corpus.manifest.entries[i].split == Split::kTrain) train_idx.push_back(i);
  if (train_idx.empty()) throw ContractError("train: corpus has no training chips");
  if (corpus.samples.size() != corpus.manifest.entries.size())
    throw ContractError("train: corpus samples and manifest disagree");

  TrainResult<S> result{Model<S>::init(config.model, config.seed), {}, {}, {}, 0};
  Index start_epoch = 0;
  if (resume) {
    if (!(resume->config == config.model) || resume->seed != config.seed)
      throw ContractError("train: resume checkpoint was produced with a different model config or seed");
    result.model = restore_model<S>(*resume);
    result.optimizer = restore_optimizer<S>(*resume, result.model.parameters());
    start_epoch = resume->epoch;
    result.global_step = resume->global_step;
  } else {
    result.optimizer = OptimizerState<S>::init(result.model.parameters(), config.optimizer);
  }

  std::ofstream csv;
  if (!out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create output directory " + out_dir.string() + ": " + ec.message());
    const fs::path csv_path = out_dir / "loss.csv";
    const bool fresh = !resume || !fs::exists(csv_path);
    csv.open(csv_path, fresh ? std::ios::trunc : std::ios::app);
    if (!csv) throw IoError("cannot write " + csv_path.string());
    if (fresh) csv << loss_csv_header() << "\n";
  }

  for (Index epoch = start_epoch; epoch < config.epochs; ++epoch) {
    EpochSummary summary;
    summary.epoch = epoch;
    summary.ratio = curriculum_ratio(epoch, curriculum);
    summary.stage = batches.at(epoch);

    std::vector<std::size_t> order = train_idx;
    auto shuffle_rng = keyed_rng({config.seed, tag(RngDomain::kShuffle), static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(shuffle_rng)]);
    }

    const auto group = static_cast<std::size_t>(summary.stage.effective());
    double weighted_total = 0.0;
    Index seen = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += group) {
      const std::size_t end = std::min(order.size(), begin + group);
      std::vector<MultimodalSample> samples;
      std::vector<std::uint64_t> keys;
      for (std::size_t j = begin; j < end; ++j) {
        const std::size_t idx = order[j];
        MultimodalSample s = corpus.samples[idx];
        const std::uint64_t e = static_cast<std::uint64_t>(epoch);
        if (config.augment) {
          auto rng = keyed_rng({config.seed, tag(RngDomain::kAugment), e, idx});
          s = augment(std::move(s), rng, config.augmentation);
        }
        if (config.drop_probability > 0.0) {
          auto rng = keyed_rng({config.seed, tag(RngDomain::kDrop), e, idx});
          s = drop_bands(std::move(s), rng, config.drop_probability);
        }
        samples.push_back(std::move(s));
        keys.push_back(idx);
      }
      StepContext ctx{summary.ratio, epoch, config.seed, config.use_geo, config.loss_weights};
      StepLog log;
      try {
        log = accumulate_and_step(result.model, result.optimizer, std::span<const MultimodalSample>(samples),
                                  std::span<const std::uint64_t>(keys), summary.stage.local_batch, ctx);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", step " + std::to_string(result.global_step + 1) +
                           ": " + e.what());
      }
      result.global_step = log.step;
      weighted_total += log.loss.total * static_cast<double>(log.samples);
      seen += log.samples;
      ++summary.optimizer_steps;
      if (csv.is_open()) csv << loss_csv_line(log) << "\n";
      result.steps.push_back(std::move(log));
    }
    summary.mean_total = weighted_total / static_cast<double>(seen);
    if (csv.is_open()) csv.flush();
    if (!out_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%03lld.ckpt", static_cast<long long>(epoch + 1));
      save_checkpoint(out_dir / name,
                      make_checkpoint(result.model, &result.optimizer, epoch + 1, result.global_step, config.seed));
    }
    if (on_epoch) on_epoch(summary);
    result.epochs.push_back(summary);
  }
  return result;
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;

#define FLORO_TRAINER_INSTANTIATE(S)                                                                              \
  template void adamw_step<S>(NamedTensors<S>&, const std::vector<Eigen::Array<S, Eigen::Dynamic, 1>>&,           \
                              OptimizerState<S>&);                                                                \
  template StepLog accumulate_and_step<S>(Model<S>&, OptimizerState<S>&, std::span<const MultimodalSample>,       \
                                          std::span<const std::uint64_t>, Index, const StepContext&);             \
  template Checkpoint make_checkpoint<S>(const Model<S>&, const OptimizerState<S>*, Index, Index, std::uint64_t); \
  template Model<S> restore_model<S>(const Checkpoint&);                                                          \
  template Encoder<S> restore_encoder<S>(const Checkpoint&);                                                      \
  template OptimizerState<S> restore_optimizer<S>(const Checkpoint&, const NamedTensors<S>&);                     \
  template TrainResult<S> train<S>(const Corpus&, const TrainConfig&, const fs::path&, const Checkpoint*,         \
                                   const EpochCallback&);

FLORO_TRAINER_INSTANTIATE(float)
FLORO_TRAINER_INSTANTIATE(double)

}  // namespace floro
