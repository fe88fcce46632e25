#ifndef DECUR_TRAINER_HPP
#define DECUR_TRAINER_HPP

#include "decur/config.hpp"
#include "decur/io.hpp"
#include "decur/nn.hpp"
#include "decur/objective.hpp"
#include "decur/optim.hpp"
#include "decur/synthdata.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace decur {

/// Both modality networks of one pretraining run.
struct DecurModel {
  ModalityNet m1;
  ModalityNet m2;

  static DecurModel create(const TrainConfig &cfg, std::size_t d_x1, std::size_t d_x2) {
    DecurModel m;
    m.m1 = ModalityNet("m1", d_x1, cfg.embed_dim, cfg.model);
    m.m2 = ModalityNet("m2", d_x2, cfg.embed_dim, cfg.model);
    Rng r1 = make_rng(cfg.seed, {0x1417, 1});
    Rng r2 = make_rng(cfg.seed, {0x1417, 2});
    m.m1.init(r1);
    m.m2.init(r2);
    return m;
  }

  ModalityNet &modality(int m) { return m == 1 ? m1 : m2; }
  const ModalityNet &modality(int m) const { return m == 1 ? m1 : m2; }

  std::vector<Parameter *> parameters() {
    auto out = m1.parameters();
    for (auto *p : m2.parameters())
      out.push_back(p);
    return out;
  }
  std::vector<const Parameter *> parameters() const {
    auto out = m1.parameters();
    for (auto *p : m2.parameters())
      out.push_back(p);
    return out;
  }
};

struct EpochMetrics {
  std::size_t epoch = 0; // 1-based
  double lr = 0.0;
  double l_common = 0.0;
  double l_unique = 0.0;
  double l_m1 = 0.0;
  double l_m2 = 0.0;
  double total = 0.0;
  double wall_time = 0.0; // seconds spent in this epoch

  bool same_values(const EpochMetrics &o) const {
    return epoch == o.epoch && lr == o.lr && l_common == o.l_common && l_unique == o.l_unique && l_m1 == o.l_m1 &&
           l_m2 == o.l_m2 && total == o.total;
  }
};

/// Per-epoch loss log. The CSV carries only deterministic columns so two
/// runs with the same seed produce identical files; wall time goes to a
/// separate timing CSV.
struct MetricsLog {
  std::vector<EpochMetrics> rows;

  static constexpr const char *kHeader = "epoch,lr,l_common,l_unique,l_m1,l_m2,total";

  std::string to_csv() const {
    std::ostringstream os;
    os << kHeader << '\n' << std::setprecision(17);
    for (const auto &r : rows)
      os << r.epoch << ',' << r.lr << ',' << r.l_common << ',' << r.l_unique << ',' << r.l_m1 << ',' << r.l_m2 << ','
         << r.total << '\n';
    return os.str();
  }

  std::string timing_csv() const {
    std::ostringstream os;
    os << "epoch,wall_time\n" << std::setprecision(6);
    for (const auto &r : rows)
      os << r.epoch << ',' << r.wall_time << '\n';
    return os.str();
  }

  static MetricsLog from_csv(const std::string &text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kHeader)
      throw FormatError(FormatErrc::bad_magic, "metrics CSV header mismatch");
    MetricsLog log;
    while (std::getline(is, line)) {
      if (line.empty())
        continue;
      EpochMetrics m;
      char c;
      std::istringstream ls(line);
      ls >> m.epoch >> c >> m.lr >> c >> m.l_common >> c >> m.l_unique >> c >> m.l_m1 >> c >> m.l_m2 >> c >> m.total;
      if (!ls)
        throw FormatError(FormatErrc::truncated, "bad metrics row: " + line);
      log.rows.push_back(m);
    }
    return log;
  }

  bool same_values(const MetricsLog &o) const {
    if (rows.size() != o.rows.size())
      return false;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (!rows[i].same_values(o.rows[i]))
        return false;
    return true;
  }
};

// ---------------------------------------------------------------------------
// Checkpoint (DCKP)
//
//   "DCKP", u32 version, string config JSON, u64 epoch, u64 global step,
//   u64 seed, u64 optimizer step, u32 d_x1, u32 d_x2, u32 record count, then
//   records: string name, u32 rank, u32 extents[rank], f64 payload.
//   Records are "param/<name>", "optim/<name>" and "metrics" (epochs x 7).
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config_json;
  std::uint64_t epoch = 0;
  std::uint64_t global_step = 0;
  std::uint64_t seed = 0;
  std::uint32_t d_x1 = 0;
  std::uint32_t d_x2 = 0;
  std::vector<std::pair<std::string, Tensor>> params;
  OptimState optim;
  MetricsLog log;

  TrainConfig config() const { return config_from_json(nlohmann::json::parse(config_json)); }

  bool operator==(const Checkpoint &o) const {
    return version == o.version && config_json == o.config_json && epoch == o.epoch && global_step == o.global_step &&
           seed == o.seed && d_x1 == o.d_x1 && d_x2 == o.d_x2 && params == o.params && optim == o.optim &&
           log.same_values(o.log);
  }
};

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint &ck) {
  ByteWriter w;
  w.raw("DCKP", 4);
  w.u32(ck.version);
  w.str(ck.config_json);
  w.u64(ck.epoch);
  w.u64(ck.global_step);
  w.u64(ck.seed);
  w.u64(ck.optim.step);
  w.u32(ck.d_x1);
  w.u32(ck.d_x2);
  w.u32(static_cast<std::uint32_t>(ck.params.size() + ck.optim.momentum.size() + 1));
  auto record = [&](const std::string &name, const Tensor &t) {
    w.str(name);
    w.u32(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape)
      w.u32(static_cast<std::uint32_t>(e));
    for (double v : t.data)
      w.f64(v);
  };
  for (const auto &[name, t] : ck.params)
    record("param/" + name, t);
  for (const auto &[name, t] : ck.optim.momentum)
    record("optim/" + name, t);
  Tensor m({std::max<std::size_t>(ck.log.rows.size(), 1), 7});
  if (ck.log.rows.empty())
    m = Tensor({1, 7}, -1.0); // sentinel row: no epochs logged yet
  for (std::size_t i = 0; i < ck.log.rows.size(); ++i) {
    const auto &r = ck.log.rows[i];
    const double row[7] = {static_cast<double>(r.epoch), r.lr, r.l_common, r.l_unique, r.l_m1, r.l_m2, r.total};
    std::copy(row, row + 7, m.data.begin() + static_cast<std::ptrdiff_t>(7 * i));
  }
  record("metrics", m);
  return w.bytes();
}

inline Checkpoint decode_checkpoint(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes));
  if (r.remaining() < 4 || r.bytes(4, "magic") != "DCKP")
    throw FormatError(FormatErrc::bad_magic, "not a DCKP checkpoint");
  Checkpoint ck;
  ck.version = r.u32("header");
  if (ck.version != kCheckpointVersion)
    throw FormatError(FormatErrc::bad_version, "unsupported DCKP version " + std::to_string(ck.version));
  ck.config_json = r.str("config");
  ck.epoch = r.u64("header");
  ck.global_step = r.u64("header");
  ck.seed = r.u64("header");
  ck.optim.step = r.u64("header");
  ck.d_x1 = r.u32("header");
  ck.d_x2 = r.u32("header");
  const auto count = r.u32("header");
  bool have_metrics = false;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str("record name");
    const auto rank = r.u32("record shape");
    if (rank == 0 || rank > 4)
      throw FormatError(FormatErrc::dim_overflow, "record " + name + " has rank " + std::to_string(rank));
    Shape shape(rank);
    std::uint64_t numel = 1;
    for (auto &e : shape) {
      e = r.u32("record shape");
      numel *= e;
      if (e == 0 || numel > (std::uint64_t{1} << 31))
        throw FormatError(FormatErrc::dim_overflow, "record " + name + " extents overflow");
    }
    r.need(static_cast<std::size_t>(numel * 8), "record payload");
    Tensor t(shape);
    for (auto &v : t.data)
      v = r.f64();
    if (name.rfind("param/", 0) == 0) {
      ck.params.emplace_back(name.substr(6), std::move(t));
    } else if (name.rfind("optim/", 0) == 0) {
      ck.optim.momentum.emplace(name.substr(6), std::move(t));
    } else if (name == "metrics") {
      have_metrics = true;
      if (t.cols() != 7)
        throw FormatError(FormatErrc::dim_mismatch, "metrics record must have 7 columns");
      for (std::size_t i = 0; i < t.rows(); ++i) {
        if (t(i, 0) < 0.0)
          continue;
        EpochMetrics m;
        m.epoch = static_cast<std::size_t>(t(i, 0));
        m.lr = t(i, 1);
        m.l_common = t(i, 2);
        m.l_unique = t(i, 3);
        m.l_m1 = t(i, 4);
        m.l_m2 = t(i, 5);
        m.total = t(i, 6);
        ck.log.rows.push_back(m);
      }
    } else {
      throw FormatError(FormatErrc::bad_section, "unknown checkpoint record " + name);
    }
  }
  if (!have_metrics)
    throw FormatError(FormatErrc::bad_section, "checkpoint lacks a metrics record");
  if (r.remaining() != 0)
    throw FormatError(FormatErrc::trailing, "unexpected bytes after the last record");
  return ck;
}

inline void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path) {
  write_file_bytes(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path &path) { return decode_checkpoint(read_file_bytes(path)); }

/// Copies checkpointed values into a model, checking names and shapes.
inline void load_parameters(DecurModel &model, const Checkpoint &ck) {
  std::map<std::string, const Tensor *> by_name;
  for (const auto &[n, t] : ck.params)
    by_name[n] = &t;
  for (auto *p : model.parameters()) {
    auto it = by_name.find(p->name);
    if (it == by_name.end())
      throw FormatError(FormatErrc::dim_mismatch, "checkpoint has no parameter " + p->name);
    if (it->second->shape != p->value.shape)
      throw FormatError(FormatErrc::dim_mismatch, "parameter " + p->name + " has shape " +
                                                      shape_str(it->second->shape) + ", config expects " +
                                                      shape_str(p->value.shape));
    p->value = *it->second;
  }
  if (by_name.size() != model.parameters().size())
    throw FormatError(FormatErrc::dim_mismatch, "checkpoint carries parameters the config does not define");
}

/// Rebuilds the trained networks from a checkpoint alone.
inline DecurModel model_from_checkpoint(const Checkpoint &ck) {
  auto model = DecurModel::create(ck.config(), ck.d_x1, ck.d_x2);
  load_parameters(model, ck);
  return model;
}

/// Checks a checkpoint against a caller-supplied configuration.
inline void validate_checkpoint(const Checkpoint &ck, const TrainConfig &cfg) {
  auto model = DecurModel::create(cfg, ck.d_x1, ck.d_x2);
  load_parameters(model, ck);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

inline LossTerms loss_terms_for(Method m) {
  switch (m) {
  case Method::decur: return {true, true, true};
  case Method::decur_no_intra: return {false, true, true};
  case Method::decur_no_decoupling: return {true, true, false};
  default: return {false, false, false};
  }
}

/// One pretraining run. Per-step randomness is derived from
/// (seed, epoch, step), so stopping after any epoch and resuming from the
/// checkpoint reproduces the uninterrupted run exactly.
class Trainer {
public:
  Trainer(TrainConfig cfg, const ObservedPair &data) : cfg_(std::move(cfg)), data_(&data) {
    cfg_.validate();
    check_data();
    model_ = DecurModel::create(cfg_, data.x1.cols(), data.x2.cols());
    optim_cfg_ = cfg_.effective_optim(total_steps());
  }

  /// Resumes from a checkpoint; the configuration comes from the checkpoint.
  Trainer(const Checkpoint &ck, const ObservedPair &data) : Trainer(ck.config(), data) {
    if (ck.d_x1 != data.x1.cols() || ck.d_x2 != data.x2.cols())
      throw ConfigError("checkpoint was trained on inputs of width " + std::to_string(ck.d_x1) + "/" +
                        std::to_string(ck.d_x2) + ", dataset has " + std::to_string(data.x1.cols()) + "/" +
                        std::to_string(data.x2.cols()));
    load_parameters(model_, ck);
    optim_ = ck.optim;
    epoch_ = ck.epoch;
    global_step_ = ck.global_step;
    log_ = ck.log;
  }

  std::size_t steps_per_epoch() const { return data_->size() / cfg_.batch_size; }
  std::size_t total_steps() const { return steps_per_epoch() * cfg_.epochs; }
  std::size_t epoch() const { return epoch_; }
  bool done() const { return epoch_ >= cfg_.epochs; }

  const TrainConfig &config() const { return cfg_; }
  const DecurModel &model() const { return model_; }
  DecurModel &model() { return model_; }
  const MetricsLog &log() const { return log_; }
  const OptimState &optim_state() const { return optim_; }

  /// Runs a single step on the given rows and returns its loss breakdown.
  LossBreakdown step(std::span<const std::size_t> rows, Rng &rng) {
    const auto &X1 = data_->x1;
    const auto &X2 = data_->x2;
    // Always draw all four views so every method consumes the same stream.
    Tensor x1a = augment_rows(X1, rows, cfg_.aug1, rng);
    Tensor x1b = augment_rows(X1, rows, cfg_.aug1, rng);
    Tensor x2a = augment_rows(X2, rows, cfg_.aug2, rng);
    Tensor x2b = augment_rows(X2, rows, cfg_.aug2, rng);

    Graph g;
    Binding bind(g, true);
    const auto split = cfg_.split();
    LossBreakdown lb;
    Var loss;
    switch (cfg_.method) {
    case Method::bt_cross: {
      Var z1 = model_.m1.embed(bind, g.constant(std::move(x1a)), Mode::train);
      Var z2 = model_.m2.embed(bind, g.constant(std::move(x2a)), Mode::train);
      auto t = invariance_term(cross_correlation(standardize(z1), standardize(z2)), cfg_.weights.lambda_c);
      loss = t.total;
      lb.l_common = lb.total = t.total.value().item();
      lb.common = {t.on.value().item(), t.off.value().item()};
      break;
    }
    case Method::bt_single_m1:
    case Method::bt_single_m2: {
      const bool first = cfg_.method == Method::bt_single_m1;
      auto &net = first ? model_.m1 : model_.m2;
      Var za = net.embed(bind, g.constant(first ? std::move(x1a) : std::move(x2a)), Mode::train);
      Var zb = net.embed(bind, g.constant(first ? std::move(x1b) : std::move(x2b)), Mode::train);
      auto t = invariance_term(cross_correlation(standardize(za), standardize(zb)),
                               first ? cfg_.weights.lambda_m1 : cfg_.weights.lambda_m2);
      loss = t.total;
      (first ? lb.l_m1 : lb.l_m2) = lb.total = t.total.value().item();
      (first ? lb.m1 : lb.m2) = {t.on.value().item(), t.off.value().item()};
      break;
    }
    default: {
      const auto terms = loss_terms_for(cfg_.method);
      Var z1a = model_.m1.embed(bind, g.constant(std::move(x1a)), Mode::train);
      Var z2a = model_.m2.embed(bind, g.constant(std::move(x2a)), Mode::train);
      Var z1b = terms.intra ? model_.m1.embed(bind, g.constant(std::move(x1b)), Mode::train) : z1a;
      Var z2b = terms.intra ? model_.m2.embed(bind, g.constant(std::move(x2b)), Mode::train) : z2a;
      auto out = decur_loss(z1a, z1b, z2a, z2b, split, cfg_.weights, terms);
      loss = out.total;
      lb = out.values;
      break;
    }
    }
    if (!std::isfinite(lb.total))
      throw NumericFailure("non-finite loss at step " + std::to_string(global_step_) + " (l_common=" +
                           std::to_string(lb.l_common) + " l_unique=" + std::to_string(lb.l_unique) +
                           " l_m1=" + std::to_string(lb.l_m1) + " l_m2=" + std::to_string(lb.l_m2) + ")");
    g.backward(loss);
    const auto grads = bind.gradients();
    const auto params = model_.parameters();
    optimizer_step(params, grads, optim_, optim_cfg_, scheduled_lr(optim_cfg_, global_step_));
    ++global_step_;
    return lb;
  }

  /// Trains one full epoch: shuffled without replacement, partial batch dropped.
  const EpochMetrics &run_epoch() {
    if (done())
      throw std::logic_error("run_epoch: training already finished");
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(data_->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = make_rng(cfg_.seed, {0x5f, epoch_});
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochMetrics m;
    m.epoch = epoch_ + 1;
    m.lr = scheduled_lr(optim_cfg_, global_step_).weights;
    const std::size_t steps = steps_per_epoch();
    for (std::size_t s = 0; s < steps; ++s) {
      Rng rng = make_rng(cfg_.seed, {0xa6, epoch_, s});
      const auto lb = step(std::span<const std::size_t>(order.data() + s * cfg_.batch_size, cfg_.batch_size), rng);
      m.l_common += lb.l_common;
      m.l_unique += lb.l_unique;
      m.l_m1 += lb.l_m1;
      m.l_m2 += lb.l_m2;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    m.l_common *= inv;
    m.l_unique *= inv;
    m.l_m1 *= inv;
    m.l_m2 *= inv;
    m.total = m.l_common + m.l_unique + m.l_m1 + m.l_m2;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++epoch_;
    log_.rows.push_back(m);
    return log_.rows.back();
  }

  /// Trains until `stop_epoch` (default: the configured epoch count).
  void run(std::optional<std::size_t> stop_epoch = std::nullopt,
           const std::function<void(const EpochMetrics &)> &on_epoch = {}) {
    const std::size_t stop = std::min(stop_epoch.value_or(cfg_.epochs), cfg_.epochs);
    while (epoch_ < stop) {
      const auto &m = run_epoch();
      if (on_epoch)
        on_epoch(m);
    }
  }

  Checkpoint checkpoint() const {
    Checkpoint ck;
    ck.config_json = config_to_json(cfg_).dump();
    ck.epoch = epoch_;
    ck.global_step = global_step_;
    ck.seed = cfg_.seed;
    ck.d_x1 = static_cast<std::uint32_t>(data_->x1.cols());
    ck.d_x2 = static_cast<std::uint32_t>(data_->x2.cols());
    for (const auto *p : model_.parameters())
      ck.params.emplace_back(p->name, p->value);
    ck.optim = optim_;
    ck.log = log_;
    return ck;
  }

private:
  void check_data() const {
    if (data_->x1.rows() != data_->x2.rows())
      throw ConfigError("dataset modalities have different sample counts");
    if (data_->size() < cfg_.batch_size)
      throw ConfigError("dataset has " + std::to_string(data_->size()) + " samples, fewer than batch_size " +
                        std::to_string(cfg_.batch_size));
  }

  TrainConfig cfg_;
  const ObservedPair *data_;
  DecurModel model_;
  OptimConfig optim_cfg_;
  OptimState optim_;
  std::size_t epoch_ = 0;
  std::size_t global_step_ = 0;
  MetricsLog log_;
};

struct TrainResult {
  Checkpoint checkpoint;
  MetricsLog log;
};

inline TrainResult train(const TrainConfig &cfg, const ObservedPair &data,
                         const std::function<void(const EpochMetrics &)> &on_epoch = {}) {
  Trainer t(cfg, data);
  t.run(std::nullopt, on_epoch);
  return {t.checkpoint(), t.log()};
}

/// Writes checkpoint.dckp, metrics.csv, timing.csv and resolved_config.json.
inline void write_run_outputs(const std::filesystem::path &dir, const TrainConfig &cfg, const TrainResult &r) {
  std::filesystem::create_directories(dir);
  save_checkpoint(r.checkpoint, dir / "checkpoint.dckp");
  write_text_file(dir / "metrics.csv", r.log.to_csv());
  write_text_file(dir / "timing.csv", r.log.timing_csv());
  write_text_file(dir / "resolved_config.json", config_dump(cfg));
}

/// Loads the dataset named in the config, trains, and writes outputs when
/// output_dir is set.
inline TrainResult train(const TrainConfig &cfg) {
  const auto ds = load_dataset(cfg.dataset);
  auto r = train(cfg, ds.observed);
  if (!cfg.output_dir.empty())
    write_run_outputs(cfg.output_dir, cfg, r);
  return r;
}

} // namespace decur

#endif
