// decur: command-line front end.
//
//   decur gen-data --out-dir data --n 8192 --seed 0
//   decur train --dataset data/dataset.dcur --out runs/a --method decur --kc-ratio 0.75
//   decur probe --checkpoint runs/a/checkpoint.dckp --dataset data/dataset.dcur --out-dir runs/a/probe
//   decur compare --dataset data/dataset.dcur --seeds 0,1,2 --out-dir runs/cmp
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.

#include "decur/decur.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using namespace decur;

namespace {

class UsageError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

void log_line(const std::string &s) { std::cerr << s << '\n'; }

// ---------------------------------------------------------------------------
// Training overrides shared by train / compare / ablate
// ---------------------------------------------------------------------------

struct Overrides {
  std::string config_file;
  std::vector<std::pair<std::string, std::optional<std::string>>> values; // key -> flag value
};

std::string flag_names(const std::string &key) {
  std::string names = "--" + key;
  if (key == "split.kc_ratio")
    names += ",--kc-ratio";
  else if (key == "batch_size")
    names += ",--batch-size";
  else if (key == "output_dir")
    names += ",--out";
  else if (key == "split.embed_dim")
    names += ",--embed-dim";
  return names;
}

void add_train_flags(CLI::App *app, Overrides &o, bool with_output = true) {
  app->add_option("--config", o.config_file, "JSON file of flat dotted keys; flags override it")
      ->check(CLI::ExistingFile);
  o.values.reserve(config_fields().size());
  for (const auto &f : config_fields()) {
    if (!with_output && f.key == "output_dir")
      continue;
    o.values.emplace_back(f.key, std::nullopt);
    const TrainConfig defaults;
    auto dflt = f.get(defaults);
    app->add_option(flag_names(f.key), o.values.back().second,
                    f.help + " (default " + (dflt.is_string() ? dflt.get<std::string>() : dflt.dump()) + ")");
  }
}

TrainConfig resolve_config(const Overrides &o) {
  TrainConfig cfg;
  if (!o.config_file.empty()) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(o.config_file));
    } catch (const nlohmann::json::exception &e) {
      throw UsageError("cannot parse config file " + o.config_file + ": " + e.what());
    }
    cfg = config_from_json(j, cfg);
  }
  for (const auto &[key, v] : o.values)
    if (v)
      set_config_from_string(cfg, key, *v);
  cfg.validate();
  return cfg;
}

PairedDataset load_dataset_for(const TrainConfig &cfg) {
  if (cfg.dataset.empty())
    throw UsageError("no dataset given (--dataset)");
  return load_dataset(cfg.dataset);
}

void print_epoch(const EpochMetrics &m) {
  std::ostringstream os;
  os << "epoch " << m.epoch << " lr " << m.lr << " total " << m.total << " common " << m.l_common << " unique "
     << m.l_unique << " m1 " << m.l_m1 << " m2 " << m.l_m2;
  log_line(os.str());
}

void write_json(const fs::path &path, const nlohmann::ordered_json &j) { write_text_file(path, j.dump(2) + "\n"); }

// ---------------------------------------------------------------------------
// Probe settings
// ---------------------------------------------------------------------------

void add_probe_flags(CLI::App *app, ProbeConfig &p) {
  app->add_option("--probe.lr", p.lr, "probe learning rate")->capture_default_str();
  app->add_option("--probe.momentum", p.momentum, "probe momentum")->capture_default_str();
  app->add_option("--probe.epochs", p.epochs, "probe epochs")->capture_default_str();
  app->add_option("--probe.batch_size", p.batch_size, "probe batch size")->capture_default_str();
  app->add_option("--probe.seed", p.seed, "probe shuffling seed")->capture_default_str();
}

nlohmann::ordered_json probe_json(const ProbeConfig &p) {
  nlohmann::ordered_json j;
  j["probe.lr"] = p.lr;
  j["probe.momentum"] = p.momentum;
  j["probe.epochs"] = p.epochs;
  j["probe.batch_size"] = p.batch_size;
  j["probe.milestones"] = p.milestones;
  j["probe.decay"] = p.decay;
  j["probe.seed"] = p.seed;
  return j;
}

std::vector<ProbeMode> parse_probe_modes(const std::string &s) {
  if (s == "all")
    return {ProbeMode::multimodal, ProbeMode::m1_only, ProbeMode::m2_only};
  for (auto m : {ProbeMode::multimodal, ProbeMode::m1_only, ProbeMode::m2_only})
    if (s == probe_mode_name(m))
      return {m};
  throw UsageError("unknown probe mode '" + s + "'");
}

/// Probe accuracy per mode for a trained model.
std::map<ProbeMode, double> probe_all(const DecurModel &model, const PairedDataset &ds, const ProbeConfig &p) {
  std::map<ProbeMode, double> out;
  for (auto m : {ProbeMode::multimodal, ProbeMode::m1_only, ProbeMode::m2_only})
    out[m] = linear_probe(model, ds, m, p).accuracy;
  return out;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

void append_csv(const fs::path &path, const std::string &header, const std::string &rows) {
  const bool fresh = !fs::exists(path);
  if (!path.parent_path().empty())
    fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::app | std::ios::binary);
  if (!f)
    throw FormatError(FormatErrc::io, "cannot open " + path.string());
  if (fresh)
    f << header << '\n';
  f << rows;
  if (!f)
    throw FormatError(FormatErrc::io, "write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

int cmd_gen_data(const SyntheticSpec &spec, std::size_t n, const fs::path &out_dir) {
  spec.validate();
  if (n < 2)
    throw UsageError("--n must be >= 2");
  const auto ds = generate(spec, n);
  fs::create_directories(out_dir);
  save_dataset(ds, out_dir / "dataset.dcur");
  nlohmann::ordered_json j;
  j["command"] = "gen-data";
  j["n"] = n;
  j["seed"] = spec.seed;
  j["d_shared"] = spec.d_shared;
  j["d_u1"] = spec.d_u1;
  j["d_u2"] = spec.d_u2;
  j["d_x1"] = spec.d_x1;
  j["d_x2"] = spec.d_x2;
  j["map_depth"] = spec.map_depth;
  j["map_gain"] = spec.map_gain;
  j["noise_std"] = spec.noise_std;
  j["mixing"] = mixing_name(spec.mixing);
  j["planted_block"] = spec.planted_block;
  write_json(out_dir / "resolved_config.json", j);
  log_line("wrote " + (out_dir / "dataset.dcur").string());
  return 0;
}

int cmd_train(const Overrides &o, const std::string &resume, std::optional<std::size_t> stop_after) {
  TrainResult result;
  TrainConfig cfg;
  if (!resume.empty()) {
    const auto ck = load_checkpoint(resume);
    cfg = ck.config();
    auto ov = o;
    ov.config_file.clear();
    // Only the epoch budget and output directory may change on resume.
    for (auto &[k, v] : ov.values)
      if (v && k != "epochs" && k != "output_dir" && k != "dataset")
        throw UsageError("--" + k + " cannot be changed when resuming");
    for (const auto &[k, v] : ov.values)
      if (v)
        set_config_from_string(cfg, k, *v);
    cfg.validate();
    const auto ds = load_dataset_for(cfg);
    Checkpoint start = ck;
    auto j = nlohmann::json::parse(start.config_json);
    j["epochs"] = cfg.epochs;
    start.config_json = nlohmann::ordered_json(config_to_json(config_from_json(j))).dump();
    Trainer t(start, ds.observed);
    t.run(stop_after, print_epoch);
    result = {t.checkpoint(), t.log()};
  } else {
    cfg = resolve_config(o);
    const auto ds = load_dataset_for(cfg);
    Trainer t(cfg, ds.observed);
    t.run(stop_after, print_epoch);
    result = {t.checkpoint(), t.log()};
  }
  if (cfg.output_dir.empty())
    throw UsageError("no output directory given (--out)");
  write_run_outputs(cfg.output_dir, cfg, result);
  log_line("wrote " + (fs::path(cfg.output_dir) / "checkpoint.dckp").string());
  return 0;
}

struct EvalInputs {
  std::string checkpoint;
  std::string dataset;
  std::string out_dir;
};

void add_eval_inputs(CLI::App *app, EvalInputs &in) {
  app->add_option("--checkpoint", in.checkpoint, "trained checkpoint (.dckp)")->required()->check(CLI::ExistingFile);
  app->add_option("--dataset", in.dataset, "DCUR dataset with ground truth")->required()->check(CLI::ExistingFile);
  app->add_option("--out-dir", in.out_dir, "directory for result CSVs")->required();
}

nlohmann::ordered_json eval_header(const char *command, const EvalInputs &in, const TrainConfig &cfg) {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["checkpoint"] = in.checkpoint;
  j["dataset"] = in.dataset;
  j["train_config"] = config_to_json(cfg);
  return j;
}

int cmd_probe(const EvalInputs &in, const std::string &mode, const ProbeConfig &pc) {
  const auto modes = parse_probe_modes(mode);
  const auto ck = load_checkpoint(in.checkpoint);
  const auto cfg = ck.config();
  const auto ds = load_dataset(in.dataset);
  const auto model = model_from_checkpoint(ck);
  std::ostringstream rows;
  rows << std::setprecision(10);
  for (auto m : modes) {
    const auto r = linear_probe(model, ds, m, pc);
    rows << config_hash(cfg) << ',' << method_name(cfg.method) << ',' << cfg.seed << ',' << probe_mode_name(m) << ','
         << r.accuracy << ',' << r.n_train << ',' << r.n_test << '\n';
    std::cout << probe_mode_name(m) << " accuracy " << fmt(r.accuracy) << '\n';
  }
  const fs::path dir = in.out_dir;
  append_csv(dir / "probe.csv", "config_hash,method,seed,mode,accuracy,n_train,n_test", rows.str());
  auto j = eval_header("probe", in, cfg);
  j["mode"] = mode;
  j["probe"] = probe_json(pc);
  write_json(dir / "resolved_config.json", j);
  return 0;
}

int cmd_recover(const EvalInputs &in, double ridge) {
  const auto ck = load_checkpoint(in.checkpoint);
  const auto cfg = ck.config();
  const auto ds = load_dataset(in.dataset);
  const auto rep = latent_recovery(model_from_checkpoint(ck), ds, cfg.split(), ridge);
  const fs::path dir = in.out_dir;
  append_csv(dir / "recovery.csv", "config_hash,block,latent,r2", rep.to_csv_rows(config_hash(cfg)));
  for (int b = 0; b < 4; ++b) {
    std::cout << block_name(static_cast<EmbeddingBlock>(b));
    for (int g = 0; g < 3; ++g)
      std::cout << ' ' << group_name(static_cast<LatentGroup>(g)) << '=' << fmt(rep.r2[b][g]);
    std::cout << '\n';
  }
  auto j = eval_header("recover", in, cfg);
  j["ridge"] = ridge;
  write_json(dir / "resolved_config.json", j);
  return 0;
}

struct ExplainOptions {
  std::size_t bins = 20;
  std::size_t ig_steps = kDefaultIgSteps;
  std::size_t samples = 64;
  std::string overlap_norm = "per_dataset";
  bool export_embeddings = true;
};

int cmd_explain(const EvalInputs &in, const ExplainOptions &eo) {
  const auto ck = load_checkpoint(in.checkpoint);
  const auto cfg = ck.config();
  const auto ds = load_dataset(in.dataset);
  const auto model = model_from_checkpoint(ck);
  const auto split = cfg.split();
  const fs::path dir = in.out_dir;
  fs::create_directories(dir);
  OverlapNormalization norm;
  if (eo.overlap_norm == "per_dataset")
    norm = OverlapNormalization::per_dataset;
  else if (eo.overlap_norm == "per_sample")
    norm = OverlapNormalization::per_sample;
  else
    throw UsageError("unknown --overlap-norm '" + eo.overlap_norm + "'");

  const Tensor z1 = embed_eval(model.m1, ds.observed.x1), z2 = embed_eval(model.m2, ds.observed.x2);
  const auto hist = alignment_histogram(z1, z2, eo.bins);
  write_text_file(dir / "alignment_histogram.csv", hist.to_csv());
  write_text_file(dir / "alignment_losses.csv", hist.losses_csv(split));
  std::cout << "mean L_i common " << fmt(hist.mean_loss(0, split.Kc));
  if (split.Ku())
    std::cout << " unique " << fmt(hist.mean_loss(split.Kc, split.K));
  std::cout << '\n';

  if (eo.export_embeddings)
    write_text_file(dir / "embeddings.csv", embeddings_csv(z1, z2, split));

  if (split.Ku() && eo.samples > 0) {
    const std::size_t n = std::min(eo.samples, ds.size());
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const Tensor x1 = take_rows(ds.observed.x1, rows), x2 = take_rows(ds.observed.x2, rows);
    const auto s1 = EmbeddingStats::of(z1), s2 = EmbeddingStats::of(z2);
    std::map<std::string, std::vector<AttributionMap>> att;
    for (auto role : {DimRole::common, DimRole::unique}) {
      const auto f1 = embedding_target(model.m1, role, split, s1);
      const auto f2 = embedding_target(model.m2, role, split, s2);
      att[std::string("m1_") + role_name(role)] = integrated_gradients(f1, x1, eo.ig_steps, {}, role);
      att[std::string("m2_") + role_name(role)] = integrated_gradients(f2, x2, eo.ig_steps, {}, role);
      write_text_file(dir / (std::string("spectral_m1_") + role_name(role) + ".csv"),
                      importance_csv(spectral_saliency(f1, x1, eo.ig_steps)));
      write_text_file(dir / (std::string("spectral_m2_") + role_name(role) + ".csv"),
                      importance_csv(spectral_saliency(f2, x2, eo.ig_steps)));
    }
    const auto ov = saliency_overlap(att["m1_common"], att["m2_common"], att["m1_unique"], att["m2_unique"], norm);
    write_text_file(dir / "overlap.csv", ov.to_csv());
    std::ostringstream comp;
    comp << std::setprecision(17) << "sample,target,modality,f_input,f_baseline,attribution_sum_residual\n";
    for (const auto &[key, maps] : att)
      for (std::size_t i = 0; i < maps.size(); ++i)
        comp << i << ',' << role_name(maps[i].target) << ',' << key.substr(0, 2) << ',' << maps[i].f_input << ','
             << maps[i].f_baseline << ',' << maps[i].residual << '\n';
    write_text_file(dir / "completeness.csv", comp.str());
    std::cout << "mean overlap common " << fmt(ov.mean_common()) << " unique " << fmt(ov.mean_unique()) << '\n';
  } else if (!split.Ku()) {
    log_line("no unique dimensions (Kc == K): skipping attribution statistics");
  }

  auto j = eval_header("explain", in, cfg);
  j["bins"] = eo.bins;
  j["ig_steps"] = eo.ig_steps;
  j["samples"] = eo.samples;
  j["overlap_norm"] = eo.overlap_norm;
  write_json(dir / "resolved_config.json", j);
  return 0;
}

std::vector<std::uint64_t> parse_seeds(const std::string &s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    try {
      out.push_back(std::stoull(tok));
    } catch (const std::exception &) {
      throw UsageError("bad seed list '" + s + "'");
    }
  if (out.empty())
    throw UsageError("empty seed list");
  return out;
}

int cmd_compare(const Overrides &o, const std::string &seeds_arg, const std::string &methods_arg, const ProbeConfig &pc) {
  const TrainConfig base = resolve_config(o);
  if (base.output_dir.empty())
    throw UsageError("no output directory given (--out)");
  const auto seeds = parse_seeds(seeds_arg);
  std::vector<Method> methods;
  {
    std::stringstream ss(methods_arg);
    std::string tok;
    while (std::getline(ss, tok, ','))
      methods.push_back(parse_method(tok));
  }
  const auto ds = load_dataset_for(base);
  const fs::path dir = base.output_dir;
  std::ostringstream csv;
  csv << std::setprecision(10) << "method,seed,multimodal,m1_only,m2_only\n";
  std::map<Method, std::array<double, 3>> sums;
  for (auto m : methods)
    for (auto seed : seeds) {
      TrainConfig cfg = base;
      cfg.method = m;
      cfg.seed = seed;
      cfg.output_dir = (dir / (std::string(method_name(m)) + "_seed" + std::to_string(seed))).string();
      log_line(std::string("training ") + method_name(m) + " seed " + std::to_string(seed));
      const auto r = train(cfg, ds.observed);
      write_run_outputs(cfg.output_dir, cfg, r);
      const auto acc = probe_all(model_from_checkpoint(r.checkpoint), ds, pc);
      csv << method_name(m) << ',' << seed << ',' << acc.at(ProbeMode::multimodal) << ',' << acc.at(ProbeMode::m1_only)
          << ',' << acc.at(ProbeMode::m2_only) << '\n';
      auto &s = sums[m];
      s[0] += acc.at(ProbeMode::multimodal);
      s[1] += acc.at(ProbeMode::m1_only);
      s[2] += acc.at(ProbeMode::m2_only);
    }
  write_text_file(dir / "comparison.csv", csv.str());
  auto j = nlohmann::ordered_json::object();
  j["command"] = "compare";
  j["seeds"] = seeds;
  j["methods"] = methods_arg;
  j["train_config"] = config_to_json(base);
  j["probe"] = probe_json(pc);
  write_json(dir / "resolved_config.json", j);

  const double k = static_cast<double>(seeds.size());
  std::cout << std::left << std::setw(22) << "method" << std::setw(12) << "multimodal" << std::setw(12) << "m1_only"
            << "m2_only\n";
  for (auto m : methods) {
    const auto &s = sums[m];
    std::cout << std::setw(22) << method_name(m) << std::setw(12) << fmt(s[0] / k) << std::setw(12) << fmt(s[1] / k)
              << fmt(s[2] / k) << '\n';
  }
  return 0;
}

const std::vector<double> kAblationPercents{25.0, 50.0, 62.5, 75.0, 87.5, 100.0};

int cmd_ablate(const Overrides &o, const ProbeConfig &pc) {
  const TrainConfig base = resolve_config(o);
  if (base.output_dir.empty())
    throw UsageError("no output directory given (--out)");
  if (base.method != Method::decur)
    throw UsageError("ablate sweeps the common-dimension ratio of method decur");
  const auto ds = load_dataset_for(base);
  const fs::path dir = base.output_dir;
  std::ostringstream csv;
  csv << std::setprecision(10) << "kc_percent,kc,k,multimodal,m1_only,m2_only\n";
  for (double pct : kAblationPercents) {
    TrainConfig cfg = base;
    cfg.kc_ratio = pct / 100.0;
    cfg.output_dir = (dir / ("kc" + fmt(pct, 1))).string();
    log_line("training Kc " + fmt(pct, 1) + "%");
    const auto r = train(cfg, ds.observed);
    write_run_outputs(cfg.output_dir, cfg, r);
    const auto acc = probe_all(model_from_checkpoint(r.checkpoint), ds, pc);
    csv << pct << ',' << cfg.split().Kc << ',' << cfg.split().K << ',' << acc.at(ProbeMode::multimodal) << ','
        << acc.at(ProbeMode::m1_only) << ',' << acc.at(ProbeMode::m2_only) << '\n';
    std::cout << "Kc " << std::setw(5) << fmt(pct, 1) << "%  multimodal " << fmt(acc.at(ProbeMode::multimodal)) << '\n';
  }
  write_text_file(dir / "ablation.csv", csv.str());
  auto j = nlohmann::ordered_json::object();
  j["command"] = "ablate";
  j["kc_percents"] = kAblationPercents;
  j["train_config"] = config_to_json(base);
  j["probe"] = probe_json(pc);
  write_json(dir / "resolved_config.json", j);
  return 0;
}

void apply_thread_env() {
  if (const char *t = std::getenv("DECUR_THREADS")) {
    const int n = std::atoi(t);
    if (n > 0)
      Eigen::setNbThreads(n);
  }
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"DeCUR: decoupled common/unique multimodal self-supervised learning on synthetic data"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric failure.\n"
             "DECUR_THREADS sets the number of Eigen threads.");

  SyntheticSpec spec;
  std::size_t n = 8192;
  std::string gen_out, mixing = "random_mlp";
  auto *gen = app.add_subcommand("gen-data", "generate a synthetic paired dataset with ground-truth latents");
  gen->add_option("--out-dir", gen_out, "output directory (dataset.dcur + resolved_config.json)")->required();
  gen->add_option("--n", n, "number of samples")->capture_default_str();
  gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  gen->add_option("--d-shared", spec.d_shared, "shared latent dimension")->capture_default_str();
  gen->add_option("--d-u1", spec.d_u1, "modality-1 unique latent dimension")->capture_default_str();
  gen->add_option("--d-u2", spec.d_u2, "modality-2 unique latent dimension")->capture_default_str();
  gen->add_option("--d-x1", spec.d_x1, "modality-1 observed dimension")->capture_default_str();
  gen->add_option("--d-x2", spec.d_x2, "modality-2 observed dimension")->capture_default_str();
  gen->add_option("--map-depth", spec.map_depth, "layers of the random tanh mixing network")->capture_default_str();
  gen->add_option("--map-gain", spec.map_gain, "weight scale of the mixing network")->capture_default_str();
  gen->add_option("--noise-std", spec.noise_std, "observation noise std")->capture_default_str();
  gen->add_option("--mixing", mixing, "random_mlp | identity | planted | coregistered")->capture_default_str();
  gen->add_option("--planted-block", spec.planted_block, "band width B of the planted and coregistered layouts")
      ->capture_default_str();

  Overrides train_o;
  std::string resume;
  auto *tr = app.add_subcommand("train", "train a model and write checkpoint, metrics and resolved config");
  add_train_flags(tr, train_o);
  tr->add_option("--resume", resume, "continue from a checkpoint (only --epochs/--out/--dataset may change)")
      ->check(CLI::ExistingFile);
  std::optional<std::size_t> stop_after;
  tr->add_option("--stop-after", stop_after,
                 "stop once this many epochs are done (the schedule still spans --epochs); resume later with --resume");

  EvalInputs probe_in, recover_in, explain_in;
  ProbeConfig probe_cfg;
  std::string probe_mode = "all";
  auto *pr = app.add_subcommand("probe", "linear probe on frozen encoder features");
  add_eval_inputs(pr, probe_in);
  pr->add_option("--mode", probe_mode, "multimodal | m1_only | m2_only | all")->capture_default_str();
  add_probe_flags(pr, probe_cfg);

  double ridge = kRecoveryRidge;
  auto *rc = app.add_subcommand("recover", "ridge R^2 from embedding blocks to ground-truth latents");
  add_eval_inputs(rc, recover_in);
  rc->add_option("--ridge", ridge, "ridge penalty")->capture_default_str();

  ExplainOptions eo;
  auto *ex = app.add_subcommand("explain", "alignment histogram, attributions, overlap and spectral statistics");
  add_eval_inputs(ex, explain_in);
  ex->add_option("--bins", eo.bins, "alignment histogram bins")->capture_default_str();
  ex->add_option("--ig-steps", eo.ig_steps, "Integrated Gradients steps (>= 8)")->capture_default_str();
  ex->add_option("--samples", eo.samples, "samples used for attribution statistics")->capture_default_str();
  ex->add_option("--overlap-norm", eo.overlap_norm, "per_dataset | per_sample")->capture_default_str();
  ex->add_flag("!--no-embeddings", eo.export_embeddings, "skip embeddings.csv");

  Overrides cmp_o;
  std::string cmp_seeds = "0,1,2";
  std::string cmp_methods = "decur,bt_cross,bt_single_m1,bt_single_m2,decur_no_intra,decur_no_decoupling";
  ProbeConfig cmp_probe;
  auto *cmp = app.add_subcommand("compare", "train several methods over seeds and tabulate probe accuracy");
  add_train_flags(cmp, cmp_o);
  cmp->add_option("--seeds", cmp_seeds, "comma-separated seeds")->capture_default_str();
  cmp->add_option("--methods", cmp_methods, "comma-separated methods")->capture_default_str();
  add_probe_flags(cmp, cmp_probe);

  Overrides abl_o;
  ProbeConfig abl_probe;
  auto *abl = app.add_subcommand("ablate", "sweep the common-dimension percentage {25,50,62.5,75,87.5,100}");
  add_train_flags(abl, abl_o);
  add_probe_flags(abl, abl_probe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  apply_thread_env();
  try {
    if (*gen) {
      spec.mixing = parse_mixing(mixing);
      return cmd_gen_data(spec, n, gen_out);
    }
    if (*tr)
      return cmd_train(train_o, resume, stop_after);
    if (*pr)
      return cmd_probe(probe_in, probe_mode, probe_cfg);
    if (*rc)
      return cmd_recover(recover_in, ridge);
    if (*ex)
      return cmd_explain(explain_in, eo);
    if (*cmp)
      return cmd_compare(cmp_o, cmp_seeds, cmp_methods, cmp_probe);
    if (*abl)
      return cmd_ablate(abl_o, abl_probe);
  } catch (const UsageError &e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError &e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 1;
  } catch (const NumericFailure &e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 3;
  } catch (const FormatError &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
