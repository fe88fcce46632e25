#ifndef DECUR_CONFIG_HPP
#define DECUR_CONFIG_HPP

// Training configuration and its flat dotted-key JSON form, e.g.
//   {"method": "decur", "split.kc_ratio": 0.75, "optim.lars_eta": 0.001}
// Every key is also a command-line flag (--split.kc_ratio 0.5).

#include "decur/nn.hpp"
#include "decur/objective.hpp"
#include "decur/optim.hpp"
#include "decur/synthdata.hpp"

#include <json.hpp>

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

namespace decur {

enum class Method { decur, bt_cross, bt_single_m1, bt_single_m2, decur_no_intra, decur_no_decoupling };

inline const char *method_name(Method m) {
  switch (m) {
  case Method::decur: return "decur";
  case Method::bt_cross: return "bt_cross";
  case Method::bt_single_m1: return "bt_single_m1";
  case Method::bt_single_m2: return "bt_single_m2";
  case Method::decur_no_intra: return "decur_no_intra";
  case Method::decur_no_decoupling: return "decur_no_decoupling";
  }
  return "?";
}

inline Method parse_method(const std::string &s) {
  for (auto m : {Method::decur, Method::bt_cross, Method::bt_single_m1, Method::bt_single_m2, Method::decur_no_intra,
                 Method::decur_no_decoupling})
    if (s == method_name(m))
      return m;
  throw ConfigError("unknown method '" + s + "'");
}

inline bool uses_m1(Method m) { return m != Method::bt_single_m2; }
inline bool uses_m2(Method m) { return m != Method::bt_single_m1; }

struct TrainConfig {
  Method method = Method::decur;
  std::string dataset;
  std::size_t embed_dim = 128;
  double kc_ratio = 0.75;
  std::size_t epochs = 100;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  std::string output_dir;
  ModelConfig model;
  OptimConfig optim;
  bool scale_lr_by_batch = true;
  LossWeights weights;
  AugmentPolicy aug1 = AugmentPolicy::defaults();
  AugmentPolicy aug2 = AugmentPolicy::defaults();

  /// The split actually trained: decur_no_decoupling always uses Kc = K.
  DimSplit split() const {
    if (method == Method::decur_no_decoupling)
      return DimSplit(embed_dim, embed_dim);
    return DimSplit::from_ratio(embed_dim, kc_ratio);
  }

  /// Optimizer settings with the batch-size learning-rate scaling applied.
  OptimConfig effective_optim(std::size_t total_steps) const {
    OptimConfig o = optim;
    if (scale_lr_by_batch) {
      const double s = static_cast<double>(batch_size) / 256.0;
      o.base_lr_weights *= s;
      o.base_lr_bias_bn *= s;
    }
    o.total_steps = total_steps;
    return o;
  }

  void validate() const {
    if (batch_size < 2)
      throw ConfigError("batch_size must be >= 2");
    if (epochs == 0)
      throw ConfigError("epochs must be >= 1");
    if (model.encoder_widths.empty())
      throw ConfigError("model.encoder_widths must not be empty");
    split().validate();
    optim.validate();
    weights.validate();
    aug1.validate();
    aug2.validate();
  }
};

namespace detail {

using nlohmann::json;

struct ConfigField {
  std::string key;
  std::string help;
  std::function<json(const TrainConfig &)> get;
  std::function<void(TrainConfig &, const json &)> set;
};

template <class T> T json_as(const json &j, const std::string &key) {
  try {
    return j.get<T>();
  } catch (const json::exception &) {
    throw ConfigError("config key '" + key + "': wrong value type " + j.dump());
  }
}

inline std::vector<ConfigField> make_config_fields() {
  std::vector<ConfigField> f;
#define DECUR_FIELD(KEY, HELP, EXPR, TYPE)                                                                           \
  f.push_back({KEY, HELP, [](const TrainConfig &c) { return json(c.EXPR); },                                       \
               [](TrainConfig &c, const json &j) { c.EXPR = json_as<TYPE>(j, KEY); }})
  f.push_back({"method", "decur | bt_cross | bt_single_m1 | bt_single_m2 | decur_no_intra | decur_no_decoupling",
               [](const TrainConfig &c) { return json(method_name(c.method)); },
               [](TrainConfig &c, const json &j) { c.method = parse_method(json_as<std::string>(j, "method")); }});
  DECUR_FIELD("dataset", "path of the DCUR dataset file", dataset, std::string);
  DECUR_FIELD("split.embed_dim", "embedding width K", embed_dim, std::size_t);
  DECUR_FIELD("split.kc_ratio", "fraction of common dimensions Kc/K in (0,1]", kc_ratio, double);
  DECUR_FIELD("epochs", "training epochs", epochs, std::size_t);
  DECUR_FIELD("batch_size", "samples per step (last partial batch is dropped)", batch_size, std::size_t);
  DECUR_FIELD("seed", "seed for initialisation, shuffling and augmentation", seed, std::uint64_t);
  DECUR_FIELD("output_dir", "directory for checkpoint, metrics and resolved config", output_dir, std::string);
  DECUR_FIELD("model.encoder_widths", "encoder hidden widths, last one is the feature width", model.encoder_widths,
              std::vector<std::size_t>);
  DECUR_FIELD("model.projector_hidden", "projector hidden width (0: same as K)", model.projector_hidden, std::size_t);
  DECUR_FIELD("model.use_projector", "false: embeddings are encoder features", model.use_projector, bool);
  DECUR_FIELD("model.bn_momentum", "batch-norm running-stat momentum", model.bn.momentum, double);
  DECUR_FIELD("model.bn_eps", "batch-norm epsilon", model.bn.eps, double);
  f.push_back({"optim.kind", "lars | sgd", [](const TrainConfig &c) { return json(optim_name(c.optim.kind)); },
               [](TrainConfig &c, const json &j) { c.optim.kind = parse_optim(json_as<std::string>(j, "optim.kind")); }});
  DECUR_FIELD("optim.lr_weights", "base learning rate for weights", optim.base_lr_weights, double);
  DECUR_FIELD("optim.lr_bias_bn", "base learning rate for biases and batch-norm parameters", optim.base_lr_bias_bn,
              double);
  DECUR_FIELD("optim.momentum", "momentum", optim.momentum, double);
  DECUR_FIELD("optim.weight_decay", "weight decay (not applied to biases/BN)", optim.weight_decay, double);
  DECUR_FIELD("optim.lars_eta", "LARS trust coefficient", optim.lars_eta, double);
  DECUR_FIELD("optim.exclude_bias_bn", "exclude biases/BN from LARS adaptation and weight decay",
              optim.exclude_bias_bn, bool);
  DECUR_FIELD("optim.scale_lr_by_batch", "multiply base learning rates by batch_size/256", scale_lr_by_batch, bool);
  DECUR_FIELD("loss.lambda_c", "off-diagonal weight of the common term", weights.lambda_c, double);
  DECUR_FIELD("loss.lambda_u", "off-diagonal weight of the unique term", weights.lambda_u, double);
  DECUR_FIELD("loss.lambda_m1", "off-diagonal weight of the modality-1 term", weights.lambda_m1, double);
  DECUR_FIELD("loss.lambda_m2", "off-diagonal weight of the modality-2 term", weights.lambda_m2, double);
  for (const char *m : {"aug1", "aug2"}) {
    const bool first = std::string(m) == "aug1";
    auto pol = [first](TrainConfig &c) -> AugmentPolicy & { return first ? c.aug1 : c.aug2; };
    auto cpol = [first](const TrainConfig &c) -> const AugmentPolicy & { return first ? c.aug1 : c.aug2; };
    const std::string p = m;
    f.push_back({p + ".noise_std", "additive Gaussian noise std", [cpol](const TrainConfig &c) { return json(cpol(c).noise_std); },
                 [pol, p](TrainConfig &c, const json &j) { pol(c).noise_std = json_as<double>(j, p + ".noise_std"); }});
    f.push_back({p + ".mask_fraction", "fraction of coordinates zeroed", [cpol](const TrainConfig &c) { return json(cpol(c).mask_fraction); },
                 [pol, p](TrainConfig &c, const json &j) { pol(c).mask_fraction = json_as<double>(j, p + ".mask_fraction"); }});
    f.push_back({p + ".scale_lo", "lower bound of the global scale factor", [cpol](const TrainConfig &c) { return json(cpol(c).scale_lo); },
                 [pol, p](TrainConfig &c, const json &j) { pol(c).scale_lo = json_as<double>(j, p + ".scale_lo"); }});
    f.push_back({p + ".scale_hi", "upper bound of the global scale factor", [cpol](const TrainConfig &c) { return json(cpol(c).scale_hi); },
                 [pol, p](TrainConfig &c, const json &j) { pol(c).scale_hi = json_as<double>(j, p + ".scale_hi"); }});
    f.push_back({p + ".flip_sign_prob", "probability of negating the sample", [cpol](const TrainConfig &c) { return json(cpol(c).flip_sign_prob); },
                 [pol, p](TrainConfig &c, const json &j) { pol(c).flip_sign_prob = json_as<double>(j, p + ".flip_sign_prob"); }});
  }
#undef DECUR_FIELD
  return f;
}

} // namespace detail

inline const std::vector<detail::ConfigField> &config_fields() {
  static const auto fields = detail::make_config_fields();
  return fields;
}

inline nlohmann::ordered_json config_to_json(const TrainConfig &c) {
  nlohmann::ordered_json j;
  for (const auto &f : config_fields())
    j[f.key] = f.get(c);
  return j;
}

/// Sets one dotted key. Unknown keys are rejected.
inline void set_config_value(TrainConfig &c, const std::string &key, const nlohmann::json &value) {
  for (const auto &f : config_fields())
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Interprets a command-line string for `key`: JSON literal when it parses
/// as one (numbers, booleans, arrays), plain string otherwise.
inline void set_config_from_string(TrainConfig &c, const std::string &key, const std::string &text) {
  const auto current = [&] {
    for (const auto &f : config_fields())
      if (f.key == key)
        return f.get(c);
    throw ConfigError("unknown config key '" + key + "'");
  }();
  if (current.is_string()) {
    set_config_value(c, key, nlohmann::json(text));
    return;
  }
  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception &) {
    throw ConfigError("config key '" + key + "': cannot parse value '" + text + "'");
  }
  set_config_value(c, key, parsed);
}

inline TrainConfig config_from_json(const nlohmann::json &j, TrainConfig base = {}) {
  if (!j.is_object())
    throw ConfigError("config document must be a JSON object");
  for (const auto &[k, v] : j.items())
    set_config_value(base, k, v);
  return base;
}

inline std::string config_dump(const TrainConfig &c) { return config_to_json(c).dump(2) + "\n"; }

/// FNV-1a of the canonical JSON, as 16 hex digits.
inline std::string config_hash(const TrainConfig &c) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char ch : config_to_json(c).dump()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

} // namespace decur

#endif
