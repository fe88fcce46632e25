#ifndef DECUR_OPTIM_HPP
#define DECUR_OPTIM_HPP

#include "decur/nn.hpp"

#include <cmath>
#include <map>
#include <numbers>
#include <span>
#include <string>

namespace decur {

enum class OptimKind { sgd, lars };

inline const char *optim_name(OptimKind k) { return k == OptimKind::sgd ? "sgd" : "lars"; }
inline OptimKind parse_optim(const std::string &s) {
  if (s == "sgd") return OptimKind::sgd;
  if (s == "lars") return OptimKind::lars;
  throw ConfigError("unknown optimizer '" + s + "'");
}

struct OptimConfig {
  OptimKind kind = OptimKind::lars;
  double base_lr_weights = 0.2;
  double base_lr_bias_bn = 0.0048;
  double momentum = 0.9;
  double weight_decay = 1e-6;
  std::size_t total_steps = 0;
  double lars_eta = 0.001;
  bool exclude_bias_bn = true;

  void validate() const {
    if (!(base_lr_weights > 0.0 && base_lr_bias_bn > 0.0))
      throw ConfigError("optimizer: learning rates must be positive");
    if (!(momentum >= 0.0 && momentum < 1.0))
      throw ConfigError("optimizer: momentum must be in [0, 1)");
    if (!(weight_decay >= 0.0))
      throw ConfigError("optimizer: weight_decay must be >= 0");
    if (!(lars_eta > 0.0))
      throw ConfigError("optimizer: lars_eta must be positive");
  }
};

/// Learning rates in effect for one step.
struct StepLr {
  double weights = 0.0;
  double bias_bn = 0.0;
};

struct OptimState {
  std::map<std::string, Tensor> momentum;
  std::uint64_t step = 0;
  bool operator==(const OptimState &) const = default;
};

/// base_lr * (1 + cos(pi * step / total)) / 2, no warm-up.
inline double cosine_lr(double base_lr, std::size_t step, std::size_t total_steps) {
  if (step > total_steps)
    throw std::out_of_range("cosine_lr: step " + std::to_string(step) + " beyond total " +
                            std::to_string(total_steps));
  if (total_steps == 0)
    return base_lr;
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

inline StepLr scheduled_lr(const OptimConfig &cfg, std::size_t step) {
  return {cosine_lr(cfg.base_lr_weights, step, cfg.total_steps), cosine_lr(cfg.base_lr_bias_bn, step, cfg.total_steps)};
}

namespace detail {

/// Parameters that have a gradient this step, validated before anything moves.
inline std::vector<std::pair<Parameter *, const Tensor *>>
collect_updates(std::span<Parameter *const> params, const std::map<std::string, Tensor> &grads) {
  std::vector<std::pair<Parameter *, const Tensor *>> out;
  for (auto *p : params) {
    if (!p->trainable)
      continue;
    auto it = grads.find(p->name);
    if (it == grads.end())
      continue;
    if (it->second.shape != p->value.shape)
      throw ShapeError("optimizer: gradient of " + p->name + " has shape " + shape_str(it->second.shape) +
                       ", parameter has " + shape_str(p->value.shape));
    if (!all_finite(it->second))
      throw NumericFailure("optimizer: non-finite gradient for parameter " + p->name);
    out.emplace_back(p, &it->second);
  }
  return out;
}

inline Tensor &momentum_buffer(OptimState &state, const Parameter &p) {
  auto it = state.momentum.find(p.name);
  if (it == state.momentum.end())
    it = state.momentum.emplace(p.name, Tensor(p.value.shape)).first;
  return it->second;
}

inline double l2_norm(const Tensor &t) {
  double s = 0.0;
  for (double v : t.data)
    s += v * v;
  return std::sqrt(s);
}

inline bool excluded(const Parameter &p, const OptimConfig &cfg) { return cfg.exclude_bias_bn && p.is_bias_or_bn; }

/// v <- mu v + scale (g + wd w);  w <- w - lr v
inline void momentum_update(Parameter &p, const Tensor &g, Tensor &v, double mu, double wd, double scale, double lr) {
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    v.data[i] = mu * v.data[i] + scale * (g.data[i] + wd * p.value.data[i]);
    p.value.data[i] -= lr * v.data[i];
  }
}

} // namespace detail

/// Momentum SGD. Excluded (bias/BN) parameters skip weight decay and use the
/// bias learning rate.
inline void sgd_step(std::span<Parameter *const> params, const std::map<std::string, Tensor> &grads,
                     OptimState &state, const OptimConfig &cfg, StepLr lr) {
  for (auto [p, g] : detail::collect_updates(params, grads)) {
    const bool ex = detail::excluded(*p, cfg);
    detail::momentum_update(*p, *g, detail::momentum_buffer(state, *p), cfg.momentum, ex ? 0.0 : cfg.weight_decay,
                            1.0, ex ? lr.bias_bn : lr.weights);
  }
  ++state.step;
}

/// LARS: adapted parameters scale their step by the trust ratio
/// eta |w| / (|g| + wd |w| + 1e-9) (1 when |w| == 0); excluded parameters
/// take a plain momentum-SGD step at the bias rate without weight decay.
inline void lars_step(std::span<Parameter *const> params, const std::map<std::string, Tensor> &grads,
                      OptimState &state, const OptimConfig &cfg, StepLr lr) {
  constexpr double eps = 1e-9;
  for (auto [p, g] : detail::collect_updates(params, grads)) {
    auto &v = detail::momentum_buffer(state, *p);
    if (detail::excluded(*p, cfg)) {
      detail::momentum_update(*p, *g, v, cfg.momentum, 0.0, 1.0, lr.bias_bn);
      continue;
    }
    const double wn = detail::l2_norm(p->value);
    const double gn = detail::l2_norm(*g);
    const double trust = wn > 0.0 ? cfg.lars_eta * wn / (gn + cfg.weight_decay * wn + eps) : 1.0;
    detail::momentum_update(*p, *g, v, cfg.momentum, cfg.weight_decay, trust, lr.weights);
  }
  ++state.step;
}

inline void optimizer_step(std::span<Parameter *const> params, const std::map<std::string, Tensor> &grads,
                           OptimState &state, const OptimConfig &cfg, StepLr lr) {
  if (cfg.kind == OptimKind::lars)
    lars_step(params, grads, state, cfg, lr);
  else
    sgd_step(params, grads, state, cfg, lr);
}

} // namespace decur

#endif
