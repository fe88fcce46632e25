#ifndef DECUR_NN_HPP
#define DECUR_NN_HPP

#include "decur/autodiff.hpp"
#include "decur/random.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace decur {

class BatchTooSmallError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

enum class Mode { train, eval };

/// A named tensor owned by a model. Buffers (BN running statistics) are
/// stored alongside trainable parameters so checkpoints capture them.
struct Parameter {
  std::string name;
  Tensor value;
  bool is_bias_or_bn = false;
  bool trainable = true;
};

/// Maps a model's parameters onto leaves of one graph. Binding the same
/// parameter twice returns the same leaf, so gradients from both augmented
/// views accumulate.
class Binding {
public:
  Binding(Graph &g, bool requires_grad) : graph_(&g), requires_grad_(requires_grad) {}

  Graph &graph() const { return *graph_; }

  Var operator()(const Parameter &p) {
    auto it = vars_.find(&p);
    if (it != vars_.end())
      return it->second;
    Var v = graph_->leaf(p.value, requires_grad_ && p.trainable);
    vars_.emplace(&p, v);
    return v;
  }

  /// Routes p to an existing node, e.g. a leaf owned by a finite-difference check.
  void set(const Parameter &p, Var v) { vars_[&p] = v; }

  /// Gradient of every bound trainable parameter after graph.backward().
  std::map<std::string, Tensor> gradients() const {
    std::map<std::string, Tensor> out;
    for (const auto &[p, v] : vars_)
      if (p->trainable)
        out[p->name] = graph_->grad(v);
    return out;
  }

private:
  Graph *graph_;
  bool requires_grad_;
  std::unordered_map<const Parameter *, Var> vars_;
};

class LinearLayer {
public:
  LinearLayer() = default;
  LinearLayer(const std::string &name, std::size_t in, std::size_t out) {
    if (in == 0 || out == 0)
      throw ConfigError("linear layer " + name + ": widths must be positive");
    weight = {name + ".weight", Tensor({out, in}), false, true};
    bias = {name + ".bias", Tensor({1, out}), true, true};
  }

  std::size_t in_dim() const { return weight.value.cols(); }
  std::size_t out_dim() const { return weight.value.rows(); }

  /// Glorot-uniform weights, zero bias.
  void init(Rng &rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(in_dim() + out_dim()));
    std::uniform_real_distribution<double> U(-a, a);
    for (auto &w : weight.value.data)
      w = U(rng);
    std::fill(bias.value.data.begin(), bias.value.data.end(), 0.0);
  }

  Var forward(Binding &bind, Var x) const {
    if (x.cols() != in_dim())
      throw ShapeError(weight.name + ": input width " + std::to_string(x.cols()) +
                       " != " + std::to_string(in_dim()));
    return add_row(matmul(x, transpose(bind(weight))), bind(bias));
  }

  Parameter weight;
  Parameter bias;
};

class BatchNormLayer {
public:
  BatchNormLayer() = default;
  BatchNormLayer(const std::string &name, std::size_t dim, double momentum = 0.1, double eps = 1e-5)
      : momentum(momentum), eps(eps) {
    if (dim == 0)
      throw ConfigError("batch norm " + name + ": width must be positive");
    if (!(momentum > 0.0 && momentum < 1.0) || !(eps > 0.0))
      throw ConfigError("batch norm " + name + ": momentum must be in (0,1) and eps > 0");
    gamma = {name + ".gamma", Tensor({1, dim}, 1.0), true, true};
    beta = {name + ".beta", Tensor({1, dim}), true, true};
    running_mean = {name + ".running_mean", Tensor({1, dim}), true, false};
    running_var = {name + ".running_var", Tensor({1, dim}, 1.0), true, false};
  }

  std::size_t dim() const { return gamma.value.numel(); }

  void init() {
    std::fill(gamma.value.data.begin(), gamma.value.data.end(), 1.0);
    std::fill(beta.value.data.begin(), beta.value.data.end(), 0.0);
    std::fill(running_mean.value.data.begin(), running_mean.value.data.end(), 0.0);
    std::fill(running_var.value.data.begin(), running_var.value.data.end(), 1.0);
  }

  /// Train mode normalises with batch statistics and updates the running
  /// estimates (unbiased variance); eval mode is a fixed affine map.
  Var forward(Binding &bind, Var x, Mode mode) {
    return mode == Mode::train ? forward_train(bind, x) : forward_eval(bind.graph(), x);
  }

  Var forward_train(Binding &bind, Var x) {
    const auto &X = x.value();
    const std::size_t N = X.rows(), C = X.cols();
    if (N < 2)
      throw BatchTooSmallError(gamma.name + ": train-mode batch norm needs at least 2 samples");
    for (std::size_t j = 0; j < C; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < N; ++i)
        m += X(i, j);
      m /= static_cast<double>(N);
      double v = 0.0;
      for (std::size_t i = 0; i < N; ++i)
        v += (X(i, j) - m) * (X(i, j) - m);
      v /= static_cast<double>(N - 1);
      running_mean.value.data[j] = (1.0 - momentum) * running_mean.value.data[j] + momentum * m;
      running_var.value.data[j] = (1.0 - momentum) * running_var.value.data[j] + momentum * v;
    }
    return add_row(mul_row(batch_standardize(x, eps), bind(gamma)), bind(beta));
  }

  Var forward_eval(Graph &g, Var x) const {
    Tensor scale({1, dim()}), shift({1, dim()});
    for (std::size_t j = 0; j < dim(); ++j) {
      scale.data[j] = gamma.value.data[j] / std::sqrt(running_var.value.data[j] + eps);
      shift.data[j] = beta.value.data[j] - running_mean.value.data[j] * scale.data[j];
    }
    return add_row(mul_row(x, g.constant(std::move(scale))), g.constant(std::move(shift)));
  }

  Parameter gamma, beta, running_mean, running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

/// Linear, optionally followed by batch norm and ReLU.
struct Block {
  LinearLayer linear;
  std::optional<BatchNormLayer> bn;
  bool relu = false;
};

/// Stack of blocks with chained widths.
class Mlp {
public:
  std::size_t in_dim() const { return blocks_.front().linear.in_dim(); }
  std::size_t out_dim() const { return blocks_.back().linear.out_dim(); }
  const std::vector<Block> &blocks() const { return blocks_; }
  std::vector<Block> &blocks() { return blocks_; }

  void init(Rng &rng) {
    for (auto &b : blocks_) {
      b.linear.init(rng);
      if (b.bn)
        b.bn->init();
    }
  }

  Var forward(Binding &bind, Var x, Mode mode) {
    if (mode == Mode::eval)
      return forward_eval(bind, x);
    check_input(x);
    Var h = x;
    for (auto &b : blocks_) {
      h = b.linear.forward(bind, h);
      if (b.bn)
        h = b.bn->forward_train(bind, h);
      if (b.relu)
        h = relu(h);
    }
    return h;
  }

  Var forward_eval(Binding &bind, Var x) const {
    check_input(x);
    Var h = x;
    for (const auto &b : blocks_) {
      h = b.linear.forward(bind, h);
      if (b.bn)
        h = b.bn->forward_eval(bind.graph(), h);
      if (b.relu)
        h = relu(h);
    }
    return h;
  }

  std::vector<Parameter *> parameters() {
    std::vector<Parameter *> out;
    for (auto &b : blocks_) {
      out.push_back(&b.linear.weight);
      out.push_back(&b.linear.bias);
      if (b.bn) {
        out.push_back(&b.bn->gamma);
        out.push_back(&b.bn->beta);
        out.push_back(&b.bn->running_mean);
        out.push_back(&b.bn->running_var);
      }
    }
    return out;
  }
  std::vector<const Parameter *> parameters() const {
    std::vector<const Parameter *> out;
    for (const auto &b : blocks_) {
      out.push_back(&b.linear.weight);
      out.push_back(&b.linear.bias);
      if (b.bn) {
        out.push_back(&b.bn->gamma);
        out.push_back(&b.bn->beta);
        out.push_back(&b.bn->running_mean);
        out.push_back(&b.bn->running_var);
      }
    }
    return out;
  }

protected:
  void check_input(Var x) const {
    if (x.cols() != in_dim())
      throw ShapeError("mlp input width " + std::to_string(x.cols()) + " != " +
                       std::to_string(in_dim()));
  }

  void add_block(const std::string &name, std::size_t in, std::size_t out, bool with_bn,
                 bool with_relu, double bn_momentum, double bn_eps) {
    Block b;
    b.linear = LinearLayer(name + ".linear", in, out);
    if (with_bn)
      b.bn = BatchNormLayer(name + ".bn", out, bn_momentum, bn_eps);
    b.relu = with_relu;
    blocks_.push_back(std::move(b));
  }

  std::vector<Block> blocks_;
};

struct BatchNormConfig {
  double momentum = 0.1;
  double eps = 1e-5;
};

/// (Linear, BN, ReLU) repeated; output width is the last hidden width.
class EncoderModel : public Mlp {
public:
  EncoderModel() = default;
  EncoderModel(const std::string &name, std::size_t in_dim, const std::vector<std::size_t> &widths,
               BatchNormConfig bn = {}) {
    if (in_dim == 0 || widths.empty())
      throw ConfigError("encoder " + name + ": needs a positive input width and at least one layer");
    std::size_t prev = in_dim;
    for (std::size_t i = 0; i < widths.size(); ++i) {
      if (widths[i] == 0)
        throw ConfigError("encoder " + name + ": zero width at layer " + std::to_string(i));
      add_block(name + "." + std::to_string(i), prev, widths[i], true, true, bn.momentum, bn.eps);
      prev = widths[i];
    }
  }
};

/// Exactly three blocks: (Linear, BN, ReLU) x2 then a bare Linear to K.
class ProjectorModel : public Mlp {
public:
  ProjectorModel() = default;
  ProjectorModel(const std::string &name, std::size_t in_dim, std::size_t hidden, std::size_t out_dim,
                 BatchNormConfig bn = {}) {
    if (in_dim == 0 || hidden == 0 || out_dim == 0)
      throw ConfigError("projector " + name + ": widths must be positive");
    add_block(name + ".0", in_dim, hidden, true, true, bn.momentum, bn.eps);
    add_block(name + ".1", hidden, hidden, true, true, bn.momentum, bn.eps);
    add_block(name + ".2", hidden, out_dim, false, false, bn.momentum, bn.eps);
  }
};

struct ModelConfig {
  std::vector<std::size_t> encoder_widths{256, 256, 128};
  std::size_t projector_hidden = 256; // 0: same as the embedding width
  bool use_projector = true;
  BatchNormConfig bn;
};

/// Encoder plus projector for one modality.
class ModalityNet {
public:
  ModalityNet() = default;
  ModalityNet(const std::string &name, std::size_t in_dim, std::size_t embed_dim, const ModelConfig &cfg)
      : encoder(name + ".enc", in_dim, cfg.encoder_widths, cfg.bn) {
    if (cfg.use_projector) {
      const std::size_t hidden = cfg.projector_hidden ? cfg.projector_hidden : embed_dim;
      projector = ProjectorModel(name + ".proj", encoder.out_dim(), hidden, embed_dim, cfg.bn);
    } else if (encoder.out_dim() != embed_dim) {
      throw ConfigError(name + ": without a projector the embedding width must equal the encoder output width");
    }
  }

  std::size_t in_dim() const { return encoder.in_dim(); }
  std::size_t feature_dim() const { return encoder.out_dim(); }
  std::size_t embed_dim() const { return projector ? projector->out_dim() : encoder.out_dim(); }

  void init(Rng &rng) {
    encoder.init(rng);
    if (projector)
      projector->init(rng);
  }

  Var encode(Binding &bind, Var x, Mode mode) { return encoder.forward(bind, x, mode); }

  Var embed(Binding &bind, Var x, Mode mode) {
    Var f = encode(bind, x, mode);
    return projector ? projector->forward(bind, f, mode) : f;
  }

  Var encode_eval(Binding &bind, Var x) const { return encoder.forward_eval(bind, x); }

  Var embed_eval(Binding &bind, Var x) const {
    Var f = encode_eval(bind, x);
    return projector ? projector->forward_eval(bind, f) : f;
  }

  std::vector<Parameter *> parameters() {
    auto out = encoder.parameters();
    if (projector)
      for (auto *p : projector->parameters())
        out.push_back(p);
    return out;
  }
  std::vector<const Parameter *> parameters() const {
    auto out = encoder.parameters();
    if (projector)
      for (const auto *p : projector->parameters())
        out.push_back(p);
    return out;
  }

  EncoderModel encoder;
  std::optional<ProjectorModel> projector;
};

/// Eval-mode forward of a whole batch without recording gradients.
inline Tensor encode_eval(const ModalityNet &net, const Tensor &x) {
  Graph g;
  Binding bind(g, false);
  return net.encode_eval(bind, g.constant(x)).value();
}

inline Tensor embed_eval(const ModalityNet &net, const Tensor &x) {
  Graph g;
  Binding bind(g, false);
  return net.embed_eval(bind, g.constant(x)).value();
}

} // namespace decur

#endif
