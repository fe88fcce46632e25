#ifndef DECUR_EVALUATION_HPP
#define DECUR_EVALUATION_HPP

// Frozen-encoder diagnostics: linear classification probes and ridge
// recovery of the generative latents from each embedding block.

#include "decur/trainer.hpp"

#include <Eigen/Dense>

#include <array>
#include <set>

namespace decur {

/// Fixed 80/20 split: sample i is held out when hash(i) % 5 == 0.
inline bool is_holdout_index(std::size_t i) { return splitmix64(static_cast<std::uint64_t>(i) ^ 0xd1b54a32d192ed03ull) % 5 == 0; }

struct IndexSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline IndexSplit holdout_split(std::size_t n) {
  IndexSplit s;
  for (std::size_t i = 0; i < n; ++i)
    (is_holdout_index(i) ? s.test : s.train).push_back(i);
  return s;
}

// ---------------------------------------------------------------------------
// Ridge regression
// ---------------------------------------------------------------------------

struct RidgeModel {
  Eigen::MatrixXd weights; // p x q
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd y_mean;

  Eigen::MatrixXd predict(const Eigen::MatrixXd &X) const {
    return ((X.rowwise() - x_mean) * weights).rowwise() + y_mean;
  }
};

inline Eigen::MatrixXd to_eigen(const Tensor &t) { return detail::as_mat(t); }

/// Centred closed-form ridge: W = (Xc^T Xc + lambda I)^-1 Xc^T Yc. The ridge
/// term keeps the system positive definite, so rank deficiency never fails.
inline RidgeModel ridge_fit(const Eigen::MatrixXd &X, const Eigen::MatrixXd &Y, double lambda) {
  if (X.rows() != Y.rows() || X.rows() < 2)
    throw ShapeError("ridge_fit: need matching row counts >= 2");
  if (!(lambda > 0.0))
    throw ConfigError("ridge_fit: lambda must be positive");
  RidgeModel m;
  m.x_mean = X.colwise().mean();
  m.y_mean = Y.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - m.x_mean;
  const Eigen::MatrixXd Yc = Y.rowwise() - m.y_mean;
  Eigen::MatrixXd A = Xc.transpose() * Xc;
  A.diagonal().array() += lambda;
  m.weights = A.ldlt().solve(Xc.transpose() * Yc);
  return m;
}

/// Coefficient of determination averaged over output columns.
inline double r2_score(const Eigen::MatrixXd &Y, const Eigen::MatrixXd &P) {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < Y.cols(); ++j) {
    const double mean = Y.col(j).mean();
    const double sst = (Y.col(j).array() - mean).square().sum();
    const double sse = (Y.col(j) - P.col(j)).squaredNorm();
    acc += sst > 0.0 ? 1.0 - sse / sst : 0.0;
  }
  return acc / static_cast<double>(Y.cols());
}

/// Fits on `train` rows and scores on `test` rows.
inline double ridge_r2(const Tensor &X, const Tensor &Y, const IndexSplit &split, double lambda) {
  const auto fit = ridge_fit(to_eigen(take_rows(X, split.train)), to_eigen(take_rows(Y, split.train)), lambda);
  const Eigen::MatrixXd Yt = to_eigen(take_rows(Y, split.test));
  return r2_score(Yt, fit.predict(to_eigen(take_rows(X, split.test))));
}

// ---------------------------------------------------------------------------
// Latent recovery
// ---------------------------------------------------------------------------

enum class EmbeddingBlock { m1_common, m1_unique, m2_common, m2_unique };
enum class LatentGroup { shared, u1, u2 };

inline const char *block_name(EmbeddingBlock b) {
  constexpr const char *n[] = {"m1_common", "m1_unique", "m2_common", "m2_unique"};
  return n[static_cast<int>(b)];
}
inline const char *group_name(LatentGroup g) {
  constexpr const char *n[] = {"z_s", "u1", "u2"};
  return n[static_cast<int>(g)];
}

struct RecoveryReport {
  std::array<std::array<double, 3>, 4> r2{};
  std::size_t n_train = 0, n_test = 0;

  double at(EmbeddingBlock b, LatentGroup g) const { return r2[static_cast<int>(b)][static_cast<int>(g)]; }

  std::string to_csv_rows(const std::string &tag) const {
    std::ostringstream os;
    os << std::setprecision(10);
    for (int b = 0; b < 4; ++b)
      for (int g = 0; g < 3; ++g)
        os << tag << ',' << block_name(static_cast<EmbeddingBlock>(b)) << ','
           << group_name(static_cast<LatentGroup>(g)) << ',' << r2[b][g] << '\n';
    return os.str();
  }
};

inline constexpr double kRecoveryRidge = 1e-3;

/// Ridge R^2 from each embedding block to each latent group on the held-out
/// 20%. When Kc == K the unique blocks are empty and report 0.
inline RecoveryReport latent_recovery(const Tensor &z1, const Tensor &z2, const GroundTruth &truth,
                                      const DimSplit &split, double ridge = kRecoveryRidge) {
  split.validate();
  if (z1.cols() != split.K || z2.cols() != split.K)
    throw ShapeError("latent_recovery: embeddings do not match the split width");
  if (truth.z_s.numel() == 0)
    throw ConfigError("latent_recovery: dataset carries no ground-truth latents");
  const auto idx = holdout_split(z1.rows());
  RecoveryReport rep;
  rep.n_train = idx.train.size();
  rep.n_test = idx.test.size();
  const Tensor *groups[3] = {&truth.z_s, &truth.u1, &truth.u2};
  for (int b = 0; b < 4; ++b) {
    const Tensor &z = b < 2 ? z1 : z2;
    const bool common = b % 2 == 0;
    if (!common && split.Ku() == 0)
      continue;
    const Tensor X = common ? column_block(z, 0, split.Kc) : column_block(z, split.Kc, split.K);
    for (int g = 0; g < 3; ++g)
      rep.r2[b][g] = ridge_r2(X, *groups[g], idx, ridge);
  }
  return rep;
}

inline RecoveryReport latent_recovery(const DecurModel &model, const PairedDataset &ds, const DimSplit &split,
                                      double ridge = kRecoveryRidge) {
  return latent_recovery(embed_eval(model.m1, ds.observed.x1), embed_eval(model.m2, ds.observed.x2), ds.truth, split,
                         ridge);
}

// ---------------------------------------------------------------------------
// Linear probe
// ---------------------------------------------------------------------------

enum class ProbeMode { multimodal, m1_only, m2_only };

inline const char *probe_mode_name(ProbeMode m) {
  switch (m) {
  case ProbeMode::multimodal: return "multimodal";
  case ProbeMode::m1_only: return "m1_only";
  case ProbeMode::m2_only: return "m2_only";
  }
  return "?";
}

struct ProbeConfig {
  double lr = 0.5;
  double momentum = 0.9;
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  std::vector<std::size_t> milestones{60, 80};
  double decay = 0.1;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0.0;
  std::vector<double> per_class_accuracy;
  std::vector<std::vector<std::size_t>> confusion; // [true][pred] on the test split
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Frozen features for a probe mode: encoder outputs, concatenated for the
/// multimodal probe.
inline Tensor probe_features(const DecurModel &model, const ObservedPair &data, ProbeMode mode) {
  switch (mode) {
  case ProbeMode::m1_only: return encode_eval(model.m1, data.x1);
  case ProbeMode::m2_only: return encode_eval(model.m2, data.x2);
  case ProbeMode::multimodal: return hconcat(encode_eval(model.m1, data.x1), encode_eval(model.m2, data.x2));
  }
  return {};
}

/// Softmax regression on fixed features with momentum SGD and step decay.
/// Features are standardised with training-split statistics.
inline ProbeResult train_linear_probe(const Tensor &features, const std::vector<std::int32_t> &labels,
                                      std::size_t num_classes, const ProbeConfig &cfg) {
  if (features.rows() != labels.size())
    throw ShapeError("linear_probe: feature rows and labels differ");
  const auto idx = holdout_split(labels.size());
  auto classes_in = [&](const std::vector<std::size_t> &rows) {
    std::set<std::int32_t> s;
    for (auto i : rows)
      s.insert(labels[i]);
    return s.size();
  };
  if (idx.train.empty() || idx.test.empty() || classes_in(idx.train) < 2 || classes_in(idx.test) < 2)
    throw std::invalid_argument("linear_probe: degenerate split, need at least two classes in train and test");
  for (auto l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes)
      throw std::invalid_argument("linear_probe: label out of range");

  const Eigen::MatrixXd all = to_eigen(features);
  Eigen::MatrixXd Xtr(idx.train.size(), all.cols()), Xte(idx.test.size(), all.cols());
  for (std::size_t i = 0; i < idx.train.size(); ++i)
    Xtr.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(idx.train[i]));
  for (std::size_t i = 0; i < idx.test.size(); ++i)
    Xte.row(static_cast<Eigen::Index>(i)) = all.row(static_cast<Eigen::Index>(idx.test[i]));
  const Eigen::RowVectorXd mu = Xtr.colwise().mean();
  Eigen::RowVectorXd sd = ((Xtr.rowwise() - mu).array().square().colwise().mean()).sqrt();
  for (Eigen::Index j = 0; j < sd.size(); ++j)
    sd(j) = sd(j) > 1e-12 ? sd(j) : 1.0;
  Xtr = (Xtr.rowwise() - mu).array().rowwise() / sd.array();
  Xte = (Xte.rowwise() - mu).array().rowwise() / sd.array();

  const auto C = static_cast<Eigen::Index>(num_classes);
  const Eigen::Index D = Xtr.cols();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(D, C), VW = W;
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(C), Vb = b;

  Rng rng = make_rng(cfg.seed, {0x9b0be});
  std::vector<std::size_t> order(idx.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double lr = cfg.lr;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    if (std::find(cfg.milestones.begin(), cfg.milestones.end(), epoch) != cfg.milestones.end())
      lr *= cfg.decay;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t s = 0; s < order.size(); s += cfg.batch_size) {
      const std::size_t e = std::min(order.size(), s + cfg.batch_size);
      const auto B = static_cast<Eigen::Index>(e - s);
      Eigen::MatrixXd Xb(B, D);
      Eigen::MatrixXd Yb = Eigen::MatrixXd::Zero(B, C);
      for (Eigen::Index r = 0; r < B; ++r) {
        const auto row = order[s + static_cast<std::size_t>(r)];
        Xb.row(r) = Xtr.row(static_cast<Eigen::Index>(row));
        Yb(r, labels[idx.train[row]]) = 1.0;
      }
      Eigen::MatrixXd logits = (Xb * W).rowwise() + b;
      for (Eigen::Index r = 0; r < B; ++r) {
        const double mx = logits.row(r).maxCoeff();
        logits.row(r) = (logits.row(r).array() - mx).exp();
        logits.row(r) /= logits.row(r).sum();
      }
      const Eigen::MatrixXd G = (logits - Yb) / static_cast<double>(B);
      VW = cfg.momentum * VW + Xb.transpose() * G;
      Vb = cfg.momentum * Vb + G.colwise().sum();
      W -= lr * VW;
      b -= lr * Vb;
    }
  }

  ProbeResult res;
  res.n_train = idx.train.size();
  res.n_test = idx.test.size();
  res.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  const Eigen::MatrixXd logits = (Xte * W).rowwise() + b;
  std::size_t correct = 0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    Eigen::Index pred = 0;
    logits.row(r).maxCoeff(&pred);
    const auto truth = static_cast<std::size_t>(labels[idx.test[static_cast<std::size_t>(r)]]);
    ++res.confusion[truth][static_cast<std::size_t>(pred)];
    correct += truth == static_cast<std::size_t>(pred);
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(res.n_test);
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t tot = 0;
    for (auto v : res.confusion[c])
      tot += v;
    res.per_class_accuracy.push_back(tot ? static_cast<double>(res.confusion[c][c]) / static_cast<double>(tot) : 0.0);
  }
  return res;
}

inline ProbeResult linear_probe(const DecurModel &model, const PairedDataset &ds, ProbeMode mode,
                                const ProbeConfig &cfg = {}) {
  return train_linear_probe(probe_features(model, ds.observed, mode), ds.truth.labels, ds.truth.num_classes(), cfg);
}

} // namespace decur

#endif
