#ifndef DECUR_EXPLAIN_HPP
#define DECUR_EXPLAIN_HPP

// Explainability: per-dimension alignment histograms, input-space Integrated
// Gradients against common/unique targets, saliency overlap and spectral
// importance statistics, and embedding export.

#include "decur/evaluation.hpp"

#include <fstream>

namespace decur {

// ---------------------------------------------------------------------------
// Alignment histogram
// ---------------------------------------------------------------------------

struct AlignmentHistogram {
  std::vector<double> edges;  // bins + 1 values over [0, 1]
  std::vector<std::size_t> counts;
  std::vector<double> losses; // raw L_i per dimension, unclipped

  double mean_loss(std::size_t d0, std::size_t d1) const {
    if (d1 <= d0 || d1 > losses.size())
      throw std::out_of_range("AlignmentHistogram::mean_loss: bad range");
    double s = 0.0;
    for (std::size_t i = d0; i < d1; ++i)
      s += losses[i];
    return s / static_cast<double>(d1 - d0);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(10) << "bin_left,bin_right,count\n";
    for (std::size_t b = 0; b < counts.size(); ++b)
      os << edges[b] << ',' << edges[b + 1] << ',' << counts[b] << '\n';
    return os.str();
  }

  std::string losses_csv(const DimSplit &split) const {
    std::ostringstream os;
    os << std::setprecision(17) << "dim,role,loss\n";
    for (std::size_t i = 0; i < losses.size(); ++i)
      os << i << ',' << (i < split.Kc ? "common" : "unique") << ',' << losses[i] << '\n';
    return os.str();
  }
};

/// L_i = (1 - C_ii)^2 of the cross-modal correlation of the standardised
/// embeddings, binned over [0, 1] (values outside are clipped for binning).
inline AlignmentHistogram alignment_histogram(const Tensor &z1, const Tensor &z2, std::size_t bins = 20) {
  if (z1.shape != z2.shape || !z1.is_matrix())
    throw ShapeError("alignment_histogram: embeddings must be matching N x K matrices");
  if (z1.rows() < 2)
    throw BatchTooSmallError("alignment_histogram: need N >= 2");
  if (bins == 0)
    throw ConfigError("alignment_histogram: bins must be >= 1");
  const Tensor C = cross_correlation(standardize(z1), standardize(z2));
  AlignmentHistogram h;
  h.counts.assign(bins, 0);
  for (std::size_t b = 0; b <= bins; ++b)
    h.edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
  for (std::size_t i = 0; i < C.rows(); ++i) {
    const double l = (1.0 - C(i, i)) * (1.0 - C(i, i));
    h.losses.push_back(l);
    const double c = std::clamp(l, 0.0, 1.0);
    ++h.counts[std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)))];
  }
  return h;
}

// ---------------------------------------------------------------------------
// Integrated Gradients
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultIgSteps = 128;

enum class DimRole { common, unique };

inline const char *role_name(DimRole r) { return r == DimRole::common ? "common" : "unique"; }

/// Maps an R x d input batch to an R x 1 column of scalar outputs, one per
/// row, with rows independent of each other.
using RowScalarFn = std::function<Var(Graph &, Var)>;

struct AttributionMap {
  std::vector<double> values;
  DimRole target = DimRole::common;
  std::size_t ig_steps = 0;
  double f_input = 0.0;
  double f_baseline = 0.0;
  double residual = 0.0; // |sum(values) - (f_input - f_baseline)|

  double delta() const { return f_input - f_baseline; }
};

namespace detail {

inline Tensor eval_rows(const RowScalarFn &f, const Tensor &X) {
  Graph g;
  Tensor out = f(g, g.constant(X)).value();
  if (out.rows() != X.rows() || out.cols() != 1)
    throw ShapeError("integrated_gradients: target function must return an R x 1 column");
  return out;
}

} // namespace detail

/// Right-Riemann Integrated Gradients for every row of X at once:
///   att_i = (x_i - x'_i) (1/m) sum_{k=1..m} dF(x' + (k/m)(x - x'))/dx_i
/// `baseline` is a single row (empty for the zero baseline).
inline std::vector<AttributionMap> integrated_gradients(const RowScalarFn &f, const Tensor &X, std::size_t steps,
                                                        const Tensor &baseline = {}, DimRole target = DimRole::common) {
  if (!X.is_matrix())
    throw ShapeError("integrated_gradients: input must be an R x d matrix");
  if (steps < 8)
    throw ConfigError("integrated_gradients: steps must be >= 8");
  const std::size_t R = X.rows(), d = X.cols();
  Tensor base = baseline.numel() ? baseline : Tensor({1, d});
  if (base.numel() != d)
    throw ShapeError("integrated_gradients: baseline width " + std::to_string(base.numel()) + " != " +
                     std::to_string(d));

  Tensor path({R * steps, d});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t k = 1; k <= steps; ++k) {
      const double a = static_cast<double>(k) / static_cast<double>(steps);
      for (std::size_t j = 0; j < d; ++j)
        path.data[((r * steps) + k - 1) * d + j] = base.data[j] + a * (X(r, j) - base.data[j]);
    }

  Graph g;
  Var in = g.leaf(std::move(path), true);
  g.backward(sum(f(g, in)));
  const Tensor grads = g.grad(in);

  Tensor both({2 * R, d});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t j = 0; j < d; ++j) {
      both.data[r * d + j] = X(r, j);
      both.data[(R + r) * d + j] = base.data[j];
    }
  const Tensor fv = detail::eval_rows(f, both);

  std::vector<AttributionMap> out(R);
  for (std::size_t r = 0; r < R; ++r) {
    auto &m = out[r];
    m.target = target;
    m.ig_steps = steps;
    m.values.assign(d, 0.0);
    for (std::size_t k = 0; k < steps; ++k) {
      const double *gk = grads.data.data() + (r * steps + k) * d;
      for (std::size_t j = 0; j < d; ++j) {
        if (!std::isfinite(gk[j]))
          throw NumericFailure("integrated_gradients: non-finite gradient at path step " + std::to_string(k + 1) +
                               " of sample " + std::to_string(r));
        m.values[j] += gk[j];
      }
    }
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      m.values[j] *= (X(r, j) - base.data[j]) / static_cast<double>(steps);
      total += m.values[j];
    }
    m.f_input = fv.data[r];
    m.f_baseline = fv.data[R + r];
    m.residual = std::abs(total - m.delta());
  }
  return out;
}

/// Per-dimension affine applied to embeddings before the target mean, so the
/// target is the mean of standardised common (or unique) dimensions.
struct EmbeddingStats {
  Tensor mean;    // 1 x K
  Tensor inv_std; // 1 x K

  static EmbeddingStats of(const Tensor &z) {
    const std::size_t N = z.rows(), K = z.cols();
    EmbeddingStats s{Tensor({1, K}), Tensor({1, K})};
    for (std::size_t j = 0; j < K; ++j) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < N; ++i)
        m += z(i, j);
      m /= static_cast<double>(N);
      for (std::size_t i = 0; i < N; ++i)
        v += (z(i, j) - m) * (z(i, j) - m);
      v /= static_cast<double>(N);
      s.mean.data[j] = m;
      s.inv_std.data[j] = 1.0 / std::sqrt(v + kStandardizeEps);
    }
    return s;
  }
};

/// F(x) = mean of the target block of the eval-mode embedding of one modality.
inline RowScalarFn embedding_target(const ModalityNet &net, DimRole role, const DimSplit &split,
                                    std::optional<EmbeddingStats> stats = std::nullopt) {
  split.validate();
  if (net.embed_dim() != split.K)
    throw ShapeError("embedding_target: model embeds to " + std::to_string(net.embed_dim()) + " dims, split has K=" +
                     std::to_string(split.K));
  const std::size_t c0 = role == DimRole::common ? 0 : split.Kc;
  const std::size_t c1 = role == DimRole::common ? split.Kc : split.K;
  if (c1 == c0)
    throw ConfigError("embedding_target: the unique block is empty (Kc == K)");
  return [&net, c0, c1, stats](Graph &g, Var x) {
    Binding bind(g, false);
    Var z = net.embed_eval(bind, x);
    if (stats) {
      Tensor shift({1, z.cols()});
      for (std::size_t j = 0; j < z.cols(); ++j)
        shift.data[j] = -stats->mean.data[j];
      z = mul_row(add_row(z, g.constant(shift)), g.constant(stats->inv_std));
    }
    return mean_axis(slice(z, 0, z.rows(), c0, c1), 1);
  };
}

// ---------------------------------------------------------------------------
// Spectral saliency
// ---------------------------------------------------------------------------

/// Mean |attribution| per input coordinate over the rows of X, normalised to
/// sum 1. Samples are processed in chunks; the accumulation order is fixed.
inline std::vector<double> spectral_saliency(const RowScalarFn &f, const Tensor &X, std::size_t steps = kDefaultIgSteps,
                                             std::size_t chunk = 16) {
  if (X.rows() == 0)
    throw std::invalid_argument("spectral_saliency: empty dataset");
  const std::size_t d = X.cols();
  std::vector<double> acc(d, 0.0);
  for (std::size_t r0 = 0; r0 < X.rows(); r0 += chunk) {
    std::vector<std::size_t> rows;
    for (std::size_t r = r0; r < std::min(X.rows(), r0 + chunk); ++r)
      rows.push_back(r);
    for (const auto &m : integrated_gradients(f, take_rows(X, rows), steps))
      for (std::size_t j = 0; j < d; ++j)
        acc[j] += std::abs(m.values[j]);
  }
  double total = 0.0;
  for (double v : acc)
    total += v;
  if (!(total > 0.0))
    throw NumericFailure("spectral_saliency: all attributions are zero");
  for (auto &v : acc)
    v /= total;
  return acc;
}

inline std::string importance_csv(const std::vector<double> &imp) {
  std::ostringstream os;
  os << std::setprecision(17) << "feature_index,importance\n";
  for (std::size_t i = 0; i < imp.size(); ++i)
    os << i << ',' << imp[i] << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Saliency overlap
// ---------------------------------------------------------------------------

/// Min-max normalisation to [0, 1]; a constant map becomes all zeros.
inline std::vector<double> minmax_normalize(std::span<const double> v) {
  if (v.empty())
    return {};
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  std::vector<double> out(v.size(), 0.0);
  if (*hi > *lo)
    for (std::size_t i = 0; i < v.size(); ++i)
      out[i] = (v[i] - *lo) / (*hi - *lo);
  return out;
}

/// Linear interpolation of v onto n evenly spaced points over the same span.
inline std::vector<double> resample_linear(std::span<const double> v, std::size_t n) {
  if (v.empty() || n == 0)
    throw std::invalid_argument("resample_linear: empty input or output");
  if (n == v.size())
    return {v.begin(), v.end()};
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = n == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(v.size() - 1) / static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const auto hi = std::min(lo + 1, v.size() - 1);
    const double t = pos - static_cast<double>(lo);
    out[i] = (1.0 - t) * v[lo] + t * v[hi];
  }
  return out;
}

/// s = sum_i n(|a|)_i n(|b|)_i after resampling both maps to the shorter length.
inline double overlap_raw(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = std::min(a.size(), b.size());
  auto mag = [n](std::span<const double> v) {
    std::vector<double> m(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      m[i] = std::abs(v[i]);
    return minmax_normalize(resample_linear(m, n));
  };
  const auto na = mag(a), nb = mag(b);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    s += na[i] * nb[i];
  return s;
}

enum class OverlapNormalization { per_dataset, per_sample };

struct OverlapStat {
  std::vector<double> common_raw, unique_raw;     // s per sample
  std::vector<double> common_score, unique_score; // normalised to [0, 1]

  static double mean(const std::vector<double> &v) {
    double s = 0.0;
    for (double x : v)
      s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  }
  double mean_common() const { return mean(common_score); }
  double mean_unique() const { return mean(unique_score); }

  static std::vector<std::size_t> histogram(const std::vector<double> &scores, std::size_t bins) {
    std::vector<std::size_t> h(bins, 0);
    for (double s : scores)
      ++h[std::min(bins - 1, static_cast<std::size_t>(std::clamp(s, 0.0, 1.0) * static_cast<double>(bins)))];
    return h;
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << std::setprecision(17) << "sample,common_raw,unique_raw,common_score,unique_score\n";
    for (std::size_t i = 0; i < common_raw.size(); ++i)
      os << i << ',' << common_raw[i] << ',' << unique_raw[i] << ',' << common_score[i] << ',' << unique_score[i]
         << '\n';
    return os.str();
  }
};

inline constexpr double kOverlapLogEps = 1e-12;

/// Per-dataset mode: log(s + eps), then one min-max over the common and unique
/// scores of all samples together, so the two histograms share a scale.
/// Per-sample mode: s divided by the map length, which already lies in [0, 1].
inline OverlapStat saliency_overlap(const std::vector<AttributionMap> &att1_c, const std::vector<AttributionMap> &att2_c,
                                    const std::vector<AttributionMap> &att1_u, const std::vector<AttributionMap> &att2_u,
                                    OverlapNormalization norm = OverlapNormalization::per_dataset) {
  const std::size_t n = att1_c.size();
  if (n == 0)
    throw std::invalid_argument("saliency_overlap: empty dataset");
  if (att2_c.size() != n || att1_u.size() != n || att2_u.size() != n)
    throw ShapeError("saliency_overlap: attribution lists differ in length");
  OverlapStat st;
  for (std::size_t i = 0; i < n; ++i) {
    st.common_raw.push_back(overlap_raw(att1_c[i].values, att2_c[i].values));
    st.unique_raw.push_back(overlap_raw(att1_u[i].values, att2_u[i].values));
  }
  if (norm == OverlapNormalization::per_sample) {
    const auto len = static_cast<double>(std::min(att1_c[0].values.size(), att2_c[0].values.size()));
    for (std::size_t i = 0; i < n; ++i) {
      st.common_score.push_back(st.common_raw[i] / len);
      st.unique_score.push_back(st.unique_raw[i] / len);
    }
    return st;
  }
  std::vector<double> logs;
  for (const auto *raw : {&st.common_raw, &st.unique_raw})
    for (double r : *raw)
      logs.push_back(std::log(r + kOverlapLogEps));
  const auto scaled = minmax_normalize(logs);
  st.common_score.assign(scaled.begin(), scaled.begin() + static_cast<std::ptrdiff_t>(n));
  st.unique_score.assign(scaled.begin() + static_cast<std::ptrdiff_t>(n), scaled.end());
  return st;
}

// ---------------------------------------------------------------------------
// Embedding export
// ---------------------------------------------------------------------------

/// One row per (modality, dimension): the K x N transposed embeddings of both
/// modalities with a role column, for external t-SNE/PCA tools.
inline std::string embeddings_csv(const Tensor &z1, const Tensor &z2, const DimSplit &split) {
  if (z1.shape != z2.shape || z1.cols() != split.K)
    throw ShapeError("export_embeddings: embeddings must both be N x K");
  std::ostringstream os;
  os << std::setprecision(9) << "modality,dim,role";
  for (std::size_t i = 0; i < z1.rows(); ++i)
    os << ",s" << i;
  os << '\n';
  for (int m = 1; m <= 2; ++m) {
    const Tensor &z = m == 1 ? z1 : z2;
    for (std::size_t k = 0; k < split.K; ++k) {
      os << m << ',' << k << ',' << (k < split.Kc ? "common" : "unique");
      for (std::size_t i = 0; i < z.rows(); ++i)
        os << ',' << static_cast<float>(z(i, k));
      os << '\n';
    }
  }
  return os.str();
}

inline void export_embeddings(const DecurModel &model, const ObservedPair &data, const DimSplit &split,
                              const std::filesystem::path &path) {
  write_text_file(path, embeddings_csv(embed_eval(model.m1, data.x1), embed_eval(model.m2, data.x2), split));
}

} // namespace decur

#endif
