#ifndef DECUR_OBJECTIVE_HPP
#define DECUR_OBJECTIVE_HPP

// Redundancy-reduction losses over cross-correlation matrices of
// batch-standardised embeddings, and the decoupled common/unique objective
// built from them.

#include "decur/autodiff.hpp"

#include <cmath>
#include <optional>
#include <string>

namespace decur {

inline constexpr double kDefaultLambda = 0.0051;
inline constexpr double kStandardizeEps = 1e-5;

/// Embedding dimensions [0, Kc) are common, [Kc, K) unique.
struct DimSplit {
  std::size_t K = 128;
  std::size_t Kc = 96;

  DimSplit() = default;
  DimSplit(std::size_t k, std::size_t kc) : K(k), Kc(kc) { validate(); }

  static DimSplit from_ratio(std::size_t k, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0))
      throw ConfigError("common-dimension ratio must be in (0, 1], got " + std::to_string(ratio));
    return DimSplit(k, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(k))));
  }

  std::size_t Ku() const { return K - Kc; }
  double ratio() const { return static_cast<double>(Kc) / static_cast<double>(K); }

  void validate() const {
    if (K == 0 || Kc == 0 || Kc > K)
      throw ConfigError("invalid dimension split: K=" + std::to_string(K) + " Kc=" + std::to_string(Kc) +
                        " (need 1 <= Kc <= K)");
  }
};

struct LossWeights {
  double lambda_c = kDefaultLambda;
  double lambda_u = kDefaultLambda;
  double lambda_m1 = kDefaultLambda;
  double lambda_m2 = kDefaultLambda;

  void validate() const {
    if (!(lambda_c > 0.0 && lambda_u > 0.0 && lambda_m1 > 0.0 && lambda_m2 > 0.0))
      throw ConfigError("loss weights must all be positive");
  }
};

/// Unweighted on-diagonal and off-diagonal sums of one loss term.
struct TermParts {
  double on_diag = 0.0;
  double off_diag = 0.0;
};

struct LossBreakdown {
  double l_common = 0.0;
  double l_unique = 0.0;
  double l_m1 = 0.0;
  double l_m2 = 0.0;
  double total = 0.0;
  TermParts common, unique, m1, m2;
};

/// Which terms of the objective are active; the ablation variants switch
/// groups off.
struct LossTerms {
  bool intra = true;
  bool common = true;
  bool unique = true;
};

// ---------------------------------------------------------------------------
// Graph-level building blocks
// ---------------------------------------------------------------------------

struct TermVars {
  Var on;
  Var off;
  Var total;
};

inline void check_standardized(const Tensor &z, const char *who, double tol = 1e-6) {
  const std::size_t N = z.rows(), C = z.cols();
  for (std::size_t j = 0; j < C; ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      m += z(i, j);
    m /= static_cast<double>(N);
    if (std::abs(m) >= tol)
      throw std::invalid_argument(std::string(who) + ": input column " + std::to_string(j) +
                                  " is not batch-standardized (mean " + std::to_string(m) + ")");
  }
}

/// C = Za^T Zb / N for batch-standardised Za, Zb (N x K each).
inline Var cross_correlation(Var za, Var zb) {
  const auto &A = za.value();
  const auto &B = zb.value();
  if (!A.is_matrix() || A.shape != B.shape)
    throw ShapeError("cross_correlation: shape mismatch " + shape_str(A.shape) + " vs " + shape_str(B.shape));
  if (A.rows() < 2)
    throw ShapeError("cross_correlation: need at least 2 samples");
  check_standardized(A, "cross_correlation");
  check_standardized(B, "cross_correlation");
  return scalar_mul(matmul(transpose(za), zb), 1.0 / static_cast<double>(A.rows()));
}

namespace detail {
inline void require_square(const char *who, Var c) {
  const auto &C = c.value();
  if (!C.is_matrix() || C.rows() != C.cols())
    throw ShapeError(std::string(who) + ": expected a square matrix, got " + shape_str(C.shape));
}

inline Var off_diagonal_sq(Var c, Var d) { return sub(sum(square(c)), sum(square(d))); }
} // namespace detail

/// sum_i (1 - C_ii)^2 + lambda * sum_{i != j} C_ij^2
inline TermVars invariance_term(Var c, double lambda) {
  detail::require_square("loss_invariance", c);
  Var d = diag(c);
  Var on = sum(square(add_scalar(scalar_mul(d, -1.0), 1.0)));
  Var off = detail::off_diagonal_sq(c, d);
  return {on, off, add(on, scalar_mul(off, lambda))};
}

/// sum_i C_ii^2 + lambda * sum_{i != j} C_ij^2
inline TermVars decorrelation_term(Var c, double lambda) {
  detail::require_square("loss_decorrelation", c);
  Var d = diag(c);
  Var on = sum(square(d));
  Var off = detail::off_diagonal_sq(c, d);
  return {on, off, add(on, scalar_mul(off, lambda))};
}

inline Var loss_invariance(Var c, double lambda) { return invariance_term(c, lambda).total; }
inline Var loss_decorrelation(Var c, double lambda) { return decorrelation_term(c, lambda).total; }

inline Var standardize(Var z) { return batch_standardize(z, kStandardizeEps); }

/// Cross-modal Barlow Twins: invariance loss on the full-width correlation.
inline Var barlow_twins_loss(Var za, Var zb, double lambda = kDefaultLambda) {
  return loss_invariance(cross_correlation(standardize(za), standardize(zb)), lambda);
}

struct DecurLossVars {
  Var total;
  LossBreakdown values;
};

/// The decoupled objective over two augmented views per modality. The
/// cross-modal matrix uses the first view of each modality only; its
/// off-diagonal (common x unique) blocks appear in no term.
inline DecurLossVars decur_loss(Var z1a, Var z1b, Var z2a, Var z2b, const DimSplit &split,
                                const LossWeights &w, const LossTerms &terms = {}) {
  const auto &s = z1a.value().shape;
  if (z1b.value().shape != s || z2a.value().shape != s || z2b.value().shape != s)
    throw ShapeError("decur_loss: the four embedding batches must share a shape, got " + shape_str(s) + ", " +
                     shape_str(z1b.value().shape) + ", " + shape_str(z2a.value().shape) + ", " +
                     shape_str(z2b.value().shape));
  split.validate();
  if (split.K != z1a.cols())
    throw ShapeError("decur_loss: split K=" + std::to_string(split.K) + " but embeddings have " +
                     std::to_string(z1a.cols()) + " columns");
  w.validate();

  Graph &g = *z1a.graph;
  DecurLossVars out{g.constant(Tensor::scalar(0.0)), {}};
  auto accumulate = [&](const TermVars &t, double &slot, TermParts &parts) {
    out.total = add(out.total, t.total);
    slot = t.total.value().item();
    parts = {t.on.value().item(), t.off.value().item()};
  };

  Var s1a = standardize(z1a);
  Var s2a = standardize(z2a);
  if (terms.intra) {
    Var s1b = standardize(z1b);
    Var s2b = standardize(z2b);
    accumulate(invariance_term(cross_correlation(s1a, s1b), w.lambda_m1), out.values.l_m1, out.values.m1);
    accumulate(invariance_term(cross_correlation(s2a, s2b), w.lambda_m2), out.values.l_m2, out.values.m2);
  }
  if (terms.common || terms.unique) {
    Var cm = cross_correlation(s1a, s2a);
    const std::size_t K = split.K, Kc = split.Kc;
    if (terms.common)
      accumulate(invariance_term(slice(cm, 0, Kc, 0, Kc), w.lambda_c), out.values.l_common, out.values.common);
    if (terms.unique && Kc < K)
      accumulate(decorrelation_term(slice(cm, Kc, K, Kc, K), w.lambda_u), out.values.l_unique,
                 out.values.unique);
  }
  out.values.total = out.values.l_common + out.values.l_unique + out.values.l_m1 + out.values.l_m2;
  return out;
}

// ---------------------------------------------------------------------------
// Value-level conveniences (no gradient)
// ---------------------------------------------------------------------------

inline Tensor cross_correlation(const Tensor &za, const Tensor &zb) {
  Graph g;
  return cross_correlation(g.constant(za), g.constant(zb)).value();
}

inline double loss_invariance(const Tensor &c, double lambda) {
  Graph g;
  return loss_invariance(g.constant(c), lambda).value().item();
}

inline double loss_decorrelation(const Tensor &c, double lambda) {
  Graph g;
  return loss_decorrelation(g.constant(c), lambda).value().item();
}

inline double barlow_twins_loss(const Tensor &za, const Tensor &zb, double lambda = kDefaultLambda) {
  Graph g;
  return barlow_twins_loss(g.constant(za), g.constant(zb), lambda).value().item();
}

inline LossBreakdown decur_loss(const Tensor &z1a, const Tensor &z1b, const Tensor &z2a, const Tensor &z2b,
                                const DimSplit &split, const LossWeights &w = {}, const LossTerms &terms = {}) {
  Graph g;
  return decur_loss(g.constant(z1a), g.constant(z1b), g.constant(z2a), g.constant(z2b), split, w, terms).values;
}

/// Per-column standardisation without gradient; eps as in the loss path.
inline Tensor standardize(const Tensor &z, double eps = kStandardizeEps) {
  Graph g;
  return batch_standardize(g.constant(z), eps).value();
}

} // namespace decur

#endif
