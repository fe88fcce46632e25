#ifndef DECUR_SYNTHDATA_HPP
#define DECUR_SYNTHDATA_HPP

// Paired two-modality data generated from ground-truth latents: a shared
// latent z_s seen by both modalities and a unique latent per modality.

#include "decur/io.hpp"
#include "decur/random.hpp"
#include "decur/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace decur {

enum class MixingKind {
  random_mlp, // fixed random tanh MLP of [z_s, u_m]
  identity,   // X_m = [z_s, u_m, 0...]
  planted,    // modality 1: u1 drives only coordinates [0, planted_block); z_s drives the rest
  coregistered, // both: z_s drives [0, d_x - 2B); u1 drives [d_x - 2B, d_x - B) of X1 and
                // u2 drives [d_x - B, d_x) of X2; the other band is noise (B = planted_block)
};

inline const char *mixing_name(MixingKind k) {
  switch (k) {
  case MixingKind::random_mlp: return "random_mlp";
  case MixingKind::identity: return "identity";
  case MixingKind::planted: return "planted";
  case MixingKind::coregistered: return "coregistered";
  }
  return "?";
}

inline MixingKind parse_mixing(const std::string &s) {
  if (s == "random_mlp") return MixingKind::random_mlp;
  if (s == "identity") return MixingKind::identity;
  if (s == "planted") return MixingKind::planted;
  if (s == "coregistered") return MixingKind::coregistered;
  throw ConfigError("unknown mixing kind '" + s + "'");
}

struct SyntheticSpec {
  std::size_t d_shared = 8;
  std::size_t d_u1 = 4;
  std::size_t d_u2 = 4;
  std::size_t d_x1 = 64;
  std::size_t d_x2 = 64;
  std::size_t map_depth = 2;
  double map_gain = 1.0;
  double noise_std = 0.05;
  std::uint64_t seed = 0;
  MixingKind mixing = MixingKind::random_mlp;
  std::size_t planted_block = 4;

  void validate() const {
    if (d_shared == 0 || d_u1 == 0 || d_u2 == 0 || d_x1 == 0 || d_x2 == 0 || map_depth == 0)
      throw ConfigError("synthetic spec: all dimensions and map_depth must be >= 1");
    if (d_x1 < d_shared + d_u1 || d_x2 < d_shared + d_u2)
      throw ConfigError("synthetic spec: observed dims must be >= d_shared + d_u (injective mixing)");
    if (!(noise_std >= 0.0) || !(map_gain > 0.0))
      throw ConfigError("synthetic spec: noise_std must be >= 0 and map_gain > 0");
    if (mixing == MixingKind::planted &&
        (planted_block < d_u1 || d_x1 - planted_block < d_shared))
      throw ConfigError("synthetic spec: planted block must hold u1 and leave room for z_s");
    if (mixing == MixingKind::coregistered &&
        (d_x1 != d_x2 || planted_block < std::max(d_u1, d_u2) || d_x1 < d_shared + 2 * planted_block))
      throw ConfigError("synthetic spec: coregistered mixing needs d_x1 == d_x2, a band of at least d_u "
                        "coordinates and room for z_s next to both bands");
  }
};

/// What training code may see.
struct ObservedPair {
  Tensor x1;
  Tensor x2;
  std::size_t size() const { return x1.rows(); }
};

/// Evaluation-only ground truth.
struct GroundTruth {
  Tensor z_s;
  Tensor u1;
  Tensor u2;
  std::vector<std::int32_t> labels;
  std::size_t num_classes() const { return std::size_t{1} << std::min<std::size_t>(3, z_s.cols()); }
};

struct PairedDataset {
  ObservedPair observed;
  GroundTruth truth;
  std::size_t size() const { return observed.size(); }
  bool operator==(const PairedDataset &o) const {
    return observed.x1 == o.observed.x1 && observed.x2 == o.observed.x2 && truth.z_s == o.truth.z_s &&
           truth.u1 == o.truth.u1 && truth.u2 == o.truth.u2 && truth.labels == o.truth.labels;
  }
};

namespace detail {

inline double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

inline Tensor gaussian_matrix(std::size_t rows, std::size_t cols, Rng &rng) {
  Tensor t({rows, cols});
  for (auto &v : t.data)
    v = std::normal_distribution<double>(0.0, 1.0)(rng);
  return t;
}

/// depth layers of h <- tanh(W h + b), W ~ N(0, gain^2 / fan_in), every
/// layer out_dim wide.
class RandomTanhMap {
public:
  RandomTanhMap(std::size_t in, std::size_t out, std::size_t depth, double gain, Rng &rng) {
    std::size_t prev = in;
    for (std::size_t l = 0; l < depth; ++l) {
      Tensor w = gaussian_matrix(out, prev, rng);
      const double s = gain / std::sqrt(static_cast<double>(prev));
      for (auto &v : w.data)
        v *= s;
      Tensor b = gaussian_matrix(1, out, rng);
      for (auto &v : b.data)
        v *= 0.1;
      weights_.push_back(std::move(w));
      biases_.push_back(std::move(b));
      prev = out;
    }
  }

  std::vector<double> apply(std::span<const double> x) const {
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      const auto &W = weights_[l];
      std::vector<double> next(W.rows());
      for (std::size_t i = 0; i < W.rows(); ++i) {
        double acc = biases_[l].data[i];
        for (std::size_t j = 0; j < W.cols(); ++j)
          acc += W(i, j) * h[j];
        next[i] = std::tanh(acc);
      }
      h = std::move(next);
    }
    return h;
  }

private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

} // namespace detail

/// Samples latents and observations. Every stored value is rounded to f32 so
/// the DCUR round trip is bit-exact.
inline PairedDataset generate(const SyntheticSpec &spec, std::size_t n) {
  spec.validate();
  if (n < 2)
    throw ConfigError("generate: need at least 2 samples");
  PairedDataset ds;
  auto &t = ds.truth;
  {
    Rng rz = make_rng(spec.seed, {1, 0});
    Rng r1 = make_rng(spec.seed, {1, 1});
    Rng r2 = make_rng(spec.seed, {1, 2});
    t.z_s = detail::gaussian_matrix(n, spec.d_shared, rz);
    t.u1 = detail::gaussian_matrix(n, spec.d_u1, r1);
    t.u2 = detail::gaussian_matrix(n, spec.d_u2, r2);
    for (auto *m : {&t.z_s, &t.u1, &t.u2})
      for (auto &v : m->data)
        v = detail::to_f32(v);
  }
  const std::size_t label_bits = std::min<std::size_t>(3, spec.d_shared);
  t.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::int32_t c = 0;
    for (std::size_t k = 0; k < label_bits; ++k)
      if (t.z_s(i, k) > 0.0)
        c |= 1 << k;
    t.labels[i] = c;
  }

  auto observe = [&](int m, const Tensor &u, std::size_t d_x) {
    Tensor x({n, d_x});
    Rng map_rng = make_rng(spec.seed, {2, static_cast<std::uint64_t>(m)});
    Rng noise_rng = make_rng(spec.seed, {3, static_cast<std::uint64_t>(m)});
    const std::size_t ds_ = spec.d_shared, du = u.cols();
    if (spec.mixing == MixingKind::identity) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < ds_; ++k)
          x(i, k) = t.z_s(i, k);
        for (std::size_t k = 0; k < du; ++k)
          x(i, ds_ + k) = u(i, k);
      }
    } else if (spec.mixing == MixingKind::planted && m == 1) {
      const std::size_t B = spec.planted_block;
      detail::RandomTanhMap unique_map(du, B, spec.map_depth, spec.map_gain, map_rng);
      detail::RandomTanhMap shared_map(ds_, d_x - B, spec.map_depth, spec.map_gain, map_rng);
      for (std::size_t i = 0; i < n; ++i) {
        const auto hu = unique_map.apply(std::span<const double>(u.data.data() + i * du, du));
        const auto hs = shared_map.apply(std::span<const double>(t.z_s.data.data() + i * ds_, ds_));
        std::copy(hu.begin(), hu.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * d_x));
        std::copy(hs.begin(), hs.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * d_x + B));
      }
    } else if (spec.mixing == MixingKind::coregistered) {
      const std::size_t B = spec.planted_block, S = d_x - 2 * B, off = m == 1 ? S : S + B;
      detail::RandomTanhMap shared_map(ds_, S, spec.map_depth, spec.map_gain, map_rng);
      detail::RandomTanhMap unique_map(du, B, spec.map_depth, spec.map_gain, map_rng);
      for (std::size_t i = 0; i < n; ++i) {
        const auto hs = shared_map.apply(std::span<const double>(t.z_s.data.data() + i * ds_, ds_));
        const auto hu = unique_map.apply(std::span<const double>(u.data.data() + i * du, du));
        std::copy(hs.begin(), hs.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * d_x));
        std::copy(hu.begin(), hu.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * d_x + off));
      }
    } else {
      detail::RandomTanhMap map(ds_ + du, d_x, spec.map_depth, spec.map_gain, map_rng);
      std::vector<double> in(ds_ + du);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < ds_; ++k)
          in[k] = t.z_s(i, k);
        for (std::size_t k = 0; k < du; ++k)
          in[ds_ + k] = u(i, k);
        const auto h = map.apply(in);
        std::copy(h.begin(), h.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * d_x));
      }
    }
    if (spec.noise_std > 0.0)
      for (auto &v : x.data)
        v += std::normal_distribution<double>(0.0, spec.noise_std)(noise_rng);
    for (auto &v : x.data)
      v = detail::to_f32(v);
    return x;
  };
  ds.observed.x1 = observe(1, t.u1, spec.d_x1);
  ds.observed.x2 = observe(2, t.u2, spec.d_x2);
  return ds;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Vector analogues of image augmentations: noise ~ blur/jitter, masking ~
/// crop, scaling ~ resize, sign flip ~ flip.
struct AugmentPolicy {
  double noise_std = 0.0;
  double mask_fraction = 0.0;
  double scale_lo = 1.0;
  double scale_hi = 1.0;
  double flip_sign_prob = 0.0;

  static AugmentPolicy defaults() { return {0.1, 0.1, 0.8, 1.2, 0.0}; }

  void validate() const {
    if (!(noise_std >= 0.0))
      throw ConfigError("augment: noise_std must be >= 0");
    if (!(mask_fraction >= 0.0 && mask_fraction < 1.0))
      throw ConfigError("augment: mask_fraction must be in [0, 1)");
    if (!(scale_lo > 0.0 && scale_lo <= scale_hi))
      throw ConfigError("augment: need 0 < scale_lo <= scale_hi");
    if (!(flip_sign_prob >= 0.0 && flip_sign_prob <= 1.0))
      throw ConfigError("augment: flip_sign_prob must be in [0, 1]");
  }
};

/// Applies scale, sign flip, noise, then masks floor(mask_fraction * d)
/// distinct coordinates to exactly zero.
inline std::vector<double> augment(std::span<const double> x, const AugmentPolicy &p, Rng &rng) {
  std::vector<double> out(x.begin(), x.end());
  const double scale = p.scale_lo == p.scale_hi ? p.scale_lo
                                                : std::uniform_real_distribution<double>(p.scale_lo, p.scale_hi)(rng);
  const bool flip = p.flip_sign_prob > 0.0 && std::bernoulli_distribution(p.flip_sign_prob)(rng);
  const double sign_scale = flip ? -scale : scale;
  for (auto &v : out)
    v *= sign_scale;
  if (p.noise_std > 0.0)
    for (auto &v : out)
      v += std::normal_distribution<double>(0.0, p.noise_std)(rng);
  const auto n_mask = static_cast<std::size_t>(std::floor(p.mask_fraction * static_cast<double>(out.size())));
  if (n_mask > 0) {
    std::vector<std::size_t> idx(out.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // partial Fisher-Yates: the first n_mask entries are a uniform subset
    for (std::size_t i = 0; i < n_mask; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out[idx[i]] = 0.0;
    }
  }
  return out;
}

/// Augments the listed rows of X, one draw per row in order.
inline Tensor augment_rows(const Tensor &X, std::span<const std::size_t> rows, const AugmentPolicy &p, Rng &rng) {
  const std::size_t d = X.cols();
  Tensor out({rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto a = augment(std::span<const double>(X.data.data() + rows[i] * d, d), p, rng);
    std::copy(a.begin(), a.end(), out.data.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

// ---------------------------------------------------------------------------
// DCUR file format
//
//   header (32 bytes): "DCUR", u32 version, u32 section count, u32 samples,
//                      u32 d_shared, u32 d_u1, u32 d_u2, u32 reserved
//   section:           u8 tag, u32 rows, u32 cols, rows*cols little-endian
//                      f32 (i32 for labels)
//   order:             X1, X2, z_s, u1, u2, labels
// ---------------------------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 32;
inline constexpr std::size_t kSectionHeaderBytes = 9;
inline constexpr std::uint64_t kMaxSectionBytes = std::uint64_t{1} << 34;

enum class SectionTag : std::uint8_t { x1 = 1, x2 = 2, z_s = 3, u1 = 4, u2 = 5, labels = 6 };

inline std::vector<std::uint8_t> encode_dataset(const PairedDataset &ds) {
  ByteWriter w;
  w.raw("DCUR", 4);
  w.u32(kDatasetVersion);
  w.u32(6);
  w.u32(static_cast<std::uint32_t>(ds.size()));
  w.u32(static_cast<std::uint32_t>(ds.truth.z_s.cols()));
  w.u32(static_cast<std::uint32_t>(ds.truth.u1.cols()));
  w.u32(static_cast<std::uint32_t>(ds.truth.u2.cols()));
  w.u32(0);
  auto section = [&](SectionTag tag, const Tensor &t) {
    w.u8(static_cast<std::uint8_t>(tag));
    w.u32(static_cast<std::uint32_t>(t.rows()));
    w.u32(static_cast<std::uint32_t>(t.cols()));
    for (double v : t.data)
      w.f32(static_cast<float>(v));
  };
  section(SectionTag::x1, ds.observed.x1);
  section(SectionTag::x2, ds.observed.x2);
  section(SectionTag::z_s, ds.truth.z_s);
  section(SectionTag::u1, ds.truth.u1);
  section(SectionTag::u2, ds.truth.u2);
  w.u8(static_cast<std::uint8_t>(SectionTag::labels));
  w.u32(static_cast<std::uint32_t>(ds.truth.labels.size()));
  w.u32(1);
  for (auto l : ds.truth.labels)
    w.i32(l);
  return w.bytes();
}

inline PairedDataset decode_dataset(std::vector<std::uint8_t> bytes) {
  ByteReader r(std::move(bytes));
  if (r.remaining() < 4 || r.bytes(4, "magic") != "DCUR")
    throw FormatError(FormatErrc::bad_magic, "not a DCUR dataset file");
  const auto version = r.u32("header");
  if (version != kDatasetVersion)
    throw FormatError(FormatErrc::bad_version, "unsupported DCUR version " + std::to_string(version));
  const auto sections = r.u32("header");
  const auto n = r.u32("header");
  const std::uint32_t dims[3] = {r.u32("header"), r.u32("header"), r.u32("header")};
  r.u32("header");
  if (sections != 6)
    throw FormatError(FormatErrc::bad_section, "expected 6 sections, header says " + std::to_string(sections));

  auto read_extents = [&](SectionTag expect) {
    const auto tag = r.u8("section header");
    if (tag != static_cast<std::uint8_t>(expect))
      throw FormatError(FormatErrc::bad_section, "expected section tag " +
                                                     std::to_string(static_cast<int>(expect)) + ", found " +
                                                     std::to_string(tag));
    const std::uint64_t rows = r.u32("section header");
    const std::uint64_t cols = r.u32("section header");
    if (rows == 0 || cols == 0 || rows * cols * 4 > kMaxSectionBytes)
      throw FormatError(FormatErrc::dim_overflow, "section " + std::to_string(tag) + " declares " +
                                                      std::to_string(rows) + "x" + std::to_string(cols));
    if (rows != n)
      throw FormatError(FormatErrc::dim_mismatch, "section " + std::to_string(tag) + " has " +
                                                      std::to_string(rows) + " rows, header says " +
                                                      std::to_string(n));
    r.need(static_cast<std::size_t>(rows * cols * 4), "section payload");
    return std::pair{static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)};
  };
  auto read_matrix = [&](SectionTag tag, std::uint32_t expect_cols) {
    const auto [rows, cols] = read_extents(tag);
    if (expect_cols && cols != expect_cols)
      throw FormatError(FormatErrc::dim_mismatch, "section " + std::to_string(static_cast<int>(tag)) +
                                                      " width disagrees with header");
    Tensor t({rows, cols});
    for (auto &v : t.data)
      v = static_cast<double>(r.f32());
    return t;
  };

  PairedDataset ds;
  ds.observed.x1 = read_matrix(SectionTag::x1, 0);
  ds.observed.x2 = read_matrix(SectionTag::x2, 0);
  ds.truth.z_s = read_matrix(SectionTag::z_s, dims[0]);
  ds.truth.u1 = read_matrix(SectionTag::u1, dims[1]);
  ds.truth.u2 = read_matrix(SectionTag::u2, dims[2]);
  const auto [rows, cols] = read_extents(SectionTag::labels);
  if (cols != 1)
    throw FormatError(FormatErrc::dim_mismatch, "labels section must have one column");
  ds.truth.labels.resize(rows);
  for (auto &l : ds.truth.labels)
    l = r.i32();
  if (r.remaining() != 0)
    throw FormatError(FormatErrc::trailing, std::to_string(r.remaining()) + " unexpected trailing bytes");
  return ds;
}

inline void save_dataset(const PairedDataset &ds, const std::filesystem::path &path) {
  write_file_bytes(path, encode_dataset(ds));
}

/// Reads the whole file before decoding; any error leaves nothing behind.
inline PairedDataset load_dataset(const std::filesystem::path &path) { return decode_dataset(read_file_bytes(path)); }

} // namespace decur

#endif
