#ifndef DECUR_TEST_UTIL_HPP
#define DECUR_TEST_UTIL_HPP

#include "decur/decur.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace testutil {

using decur::Tensor;

inline Tensor random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  Tensor t({r, c});
  for (auto &v : t.data)
    v = n(rng);
  return t;
}

// Plain-loop references, written without the library's graph code.

inline std::vector<std::vector<double>> pearson_matrix(const Tensor &a, const Tensor &b, double eps = 1e-5) {
  const std::size_t N = a.rows(), K = a.cols();
  auto col_stats = [&](const Tensor &t, std::size_t j) {
    double m = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      m += t(i, j);
    m /= static_cast<double>(N);
    double v = 0.0;
    for (std::size_t i = 0; i < N; ++i)
      v += (t(i, j) - m) * (t(i, j) - m);
    v /= static_cast<double>(N);
    return std::pair{m, std::sqrt(v + eps)};
  };
  std::vector<std::vector<double>> C(K, std::vector<double>(b.cols(), 0.0));
  for (std::size_t p = 0; p < K; ++p) {
    const auto [ma, sa] = col_stats(a, p);
    for (std::size_t q = 0; q < b.cols(); ++q) {
      const auto [mb, sb] = col_stats(b, q);
      double s = 0.0;
      for (std::size_t i = 0; i < N; ++i)
        s += (a(i, p) - ma) / sa * ((b(i, q) - mb) / sb);
      C[p][q] = s / static_cast<double>(N);
    }
  }
  return C;
}

inline double ref_invariance(const std::vector<std::vector<double>> &C, double lambda) {
  double s = 0.0;
  for (std::size_t i = 0; i < C.size(); ++i)
    for (std::size_t j = 0; j < C[i].size(); ++j)
      s += i == j ? (1.0 - C[i][j]) * (1.0 - C[i][j]) : lambda * C[i][j] * C[i][j];
  return s;
}

inline double ref_decorrelation(const std::vector<std::vector<double>> &C, double lambda) {
  double s = 0.0;
  for (std::size_t i = 0; i < C.size(); ++i)
    for (std::size_t j = 0; j < C[i].size(); ++j)
      s += (i == j ? 1.0 : lambda) * C[i][j] * C[i][j];
  return s;
}

inline std::vector<std::vector<double>> block(const std::vector<std::vector<double>> &C, std::size_t r0,
                                              std::size_t r1) {
  std::vector<std::vector<double>> out;
  for (std::size_t i = r0; i < r1; ++i)
    out.emplace_back(C[i].begin() + static_cast<std::ptrdiff_t>(r0), C[i].begin() + static_cast<std::ptrdiff_t>(r1));
  return out;
}

inline decur::Tensor to_tensor(const std::vector<std::vector<double>> &m) {
  decur::Tensor t({m.size(), m[0].size()});
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j)
      t(i, j) = m[i][j];
  return t;
}

inline std::filesystem::path temp_dir(const std::string &name) {
  auto p = std::filesystem::temp_directory_path() / ("decur_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

} // namespace testutil

#endif
