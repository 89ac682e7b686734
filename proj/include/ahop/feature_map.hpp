#pragma once

// Monomial feature maps phi_u, phi_v with <phi_u(u), phi_v(v)> = P(<u, v>)
// for a degree-g polynomial P, and the factored row/column sums that let the
// M x L kernel matrix stay implicit.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ahop/error.hpp"
#include "ahop/linalg.hpp"
#include "ahop/poly_approx.hpp"

namespace ahop {

inline constexpr std::size_t kDefaultRankCap = 1'000'000;

struct MultiIndex {
  std::vector<int> exponents;
  int total_degree = 0;

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;
};

/// C(n, k) as a double; exact while the result stays below 2^53.
inline double binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return std::round(r);
}

/// log C(n, k); used where the value itself would overflow.
inline double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

namespace detail {

inline void check_rank(int d, int g, std::size_t cap) {
  require(d >= 1, ErrorCode::InvalidArgument, "feature map: dimension must be >= 1");
  require(g >= 0, ErrorCode::InvalidArgument, "feature map: degree must be >= 0");
  const double rank = binomial(d + g, g);
  if (!(rank <= static_cast<double>(cap))) {
    fail(ErrorCode::SizeOverflow, "feature map rank C(" + std::to_string(d + g) + ", " + std::to_string(g) +
                                      ") = " + std::to_string(rank) + " exceeds cap " + std::to_string(cap));
  }
}

// Appends every exponent vector with the given total degree, positions
// [pos, d) still free, in ascending lexicographic order.
inline void enumerate_degree(std::vector<int>& current, int pos, int remaining, std::vector<MultiIndex>& out) {
  const int d = static_cast<int>(current.size());
  if (pos == d - 1) {
    current[pos] = remaining;
    int total = 0;
    for (int e : current) total += e;
    out.push_back(MultiIndex{current, total});
    current[pos] = 0;
    return;
  }
  for (int e = 0; e <= remaining; ++e) {
    current[pos] = e;
    enumerate_degree(current, pos + 1, remaining - e, out);
  }
  current[pos] = 0;
}

}  // namespace detail

/// All alpha in N^d with |alpha| <= g, graded by total degree and
/// lexicographically ascending within a degree. Length C(d+g, g).
inline std::vector<MultiIndex> enumerate_multi_indices(int d, int g, std::size_t cap = kDefaultRankCap) {
  detail::check_rank(d, g, cap);
  std::vector<MultiIndex> out;
  out.reserve(static_cast<std::size_t>(binomial(d + g, g)));
  std::vector<int> current(d, 0);
  for (int degree = 0; degree <= g; ++degree) detail::enumerate_degree(current, 0, degree, out);
  return out;
}

class MonomialFeatureMap {
 public:
  MonomialFeatureMap() = default;

  /// weight(alpha) = c_|alpha| * |alpha|! / prod(alpha_l!). All coefficient
  /// weight sits on the u side; phi_v is a pure monomial.
  MonomialFeatureMap(std::span<const double> coeffs, int d, std::size_t cap = kDefaultRankCap)
      : d_(d), g_(static_cast<int>(coeffs.size()) - 1) {
    require(!coeffs.empty(), ErrorCode::InvalidArgument, "feature map: polynomial has no coefficients");
    indices_ = enumerate_multi_indices(d, g_, cap);
    const std::size_t r = indices_.size();
    weights_.resize(r);
    parent_.assign(r, -1);
    variable_.assign(r, -1);

    std::map<std::vector<int>, int> position;
    for (std::size_t k = 0; k < r; ++k) position.emplace(indices_[k].exponents, static_cast<int>(k));

    for (std::size_t k = 0; k < r; ++k) {
      const auto& alpha = indices_[k];
      double multinomial = 1.0;
      int running = 0;
      for (int e : alpha.exponents) {
        running += e;
        multinomial *= binomial(running, e);
      }
      weights_[k] = coeffs[alpha.total_degree] * multinomial;
      if (alpha.total_degree == 0) continue;
      // Extend the parent alpha - e_l (l = first nonzero slot) by one factor.
      auto parent = alpha.exponents;
      int l = 0;
      while (parent[l] == 0) ++l;
      --parent[l];
      parent_[k] = position.at(parent);
      variable_[k] = l;
    }
  }

  int dim() const { return d_; }
  int degree() const { return g_; }
  std::size_t rank() const { return indices_.size(); }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Writes the pure monomials prod v_l^alpha_l into out (length rank()).
  void monomials(std::span<const double> v, std::span<double> out) const {
    // Hot path: avoid building the message unless the check fails.
    if (static_cast<int>(v.size()) != d_) fail(ErrorCode::DimensionMismatch, "feature map: input dimension mismatch");
    if (out.size() != rank()) fail(ErrorCode::DimensionMismatch, "feature map: output length mismatch");
    out[0] = 1.0;
    for (std::size_t k = 1; k < out.size(); ++k) out[k] = out[parent_[k]] * v[variable_[k]];
  }

  std::vector<double> phi_u(std::span<const double> u) const {
    std::vector<double> out(rank());
    monomials(u, out);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] *= weights_[k];
    return out;
  }

  std::vector<double> phi_v(std::span<const double> v) const {
    std::vector<double> out(rank());
    monomials(v, out);
    return out;
  }

 private:
  int d_ = 0;
  int g_ = 0;
  std::vector<MultiIndex> indices_;
  std::vector<double> weights_;
  std::vector<int> parent_;
  std::vector<int> variable_;
};

inline MonomialFeatureMap build_feature_map(const ExpPolynomial& p, int d, std::size_t cap = kDefaultRankCap) {
  return MonomialFeatureMap(p.coeffs, d, cap);
}

inline MonomialFeatureMap build_feature_map(std::span<const double> coeffs, int d, std::size_t cap = kDefaultRankCap) {
  return MonomialFeatureMap(coeffs, d, cap);
}

struct FactorMatrices {
  RowMatrix u1;  // M x r
  RowMatrix u2;  // L x r
};

namespace detail {

template <typename Rows>
RowMatrix feature_rows(const MonomialFeatureMap& map, const Rows& rows, bool weighted, unsigned threads) {
  const std::size_t r = map.rank();
  RowMatrix out(rows.rows(), static_cast<Eigen::Index>(r));
  parallel_for(static_cast<std::size_t>(rows.rows()), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<double> v(map.dim());
    for (std::size_t i = begin; i < end; ++i) {
      for (int l = 0; l < map.dim(); ++l) v[l] = rows(static_cast<Eigen::Index>(i), l);
      std::span<double> dst(out.row(static_cast<Eigen::Index>(i)).data(), r);
      map.monomials(v, dst);
      if (weighted)
        for (std::size_t k = 0; k < r; ++k) dst[k] *= map.weights()[k];
    }
  });
  return out;
}

}  // namespace detail

/// U1 row i = phi_u(x_rows_i), U2 row j = phi_v(y_rows_j), so that
/// U1 U2^T = P(x_rows y_rows^T) entrywise.
template <typename XRows, typename YRows>
FactorMatrices build_factor_matrices(const MonomialFeatureMap& map, const XRows& x_rows, const YRows& y_rows,
                                     unsigned threads = 1) {
  require(x_rows.cols() == map.dim() && y_rows.cols() == map.dim(), ErrorCode::DimensionMismatch,
          "build_factor_matrices: inputs must have " + std::to_string(map.dim()) + " columns");
  return FactorMatrices{detail::feature_rows(map, x_rows, true, threads),
                        detail::feature_rows(map, y_rows, false, threads)};
}

/// (U1 U2^T) 1_L computed as U1 (U2^T 1_L).
inline Vector factored_row_sums(const RowMatrix& u1, const RowMatrix& u2) {
  require(u1.cols() == u2.cols(), ErrorCode::DimensionMismatch, "factored_row_sums: inner dimensions differ");
  if (u1.cols() == 0) return Vector::Zero(u1.rows());
  const Vector col_total = u2.colwise().sum().transpose();
  return u1 * col_total;
}

/// (1_M^T U1 U2^T)^T computed as U2 (U1^T 1_M).
inline Vector factored_col_sums(const RowMatrix& u1, const RowMatrix& u2) {
  require(u1.cols() == u2.cols(), ErrorCode::DimensionMismatch, "factored_col_sums: inner dimensions differ");
  if (u1.cols() == 0) return Vector::Zero(u2.rows());
  const Vector row_total = u1.colwise().sum().transpose();
  return u2 * row_total;
}

}  // namespace ahop
