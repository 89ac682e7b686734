#pragma once

// Modern Hopfield retrieval: the energy, the exact softmax update
// Z = Xi softmax(beta Xi^T X), and its almost-linear low-rank surrogate built
// from a polynomial approximation of exp.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ahop/error.hpp"
#include "ahop/feature_map.hpp"
#include "ahop/linalg.hpp"
#include "ahop/pattern.hpp"
#include "ahop/poly_approx.hpp"

namespace ahop {

/// QueryNormalized: each query column of exp(beta Xi^T X) is normalized over the
/// M memories (softmax retrieval). MemoryNormalized: Z = Xi D^-1 A with
/// D = diag(A 1_L), i.e. each memory row is normalized over the L queries.
enum class Normalization { QueryNormalized, MemoryNormalized };
enum class RetrievalMode { Dense, LowRank };

struct RetrievalConfig {
  double beta = 1.0;
  double delta_a = 1e-3;
  Normalization normalization = Normalization::QueryNormalized;
  RetrievalMode mode = RetrievalMode::Dense;
  int max_degree = kDefaultMaxDegree;
  std::size_t rank_cap = kDefaultRankCap;
  unsigned threads = 1;
};

struct RetrievalResult {
  Matrix z;              // d x L
  Vector normalizer;     // length L (query) or M (memory); may be inf on the dense path for huge scores
  std::size_t rank_used = 0;
  int degree_used = 0;
  double wall_time = 0.0;
  double error_bound = 0.0;  // 2 M B delta_a, zero for dense retrieval
  double norm_bound = 0.0;   // B = max(||Xi||_max, ||X||_max)
  double interval_bound = 0.0;
};

inline void validate(const RetrievalConfig& cfg) {
  require(cfg.beta > 0.0 && std::isfinite(cfg.beta), ErrorCode::InvalidArgument, "beta must be positive");
  require(cfg.delta_a > 0.0 && cfg.delta_a < 0.1, ErrorCode::InvalidArgument, "delta_a must lie in (0, 0.1)");
  require(cfg.max_degree >= 1, ErrorCode::InvalidArgument, "max_degree must be >= 1");
}

/// log(sum_mu exp(beta z_mu)) / beta, shifted by the max for overflow safety.
inline double lse(double beta, std::span<const double> z) {
  require(!z.empty(), ErrorCode::EmptyVector, "lse: empty vector");
  require(beta > 0.0, ErrorCode::InvalidArgument, "lse: beta must be positive");
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(beta * (v - top));
  return top + std::log(sum) / beta;
}

inline double lse(double beta, const Vector& z) { return lse(beta, std::span<const double>(z.data(), z.size())); }

/// E(x) = -lse(beta, Xi^T x) + <x, x> / 2.
inline double energy(const PatternMatrix& memory, const Vector& x, double beta) {
  require(x.size() == memory.dim(), ErrorCode::DimensionMismatch, "energy: query dimension differs from memory");
  const Vector scores = memory.data().transpose() * x;
  return -lse(beta, scores) + 0.5 * x.squaredNorm();
}

namespace detail {

inline constexpr Eigen::Index kDenseBlock = 256;

inline void check_shapes(const PatternMatrix& memory, const PatternMatrix& queries) {
  require(memory.dim() == queries.dim(), ErrorCode::DimensionMismatch,
          "memory dimension " + std::to_string(memory.dim()) + " differs from query dimension " +
              std::to_string(queries.dim()));
  require(memory.count() >= 1, ErrorCode::InvalidArgument, "at least one memory pattern is required");
}

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace detail

/// Materialized M x L retrieval weights (softmax per query column, or
/// D^-1 A for the memory convention). Meant for small instances and checks.
inline Matrix softmax_weights(const PatternMatrix& memory, const PatternMatrix& queries, double beta,
                              Normalization normalization) {
  detail::check_shapes(memory, queries);
  Matrix s = beta * (memory.data().transpose() * queries.data());
  if (normalization == Normalization::QueryNormalized) {
    for (Eigen::Index l = 0; l < s.cols(); ++l) {
      const double top = s.col(l).maxCoeff();
      s.col(l) = (s.col(l).array() - top).exp().matrix();
      s.col(l) /= s.col(l).sum();
    }
  } else if (s.cols() > 0) {
    for (Eigen::Index mu = 0; mu < s.rows(); ++mu) {
      const double top = s.row(mu).maxCoeff();
      s.row(mu) = (s.row(mu).array() - top).exp().matrix();
      s.row(mu) /= s.row(mu).sum();
    }
  }
  return s;
}

/// Exact normalizer of exp(beta Xi^T X): column sums (query convention) or
/// row sums (memory convention), without max-shifting.
inline Vector dense_normalizer(const PatternMatrix& memory, const PatternMatrix& queries, double beta,
                               Normalization normalization) {
  detail::check_shapes(memory, queries);
  const Matrix a = (beta * (memory.data().transpose() * queries.data())).array().exp().matrix();
  if (normalization == Normalization::QueryNormalized) return a.colwise().sum().transpose();
  return a.rowwise().sum();
}

/// Exact retrieval in Theta(d M L), processed in blocks of query columns so the
/// M x L score matrix is never held at once.
inline RetrievalResult retrieve_dense(const PatternMatrix& memory, const PatternMatrix& queries,
                                      const RetrievalConfig& cfg) {
  validate(cfg);
  detail::check_shapes(memory, queries);
  const auto start = std::chrono::steady_clock::now();
  const Matrix& xi = memory.data();
  const Matrix& x = queries.data();
  const Eigen::Index m = xi.cols();
  const Eigen::Index l_total = x.cols();
  const Eigen::Index block = detail::kDenseBlock;
  const std::size_t n_blocks = static_cast<std::size_t>((l_total + block - 1) / block);

  RetrievalResult res;
  res.z = Matrix::Zero(xi.rows(), l_total);
  res.norm_bound = std::max(memory.max_norm(), queries.max_norm());

  auto scores = [&](Eigen::Index begin, Eigen::Index width) -> Matrix {
    return cfg.beta * (xi.transpose() * x.middleCols(begin, width));
  };

  if (cfg.normalization == Normalization::QueryNormalized) {
    res.normalizer.resize(l_total);
    parallel_for(n_blocks, cfg.threads, [&](std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        const Eigen::Index begin = static_cast<Eigen::Index>(b) * block;
        const Eigen::Index width = std::min(block, l_total - begin);
        Matrix w = scores(begin, width);
        for (Eigen::Index c = 0; c < width; ++c) {
          const double top = w.col(c).maxCoeff();
          w.col(c) = (w.col(c).array() - top).exp().matrix();
          const double sum = w.col(c).sum();
          w.col(c) /= sum;
          res.normalizer(begin + c) = std::exp(top) * sum;
        }
        res.z.middleCols(begin, width).noalias() = xi * w;
      }
    });
  } else {
    // Pass 1: per-block row maxima and shifted sums, merged in block order.
    std::vector<Vector> block_max(n_blocks), block_sum(n_blocks);
    parallel_for(n_blocks, cfg.threads, [&](std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        const Eigen::Index begin = static_cast<Eigen::Index>(b) * block;
        const Eigen::Index width = std::min(block, l_total - begin);
        const Matrix s = scores(begin, width);
        block_max[b] = s.rowwise().maxCoeff();
        block_sum[b] = (s.colwise() - block_max[b]).array().exp().matrix().rowwise().sum();
      }
    });
    Vector log_d = Vector::Constant(m, -std::numeric_limits<double>::infinity());
    for (std::size_t b = 0; b < n_blocks; ++b) {
      for (Eigen::Index mu = 0; mu < m; ++mu) {
        const double bm = block_max[b](mu);
        const double lb = bm + std::log(block_sum[b](mu));
        const double hi = std::max(log_d(mu), lb);
        log_d(mu) = hi + std::log(std::exp(log_d(mu) - hi) + std::exp(lb - hi));
      }
    }
    res.normalizer = log_d.array().exp().matrix();
    parallel_for(n_blocks, cfg.threads, [&](std::size_t b0, std::size_t b1) {
      for (std::size_t b = b0; b < b1; ++b) {
        const Eigen::Index begin = static_cast<Eigen::Index>(b) * block;
        const Eigen::Index width = std::min(block, l_total - begin);
        const Matrix w = (scores(begin, width).colwise() - log_d).array().exp().matrix();
        res.z.middleCols(begin, width).noalias() = xi * w;
      }
    });
  }
  res.wall_time = detail::seconds_since(start);
  return res;
}

/// Almost-linear retrieval: fit P ~ exp on [-B^2 beta d, B^2 beta d], factor
/// P(beta Xi^T X) = U1 U2^T through monomial feature maps of the sqrt(beta)
/// scaled patterns, and evaluate the normalizer and output by associativity.
/// Cost O(tau r (d + g)) with tau = max(M, L); the M x L matrix never exists.
/// Guarantees ||Z~ - Z||_max <= 2 M B delta_a for the matching convention.
inline RetrievalResult retrieve_lowrank(const PatternMatrix& memory, const PatternMatrix& queries,
                                        const RetrievalConfig& cfg) {
  validate(cfg);
  detail::check_shapes(memory, queries);
  const auto start = std::chrono::steady_clock::now();
  const Matrix& xi = memory.data();
  const int d = memory.dim();
  const Eigen::Index m = xi.cols();

  RetrievalResult res;
  res.norm_bound = std::max(memory.max_norm(), queries.max_norm());
  // An all-zero instance has every score equal to 0; any tiny interval works.
  res.interval_bound = std::max(res.norm_bound * res.norm_bound * cfg.beta * d, 1e-12);
  const ExpPolynomial poly = fit_exp_poly(res.interval_bound, cfg.delta_a, cfg.max_degree);
  const MonomialFeatureMap map = build_feature_map(poly, d, cfg.rank_cap);
  res.degree_used = poly.degree;
  res.rank_used = map.rank();
  res.error_bound = 2.0 * static_cast<double>(m) * res.norm_bound * cfg.delta_a;

  const double root_beta = std::sqrt(cfg.beta);
  const Matrix xi_rows = root_beta * xi.transpose();
  const Matrix x_rows = root_beta * queries.data().transpose();
  const FactorMatrices f = build_factor_matrices(map, xi_rows, x_rows, cfg.threads);

  auto check_positive = [](const Vector& n) {
    for (Eigen::Index i = 0; i < n.size(); ++i) {
      if (!(n(i) > 0.0) || !std::isfinite(n(i)))
        fail(ErrorCode::NonPositiveNormalizer, "approximate normalizer entry " + std::to_string(i) + " is " +
                                                   std::to_string(n(i)) + "; refit with a smaller delta_a");
    }
  };

  if (cfg.normalization == Normalization::QueryNormalized) {
    res.normalizer = factored_col_sums(f.u1, f.u2);
    check_positive(res.normalizer);
    const Matrix xi_u1 = xi * f.u1;  // d x r
    res.z = xi_u1 * f.u2.transpose();
    res.z.array().rowwise() /= res.normalizer.transpose().array();
  } else {
    res.normalizer = factored_row_sums(f.u1, f.u2);
    check_positive(res.normalizer);
    const Matrix scaled = xi * res.normalizer.cwiseInverse().asDiagonal();
    const Matrix left = scaled * f.u1;  // d x r
    res.z = left * f.u2.transpose();
  }
  res.wall_time = detail::seconds_since(start);
  return res;
}

inline RetrievalResult retrieve(const PatternMatrix& memory, const PatternMatrix& queries, const RetrievalConfig& cfg) {
  return cfg.mode == RetrievalMode::Dense ? retrieve_dense(memory, queries, cfg)
                                          : retrieve_lowrank(memory, queries, cfg);
}

/// Entrywise max |Zt - Z|.
inline double max_norm_error(const Matrix& zt, const Matrix& z) {
  require(zt.rows() == z.rows() && zt.cols() == z.cols(), ErrorCode::DimensionMismatch,
          "max_norm_error: shapes differ");
  return max_abs(zt - z);
}

/// Delta_mu = min over nu != mu of <xi_mu, xi_mu> - <xi_mu, xi_nu>.
inline double separation(const PatternMatrix& memory, int mu) {
  require(memory.count() >= 2, ErrorCode::SingleMemory, "separation needs at least two memories");
  require(mu >= 0 && mu < memory.count(), ErrorCode::InvalidArgument, "separation: index out of range");
  const auto& xi = memory.data();
  const double self = xi.col(mu).squaredNorm();
  double best = std::numeric_limits<double>::infinity();
  for (int nu = 0; nu < memory.count(); ++nu)
    if (nu != mu) best = std::min(best, self - xi.col(mu).dot(xi.col(nu)));
  return best;
}

/// R = half the smallest pairwise distance between memories.
inline double pattern_radius(const PatternMatrix& memory) {
  require(memory.count() >= 2, ErrorCode::SingleMemory, "pattern_radius needs at least two memories");
  const auto& xi = memory.data();
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < memory.count(); ++a)
    for (int b = a + 1; b < memory.count(); ++b) best = std::min(best, (xi.col(a) - xi.col(b)).norm());
  return 0.5 * best;
}

/// 2B(M-1) exp(-beta(<xi_mu, x> - max_nu <xi_mu, xi_nu>)) + 2MB delta_a, the max
/// running over every nu including mu itself.
inline double retrieval_error_bound(const PatternMatrix& memory, const Vector& x, int mu, double beta, double bound,
                                    double delta_a) {
  require(x.size() == memory.dim(), ErrorCode::DimensionMismatch, "retrieval_error_bound: dimension mismatch");
  require(mu >= 0 && mu < memory.count(), ErrorCode::InvalidArgument, "retrieval_error_bound: index out of range");
  const auto& xi = memory.data();
  const int m = memory.count();
  const double approx = 2.0 * m * bound * delta_a;
  if (m == 1) return approx;
  const Vector overlaps = xi.transpose() * xi.col(mu);
  const double gap = xi.col(mu).dot(x) - overlaps.maxCoeff();
  return 2.0 * bound * (m - 1) * std::exp(-beta * gap) + approx;
}

struct FixedPointTrace {
  std::vector<Vector> trajectory;  // x_0 .. x_k
  std::vector<double> energies;    // E(x_0) .. E(x_k)
  std::optional<int> converged_to;
  int converged_step = -1;
};

/// Iterates x <- T(x) up to `steps` times, stopping at the first step whose
/// iterate lies within eps (2-norm) of a stored pattern.
inline FixedPointTrace fixed_point_iterate(const PatternMatrix& memory, const Vector& x0, const RetrievalConfig& cfg,
                                           int steps, double eps) {
  require(x0.size() == memory.dim(), ErrorCode::DimensionMismatch, "fixed_point_iterate: dimension mismatch");
  require(steps >= 0, ErrorCode::InvalidArgument, "fixed_point_iterate: steps must be >= 0");
  require(eps > 0.0, ErrorCode::InvalidArgument, "fixed_point_iterate: eps must be positive");
  FixedPointTrace trace;
  trace.trajectory.push_back(x0);
  trace.energies.push_back(energy(memory, x0, cfg.beta));
  Vector x = x0;
  for (int step = 1; step <= steps; ++step) {
    const PatternMatrix q(Matrix(x), PatternRole::Query);
    x = retrieve(memory, q, cfg).z.col(0);
    trace.trajectory.push_back(x);
    trace.energies.push_back(energy(memory, x, cfg.beta));
    for (int mu = 0; mu < memory.count(); ++mu) {
      if ((x - memory.data().col(mu)).norm() <= eps) {
        trace.converged_to = mu;
        trace.converged_step = step;
        return trace;
      }
    }
  }
  return trace;
}

}  // namespace ahop
