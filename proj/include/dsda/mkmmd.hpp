#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dsda/tensor.hpp"

namespace dsda {

inline constexpr int kBandwidthExponentMin = -7;
inline constexpr int kBandwidthExponentMax = 7;

/// Convex combination of Gaussian kernels k_u(a,b) = exp(-|a-b|^2 / gamma_u).
/// beta lies on the probability simplex.
struct KernelFamily {
  std::vector<double> bandwidths;
  std::vector<double> beta;

  std::size_t size() const { return bandwidths.size(); }
  /// Throws std::invalid_argument unless gamma_u > 0, beta_u >= 0 and sum(beta) = 1 (to 1e-8).
  void validate() const;
  /// Family with one kernel of weight 1 (beta = e_u), same bandwidths.
  KernelFamily single(std::size_t u) const;
};

/// Median squared pairwise Euclidean distance over the pooled rows of Xs and
/// Xt. At most `cap` pairs are used; above that a seeded random subset is drawn.
double median_heuristic(const Matrix& xs, const Matrix& xt, std::size_t cap = 100000,
                        std::uint64_t seed = 0);

/// Bandwidths 2^k * gamma for k in [lo, hi], uniform beta.
KernelFamily build_family(double gamma, int lo = kBandwidthExponentMin, int hi = kBandwidthExponentMax);

double kernel(std::span<const double> a, std::span<const double> b, const KernelFamily& fam);

/// Biased (V-statistic) multi-kernel MMD^2.
double mmd2_quadratic(const Matrix& hs, const Matrix& ht, const KernelFamily& fam);

struct QuadTuple {
  std::span<const double> s1;
  std::span<const double> s2;
  std::span<const double> t1;
  std::span<const double> t2;
};

/// k(s1,s2) + k(t1,t2) - k(s1,t2) - k(s2,t1).
double gk(const QuadTuple& z, const KernelFamily& fam);

struct LinearMmd {
  double value = 0.0;
  Matrix grad_s;  // d value / d hs
  Matrix grad_t;  // d value / d ht
};

/// Linear-time unbiased MK-MMD^2 over consecutive row pairs:
/// (2/n) * sum_i gk(hs[2i], hs[2i+1], ht[2i], ht[2i+1]).
LinearMmd mmd2_linear(const Matrix& hs, const Matrix& ht, const KernelFamily& fam, bool with_grad = true);

struct QdEstimate {
  std::vector<double> q;  // m x m, row-major
  std::vector<double> d;  // m
  std::size_t m = 0;
  double at(std::size_t u, std::size_t v) const { return q[u * m + v]; }
};

/// Per-kernel linear MMD^2 (d) and the covariance of consecutive gk
/// differences (Q), one entry per bandwidth.
QdEstimate estimate_q_d(const Matrix& hs, const Matrix& ht, std::span<const double> bandwidths);

enum class QpStatus { kOptimal, kInfeasibleFallback };

struct QpResult {
  std::vector<double> beta_qp;       // satisfies d'beta = 1, beta >= 0
  std::vector<double> beta_simplex;  // beta_qp rescaled to sum 1
  QpStatus status = QpStatus::kOptimal;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
};

/// Ridge added before solving: eps = 1e-4 * trace(Q) / m + 1e-12.
std::vector<double> regularize_q(std::span<const double> q, std::size_t m);

/// min beta'Qbeta  s.t. d'beta = 1, beta >= 0 (Q regularized internally).
/// Falls back to uniform beta with kInfeasibleFallback when no d_u > 0.
QpResult solve_beta_qp(std::span<const double> q, std::span<const double> d);

/// Stationarity / complementarity residual of beta for the (already
/// regularized) problem with matrix q.
double qp_kkt_residual(std::span<const double> q, std::span<const double> d, std::span<const double> beta);

std::string to_string(QpStatus s);

}  // namespace dsda
