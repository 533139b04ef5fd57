// Kernel-coefficient quadratic program:
//   min beta' Q beta   s.t.  d' beta = 1,  beta >= 0
// solved by accelerated projected gradient followed by an active-set polish.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include "dsda/log.hpp"
#include "dsda/mkmmd.hpp"

namespace dsda {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr std::size_t kMaxIterations = 100000;

// Euclidean projection onto {b >= 0, d'b = 1}: b_u = max(0, y_u - tau d_u)
// where phi(tau) = sum_u d_u b_u(tau) is non-increasing in tau.
VectorXd project(const VectorXd& y, const VectorXd& d) {
  auto phi = [&](double tau) {
    double s = 0.0;
    for (Eigen::Index u = 0; u < y.size(); ++u) s += d[u] * std::max(0.0, y[u] - tau * d[u]);
    return s;
  };
  double lo = -1.0;
  double hi = 1.0;
  while (phi(lo) < 1.0) lo *= 2.0;
  while (phi(hi) > 1.0) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (phi(mid) > 1.0 ? lo : hi) = mid;
  }
  // Closed form on the active set found by bisection.
  const double mid = 0.5 * (lo + hi);
  double num = 0.0;
  double den = 0.0;
  for (Eigen::Index u = 0; u < y.size(); ++u) {
    if (y[u] - mid * d[u] > 0.0) {
      num += d[u] * y[u];
      den += d[u] * d[u];
    }
  }
  double tau = den > 0.0 ? (num - 1.0) / den : mid;
  if (!(tau >= lo && tau <= hi)) tau = mid;
  VectorXd b(y.size());
  for (Eigen::Index u = 0; u < y.size(); ++u) b[u] = std::max(0.0, y[u] - tau * d[u]);
  return b;
}

double objective(const MatrixXd& q, const VectorXd& b) { return b.dot(q * b); }

// Equality-constrained minimiser of b'Qb subject to d'b = 1 with b zero off
// the support. Entries may come out non-positive; the caller decides.
std::optional<VectorXd> solve_on_support(const MatrixXd& q, const VectorXd& d, const std::vector<Eigen::Index>& s) {
  const auto k = static_cast<Eigen::Index>(s.size());
  if (k == 0) return std::nullopt;
  MatrixXd qs(k, k);
  VectorXd ds(k);
  for (Eigen::Index i = 0; i < k; ++i) {
    ds[i] = d[s[static_cast<std::size_t>(i)]];
    for (Eigen::Index j = 0; j < k; ++j) qs(i, j) = q(s[static_cast<std::size_t>(i)], s[static_cast<std::size_t>(j)]);
  }
  const Eigen::LLT<MatrixXd> llt(qs);
  if (llt.info() != Eigen::Success) return std::nullopt;
  const VectorXd w = llt.solve(ds);
  const double denom = ds.dot(w);
  if (!(denom > 0.0)) return std::nullopt;
  VectorXd b = VectorXd::Zero(q.rows());
  for (Eigen::Index i = 0; i < k; ++i) b[s[static_cast<std::size_t>(i)]] = w[i] / denom;
  return b;
}

MatrixXd to_matrix(std::span<const double> q, std::size_t m) {
  MatrixXd out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  for (std::size_t u = 0; u < m; ++u)
    for (std::size_t v = 0; v < m; ++v) out(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) = q[u * m + v];
  return out;
}

std::vector<double> to_vector(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::vector<double> regularize_q(std::span<const double> q, std::size_t m) {
  if (q.size() != m * m) throw std::invalid_argument("regularize_q: Q must be m x m");
  double trace = 0.0;
  for (std::size_t u = 0; u < m; ++u) trace += q[u * m + u];
  const double eps = 1e-4 * trace / static_cast<double>(m) + 1e-12;
  std::vector<double> out(q.begin(), q.end());
  for (std::size_t u = 0; u < m; ++u) out[u * m + u] += eps;
  return out;
}

double qp_kkt_residual(std::span<const double> q, std::span<const double> d, std::span<const double> beta) {
  const std::size_t m = d.size();
  if (q.size() != m * m || beta.size() != m) throw std::invalid_argument("qp_kkt_residual: shape mismatch");
  std::vector<double> grad(m, 0.0);
  double gscale = 0.0;
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t v = 0; v < m; ++v) grad[u] += 2.0 * q[u * m + v] * beta[v];
    gscale = std::max(gscale, std::abs(grad[u]));
  }
  double num = 0.0;
  double den = 0.0;
  double feas = -1.0;
  double neg = 0.0;
  for (std::size_t u = 0; u < m; ++u) {
    feas += d[u] * beta[u];
    neg = std::max(neg, -beta[u]);
    if (beta[u] > 0.0) {
      num += grad[u] * d[u];
      den += d[u] * d[u];
    }
  }
  const double nu = den > 0.0 ? num / den : 0.0;
  double res = 0.0;
  for (std::size_t u = 0; u < m; ++u) {
    const double mu = grad[u] - nu * d[u];
    res = std::max(res, beta[u] > 0.0 ? std::abs(mu) : std::max(0.0, -mu));
  }
  // Stationarity is measured relative to the gradient scale.
  return std::max({res / (1.0 + gscale), std::abs(feas), neg});
}

QpResult solve_beta_qp(std::span<const double> q_in, std::span<const double> d_in) {
  const std::size_t m = d_in.size();
  if (m == 0 || q_in.size() != m * m) throw std::invalid_argument("solve_beta_qp: Q must be m x m with m = |d|");
  for (double v : q_in)
    if (!std::isfinite(v)) throw std::invalid_argument("solve_beta_qp: non-finite Q");
  for (double v : d_in)
    if (!std::isfinite(v)) throw std::invalid_argument("solve_beta_qp: non-finite d");

  QpResult res;
  if (std::none_of(d_in.begin(), d_in.end(), [](double v) { return v > 0.0; })) {
    log::warn("beta QP infeasible (no positive per-kernel MMD); using uniform beta");
    res.beta_simplex.assign(m, 1.0 / static_cast<double>(m));
    res.beta_qp = res.beta_simplex;
    res.status = QpStatus::kInfeasibleFallback;
    return res;
  }

  const std::vector<double> qreg = regularize_q(q_in, m);
  MatrixXd q = to_matrix(qreg, m);
  q = 0.5 * (q + q.transpose()).eval();
  const VectorXd d = Eigen::Map<const VectorXd>(d_in.data(), static_cast<Eigen::Index>(m));

  // Start from the best feasible vertex e_u / d_u.
  VectorXd x = VectorXd::Zero(static_cast<Eigen::Index>(m));
  double best_vertex = std::numeric_limits<double>::infinity();
  for (Eigen::Index u = 0; u < d.size(); ++u) {
    if (d[u] <= 0.0) continue;
    const double f = q(u, u) / (d[u] * d[u]);
    if (f < best_vertex) {
      best_vertex = f;
      x = VectorXd::Zero(d.size());
      x[u] = 1.0 / d[u];
    }
  }

  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(q, Eigen::EigenvaluesOnly);
  const double lipschitz = 2.0 * eig.eigenvalues().maxCoeff();
  const double step = 1.0 / lipschitz;

  VectorXd y = x;
  double t = 1.0;
  double fx = objective(q, x);
  std::size_t it = 0;
  bool restarted = true;
  for (; it < kMaxIterations; ++it) {
    const VectorXd x_next = project(y - step * (2.0 * q * y), d);
    const double f_next = objective(q, x_next);
    const double change = (x_next - x).lpNorm<Eigen::Infinity>();
    if (f_next > fx) {
      // Momentum overshoot: restart from the last iterate. A plain step from
      // x that still fails to descend means we are at rounding level.
      if (restarted) break;
      y = x;
      t = 1.0;
      restarted = true;
      continue;
    }
    restarted = false;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    x = x_next;
    fx = f_next;
    t = t_next;
    if (change <= 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>())) break;
  }
  res.iterations = it;

  // Active-set polish: exact minimiser on the identified support, adding
  // any index whose multiplier is negative.
  std::vector<Eigen::Index> support;
  for (Eigen::Index u = 0; u < x.size(); ++u)
    if (x[u] > 0.0) support.push_back(u);
  for (std::size_t round = 0; round < 4 * m + 4; ++round) {
    const auto candidate = solve_on_support(q, d, support);
    if (!candidate) break;
    // Drop the most negative coordinate and re-solve.
    Eigen::Index drop = -1;
    for (auto u : support)
      if ((*candidate)[u] <= 0.0 && (drop < 0 || (*candidate)[u] < (*candidate)[drop])) drop = u;
    if (drop >= 0) {
      support.erase(std::find(support.begin(), support.end(), drop));
      continue;
    }
    const double f_candidate = objective(q, *candidate);
    if (f_candidate <= fx + 1e-15 * std::abs(fx)) {
      x = *candidate;
      fx = f_candidate;
    }
    const VectorXd grad = 2.0 * q * *candidate;
    double num = 0.0;
    double den = 0.0;
    for (auto u : support) {
      num += grad[u] * d[u];
      den += d[u] * d[u];
    }
    const double nu = num / den;
    Eigen::Index worst = -1;
    double worst_mu = 0.0;
    for (Eigen::Index u = 0; u < d.size(); ++u) {
      if (std::find(support.begin(), support.end(), u) != support.end()) continue;
      const double mu = grad[u] - nu * d[u];
      if (mu < worst_mu) {
        worst_mu = mu;
        worst = u;
      }
    }
    if (worst < 0) break;
    support.push_back(worst);
    std::sort(support.begin(), support.end());
  }

  res.beta_qp = to_vector(x);
  res.kkt_residual = qp_kkt_residual(qreg, d_in, res.beta_qp);
  const double sum = x.sum();
  res.beta_simplex.resize(m);
  for (std::size_t u = 0; u < m; ++u) res.beta_simplex[u] = res.beta_qp[u] / sum;
  return res;
}

}  // namespace dsda
