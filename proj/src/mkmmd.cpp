#include "dsda/mkmmd.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace dsda {

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

double kernel_from_sq(double sq, const KernelFamily& fam) {
  double k = 0.0;
  for (std::size_t u = 0; u < fam.size(); ++u) k += fam.beta[u] * std::exp(-sq / fam.bandwidths[u]);
  return k;
}

// d k / d(sq) for the combined kernel, so that d k(x,y) / dx = 2 * slope * (x - y).
double kernel_slope_from_sq(double sq, const KernelFamily& fam) {
  double s = 0.0;
  for (std::size_t u = 0; u < fam.size(); ++u)
    s -= fam.beta[u] * std::exp(-sq / fam.bandwidths[u]) / fam.bandwidths[u];
  return s;
}

void check_dims(const Matrix& a, const Matrix& b, const char* who) {
  if (a.cols != b.cols) throw std::invalid_argument(std::string(who) + ": feature dimension mismatch");
}

}  // namespace

void KernelFamily::validate() const {
  if (bandwidths.empty() || bandwidths.size() != beta.size())
    throw std::invalid_argument("KernelFamily: bandwidth / beta size mismatch");
  double sum = 0.0;
  for (std::size_t u = 0; u < size(); ++u) {
    if (!(bandwidths[u] > 0.0) || !std::isfinite(bandwidths[u]))
      throw std::invalid_argument("KernelFamily: bandwidths must be positive");
    if (!(beta[u] >= -1e-10)) throw std::invalid_argument("KernelFamily: beta must be non-negative");
    sum += beta[u];
  }
  if (std::abs(sum - 1.0) > 1e-8) throw std::invalid_argument("KernelFamily: beta must sum to 1");
}

KernelFamily KernelFamily::single(std::size_t u) const {
  KernelFamily f{bandwidths, std::vector<double>(size(), 0.0)};
  f.beta.at(u) = 1.0;
  return f;
}

double median_heuristic(const Matrix& xs, const Matrix& xt, std::size_t cap, std::uint64_t seed) {
  check_dims(xs, xt, "median_heuristic");
  const std::size_t n = xs.rows + xt.rows;
  if (n < 2) throw std::invalid_argument("median_heuristic: need at least two points");
  if (cap == 0) throw std::invalid_argument("median_heuristic: cap must be positive");
  auto row = [&](std::size_t i) { return i < xs.rows ? xs.row(i) : xt.row(i - xs.rows); };

  std::vector<double> sq;
  const std::size_t total = n * (n - 1) / 2;
  if (total <= cap) {
    sq.reserve(total);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) sq.push_back(squared_distance(row(i), row(j)));
  } else {
    sq.reserve(cap);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    while (sq.size() < cap) {
      const std::size_t i = pick(rng);
      const std::size_t j = pick(rng);
      if (i != j) sq.push_back(squared_distance(row(i), row(j)));
    }
  }

  const std::size_t mid = sq.size() / 2;
  std::nth_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid), sq.end());
  double median = sq[mid];
  if (sq.size() % 2 == 0) {
    const double lower = *std::max_element(sq.begin(), sq.begin() + static_cast<std::ptrdiff_t>(mid));
    median = 0.5 * (lower + median);
  }
  if (!(median > 0.0)) throw std::invalid_argument("median_heuristic: points are identical (median distance 0)");
  return median;
}

KernelFamily build_family(double gamma, int lo, int hi) {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw std::invalid_argument("build_family: gamma must be positive");
  if (lo > hi) throw std::invalid_argument("build_family: empty exponent range");
  KernelFamily f;
  for (int k = lo; k <= hi; ++k) f.bandwidths.push_back(std::ldexp(gamma, k));
  f.beta.assign(f.bandwidths.size(), 1.0 / static_cast<double>(f.bandwidths.size()));
  return f;
}

double kernel(std::span<const double> a, std::span<const double> b, const KernelFamily& fam) {
  if (a.size() != b.size()) throw std::invalid_argument("kernel: dimension mismatch");
  return kernel_from_sq(squared_distance(a, b), fam);
}

double mmd2_quadratic(const Matrix& hs, const Matrix& ht, const KernelFamily& fam) {
  check_dims(hs, ht, "mmd2_quadratic");
  if (hs.rows == 0 || ht.rows == 0) throw std::invalid_argument("mmd2_quadratic: empty sample");
  // The three sums share loop structure so identical inputs cancel exactly.
  auto mean_kernel = [&](const Matrix& a, const Matrix& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i)
      for (std::size_t j = 0; j < b.rows; ++j) s += kernel_from_sq(squared_distance(a.row(i), b.row(j)), fam);
    return s / (static_cast<double>(a.rows) * static_cast<double>(b.rows));
  };
  const double v = mean_kernel(hs, hs) + mean_kernel(ht, ht) - 2.0 * mean_kernel(hs, ht);
  return std::max(0.0, v);
}

double gk(const QuadTuple& z, const KernelFamily& fam) {
  const std::size_t d = z.s1.size();
  if (z.s2.size() != d || z.t1.size() != d || z.t2.size() != d)
    throw std::invalid_argument("gk: quad-tuple members differ in dimension");
  return kernel(z.s1, z.s2, fam) + kernel(z.t1, z.t2, fam) - kernel(z.s1, z.t2, fam) - kernel(z.s2, z.t1, fam);
}

LinearMmd mmd2_linear(const Matrix& hs, const Matrix& ht, const KernelFamily& fam, bool with_grad) {
  check_dims(hs, ht, "mmd2_linear");
  if (hs.rows != ht.rows) throw std::invalid_argument("mmd2_linear: source and target batch sizes differ");
  const std::size_t n = hs.rows;
  if (n == 0 || n % 2 != 0) throw std::invalid_argument("mmd2_linear: batch size must be even and positive");

  LinearMmd r;
  if (with_grad) {
    r.grad_s = Matrix(n, hs.cols);
    r.grad_t = Matrix(n, ht.cols);
  }
  const double scale = 2.0 / static_cast<double>(n);
  const std::size_t dim = hs.cols;
  double sum = 0.0;
  for (std::size_t i = 0; i < n / 2; ++i) {
    const auto a = hs.row(2 * i);
    const auto b = hs.row(2 * i + 1);
    const auto c = ht.row(2 * i);
    const auto e = ht.row(2 * i + 1);
    const double sq_ab = squared_distance(a, b);
    const double sq_ce = squared_distance(c, e);
    const double sq_ae = squared_distance(a, e);
    const double sq_bc = squared_distance(b, c);
    sum += kernel_from_sq(sq_ab, fam) + kernel_from_sq(sq_ce, fam) - kernel_from_sq(sq_ae, fam) -
           kernel_from_sq(sq_bc, fam);
    if (!with_grad) continue;

    const double s_ab = 2.0 * scale * kernel_slope_from_sq(sq_ab, fam);
    const double s_ce = 2.0 * scale * kernel_slope_from_sq(sq_ce, fam);
    const double s_ae = 2.0 * scale * kernel_slope_from_sq(sq_ae, fam);
    const double s_bc = 2.0 * scale * kernel_slope_from_sq(sq_bc, fam);
    auto ga = r.grad_s.row(2 * i);
    auto gb = r.grad_s.row(2 * i + 1);
    auto gc = r.grad_t.row(2 * i);
    auto ge = r.grad_t.row(2 * i + 1);
    for (std::size_t k = 0; k < dim; ++k) {
      const double ab = a[k] - b[k];
      const double ce = c[k] - e[k];
      const double ae = a[k] - e[k];
      const double bc = b[k] - c[k];
      ga[k] = s_ab * ab - s_ae * ae;
      gb[k] = -s_ab * ab - s_bc * bc;
      gc[k] = s_ce * ce + s_bc * bc;
      ge[k] = -s_ce * ce + s_ae * ae;
    }
  }
  r.value = scale * sum;
  return r;
}

QdEstimate estimate_q_d(const Matrix& hs, const Matrix& ht, std::span<const double> bandwidths) {
  check_dims(hs, ht, "estimate_q_d");
  if (hs.rows != ht.rows) throw std::invalid_argument("estimate_q_d: source and target sizes differ");
  if (bandwidths.empty()) throw std::invalid_argument("estimate_q_d: no kernels");
  const std::size_t n = hs.rows - hs.rows % 2;
  const std::size_t tuples = n / 2;
  const std::size_t tuple_pairs = tuples / 2;
  if (tuple_pairs == 0) throw std::invalid_argument("estimate_q_d: too few samples (need n >= 4)");

  const std::size_t m = bandwidths.size();
  // g[i * m + u]: per-kernel gk of tuple i.
  std::vector<double> g(tuples * m);
  for (std::size_t i = 0; i < tuples; ++i) {
    const double sq_ab = squared_distance(hs.row(2 * i), hs.row(2 * i + 1));
    const double sq_ce = squared_distance(ht.row(2 * i), ht.row(2 * i + 1));
    const double sq_ae = squared_distance(hs.row(2 * i), ht.row(2 * i + 1));
    const double sq_bc = squared_distance(hs.row(2 * i + 1), ht.row(2 * i));
    for (std::size_t u = 0; u < m; ++u) {
      const double gam = bandwidths[u];
      g[i * m + u] = std::exp(-sq_ab / gam) + std::exp(-sq_ce / gam) - std::exp(-sq_ae / gam) - std::exp(-sq_bc / gam);
    }
  }

  QdEstimate r;
  r.m = m;
  r.d.assign(m, 0.0);
  r.q.assign(m * m, 0.0);
  for (std::size_t i = 0; i < tuples; ++i)
    for (std::size_t u = 0; u < m; ++u) r.d[u] += g[i * m + u];
  for (double& v : r.d) v *= 2.0 / static_cast<double>(n);

  std::vector<double> delta(m);
  for (std::size_t i = 0; i < tuple_pairs; ++i) {
    for (std::size_t u = 0; u < m; ++u) delta[u] = g[(2 * i) * m + u] - g[(2 * i + 1) * m + u];
    for (std::size_t u = 0; u < m; ++u)
      for (std::size_t v = u; v < m; ++v) r.q[u * m + v] += delta[u] * delta[v];
  }
  const double qscale = 4.0 / static_cast<double>(n);
  for (std::size_t u = 0; u < m; ++u) {
    for (std::size_t v = u; v < m; ++v) {
      r.q[u * m + v] *= qscale;
      r.q[v * m + u] = r.q[u * m + v];
    }
  }
  return r;
}

std::string to_string(QpStatus s) {
  return s == QpStatus::kOptimal ? "optimal" : "infeasible-fallback";
}

}  // namespace dsda
