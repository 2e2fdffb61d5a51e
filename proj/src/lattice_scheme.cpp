#include "cltlab/lattice_scheme.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <utility>

namespace cltlab::scheme {

using distributions::Backend;
using testfn::Decay;
using testfn::Jet;

namespace {

// work caps so a bad config fails fast instead of running for hours
constexpr double kFastWorkCap = 2.5e10;   // cached-path accumulate iterations
constexpr double kDirectWorkCap = 4.0e9;  // direct-path jet evaluations
constexpr double kFastCacheBytes = 1.8e9;

int last_column(int n, double horizon) {
  double k = std::ceil(static_cast<double>(n) * horizon - 1e-9);
  if (k < 1) k = 1;
  if (k > 1e8) throw std::invalid_argument("build_field: horizon too large");
  return static_cast<int>(k);
}

// contiguous index of the (i,j) upper-triangle entry for dimension d
int packed_index(int i, int j, int d) {
  if (i > j) std::swap(i, j);
  return i * d - i * (i - 1) / 2 + (j - i);
}

int plane_total(int d, int max_deriv) { return max_deriv == 0 ? 1 : 1 + d + d * (d + 1) / 2; }

template <typename Body>
void parallel_rows(std::size_t count, int jobs, const Body& body) {
  if (jobs < 1) jobs = 1;
  auto uj = static_cast<std::size_t>(jobs);
  if (jobs == 1 || count < 2 * uj) {
    body(std::size_t{0}, count);
    return;
  }
  std::size_t chunk = (count + uj - 1) / uj;
  std::vector<std::thread> pool;
  pool.reserve(uj);
  for (std::size_t lo = 0; lo < count; lo += chunk) {
    std::size_t hi = std::min(count, lo + chunk);
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

struct WalkRadius {
  double rho = 0.0;
  double walk_tail = 0.0;  // P(|S_k / sqrt(n)| >= rho), any k <= ceil(n * horizon)
  double heat_tail = 0.0;  // same for N(0, t * Sigma), t <= ceil(n * horizon) / n
  std::string method;
};

// Sub-gaussian radius: per-axis Hoeffding for bounded lattice steps, Chernoff
// for gaussian steps; the reference side N(0, t * Sigma) is always covered by
// the top eigenvalue of Sigma (<= B^2 for steps bounded by B). Each tail comes
// out <= q. For small n the exact reach K * B / sqrt(n) of a bounded walk can
// undercut the Hoeffding radius, in which case the walk tail is exactly zero.
WalkRadius walk_radius(const distributions::StepDistribution& dist, int n, double horizon,
                       double q) {
  const int d = dist.dim();
  const int K = last_column(n, horizon);
  const double teff = static_cast<double>(K) / n;
  const double lam_sigma = dist.covariance().lambda_max_abs();
  const double rho_heat = std::sqrt(2.0 * d * teff * lam_sigma * std::log(2.0 * d / q));

  WalkRadius w;
  if (dist.backend() == Backend::lattice) {
    const double b = dist.max_support_norm();
    const double lam = b * b;
    const double rho_hoeff = std::sqrt(2.0 * d * teff * lam * std::log(2.0 * d / q));
    const double rho_exact = static_cast<double>(K) * b / std::sqrt(static_cast<double>(n));
    w.rho = std::max(rho_heat, std::min(rho_hoeff, rho_exact));
    if (w.rho >= rho_exact * (1.0 - 1e-12)) {
      w.walk_tail = 0.0;
      w.method = "exact-support";
    } else {
      w.walk_tail = 2.0 * d * std::exp(-w.rho * w.rho / (2.0 * d * teff * lam));
      w.method = "hoeffding";
    }
  } else if (dist.is_gaussian()) {
    w.rho = rho_heat;
    w.walk_tail = 2.0 * d * std::exp(-w.rho * w.rho / (2.0 * d * teff * lam_sigma));
    w.method = "gaussian-tail";
  } else {
    throw std::invalid_argument(
        "choose_box: no certified truncation radius for heavy-tailed continuous steps");
  }
  w.heat_tail = 2.0 * d * std::exp(-w.rho * w.rho / (2.0 * d * teff * lam_sigma));
  return w;
}

double grid_slack_of(const testfn::TestFunction& f, double delta) {
  double c1 = f.ck_norm(1);
  return std::isinf(c1) ? kInf : delta * c1;
}

}  // namespace

TailBound choose_box(const TestFunction& f, const StepDistribution& dist, int n, double horizon,
                     double rel_tol) {
  if (f.dim() != dist.dim()) throw std::invalid_argument("choose_box: dimension mismatch");
  if (n < 1) throw std::invalid_argument("choose_box: n >= 1 required");
  if (!(horizon > 0)) throw std::invalid_argument("choose_box: horizon must be positive");
  if (!(rel_tol > 0.0) || rel_tol >= 1.0)
    throw std::invalid_argument("choose_box: rel_tol must lie in (0,1)");
  if (f.decay() != Decay::vanishing)
    throw std::invalid_argument("choose_box: requires a test function vanishing at infinity");

  const double fnorm = f.ck_norm(0);
  const double q = 0.5 * rel_tol;
  WalkRadius w = walk_radius(dist, n, horizon, q);
  const double rf = f.vanishing_radius(q * fnorm);

  TailBound tb;
  tb.half_width = rf + w.rho;
  tb.walk_radius = w.rho;
  tb.method = w.method;
  // outside the box each of u_n and u is at most ||f||_inf * (escape prob) + far-field sup of f
  tb.bound = fnorm * (w.walk_tail + w.heat_tail) + 2.0 * f.tail_sup_bound(0, rf);
  tb.grid_slack = 0.0;  // filled in once a grid spacing is chosen
  return tb;
}

double LatticeField::hess(int i, int j, int k, std::size_t g) const {
  if (max_deriv < 2) throw std::logic_error("LatticeField: built without derivative planes");
  return plane(static_cast<std::size_t>(1 + grid.d + packed_index(i, j, grid.d)))[idx(k, g)];
}

double LatticeField::hess_trace(int k, std::size_t g) const {
  double t = 0.0;
  for (int i = 0; i < grid.d; ++i) t += hess(i, i, k, g);
  return t;
}

double LatticeField::sigma_hess_trace(const SymMat& s, int k, std::size_t g) const {
  double t = 0.0;
  for (int i = 0; i < grid.d; ++i)
    for (int j = 0; j < grid.d; ++j) t += s(i, j) * hess(i, j, k, g);
  return t;
}

namespace {

// d = 1 fast path: every point the field ever touches lies on the superlattice
// x_g + m * unit / sqrt(n), so tabulate f (and derivatives) there once and the
// per-column accumulation is a plain weighted sum of cached values.
void build_planes_cached_1d(LatticeField& out, const distributions::StepDistribution& dist,
                            std::vector<std::vector<double>>& planes, int planes_n, int jobs) {
  const int n = out.n;
  const int K = out.columns() - 1;
  const std::size_t G = out.grid.size();
  const double sqrtn = std::sqrt(static_cast<double>(n));
  const double unit0 = dist.unit()[0];
  const TestFunction& f = *out.f;

  distributions::LatticePmf step = dist.pmf();
  std::int64_t m_lo_step = 0, m_hi_step = 0;
  for (const auto& p : step.points) {
    m_lo_step = std::min(m_lo_step, p[0]);
    m_hi_step = std::max(m_hi_step, p[0]);
  }
  const std::int64_t m_lo = static_cast<std::int64_t>(K) * m_lo_step;
  const std::int64_t m_hi = static_cast<std::int64_t>(K) * m_hi_step;
  const std::size_t span = static_cast<std::size_t>(m_hi - m_lo + 1);

  // tabulate f on the superlattice, one row of `span` points per grid node
  std::vector<std::vector<double>> cache(static_cast<std::size_t>(planes_n));
  for (auto& c : cache) c.resize(G * span);
  const int jet_order = out.max_deriv;
  parallel_rows(G, jobs, [&](std::size_t lo, std::size_t hi) {
    double x[kMaxDim];
    Jet jet;
    for (std::size_t g = lo; g < hi; ++g) {
      out.grid.coords(g, x);
      const std::size_t base = g * span;
      for (std::size_t m = 0; m < span; ++m) {
        const double y =
            x[0] + unit0 * static_cast<double>(m_lo + static_cast<std::int64_t>(m)) / sqrtn;
        const double yv[1] = {y};
        if (jet_order == 0) {
          cache[0][base + m] = f.value(std::span<const double>(yv, 1));
        } else {
          f.eval_jet(std::span<const double>(yv, 1), 2, jet);
          cache[0][base + m] = jet.f;
          cache[1][base + m] = jet.grad[0];
          cache[2][base + m] = jet.hess[0];
        }
      }
    }
  });

  distributions::LatticePmf pmf;
  pmf.dim = 1;
  pmf.unit = dist.unit();
  pmf.points.push_back({0, 0, 0});
  pmf.mass.push_back(1.0);
  pmf.step_count = 0;

  std::vector<std::size_t> off;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) pmf = pmf.convolve(step);
    const std::size_t ns = pmf.support_size();
    off.resize(ns);
    for (std::size_t j = 0; j < ns; ++j)
      off[j] = static_cast<std::size_t>(pmf.points[j][0] - m_lo);
    const double* mass = pmf.mass.data();
    const std::size_t col = static_cast<std::size_t>(k) * G;
    parallel_rows(G, jobs, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t g = lo; g < hi; ++g) {
        const std::size_t base = g * span;
        for (int p = 0; p < planes_n; ++p) {
          const double* row = cache[static_cast<std::size_t>(p)].data() + base;
          KahanSum s;
          for (std::size_t j = 0; j < ns; ++j) s.add(mass[j] * row[off[j]]);
          planes[static_cast<std::size_t>(p)][col + g] = s.value();
        }
      }
    });
  }
}

// generic path: evaluate f at x_g + r / sqrt(n) directly for every support point r
void build_planes_direct(LatticeField& out, const distributions::StepDistribution& dist,
                         std::vector<std::vector<double>>& planes, int planes_n, int jobs) {
  const int n = out.n;
  const int K = out.columns() - 1;
  const int d = out.grid.d;
  const std::size_t G = out.grid.size();
  const double sqrtn = std::sqrt(static_cast<double>(n));
  const TestFunction& f = *out.f;
  const int jet_order = out.max_deriv;

  distributions::LatticePmf step = dist.pmf();
  distributions::LatticePmf pmf;
  pmf.dim = d;
  pmf.unit = dist.unit();
  pmf.points.push_back({0, 0, 0});
  pmf.mass.push_back(1.0);
  pmf.step_count = 0;

  std::vector<double> shifts;
  for (int k = 0; k <= K; ++k) {
    if (k > 0) pmf = pmf.convolve(step);
    const std::size_t ns = pmf.support_size();
    shifts.resize(ns * static_cast<std::size_t>(d));
    for (std::size_t j = 0; j < ns; ++j) {
      double r[kMaxDim];
      pmf.point_coords(j, r);
      for (int i = 0; i < d; ++i) shifts[j * static_cast<std::size_t>(d) + i] = r[i] / sqrtn;
    }
    const double* mass = pmf.mass.data();
    const std::size_t col = static_cast<std::size_t>(k) * G;
    parallel_rows(G, jobs, [&](std::size_t lo, std::size_t hi) {
      double x[kMaxDim], y[kMaxDim];
      Jet jet;
      std::vector<KahanSum> acc(static_cast<std::size_t>(planes_n));
      for (std::size_t g = lo; g < hi; ++g) {
        out.grid.coords(g, x);
        for (auto& a : acc) a = KahanSum();
        for (std::size_t j = 0; j < ns; ++j) {
          const double* sh = shifts.data() + j * static_cast<std::size_t>(d);
          for (int i = 0; i < d; ++i) y[i] = x[i] + sh[i];
          const double w = mass[j];
          if (jet_order == 0) {
            acc[0].add(w * f.value(std::span<const double>(y, static_cast<std::size_t>(d))));
          } else {
            f.eval_jet(std::span<const double>(y, static_cast<std::size_t>(d)), 2, jet);
            acc[0].add(w * jet.f);
            for (int i = 0; i < d; ++i) acc[static_cast<std::size_t>(1 + i)].add(w * jet.grad[i]);
            for (int i = 0, h = 0; i < d; ++i)
              for (int jj = i; jj < d; ++jj, ++h)
                acc[static_cast<std::size_t>(1 + d + h)].add(w * jet.hess[Jet::hess_index(i, jj)]);
          }
        }
        for (int p = 0; p < planes_n; ++p)
          planes[static_cast<std::size_t>(p)][col + g] = acc[static_cast<std::size_t>(p)].value();
      }
    });
  }
}

// conservative upper bound on sum over k of |support of S_k|
double support_work_estimate(const distributions::StepDistribution& dist, int K) {
  const int d = dist.dim();
  std::int64_t lo[kMaxDim] = {0, 0, 0}, hi[kMaxDim] = {0, 0, 0};
  distributions::LatticePmf step = dist.pmf();
  for (const auto& p : step.points)
    for (int i = 0; i < d; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  double total = 0.0;
  for (int k = 0; k <= K; ++k) {
    double cells = 1.0;
    for (int i = 0; i < d; ++i)
      cells *= static_cast<double>(k) * static_cast<double>(hi[i] - lo[i]) + 1.0;
    total += cells;
  }
  return total;
}

}  // namespace

LatticeField build_field(const TestFunctionPtr& f, const StepDistribution& dist, int n,
                         double horizon, const std::optional<BoxSpec>& box, int max_deriv,
                         int jobs) {
  if (!f) throw std::invalid_argument("build_field: null test function");
  if (f->dim() != dist.dim()) throw std::invalid_argument("build_field: dimension mismatch");
  if (n < 1) throw std::invalid_argument("build_field: n >= 1 required");
  if (!(horizon > 0)) throw std::invalid_argument("build_field: horizon must be positive");
  if (max_deriv != 0 && max_deriv != 2)
    throw std::invalid_argument("build_field: max_deriv must be 0 or 2");
  if (dist.backend() != Backend::lattice)
    throw std::invalid_argument(
        "build_field: continuous backend has no exact field; use mc_value");

  const int d = dist.dim();
  const int K = last_column(n, horizon);

  LatticeField out;
  out.n = n;
  out.horizon = horizon;
  out.max_deriv = max_deriv;
  out.f = f;
  out.dist = dist;
  out.cols_ = K + 1;

  if (box) {
    if (!(box->half_width > 0.0) || !(box->step > 0.0))
      throw std::invalid_argument("build_field: box half_width and step must be positive");
    out.grid = Grid(d, box->half_width, box->step);
    out.tail.method = "user-box";
    out.tail.bound = kInf;
    if (f->decay() == Decay::vanishing) {
      // certify what this box can hide even though the caller picked it
      WalkRadius w = walk_radius(dist, n, horizon, 0.5e-6);
      const double rf = out.grid.extent() - w.rho;
      out.tail.walk_radius = w.rho;
      out.tail.bound = f->ck_norm(0) * (w.walk_tail + w.heat_tail) +
                       2.0 * f->tail_sup_bound(0, std::max(0.0, rf));
      out.tail.method = "user-box/" + w.method;
    }
  } else {
    TailBound tb = choose_box(*f, dist, n, horizon);
    out.grid = Grid(d, tb.half_width, 0.05);
    out.tail = tb;
  }
  out.tail.half_width = out.grid.extent();
  out.tail.grid_slack = grid_slack_of(*f, out.grid.delta);

  const std::size_t G = out.grid.size();
  const int planes_n = plane_total(d, max_deriv);
  const double work = support_work_estimate(dist, K) * static_cast<double>(G);

  bool cached_1d = false;
  if (d == 1) {
    distributions::LatticePmf step = dist.pmf();
    std::int64_t lo = 0, hi = 0;
    for (const auto& p : step.points) {
      lo = std::min(lo, p[0]);
      hi = std::max(hi, p[0]);
    }
    const double span = static_cast<double>(K) * static_cast<double>(hi - lo) + 1.0;
    const double bytes = span * static_cast<double>(G) * planes_n * 8.0;
    cached_1d = bytes <= kFastCacheBytes;
  }
  if (cached_1d) {
    if (work * planes_n > kFastWorkCap)
      throw std::invalid_argument("build_field: work budget exceeded; shrink n, horizon, or box");
  } else {
    if (work > kDirectWorkCap)
      throw std::invalid_argument("build_field: work budget exceeded; shrink n, horizon, or box");
  }

  out.planes_.assign(static_cast<std::size_t>(planes_n),
                     std::vector<double>(static_cast<std::size_t>(out.cols_) * G));
  if (cached_1d)
    build_planes_cached_1d(out, dist, out.planes_, planes_n, jobs);
  else
    build_planes_direct(out, dist, out.planes_, planes_n, jobs);
  return out;
}

double eval_exact(const TestFunction& f, const LatticePmf& pmf_k, int n,
                  std::span<const double> x) {
  if (f.dim() != pmf_k.dim) throw std::invalid_argument("eval_exact: dimension mismatch");
  if (static_cast<int>(x.size()) != f.dim())
    throw std::invalid_argument("eval_exact: point dimension mismatch");
  if (n < 1) throw std::invalid_argument("eval_exact: n >= 1 required");
  const double sqrtn = std::sqrt(static_cast<double>(n));
  const int d = pmf_k.dim;
  double r[kMaxDim], y[kMaxDim];
  KahanSum s;
  for (std::size_t j = 0; j < pmf_k.support_size(); ++j) {
    pmf_k.point_coords(j, r);
    for (int i = 0; i < d; ++i) y[i] = x[i] + r[i] / sqrtn;
    s.add(pmf_k.mass[j] * f.value(std::span<const double>(y, static_cast<std::size_t>(d))));
  }
  return s.value();
}

double eval_exact_sigma_hess(const TestFunction& f, const LatticePmf& pmf_k, int n,
                             const SymMat& sigma, std::span<const double> x) {
  if (f.dim() != pmf_k.dim || sigma.dim() != f.dim())
    throw std::invalid_argument("eval_exact_sigma_hess: dimension mismatch");
  if (n < 1) throw std::invalid_argument("eval_exact_sigma_hess: n >= 1 required");
  const double sqrtn = std::sqrt(static_cast<double>(n));
  const int d = pmf_k.dim;
  double r[kMaxDim], y[kMaxDim];
  Jet jet;
  KahanSum s;
  for (std::size_t j = 0; j < pmf_k.support_size(); ++j) {
    pmf_k.point_coords(j, r);
    for (int i = 0; i < d; ++i) y[i] = x[i] + r[i] / sqrtn;
    f.eval_jet(std::span<const double>(y, static_cast<std::size_t>(d)), 2, jet);
    s.add(pmf_k.mass[j] * jet.hess_trace_weighted(sigma));
  }
  return s.value();
}

std::vector<double> step_once(const LatticeField& field, int k) {
  if (!field.f || !field.dist) throw std::invalid_argument("step_once: empty field");
  if (k < 0 || k + 1 >= field.columns())
    throw std::invalid_argument("step_once: k out of range");
  const StepDistribution& dist = *field.dist;
  const LatticePmf pmf_k = dist.convolve_power(k);
  const int d = field.grid.d;
  const int n = field.n;
  const double sqrtn = std::sqrt(static_cast<double>(n));
  const std::size_t G = field.grid.size();

  std::vector<double> col(G);
  double x[kMaxDim], st[kMaxDim], y[kMaxDim];
  for (std::size_t g = 0; g < G; ++g) {
    field.grid.coords(g, x);
    KahanSum s;
    for (std::size_t j = 0; j < dist.support_size(); ++j) {
      dist.support_point(j, st);
      for (int i = 0; i < d; ++i) y[i] = x[i] + st[i] / sqrtn;
      s.add(dist.support_prob(j) *
            eval_exact(*field.f, pmf_k, n, std::span<const double>(y, static_cast<std::size_t>(d))));
    }
    col[g] = s.value();
  }
  return col;
}

double scheme_generator(const LatticeField& field, int k, std::size_t g) {
  if (k < 0 || k + 1 >= field.columns())
    throw std::invalid_argument("scheme_generator: k out of range");
  return field.n * (field.value(k + 1, g) - field.value(k, g));
}

McValue mc_value(const TestFunction& f, const StepDistribution& dist, int n,
                 std::span<const double> x, double t, std::int64_t N, std::uint64_t seed,
                 int jobs) {
  if (f.dim() != dist.dim()) throw std::invalid_argument("mc_value: dimension mismatch");
  if (static_cast<int>(x.size()) != f.dim())
    throw std::invalid_argument("mc_value: point dimension mismatch");
  if (n < 1) throw std::invalid_argument("mc_value: n >= 1 required");
  if (!(t >= 0.0)) throw std::invalid_argument("mc_value: t >= 0 required");
  if (N < 100) throw std::invalid_argument("mc_value: at least 100 samples required");
  if (N > (std::int64_t{1} << 31))
    throw std::invalid_argument("mc_value: sample count too large");

  McValue out;
  out.samples = N;
  out.k = static_cast<int>(std::floor(static_cast<double>(n) * t + 1e-9));
  if (out.k == 0) {
    out.estimate = f.value(x);
    out.stderr_ = 0.0;
    return out;
  }

  const int d = f.dim();
  const double sqrtn = std::sqrt(static_cast<double>(n));
  constexpr std::int64_t kChunk = 65536;
  const std::int64_t chunks = (N + kChunk - 1) / kChunk;

  // per-chunk sums are combined in chunk order, so the result does not
  // depend on how chunks are assigned to threads
  std::vector<std::pair<double, double>> partial(static_cast<std::size_t>(chunks));
  std::atomic<std::int64_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::int64_t c = next.fetch_add(1);
      if (c >= chunks) return;
      const int begin = static_cast<int>(c * kChunk);
      const int end = static_cast<int>(std::min(N, (c + 1) * kChunk));
      KahanSum s, s2;
      double y[kMaxDim];
      distributions::walk_endpoints(dist, out.k, begin, end, seed,
                                    [&](int, std::span<const double> pos) {
                                      for (int i = 0; i < d; ++i) y[i] = x[i] + pos[i] / sqrtn;
                                      const double v = f.value(
                                          std::span<const double>(y, static_cast<std::size_t>(d)));
                                      s.add(v);
                                      s2.add(v * v);
                                    });
      partial[static_cast<std::size_t>(c)] = {s.value(), s2.value()};
    }
  };
  if (jobs <= 1 || chunks == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    const int nt = static_cast<int>(std::min<std::int64_t>(jobs, chunks));
    pool.reserve(static_cast<std::size_t>(nt));
    for (int i = 0; i < nt; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  KahanSum S, S2;
  for (const auto& [a, b] : partial) {
    S.add(a);
    S2.add(b);
  }
  const double mean = S.value() / static_cast<double>(N);
  double var = 0.0;
  if (N > 1) var = std::max(0.0, (S2.value() - S.value() * mean) / static_cast<double>(N - 1));
  out.estimate = mean;
  out.stderr_ = std::sqrt(var / static_cast<double>(N));
  return out;
}

}  // namespace cltlab::scheme
