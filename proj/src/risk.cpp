#include "ghast/risk.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_map>
#include <limits>

namespace ghast::risk {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double log_sum_exp(double a, double b, double c) { return log_sum_exp(log_sum_exp(a, b), c); }

// Continued fraction for the incomplete beta (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 400;
  constexpr double kEps = 3e-16;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) <= kEps) return h;
  }
  throw NonConvergent("reg_inc_beta: continued fraction did not converge");
}

// Generic 1-D minimizer: coarse scan over a log-spaced grid, refined by
// golden-section between the bracketing neighbors. Returns the minimum value;
// never exceeds any scanned grid point.
template <typename F>
double grid_golden_min(F f, double lo, double hi, int grid_points = 64, int refine_iters = 60) {
  double best = kInf;
  int best_i = 0;
  double log_lo = std::log(lo), log_hi = std::log(hi);
  std::vector<double> xs(grid_points);
  for (int i = 0; i < grid_points; ++i) {
    double x = std::exp(log_lo + (log_hi - log_lo) * i / (grid_points - 1));
    xs[i] = x;
    double v = f(x);
    if (v < best) {
      best = v;
      best_i = i;
    }
  }
  double a = xs[std::max(0, best_i - 1)];
  double b = xs[std::min(grid_points - 1, best_i + 1)];
  constexpr double kPhi = 0.6180339887498949;
  double x1 = b - kPhi * (b - a), x2 = a + kPhi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  for (int it = 0; it < refine_iters; ++it) {
    if (f1 < f2) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - kPhi * (b - a);
      f1 = f(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + kPhi * (b - a);
      f2 = f(x2);
    }
  }
  return std::min({best, f1, f2});
}

}  // namespace

double reg_inc_beta(double x, double a, double b) {
  if (!(x >= 0.0 && x <= 1.0)) throw DomainError("reg_inc_beta: x outside [0,1]");
  if (!(a > 0.0) || !(b > 0.0)) throw DomainError("reg_inc_beta: a and b must be positive");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0))
    return std::exp(ln_front) * betacf(a, b, x) / a;
  return 1.0 - std::exp(ln_front) * betacf(b, a, 1.0 - x) / b;
}

double nb_tail(std::int64_t k, std::int64_t successes, double fail_p) {
  if (successes < 1) throw DomainError("nb_tail: successes must be >= 1");
  if (!(fail_p >= 0.0 && fail_p <= 1.0)) throw DomainError("nb_tail: bad probability");
  if (k <= 0) return 1.0;
  if (fail_p == 0.0) return 0.0;
  if (fail_p == 1.0) return 1.0;
  return reg_inc_beta(fail_p, static_cast<double>(k), static_cast<double>(successes));
}

double binom_upper_tail(std::int64_t k, std::int64_t n, double p) {
  if (n < 0) throw DomainError("binom_upper_tail: n < 0");
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binom_upper_tail: bad probability");
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (p == 0.0) return 0.0;
  if (p == 1.0) return 1.0;
  return reg_inc_beta(p, static_cast<double>(k), static_cast<double>(n - k + 1));
}

double ln_g1(double s, double beta) {
  // log(beta * e^s + (1-beta) * e^-s); s stays below ~700 so the direct form
  // cannot overflow before the log.
  if (s < 600.0) return std::log(beta * std::exp(s) + (1.0 - beta) * std::exp(-s));
  return log_sum_exp(beta > 0 ? std::log(beta) + s : -kInf,
                     beta < 1 ? std::log1p(-beta) - s : -kInf);
}

double ln_g2(double s, double beta, std::uint64_t eta_w) {
  double ew = static_cast<double>(eta_w);
  double x = s * ew;
  if (x < 600.0)
    return std::log((ew - 1.0 + beta * std::exp(x) + (1.0 - beta) * std::exp(-x)) / ew);
  double a = eta_w > 1 ? std::log(ew - 1.0) : -kInf;
  double b = beta > 0 ? std::log(beta) + x : -kInf;
  double c = beta < 1 ? std::log1p(-beta) - x : -kInf;
  return log_sum_exp(a, b, c) - std::log(ew);
}

GPair g_funcs(double s, double beta, std::uint64_t eta_w) {
  if (!(s > 0.0)) throw DomainError("g_funcs: s must be positive");
  return GPair{std::exp(ln_g1(s, beta)), std::exp(ln_g2(s, beta, eta_w))};
}

void RiskQuery::validate() const {
  if (m < 0 || n < 0 || theta < 0 || t < 0) throw DomainError("risk query: negative field");
  if (t > theta) throw DomainError("risk query: t must be <= theta");
  if (!(beta >= 0.0 && beta < 0.5)) throw DomainError("risk query: beta outside [0, 0.5)");
  if (eta_w < 1) throw DomainError("risk query: eta_w must be >= 1");
}

double partial_risk(std::int64_t K, std::int64_t T, const RiskQuery& q) {
  q.validate();
  if (K >= q.n) return 1.0;
  std::int64_t deficit = q.n - K;
  std::int64_t theta_rem = std::max<std::int64_t>(q.theta - T, 0);
  const double s_lo = 1e-7, s_hi = 64.0;
  const std::int64_t ew = static_cast<std::int64_t>(q.eta_w);

  // Memo: the simulator asks the same (deficit, horizon) pairs over and over.
  struct MemoKey {
    std::uint64_t beta_bits, eta_w;
    std::int64_t deficit, theta_rem;
    bool operator==(const MemoKey&) const = default;
  };
  struct MemoHash {
    std::size_t operator()(const MemoKey& k) const {
      std::uint64_t h = k.beta_bits * 0x9e3779b97f4a7c15ull;
      h ^= k.eta_w + 0x517cc1b727220a95ull + (h << 6);
      h ^= static_cast<std::uint64_t>(k.deficit) * 0xbf58476d1ce4e5b9ull;
      h ^= static_cast<std::uint64_t>(k.theta_rem) * 0x94d049bb133111ebull;
      return static_cast<std::size_t>(h);
    }
  };
  thread_local std::unordered_map<MemoKey, double, MemoHash> memo;
  std::uint64_t beta_bits;
  static_assert(sizeof beta_bits == sizeof q.beta);
  std::memcpy(&beta_bits, &q.beta, sizeof beta_bits);
  MemoKey key{beta_bits, q.eta_w, deficit, theta_rem};
  if (auto it = memo.find(key); it != memo.end()) return it->second;

  // Precompute the log-spaced s grid once; each term then takes a coarse
  // minimum over it (64 multiply-adds) and only promising terms get a
  // golden-section refinement. Skipping the refinement is sound: any grid
  // point is a valid Chernoff exponent, refinement only tightens.
  constexpr int kGrid = 64;
  double sg[kGrid], lg1[kGrid], lg2[kGrid], neg_cs[kGrid], cont_base[kGrid];
  {
    double log_lo = std::log(s_lo), log_hi = std::log(s_hi);
    for (int k = 0; k < kGrid; ++k) {
      sg[k] = std::exp(log_lo + (log_hi - log_lo) * k / (kGrid - 1));
      lg1[k] = ln_g1(sg[k], q.beta);
      lg2[k] = ln_g2(sg[k], q.beta, q.eta_w);
      neg_cs[k] = -static_cast<double>(deficit) * sg[k];
      cont_base[k] = lg2[k] < 0.0
                         ? static_cast<double>(theta_rem) * lg1[k] + neg_cs[k] -
                               std::log(-std::expm1(lg2[k]))
                         : kInf;
    }
  }

  double sum = 0.0;
  constexpr std::int64_t kMaxTerms = 1'000'000;
  const double dc = static_cast<double>(deficit);
  double result = -1.0;
  for (std::int64_t i = 1; i <= kMaxTerms && result < 0.0; ++i) {
    std::int64_t i1 = std::min(i, theta_rem);
    std::int64_t i2 = i - i1;
    // Maximum possible downward move after i blocks; the walk cannot reach
    // zero earlier than that covers the deficit.
    if (i1 + i2 * ew < deficit) continue;
    double d1 = static_cast<double>(i1), d2 = static_cast<double>(i2);
    double coarse = kInf;
    int coarse_k = 0;
    for (int k = 0; k < kGrid; ++k) {
      double v = d1 * lg1[k] + d2 * lg2[k] + neg_cs[k];
      if (v < coarse) {
        coarse = v;
        coarse_k = k;
      }
    }
    double best_ln = coarse;
    // Refinement only matters for terms that contribute; the coarse grid value
    // is itself a valid (slightly looser) exponent for the rest.
    if (coarse > -38.0) {
      auto ln_term = [&](double s) {
        return d1 * ln_g1(s, q.beta) + d2 * ln_g2(s, q.beta, q.eta_w) - dc * s;
      };
      double a = sg[std::max(0, coarse_k - 1)];
      double b = sg[std::min(kGrid - 1, coarse_k + 1)];
      constexpr double kPhi = 0.6180339887498949;
      double x1 = b - kPhi * (b - a), x2 = a + kPhi * (b - a);
      double f1 = ln_term(x1), f2 = ln_term(x2);
      for (int it = 0; it < 18; ++it) {
        if (f1 < f2) {
          b = x2;
          x2 = x1;
          f2 = f1;
          x1 = b - kPhi * (b - a);
          f1 = ln_term(x1);
        } else {
          a = x1;
          x1 = x2;
          f1 = f2;
          x2 = a + kPhi * (b - a);
          f2 = ln_term(x2);
        }
      }
      best_ln = std::min({coarse, f1, f2});
    }
    sum += std::exp(best_ln);
    if (sum >= 1.0) {
      result = 1.0;
      break;
    }
    if (i >= theta_rem) {
      // Rigorous continuation: at any fixed s with ln g2(s) < 0, every later
      // term j is bounded by exp(theta~*lng1(s) + j2*lng2(s) - c*s), and those
      // bounds sum geometrically. Take the best grid point.
      double cont = kInf;
      for (int k = 0; k < kGrid; ++k)
        cont = std::min(cont, cont_base[k] + (d2 + 1.0) * lg2[k]);
      if (cont < std::log(1e-12)) result = std::min(1.0, sum + std::exp(cont));
    }
  }
  if (result < 0.0) throw NonConvergent("partial_risk: series did not converge");
  if (memo.size() > 2'000'000) memo.clear();
  memo.emplace(key, result);
  return result;
}

double confirmation_risk(const RiskQuery& q) {
  q.validate();
  double risk = nb_tail(q.t - q.m + 1, q.m + 1, q.beta);
  risk += partial_risk(0, q.t, q);
  for (std::int64_t k = 0; k < q.n; ++k) {
    double tail = nb_tail(k, q.m + 1, q.beta);
    if (tail < 1e-18) {
      // Everything further is bounded by this tail; keep the sum an upper bound.
      risk += tail * static_cast<double>(q.n - k);
      break;
    }
    risk += tail * partial_risk(k, q.t, q);
    if (risk >= 1.0) return 1.0;
  }
  return std::clamp(risk, 0.0, 1.0);
}

double e1_bound(std::int64_t a_height_gap, const BreakQuery& bq) {
  // The age condition needs the timer height to advance strictly past
  // eta_b - gap within the first theta blocks.
  std::int64_t needed = static_cast<std::int64_t>(bq.eta_b) - a_height_gap + 1;
  return binom_upper_tail(needed, bq.theta, 1.0 / static_cast<double>(bq.eta_t));
}

namespace {

// Chernoff bound on the adaptive-weight yield of n adversary blocks:
// Pr[Y_n >= rho] with increments of eta_w taken with probability 1/eta_w.
double y_bound(std::int64_t n, std::int64_t rho, std::uint64_t eta_w) {
  if (rho <= 0) return 1.0;
  if (n <= 0) return 0.0;
  double ew = static_cast<double>(eta_w);
  if (static_cast<double>(n) * ew < static_cast<double>(rho)) return 0.0;
  auto ln_term = [&](double t) {
    double ln_factor = log_sum_exp(eta_w > 1 ? std::log(ew - 1.0) : -kInf, t * ew) - std::log(ew);
    return n * ln_factor - t * static_cast<double>(rho);
  };
  double ln = grid_golden_min(ln_term, 1e-7, 64.0);
  return std::min(1.0, std::exp(ln));
}

}  // namespace

namespace {

// Round toward the conservative side in ~6% buckets; the bound is monotone in
// every field, so evaluating slightly worse stats still upper-bounds the true
// slice and makes the value cacheable across confirmation sweeps.
std::int64_t bucket_up(std::int64_t x) {
  if (x <= 0) return x;
  std::int64_t step = std::max<std::int64_t>(1, x / 16);
  return (x + step - 1) / step * step;
}
std::int64_t bucket_down(std::int64_t x) {
  if (x <= 0) return x;
  std::int64_t step = std::max<std::int64_t>(1, x / 16);
  return x / step * step;
}

}  // namespace

double e2_bound(const BreakSlice& s_in, const BreakQuery& bq) {
  BreakSlice s = s_in;
  s.m = bucket_up(s.m);
  s.l = bucket_up(s.l);
  s.w = bucket_down(s.w);
  std::int64_t rho = s.w - static_cast<std::int64_t>(bq.eta_a) - s.l;
  if (rho <= 0) return 1.0;  // vacuous

  struct Key {
    std::int64_t m, l, w, theta;
    std::uint64_t eta_a, eta_w, beta_bits;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::uint64_t h = 0x9e3779b97f4a7c15ull;
      for (std::uint64_t v :
           {static_cast<std::uint64_t>(k.m), static_cast<std::uint64_t>(k.l),
            static_cast<std::uint64_t>(k.w), static_cast<std::uint64_t>(k.theta), k.eta_a,
            k.eta_w, k.beta_bits})
        h = (h ^ v) * 0xbf58476d1ce4e5b9ull;
      return static_cast<std::size_t>(h ^ (h >> 29));
    }
  };
  thread_local std::unordered_map<Key, double, KeyHash> memo;
  std::uint64_t beta_bits;
  std::memcpy(&beta_bits, &bq.beta, sizeof beta_bits);
  Key key{s.m, s.l, s.w, bucket_up(bq.theta), bq.eta_a, bq.eta_w, beta_bits};
  if (auto it = memo.find(key); it != memo.end()) return it->second;
  BreakQuery bq_q = bq;
  bq_q.theta = key.theta;

  auto objective = [&](std::int64_t n1, std::int64_t n2) {
    double f = nb_tail(n1, s.m + 1, bq_q.beta);
    f += binom_upper_tail(n2, bq_q.theta, bq_q.beta);
    f += y_bound(n1 + n2, rho, bq_q.eta_w);
    return f;
  };
  // Fast path: a deviation-bound probe a few sigmas past the means settles
  // the overwhelmingly common tiny-slice case in two evaluations.
  double mean1 = s.m * bq_q.beta / std::max(1e-9, 1.0 - bq_q.beta);
  double sd1 = std::sqrt(std::max(1.0, (s.m + 1) * bq_q.beta)) / std::max(1e-9, 1.0 - bq_q.beta);
  double mean2 = bq_q.theta * bq_q.beta;
  double sd2 = std::sqrt(std::max(1.0, bq_q.theta * bq_q.beta * (1 - bq_q.beta)));
  std::int64_t n1 = static_cast<std::int64_t>(std::ceil(mean1 + 8 * sd1)) + 4;
  std::int64_t n2 = static_cast<std::int64_t>(std::ceil(mean2 + 8 * sd2)) + 4;
  auto finish = [&](double value) {
    if (memo.size() > 1'000'000) memo.clear();
    memo.emplace(key, value);
    return value;
  };
  double best = objective(n1, n2);
  // Negligible already: refining a ~1e-15 bound cannot matter downstream.
  if (best < 1e-15) return finish(best);
  best = std::min(best, objective(n1 + (n1 >> 1) + 1, n2 + (n2 >> 1) + 1));
  if (best < 1e-15) return finish(best);
  bool improved = true;
  int rounds = 0;
  while (improved && rounds++ < 64) {
    improved = false;
    for (std::int64_t step : {1024, 256, 64, 16, 4, 1}) {
      for (int dim = 0; dim < 2; ++dim) {
        for (int sign : {1, -1}) {
          std::int64_t c1 = n1 + (dim == 0 ? sign * step : 0);
          std::int64_t c2 = n2 + (dim == 1 ? sign * step : 0);
          if (c1 < 0 || c2 < 0) continue;
          double v = objective(c1, c2);
          if (v < best) {
            best = v;
            n1 = c1;
            n2 = c2;
            improved = true;
          }
        }
      }
    }
  }
  for (std::int64_t g1 = 0; g1 <= 10; ++g1) {
    for (std::int64_t g2 = 0; g2 <= 10; ++g2) {
      std::int64_t c1 = g1 * std::max<std::int64_t>(1, (s.m + 10) / 10);
      std::int64_t c2 = g2 * std::max<std::int64_t>(1, (bq_q.theta + 10) / 10);
      best = std::min(best, objective(c1, c2));
    }
  }
  return finish(std::min(1.0, best));
}

double assumption_break_risk(const BreakQuery& bq) {
  double total = 0.0;
  for (const auto& s : bq.slices) {
    double e1 = e1_bound(s.height_gap, bq);
    if (e1 < 1e-16) {  // min(e1, e2) <= e1, no need to price the other side
      total += e1;
      continue;
    }
    total += std::min(e1, e2_bound(s, bq));
    if (total >= 1.0) return 1.0;
  }
  return std::clamp(total, 0.0, 1.0);
}

}  // namespace ghast::risk
