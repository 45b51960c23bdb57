#include "polling/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace polling {

namespace {

Params normalized(double l1, double l2, double mu, bool require_stable,
                  Params (*make)(double, double, double)) {
  if (!(std::isfinite(l1) && std::isfinite(l2) && std::isfinite(mu)) || l1 <= 0.0 || l2 <= 0.0 ||
      mu <= 0.0) {
    throw Error(ErrorKind::InvalidInput,
                "rates must be finite and positive (hypothesis K: lambda1, lambda2, mu > 0)");
  }
  const double total = l1 + l2 + mu;
  l1 /= total;
  l2 /= total;
  mu /= total;
  if (require_stable && !(l1 + l2 < mu)) {
    throw Error(ErrorKind::InvalidInput, "stability λ<μ violated (hypothesis K)");
  }
  return make(l1, l2, mu);
}

void append(KernelRow& row, const State& target, double prob) {
  for (auto& t : row.entries) {
    if (!t.killed && t.target == target) {
      t.prob += prob;
      return;
    }
  }
  row.entries.push_back({target, prob, false});
}

void require_valid(const State& s) {
  if (!s.valid()) throw Error(ErrorKind::InvalidInput, "invalid state " + to_string(s));
}

}  // namespace

Params Params::stable(double lambda1, double lambda2, double mu) {
  return normalized(lambda1, lambda2, mu, true,
                    [](double a, double b, double c) { return Params(a, b, c); });
}

Params Params::unstable_allowed(double lambda1, double lambda2, double mu) {
  return normalized(lambda1, lambda2, mu, false,
                    [](double a, double b, double c) { return Params(a, b, c); });
}

bool State::valid() const {
  if (x < 0 || y < 0) return false;
  if (sheet == Sheet::Serve2) return y >= 1;
  return x >= 1 || y == 0;
}

std::string to_string(const State& s) {
  std::ostringstream os;
  os << '(' << s.x << ',' << s.y << ',' << sheet_index(s.sheet) << ')';
  return os.str();
}

int sheet_index(Sheet s) { return s == Sheet::Serve1 ? 1 : 2; }

double KernelRow::sum() const {
  double total = 0.0;
  for (const auto& t : entries) total += t.prob;
  return total;
}

double KernelRow::killed_mass() const {
  double total = 0.0;
  for (const auto& t : entries)
    if (t.killed) total += t.prob;
  return total;
}

double KernelRow::to(const State& target) const {
  double total = 0.0;
  for (const auto& t : entries)
    if (!t.killed && t.target == target) total += t.prob;
  return total;
}

Moves moves_from(const State& s) {
  Moves m;
  if (s.is_origin()) {
    // An arrival to queue 2 in the empty system starts service of queue 2.
    m.east = {1, 0, Sheet::Serve1};
    m.north = {0, 1, Sheet::Serve2};
    m.service = kOrigin;
    m.service_is_self = true;
    return m;
  }
  m.east = {s.x + 1, s.y, s.sheet};
  m.north = {s.x, s.y + 1, s.sheet};
  if (s.sheet == Sheet::Serve1) {
    if (s.x > 1)
      m.service = {s.x - 1, s.y, Sheet::Serve1};
    else
      m.service = s.y > 0 ? State{0, s.y, Sheet::Serve2} : kOrigin;  // (1,0,1) empties the system
  } else {
    if (s.y > 1)
      m.service = {s.x, s.y - 1, Sheet::Serve2};
    else
      m.service = s.x > 0 ? State{s.x, 0, Sheet::Serve1} : kOrigin;
  }
  return m;
}

KernelRow kernel_row(const Params& p, const State& s) {
  require_valid(s);
  const Moves m = moves_from(s);
  KernelRow row;
  append(row, m.east, p.lambda1());
  append(row, m.north, p.lambda2());
  append(row, m.service, p.mu());
  return row;
}

KernelRow twisted_kernel_row(const Params& p, const State& s) {
  require_valid(s);
  const TwistedRates t = twisted_rates(p);
  const Moves m = moves_from(s);
  KernelRow row;
  append(row, m.east, t.lt1);
  append(row, m.north, t.lt2);
  // h is constant on the origin self-loop, so its mass stays mu.
  append(row, m.service, m.service_is_self ? p.mu() : t.mt);
  return row;
}

double conditioned_harmonic_ratio(const Params& p, int from_level, int to_level) {
  if (to_level == 0) return 0.0;
  const double c = std::log(p.rho_inv());
  // (e^{c n} - 1) / (e^{c m} - 1) = e^{c (n - m)} (1 - e^{-c n}) / (1 - e^{-c m})
  return std::exp(c * (to_level - from_level)) * std::expm1(-c * to_level) /
         std::expm1(-c * from_level);
}

double conditioned_harmonic(const Params& p, int level, const State& s) {
  if (level < 1) throw Error(ErrorKind::InvalidInput, "target level must be >= 1");
  if (s.level() >= level) return 1.0;
  return conditioned_harmonic_ratio(p, level, s.level());
}

KernelRow conditioned_kernel_row(const Params& p, int level, const State& s) {
  require_valid(s);
  if (level < 1) throw Error(ErrorKind::InvalidInput, "target level must be >= 1");
  if (s.level() >= level)
    throw Error(ErrorKind::InvalidInput,
                "conditioned kernel undefined at or beyond the target level: " + to_string(s));
  const KernelRow base = kernel_row(p, s);
  KernelRow row;
  if (s.is_origin()) {
    double norm = 0.0;
    for (const auto& t : base.entries)
      if (!t.target.is_origin()) norm += t.prob * conditioned_harmonic(p, level, t.target);
    for (const auto& t : base.entries)
      if (!t.target.is_origin())
        append(row, t.target, t.prob * conditioned_harmonic(p, level, t.target) / norm);
    return row;
  }
  for (const auto& t : base.entries) {
    if (t.target.is_origin()) continue;  // h_alpha vanishes at the origin
    const int to = std::min(t.target.level(), level);
    append(row, t.target, t.prob * conditioned_harmonic_ratio(p, s.level(), to));
  }
  return row;
}

KernelRow lazy_transform(const KernelRow& row, const State& self) {
  KernelRow out;
  for (const auto& t : row.entries) {
    if (t.killed)
      out.entries.push_back({t.target, 0.5 * t.prob, true});
    else
      append(out, t.target, 0.5 * t.prob);
  }
  append(out, self, 0.5);
  return out;
}

double geometric_harmonic(const Params& p, const State& s) {
  return std::pow(p.rho_inv(), s.level());
}

TwistedRates twisted_rates(const Params& p) {
  TwistedRates t{};
  const double lam = p.lambda();
  t.lt1 = p.lambda1() / lam * p.mu();
  t.lt2 = p.lambda2() / lam * p.mu();
  t.mt = lam;
  t.a = p.lambda1() / p.rho();
  t.b = p.mu() * p.rho();
  t.c = p.lambda2() / p.rho();
  t.m1 = {t.lt1 - t.mt, t.lt2};
  t.m2 = {t.lt1, t.lt2 - t.mt};
  return t;
}

std::pair<HarmonicPoint, HarmonicPoint> general_rates_harmonic(double lambda1, double lambda2,
                                                               double mu1, double mu2) {
  const double a = lambda1 * mu1 + lambda2 * mu2;
  const double disc = 1.0 - 4.0 * a;
  if (disc < 0.0)
    throw Error(ErrorKind::InvalidInput, "eggs do not intersect: 1 - 4(l1 mu1 + l2 mu2) < 0");
  const double denom = 2.0 * a / mu1;
  const double lo = (1.0 - std::sqrt(disc)) / denom;
  const double hi = (1.0 + std::sqrt(disc)) / denom;
  return {{lo, mu2 / mu1 * lo}, {hi, mu2 / mu1 * hi}};
}

FreeIncrements sheet_increments(const Params& p, Sheet sheet) {
  if (sheet == Sheet::Serve1) return {{1, 0, p.lambda1()}, {0, 1, p.lambda2()}, {-1, 0, p.mu()}};
  return {{1, 0, p.lambda1()}, {0, 1, p.lambda2()}, {0, -1, p.mu()}};
}

FreeIncrements twisted_sheet_increments(const Params& p, Sheet sheet) {
  const TwistedRates t = twisted_rates(p);
  if (sheet == Sheet::Serve1) return {{1, 0, t.lt1}, {0, 1, t.lt2}, {-1, 0, t.mt}};
  return {{1, 0, t.lt1}, {0, 1, t.lt2}, {0, -1, t.mt}};
}

std::vector<std::pair<LatticePoint, double>> time_reversal_row(
    const std::function<double(LatticePoint)>& psi, const FreeIncrements& steps, LatticePoint at) {
  const double here = psi(at);
  if (!(here > 0.0)) throw Error(ErrorKind::InvalidInput, "reversal undefined at null states");
  std::vector<std::pair<LatticePoint, double>> row;
  for (const auto& st : steps) {
    const LatticePoint from{at.x - st.dx, at.y - st.dy};
    const double w = psi(from) * st.prob / here;
    bool merged = false;
    for (auto& [pt, pr] : row) {
      if (pt == from) {
        pr += w;
        merged = true;
      }
    }
    if (!merged) row.emplace_back(from, w);
  }
  return row;
}

}  // namespace polling
