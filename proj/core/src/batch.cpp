#include "polling/batch.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

namespace polling {

namespace {

constexpr double kCritical = 1e-12;

KernelRow merged(std::map<std::tuple<int, int, int>, double>& acc) {
  KernelRow row;
  for (const auto& [key, prob] : acc) {
    const auto [x, y, sheet] = key;
    row.entries.push_back({{x, y, sheet == 1 ? Sheet::Serve1 : Sheet::Serve2}, prob, false});
  }
  return row;
}

// Target of one slot from s with arrivals (u, v).
State slot_target(const State& s, int u, int v) {
  if (s.is_origin()) {
    if (u >= 1) return {u, v, Sheet::Serve1};
    if (v >= 1) return {0, v, Sheet::Serve2};
    return kOrigin;
  }
  if (s.sheet == Sheet::Serve1) {
    const int x = s.x - 1 + u, y = s.y + v;
    if (x >= 1) return {x, y, Sheet::Serve1};
    return y >= 1 ? State{0, y, Sheet::Serve2} : kOrigin;
  }
  const int x = s.x + u, y = s.y - 1 + v;
  if (y >= 1) return {x, y, Sheet::Serve2};
  return x >= 1 ? State{x, 0, Sheet::Serve1} : kOrigin;
}

KernelRow build_row(const BatchParams& bp, const State& s, double z) {
  if (!s.valid()) throw Error(ErrorKind::InvalidInput, "invalid state " + to_string(s));
  const std::vector<double> fu = bp.f().tilted_density(z);
  const std::vector<double> gv = bp.g().tilted_density(z);
  // f(u) g(v) z^{u+v} = F(z) G(z) * tilted(u) tilted(v); the served customer removes
  // one level, contributing 1/z away from the origin.
  const double scale = bp.f().F(z) * bp.g().F(z) / (s.is_origin() ? 1.0 : z);
  std::map<std::tuple<int, int, int>, double> acc;
  for (std::size_t u = 0; u < fu.size(); ++u) {
    if (fu[u] == 0.0) continue;
    for (std::size_t v = 0; v < gv.size(); ++v) {
      if (gv[v] == 0.0) continue;
      const State t = slot_target(s, static_cast<int>(u), static_cast<int>(v));
      acc[{t.x, t.y, sheet_index(t.sheet)}] += scale * fu[u] * gv[v];
    }
  }
  return merged(acc);
}

}  // namespace

ArrivalPGF ArrivalPGF::finite(std::vector<double> density) {
  if (density.empty()) throw Error(ErrorKind::InvalidInput, "empty arrival density");
  double total = 0.0;
  for (double d : density) {
    if (!(d >= 0.0) || !std::isfinite(d))
      throw Error(ErrorKind::InvalidInput, "arrival density entries must be finite and >= 0");
    total += d;
  }
  if (std::abs(total - 1.0) > 1e-12)
    throw Error(ErrorKind::InvalidInput, "arrival density must sum to 1");
  ArrivalPGF pgf;
  pgf.kind_ = Kind::FiniteSupport;
  pgf.density_ = std::move(density);
  return pgf;
}

ArrivalPGF ArrivalPGF::poisson(double rate) {
  if (!(rate > 0.0) || !std::isfinite(rate))
    throw Error(ErrorKind::InvalidInput, "Poisson rate must be finite and positive");
  ArrivalPGF pgf;
  pgf.kind_ = Kind::Poisson;
  pgf.rate_ = rate;
  return pgf;
}

double ArrivalPGF::F(double z) const {
  if (kind_ == Kind::Poisson) return std::exp(rate_ * (z - 1.0));
  double acc = 0.0;
  for (std::size_t n = density_.size(); n-- > 0;) acc = acc * z + density_[n];
  return acc;
}

double ArrivalPGF::dF(double z) const {
  if (kind_ == Kind::Poisson) return rate_ * std::exp(rate_ * (z - 1.0));
  double acc = 0.0;
  for (std::size_t n = density_.size(); n-- > 1;) acc = acc * z + static_cast<double>(n) * density_[n];
  return acc;
}

std::vector<double> ArrivalPGF::tilted_density(double z) const {
  std::vector<double> out;
  if (kind_ == Kind::FiniteSupport) {
    const double norm = F(z);
    double zn = 1.0;
    for (double d : density_) {
      out.push_back(d * zn / norm);
      zn *= z;
    }
    return out;
  }
  // Tilting a Poisson(r) law by z^n gives Poisson(r z).
  const double m = rate_ * z;
  double term = std::exp(-m), cum = 0.0;
  for (int n = 0;; ++n) {
    out.push_back(term);
    cum += term;
    if (n > m && 1.0 - cum < 1e-15) break;
    term *= m / (n + 1);
  }
  return out;
}

BatchParams::BatchParams(ArrivalPGF f, ArrivalPGF g) : f_(std::move(f)), g_(std::move(g)) {
  if (!(lambda1() + lambda2() < 1.0))
    throw Error(ErrorKind::InvalidInput, "stability lambda1 + lambda2 < 1 violated");
  if (!(lambda1() > 0.0) || !(lambda2() > 0.0))
    throw Error(ErrorKind::InvalidInput, "both queues need positive arrival rates");
}

double batch_psi(const BatchParams& bp, double gamma) {
  return bp.f().F(gamma) * bp.g().F(gamma) / gamma;
}

double find_alpha(const BatchParams& bp) {
  // psi(1) = 1 and psi'(1) = lambda1 + lambda2 - 1 < 0, so psi dips below 1 right of 1.
  auto log_psi = [&](double z) { return std::log(bp.f().F(z)) + std::log(bp.g().F(z)) - std::log(z); };
  double hi = 2.0;
  while (!(log_psi(hi) > 0.0)) {
    hi *= 2.0;
    if (hi > 1e8 || !std::isfinite(log_psi(hi)))
      throw Error(ErrorKind::Numerical, "no finite twist: psi never returns to 1");
  }
  const auto [zmin, vmin] = boost::math::tools::brent_find_minima(log_psi, 1.0, hi, 52);
  if (!(vmin < 0.0)) throw Error(ErrorKind::Numerical, "no finite twist: psi has no dip below 1");
  std::uintmax_t iters = 200;
  const auto [a, b] = boost::math::tools::toms748_solve(
      log_psi, zmin, hi, boost::math::tools::eps_tolerance<double>(52), iters);
  double alpha = 0.5 * (a + b);
  for (int k = 0; k < 3; ++k) {
    const double d = bp.f().log_derivative(alpha) + bp.g().log_derivative(alpha) - 1.0 / alpha;
    const double step = log_psi(alpha) / d;
    if (!std::isfinite(step)) break;
    alpha -= step;
  }
  return alpha;
}

KernelRow batch_kernel_row(const BatchParams& bp, const State& s) {
  return build_row(bp, s, 1.0);
}

KernelRow batch_twisted_row(const BatchParams& bp, double alpha, const State& s) {
  if (!(alpha > 1.0)) throw Error(ErrorKind::InvalidInput, "twist requires alpha > 1");
  return build_row(bp, s, alpha);
}

BatchRegimeReport batch_classify(const BatchParams& bp) {
  BatchRegimeReport r;
  r.alpha = find_alpha(bp);
  const double lf = bp.f().log_derivative(r.alpha), lg = bp.g().log_derivative(r.alpha);
  r.sheet1_mean_increment = r.alpha * lf - 1.0;
  r.sheet2_mean_increment = r.alpha * lg - 1.0;
  r.sheet1_indicator = lf - 1.0 / r.alpha;
  r.sheet2_indicator = lg - 1.0 / r.alpha;
  if (std::abs(r.sheet1_indicator) >= kCritical)
    r.sheet1 = r.sheet1_indicator > 0.0 ? Regime::Ray : Regime::Spiral;
  if (std::abs(r.sheet2_indicator) >= kCritical)
    r.sheet2 = r.sheet2_indicator > 0.0 ? Regime::Ray : Regime::Spiral;
  return r;
}

}  // namespace polling
