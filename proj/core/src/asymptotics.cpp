#include "polling/asymptotics.hpp"

#include <cmath>
#include <numbers>

namespace polling {

namespace {

using Eigen::Vector2d;

void require_ray_on_sheet1(const Params& p, const char* what) {
  if (classify(p).sheet1 != Regime::Ray)
    throw Error(ErrorKind::RegimePrecondition,
                std::string(what) + " inapplicable: sheet 1 is a spiral (R1 fails)");
}

Vector2d northern_l1(const Vector2d& direction) {
  if (direction.y() < 0.0 || direction.x() + direction.y() <= 0.0)
    throw Error(ErrorKind::InvalidInput, "direction must be northern and reach x + y = level");
  return direction / (direction.x() + direction.y());
}

}  // namespace

double AsymptoticEstimate::evaluate(int level) const {
  if (!prefactor) throw Error(ErrorKind::InvalidInput, "prefactor unknown: " + validity);
  return std::exp(std::log(*prefactor) + level * std::log(exponential_base) +
                  polynomial_power * std::log(double(level)));
}

State lattice_target(const Vector2d& l1_direction, int level) {
  const int x = static_cast<int>(std::floor(level * l1_direction.x() + 0.5));
  return {x, level - x, Sheet::Serve1};
}

RayAsymptotics ray_asymptotics(const Params& p, int level, double boundary_sum) {
  require_ray_on_sheet1(p, "ray asymptotics");
  if (level < 1) throw Error(ErrorKind::InvalidInput, "level must be >= 1");
  if (!(boundary_sum > 0.0) || !std::isfinite(boundary_sum))
    throw Error(ErrorKind::InvalidInput, "boundary sum must be finite and positive");
  RayAsymptotics r;
  r.ney_spitzer = ney_spitzer_data(twisted_sheet_increments(p, Sheet::Serve1));
  r.B = ney_spitzer_prefactor(r.ney_spitzer) * boundary_sum;
  r.direction = r.ney_spitzer.m / r.ney_spitzer.l1_norm_m;
  r.target = lattice_target(r.direction, level);
  r.estimate.exponential_base = p.rho();
  r.estimate.polynomial_power = -0.5;
  r.estimate.prefactor = r.B * std::sqrt(r.ney_spitzer.l1_norm_m / (2.0 * std::numbers::pi));
  r.estimate.validity = "ray direction on sheet 1, level -> infinity";
  r.value = r.estimate.evaluate(level);
  return r;
}

double off_ray_rate(const Params& p, const Vector2d& direction) {
  require_ray_on_sheet1(p, "off-ray rate");
  const Vector2d d = northern_l1(direction);
  const TwistedRates t = twisted_rates(p);
  const Vector2d m(t.m1.first, t.m1.second);
  if (std::abs(d.x() * m.y() - d.y() * m.x()) <= 1e-12 * m.norm()) return 0.0;
  const TwistSolution tw = twist_toward(sheet_increments(p, Sheet::Serve1), direction);
  const double c = std::log(p.rho_inv());
  if (tw.on_face)  // only the component along the face is finite and weighted
    return d.y() == 0.0 ? (tw.theta_star.x() - c) * d.x() : (tw.theta_star.y() - c) * d.y();
  return (tw.theta_star - Vector2d::Constant(c)).dot(d);
}

double bridge_constant_cplus(const Params& p) {
  require_ray_on_sheet1(p, "bridge constant");
  const double q = std::sqrt(p.mu() * p.lambda1());  // killing kappa and step p coincide
  return (1.0 / q) * std::sqrt((1.0 - 2.0 * q) / (4.0 * std::numbers::pi * q));
}

TransferConstants transfer_constants(const Params& p) {
  require_ray_on_sheet1(p, "transfer constants");
  const RegimeReport rep = classify(p);
  const SpecialPoints& s = rep.special;
  const double l1 = p.lambda1(), l2 = p.lambda2(), mu = p.mu();
  TransferConstants tc;
  tc.subcase = rep.subcase;
  tc.K21 = -mu * s.beta_T / (l2 * s.beta_T * s.beta_T - s.beta_T + mu);
  const double z = rep.subcase == Subcase::Cascade ? s.gamma_T : s.alpha_E;
  tc.K10 = -z / (l1 * z * z - z + mu);
  const double disc = std::sqrt(1.0 - 4.0 * l2 * mu);
  tc.root_lo = (1.0 - disc) / (2.0 * l2);
  tc.root_hi = (1.0 + disc) / (2.0 * l2);
  return tc;
}

AsymptoticEstimate sector_asymptotics(const Params& p, const Vector2d& direction,
                                      std::optional<double> boundary_sum) {
  require_ray_on_sheet1(p, "sector asymptotics");
  const RegimeReport rep = classify(p);
  const Vector2d d = northern_l1(direction);
  const TwistSolution tw = twist_toward(sheet_increments(p, Sheet::Serve1), direction);
  // On a face only the component along the face is finite; the other weight is zero.
  const double exponent = (tw.on_face ? (d.y() == 0.0 ? tw.theta_star.x() * d.x()
                                                      : tw.theta_star.y() * d.y())
                                      : tw.theta_star.dot(d));
  const double eu1 = std::exp(tw.theta_star.x());
  const bool cascade = rep.subcase == Subcase::Cascade;
  const double threshold = cascade ? rep.special.gamma_T : rep.special.alpha_E;

  AsymptoticEstimate est;
  if (eu1 <= threshold || (tw.on_face && d.x() == 0.0)) {
    est.exponential_base = std::exp(-exponent);
    est.polynomial_power = -0.5;
    est.validity = cascade ? "Gaussian ray, alpha_T < e^{u1} <= gamma_T (cascade)"
                           : "Gaussian ray, alpha_T < e^{u1} <= alpha_E (bridge)";
    if (boundary_sum && !tw.on_face) {
      const NeySpitzerData ns = ney_spitzer_data(tw.twisted_probs);
      est.prefactor = ney_spitzer_prefactor(ns) * *boundary_sum *
                      std::sqrt(ns.l1_norm_m / (2.0 * std::numbers::pi));
    }
    return est;
  }
  // Beyond the sector the estimate is psi(x,y) = bx^x by^y with a vanishing prefactor.
  const double second = cascade ? rep.special.delta_T : rep.special.gamma_E;
  if (!(second > 0.0))
    throw Error(ErrorKind::Numerical, "product-form point lies outside the positive quadrant");
  const double first = threshold;
  const Vector2d bases(1.0 / first, 1.0 / second);
  est.coordinate_bases = bases;
  est.exponential_base = std::pow(bases.x(), d.x()) * std::pow(bases.y(), d.y());
  est.polynomial_power = 0.0;
  est.validity = cascade ? "product form gamma_T^{-x} delta_T^{-y}; prefactor vanishes polynomially"
                         : "product form alpha_E^{-x} gamma_E^{-y}; prefactor vanishes polynomially";
  return est;
}

double SpiralProfile::alpha(double x) const {
  const double t = x / level;
  return C1 * ((1.0 - std::pow(a / b, x)) - (a + c - b) * t / ((b - a) * (1.0 - t) + c * t));
}

double SpiralProfile::beta(double y) const {
  const double t = y / level;
  return C2 * ((1.0 - std::pow(c / b, y)) - (a + c - b) * t / ((b - c) * (1.0 - t) + a * t));
}

SpiralProfile spiral_profile(const Params& p, int level) {
  const RegimeReport rep = classify(p);
  if (rep.sheet1 != Regime::Spiral || rep.sheet2 != Regime::Spiral)
    throw Error(ErrorKind::RegimePrecondition, "spiral profile requires spirals on both sheets");
  if (level < 2) throw Error(ErrorKind::InvalidInput, "spiral profile requires level >= 2");
  SpiralProfile s;
  s.a = rep.twisted.a;
  s.b = rep.twisted.b;
  s.c = rep.twisted.c;
  if (!(s.b > s.a && s.b > s.c))
    throw Error(ErrorKind::Numerical, "spiral coefficients violate b > a and b > c");
  s.level = level;
  s.one_minus_rho = 1.0 - p.rho();
  const double a = s.a, b = s.b, c = s.c, sum = a + c - b;
  const double bracket = std::log(a * c / ((b - a) * (b - c))) -
                         (1.0 / level) * sum * (a / ((b - a) * (b - a)) + c / ((b - c) * (b - c)));
  s.C_ell = s.one_minus_rho * sum / bracket;
  s.C1 = s.C_ell / (b - a);
  s.C2 = s.C_ell / (b - c);
  return s;
}

std::vector<double> gaussian_ray_profile(const Params& p, int level) {
  require_ray_on_sheet1(p, "Gaussian ray profile");
  const NeySpitzerData ns = ney_spitzer_data(twisted_sheet_increments(p, Sheet::Serve1));
  const double d1 = ns.m.x() / ns.l1_norm_m;
  const Vector2d lateral(1.0 - d1, -d1);
  const double var = level * lateral.dot(ns.Q * lateral) / ns.l1_norm_m;
  std::vector<double> w(level + 1, 0.0);
  double total = 0.0;
  for (int x = 1; x <= level; ++x) {
    const double z = x - level * d1;
    w[x] = std::exp(-z * z / (2.0 * var));
    total += w[x];
  }
  for (double& v : w) v /= total;
  return w;
}

}  // namespace polling
