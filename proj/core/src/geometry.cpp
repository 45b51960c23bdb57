#include "polling/geometry.hpp"

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace polling {

namespace {

using Eigen::Matrix2d;
using Eigen::Vector2d;

constexpr double kFaceTolerance = 1e-9;  // radians

Vector2d vec(const LatticeStep& s) { return {double(s.dx), double(s.dy)}; }

double cross(const Vector2d& a, const Vector2d& b) { return a.x() * b.y() - a.y() * b.x(); }

// phi, grad phi and Hessian of phi at theta.
struct Mgf {
  double phi = 0.0;
  Vector2d grad = Vector2d::Zero();
  Matrix2d hess = Matrix2d::Zero();
};

Mgf mgf(const FreeIncrements& inc, const Vector2d& theta) {
  Mgf m;
  for (const auto& s : inc) {
    if (s.prob == 0.0) continue;
    const Vector2d v = vec(s);
    const double w = s.prob * std::exp(theta.dot(v));
    m.phi += w;
    m.grad += w * v;
    m.hess += w * v * v.transpose();
  }
  return m;
}

// Tilted mean and covariance at theta, computed with a shifted exponent.
struct Tilted {
  double log_phi;
  Vector2d mean;
  Matrix2d cov;
};

Tilted tilted(const FreeIncrements& inc, const Vector2d& theta) {
  double shift = -std::numeric_limits<double>::infinity();
  for (const auto& s : inc)
    if (s.prob > 0.0) shift = std::max(shift, theta.dot(vec(s)));
  double z = 0.0;
  Vector2d m1 = Vector2d::Zero();
  Matrix2d m2 = Matrix2d::Zero();
  for (const auto& s : inc) {
    if (s.prob <= 0.0) continue;
    const Vector2d v = vec(s);
    const double w = s.prob * std::exp(theta.dot(v) - shift);
    z += w;
    m1 += w * v;
    m2 += w * v * v.transpose();
  }
  Tilted t;
  t.log_phi = shift + std::log(z);
  t.mean = m1 / z;
  t.cov = m2 / z - t.mean * t.mean.transpose();
  return t;
}

// argmax_theta theta.v - log phi(theta) by damped Newton.
Vector2d legendre_argmax(const FreeIncrements& inc, const Vector2d& v, Vector2d theta) {
  auto objective = [&](const Vector2d& th) { return th.dot(v) - tilted(inc, th).log_phi; };
  double f = objective(theta);
  for (int it = 0; it < 200; ++it) {
    const Tilted t = tilted(inc, theta);
    const Vector2d g = v - t.mean;
    if (g.norm() < 1e-14) return theta;
    Vector2d step = t.cov.ldlt().solve(g);
    if (!step.allFinite()) step = g;
    double scale = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector2d trial = theta + scale * step;
      const double ft = objective(trial);
      if (std::isfinite(ft) && ft >= f - 1e-15 * std::abs(f)) {
        theta = trial;
        f = ft;
        break;
      }
      scale *= 0.5;
    }
    if (theta.norm() > 700.0)
      throw Error(ErrorKind::InvalidInput, "unreachable direction: rate function is infinite");
    if (scale < 1e-15) break;
  }
  return theta;
}

// Newton polish of phi(theta) = 1, grad phi(theta) = lambda beta.
void polish(const FreeIncrements& inc, const Vector2d& beta, Vector2d& theta, double& lambda) {
  for (int it = 0; it < 20; ++it) {
    const Mgf m = mgf(inc, theta);
    Eigen::Vector3d F;
    F << m.grad - lambda * beta, m.phi - 1.0;
    if (F.norm() < 1e-15) break;
    Eigen::Matrix3d J = Eigen::Matrix3d::Zero();
    J.topLeftCorner<2, 2>() = m.hess;
    J.block<2, 1>(0, 2) = -beta;
    J.block<1, 2>(2, 0) = m.grad.transpose();
    const Eigen::Vector3d d = J.fullPivLu().solve(-F);
    if (!d.allFinite()) break;
    theta += d.head<2>();
    lambda += d(2);
    if (d.norm() < 1e-16) break;
  }
}

TwistSolution finish(const FreeIncrements& inc, const Vector2d& theta) {
  TwistSolution sol;
  sol.theta_star = theta;
  sol.twisted_probs = exponential_tilt(inc, theta);
  for (const auto& s : sol.twisted_probs) sol.mean += s.prob * vec(s);
  sol.lambda_star = sol.mean.norm();
  return sol;
}

// Support pattern {east, north, west} (sheet 1) or {east, north, south} (sheet 2).
enum class Pattern { None, Sheet1, Sheet2 };

Pattern detect_pattern(const FreeIncrements& inc, double& pe, double& pn, double& pback) {
  pe = pn = pback = 0.0;
  bool west = false, south = false;
  for (const auto& s : inc) {
    if (s.prob == 0.0) continue;
    if (s.dx == 1 && s.dy == 0)
      pe += s.prob;
    else if (s.dx == 0 && s.dy == 1)
      pn += s.prob;
    else if (s.dx == -1 && s.dy == 0) {
      pback += s.prob;
      west = true;
    } else if (s.dx == 0 && s.dy == -1) {
      pback += s.prob;
      south = true;
    } else
      return Pattern::None;
  }
  if (pe <= 0.0 || pn <= 0.0 || west == south) return Pattern::None;
  return west ? Pattern::Sheet1 : Pattern::Sheet2;
}

// Egg point (a, b) = (e^theta1, e^theta2) of pe a + pn b + pw / a = 1 with normal along beta.
std::optional<Vector2d> three_point_solve(double pe, double pn, double pw, const Vector2d& beta) {
  const double A = pe * (beta.x() + beta.y());
  const double B = -beta.x();
  const double C = pw * (beta.x() - beta.y());
  std::vector<double> roots;
  if (std::abs(A) < 1e-300) {
    roots.push_back(-C / B);
  } else {
    const double disc = B * B - 4.0 * A * C;
    if (disc < 0.0) return std::nullopt;
    const double q = -0.5 * (B + std::copysign(std::sqrt(disc), B));
    roots.push_back(q / A);
    if (q != 0.0) roots.push_back(C / q);
  }
  for (double a : roots) {
    if (!(a > 0.0)) continue;
    const double b = (1.0 - pe * a - pw / a) / pn;
    if (!(b > 0.0)) continue;
    const Vector2d grad(pe * a - pw / a, pn * b);
    if (grad.dot(beta) > 0.0 && std::abs(cross(grad, beta)) < 1e-8 * grad.norm())
      return Vector2d(a, b);
  }
  return std::nullopt;
}

double origin_mass(const FreeIncrements& inc) {
  double m = 0.0;
  for (const auto& s : inc)
    if (s.dx == 0 && s.dy == 0) m += s.prob;
  return m;
}

}  // namespace

const char* to_string(Regime r) { return r == Regime::Ray ? "ray" : "spiral"; }

const char* to_string(Subcase s) {
  switch (s) {
    case Subcase::Cascade:
      return "cascade";
    case Subcase::Bridge:
      return "bridge";
    default:
      return "none";
  }
}

double egg_value(const Params& p, Sheet sheet, double a, double b) {
  const double back = sheet == Sheet::Serve1 ? p.mu() / a : p.mu() / b;
  return p.lambda1() * a + p.lambda2() * b + back;
}

SpecialPoints special_points(const Params& p) {
  const double l1 = p.lambda1(), l2 = p.lambda2(), mu = p.mu();
  SpecialPoints s{};
  s.alpha_T = std::sqrt(mu / l1);
  s.beta_T = (1.0 - 2.0 * std::sqrt(mu * l1)) / l2;
  s.beta_E = std::sqrt(mu / l2);
  s.alpha_E = (1.0 - 2.0 * std::sqrt(mu * l2)) / l1;
  if (!(s.beta_T > 0.0) || !(s.alpha_E > 0.0))
    throw Error(ErrorKind::Numerical, "degenerate egg: extremal point not positive");
  // Each remaining point is linear in its unknown once the other coordinate is fixed.
  s.gamma_T = (1.0 - l2 * s.beta_T - mu / s.beta_T) / l1;
  s.delta_T = (1.0 - l1 * s.gamma_T - mu / s.gamma_T) / l2;
  s.gamma_E = (1.0 - l1 * s.alpha_E - mu / s.alpha_E) / l2;
  const double disc = 1.0 - 4.0 * l1 * mu;
  s.r_minus = (1.0 - std::sqrt(disc)) / (2.0 * l1);
  s.r_plus = (1.0 + std::sqrt(disc)) / (2.0 * l1);
  return s;
}

RegimeReport classify(const Params& p) {
  if (!p.is_stable()) throw Error(ErrorKind::InvalidInput, "stability λ<μ violated (hypothesis K)");
  RegimeReport r;
  r.twisted = twisted_rates(p);
  r.special = special_points(p);
  const double lam = p.lambda();
  r.ray_tests = {r.twisted.lt1 > r.twisted.mt, p.rho_inv() * p.lambda1() > lam,
                 std::sqrt(p.mu() * p.lambda1()) > lam, r.special.alpha_T < p.rho_inv()};
  r.sheet1 = r.ray_tests[0] ? Regime::Ray : Regime::Spiral;
  r.sheet2 = r.twisted.lt2 > r.twisted.mt ? Regime::Ray : Regime::Spiral;
  if (r.sheet1 == Regime::Ray)
    r.subcase = r.special.beta_T <= r.special.beta_E ? Subcase::Cascade : Subcase::Bridge;
  return r;
}

double log_mgf(const FreeIncrements& inc, const Vector2d& theta) {
  return tilted(inc, theta).log_phi;
}

double rate_function(const FreeIncrements& inc, const Vector2d& v, Vector2d* argmax) {
  const Vector2d th = legendre_argmax(inc, v, Vector2d::Zero());
  if (argmax) *argmax = th;
  return th.dot(v) - log_mgf(inc, th);
}

FreeIncrements exponential_tilt(const FreeIncrements& inc, const Vector2d& theta) {
  FreeIncrements out = inc;
  double total = 0.0;
  for (auto& s : out) total += s.prob *= std::exp(theta.dot(vec(s)));
  for (auto& s : out) s.prob /= total;
  return out;
}

double total_variation(const FreeIncrements& a, const FreeIncrements& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::InvalidInput, "distributions differ in support");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].dx != b[i].dx || a[i].dy != b[i].dy)
      throw Error(ErrorKind::InvalidInput, "distributions differ in support order");
    tv += std::abs(a[i].prob - b[i].prob);
  }
  return 0.5 * tv;
}

FreeIncrements lazy_increments(const FreeIncrements& inc) {
  FreeIncrements out;
  bool has_origin = false;
  for (auto s : inc) {
    s.prob *= 0.5;
    if (s.dx == 0 && s.dy == 0) {
      s.prob += 0.5;
      has_origin = true;
    }
    out.push_back(s);
  }
  if (!has_origin) out.push_back({0, 0, 0.5});
  return out;
}

ConePosition cone_position(const FreeIncrements& inc, const Vector2d& direction) {
  std::vector<double> angles;
  for (const auto& s : inc)
    if (s.prob > 0.0 && (s.dx != 0 || s.dy != 0)) angles.push_back(std::atan2(s.dy, s.dx));
  if (angles.empty() || direction.norm() == 0.0) return ConePosition::Outside;
  const double two_pi = 2.0 * std::numbers::pi;
  for (double& a : angles)
    if (a < 0.0) a += two_pi;
  std::sort(angles.begin(), angles.end());
  double gap = 0.0, gap_start = 0.0;
  for (std::size_t i = 0; i < angles.size(); ++i) {
    const double next = i + 1 < angles.size() ? angles[i + 1] : angles[0] + two_pi;
    if (next - angles[i] > gap) {
      gap = next - angles[i];
      gap_start = angles[i];
    }
  }
  if (gap < std::numbers::pi - 1e-12) return ConePosition::Interior;
  double delta = std::atan2(direction.y(), direction.x()) - gap_start;
  delta = std::fmod(delta + 2.0 * two_pi, two_pi);
  if (std::abs(delta) < kFaceTolerance || std::abs(delta - two_pi) < kFaceTolerance ||
      std::abs(delta - gap) < kFaceTolerance)
    return ConePosition::Face;
  return delta < gap ? ConePosition::Outside : ConePosition::Interior;
}

TwistSolution twist_toward_generic(const FreeIncrements& inc, const Vector2d& direction) {
  const ConePosition pos = cone_position(inc, direction);
  if (pos == ConePosition::Outside) throw Error(ErrorKind::InvalidInput, "unreachable direction");
  if (pos == ConePosition::Face)
    throw Error(ErrorKind::InvalidInput,
                "direction lies on a face of the support cone; use the face solver");
  const Vector2d beta = direction.normalized();

  // Scaling reduction phi_q = q phi + 1 - q when the origin carries no mass; the
  // root theta* is unchanged and gradients scale by q.
  FreeIncrements work = inc;
  double q = 1.0;
  if (origin_mass(inc) == 0.0) {
    q = 0.5;
    work = lazy_increments(inc);
  }

  Vector2d warm = Vector2d::Zero();
  auto f = [&](double lambda) {
    warm = legendre_argmax(work, lambda * beta, warm);
    return log_mgf(work, warm);
  };
  double lo = 1e-8;
  if (!(f(lo) < 0.0))
    throw Error(ErrorKind::InvalidInput, "zero or degenerate drift: no nontrivial twist");
  double hi = 1e-3;
  int grow = 0;
  while (f(hi) <= 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++grow > 80) throw Error(ErrorKind::Numerical, "failed to bracket the twist");
  }
  warm = Vector2d::Zero();
  std::uintmax_t iters = 200;
  auto [a, b] = boost::math::tools::toms748_solve(
      f, lo, hi, [](double x, double y) { return std::abs(x - y) <= 1e-15 * std::max(x, y); },
      iters);
  double lambda = 0.5 * (a + b);
  Vector2d theta = legendre_argmax(work, lambda * beta, Vector2d::Zero());
  lambda /= q;
  polish(inc, beta, theta, lambda);
  return finish(inc, theta);
}

TwistSolution twist_toward(const FreeIncrements& inc, const Vector2d& direction) {
  const ConePosition pos = cone_position(inc, direction);
  if (pos == ConePosition::Outside) throw Error(ErrorKind::InvalidInput, "unreachable direction");
  if (pos == ConePosition::Face) return twist_toward_face(inc, direction);
  const Vector2d beta = direction.normalized();
  double pe, pn, pback;
  const Pattern pat = detect_pattern(inc, pe, pn, pback);
  if (pat == Pattern::None) return twist_toward_generic(inc, direction);
  // Sheet-2 supports are the sheet-1 problem with the axes exchanged.
  const bool swap = pat == Pattern::Sheet2;
  const Vector2d b = swap ? Vector2d(beta.y(), beta.x()) : beta;
  const double pe2 = swap ? pn : pe, pn2 = swap ? pe : pn;
  const auto ab = three_point_solve(pe2, pn2, pback, b);
  if (!ab) return twist_toward_generic(inc, direction);
  Vector2d theta(std::log((*ab).x()), std::log((*ab).y()));
  if (swap) theta = Vector2d(theta.y(), theta.x());
  double lambda = mgf(inc, theta).grad.norm();
  polish(inc, beta, theta, lambda);
  return finish(inc, theta);
}

TwistSolution twist_toward_face(const FreeIncrements& inc, const Vector2d& face_direction) {
  const Vector2d face = face_direction.normalized();
  struct OnLine {
    double s, p;
  };
  std::vector<OnLine> line;
  bool forward = false, backward = false;
  for (const auto& st : inc) {
    if (st.prob <= 0.0) continue;
    const Vector2d v = vec(st);
    if (std::abs(cross(v, face)) > 1e-12) continue;
    const double s = v.dot(face);
    line.push_back({s, st.prob});
    forward = forward || s > 0.0;
    backward = backward || s < 0.0;
  }
  if (!forward) throw Error(ErrorKind::InvalidInput, "no mass on face; no boundary twist exists");

  auto phi = [&](double t) {
    double v = 0.0;
    for (const auto& o : line) v += o.p * std::exp(t * o.s);
    return v;
  };
  auto dphi = [&](double t) {
    double v = 0.0;
    for (const auto& o : line) v += o.p * o.s * std::exp(t * o.s);
    return v;
  };
  const auto tol = [](double x, double y) { return std::abs(x - y) <= 1e-15 * (1.0 + std::abs(x)); };
  double t_lo = -50.0;
  if (backward) {
    double a = -1.0, b = 1.0;
    while (dphi(a) > 0.0) a *= 2.0;
    while (dphi(b) < 0.0) b *= 2.0;
    std::uintmax_t it = 200;
    auto r = boost::math::tools::toms748_solve(dphi, a, b, tol, it);
    t_lo = 0.5 * (r.first + r.second);
  }
  if (phi(t_lo) > 1.0) throw Error(ErrorKind::InvalidInput, "face mass too large; no boundary twist");
  double t_hi = std::max(t_lo, 0.0) + 1.0;
  while (phi(t_hi) < 1.0) t_hi *= 2.0;
  std::uintmax_t it = 200;
  auto r = boost::math::tools::toms748_solve([&](double t) { return phi(t) - 1.0; }, t_lo, t_hi,
                                             tol, it);
  double t = 0.5 * (r.first + r.second);
  for (int k = 0; k < 5; ++k) {
    const double d = dphi(t);
    if (d == 0.0) break;
    t -= (phi(t) - 1.0) / d;
  }

  TwistSolution sol;
  sol.on_face = true;
  sol.theta_star = t * face;
  sol.twisted_probs = inc;
  for (auto& st : sol.twisted_probs) {
    const Vector2d v = vec(st);
    st.prob = std::abs(cross(v, face)) > 1e-12 ? 0.0 : st.prob * std::exp(t * v.dot(face));
    sol.mean += st.prob * v;
  }
  sol.lambda_star = sol.mean.dot(face);
  return sol;
}

NeySpitzerData ney_spitzer_data(const FreeIncrements& twisted) {
  NeySpitzerData d;
  d.m = Vector2d::Zero();
  double total = 0.0;
  for (const auto& s : twisted) {
    d.m += s.prob * vec(s);
    total += s.prob;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw Error(ErrorKind::InvalidInput, "increment distribution must sum to 1");
  if (d.m.norm() < 1e-14) throw Error(ErrorKind::InvalidInput, "zero drift: m = 0");
  d.Q = Matrix2d::Zero();
  for (const auto& s : twisted) {
    const Vector2d c = vec(s) - d.m;
    d.Q += s.prob * c * c.transpose();
  }
  d.det_Q = d.Q.determinant();
  if (!(d.det_Q > 1e-14))
    throw Error(ErrorKind::InvalidInput, "singular covariance (nonsingular assumption violated)");
  d.Sigma = d.Q.inverse();
  d.m_Sigma_m = d.m.dot(d.Sigma * d.m);
  d.l1_norm_m = d.m.lpNorm<1>();
  return d;
}

double ney_spitzer_prefactor(const NeySpitzerData& d) { return 1.0 / std::sqrt(d.det_Q * d.m_Sigma_m); }

LeastAction least_action_direction(const Params& p, Sheet sheet) {
  const RegimeReport rep = classify(p);
  if ((sheet == Sheet::Serve1 ? rep.sheet1 : rep.sheet2) != Regime::Ray)
    throw Error(ErrorKind::RegimePrecondition, "interior least-action path invalid; spiral regime");
  const FreeIncrements inc = sheet_increments(p, sheet);
  LeastAction la;
  la.theta_star = std::log(p.rho_inv());
  const Vector2d g = mgf(inc, Vector2d::Constant(la.theta_star)).grad;
  la.direction = g / (g.x() + g.y());
  la.rate = la.theta_star;
  la.rejected_velocity = mgf(inc, Vector2d::Zero()).grad;

  // Direct search: action per unit level along direction w is u(w).w / (w1 + w2).
  auto action = [&](double w) {
    const Vector2d d(std::cos(w), std::sin(w));
    const TwistSolution t = twist_toward(inc, d);
    return t.theta_star.dot(d) / (d.x() + d.y());
  };
  const double lo_w = -std::numbers::pi / 4.0, hi_w = 3.0 * std::numbers::pi / 4.0;
  double best_w = 0.0, best = std::numeric_limits<double>::infinity();
  const int grid = 720;
  for (int i = 1; i < grid; ++i) {
    const double w = lo_w + (hi_w - lo_w) * i / grid;
    const Vector2d d(std::cos(w), std::sin(w));
    if (cone_position(inc, d) != ConePosition::Interior || d.x() + d.y() < 1e-3) continue;
    const double a = action(w);
    if (a < best) {
      best = a;
      best_w = w;
    }
  }
  const double step = (hi_w - lo_w) / grid;
  auto r = boost::math::tools::brent_find_minima(action, best_w - step, best_w + step, 52);
  const Vector2d d(std::cos(r.first), std::sin(r.first));
  la.numeric_direction = d / (d.x() + d.y());
  return la;
}

GrowthFactors spiral_growth_factors(const Params& p) {
  const RegimeReport rep = classify(p);
  if (rep.sheet1 != Regime::Spiral || rep.sheet2 != Regime::Spiral)
    throw Error(ErrorKind::RegimePrecondition, "growth factors require spirals on both sheets");
  const double lam = p.lambda(), gap = p.mu() - lam;
  return {gap / (lam - p.rho_inv() * p.lambda1()), gap / (lam - p.rho_inv() * p.lambda2())};
}

std::function<double(LatticePoint)> cascade_measure(const Params& p) {
  const SpecialPoints sp = special_points(p);
  const double d = sp.beta_T * p.lambda2();
  const double u = p.mu() / sp.beta_T;
  if (d > u * (1.0 + 1e-14))
    throw Error(ErrorKind::RegimePrecondition, "cascade measure requires beta_T <= beta_E");
  const bool critical = std::abs(d - u) <= 1e-14 * u;
  const double gT = sp.gamma_T, bT = sp.beta_T;
  return [=](LatticePoint pt) {
    if (pt.y <= 0) return 0.0;
    const double psi0 = critical ? double(pt.y) : 1.0 - std::pow(d / u, pt.y);
    return psi0 * std::pow(gT, -pt.x) * std::pow(bT, -pt.y);
  };
}

}  // namespace polling
