#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>

#include "polling/model.hpp"

namespace polling {

enum class Regime { Ray, Spiral };
enum class Subcase { None, Cascade, Bridge };

const char* to_string(Regime r);
const char* to_string(Subcase s);

// Phi_1(a,b) = lambda1 a + lambda2 b + mu/a, Phi_2(a,b) = lambda1 a + lambda2 b + mu/b.
double egg_value(const Params& p, Sheet sheet, double a, double b);

struct SpecialPoints {
  double alpha_T, beta_T;  // top of curve 1
  double alpha_E, beta_E;  // east point of curve 2
  double gamma_T;          // (gamma_T, beta_T) on curve 2
  double delta_T;          // (gamma_T, delta_T) on curve 1
  double gamma_E;          // (alpha_E, gamma_E) on curve 1
  double r_minus, r_plus;  // roots of lambda1 z^2 - z + mu
};
SpecialPoints special_points(const Params& p);

struct RegimeReport {
  Regime sheet1 = Regime::Spiral;
  Regime sheet2 = Regime::Spiral;
  Subcase subcase = Subcase::None;
  SpecialPoints special{};
  TwistedRates twisted{};
  // The four equivalent sheet-1 ray tests: lt1 > mt, rho^-1 lambda1 > lambda,
  // sqrt(mu lambda1) > lambda, alpha_T < rho^-1.
  std::array<bool, 4> ray_tests{};
};
RegimeReport classify(const Params& p);

struct TwistSolution {
  Eigen::Vector2d theta_star = Eigen::Vector2d::Zero();
  double lambda_star = 0.0;
  FreeIncrements twisted_probs;  // same order as the input increments
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  // Face solutions: the component of theta normal to the face diverges to -inf;
  // theta_star then holds only the finite component along the face.
  bool on_face = false;
};

// Twist theta* with phi(theta*) = 1 and grad phi(theta*) = lambda* beta for a direction
// strictly inside the support cone. Nearest-neighbour polling supports use a closed-form
// egg solve; other supports use the generic path. Directions within 1e-9 rad of a face
// are routed to twist_toward_face.
TwistSolution twist_toward(const FreeIncrements& inc, const Eigen::Vector2d& direction);
// Generic path: root of log phi(theta(lambda)) = 0 along v = lambda beta with an inner
// Legendre solve, equivalently the minimizer of g(lambda) = Lambda*(lambda beta)/lambda.
TwistSolution twist_toward_generic(const FreeIncrements& inc, const Eigen::Vector2d& direction);
TwistSolution twist_toward_face(const FreeIncrements& inc, const Eigen::Vector2d& face_direction);

enum class ConePosition { Interior, Face, Outside };
ConePosition cone_position(const FreeIncrements& inc, const Eigen::Vector2d& direction);

double log_mgf(const FreeIncrements& inc, const Eigen::Vector2d& theta);  // log phi
// Legendre transform Lambda*(v) = sup_theta (theta.v - log phi(theta)).
double rate_function(const FreeIncrements& inc, const Eigen::Vector2d& v,
                     Eigen::Vector2d* argmax = nullptr);
// Normalized tilt: p(s) e^{theta.s} / phi(theta).
FreeIncrements exponential_tilt(const FreeIncrements& inc, const Eigen::Vector2d& theta);
double total_variation(const FreeIncrements& a, const FreeIncrements& b);
FreeIncrements lazy_increments(const FreeIncrements& inc);

struct NeySpitzerData {
  Eigen::Vector2d m;
  Eigen::Matrix2d Q;
  Eigen::Matrix2d Sigma;
  double det_Q = 0.0;
  double m_Sigma_m = 0.0;
  double l1_norm_m = 0.0;
};
NeySpitzerData ney_spitzer_data(const FreeIncrements& twisted);
// [|Q| (m . Sigma m)]^{-1/2}
double ney_spitzer_prefactor(const NeySpitzerData& d);

struct LeastAction {
  Eigen::Vector2d direction;          // l1-normalized, closed form
  Eigen::Vector2d numeric_direction;  // minimizer found by direct search
  double rate = 0.0;                  // minimal action per unit level, ln(rho^-1)
  double theta_star = 0.0;            // common value theta1 = theta2
  Eigen::Vector2d rejected_velocity;  // gradient at theta = 0 (does not reach the level)
};
LeastAction least_action_direction(const Params& p, Sheet sheet);

struct GrowthFactors {
  double f1, f2;
};
GrowthFactors spiral_growth_factors(const Params& p);

// Cascade measure on sheet 2: psi(x,y) = psi0(y) gamma_T^{-x} beta_T^{-y} with
// psi0(y) = 1 - (d/u)^y (or y when d = u), d = beta_T lambda2, u = mu / beta_T.
std::function<double(LatticePoint)> cascade_measure(const Params& p);

}  // namespace polling
