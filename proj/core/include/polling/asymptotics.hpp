#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "polling/geometry.hpp"
#include "polling/model.hpp"

namespace polling {

// pi ~ prefactor * exponential_base^level * level^polynomial_power.
struct AsymptoticEstimate {
  double exponential_base = 0.0;
  double polynomial_power = 0.0;
  std::optional<double> prefactor;  // empty: unknown positive constant
  std::string validity;
  // Product-form estimates carry separate per-coordinate bases (x, y).
  std::optional<Eigen::Vector2d> coordinate_bases;

  double evaluate(int level) const;  // throws if the prefactor is unknown
};

// Nearest lattice point to level * d on x + y = level (ties toward larger x).
State lattice_target(const Eigen::Vector2d& l1_direction, int level);

struct RayAsymptotics {
  AsymptoticEstimate estimate;
  NeySpitzerData ney_spitzer;
  double B = 0.0;  // [|Q|(m.Sigma m)]^{-1/2} * boundary_sum
  Eigen::Vector2d direction;  // l1-normalized twisted drift on sheet 1
  State target;
  double value = 0.0;  // B rho^l / sqrt(2 pi l / |m|_1)
};
RayAsymptotics ray_asymptotics(const Params& p, int level, double boundary_sum);

// Exponential penalty (u - u_bar).d of a northern direction relative to the ray,
// where u is the twist pointing along d and d is l1-normalized. Zero on the ray.
double off_ray_rate(const Params& p, const Eigen::Vector2d& direction);

double bridge_constant_cplus(const Params& p);

struct TransferConstants {
  double K21 = 0.0;  // pi(0,y,2) from pi(1,y,1)
  double K10 = 0.0;  // pi(x,0,1) from pi(x,1,2)
  Subcase subcase = Subcase::None;
  double root_lo = 0.0, root_hi = 0.0;  // roots of lambda2 z^2 - z + mu
};
TransferConstants transfer_constants(const Params& p);

// Gaussian-ray form below the sector boundary (e^{u1} <= gamma_T, or alpha_E in the
// bridge case); product form with an unknown vanishing prefactor beyond it.
AsymptoticEstimate sector_asymptotics(const Params& p, const Eigen::Vector2d& direction,
                                      std::optional<double> boundary_sum = std::nullopt);

struct SpiralProfile {
  double a = 0.0, b = 0.0, c = 0.0;
  double C_ell = 0.0, C1 = 0.0, C2 = 0.0;
  double one_minus_rho = 0.0;
  int level = 0;

  double alpha(double x) const;
  double beta(double y) const;
  // Predicted N(x,y,s)/N at the level: alpha(x)/(l(1-rho)) and beta(y)/(l(1-rho)).
  double fraction_sheet1(int x) const { return alpha(x) / (level * one_minus_rho); }
  double fraction_sheet2(int y) const { return beta(y) / (level * one_minus_rho); }
};
SpiralProfile spiral_profile(const Params& p, int level);

// Normalized lateral Gaussian shape of sheet-1 visits along a level in the ray case,
// indexed by x = 1..level (entry 0 unused).
std::vector<double> gaussian_ray_profile(const Params& p, int level);

}  // namespace polling
