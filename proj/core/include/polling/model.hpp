#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace polling {

enum class ErrorKind { InvalidInput, RegimePrecondition, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Rates of the uniformized chain, normalized so lambda1 + lambda2 + mu = 1.
class Params {
 public:
  // Rescales raw positive rates and requires lambda < mu.
  static Params stable(double lambda1, double lambda2, double mu);
  // Rescales raw positive rates without the stability check (kernel display only).
  static Params unstable_allowed(double lambda1, double lambda2, double mu);

  double lambda1() const { return l1_; }
  double lambda2() const { return l2_; }
  double mu() const { return mu_; }
  double lambda() const { return l1_ + l2_; }
  double rho() const { return lambda() / mu_; }
  double rho_inv() const { return mu_ / lambda(); }
  bool is_stable() const { return lambda() < mu_; }

 private:
  Params(double l1, double l2, double mu) : l1_(l1), l2_(l2), mu_(mu) {}
  double l1_, l2_, mu_;
};

enum class Sheet : std::uint8_t { Serve1 = 1, Serve2 = 2 };

struct State {
  int x = 0;
  int y = 0;
  Sheet sheet = Sheet::Serve1;

  int level() const { return x + y; }
  bool valid() const;
  bool is_origin() const { return x == 0 && y == 0 && sheet == Sheet::Serve1; }
  friend bool operator==(const State&, const State&) = default;
};

inline constexpr State kOrigin{0, 0, Sheet::Serve1};

std::string to_string(const State& s);
int sheet_index(Sheet s);  // 1 or 2

struct Transition {
  State target;
  double prob = 0.0;
  bool killed = false;  // mass leaving the state space (target ignored)
};

struct KernelRow {
  std::vector<Transition> entries;

  double sum() const;
  double killed_mass() const;
  // Mass sent to `target` (0 when absent).
  double to(const State& target) const;
};

// Polling-model geometry shared by K and its twists: where an east, north or
// service move from `s` lands. The origin has no service move (self-loop).
struct Moves {
  State east, north, service;
  bool service_is_self = false;
};
Moves moves_from(const State& s);

KernelRow kernel_row(const Params& p, const State& s);
KernelRow twisted_kernel_row(const Params& p, const State& s);
KernelRow conditioned_kernel_row(const Params& p, int level, const State& s);
KernelRow lazy_transform(const KernelRow& row, const State& self);

// h(x,y,s) = rho^{-(x+y)}.
double geometric_harmonic(const Params& p, const State& s);
// h_alpha(x,y,s) = (rho^{-(x+y)} - 1) / (rho^{-level} - 1).
double conditioned_harmonic(const Params& p, int level, const State& s);
// h_alpha(q) / h_alpha(p) computed without overflow for large levels.
double conditioned_harmonic_ratio(const Params& p, int from_level, int to_level);

struct TwistedRates {
  double lt1, lt2, mt;  // east, north, service
  double a, b, c;       // spiral coefficients lambda1/rho, mu*rho, lambda2/rho
  std::pair<double, double> m1, m2;  // free-walk drifts on sheets 1 and 2
};
TwistedRates twisted_rates(const Params& p);

// Both intersection points of the eggs lambda1*a + lambda2*b + mu1/a = 1 and
// lambda1*a + lambda2*b + mu2/b = 1 (unequal service rates). Ordered (smaller, larger).
struct HarmonicPoint {
  double gamma1, gamma2;
};
std::pair<HarmonicPoint, HarmonicPoint> general_rates_harmonic(double lambda1, double lambda2,
                                                               double mu1, double mu2);

// Points of the plane used for free (unreflected) sheet walks.
struct LatticePoint {
  int x = 0;
  int y = 0;
  friend bool operator==(const LatticePoint&, const LatticePoint&) = default;
};
struct LatticeStep {
  int dx = 0;
  int dy = 0;
  double prob = 0.0;
};
using FreeIncrements = std::vector<LatticeStep>;

FreeIncrements sheet_increments(const Params& p, Sheet sheet);
FreeIncrements twisted_sheet_increments(const Params& p, Sheet sheet);

// Reversal of a free walk with respect to a measure psi:
// rev(x, y) = psi(y) K(y, x) / psi(x). Throws at psi(x) = 0.
std::vector<std::pair<LatticePoint, double>> time_reversal_row(
    const std::function<double(LatticePoint)>& psi, const FreeIncrements& steps, LatticePoint at);

}  // namespace polling
