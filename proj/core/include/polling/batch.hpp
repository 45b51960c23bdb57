#pragma once

#include <optional>
#include <vector>

#include "polling/geometry.hpp"
#include "polling/model.hpp"

namespace polling {

// Probability generating function of the number of arrivals in one service slot.
class ArrivalPGF {
 public:
  enum class Kind { FiniteSupport, Poisson };

  static ArrivalPGF finite(std::vector<double> density);  // f(0..n_max), sums to 1
  static ArrivalPGF poisson(double rate);

  Kind kind() const { return kind_; }
  double rate() const { return rate_; }  // Poisson rate (0 for finite support)
  const std::vector<double>& density() const { return density_; }

  double F(double z) const;
  double dF(double z) const;
  double log_derivative(double z) const { return dF(z) / F(z); }
  double mean() const { return dF(1.0); }
  // f(n) z^n / F(z) for n = 0..N, with N the support end or the point where the
  // remaining Poisson tail drops below 1e-15.
  std::vector<double> tilted_density(double z) const;

 private:
  ArrivalPGF() = default;
  Kind kind_ = Kind::FiniteSupport;
  double rate_ = 0.0;
  std::vector<double> density_;
};

class BatchParams {
 public:
  // Requires lambda1 + lambda2 < 1.
  BatchParams(ArrivalPGF f, ArrivalPGF g);
  const ArrivalPGF& f() const { return f_; }
  const ArrivalPGF& g() const { return g_; }
  double lambda1() const { return f_.mean(); }
  double lambda2() const { return g_.mean(); }

 private:
  ArrivalPGF f_, g_;
};

// psi(gamma) = F(gamma) G(gamma) / gamma.
double batch_psi(const BatchParams& bp, double gamma);

// Unique alpha > 1 with psi(alpha) = 1.
double find_alpha(const BatchParams& bp);

// One slot of the batch kernel: the served queue loses one customer, then arrivals
// (u, v) join; the server switches when its queue is empty after the slot.
KernelRow batch_kernel_row(const BatchParams& bp, const State& s);
// h-transform of batch_kernel_row with h = alpha^{x+y}.
KernelRow batch_twisted_row(const BatchParams& bp, double alpha, const State& s);

struct BatchRegimeReport {
  double alpha = 0.0;
  // Twisted mean x-increment on sheet 1, alpha F'(alpha)/F(alpha) - 1 (and G on sheet 2).
  double sheet1_mean_increment = 0.0;
  double sheet2_mean_increment = 0.0;
  // Sign indicators F'(alpha)/F(alpha) - 1/alpha (lambda1 - 1/alpha for Poisson).
  double sheet1_indicator = 0.0;
  double sheet2_indicator = 0.0;
  std::optional<Regime> sheet1, sheet2;  // empty: critical case, not classified
};
BatchRegimeReport batch_classify(const BatchParams& bp);

}  // namespace polling
