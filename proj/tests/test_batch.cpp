#include <doctest.h>

#include <cmath>
#include <random>

#include "polling/batch.hpp"

using namespace polling;

namespace {

BatchParams poisson_pair(double a, double b) {
  return BatchParams(ArrivalPGF::poisson(a), ArrivalPGF::poisson(b));
}

// Plain bisection on psi(z) - 1 over (z_min, hi) with psi evaluated from the series.
double bisect_alpha(double r1, double r2) {
  auto f = [&](double z) { return std::exp((r1 + r2) * (z - 1.0)) / z - 1.0; };
  const double zmin = 1.0 / (r1 + r2);  // minimizer of psi
  double lo = zmin, hi = zmin;
  while (f(hi) < 0.0) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

std::vector<State> window(int max_level) {
  std::vector<State> out;
  for (int k = 0; k <= max_level; ++k)
    for (int x = 0; x <= k; ++x)
      for (Sheet s : {Sheet::Serve1, Sheet::Serve2}) {
        const State st{x, k - x, s};
        if (st.valid()) out.push_back(st);
      }
  return out;
}

}  // namespace

TEST_CASE("arrival PGFs") {
  const ArrivalPGF p = ArrivalPGF::poisson(0.3);
  CHECK(p.F(1.0) == doctest::Approx(1.0));
  CHECK(p.mean() == doctest::Approx(0.3));
  double total = 0.0;
  for (double d : p.tilted_density(2.0)) total += d;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-14));

  const ArrivalPGF f = ArrivalPGF::finite({0.5, 0.3, 0.2});
  CHECK(f.mean() == doctest::Approx(0.7));
  CHECK(f.F(2.0) == doctest::Approx(0.5 + 0.6 + 0.8));
  CHECK(f.dF(2.0) == doctest::Approx(0.3 + 0.8));
  CHECK_THROWS_AS(ArrivalPGF::finite({0.5, 0.4}), Error);
  CHECK_THROWS_AS(ArrivalPGF::finite({}), Error);
  CHECK_THROWS_AS(ArrivalPGF::poisson(-1.0), Error);
  CHECK_THROWS_AS(poisson_pair(0.6, 0.5), Error);
}

TEST_CASE("twist root matches an independent bisection") {
  const BatchParams bp = poisson_pair(0.3, 0.15);
  const double alpha = find_alpha(bp);
  CHECK(std::abs(alpha - bisect_alpha(0.3, 0.15)) < 1e-10);
  CHECK(alpha == doctest::Approx(4.17673068255971).epsilon(1e-12));
  CHECK(batch_psi(bp, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(batch_psi(bp, alpha) == doctest::Approx(1.0).epsilon(1e-12));
  // Convex in gamma on (1, alpha).
  for (double z = 1.1; z < alpha; z += 0.1) {
    const double h = 1e-3;
    CHECK(batch_psi(bp, z + h) + batch_psi(bp, z - h) - 2 * batch_psi(bp, z) > 0.0);
    CHECK(batch_psi(bp, z) < 1.0);
  }
  CHECK(std::abs(find_alpha(poisson_pair(0.1, 0.1)) - bisect_alpha(0.1, 0.1)) < 1e-10);
}

TEST_CASE("kernel and twisted rows") {
  const BatchParams bp = poisson_pair(0.3, 0.15);
  const double alpha = find_alpha(bp);
  for (const State& s : window(12)) {
    const KernelRow k = batch_kernel_row(bp, s);
    CHECK(std::abs(k.sum() - 1.0) < 1e-12);
    const KernelRow t = batch_twisted_row(bp, alpha, s);
    if (s.is_origin())
      CHECK(t.sum() == doctest::Approx(alpha).epsilon(1e-12));
    else
      CHECK(std::abs(t.sum() - 1.0) < 1e-12);
    // h-transform with h = alpha^{level}.
    for (const auto& e : k.entries)
      CHECK(t.to(e.target) ==
            doctest::Approx(e.prob * std::pow(alpha, e.target.level() - s.level())).epsilon(1e-10));
  }
  CHECK_THROWS_AS(batch_twisted_row(bp, 0.9, kOrigin), Error);
}

TEST_CASE("random Poisson pairs give stochastic twisted rows") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.01, 0.6);
  int done = 0;
  while (done < 100) {
    const double a = u(gen), b = u(gen);
    if (a + b >= 0.95) continue;
    const BatchParams bp = poisson_pair(a, b);
    const double alpha = find_alpha(bp);
    for (const State& s : {State{3, 2, Sheet::Serve1}, State{1, 0, Sheet::Serve1}, State{2, 1, Sheet::Serve2},
                           State{0, 1, Sheet::Serve2}})
      CHECK(std::abs(batch_twisted_row(bp, alpha, s).sum() - 1.0) < 1e-12);
    ++done;
  }
}

TEST_CASE("batch regime classification") {
  const BatchRegimeReport r = batch_classify(poisson_pair(0.3, 0.15));
  CHECK(r.sheet1_indicator == doctest::Approx(0.0605782905334).epsilon(1e-9));
  CHECK(r.sheet2_indicator == doctest::Approx(-0.0894217094666).epsilon(1e-9));
  REQUIRE(r.sheet1.has_value());
  REQUIRE(r.sheet2.has_value());
  CHECK(*r.sheet1 == Regime::Ray);
  CHECK(*r.sheet2 == Regime::Spiral);
  // Mean increment identity: alpha F'/F - 1 = alpha * indicator.
  CHECK(r.sheet1_mean_increment == doctest::Approx(r.alpha * r.sheet1_indicator).epsilon(1e-12));
  CHECK(r.sheet2_mean_increment == doctest::Approx(r.alpha * r.sheet2_indicator).epsilon(1e-12));

  const BatchRegimeReport s = batch_classify(poisson_pair(0.1, 0.1));
  CHECK(s.alpha == doctest::Approx(14.3019952923184).epsilon(1e-10));
  CHECK(s.sheet1_indicator == doctest::Approx(0.0300796861164).epsilon(1e-9));
  CHECK(*s.sheet1 == Regime::Ray);
  CHECK(*s.sheet2 == Regime::Ray);
}

TEST_CASE("finite-support arrivals") {
  const BatchParams bp(ArrivalPGF::finite({0.7, 0.2, 0.1}), ArrivalPGF::finite({0.9, 0.1}));
  const double alpha = find_alpha(bp);
  CHECK(alpha > 1.0);
  CHECK(batch_psi(bp, alpha) == doctest::Approx(1.0).epsilon(1e-12));
  for (const State& s : window(6))
    if (!s.is_origin()) CHECK(std::abs(batch_twisted_row(bp, alpha, s).sum() - 1.0) < 1e-12);
  CHECK_THROWS_AS(BatchParams(ArrivalPGF::finite({0.6, 0.4}), ArrivalPGF::finite({1.0})), Error);
}
