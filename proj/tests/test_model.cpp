#include <doctest.h>

#include <cmath>
#include <random>

#include "polling/geometry.hpp"
#include "polling/model.hpp"
#include "polling/oracle.hpp"

using namespace polling;

namespace {

const Params kRaySpiral = Params::stable(0.3, 0.05, 0.65);
const Params kSpiralSpiral = Params::stable(0.3, 0.15, 0.55);

std::vector<State> window(int max_level) {
  std::vector<State> out;
  for (int k = 0; k <= max_level; ++k)
    for (int x = 0; x <= k; ++x) {
      const State s1{x, k - x, Sheet::Serve1}, s2{x, k - x, Sheet::Serve2};
      if (s1.valid()) out.push_back(s1);
      if (s2.valid()) out.push_back(s2);
    }
  return out;
}

double h_geo(const Params& p, const State& s) { return std::pow(p.rho_inv(), s.level()); }

}  // namespace

TEST_CASE("params normalize raw rates and enforce stability") {
  const Params p = Params::stable(3, 0.5, 6.5);
  CHECK(p.lambda1() == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(p.lambda1() + p.lambda2() + p.mu() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.rho() == doctest::Approx(0.35 / 0.65).epsilon(1e-14));
  CHECK_THROWS_AS(Params::stable(1, 1, 1), Error);
  CHECK_THROWS_AS(Params::stable(0.25, 0.25, 0.5), Error);  // rho = 1
  CHECK_THROWS_AS(Params::stable(-0.1, 0.1, 1.0), Error);
  CHECK_THROWS_AS(Params::stable(0.1, std::nan(""), 1.0), Error);
  CHECK_NOTHROW(Params::unstable_allowed(1, 1, 1));
  try {
    Params::stable(1, 1, 1);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidInput);
    CHECK(std::string(e.what()).find("stability") != std::string::npos);
  }
}

TEST_CASE("state invariants") {
  CHECK(State{0, 0, Sheet::Serve1}.valid());
  CHECK_FALSE(State{0, 3, Sheet::Serve1}.valid());
  CHECK_FALSE(State{3, 0, Sheet::Serve2}.valid());
  CHECK(State{0, 3, Sheet::Serve2}.valid());
  CHECK_FALSE(State{-1, 2, Sheet::Serve2}.valid());
  CHECK(to_string(State{4, 1, Sheet::Serve2}) == "(4,1,2)");
}

TEST_CASE("kernel rows at the documented states") {
  const KernelRow o = kernel_row(kRaySpiral, kOrigin);
  CHECK(o.to({1, 0, Sheet::Serve1}) == doctest::Approx(0.3));
  CHECK(o.to(kOrigin) == doctest::Approx(0.65));
  // The north arrival from the empty system starts service at queue 2.
  CHECK(o.to({0, 1, Sheet::Serve2}) == doctest::Approx(0.05));

  const KernelRow r = kernel_row(kRaySpiral, {1, 3, Sheet::Serve1});
  CHECK(r.to({2, 3, Sheet::Serve1}) == doctest::Approx(0.3));
  CHECK(r.to({1, 4, Sheet::Serve1}) == doctest::Approx(0.05));
  CHECK(r.to({0, 3, Sheet::Serve2}) == doctest::Approx(0.65));

  const KernelRow q = kernel_row(kRaySpiral, {4, 1, Sheet::Serve2});
  CHECK(q.to({5, 1, Sheet::Serve2}) == doctest::Approx(0.3));
  CHECK(q.to({4, 2, Sheet::Serve2}) == doctest::Approx(0.05));
  CHECK(q.to({4, 0, Sheet::Serve1}) == doctest::Approx(0.65));

  CHECK(kernel_row(kRaySpiral, {1, 0, Sheet::Serve1}).to(kOrigin) == doctest::Approx(0.65));
  CHECK(kernel_row(kRaySpiral, {0, 1, Sheet::Serve2}).to(kOrigin) == doctest::Approx(0.65));
  CHECK_THROWS_AS(kernel_row(kRaySpiral, {2, 0, Sheet::Serve2}), Error);
}

TEST_CASE("twisted kernel rows") {
  const KernelRow r = twisted_kernel_row(kRaySpiral, {2, 0, Sheet::Serve1});
  CHECK(r.to({3, 0, Sheet::Serve1}) == doctest::Approx(0.557143).epsilon(1e-6));
  CHECK(r.to({2, 1, Sheet::Serve1}) == doctest::Approx(0.092857).epsilon(1e-5));
  CHECK(r.to({1, 0, Sheet::Serve1}) == doctest::Approx(0.35));
  CHECK(twisted_kernel_row(kRaySpiral, kOrigin).sum() == doctest::Approx(1.3).epsilon(1e-14));

  const TwistedRates t = twisted_rates(kRaySpiral);
  CHECK(std::abs(t.lt1 + t.lt2 - kRaySpiral.mu()) < 1e-12);
  CHECK(std::abs(t.a - t.lt1) < 1e-12);
  CHECK(std::abs(t.c - t.lt2) < 1e-12);
  CHECK(std::abs((t.a + t.c - t.b) - (kRaySpiral.mu() - kRaySpiral.mu() * kRaySpiral.rho())) < 1e-12);
}

TEST_CASE("row-sum law and h-transform identity on the window x + y <= 50") {
  for (const Params& p : {kRaySpiral, kSpiralSpiral}) {
    for (const State& s : window(50)) {
      const KernelRow k = kernel_row(p, s);
      const KernelRow tw = twisted_kernel_row(p, s);
      CHECK(std::abs(k.sum() - 1.0) < 1e-12);
      if (s.is_origin()) {
        CHECK(std::abs(tw.sum() - 2.0 * p.mu()) < 1e-12);
        continue;
      }
      CHECK(std::abs(tw.sum() - 1.0) < 1e-12);
      double kh = 0.0;
      for (const auto& e : k.entries) {
        kh += e.prob * h_geo(p, e.target);
        CHECK(std::abs(tw.to(e.target) - e.prob * h_geo(p, e.target) / h_geo(p, s)) < 1e-12);
      }
      CHECK(std::abs(kh - h_geo(p, s)) / h_geo(p, s) < 1e-12);
    }
  }
}

TEST_CASE("total queue length is the M/M/1 walk") {
  for (const State& s : window(20)) {
    if (s.is_origin()) continue;
    double up = 0.0, down = 0.0;
    for (const auto& e : kernel_row(kSpiralSpiral, s).entries) {
      if (e.target.level() == s.level() + 1) up += e.prob;
      if (e.target.level() == s.level() - 1) down += e.prob;
    }
    CHECK(up == doctest::Approx(kSpiralSpiral.lambda()).epsilon(1e-14));
    CHECK(down == doctest::Approx(kSpiralSpiral.mu()).epsilon(1e-14));
  }
}

TEST_CASE("conditioned kernel") {
  const int level = 8;
  CHECK(conditioned_harmonic(kRaySpiral, level, kOrigin) == 0.0);
  CHECK(conditioned_harmonic(kRaySpiral, level, {3, 5, Sheet::Serve1}) == 1.0);
  for (const Params& p : {kRaySpiral, kSpiralSpiral}) {
    for (const State& s : window(level - 1)) {
      const KernelRow row = conditioned_kernel_row(p, level, s);
      CHECK(std::abs(row.sum() - 1.0) < 1e-12);
      CHECK(row.to(kOrigin) == 0.0);
    }
  }
  // (1,0,1) at level 4: remaining mass splits proportionally to K h.
  const KernelRow r = conditioned_kernel_row(kRaySpiral, 4, {1, 0, Sheet::Serve1});
  const double h1 = conditioned_harmonic(kRaySpiral, 4, {1, 0, Sheet::Serve1});
  const double h2 = conditioned_harmonic(kRaySpiral, 4, {2, 0, Sheet::Serve1});
  CHECK(r.to({2, 0, Sheet::Serve1}) == doctest::Approx(0.3 * h2 / h1).epsilon(1e-13));
  CHECK(r.to({1, 1, Sheet::Serve1}) == doctest::Approx(0.05 * h2 / h1).epsilon(1e-13));
  CHECK_THROWS_AS(conditioned_kernel_row(kRaySpiral, 4, {2, 2, Sheet::Serve1}), Error);
  // The overflow-safe ratio stays finite at very large levels.
  CHECK(std::isfinite(conditioned_harmonic_ratio(kRaySpiral, 5000, 4999)));
  CHECK(conditioned_harmonic_ratio(kRaySpiral, 5000, 4999) ==
        doctest::Approx(kRaySpiral.rho()).epsilon(1e-12));
}

TEST_CASE("lazy transform") {
  const KernelRow row = lazy_transform(kernel_row(kRaySpiral, kOrigin), kOrigin);
  CHECK(row.to({1, 0, Sheet::Serve1}) == doctest::Approx(0.15));
  CHECK(row.to({0, 1, Sheet::Serve2}) == doctest::Approx(0.025));
  CHECK(row.to(kOrigin) == doctest::Approx(0.825));
  KernelRow identity;
  identity.entries.push_back({{2, 2, Sheet::Serve1}, 1.0, false});
  const KernelRow same = lazy_transform(identity, {2, 2, Sheet::Serve1});
  CHECK(same.entries.size() == 1);
  CHECK(same.to({2, 2, Sheet::Serve1}) == doctest::Approx(1.0));
}

TEST_CASE("general-rates harmonic point lies on both eggs") {
  const double l1 = 0.2, l2 = 0.1, mu1 = 0.4, mu2 = 0.3;
  const auto [lo, hi] = general_rates_harmonic(l1, l2, mu1, mu2);
  for (const HarmonicPoint& h : {lo, hi}) {
    CHECK(std::abs(l1 * h.gamma1 + l2 * h.gamma2 + mu1 / h.gamma1 - 1.0) < 1e-12);
    CHECK(std::abs(l1 * h.gamma1 + l2 * h.gamma2 + mu2 / h.gamma2 - 1.0) < 1e-12);
    CHECK(h.gamma2 == doctest::Approx(mu2 / mu1 * h.gamma1).epsilon(1e-14));
  }
  // Equal service rates: the non-trivial point is rho^{-1} and the other is 1.
  const auto [one, inv_rho] = general_rates_harmonic(0.3, 0.05, 0.65, 0.65);
  CHECK(one.gamma1 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(inv_rho.gamma1 == doctest::Approx(0.65 / 0.35).epsilon(1e-12));
}

TEST_CASE("time reversal against the cascade measure") {
  const auto psi = cascade_measure(kRaySpiral);
  const FreeIncrements inc = sheet_increments(kRaySpiral, Sheet::Serve2);
  const SpecialPoints sp = special_points(kRaySpiral);
  for (int x = 2; x < 12; ++x)
    for (int y = 1; y < 12; ++y) {
      const auto row = time_reversal_row(psi, inc, {x, y});
      double total = 0.0;
      for (const auto& [pt, pr] : row) {
        total += pr;
        CHECK(pr >= 0.0);
      }
      CHECK(std::abs(total - 1.0) < 1e-12);
      for (const auto& [pt, pr] : row) {
        if (pt == LatticePoint{x, y - 1} && y == 1) CHECK(pr == 0.0);  // psi(x,0) = 0
        if (pt == LatticePoint{x - 1, y}) CHECK(pr == doctest::Approx(sp.gamma_T * 0.3).epsilon(1e-12));
      }
    }
  CHECK_THROWS_AS(time_reversal_row(psi, inc, {3, 0}), Error);
}

TEST_CASE("lazy chain keeps the stationary law") {
  // Balance below the truncation level only involves unmodified rows.
  const int L = 12;
  const StationaryResult st = stationary_truncated(kSpiralSpiral, L);
  std::vector<double> lazy(st.pi.size(), 0.0);
  for (int i = 0; i < st.model.size(); ++i) {
    const State s = st.model.state(i);
    for (const auto& e : lazy_transform(kernel_row(kSpiralSpiral, s), s).entries)
      if (e.target.level() <= L) lazy[st.model.index(e.target)] += st.pi[i] * e.prob;
  }
  double worst = 0.0;
  for (int i = 0; i < st.model.size(); ++i)
    if (st.model.state(i).level() < L) worst = std::max(worst, std::abs(lazy[i] - st.pi[i]) / st.pi[i]);
  CHECK(worst < 1e-10);
}
