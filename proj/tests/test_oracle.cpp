#include <doctest.h>

#include <cmath>
#include <sstream>

#include "polling/oracle.hpp"

using namespace polling;

namespace {

const Params kRaySpiral = Params::stable(0.3, 0.05, 0.65);
const Params kSpiralSpiral = Params::stable(0.3, 0.15, 0.55);
const Params kRayRay = Params::stable(0.1, 0.1, 0.8);

}  // namespace

TEST_CASE("truncated model indexing") {
  const TruncatedModel m(kRaySpiral, 7);
  CHECK(m.size() == 1 + 7 * 8);
  CHECK(TruncatedModel::level_start(0) == 0);
  CHECK(TruncatedModel::level_start(1) == 1);
  CHECK(TruncatedModel::level_start(3) == 7);
  for (int i = 0; i < m.size(); ++i) {
    const State s = m.state(i);
    CHECK(s.valid());
    CHECK(m.index(s) == i);
  }
  CHECK(m.index(State{8, 0, Sheet::Serve1}) == -1);
  CHECK(m.state(1) == State{1, 0, Sheet::Serve1});
  CHECK(m.state(2) == State{0, 1, Sheet::Serve2});
}

TEST_CASE("stationary law on the truncation") {
  for (const Params& p : {kRaySpiral, kSpiralSpiral}) {
    const StationaryResult st = stationary_truncated(p, 40);
    CHECK(st.at(kOrigin) == doctest::Approx(1 - p.rho()).epsilon(1e-14));
    CHECK(st.mass == doctest::Approx(1 - std::pow(p.rho(), 41)).epsilon(1e-10));
    CHECK(st.tail_bound == doctest::Approx(std::pow(p.rho(), 41)).epsilon(1e-12));
    for (int level = 0; level <= 30; ++level) {
      const double expect = (1 - p.rho()) * std::pow(p.rho(), level);
      CHECK(std::abs(st.level_marginal(level) - expect) / expect < 1e-6);
    }
    CHECK(st.origin_balance_residual() < 1e-12);
    for (double v : st.pi) CHECK(v > 0.0);
    CHECK(static_cast<int>(st.table().size()) == st.model.size());
  }
  CHECK_THROWS_AS(stationary_truncated(kRaySpiral, 1), Error);
}

TEST_CASE("taboo Green function represents the stationary law") {
  for (const Params& p : {kRaySpiral, kSpiralSpiral}) {
    const TabooGreenResult g = taboo_green_exact(p, 10, 40);
    CHECK(g.values.size() == 20);
    CHECK(g.representation_max_rel_error < 1e-6);
    CHECK(g.sum == doctest::Approx(1.0).epsilon(1e-6));
    for (const auto& [s, v] : g.values) CHECK(v > 0.0);
  }
  CHECK_THROWS_AS(taboo_green_exact(kRaySpiral, 35, 40), Error);
  CHECK_NOTHROW(taboo_green_exact(kRaySpiral, 35, 40, 5));
}

TEST_CASE("first passage matches the gambler's ruin closed form") {
  CHECK(first_passage_check(kRaySpiral, 10, 40) < 1e-10);
  CHECK(first_passage_check(kSpiralSpiral, 10, 40) < 1e-10);
}

TEST_CASE("Lyapunov drift") {
  const LyapunovReport r = lyapunov_drift_check(kRayRay, 40);
  CHECK(r.holds);
  CHECK(r.r == doctest::Approx(0.0986444271864734).epsilon(1e-10));
  CHECK(r.g == doctest::Approx(1.61580171471185).epsilon(1e-10));
  CHECK(r.alpha_E == doctest::Approx(4.34314575050762).epsilon(1e-10));
  CHECK(r.beta_E == doctest::Approx(2.82842712474619).epsilon(1e-10));
  CHECK(r.max_violation < 1e-12);
  CHECK(r.sheet1_max_dev < 1e-12);
  CHECK(r.sheet2_max_dev < 1e-12);
  try {
    lyapunov_drift_check(kRaySpiral, 40);
    FAIL("expected a regime error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::RegimePrecondition);
    CHECK(std::string(e.what()).find("R2") != std::string::npos);
  }
}

TEST_CASE("visit and hitting quantities for the origin") {
  const ChangDownResult a = chang_down_quantities(kRaySpiral, 40);
  const ChangDownResult b = chang_down_quantities(kRaySpiral, 50);
  CHECK(a.b > 0.0);
  CHECK(std::abs(a.b - b.b) / b.b < 0.01);
  CHECK(a.max_identity_error < 1e-10);
  CHECK(a.max_inequality_violation < 1e-10);
  CHECK(b.max_identity_error < 1e-10);
  CHECK_THROWS_AS(chang_down_quantities(kSpiralSpiral, 40), Error);
}

TEST_CASE("exact escape probability approaches its limit") {
  const State z{3, 0, Sheet::Serve1};
  const double lim = escape_probability_limit(kRaySpiral, z);
  const TwistedRates t = twisted_rates(kRaySpiral);
  CHECK(lim == doctest::Approx(t.lt2 * (1 - std::pow(t.mt / t.lt1, 3))).epsilon(1e-14));
  double prev = 1.0;
  for (int h : {10, 20, 40, 80}) {
    const double e = escape_probability_exact(kRaySpiral, z, h);
    CHECK(e >= lim - 1e-12);
    CHECK(e <= prev + 1e-12);
    prev = e;
  }
  CHECK(prev == doctest::Approx(lim).epsilon(1e-8));
  CHECK(escape_probability_limit(kSpiralSpiral, z) == 0.0);
}

TEST_CASE("table CSV") {
  std::ostringstream os;
  write_table_csv(os, {{State{1, 0, Sheet::Serve1}, 0.25}});
  CHECK(os.str().rfind("x,y,sheet,value\n1,0,1,", 0) == 0);
}
