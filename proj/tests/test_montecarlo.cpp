#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "polling/montecarlo.hpp"
#include "polling/oracle.hpp"

using namespace polling;

namespace {

const Params kRaySpiral = Params::stable(0.3, 0.05, 0.65);
const Params kSpiralSpiral = Params::stable(0.3, 0.15, 0.55);

SimConfig config(const Params& p, int level, std::int64_t n, std::uint64_t seed, int workers = 1) {
  SimConfig c;
  c.params = p;
  c.level = level;
  c.trajectories = n;
  c.seed = seed;
  c.worker_count = workers;
  return c;
}

}  // namespace

TEST_CASE("counter RNG is a pure function of seed and index") {
  CounterRng a(42, 7), b(42, 7), c(42, 8), d(43, 7);
  for (int i = 0; i < 100; ++i) {
    const std::uint64_t va = a.next();
    CHECK(va == b.next());
    CHECK(va != c.next());
    CHECK(va != d.next());
  }
  CounterRng u(1, 0);
  double mean = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double x = u.uniform();
    CHECK((x >= 0.0 && x < 1.0));
    mean += x;
  }
  CHECK(mean / 100000 == doctest::Approx(0.5).epsilon(0.01));
}

TEST_CASE("level state indexing round-trips") {
  for (int level : {1, 2, 7}) {
    CHECK(level_state_count(level) == 2 * level);
    std::set<std::pair<int, int>> seen;
    for (int i = 0; i < level_state_count(level); ++i) {
      const State s = level_state(level, i);
      CHECK(s.valid());
      CHECK(s.level() == level);
      CHECK(level_state_index(level, s) == i);
      seen.insert({s.x, sheet_index(s.sheet)});
    }
    CHECK(static_cast<int>(seen.size()) == 2 * level);
  }
  CHECK(level_state_index(3, State{1, 1, Sheet::Serve1}) == -1);
}

TEST_CASE("overshoot margin") {
  SimConfig c = config(kRaySpiral, 10, 1, 1);
  CHECK(c.overshoot_margin() == static_cast<int>(std::ceil(std::log(1e-9) / std::log(kRaySpiral.rho()))));
  CHECK(c.overshoot_margin() == 34);
  c.margin_override = 3;
  CHECK(c.overshoot_margin() == 3);
  CHECK(config(kSpiralSpiral, 10, 1, 1).overshoot_margin() == 104);
}

TEST_CASE("busy periods are bit-identical for any worker count") {
  const HitHistogram h1 = run_busy_periods(config(kSpiralSpiral, 12, 5000, 99, 1));
  for (int w : {4, 16}) {
    const HitHistogram hw = run_busy_periods(config(kSpiralSpiral, 12, 5000, 99, w));
    CHECK(hw.visits == h1.visits);
    CHECK(hw.visits_sq == h1.visits_sq);
    CHECK(hw.visits_cross == h1.visits_cross);
    CHECK(hw.total_visits == h1.total_visits);
    CHECK(hw.killed_first_step == h1.killed_first_step);
    CHECK(hw.killed_before_level == h1.killed_before_level);
  }
  const HitHistogram other = run_busy_periods(config(kSpiralSpiral, 12, 5000, 100, 1));
  CHECK(other.visits != h1.visits);
}

TEST_CASE("kill accounting") {
  const std::int64_t n = 100000;
  const HitHistogram h = run_busy_periods(config(kRaySpiral, 6, n, 3));
  CHECK(h.trajectories == n);
  CHECK(h.killed_first_step <= h.killed_before_level);
  CHECK(h.killed_before_level <= n);
  // The twisted origin row keeps mass 2 mu of which mu stays put: first-step kill 1 - mu.
  const double p = 1.0 - kRaySpiral.mu();
  const double frac = static_cast<double>(h.killed_first_step) / n;
  CHECK(std::abs(frac - p) < 4.0 * std::sqrt(p * (1 - p) / n));
  std::int64_t sum = 0;
  for (auto v : h.visits) sum += v;
  CHECK(sum == h.total_visits);
  CHECK(h.sheet_total(Sheet::Serve1) + h.sheet_total(Sheet::Serve2) == h.total_visits);
}

TEST_CASE("level-1 estimate matches the exact taboo Green function") {
  for (const Params& p : {kRaySpiral, kSpiralSpiral}) {
    const std::int64_t n = 200000;
    const HitHistogram h = run_busy_periods(config(p, 1, n, 5));
    const GreenEstimate est = estimate_pi(h, p, 1);
    const TabooGreenResult ex = taboo_green_exact(p, 1, 40);
    for (const auto& [s, g] : ex.values) {
      const GreenEntry& e = est.at(s);
      CHECK(std::abs(e.green - g) < 4.0 * e.green_stderr);
    }
    CHECK(std::abs(est.green_sum - 1.0) < 4.0 * est.green_sum_stderr);
  }
}

TEST_CASE("Green function sums to one in expectation") {
  const std::int64_t n = 50000;
  const HitHistogram h = run_busy_periods(config(kSpiralSpiral, 8, n, 17));
  const GreenEstimate est = estimate_pi(h, kSpiralSpiral, 8);
  CHECK(std::abs(est.green_sum - 1.0) < 4.0 * est.green_sum_stderr);
  const double scale = (1 - kSpiralSpiral.rho()) * std::pow(kSpiralSpiral.rho(), 8);
  CHECK(est.pi_level == doctest::Approx(scale * est.green_sum).epsilon(1e-12));
}

TEST_CASE("a larger overshoot margin leaves the estimate unchanged") {
  const std::int64_t n = 50000;
  SimConfig a = config(kRaySpiral, 6, n, 21);
  SimConfig b = a;
  b.margin_override = a.overshoot_margin() + 5;
  const GreenEstimate ea = estimate_pi(run_busy_periods(a), kRaySpiral, 6);
  const GreenEstimate eb = estimate_pi(run_busy_periods(b), kRaySpiral, 6);
  // Same seed and trajectory indices: paths agree until level + K, so sums barely move.
  CHECK(std::abs(ea.green_sum - eb.green_sum) < 1e-3 + 0.5 * ea.green_sum_stderr);
}

TEST_CASE("estimate_pi validates inputs and bounds empty cells") {
  const HitHistogram h = run_busy_periods(config(kRaySpiral, 30, 200, 1));
  CHECK_THROWS_AS(estimate_pi(h, kRaySpiral, 31), Error);
  CHECK_THROWS_AS(estimate_pi(h, kSpiralSpiral, 30), Error);
  const GreenEstimate est = estimate_pi(h, kRaySpiral, 30);
  const GreenEntry& north = est.at(State{0, 30, Sheet::Serve2});
  CHECK(north.visits == 0);
  CHECK(north.upper_bound_only);
  CHECK(north.green_stderr == doctest::Approx(3.0 / 200));

  std::ostringstream os;
  write_histogram_csv(os, est);
  CHECK(os.str().rfind("x,y,sheet,visits,fraction,stderr\n", 0) == 0);
  int lines = 0;
  for (char ch : os.str()) lines += ch == '\n';
  CHECK(lines == 1 + level_state_count(30));
}

TEST_CASE("conditioned paths climb without returning to the origin") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto path = simulate_conditioned_path(kSpiralSpiral, 40, seed);
    REQUIRE(path.size() >= 41);
    CHECK(path.front() == kOrigin);
    CHECK(path.back().level() == 40);
    for (std::size_t i = 1; i < path.size(); ++i) {
      CHECK_FALSE(path[i].is_origin());
      CHECK(path[i].valid());
      if (i + 1 < path.size()) CHECK(path[i].level() < 40);
    }
  }
  std::vector<State> toy{kOrigin, {1, 0, Sheet::Serve1}, {0, 1, Sheet::Serve2}, {1, 1, Sheet::Serve2},
                         {1, 0, Sheet::Serve1}};
  CHECK(count_sheet_switches(toy) == 2);
}

TEST_CASE("escape probability agrees with the exact solve") {
  const State z{3, 0, Sheet::Serve1};
  const EscapeEstimate mc = escape_probability(kRaySpiral, z, 200000, 4);
  const double exact = escape_probability_exact(kRaySpiral, z, mc.horizon);
  CHECK(mc.horizon == 3 + 34);
  CHECK(std::abs(mc.probability - exact) < 4.0 * mc.stderr_);
  CHECK(mc.ci_low <= mc.probability);
  CHECK(mc.probability <= mc.ci_high);
  CHECK(exact == doctest::Approx(escape_probability_limit(kRaySpiral, z)).epsilon(1e-3));
  CHECK_THROWS_AS(escape_probability(kRaySpiral, State{0, 3, Sheet::Serve2}, 10, 1), Error);
}
