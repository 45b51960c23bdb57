#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "polling/model.hpp"

namespace polling {

struct SimConfig {
  Params params = Params::stable(0.3, 0.05, 0.65);
  int level = 1;
  std::int64_t trajectories = 1;
  std::uint64_t seed = 0;
  double overshoot_epsilon = 1e-9;
  int worker_count = 1;
  int margin_override = 0;  // > 0 replaces the derived K

  // K = ceil(ln eps / ln rho), at least 1: trajectories stop at level + K.
  int overshoot_margin() const;
};

// Counter-based generator: the stream for (seed, index) is a pure function of both,
// so trajectories can be scheduled on any worker.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t index);
  std::uint64_t next();
  double uniform();  // [0, 1)

 private:
  std::uint64_t state_;
};

// Level-l states in a fixed order: sheet 1 (x = 1..l), then sheet 2 (x = 0..l-1).
int level_state_count(int level);
State level_state(int level, int index);
int level_state_index(int level, const State& s);  // -1 when s is not on the level

struct HitHistogram {
  int level = 0;
  int overshoot_margin = 0;
  double lambda1 = 0.0, lambda2 = 0.0, mu = 0.0;  // normalized rates used
  std::int64_t trajectories = 0;
  std::int64_t killed_first_step = 0;
  std::int64_t killed_before_level = 0;  // includes killed_first_step
  std::int64_t total_visits = 0;         // N
  std::int64_t total_visits_sq = 0;      // sum over trajectories of V^2
  std::vector<std::int64_t> visits;      // N(x,y,s), indexed by level_state_index
  std::vector<std::int64_t> visits_sq;   // sum over trajectories of v^2
  std::vector<std::int64_t> visits_cross;  // sum over trajectories of v * V

  void merge(const HitHistogram& other);
  std::int64_t sheet_total(Sheet s) const;
  // Sheet-1 state with the most visits (ties toward smaller x).
  State argmax(Sheet s) const;
};

// Simulates n busy periods of the twisted chain started at the origin, killed on
// entering the origin, counting every visit to the target level. Results are
// bit-identical for any worker_count.
HitHistogram run_busy_periods(const SimConfig& cfg);

struct GreenEntry {
  State state;
  std::int64_t visits = 0;
  double green = 0.0;  // mean visits per trajectory
  double green_stderr = 0.0;
  double pi = 0.0;  // (1 - rho) rho^l green
  double pi_stderr = 0.0;
  double fraction = 0.0;  // N(x,y,s)/N
  double fraction_stderr = 0.0;
  bool upper_bound_only = false;  // no hits: stderr fields hold the rule-of-three bound 3/n
};

struct GreenEstimate {
  int level = 0;
  std::int64_t trajectories = 0;
  std::vector<GreenEntry> entries;  // level_state order
  double green_sum = 0.0;
  double green_sum_stderr = 0.0;
  double pi_level = 0.0;
  double pi_level_stderr = 0.0;

  const GreenEntry& at(const State& s) const;
};

GreenEstimate estimate_pi(const HitHistogram& hist, const Params& params, int level);

// CSV with header x,y,sheet,visits,fraction,stderr.
void write_histogram_csv(std::ostream& os, const GreenEstimate& est);

// Path of the chain conditioned to reach `level` before returning to the origin,
// from the origin to the first level-l state.
std::vector<State> simulate_conditioned_path(const Params& p, int level, std::uint64_t seed);
int count_sheet_switches(const std::vector<State>& path);

struct EscapeEstimate {
  double probability = 0.0;
  double stderr_ = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // 95% normal interval clipped to [0, 1]
  std::int64_t trajectories = 0;
  int horizon = 0;
};

// Probability that the twisted chain started at z = (x,0,1) reaches level `horizon`
// without entering {x = 0 or y = 0 on sheet 1} or sheet 2 after time 0.
// horizon <= 0 selects z.level() + K with K from overshoot_epsilon.
EscapeEstimate escape_probability(const Params& p, const State& z, std::int64_t n,
                                  std::uint64_t seed, int horizon = 0,
                                  double overshoot_epsilon = 1e-9);

}  // namespace polling
