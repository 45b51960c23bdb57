#pragma once

#include <iosfwd>
#include <utility>
#include <vector>

#include "polling/model.hpp"

namespace polling {

// States with x + y <= L ordered by (level, sheet, x): the origin, then for each
// level k >= 1 the sheet-1 states x = 1..k followed by the sheet-2 states x = 0..k-1.
class TruncatedModel {
 public:
  enum class Rim { Reflecting, TwistedRegenerative };

  TruncatedModel(const Params& p, int L);

  const Params& params() const { return params_; }
  int L() const { return L_; }
  int size() const { return 1 + L_ * (L_ + 1); }
  static int level_start(int level) { return level == 0 ? 0 : 1 + level * (level - 1); }
  int index(const State& s) const;  // -1 when outside the truncation
  State state(int index) const;

 private:
  Params params_;
  int L_;
};

struct StationaryResult {
  TruncatedModel model;
  std::vector<double> pi;  // normalized so that pi(origin) = 1 - rho
  double mass = 0.0;       // total mass, 1 - rho^{L+1}
  double tail_bound = 0.0;  // sum_{k > L} (1 - rho) rho^k = rho^{L+1}

  double at(const State& s) const;
  double level_marginal(int level) const;
  // |lambda pi(0,0,1) - mu pi(1,0,1) - mu pi(0,1,2)| relative to lambda pi(0,0,1).
  double origin_balance_residual() const;
  std::vector<std::pair<State, double>> table() const;
};

// Stationary law on x + y <= L with arrivals at the rim turned into self-loops,
// by subtraction-free (GTH) elimination on the banded kernel.
StationaryResult stationary_truncated(const Params& p, int L);

struct TabooGreenResult {
  int level = 0;
  int L = 0;
  std::vector<std::pair<State, double>> values;  // G(origin; s) on the level
  double sum = 0.0;
  double representation_max_rel_error = 0.0;  // vs (1 - rho) rho^l G, from stationary_truncated
};

// Expected visits of the twisted chain, killed on entering the origin, to the level-l
// states. The chain is the h-transform of the reflecting truncation, so the rim kills
// mass mu - lambda. Requires l <= L - margin.
TabooGreenResult taboo_green_exact(const Params& p, int level, int L, int margin = 10);

// Max |P_s[reach level l before the origin] - (rho^-k - 1)/(rho^-l - 1)| over k < l.
double first_passage_check(const Params& p, int level, int L, int margin = 10);

struct LyapunovReport {
  double alpha_E = 0.0, beta_E = 0.0;
  double r = 0.0;
  double g = 0.0;  // lambda1 alpha_E + lambda2 beta_E + mu + r
  int window = 0;
  double max_violation = 0.0;      // max of (KV - V) - (-r V 1{sheet 1} + g 1{origin}), relative to V
  double sheet1_max_dev = 0.0;     // max |KV/V - (1 - r)| on sheet 1 off the origin
  double sheet2_max_dev = 0.0;     // max |KV/V - 1| on sheet 2
  bool holds = false;
};

// Drift check for V(x,y,s) = alpha_E^x beta_E^y on states with x + y <= window.
LyapunovReport lyapunov_drift_check(const Params& p, int window);

struct ChangDownResult {
  int cap = 0;
  std::vector<std::pair<State, double>> G;  // G_E on levels below the cap
  std::vector<std::pair<State, double>> H;  // H_E = J G_E
  double b = 0.0;                           // H_E(origin)
  double max_identity_error = 0.0;          // max |G_E - 1_Delta - H_E| off E
  double max_inequality_violation = 0.0;    // max of (JG - G) - (-1_Delta + b 1_E)
};

// G_E = expected visits of the twisted chain to the sheet-1 x-axis before entering
// E = {origin}, and H_E = J G_E, with the chain absorbed at level `cap`.
ChangDownResult chang_down_quantities(const Params& p, int cap);

// Exact counterpart of montecarlo::escape_probability with the same horizon rule.
double escape_probability_exact(const Params& p, const State& z, int horizon);
// Infinite-horizon limit lt2 (1 - (mt/lt1)^x), zero when sheet 1 is a spiral.
double escape_probability_limit(const Params& p, const State& z);

// CSV with header x,y,sheet,value.
void write_table_csv(std::ostream& os, const std::vector<std::pair<State, double>>& table);

}  // namespace polling
