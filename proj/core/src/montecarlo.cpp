#include "polling/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <climits>
#include <cmath>
#include <ostream>
#include <thread>

namespace polling {

namespace {

constexpr std::int64_t kChunk = 1024;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

int margin_for(double rho, double eps) {
  if (!(eps > 0.0 && eps < 1.0))
    throw Error(ErrorKind::InvalidInput, "overshoot epsilon must lie in (0, 1)");
  return std::max(1, static_cast<int>(std::ceil(std::log(eps) / std::log(rho))));
}

// Twisted-chain position with the sheet stored as 1 or 2.
struct Walker {
  int x = 0, y = 0, sheet = 1;
  int level() const { return x + y; }
  // Service move; returns false when the move enters the origin.
  bool serve() {
    if (sheet == 1) {
      if (x > 1) --x;
      else if (y > 0) { x = 0; sheet = 2; }
      else return false;
    } else {
      if (y > 1) --y;
      else if (x > 0) { y = 0; sheet = 1; }
      else return false;
    }
    return true;
  }
};

int walker_index(int level, const Walker& w) {
  return w.sheet == 1 ? w.x - 1 : level + w.x;
}

HitHistogram empty_histogram(const SimConfig& cfg, int margin) {
  HitHistogram h;
  h.level = cfg.level;
  h.overshoot_margin = margin;
  h.lambda1 = cfg.params.lambda1();
  h.lambda2 = cfg.params.lambda2();
  h.mu = cfg.params.mu();
  const auto n = static_cast<std::size_t>(level_state_count(cfg.level));
  h.visits.assign(n, 0);
  h.visits_sq.assign(n, 0);
  h.visits_cross.assign(n, 0);
  return h;
}

void run_chunk(const SimConfig& cfg, int margin, std::int64_t begin, std::int64_t end,
               HitHistogram& out, std::vector<int>& current, std::vector<int>& touched) {
  const TwistedRates t = twisted_rates(cfg.params);
  const double east = t.lt1, east_north = t.lt1 + t.lt2;
  const int level = cfg.level, stop = cfg.level + margin;
  for (std::int64_t i = begin; i < end; ++i) {
    CounterRng rng(cfg.seed, static_cast<std::uint64_t>(i));
    ++out.trajectories;
    Walker w;
    // Taboo first step: the origin self-loop and the return both count as a kill.
    const double u0 = rng.uniform();
    if (u0 < east) {
      w = {1, 0, 1};
    } else if (u0 < east_north) {
      w = {0, 1, 2};
    } else {
      ++out.killed_first_step;
      ++out.killed_before_level;
      continue;
    }
    bool reached = false;
    for (;;) {
      const int lv = w.level();
      if (lv == level) {
        reached = true;
        const int k = walker_index(level, w);
        if (current[k]++ == 0) touched.push_back(k);
      }
      if (lv >= stop) break;
      const double u = rng.uniform();
      if (u < east) ++w.x;
      else if (u < east_north) ++w.y;
      else if (!w.serve()) break;
    }
    if (!reached) {
      ++out.killed_before_level;
      continue;
    }
    std::int64_t total = 0;
    for (int k : touched) total += current[k];
    out.total_visits += total;
    out.total_visits_sq += total * total;
    for (int k : touched) {
      const std::int64_t v = current[k];
      out.visits[k] += v;
      out.visits_sq[k] += v * v;
      out.visits_cross[k] += v * total;
      current[k] = 0;
    }
    touched.clear();
  }
}

}  // namespace

int SimConfig::overshoot_margin() const {
  if (margin_override > 0) return margin_override;
  return margin_for(params.rho(), overshoot_epsilon);
}

CounterRng::CounterRng(std::uint64_t seed, std::uint64_t index)
    : state_(mix64(seed ^ mix64(index + 0x632BE59BD9B4E019ULL))) {}

std::uint64_t CounterRng::next() {
  state_ += 0x9E3779B97F4A7C15ULL;
  return mix64(state_);
}

double CounterRng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

int level_state_count(int level) { return 2 * level; }

State level_state(int level, int index) {
  if (index < level) return {index + 1, level - index - 1, Sheet::Serve1};
  const int x = index - level;
  return {x, level - x, Sheet::Serve2};
}

int level_state_index(int level, const State& s) {
  if (s.level() != level || !s.valid() || level < 1) return -1;
  return s.sheet == Sheet::Serve1 ? (s.x >= 1 ? s.x - 1 : -1) : level + s.x;
}

void HitHistogram::merge(const HitHistogram& o) {
  trajectories += o.trajectories;
  killed_first_step += o.killed_first_step;
  killed_before_level += o.killed_before_level;
  total_visits += o.total_visits;
  total_visits_sq += o.total_visits_sq;
  for (std::size_t k = 0; k < visits.size(); ++k) {
    visits[k] += o.visits[k];
    visits_sq[k] += o.visits_sq[k];
    visits_cross[k] += o.visits_cross[k];
  }
}

std::int64_t HitHistogram::sheet_total(Sheet s) const {
  std::int64_t total = 0;
  for (int k = 0; k < static_cast<int>(visits.size()); ++k)
    if (level_state(level, k).sheet == s) total += visits[k];
  return total;
}

State HitHistogram::argmax(Sheet s) const {
  int best = -1;
  for (int k = 0; k < static_cast<int>(visits.size()); ++k) {
    if (level_state(level, k).sheet != s) continue;
    if (best < 0 || visits[k] > visits[best]) best = k;
  }
  return level_state(level, best);
}

HitHistogram run_busy_periods(const SimConfig& cfg) {
  if (!cfg.params.is_stable()) throw Error(ErrorKind::InvalidInput, "stability λ<μ violated");
  if (cfg.level < 1) throw Error(ErrorKind::InvalidInput, "level must be >= 1");
  if (cfg.trajectories < 1) throw Error(ErrorKind::InvalidInput, "need at least one trajectory");
  if (cfg.worker_count < 1) throw Error(ErrorKind::InvalidInput, "worker count must be positive");
  const int margin = cfg.overshoot_margin();
  if (cfg.level > INT_MAX / 4 - margin)
    throw Error(ErrorKind::InvalidInput, "level + overshoot margin overflows the coordinate type");

  const std::int64_t chunks = (cfg.trajectories + kChunk - 1) / kChunk;
  const int workers =
      static_cast<int>(std::min<std::int64_t>(cfg.worker_count, std::max<std::int64_t>(chunks, 1)));
  std::vector<HitHistogram> partial(workers, empty_histogram(cfg, margin));
  std::atomic<std::int64_t> next{0};
  auto work = [&](int id) {
    std::vector<int> current(partial[id].visits.size(), 0);
    std::vector<int> touched;
    for (std::int64_t c; (c = next.fetch_add(1)) < chunks;) {
      const std::int64_t begin = c * kChunk;
      run_chunk(cfg, margin, begin, std::min(begin + kChunk, cfg.trajectories), partial[id],
                current, touched);
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int id = 0; id < workers; ++id) pool.emplace_back(work, id);
    for (auto& th : pool) th.join();
  }
  HitHistogram out = empty_histogram(cfg, margin);
  for (const auto& h : partial) out.merge(h);
  return out;
}

const GreenEntry& GreenEstimate::at(const State& s) const {
  const int k = level_state_index(level, s);
  if (k < 0) throw Error(ErrorKind::InvalidInput, "state not on the level: " + to_string(s));
  return entries[k];
}

GreenEstimate estimate_pi(const HitHistogram& hist, const Params& params, int level) {
  if (hist.level != level) throw Error(ErrorKind::InvalidInput, "histogram level mismatch");
  if (std::abs(hist.lambda1 - params.lambda1()) > 1e-15 ||
      std::abs(hist.lambda2 - params.lambda2()) > 1e-15 || std::abs(hist.mu - params.mu()) > 1e-15)
    throw Error(ErrorKind::InvalidInput, "histogram parameters mismatch");
  if (hist.trajectories < 2) throw Error(ErrorKind::InvalidInput, "need at least two trajectories");

  const double n = static_cast<double>(hist.trajectories);
  const double scale = (1.0 - params.rho()) * std::pow(params.rho(), level);
  const double N = static_cast<double>(hist.total_visits);
  const double v_bar = N / n;
  auto stderr_of_mean = [n](double sum, double sum_sq) {
    const double mean = sum / n;
    return std::sqrt(std::max(0.0, (sum_sq / n - mean * mean) * n / (n - 1.0)) / n);
  };

  GreenEstimate est;
  est.level = level;
  est.trajectories = hist.trajectories;
  est.entries.resize(hist.visits.size());
  for (std::size_t k = 0; k < hist.visits.size(); ++k) {
    GreenEntry& e = est.entries[k];
    e.state = level_state(level, static_cast<int>(k));
    e.visits = hist.visits[k];
    const double v = static_cast<double>(hist.visits[k]);
    if (hist.visits[k] == 0) {
      e.upper_bound_only = true;
      e.green_stderr = 3.0 / n;
      e.pi_stderr = scale * e.green_stderr;
      e.fraction_stderr = N > 0.0 ? 3.0 / N : 1.0;
      continue;
    }
    e.green = v / n;
    e.green_stderr = stderr_of_mean(v, static_cast<double>(hist.visits_sq[k]));
    e.pi = scale * e.green;
    e.pi_stderr = scale * e.green_stderr;
    e.fraction = v / N;
    // Ratio estimator: Var(sum v / sum V) ~ sum (v_i - f V_i)^2 / (n (n-1) V_bar^2).
    const double f = e.fraction;
    const double dev = static_cast<double>(hist.visits_sq[k]) -
                       2.0 * f * static_cast<double>(hist.visits_cross[k]) +
                       f * f * static_cast<double>(hist.total_visits_sq);
    e.fraction_stderr = std::sqrt(std::max(0.0, dev) / (n * (n - 1.0))) / v_bar;
  }
  est.green_sum = v_bar;
  est.green_sum_stderr = stderr_of_mean(N, static_cast<double>(hist.total_visits_sq));
  est.pi_level = scale * est.green_sum;
  est.pi_level_stderr = scale * est.green_sum_stderr;
  return est;
}

void write_histogram_csv(std::ostream& os, const GreenEstimate& est) {
  os << "x,y,sheet,visits,fraction,stderr\n";
  os.precision(17);
  for (const auto& e : est.entries)
    os << e.state.x << ',' << e.state.y << ',' << sheet_index(e.state.sheet) << ',' << e.visits
       << ',' << e.fraction << ',' << e.fraction_stderr << '\n';
}

std::vector<State> simulate_conditioned_path(const Params& p, int level, std::uint64_t seed) {
  if (!p.is_stable()) throw Error(ErrorKind::InvalidInput, "stability λ<μ violated");
  if (level < 1) throw Error(ErrorKind::InvalidInput, "level must be >= 1");
  CounterRng rng(seed, 0);
  std::vector<State> path{kOrigin};
  State s = kOrigin;
  while (s.level() < level) {
    const KernelRow row = conditioned_kernel_row(p, level, s);
    double u = rng.uniform() * row.sum();
    const Transition* pick = &row.entries.back();
    for (const auto& t : row.entries) {
      if (u < t.prob) {
        pick = &t;
        break;
      }
      u -= t.prob;
    }
    s = pick->target;
    path.push_back(s);
  }
  return path;
}

int count_sheet_switches(const std::vector<State>& path) {
  int switches = 0;
  for (std::size_t i = 1; i < path.size(); ++i)
    if (!path[i - 1].is_origin() && path[i].sheet != path[i - 1].sheet) ++switches;
  return switches;
}

EscapeEstimate escape_probability(const Params& p, const State& z, std::int64_t n,
                                  std::uint64_t seed, int horizon, double overshoot_epsilon) {
  if (!p.is_stable()) throw Error(ErrorKind::InvalidInput, "stability λ<μ violated");
  if (z.sheet != Sheet::Serve1 || z.y != 0 || z.x < 1)
    throw Error(ErrorKind::InvalidInput, "escape start must be (x,0,1) with x >= 1");
  if (n < 1) throw Error(ErrorKind::InvalidInput, "need at least one trajectory");
  if (horizon <= 0) horizon = z.level() + margin_for(p.rho(), overshoot_epsilon);
  if (horizon <= z.level()) throw Error(ErrorKind::InvalidInput, "horizon must exceed z's level");

  const TwistedRates t = twisted_rates(p);
  const double east = t.lt1, east_north = t.lt1 + t.lt2;
  std::int64_t escaped = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    CounterRng rng(seed, static_cast<std::uint64_t>(i));
    Walker w{z.x, 0, 1};
    for (;;) {
      const double u = rng.uniform();
      if (u < east) ++w.x;
      else if (u < east_north) ++w.y;
      else if (!w.serve()) break;
      if (w.sheet == 2 || w.y == 0) break;  // entered the taboo set
      if (w.level() >= horizon) {
        ++escaped;
        break;
      }
    }
  }
  EscapeEstimate e;
  e.trajectories = n;
  e.horizon = horizon;
  e.probability = static_cast<double>(escaped) / static_cast<double>(n);
  e.stderr_ = std::sqrt(e.probability * (1.0 - e.probability) / static_cast<double>(n));
  e.ci_low = std::max(0.0, e.probability - 1.96 * e.stderr_);
  e.ci_high = std::min(1.0, e.probability + 1.96 * e.stderr_);
  return e;
}

}  // namespace polling
