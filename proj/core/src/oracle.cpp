#include "polling/oracle.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <ostream>

#include "polling/geometry.hpp"

namespace polling {

namespace {

// Square matrix stored by diagonals |i - j| <= b.
class BandMatrix {
 public:
  BandMatrix(int n, int b) : n_(n), b_(b), w_(2 * b + 1), data_(std::size_t(n) * w_, 0.0) {}
  double& operator()(int i, int j) { return data_[std::size_t(i) * w_ + (j - i + b_)]; }
  int n() const { return n_; }
  int b() const { return b_; }

 private:
  int n_, b_, w_;
  std::vector<double> data_;
};

struct Entry {
  int i, j;
  double v;
};

// Stationary vector of a chain given by its off-diagonal entries (row i -> column j),
// scaled so that x[0] = 1. Rows need not be normalized: GTH only uses off-diagonal mass.
std::vector<double> gth_solve(int n, const std::vector<Entry>& entries) {
  int b = 0;
  for (const auto& e : entries) b = std::max(b, std::abs(e.i - e.j));
  BandMatrix A(n, b);
  for (const auto& e : entries)
    if (e.i != e.j) A(e.i, e.j) += e.v;
  for (int k = n - 1; k >= 1; --k) {
    const int lo = std::max(0, k - b);
    double s = 0.0;
    for (int j = lo; j < k; ++j) s += A(k, j);
    if (!(s > 0.0)) throw Error(ErrorKind::Numerical, "GTH elimination: reducible chain");
    for (int i = lo; i < k; ++i) A(i, k) /= s;
    for (int i = lo; i < k; ++i) {
      const double aik = A(i, k);
      if (aik == 0.0) continue;
      for (int j = lo; j < k; ++j) {
        const double akj = A(k, j);
        if (akj != 0.0 && j != i) A(i, j) += aik * akj;
      }
    }
  }
  std::vector<double> x(n, 0.0);
  x[0] = 1.0;
  for (int k = 1; k < n; ++k) {
    double acc = 0.0;
    for (int i = std::max(0, k - b); i < k; ++i) acc += x[i] * A(i, k);
    x[k] = acc;
  }
  return x;
}

// Untwisted kernel with arrivals beyond L folded into self-loops.
KernelRow reflecting_row(const TruncatedModel& m, const State& s) {
  KernelRow row = kernel_row(m.params(), s);
  for (auto& t : row.entries)
    if (t.target.level() > m.L()) t.target = s;
  return row;
}

std::vector<std::pair<State, double>> level_slice(const TruncatedModel& m,
                                                  const std::vector<double>& v, int level) {
  std::vector<std::pair<State, double>> out;
  const int begin = TruncatedModel::level_start(level);
  const int end = level == 0 ? 1 : begin + 2 * level;
  for (int k = begin; k < end; ++k) out.emplace_back(m.state(k), v[k]);
  return out;
}

void require_stable(const Params& p) {
  if (!p.is_stable()) throw Error(ErrorKind::InvalidInput, "stability λ<μ violated (hypothesis K)");
}

using SpMat = Eigen::SparseMatrix<double>;

Eigen::VectorXd sparse_solve(const SpMat& A, const Eigen::VectorXd& rhs) {
  Eigen::SparseLU<SpMat> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "sparse LU factorization failed");
  Eigen::VectorXd x = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw Error(ErrorKind::Numerical, "sparse LU solve failed");
  return x;
}

}  // namespace

TruncatedModel::TruncatedModel(const Params& p, int L) : params_(p), L_(L) {
  if (L < 1) throw Error(ErrorKind::InvalidInput, "truncation level must be >= 1");
}

int TruncatedModel::index(const State& s) const {
  if (!s.valid() || s.level() > L_) return -1;
  if (s.is_origin()) return 0;
  if (s.level() == 0) return -1;
  const int k = s.level();
  return level_start(k) + (s.sheet == Sheet::Serve1 ? s.x - 1 : k + s.x);
}

State TruncatedModel::state(int index) const {
  if (index == 0) return kOrigin;
  // level_start(k) = 1 + k(k-1) <= index
  int k = static_cast<int>((1.0 + std::sqrt(4.0 * index - 3.0)) / 2.0);
  while (level_start(k + 1) <= index) ++k;
  while (level_start(k) > index) --k;
  const int off = index - level_start(k);
  if (off < k) return {off + 1, k - off - 1, Sheet::Serve1};
  const int x = off - k;
  return {x, k - x, Sheet::Serve2};
}

double StationaryResult::at(const State& s) const {
  const int k = model.index(s);
  if (k < 0) throw Error(ErrorKind::InvalidInput, "state outside the truncation: " + to_string(s));
  return pi[k];
}

double StationaryResult::level_marginal(int level) const {
  if (level < 0 || level > model.L()) throw Error(ErrorKind::InvalidInput, "level outside truncation");
  double total = 0.0;
  for (const auto& [s, v] : level_slice(model, pi, level)) total += v;
  return total;
}

double StationaryResult::origin_balance_residual() const {
  const Params& p = model.params();
  const double out = p.lambda() * pi[0];
  const double in = p.mu() * (at({1, 0, Sheet::Serve1}) + at({0, 1, Sheet::Serve2}));
  return std::abs(out - in) / out;
}

std::vector<std::pair<State, double>> StationaryResult::table() const {
  std::vector<std::pair<State, double>> out;
  for (int k = 0; k < model.size(); ++k) out.emplace_back(model.state(k), pi[k]);
  return out;
}

StationaryResult stationary_truncated(const Params& p, int L) {
  require_stable(p);
  if (L < 2) throw Error(ErrorKind::InvalidInput, "truncation level must be >= 2");
  TruncatedModel m(p, L);
  std::vector<Entry> entries;
  for (int i = 0; i < m.size(); ++i)
    for (const auto& t : reflecting_row(m, m.state(i)).entries)
      entries.push_back({i, m.index(t.target), t.prob});
  std::vector<double> x = gth_solve(m.size(), entries);
  const double scale = 1.0 - p.rho();
  double mass = 0.0;
  for (double& v : x) mass += (v *= scale);
  return {m, std::move(x), mass, std::pow(p.rho(), L + 1)};
}

TabooGreenResult taboo_green_exact(const Params& p, int level, int L, int margin) {
  require_stable(p);
  if (level < 1) throw Error(ErrorKind::InvalidInput, "level must be >= 1");
  if (level > L - margin)
    throw Error(ErrorKind::InvalidInput, "level too close to the truncation rim");
  TruncatedModel m(p, L);
  // h-transform of the reflecting truncation with h = rho^{-level}; mass killed at the
  // rim and mass entering the origin both regenerate at the origin, so the stationary
  // vector scaled to 1 at the origin is the taboo Green's function from the origin.
  const double rho = p.rho();
  std::vector<Entry> entries;
  for (int i = 1; i < m.size(); ++i) {
    const State s = m.state(i);
    double kept = 0.0;
    for (const auto& t : reflecting_row(m, s).entries) {
      const double w = t.prob * std::pow(rho, s.level() - t.target.level());
      kept += w;
      entries.push_back({i, m.index(t.target), w});
    }
    if (kept < 1.0) entries.push_back({i, 0, 1.0 - kept});
  }
  const TwistedRates tw = twisted_rates(p);
  entries.push_back({0, m.index({1, 0, Sheet::Serve1}), tw.lt1});
  entries.push_back({0, m.index({0, 1, Sheet::Serve2}), tw.lt2});
  const std::vector<double> g = gth_solve(m.size(), entries);

  TabooGreenResult r;
  r.level = level;
  r.L = L;
  r.values = level_slice(m, g, level);
  for (const auto& [s, v] : r.values) r.sum += v;
  const StationaryResult st = stationary_truncated(p, L);
  const double scale = (1.0 - rho) * std::pow(rho, level);
  for (const auto& [s, v] : r.values) {
    const double pi = st.at(s);
    r.representation_max_rel_error =
        std::max(r.representation_max_rel_error, std::abs(scale * v - pi) / pi);
  }
  return r;
}

double first_passage_check(const Params& p, int level, int L, int margin) {
  require_stable(p);
  if (level < 1) throw Error(ErrorKind::InvalidInput, "level must be >= 1");
  if (level > L - margin)
    throw Error(ErrorKind::InvalidInput, "level too close to the truncation rim");
  const TruncatedModel m(p, level);
  // Unknowns: states on levels 1..level-1 (indices 1..n-1 shifted by one).
  const int n = TruncatedModel::level_start(level) - 1;
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int i = 1; i <= n; ++i) {
    trips.emplace_back(i - 1, i - 1, 1.0);
    for (const auto& t : kernel_row(p, m.state(i)).entries) {
      if (t.target.is_origin()) continue;
      if (t.target.level() >= level) {
        rhs[i - 1] += t.prob;
      } else {
        trips.emplace_back(i - 1, m.index(t.target) - 1, -t.prob);
      }
    }
  }
  SpMat A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  const Eigen::VectorXd h = sparse_solve(A, rhs);
  const double denom = std::expm1(level * std::log(p.rho_inv()));
  double dev = 0.0;
  for (int i = 1; i <= n; ++i) {
    const double exact = std::expm1(m.state(i).level() * std::log(p.rho_inv())) / denom;
    dev = std::max(dev, std::abs(h[i - 1] - exact));
  }
  return dev;
}

LyapunovReport lyapunov_drift_check(const Params& p, int window) {
  require_stable(p);
  if (window < 1) throw Error(ErrorKind::InvalidInput, "window must be >= 1");
  const TwistedRates tw = twisted_rates(p);
  if (!(tw.lt1 > tw.mt))
    throw Error(ErrorKind::RegimePrecondition, "R1 violated: twisted lambda1 <= twisted mu");
  if (!(tw.lt2 > tw.mt))
    throw Error(ErrorKind::RegimePrecondition, "R2 violated: twisted lambda2 <= twisted mu");
  const SpecialPoints sp = special_points(p);
  LyapunovReport rep;
  rep.alpha_E = sp.alpha_E;
  rep.beta_E = sp.beta_E;
  rep.r = p.mu() * (1.0 / sp.beta_E - 1.0 / sp.alpha_E);
  rep.g = p.lambda1() * sp.alpha_E + p.lambda2() * sp.beta_E + p.mu() + rep.r;
  rep.window = window;
  auto V = [&](const State& s) { return std::pow(sp.alpha_E, s.x) * std::pow(sp.beta_E, s.y); };
  const TruncatedModel m(p, window);
  rep.max_violation = -INFINITY;
  for (int i = 0; i < m.size(); ++i) {
    const State s = m.state(i);
    double kv = 0.0;
    for (const auto& t : kernel_row(p, s).entries) kv += t.prob * V(t.target);
    const double v = V(s);
    const bool sheet1 = s.sheet == Sheet::Serve1;
    const double bound = (sheet1 ? -rep.r * v : 0.0) + (s.is_origin() ? rep.g : 0.0);
    rep.max_violation = std::max(rep.max_violation, (kv - v - bound) / v);
    if (s.is_origin()) continue;
    if (sheet1)
      rep.sheet1_max_dev = std::max(rep.sheet1_max_dev, std::abs(kv / v - (1.0 - rep.r)));
    else
      rep.sheet2_max_dev = std::max(rep.sheet2_max_dev, std::abs(kv / v - 1.0));
  }
  rep.holds = rep.r > 0.0 && rep.max_violation <= 1e-12;
  return rep;
}

ChangDownResult chang_down_quantities(const Params& p, int cap) {
  require_stable(p);
  if (classify(p).sheet1 != Regime::Ray)
    throw Error(ErrorKind::RegimePrecondition,
                "R1 violated: sheet 1 is a spiral and H_E may diverge");
  if (cap < 2) throw Error(ErrorKind::InvalidInput, "cap must be >= 2");
  const TruncatedModel m(p, cap - 1);
  const int n = m.size() - 1;  // every state below the cap except the origin
  auto in_delta = [](const State& s) { return s.sheet == Sheet::Serve1 && s.y == 0 && s.x >= 1; };
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int i = 1; i <= n; ++i) {
    const State s = m.state(i);
    trips.emplace_back(i - 1, i - 1, 1.0);
    if (in_delta(s)) rhs[i - 1] = 1.0;
    for (const auto& t : twisted_kernel_row(p, s).entries) {
      const int j = m.index(t.target);
      if (j <= 0) continue;  // origin (E) or absorbed beyond the cap
      trips.emplace_back(i - 1, j - 1, -t.prob);
    }
  }
  SpMat A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  const Eigen::VectorXd sol = sparse_solve(A, rhs);
  std::vector<double> G(m.size(), 0.0);
  for (int i = 1; i <= n; ++i) G[i] = sol[i - 1];

  ChangDownResult r;
  r.cap = cap;
  for (int i = 0; i < m.size(); ++i) {
    const State s = m.state(i);
    double h = 0.0;
    for (const auto& t : twisted_kernel_row(p, s).entries) {
      const int j = m.index(t.target);
      if (j >= 0) h += t.prob * G[j];
    }
    r.G.emplace_back(s, G[i]);
    r.H.emplace_back(s, h);
    if (i == 0) {
      r.b = h;
      continue;
    }
    const double delta = in_delta(s) ? 1.0 : 0.0;
    r.max_identity_error = std::max(r.max_identity_error, std::abs(G[i] - delta - h));
  }
  // J G - G <= -1_Delta + b 1_E, evaluated with the H just computed.
  r.max_inequality_violation = -INFINITY;
  for (int i = 0; i < m.size(); ++i) {
    const State s = m.state(i);
    const double lhs = r.H[i].second - G[i];
    const double rhs_i = (in_delta(s) ? -1.0 : 0.0) + (i == 0 ? r.b : 0.0);
    r.max_inequality_violation = std::max(r.max_inequality_violation, lhs - rhs_i);
  }
  return r;
}

double escape_probability_exact(const Params& p, const State& z, int horizon) {
  require_stable(p);
  if (z.sheet != Sheet::Serve1 || z.y != 0 || z.x < 1)
    throw Error(ErrorKind::InvalidInput, "escape start must be (x,0,1) with x >= 1");
  if (horizon <= z.level()) throw Error(ErrorKind::InvalidInput, "horizon must exceed z's level");
  const TruncatedModel m(p, horizon - 1);
  auto taboo = [](const State& s) { return s.sheet == Sheet::Serve2 || s.y == 0; };
  // Compress sheet-1 interior states below the horizon.
  std::vector<int> slot(m.size(), -1);
  int n = 0;
  for (int i = 0; i < m.size(); ++i)
    if (!taboo(m.state(i))) slot[i] = n++;
  // Value of a target: 0 in the taboo set, 1 at the horizon, else unknown.
  auto classify_target = [&](const State& t, double prob, int row, std::vector<Eigen::Triplet<double>>& trips,
                             double& rhs) {
    if (taboo(t)) return;
    if (t.level() >= horizon) {
      rhs += prob;
      return;
    }
    trips.emplace_back(row, slot[m.index(t)], -prob);
  };
  std::vector<Eigen::Triplet<double>> trips;
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < m.size(); ++i) {
    if (slot[i] < 0) continue;
    trips.emplace_back(slot[i], slot[i], 1.0);
    for (const auto& t : twisted_kernel_row(p, m.state(i)).entries)
      classify_target(t.target, t.prob, slot[i], trips, rhs[slot[i]]);
  }
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  if (n > 0) {
    SpMat A(n, n);
    A.setFromTriplets(trips.begin(), trips.end());
    e = sparse_solve(A, rhs);
  }
  double prob = 0.0;
  for (const auto& t : twisted_kernel_row(p, z).entries) {
    if (taboo(t.target)) continue;
    prob += t.target.level() >= horizon ? t.prob : t.prob * e[slot[m.index(t.target)]];
  }
  return prob;
}

double escape_probability_limit(const Params& p, const State& z) {
  if (z.sheet != Sheet::Serve1 || z.y != 0 || z.x < 1)
    throw Error(ErrorKind::InvalidInput, "escape start must be (x,0,1) with x >= 1");
  const TwistedRates t = twisted_rates(p);
  if (t.lt1 <= t.mt) return 0.0;
  // The first step must go north; afterwards y never decreases on sheet 1 and only the
  // x-coordinate, a walk with up lt1 and down mt, can reach the taboo set.
  return t.lt2 * (1.0 - std::pow(t.mt / t.lt1, z.x));
}

void write_table_csv(std::ostream& os, const std::vector<std::pair<State, double>>& table) {
  os << "x,y,sheet,value\n";
  os.precision(17);
  for (const auto& [s, v] : table)
    os << s.x << ',' << s.y << ',' << sheet_index(s.sheet) << ',' << v << '\n';
}

}  // namespace polling
