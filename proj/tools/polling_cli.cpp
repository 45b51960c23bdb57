#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "polling/asymptotics.hpp"
#include "polling/batch.hpp"
#include "polling/geometry.hpp"
#include "polling/montecarlo.hpp"
#include "polling/oracle.hpp"

#ifndef POLLING_VERSION
#define POLLING_VERSION "unknown"
#endif

namespace {

using nlohmann::json;
using namespace polling;

constexpr int kExitInvalid = 2;
constexpr int kExitRegime = 3;
constexpr int kExitNumerical = 4;

std::vector<double> parse_list(const std::string& text, std::size_t expected, const char* what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorKind::InvalidInput, std::string("cannot parse ") + what + ": '" + text + "'");
    }
  }
  if (out.size() != expected)
    throw Error(ErrorKind::InvalidInput,
                std::string(what) + " needs " + std::to_string(expected) + " comma-separated values");
  return out;
}

struct Common {
  std::string rates = "0.3,0.05,0.65";
  std::string format = "json";
  std::string out;
};

struct Run {
  std::string command;
  std::vector<double> raw_rates;
  std::optional<Params> params;
  json settings = json::object();
  json outputs = json::array();
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  json manifest() const {
    json m;
    m["command"] = command;
    m["version"] = POLLING_VERSION;
    if (!raw_rates.empty()) m["rates_raw"] = raw_rates;
    if (params)
      m["rates_normalized"] = {params->lambda1(), params->lambda2(), params->mu()};
    m["settings"] = settings;
    m["outputs"] = outputs;
    m["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return m;
  }
};

Params load_params(Run& run, const std::string& rates, bool require_stable = true) {
  run.raw_rates = parse_list(rates, 3, "--rates");
  const auto& r = run.raw_rates;
  run.params = require_stable ? Params::stable(r[0], r[1], r[2])
                              : Params::unstable_allowed(r[0], r[1], r[2]);
  return *run.params;
}

// Writes text to --out when given, otherwise to stdout.
void emit(Run& run, const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open output file " + path);
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path);
  run.outputs.push_back(path);
}

json vec_json(const Eigen::Vector2d& v) { return {v.x(), v.y()}; }

json state_json(const State& s) { return {s.x, s.y, sheet_index(s.sheet)}; }

json regime_json(const RegimeReport& r) {
  const auto& s = r.special;
  const auto& t = r.twisted;
  return {{"sheet1", to_string(r.sheet1)},
          {"sheet2", to_string(r.sheet2)},
          {"subcase", to_string(r.subcase)},
          {"ray_tests", r.ray_tests},
          {"special_points",
           {{"alpha_T", s.alpha_T}, {"beta_T", s.beta_T}, {"alpha_E", s.alpha_E},
            {"beta_E", s.beta_E}, {"gamma_T", s.gamma_T}, {"delta_T", s.delta_T},
            {"gamma_E", s.gamma_E}, {"r_minus", s.r_minus}, {"r_plus", s.r_plus}}},
          {"twisted_rates", {{"lambda1", t.lt1}, {"lambda2", t.lt2}, {"mu", t.mt}}},
          {"spiral_coefficients", {{"a", t.a}, {"b", t.b}, {"c", t.c}}},
          {"drift_sheet1", {t.m1.first, t.m1.second}},
          {"drift_sheet2", {t.m2.first, t.m2.second}}};
}

std::string csv_from_flat(const json& j, const std::string& prefix = "") {
  std::string out;
  for (const auto& [k, v] : j.items()) {
    const std::string key = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      out += csv_from_flat(v, key);
    } else {
      out += key + "," + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    }
  }
  return out;
}

void add_common(CLI::App* sub, Common& c, bool with_format = true) {
  sub->add_option("--rates", c.rates, "lambda1,lambda2,mu (rescaled to sum to 1)");
  if (with_format)
    sub->add_option("--format", c.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  sub->add_option("--out", c.out, "output path (stdout when omitted)");
}

struct SimOptions {
  int level = 100;
  std::int64_t n = 100000;
  std::uint64_t seed = 1;
  int threads = 1;
  bool full_scale = false;
  double epsilon = 1e-9;
};

void add_sim(CLI::App* sub, SimOptions& s) {
  sub->add_option("--level", s.level, "target level l");
  sub->add_option("--n", s.n, "number of busy periods");
  sub->add_option("--seed", s.seed, "64-bit seed");
  sub->add_option("--threads", s.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--paper-scale", s.full_scale, "use n = 1000000");
  sub->add_option("--epsilon", s.epsilon, "overshoot return probability bound");
}

SimConfig sim_config(Run& run, const Params& p, const SimOptions& s) {
  SimConfig cfg;
  cfg.params = p;
  cfg.level = s.level;
  cfg.trajectories = s.full_scale ? 1000000 : s.n;
  cfg.seed = s.seed;
  cfg.worker_count = s.threads;
  cfg.overshoot_epsilon = s.epsilon;
  run.settings = {{"level", cfg.level},     {"n", cfg.trajectories},
                  {"seed", cfg.seed},       {"threads", cfg.worker_count},
                  {"epsilon", cfg.overshoot_epsilon}};
  return cfg;
}

json histogram_summary(const HitHistogram& h, const GreenEstimate& est) {
  double fraction_sum = 0.0;
  for (const auto& e : est.entries) fraction_sum += e.fraction;
  return {{"trajectories", h.trajectories},
          {"overshoot_margin", h.overshoot_margin},
          {"killed_first_step", h.killed_first_step},
          {"killed_before_level", h.killed_before_level},
          {"total_visits", h.total_visits},
          {"sheet1_visits", h.sheet_total(Sheet::Serve1)},
          {"sheet2_visits", h.sheet_total(Sheet::Serve2)},
          {"mode", state_json(h.argmax(Sheet::Serve1))},
          {"fraction_sum", fraction_sum},
          {"green_sum", est.green_sum},
          {"green_sum_stderr", est.green_sum_stderr},
          {"pi_level", est.pi_level},
          {"pi_level_stderr", est.pi_level_stderr}};
}

void write_summary(Run& run, const std::string& out, json summary) {
  summary["manifest"] = run.manifest();
  if (out.empty()) {
    std::cerr << summary.dump(2) << '\n';
    return;
  }
  const std::string path = out + ".json";
  run.outputs.push_back(path);
  summary["manifest"] = run.manifest();
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open output file " + path);
  os << summary.dump(2) << '\n';
}

int cmd_classify(Run& run, const Common& c) {
  const Params p = load_params(run, c.rates);
  json j = regime_json(classify(p));
  emit(run, c.out, c.format == "csv" ? "key,value\n" + csv_from_flat(j) : j.dump(2) + "\n");
  return 0;
}

int cmd_simulate(Run& run, const Common& c, const SimOptions& s) {
  const Params p = load_params(run, c.rates);
  const SimConfig cfg = sim_config(run, p, s);
  const HitHistogram h = run_busy_periods(cfg);
  const GreenEstimate est = estimate_pi(h, p, cfg.level);
  std::ostringstream csv;
  write_histogram_csv(csv, est);
  emit(run, c.out, csv.str());
  write_summary(run, c.out, histogram_summary(h, est));
  return 0;
}

int cmd_compare(Run& run, const Common& c, const SimOptions& s) {
  const Params p = load_params(run, c.rates);
  const SimConfig cfg = sim_config(run, p, s);
  const RegimeReport rep = classify(p);
  std::vector<double> theory;
  std::string theory_kind = "none";
  if (rep.sheet1 == Regime::Spiral && rep.sheet2 == Regime::Spiral) {
    const SpiralProfile sp = spiral_profile(p, cfg.level);
    theory.assign(cfg.level + 1, 0.0);
    for (int x = 1; x <= cfg.level; ++x) theory[x] = sp.fraction_sheet1(x);
    theory_kind = "spiral_profile";
  } else if (rep.sheet1 == Regime::Ray) {
    theory = gaussian_ray_profile(p, cfg.level);
    theory_kind = "gaussian_ray";
  } else {
    std::cerr << "warning: no closed-form profile for this regime; theory column omitted\n";
  }
  const HitHistogram h = run_busy_periods(cfg);
  const GreenEstimate est = estimate_pi(h, p, cfg.level);
  std::ostringstream csv;
  csv.precision(17);
  csv << (theory.empty() ? "x,simulated_fraction\n" : "x,simulated_fraction,theory_fraction,rel_error\n");
  double max_rel = 0.0;
  for (int x = 1; x <= cfg.level; ++x) {
    const double sim = est.at({x, cfg.level - x, Sheet::Serve1}).fraction;
    csv << x << ',' << sim;
    if (!theory.empty()) {
      const double rel = theory[x] > 0.0 ? std::abs(sim - theory[x]) / theory[x] : 0.0;
      max_rel = std::max(max_rel, rel);
      csv << ',' << theory[x] << ',' << rel;
    }
    csv << '\n';
  }
  emit(run, c.out, csv.str());
  json summary = histogram_summary(h, est);
  summary["theory"] = theory_kind;
  if (!theory.empty()) summary["max_relative_error"] = max_rel;
  write_summary(run, c.out, summary);
  return 0;
}

struct OracleOptions {
  int L = 40;
  int level = 10;
  std::string check = "all";
  int window = 30;
  int cap = 60;
};

int cmd_oracle(Run& run, const Common& c, const OracleOptions& o) {
  const Params p = load_params(run, c.rates);
  run.settings = {{"L", o.L}, {"level", o.level}, {"check", o.check}};
  const bool all = o.check == "all";
  json report = json::object();
  bool pass = true;
  const StationaryResult st = stationary_truncated(p, o.L);
  if (c.format == "csv") {
    std::ostringstream os;
    write_table_csv(os, st.table());
    emit(run, c.out, os.str());
    return 0;
  }
  if (all || o.check == "stationary") {
    double worst = 0.0;
    for (int k = 0; k <= o.L - 10; ++k) {
      const double exact = (1.0 - p.rho()) * std::pow(p.rho(), k);
      worst = std::max(worst, std::abs(st.level_marginal(k) - exact) / exact);
    }
    const bool ok = worst < 1e-6 && st.origin_balance_residual() < 1e-10;
    pass &= ok;
    report["stationary"] = {{"states", st.model.size()},
                            {"pi_origin", st.pi[0]},
                            {"mass", st.mass},
                            {"tail_bound", st.tail_bound},
                            {"level_marginal_max_rel_error", worst},
                            {"origin_balance_residual", st.origin_balance_residual()},
                            {"pass", ok}};
  }
  if (all || o.check == "green") {
    const TabooGreenResult g = taboo_green_exact(p, o.level, o.L);
    const bool ok = g.representation_max_rel_error < 1e-6 && std::abs(g.sum - 1.0) < 1e-6;
    pass &= ok;
    report["green"] = {{"level", g.level},
                       {"sum", g.sum},
                       {"representation_max_rel_error", g.representation_max_rel_error},
                       {"pass", ok}};
  }
  if (all || o.check == "first-passage") {
    const int level = std::min(15, o.L - 10);
    const double dev = first_passage_check(p, level, o.L);
    const bool ok = dev < 1e-10;
    pass &= ok;
    report["first_passage"] = {{"level", level}, {"max_deviation", dev}, {"pass", ok}};
  }
  if (all || o.check == "lyapunov") {
    try {
      const LyapunovReport ly = lyapunov_drift_check(p, o.window);
      pass &= ly.holds;
      report["lyapunov"] = {{"r", ly.r}, {"g", ly.g}, {"max_violation", ly.max_violation},
                            {"pass", ly.holds}};
    } catch (const Error& e) {
      if (!all) throw;
      report["lyapunov"] = {{"skipped", e.what()}};
    }
  }
  if (all || o.check == "chang-down") {
    try {
      const ChangDownResult cd = chang_down_quantities(p, o.cap);
      const bool ok = cd.max_identity_error < 1e-10 && cd.max_inequality_violation < 1e-10;
      pass &= ok;
      report["chang_down"] = {{"cap", cd.cap}, {"b", cd.b},
                              {"max_identity_error", cd.max_identity_error},
                              {"max_inequality_violation", cd.max_inequality_violation},
                              {"pass", ok}};
    } catch (const Error& e) {
      if (!all) throw;
      report["chang_down"] = {{"skipped", e.what()}};
    }
  }
  report["all_pass"] = pass;
  report["manifest"] = run.manifest();
  emit(run, c.out, report.dump(2) + "\n");
  return pass ? 0 : 1;
}

struct AsymOptions {
  int level = 600;
  bool spiral = false;
  std::string direction;
  double boundary_sum = 0.0;
};

int cmd_asymptotics(Run& run, const Common& c, const AsymOptions& a) {
  const Params p = load_params(run, c.rates);
  run.settings = {{"level", a.level}, {"spiral_profile", a.spiral}};
  if (a.spiral) {
    const SpiralProfile sp = spiral_profile(p, a.level);
    std::ostringstream csv;
    csv.precision(17);
    csv << "x,alpha,beta,fraction_sheet1,fraction_sheet2\n";
    for (int x = 1; x <= a.level; ++x)
      csv << x << ',' << sp.alpha(x) << ',' << sp.beta(x) << ',' << sp.fraction_sheet1(x) << ','
          << sp.fraction_sheet2(x) << '\n';
    emit(run, c.out, csv.str());
    write_summary(run, c.out,
                  {{"a", sp.a}, {"b", sp.b}, {"c", sp.c}, {"C_ell", sp.C_ell}, {"C1", sp.C1},
                   {"C2", sp.C2}});
    return 0;
  }
  json j;
  const RegimeReport rep = classify(p);
  j["regime"] = regime_json(rep);
  const LeastAction la = least_action_direction(p, Sheet::Serve1);
  j["least_action"] = {{"direction", vec_json(la.direction)},
                       {"lattice_point", vec_json(la.direction * a.level)},
                       {"rate", la.rate},
                       {"rejected_velocity", vec_json(la.rejected_velocity)}};
  if (rep.sheet1 == Regime::Ray) {
    const TransferConstants tc = transfer_constants(p);
    j["transfer"] = {{"K21", tc.K21}, {"K10", tc.K10}};
    if (rep.subcase == Subcase::Bridge) j["C_plus"] = bridge_constant_cplus(p);
    if (a.boundary_sum > 0.0) {
      const RayAsymptotics ra = ray_asymptotics(p, a.level, a.boundary_sum);
      j["ray"] = {{"B", ra.B}, {"target", state_json(ra.target)}, {"value", ra.value}};
    }
    if (!a.direction.empty()) {
      const auto d = parse_list(a.direction, 2, "--direction");
      const Eigen::Vector2d dir(d[0], d[1]);
      std::optional<double> bs;
      if (a.boundary_sum > 0.0) bs = a.boundary_sum;
      const AsymptoticEstimate est = sector_asymptotics(p, dir, bs);
      j["sector"] = {{"exponential_base", est.exponential_base},
                     {"polynomial_power", est.polynomial_power},
                     {"validity", est.validity},
                     {"off_ray_rate", off_ray_rate(p, dir)}};
      if (est.prefactor) j["sector"]["prefactor"] = *est.prefactor;
      if (est.coordinate_bases) j["sector"]["coordinate_bases"] = vec_json(*est.coordinate_bases);
    }
  } else if (rep.sheet2 == Regime::Spiral) {
    const GrowthFactors gf = spiral_growth_factors(p);
    j["growth_factors"] = {{"f1", gf.f1}, {"f2", gf.f2}};
  }
  j["manifest"] = run.manifest();
  emit(run, c.out, j.dump(2) + "\n");
  return 0;
}

int cmd_twist(Run& run, const Common& c, const std::string& direction, int sheet) {
  const Params p = load_params(run, c.rates);
  const auto d = parse_list(direction, 2, "--direction");
  run.settings = {{"direction", d}, {"sheet", sheet}};
  const Sheet sh = sheet == 2 ? Sheet::Serve2 : Sheet::Serve1;
  const FreeIncrements inc = sheet_increments(p, sh);
  const TwistSolution tw = twist_toward(inc, Eigen::Vector2d(d[0], d[1]));
  json probs = json::array();
  for (const auto& st : tw.twisted_probs) probs.push_back({{"dx", st.dx}, {"dy", st.dy}, {"prob", st.prob}});
  json j = {{"theta_star", vec_json(tw.theta_star)},
            {"exp_theta_star", {std::exp(tw.theta_star.x()), std::exp(tw.theta_star.y())}},
            {"lambda_star", tw.lambda_star},
            {"mean", vec_json(tw.mean)},
            {"on_face", tw.on_face},
            {"twisted_probs", probs}};
  if (tw.on_face) {
    // Only the component along the face is finite.
    const double along = d[1] == 0.0 ? tw.theta_star.x() : tw.theta_star.y();
    j["exp_theta_star_along_face"] = std::exp(along);
  }
  j["manifest"] = run.manifest();
  emit(run, c.out, c.format == "csv" ? "key,value\n" + csv_from_flat(j) : j.dump(2) + "\n");
  return 0;
}

ArrivalPGF parse_pgf(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("invalid PGF JSON: ") + e.what());
  }
  const std::string kind = j.value("kind", "");
  if (kind == "poisson") return ArrivalPGF::poisson(j.at("rate").get<double>());
  if (kind == "finite") return ArrivalPGF::finite(j.at("density").get<std::vector<double>>());
  throw Error(ErrorKind::InvalidInput, "PGF kind must be \"poisson\" or \"finite\"");
}

int cmd_batch(Run& run, const Common& c, const std::string& f, const std::string& g) {
  run.settings = {{"f", f}, {"g", g}};
  const BatchParams bp(parse_pgf(f), parse_pgf(g));
  const BatchRegimeReport r = batch_classify(bp);
  auto regime = [](const std::optional<Regime>& x) -> std::string {
    return x ? to_string(*x) : "critical";
  };
  json j = {{"alpha", r.alpha},
            {"lambda1", bp.lambda1()},
            {"lambda2", bp.lambda2()},
            {"sheet1", regime(r.sheet1)},
            {"sheet2", regime(r.sheet2)},
            {"sheet1_indicator", r.sheet1_indicator},
            {"sheet2_indicator", r.sheet2_indicator},
            {"sheet1_mean_increment", r.sheet1_mean_increment},
            {"sheet2_mean_increment", r.sheet2_mean_increment}};
  j["manifest"] = run.manifest();
  emit(run, c.out, c.format == "csv" ? "key,value\n" + csv_from_flat(j) : j.dump(2) + "\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polling-system rare-event toolkit: regimes, twisted simulation, oracles"};
  app.set_version_flag("--version", std::string(POLLING_VERSION));
  app.require_subcommand(1);

  Common common;
  SimOptions sim;
  OracleOptions orc;
  AsymOptions asym;
  std::string direction = "1,0", pgf_f, pgf_g;
  int sheet = 1;

  auto* classify_cmd = app.add_subcommand("classify", "ray/spiral regime and special points");
  add_common(classify_cmd, common);
  auto* simulate_cmd = app.add_subcommand("simulate", "busy-period histogram at a level");
  add_common(simulate_cmd, common, false);
  add_sim(simulate_cmd, sim);
  auto* compare_cmd = app.add_subcommand("compare", "simulated vs theoretical sheet-1 profile");
  add_common(compare_cmd, common, false);
  add_sim(compare_cmd, sim);
  auto* oracle_cmd = app.add_subcommand("oracle", "exact truncated-chain checks");
  add_common(oracle_cmd, common);
  oracle_cmd->add_option("--L", orc.L, "truncation level");
  oracle_cmd->add_option("--level", orc.level, "level for the Green's function check");
  oracle_cmd->add_option("--check", orc.check, "which check")
      ->check(CLI::IsMember({"all", "stationary", "green", "first-passage", "lyapunov", "chang-down"}));
  oracle_cmd->add_option("--window", orc.window, "Lyapunov window");
  oracle_cmd->add_option("--cap", orc.cap, "Chang-Down absorbing level");
  auto* asym_cmd = app.add_subcommand("asymptotics", "asymptotic estimates and profiles");
  add_common(asym_cmd, common, false);
  asym_cmd->add_option("--level", asym.level, "level l");
  asym_cmd->add_flag("--spiral-profile", asym.spiral, "CSV of alpha(x), beta(y)");
  asym_cmd->add_option("--direction", asym.direction, "d1,d2 for the sector estimate");
  asym_cmd->add_option("--boundary-sum", asym.boundary_sum, "boundary sum entering the prefactor");
  auto* twist_cmd = app.add_subcommand("twist", "exponential twist toward a direction");
  add_common(twist_cmd, common);
  twist_cmd->add_option("--direction", direction, "d1,d2");
  twist_cmd->add_option("--sheet", sheet, "1 or 2")->check(CLI::IsMember({1, 2}));
  auto* batch_cmd = app.add_subcommand("batch", "batch-arrival model twist and regime");
  add_common(batch_cmd, common, true);
  batch_cmd->add_option("--f", pgf_f, "queue-1 PGF JSON")->required();
  batch_cmd->add_option("--g", pgf_g, "queue-2 PGF JSON")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInvalid;
  }

  Run run;
  try {
    if (*classify_cmd) return run.command = "classify", cmd_classify(run, common);
    if (*simulate_cmd) return run.command = "simulate", cmd_simulate(run, common, sim);
    if (*compare_cmd) return run.command = "compare", cmd_compare(run, common, sim);
    if (*oracle_cmd) return run.command = "oracle", cmd_oracle(run, common, orc);
    if (*asym_cmd) return run.command = "asymptotics", cmd_asymptotics(run, common, asym);
    if (*twist_cmd) return run.command = "twist", cmd_twist(run, common, direction, sheet);
    if (*batch_cmd) return run.command = "batch", cmd_batch(run, common, pgf_f, pgf_g);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.kind()) {
      case ErrorKind::InvalidInput: return kExitInvalid;
      case ErrorKind::RegimePrecondition: return kExitRegime;
      case ErrorKind::Numerical: return kExitNumerical;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
