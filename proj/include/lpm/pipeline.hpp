// Stage runners behind the command-line subcommands. Each stage writes its artifacts under the
// output directory and reports pass/fail; numerical failures surface as exceptions.
#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "lpm/config.hpp"
#include "lpm/verify.hpp"

namespace lpm {

enum class Command { check_rates, check_dichotomy, admissibility, solve_manifold, verify, perturb_compare, all };

[[nodiscard]] inline std::optional<Command> parse_command(const std::string& s) {
  if (s == "check-rates") return Command::check_rates;
  if (s == "check-dichotomy") return Command::check_dichotomy;
  if (s == "admissibility") return Command::admissibility;
  if (s == "solve-manifold") return Command::solve_manifold;
  if (s == "verify") return Command::verify;
  if (s == "perturb-compare") return Command::perturb_compare;
  if (s == "all") return Command::all;
  return std::nullopt;
}

[[nodiscard]] inline const char* to_string(Command c) {
  switch (c) {
    case Command::check_rates: return "check-rates";
    case Command::check_dichotomy: return "check-dichotomy";
    case Command::admissibility: return "admissibility";
    case Command::solve_manifold: return "solve-manifold";
    case Command::verify: return "verify";
    case Command::perturb_compare: return "perturb-compare";
    case Command::all: return "all";
  }
  return "?";
}

struct StageOutcome {
  Command command;
  bool pass = false;
  std::string summary;
};

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
    out_ << '\n';
  }
  void row(const std::vector<double>& values) {
    char buf[40];
    for (std::size_t i = 0; i < values.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g", values[i]);
      out_ << (i ? "," : "") << buf;
    }
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

class Session {
 public:
  Session(RunConfig cfg, std::filesystem::path out) : cfg_(std::move(cfg)), out_(std::move(out)) {
    std::filesystem::create_directories(out_);
  }

  [[nodiscard]] const RunConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const std::filesystem::path& out_dir() const noexcept { return out_; }
  [[nodiscard]] const json& derived() const noexcept { return derived_; }
  [[nodiscard]] const std::optional<ManifoldSolution>& solution() const noexcept { return solution_; }

  /// Stages that `all` runs, given which config blocks are present.
  [[nodiscard]] std::vector<Command> planned_stages() const {
    std::vector<Command> out;
    if (cfg_.mu) out.push_back(Command::check_rates);
    if (cfg_.system && cfg_.params) out.push_back(Command::check_dichotomy);
    if (cfg_.params && cfg_.admissibility) out.push_back(Command::admissibility);
    if (cfg_.solver) out.push_back(Command::solve_manifold);
    if (cfg_.verify) out.push_back(Command::verify);
    if (cfg_.perturb_compare) out.push_back(Command::perturb_compare);
    return out;
  }

  StageOutcome run(Command c) {
    switch (c) {
      case Command::check_rates: return check_rates();
      case Command::check_dichotomy: return check_dichotomy();
      case Command::admissibility: return admissibility();
      case Command::solve_manifold: return solve();
      case Command::verify: return verify();
      case Command::perturb_compare: return perturb_compare();
      case Command::all: break;
    }
    throw std::logic_error("'all' is not a single stage");
  }

  /// Runs @p c (or every planned stage for `all`, stopping at the first failure).
  std::vector<StageOutcome> execute(Command c) {
    std::vector<StageOutcome> done;
    const std::vector<Command> stages = c == Command::all ? planned_stages() : std::vector<Command>{c};
    if (stages.empty()) throw ConfigError("<root>", "no stage has its config blocks present");
    for (Command s : stages) {
      done.push_back(run(s));
      if (!done.back().pass) break;
    }
    return done;
  }

  void write_manifest(Command c, const std::vector<StageOutcome>& outcomes, const std::string& error = {}) const {
    json m = json::object();
    m["manifest_version"] = 1;
    m["command"] = to_string(c);
    m["config"] = cfg_.resolved;
    m["derived"] = derived_;
    json st = json::array();
    for (const auto& o : outcomes) st.push_back({{"stage", to_string(o.command)}, {"pass", o.pass}, {"summary", o.summary}});
    m["stages"] = st;
    if (!error.empty()) m["error"] = error;
    write_json("manifest.json", m);
  }

 private:
  void write_json(const std::string& name, const json& j) const {
    std::ofstream f(out_ / name);
    if (!f) throw std::runtime_error("cannot write " + (out_ / name).string());
    f << j.dump(2) << '\n';
  }

  static json axiom_json(const GrowthRate& r, const AxiomReport& a) {
    json j{{"label", r.label()},
           {"unit_at_zero", a.unit_at_zero},
           {"monotone", a.monotone},
           {"divergence", a.divergence},
           {"worst_violation", a.worst_violation},
           {"value_at_probe", a.value_at_probe},
           {"pass", a.pass()}};
    j["monotone_violation"] = a.monotone_violation ? json::array({a.monotone_violation->first, a.monotone_violation->second})
                                                   : json(nullptr);
    return j;
  }

  const DichotomyParams& params() const {
    if (!cfg_.params) throw ConfigError("dichotomy", "required key is missing");
    return *cfg_.params;
  }
  const LinearSystem& system() const {
    if (!cfg_.system) throw ConfigError("system", "required key is missing");
    return *cfg_.system;
  }
  const Perturbation& perturbation() const {
    if (!cfg_.perturbation) throw ConfigError("perturbation", "required key is missing");
    return *cfg_.perturbation;
  }
  const SolverConfig& solver() const {
    if (!cfg_.solver) throw ConfigError("solver", "required key is missing");
    return *cfg_.solver;
  }

  StageOutcome check_rates() {
    if (!cfg_.mu) throw ConfigError("rates", "required key is missing");
    const RatesCheckConfig rc = cfg_.rates_check.value_or(RatesCheckConfig{});
    const auto grid = rc.grid.points();
    const AxiomReport mu = check_growth_axioms(*cfg_.mu, grid, rc.probe);
    const AxiomReport nu = check_growth_axioms(*cfg_.nu, grid, rc.probe);
    const bool pass = mu.pass() && nu.pass();
    write_json("report-rates.json", {{"mu", axiom_json(*cfg_.mu, mu)},
                                     {"nu", axiom_json(*cfg_.nu, nu)},
                                     {"probe", {rc.probe.t_probe, rc.probe.threshold}},
                                     {"pass", pass}});
    CsvWriter csv(out_ / "rates.csv", {"t", "mu", "nu"});
    for (double t : grid) csv.row({t, (*cfg_.mu)(t), (*cfg_.nu)(t)});
    std::string summary = pass ? "growth-rate axioms hold" : "growth-rate axioms violated";
    for (const auto* a : {&mu, &nu}) {
      if (a->monotone_violation) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "; %s not monotone on (%.6g, %.6g)", a == &mu ? "mu" : "nu",
                      a->monotone_violation->first, a->monotone_violation->second);
        summary += buf;
      }
    }
    return {Command::check_rates, pass, summary};
  }

  StageOutcome check_dichotomy() {
    const DichotomyCheckConfig dc = cfg_.dichotomy_check.value_or(DichotomyCheckConfig{});
    const auto pairs = sample_time_pairs(dc.t_max, dc.pairs, dc.seed);
    const DichotomyCertificate cert = verify_dichotomy(system(), params(), pairs, dc.tolerances);
    json rep{{"max_stable_ratio", cert.max_stable_ratio},
             {"max_unstable_ratio", cert.max_unstable_ratio},
             {"max_commutation_residual", cert.max_commutation_residual},
             {"worst_stable_pair", {cert.worst_stable_pair.first, cert.worst_stable_pair.second}},
             {"worst_unstable_pair", {cert.worst_unstable_pair.first, cert.worst_unstable_pair.second}},
             {"pairs", cert.pair_count},
             {"t_range", {cert.t_min, cert.t_max}},
             {"singular", cert.singular},
             {"ratio_tol", cert.ratio_tol},
             {"commutation_tol", cert.commutation_tol}};
    bool pass = cert.pass;
    if (!dc.sharpness_ks.empty() && system().oscillating_example() != nullptr) {
      const auto rows = sharpness_probe(system(), dc.sharpness_ks);
      const OscillatingExample& ex = *system().oscillating_example();
      CsvWriter csv(out_ / "sharpness.csv", {"k", "t", "s", "U", "bound", "residual", "ratio_half_eps"});
      double worst = 0.0;
      bool half_fails = true;
      for (const auto& r : rows) {
        // Same bound with eps halved: the ratio exceeds 1 when the nonuniform factor is needed.
        const double half = r.U / std::exp(ex.a * (ex.mu.log_value(r.t) - ex.mu.log_value(r.s)) +
                                           DichotomyParams::scaled(0.5 * ex.eps, ex.nu.log_value(r.s)));
        csv.row({static_cast<double>(r.k), r.t, r.s, r.U, r.bound, r.residual, half});
        worst = std::max(worst, r.residual);
        half_fails = half_fails && half > 1.0;
      }
      rep["sharpness"] = {{"ks", dc.sharpness_ks}, {"max_residual", worst}, {"half_eps_bound_fails", half_fails}};
      pass = pass && worst <= 1e-9;
    }
    rep["pass"] = pass;
    write_json("report-dichotomy.json", rep);
    char buf[200];
    std::snprintf(buf, sizeof buf, "stable ratio %.6g, unstable ratio %.6g, commutation %.3g", cert.max_stable_ratio,
                  cert.max_unstable_ratio, cert.max_commutation_residual);
    return {Command::check_dichotomy, pass, buf};
  }

  AdmissibilityReport admissibility_report() const {
    const AdmissibilityConfig ac = *cfg_.admissibility;
    AdmissibilityOptions opt;
    opt.C = ac.C;
    opt.monotonicity_grid = ac.grid.points();
    opt.delta_cap = ac.delta_cap;
    opt.beta.quadrature.rel_tol = ac.rel_tol;
    return assess_admissibility(params(), ac.q, ac.c, opt);
  }

  StageOutcome admissibility() {
    if (!cfg_.admissibility) throw ConfigError("admissibility", "required key is missing");
    const AdmissibilityConfig ac = *cfg_.admissibility;
    const AdmissibilityReport rep = admissibility_report();
    BetaOptions bopt;
    bopt.quadrature.rel_tol = ac.rel_tol;
    const BetaFunction beta(params(), ac.q, bopt);
    const auto grid = ac.grid.points();
    double fid = 0.0;
    const std::size_t stride = std::max<std::size_t>(1, grid.size() / 10);
    for (std::size_t i = 0; i < grid.size(); i += stride) {
      fid = std::max(fid, fundamental_identity_residual(params(), ac.q, grid[i], bopt.quadrature));
    }
    json limit = json::array();
    for (const auto& [t, lg] : rep.limit.samples) limit.push_back({t, lg});
    json j{{"limit_condition", {{"pass", rep.limit.pass}, {"inconclusive", rep.limit.inconclusive}, {"log_g", limit}}},
           {"integral", {{"I0", rep.integral.value},
                         {"tail_bound", rep.integral.tail_bound},
                         {"t_cut", rep.integral.t_cut},
                         {"converged", rep.integral.converged},
                         {"tail_certified", rep.integral.tail_certified}}},
           {"integral_convergent", rep.integral_convergent},
           {"beta_monotone", rep.monotone.beta_nonincreasing},
           {"mu_a_over_beta_monotone", rep.monotone.mu_a_over_beta_nonincreasing},
           {"worst_beta_increase", rep.monotone.worst_beta_increase},
           {"worst_ratio_increase", rep.monotone.worst_ratio_increase},
           {"delta_max", rep.delta.delta},
           {"delta_binding", rep.delta.binding},
           {"delta_limits", std::vector<double>(std::begin(rep.delta.limits), std::end(rep.delta.limits))},
           {"C", rep.C},
           {"q", rep.q},
           {"c", rep.c},
           {"closed_form", rep.closed_form ? json(*rep.closed_form) : json(nullptr)},
           {"beta_at_zero", rep.beta_at_zero},
           {"fundamental_identity_max_residual", fid},
           {"notes", rep.notes},
           {"pass", rep.pass() && fid <= 1e-6}};
    write_json("report-admissibility.json", j);
    CsvWriter csv(out_ / "beta.csv", {"t", "beta", "beta_tilde", "mu_a_over_beta"});
    for (const auto& r : beta_table(beta, grid)) csv.row({r.t, r.beta, r.beta_tilde, r.mu_a_over_beta});
    derived_["delta_max"] = rep.delta.delta;
    derived_["C"] = rep.C;
    derived_["beta_at_zero"] = rep.beta_at_zero;
    char buf[200];
    std::snprintf(buf, sizeof buf, "beta(0) = %.10g, delta_max = %.10g (binding %d)%s", rep.beta_at_zero,
                  rep.delta.delta, rep.delta.binding, rep.pass() ? "" : "; hypotheses not certified");
    return {Command::admissibility, rep.pass() && fid <= 1e-6, buf};
  }

  ManifoldSolution& ensure_solution() {
    if (!solution_) {
      solution_ = solve_manifold(system(), params(), perturbation(), solver());
    }
    return *solution_;
  }

  StageOutcome solve() {
    const ClassCheck cls = check_perturbation_class(perturbation(), system().n_e(), 1.0, 10.0, 2000, 11);
    ManifoldSolution& sol = ensure_solution();
    const ManifoldGraph& g = sol.graph;
    CsvWriter graph(out_ / "graph.csv", [&] {
      std::vector<std::string> h{"s"};
      for (std::size_t i = 1; i <= g.n_e(); ++i) h.push_back("xi" + std::to_string(i));
      for (std::size_t i = 1; i <= g.n_f(); ++i) h.push_back("phi" + std::to_string(i));
      return h;
    }());
    for (std::size_t j = 0; j < g.slices(); ++j) {
      for (std::size_t idx = 0; idx < g.nodes_per_slice(); ++idx) {
        if (!g.in_ball(j, idx)) continue;
        std::vector<double> row{g.s_grid()[j]};
        const Vector xi = g.node(j, idx);
        row.insert(row.end(), xi.begin(), xi.end());
        const auto v = g.value(j, idx);
        row.insert(row.end(), v.begin(), v.end());
        graph.row(row);
      }
    }
    CsvWriter hist(out_ / "history.csv", {"iter", "distance", "ratio", "lipschitz"});
    for (const auto& r : sol.history) hist.row({static_cast<double>(r.iteration), r.distance, r.ratio, r.lipschitz});
    const bool bounded = sol.max_contraction_ratio <= sol.contraction_bound * solver().contraction_slack;
    const bool pass = sol.converged() && cls.pass && bounded;
    json spacing = json::array();
    for (std::size_t j = 0; j < g.slices(); ++j) spacing.push_back(g.spacing(j));
    json rep{{"status", to_string(sol.status)},
             {"iterations", sol.history.size()},
             {"final_distance", sol.history.empty() ? 0.0 : sol.history.back().distance},
             {"delta", sol.delta},
             {"delta_max", sol.delta_max},
             {"C", sol.C},
             {"contraction_bound", sol.contraction_bound},
             {"max_contraction_ratio", sol.max_contraction_ratio},
             {"contraction_bounded", bounded},
             {"max_decay_ratio", sol.max_decay_ratio},
             {"lipschitz", sol.history.empty() ? 0.0 : sol.history.back().lipschitz},
             {"T_cut", sol.horizons},
             {"tail_bounds", sol.tail_bounds},
             {"node_spacing", spacing},
             {"phi_at_delta", [&] {
                Vector xi(g.n_e(), 0.0);
                xi[0] = sol.delta;
                return json{{"s", g.s_grid().front()}, {"xi", xi}, {"phi", g.eval(g.s_grid().front(), xi)}};
              }()},
             {"perturbation_class", {{"max_at_zero", cls.max_at_zero}, {"max_class_ratio", cls.max_class_ratio},
                                     {"samples", cls.samples}, {"pass", cls.pass}}},
             {"pass", pass}};
    write_json("report-manifold.json", rep);
    derived_["delta"] = sol.delta;
    derived_["delta_max"] = sol.delta_max;
    derived_["C"] = sol.C;
    derived_["T_cut"] = sol.horizons;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%s after %zu iterations, delta = %.6g, max ratio %.3g (bound %.3g)",
                  to_string(sol.status), sol.history.size(), sol.delta, sol.max_contraction_ratio,
                  sol.contraction_bound);
    std::string summary = buf;
    if (!cls.pass) summary += "; perturbation outside its declared class";
    return {Command::solve_manifold, pass, summary};
  }

  StageOutcome verify() {
    if (!cfg_.verify) throw ConfigError("verify", "required key is missing");
    const VerifyConfig vc = *cfg_.verify;
    const ManifoldSolution& sol = ensure_solution();
    const ManifoldGraph& g = sol.graph;
    const unsigned th = cfg_.threads;
    VerificationReport vr;
    vr.invariance = check_invariance(g, system(), perturbation(),
                                     random_invariance_samples(g, vc.invariance_samples, vc.tau_max, vc.seed),
                                     vc.invariance_tol, vc.h, th);
    vr.decay = check_decay(g, system(), params(), perturbation(),
                           random_decay_samples(g, vc.decay_samples, vc.tau_max, vc.seed + 1), vc.decay_tol, vc.h, th);
    vr.lipschitz = g.lipschitz_ratio();
    vr.lipschitz_tol = solver().lipschitz_tol;
    CsvWriter inv(out_ / "invariance.csv", {"s", "tau", "xi_norm", "x_norm", "residual", "in_ball"});
    for (const auto& r : vr.invariance.rows) inv.row({r.s, r.tau, r.xi_norm, r.x_norm, r.residual, r.in_ball ? 1.0 : 0.0});
    CsvWriter dec(out_ / "decay.csv", {"s", "t", "observed", "bound", "ratio"});
    for (const auto& r : vr.decay.rows) dec.row({r.s, r.t, r.observed, r.bound, r.ratio});
    write_json("report-verify.json",
               {{"invariance", {{"max_residual", vr.invariance.max_residual}, {"tol", vr.invariance.tol},
                                {"all_in_ball", vr.invariance.all_in_ball}, {"samples", vr.invariance.rows.size()},
                                {"pass", vr.invariance.pass()}}},
                {"decay", {{"max_ratio", vr.decay.max_ratio}, {"tol", vr.decay.tol},
                           {"samples", vr.decay.rows.size()}, {"pass", vr.decay.pass()}}},
                {"lipschitz", {{"max_ratio", vr.lipschitz}, {"tol", vr.lipschitz_tol}, {"pass", vr.lipschitz_pass()}}},
                {"seed", vc.seed},
                {"pass", vr.pass()}});
    char buf[200];
    std::snprintf(buf, sizeof buf, "invariance residual %.3g, decay ratio %.3g, lipschitz %.4g",
                  vr.invariance.max_residual, vr.decay.max_ratio, vr.lipschitz);
    return {Command::verify, vr.pass(), buf};
  }

  StageOutcome perturb_compare() {
    if (!cfg_.perturb_compare) throw ConfigError("perturb_compare", "required key is missing");
    const PerturbCompareConfig& pc = *cfg_.perturb_compare;
    const auto samples = default_perturbation_samples(perturbation().dimension, system().n_e(), pc.t_max, pc.r_max,
                                                      pc.n_times, pc.n_radii, pc.directions, pc.seed);
    const auto rep = check_perturbation_bound(system(), params(), perturbation(), pc.perturbation_bar, solver(), samples);
    const auto dist = perturbation_distance(perturbation(), pc.perturbation_bar, samples);
    write_json("report-perturb.json", {{"graph_distance", rep.graph_distance},
                                       {"perturbation_distance", rep.perturbation_distance},
                                       {"K", rep.K},
                                       {"K_times_distance", rep.K * rep.perturbation_distance},
                                       {"ratio", rep.ratio},
                                       {"delta", rep.delta},
                                       {"c", rep.c},
                                       {"samples", dist.samples},
                                       {"time_spacing", dist.time_spacing},
                                       {"radius_spacing", dist.radius_spacing},
                                       {"directions", dist.directions},
                                       {"iterations", {rep.solution.history.size(), rep.solution_bar.history.size()}},
                                       {"pass", rep.bound_holds}});
    char buf[200];
    std::snprintf(buf, sizeof buf, "||phi - phi_bar||' = %.6g <= K ||f - f_bar||' = %.6g", rep.graph_distance,
                  rep.K * rep.perturbation_distance);
    return {Command::perturb_compare, rep.bound_holds, buf};
  }

  RunConfig cfg_;
  std::filesystem::path out_;
  json derived_ = json::object();
  std::optional<ManifoldSolution> solution_;
};

}  // namespace lpm
