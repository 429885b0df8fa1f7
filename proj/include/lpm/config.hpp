/**
 * @file config.hpp
 * @brief JSON run configuration: strict schema, defaults materialized into a resolved copy.
 *
 * Every accessor records the value it returns into `resolved`, so the manifest written from it
 * reproduces the run on its own. Unknown keys are rejected with their full path.
 */
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lpm/admissibility.hpp"
#include "lpm/dichotomy.hpp"
#include "lpm/expr.hpp"
#include "lpm/manifold.hpp"
#include "lpm/perturbation.hpp"
#include "lpm/rates.hpp"

namespace lpm {

using json = nlohmann::ordered_json;

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& key, const std::string& msg)
      : std::runtime_error("config key '" + key + "': " + msg), key_(key) {}
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

namespace detail {

// Reads one JSON object, writing each value (given or defaulted) to `out`.
class ObjectReader {
 public:
  ObjectReader(const json& in, json& out, std::string path) : in_(in), out_(out), path_(std::move(path)) {
    if (!in_.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    if (!out_.is_object()) out_ = json::object();
  }

  [[nodiscard]] std::string key(const std::string& k) const { return path_.empty() ? k : path_ + "." + k; }
  [[nodiscard]] bool has(const std::string& k) const { return in_.contains(k) && !in_.at(k).is_null(); }

  const json& raw(const std::string& k) {
    seen_.insert(k);
    if (!in_.contains(k)) throw ConfigError(key(k), "required key is missing");
    return in_.at(k);
  }

  double number(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_number()) throw ConfigError(key(k), "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(key(k), "must be finite");
    out_[k] = d;
    return d;
  }
  double number(const std::string& k, double def) {
    seen_.insert(k);
    if (!has(k)) {
      out_[k] = def;
      return def;
    }
    return number(k);
  }
  std::optional<double> optional_number(const std::string& k) {
    seen_.insert(k);
    if (!has(k)) {
      out_[k] = nullptr;
      return std::nullopt;
    }
    return number(k);
  }
  // Number or the string "auto".
  std::optional<double> number_or_auto(const std::string& k) {
    seen_.insert(k);
    if (!has(k) || (in_.at(k).is_string() && in_.at(k).get<std::string>() == "auto")) {
      out_[k] = "auto";
      return std::nullopt;
    }
    return number(k);
  }
  std::size_t count(const std::string& k, std::size_t def, std::size_t min = 0) {
    seen_.insert(k);
    if (!has(k)) {
      out_[k] = def;
      return def;
    }
    const json& v = in_.at(k);
    if (!v.is_number_integer() || v.get<long long>() < static_cast<long long>(min)) {
      throw ConfigError(key(k), "expected an integer >= " + std::to_string(min));
    }
    out_[k] = v.get<std::size_t>();
    return v.get<std::size_t>();
  }
  std::uint64_t seed(const std::string& k, std::uint64_t def) {
    seen_.insert(k);
    if (!has(k)) {
      out_[k] = def;
      return def;
    }
    const json& v = in_.at(k);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(key(k), "expected a nonnegative integer");
    }
    out_[k] = v.get<std::uint64_t>();
    return v.get<std::uint64_t>();
  }
  bool boolean(const std::string& k, bool def) {
    seen_.insert(k);
    if (!has(k)) {
      out_[k] = def;
      return def;
    }
    if (!in_.at(k).is_boolean()) throw ConfigError(key(k), "expected true or false");
    out_[k] = in_.at(k).get<bool>();
    return in_.at(k).get<bool>();
  }
  std::string string(const std::string& k) {
    const json& v = raw(k);
    if (!v.is_string()) throw ConfigError(key(k), "expected a string");
    out_[k] = v;
    return v.get<std::string>();
  }
  std::string string(const std::string& k, const std::string& def) {
    seen_.insert(k);
    if (!has(k)) {
      out_[k] = def;
      return def;
    }
    return string(k);
  }
  ObjectReader child(const std::string& k) {
    seen_.insert(k);
    if (!in_.contains(k)) throw ConfigError(key(k), "required key is missing");
    return ObjectReader(in_.at(k), out_[k], key(k));
  }
  // Child object, defaulting to {} when absent.
  ObjectReader child_or_empty(const std::string& k) {
    seen_.insert(k);
    static const json empty = json::object();
    return ObjectReader(in_.contains(k) ? in_.at(k) : empty, out_[k], key(k));
  }
  void set(const std::string& k, json v) {
    seen_.insert(k);
    out_[k] = std::move(v);
  }
  void copy(const std::string& k) {
    seen_.insert(k);
    out_[k] = in_.at(k);
  }

  void finish() const {
    for (const auto& [k, v] : in_.items()) {
      if (seen_.count(k) == 0) throw ConfigError(key(k), "unknown key");
    }
  }

 private:
  const json& in_;
  json& out_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class F>
auto guarded(const std::string& key, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const ExprError& e) {
    throw ConfigError(key, e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, e.what());
  }
}

}  // namespace detail

struct GridConfig {
  double first = 0.0;
  double last = 0.0;
  std::size_t count = 1;
  [[nodiscard]] std::vector<double> points() const {
    return count == 1 ? std::vector<double>{first} : uniform_grid(first, last, count);
  }
};

struct RatesCheckConfig {
  GridConfig grid{0.0, 10.0, 11};
  DivergenceProbe probe{};
};

struct DichotomyCheckConfig {
  std::size_t pairs = 200;
  double t_max = 8.0 * 3.141592653589793;
  std::uint64_t seed = 1;
  DichotomyCheckOptions tolerances{};
  std::vector<int> sharpness_ks;  // empty: skip (also skipped for non-example systems)
};

struct AdmissibilityConfig {
  double q = 2.0;
  double c = 1.0;
  double C = std::numeric_limits<double>::quiet_NaN();
  GridConfig grid{0.0, 20.0, 41};
  double delta_cap = 1.0;
  double rel_tol = 1e-10;
};

struct VerifyConfig {
  std::size_t invariance_samples = 200;
  std::size_t decay_samples = 200;
  double tau_max = 3.0;
  std::uint64_t seed = 1;
  double invariance_tol = 1e-2;
  double decay_tol = 1e-2;
  double h = 1e-3;
};

struct PerturbCompareConfig {
  Perturbation perturbation_bar;
  double t_max = 10.0;
  double r_max = 0.1;
  std::size_t n_times = 11;
  std::size_t n_radii = 8;
  std::size_t directions = 64;
  std::uint64_t seed = 7;
};

struct RunConfig {
  json resolved = json::object();
  std::string output_dir = "out";
  unsigned threads = 1;
  std::optional<GrowthRate> mu;
  std::optional<GrowthRate> nu;
  std::optional<DichotomyParams> params;
  std::optional<LinearSystem> system;
  std::optional<Perturbation> perturbation;
  std::optional<RatesCheckConfig> rates_check;
  std::optional<DichotomyCheckConfig> dichotomy_check;
  std::optional<AdmissibilityConfig> admissibility;
  std::optional<SolverConfig> solver;
  std::optional<VerifyConfig> verify;
  std::optional<PerturbCompareConfig> perturb_compare;
};

struct Overrides {
  std::optional<unsigned> threads;
  std::optional<std::uint64_t> seed;
  double tol_scale = 1.0;
};

namespace detail {

inline GrowthRate read_rate(ObjectReader r) {
  if (r.has("expr")) {
    const std::string text = r.string("expr");
    const auto depth = static_cast<int>(r.count("depth", 1));
    r.finish();
    return guarded(r.key("expr"), [&] { return expression_rate(text, depth); });
  }
  const std::string family_name = r.string("family");
  const RateFamily family = guarded(r.key("family"), [&] { return parse_rate_family(family_name); });
  RateParams params;
  if (r.has("params")) {
    ObjectReader pr = r.child("params");
    for (const auto& [k, v] : r.raw("params").items()) {
      params[k] = pr.number(k);
    }
    pr.finish();
  } else {
    r.child_or_empty("params").finish();
  }
  const bool companion = r.boolean("nu_companion", false);
  r.finish();
  return guarded(r.key(params.empty() ? "family" : "params"), [&] { return builtin_rate(family, params, companion); });
}

inline GridConfig read_grid(ObjectReader r, GridConfig def) {
  GridConfig g;
  g.first = r.number("first", def.first);
  g.last = r.number("last", def.last);
  g.count = r.count("count", def.count, 1);
  if (g.count > 1 && !(g.last > g.first)) throw ConfigError(r.key("last"), "must exceed 'first'");
  r.finish();
  return g;
}

inline Perturbation read_perturbation(ObjectReader r) {
  const std::string kind = r.string("kind");
  const double q = r.number("q", 2.0);
  Perturbation p;
  if (kind == "cubic") {
    const double coef = r.number("coef", 1.0);
    const double c = r.number("c", std::abs(coef));
    p = cubic_perturbation(coef, c, q);
  } else if (kind == "zero") {
    const auto n = r.count("dimension", 2, 2);
    p = zero_perturbation(n, r.number("c", 1.0), q);
  } else if (kind == "expr") {
    const json& comps = r.raw("components");
    if (!comps.is_array()) throw ConfigError(r.key("components"), "expected an array of strings");
    std::vector<std::string> texts;
    for (const auto& cjs : comps) {
      if (!cjs.is_string()) throw ConfigError(r.key("components"), "expected an array of strings");
      texts.push_back(cjs.get<std::string>());
    }
    r.copy("components");
    const double c = r.number("c");
    p = guarded(r.key("components"), [&] { return expression_perturbation(texts, c, q); });
  } else {
    throw ConfigError(r.key("kind"), "unknown perturbation kind '" + kind + "' (cubic, zero, expr)");
  }
  r.finish();
  guarded(r.key("c"), [&] {
    p.validate();
    return 0;
  });
  return p;
}

inline LinearSystem read_system(ObjectReader r, const RunConfig& cfg) {
  const std::string form = r.string("form");
  const double h = r.number("h", 1e-3);
  if (!(h > 0.0)) throw ConfigError(r.key("h"), "step size must be positive");
  if (form == "closed_form") {
    ObjectReader ex = r.child("oscillating");
    if (!cfg.mu || !cfg.nu) throw ConfigError("rates", "closed_form oscillating system needs rates.mu and rates.nu");
    const DichotomyParams* p = cfg.params ? &*cfg.params : nullptr;
    const double a = p ? ex.number("a", p->a) : ex.number("a");
    const double b = p ? ex.number("b", p->b) : ex.number("b");
    const double eps = p ? ex.number("eps", p->eps) : ex.number("eps");
    ex.finish();
    r.finish();
    return guarded(r.key("oscillating"), [&] { return example_system(a, b, eps, *cfg.mu, *cfg.nu).with_step(h); });
  }
  if (form != "matrix") throw ConfigError(r.key("form"), "expected 'closed_form' or 'matrix'");
  const json& A = r.raw("A_expr");
  if (!A.is_array() || A.size() < 2) throw ConfigError(r.key("A_expr"), "expected an n x n array, n >= 2");
  const std::size_t n = A.size();
  auto exprs = std::make_shared<std::vector<Expr>>();
  for (std::size_t i = 0; i < n; ++i) {
    if (!A[i].is_array() || A[i].size() != n) throw ConfigError(r.key("A_expr"), "expected an n x n array");
    for (std::size_t k = 0; k < n; ++k) {
      const json& e = A[i][k];
      const std::string key = r.key("A_expr") + "[" + std::to_string(i) + "][" + std::to_string(k) + "]";
      std::string text;
      if (e.is_number()) {
        std::ostringstream os;
        os.precision(17);
        os << e.get<double>();
        text = os.str();
      } else if (e.is_string()) {
        text = e.get<std::string>();
      } else {
        throw ConfigError(key, "expected a number or expression string");
      }
      exprs->push_back(guarded(key, [&] { return Expr::compile(text, {"t"}); }));
    }
  }
  r.copy("A_expr");
  if (r.string("P", "coordinate") != "coordinate") throw ConfigError(r.key("P"), "only 'coordinate' is supported");
  const std::size_t ne = r.count("n_E", 1, 1);
  if (ne >= n) throw ConfigError(r.key("n_E"), "must be less than the dimension");
  r.finish();
  return LinearSystem::from_matrix(
      n, ne,
      [exprs, n](double t) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < n; ++k) m(i, k) = (*exprs)[i * n + k](t);
        return m;
      },
      h);
}

}  // namespace detail

/// Parses and validates @p root. Throws ConfigError naming the offending key.
[[nodiscard]] inline RunConfig parse_config(const json& root, const Overrides& ov = {}) {
  RunConfig cfg;
  detail::ObjectReader r(root, cfg.resolved, "");
  cfg.output_dir = r.string("output_dir", "out");
  const double tol_scale = r.number("tol_scale", 1.0) * ov.tol_scale;
  if (!(tol_scale > 0.0)) throw ConfigError("tol_scale", "must be positive");
  r.set("tol_scale", tol_scale);
  const auto threads = static_cast<unsigned>(ov.threads.value_or(r.count("threads", 1, 1)));
  r.set("threads", threads);

  if (r.has("rates")) {
    detail::ObjectReader rr = r.child("rates");
    cfg.mu = detail::read_rate(rr.child("mu"));
    cfg.nu = rr.has("nu") ? detail::read_rate(rr.child("nu")) : *cfg.mu;
    if (!rr.has("nu")) cfg.resolved["rates"]["nu"] = cfg.resolved["rates"]["mu"];
    rr.finish();
  }
  if (r.has("rates_check")) {
    detail::ObjectReader rc = r.child("rates_check");
    RatesCheckConfig c;
    c.grid = detail::read_grid(rc.child_or_empty("grid"), c.grid);
    if (c.grid.first != 0.0) throw ConfigError("rates_check.grid.first", "axiom grid must start at 0");
    c.probe.t_probe = rc.number("probe_t", c.probe.t_probe);
    c.probe.threshold = rc.number("probe_threshold", c.probe.threshold);
    rc.finish();
    cfg.rates_check = c;
  }
  if (r.has("dichotomy")) {
    detail::ObjectReader dr = r.child("dichotomy");
    if (!cfg.mu) throw ConfigError("rates", "dichotomy block requires rates");
    DichotomyParams p{dr.number("D", 1.0), dr.number("a"), dr.number("b"), dr.number("eps", 0.0), *cfg.mu, *cfg.nu};
    dr.finish();
    detail::guarded("dichotomy", [&] {
      p.validate();
      return 0;
    });
    cfg.params = p;
  }
  if (r.has("system")) {
    cfg.system = detail::read_system(r.child("system"), cfg);
  }
  if (r.has("perturbation")) {
    cfg.perturbation = detail::read_perturbation(r.child("perturbation"));
    if (cfg.system && cfg.perturbation->dimension != cfg.system->dimension()) {
      throw ConfigError("perturbation", "dimension differs from the system dimension");
    }
  }
  if (r.has("dichotomy_check")) {
    detail::ObjectReader dc = r.child("dichotomy_check");
    DichotomyCheckConfig c;
    c.pairs = dc.count("pairs", c.pairs, 1);
    c.t_max = dc.number("t_max", c.t_max);
    c.seed = ov.seed.value_or(dc.seed("seed", c.seed));
    if (ov.seed) cfg.resolved["dichotomy_check"]["seed"] = *ov.seed;
    c.tolerances.ratio_tol = dc.number("ratio_tol", c.tolerances.ratio_tol);
    c.tolerances.commutation_tol = dc.number("commutation_tol", c.tolerances.commutation_tol);
    if (dc.has("sharpness_ks")) {
      const json& ks = dc.raw("sharpness_ks");
      if (!ks.is_array()) throw ConfigError(dc.key("sharpness_ks"), "expected an array of positive integers");
      for (const auto& k : ks) {
        if (!k.is_number_integer() || k.get<int>() <= 0) {
          throw ConfigError(dc.key("sharpness_ks"), "expected an array of positive integers");
        }
        c.sharpness_ks.push_back(k.get<int>());
      }
      dc.copy("sharpness_ks");
    } else {
      dc.set("sharpness_ks", json::array());
    }
    dc.finish();
    cfg.dichotomy_check = c;
  }
  if (r.has("admissibility") || (cfg.params && cfg.perturbation)) {
    detail::ObjectReader ar = r.child_or_empty("admissibility");
    AdmissibilityConfig c;
    if (cfg.perturbation) {
      c.q = ar.number("q", cfg.perturbation->q);
      c.c = ar.number("c", cfg.perturbation->c);
    } else {
      c.q = ar.number("q");
      c.c = ar.number("c");
    }
    if (!(c.q > 1.0)) throw ConfigError(ar.key("q"), "must exceed 1");
    if (!(c.c >= 0.0)) throw ConfigError(ar.key("c"), "must be nonnegative");
    const auto C = ar.number_or_auto("C");
    c.C = C.value_or(std::numeric_limits<double>::quiet_NaN());
    c.grid = detail::read_grid(ar.child_or_empty("grid"), c.grid);
    c.delta_cap = ar.number("delta_cap", c.delta_cap);
    c.rel_tol = ar.number("rel_tol", c.rel_tol) * tol_scale;
    ar.finish();
    if (cfg.params && C && !(*C > cfg.params->D)) throw ConfigError(ar.key("C"), "must exceed D");
    cfg.admissibility = c;
  }
  if (r.has("solver")) {
    detail::ObjectReader sr = r.child("solver");
    if (!cfg.system || !cfg.params || !cfg.perturbation) {
      throw ConfigError("solver", "solver requires system, dichotomy and perturbation blocks");
    }
    SolverConfig s;
    s.delta = sr.number_or_auto("delta");
    const auto C = sr.number_or_auto("C");
    if (C) {
      s.C = *C;
    } else if (cfg.admissibility && !std::isnan(cfg.admissibility->C)) {
      s.C = cfg.admissibility->C;
    }
    const GridConfig sg = detail::read_grid(sr.child_or_empty("s_grid"), {0.0, 10.0, 21});
    s.s_start = sg.first;
    s.s_end = sg.count == 1 ? sg.first : sg.last;
    s.s_count = sg.count;
    if (s.s_start < 0.0) throw ConfigError("solver.s_grid.first", "must be nonnegative");
    s.nodes = sr.count("nodes", 41, 3);
    if (s.nodes % 2 == 0) throw ConfigError(sr.key("nodes"), "must be odd");
    s.horizon = sr.number_or_auto("T_cut");
    if (s.horizon && !(*s.horizon > 0.0)) throw ConfigError(sr.key("T_cut"), "must be positive");
    s.horizon_max = sr.number("horizon_max", s.horizon_max);
    s.tail_tol = sr.number("tail_tol", s.tail_tol) * tol_scale;
    s.outer_tol = sr.number("outer_tol", s.outer_tol) * tol_scale;
    s.max_outer_iters = static_cast<int>(sr.count("max_outer_iters", 20, 1));
    s.inner.h = sr.number("h", 1e-2);
    if (!(s.inner.h > 0.0)) throw ConfigError(sr.key("h"), "step size must be positive");
    s.inner.picard_tol = sr.number("picard_tol", s.inner.picard_tol) * tol_scale;
    s.inner.max_picard = static_cast<int>(sr.count("max_picard", 200, 1));
    s.inner.decay_slack = sr.number("decay_slack", s.inner.decay_slack);
    s.lipschitz_tol = sr.number("lipschitz_tol", s.lipschitz_tol);
    s.contraction_slack = sr.number("contraction_slack", s.contraction_slack);
    s.delta_cap = cfg.admissibility ? cfg.admissibility->delta_cap : 1.0;
    s.beta.quadrature.rel_tol = cfg.admissibility ? cfg.admissibility->rel_tol : 1e-10;
    sr.finish();
    if (s.delta) {
      const double C_eff = std::isnan(s.C) ? 2.0 * cfg.params->D : s.C;
      if (!(C_eff > cfg.params->D)) throw ConfigError("solver.C", "must exceed D");
      const double dmax = delta_max(cfg.perturbation->c, cfg.perturbation->q, C_eff, cfg.params->D, s.delta_cap).delta;
      if (!(*s.delta > 0.0) || *s.delta > dmax * (1.0 + 1e-12)) {
        std::ostringstream msg;
        msg.precision(10);
        msg << "delta must lie in (0, delta_max = " << dmax << "]";
        throw ConfigError("solver.delta", msg.str());
      }
    }
    cfg.solver = s;
  }
  if (r.has("verify")) {
    detail::ObjectReader vr = r.child("verify");
    if (!cfg.solver) throw ConfigError("verify", "verify requires a solver block");
    VerifyConfig v;
    v.invariance_samples = vr.count("invariance_samples", v.invariance_samples);
    v.decay_samples = vr.count("decay_samples", v.decay_samples);
    v.tau_max = vr.number("tau_max", v.tau_max);
    v.seed = ov.seed.value_or(vr.seed("seed", v.seed));
    if (ov.seed) cfg.resolved["verify"]["seed"] = *ov.seed;
    v.invariance_tol = vr.number("invariance_tol", v.invariance_tol);
    v.decay_tol = vr.number("decay_tol", v.decay_tol);
    v.h = vr.number("h", v.h);
    if (!(v.h > 0.0)) throw ConfigError(vr.key("h"), "step size must be positive");
    if (!(v.tau_max >= 0.0)) throw ConfigError(vr.key("tau_max"), "must be nonnegative");
    vr.finish();
    cfg.verify = v;
  }
  if (r.has("perturb_compare")) {
    detail::ObjectReader pr = r.child("perturb_compare");
    if (!cfg.solver) throw ConfigError("perturb_compare", "perturb_compare requires a solver block");
    PerturbCompareConfig pc{detail::read_perturbation(pr.child("perturbation_bar"))};
    if (pc.perturbation_bar.dimension != cfg.perturbation->dimension) {
      throw ConfigError("perturb_compare.perturbation_bar", "dimension differs from the perturbation");
    }
    if (pc.perturbation_bar.q != cfg.perturbation->q) {
      throw ConfigError("perturb_compare.perturbation_bar.q", "must equal perturbation.q");
    }
    pc.t_max = pr.number("t_max", pc.t_max);
    pc.r_max = pr.number("r_max", pc.r_max);
    pc.n_times = pr.count("n_times", pc.n_times, 1);
    pc.n_radii = pr.count("n_radii", pc.n_radii, 1);
    pc.directions = pr.count("directions", pc.directions);
    pc.seed = ov.seed.value_or(pr.seed("seed", pc.seed));
    if (ov.seed) cfg.resolved["perturb_compare"]["seed"] = *ov.seed;
    pr.finish();
    cfg.perturb_compare = std::move(pc);
  }
  r.finish();
  cfg.threads = threads;
  if (cfg.solver) cfg.solver->threads = threads;
  return cfg;
}

[[nodiscard]] inline RunConfig load_config(const std::string& path, const Overrides& ov = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open '" + path + "'");
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("invalid JSON: ") + e.what());
  }
  // A run manifest carries its resolved configuration under "config".
  if (root.is_object() && root.contains("manifest_version") && root.contains("config")) {
    json inner = root.at("config");
    return parse_config(inner, ov);
  }
  return parse_config(root, ov);
}

}  // namespace lpm
