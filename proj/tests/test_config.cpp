#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>

#include "lpm/pipeline.hpp"

using namespace lpm;

namespace {

const std::filesystem::path kConfigs = std::filesystem::path(LPM_SOURCE_DIR) / "configs";

json oracle_json() {
  std::ifstream in(kConfigs / "oracle.json");
  return json::parse(in);
}

std::string error_key(const json& j) {
  try {
    (void)parse_config(j);
  } catch (const ConfigError& e) {
    return e.key();
  }
  return "<none>";
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lpm_test_config_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, AllBundledConfigsParse) {
  std::size_t n = 0;
  for (const auto& entry : std::filesystem::directory_iterator(kConfigs)) {
    if (entry.path().extension() != ".json") continue;
    SCOPED_TRACE(entry.path().string());
    EXPECT_NO_THROW((void)load_config(entry.path().string()));
    ++n;
  }
  EXPECT_GE(n, 8U);
}

TEST(Config, OracleValues) {
  const RunConfig cfg = parse_config(oracle_json());
  ASSERT_TRUE(cfg.solver && cfg.params && cfg.perturbation && cfg.verify && cfg.perturb_compare);
  EXPECT_EQ(*cfg.solver->delta, 0.02);
  EXPECT_EQ(cfg.solver->C, 2.0);
  EXPECT_EQ(cfg.solver->nodes, 41U);
  EXPECT_EQ(cfg.params->a, -1.0);
  EXPECT_EQ(cfg.perturbation->c, 1.0);
  EXPECT_EQ(cfg.perturb_compare->perturbation_bar.c, 1.05);
}

TEST(Config, UnknownKeysNameTheirPath) {
  json j = oracle_json();
  j["solver"]["nodez"] = 3;
  EXPECT_EQ(error_key(j), "solver.nodez");
  j = oracle_json();
  j["rates"]["mu"]["params"] = {{"lambda", 2}};
  EXPECT_EQ(error_key(j), "rates.mu.params");
  j = oracle_json();
  j["extra"] = true;
  EXPECT_EQ(error_key(j), "extra");
}

TEST(Config, InvalidValues) {
  json j = oracle_json();
  j["solver"]["delta"] = 0.5;
  EXPECT_EQ(error_key(j), "solver.delta");
  j = oracle_json();
  j["solver"]["nodes"] = 40;
  EXPECT_EQ(error_key(j), "solver.nodes");
  j = oracle_json();
  j["rates"]["mu"]["family"] = "cosine";
  EXPECT_EQ(error_key(j), "rates.mu.family");
  j = oracle_json();
  j["perturbation"]["q"] = 0.5;
  EXPECT_NE(error_key(j), "<none>");
  j = oracle_json();
  j["dichotomy"]["a"] = "minus one";
  EXPECT_EQ(error_key(j), "dichotomy.a");
}

TEST(Config, MissingDependenciesRejected) {
  json j = oracle_json();
  j.erase("perturbation");
  EXPECT_NE(error_key(j), "<none>");
  j = oracle_json();
  j.erase("solver");
  EXPECT_NE(error_key(j), "<none>");
}

TEST(Config, MatrixDimensionMismatch) {
  std::ifstream in(kConfigs / "matrix_system.json");
  json j = json::parse(in);
  j["system"]["n_E"] = 2;
  EXPECT_NE(error_key(j), "<none>");
}

TEST(Config, DefaultsAreMaterialized) {
  const json j = {{"rates", {{"mu", {{"family", "exponential"}}}}}};
  const RunConfig cfg = parse_config(j);
  ASSERT_TRUE(cfg.mu && cfg.nu);
  EXPECT_TRUE(cfg.resolved.contains("threads"));
  EXPECT_TRUE(cfg.resolved.contains("tol_scale"));
  EXPECT_TRUE(cfg.resolved["rates"].contains("nu"));
}

TEST(Config, ResolvedConfigRoundTrips) {
  const RunConfig a = parse_config(oracle_json());
  const RunConfig b = parse_config(a.resolved);
  EXPECT_EQ(a.resolved, b.resolved);
  const json manifest = {{"manifest_version", 1}, {"config", a.resolved}};
  const auto path = temp_dir("manifest");
  std::filesystem::create_directories(path);
  std::ofstream(path / "manifest.json") << manifest.dump();
  EXPECT_EQ(load_config((path / "manifest.json").string()).resolved, a.resolved);
}

TEST(Config, Overrides) {
  Overrides ov;
  ov.seed = 99;
  ov.threads = 3;
  ov.tol_scale = 2.0;
  const RunConfig cfg = parse_config(oracle_json(), ov);
  EXPECT_EQ(cfg.verify->seed, 99U);
  EXPECT_EQ(cfg.perturb_compare->seed, 99U);
  EXPECT_EQ(cfg.solver->threads, 3U);
  EXPECT_EQ(cfg.resolved["tol_scale"], 2.0);
  EXPECT_EQ(cfg.resolved["verify"]["seed"], 99);
}

TEST(Config, MissingFileAndBadJson) {
  EXPECT_THROW((void)load_config("/nonexistent/lpm.json"), ConfigError);
  const auto path = temp_dir("badjson");
  std::filesystem::create_directories(path);
  std::ofstream(path / "bad.json") << "{ \"rates\": ";
  EXPECT_THROW((void)load_config((path / "bad.json").string()), ConfigError);
}

TEST(Session, PlannedStagesFollowBlocks) {
  const RunConfig cfg = parse_config(oracle_json());
  Session s(cfg, temp_dir("plan"));
  EXPECT_EQ(s.planned_stages().size(), 6U);
  const RunConfig rates_only = parse_config(json{{"rates", {{"mu", {{"family", "polynomial"}}}}}});
  Session r(rates_only, temp_dir("plan_rates"));
  ASSERT_EQ(r.planned_stages().size(), 1U);
  EXPECT_EQ(r.planned_stages()[0], Command::check_rates);
  Session empty(parse_config(json::object()), temp_dir("plan_empty"));
  EXPECT_THROW((void)empty.execute(Command::all), ConfigError);
}

TEST(Session, RatesAndAdmissibilityArtifacts) {
  json j = oracle_json();
  j.erase("solver");
  j.erase("verify");
  j.erase("perturb_compare");
  const auto out = temp_dir("run");
  Session s(parse_config(j), out);
  const auto outcomes = s.execute(Command::all);
  ASSERT_EQ(outcomes.size(), 3U);
  for (const auto& o : outcomes) EXPECT_TRUE(o.pass) << o.summary;
  s.write_manifest(Command::all, outcomes);
  for (const char* f : {"report-rates.json", "rates.csv", "report-dichotomy.json", "report-admissibility.json",
                        "beta.csv", "manifest.json"}) {
    EXPECT_TRUE(std::filesystem::exists(out / f)) << f;
  }
  std::ifstream in(out / "manifest.json");
  const json m = json::parse(in);
  EXPECT_EQ(m["manifest_version"], 1);
  EXPECT_EQ(m["stages"].size(), 3U);
}

TEST(Commands, ParseRoundTrip) {
  for (Command c : {Command::check_rates, Command::check_dichotomy, Command::admissibility, Command::solve_manifold,
                    Command::verify, Command::perturb_compare, Command::all}) {
    EXPECT_EQ(parse_command(to_string(c)), c);
  }
  EXPECT_FALSE(parse_command("solve"));
}
