// Copyright 2026 The BiasMeter Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "biasmeter/io.hpp"

namespace biasmeter {
namespace {

namespace fs = std::filesystem;

LoadedLists parse(const std::string& text) {
  std::istringstream in(text);
  return parse_result_lists(in, "test");
}

std::string record(const std::string& user, const std::string& query, int rank, const std::string& item,
                   const std::string& annotations = R"({"stance":{"pro":1.0}})") {
  return R"({"user_id":")" + user + R"(","query_id":")" + query + R"(","rank":)" + std::to_string(rank) +
         R"(,"item_id":")" + item + R"(","annotations":)" + annotations + "}\n";
}

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("biasmeter-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST(ResultLists, EmptyFileWarns) {
  const auto loaded = parse("");
  EXPECT_TRUE(loaded.lists.empty());
  ASSERT_EQ(loaded.warnings.size(), 1u);
}

TEST(ResultLists, ThreeLinesMakeOneList) {
  const auto loaded = parse(record("u", "q", 2, "b") + record("u", "q", 1, "a") + record("u", "q", 3, "c"));
  ASSERT_EQ(loaded.lists.size(), 1u);
  const auto& l = loaded.lists.at({"u", "q"});
  EXPECT_EQ(l.depth(), 3u);
  EXPECT_EQ(l.item_ids(), (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_TRUE(loaded.warnings.empty());
}

TEST(ResultLists, RejectsMalformedRecords) {
  EXPECT_THROW(parse(record("u", "q", 1, "a") + record("u", "q", 1, "b")), FormatError);
  EXPECT_THROW(parse(record("u", "q", 1, "a") + record("u", "q", 3, "b")), FormatError);
  EXPECT_THROW(parse(record("u", "q", 1, "a") + record("u", "q", 2, "a")), FormatError);
  EXPECT_THROW(parse(record("u", "q", 1, "a", R"({"stance":{"pro":0.5,"con":0.4}})")), FormatError);
  EXPECT_THROW(parse(record("u", "q", 0, "a")), FormatError);
  EXPECT_THROW(parse("{not json}\n"), FormatError);
  EXPECT_THROW(parse(R"({"user_id":"u","query_id":"q","rank":1})" "\n"), FormatError);
}

TEST(ResultLists, ErrorsCarryLineNumbers) {
  try {
    parse(record("u", "q", 1, "a") + "\n" + record("u", "q", 1, "b"));
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("test:3"), std::string::npos) << e.what();
  }
}

TEST(ResultLists, WeightToleranceIsOneInAMillion) {
  const auto ok = parse(record("u", "q", 1, "a", R"({"stance":{"pro":0.5,"con":0.5000005}})"));
  const auto& ann = ok.lists.at({"u", "q"}).items()[0].annotations.at("stance");
  EXPECT_NEAR(ann.at("pro") + ann.at("con"), 1.0, 1e-12);
  EXPECT_THROW(parse(record("u", "q", 1, "a", R"({"stance":{"pro":0.5,"con":0.500002}})")), FormatError);
}

TEST(ResultLists, RoundTripOfSimulatorOutput) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto cfg = binary_scenario(10, 3, seed);
    cfg.set_content_bias(0.1);
    const auto in = simulate(cfg);
    const std::string text = serialize_result_lists(in.lists);
    const auto back = parse(text);
    EXPECT_EQ(back.lists, in.lists);
    EXPECT_EQ(serialize_result_lists(back.lists), text);
  }
}

TEST(ResultLists, RoundTripOfFractionalAnnotations) {
  ResultLists lists;
  lists.emplace(ListKey{"u", "q"},
                RankedList("q", "u", {{"a", {{"stance", {{"pro", 0.1}, {"con", 0.7}, {"unannotated", 0.2}}}}},
                                      {"b", {{"stance", {{"pro", 1.0 / 3.0}, {"con", 2.0 / 3.0}}}}}}));
  EXPECT_EQ(parse(serialize_result_lists(lists)).lists, lists);
}

TEST(Profiles, RoundTripAndErrors) {
  const auto in = simulate(binary_scenario(6, 1, 3));
  std::ostringstream out;
  write_profiles(out, in.profiles);
  std::istringstream back(out.str());
  const auto parsed = parse_profiles(back);
  ASSERT_EQ(parsed.size(), in.profiles.size());
  for (std::size_t i = 0; i < parsed.size(); ++i) {
    EXPECT_EQ(parsed[i].user_id, in.profiles[i].user_id);
    EXPECT_EQ(parsed[i].protected_attrs, in.profiles[i].protected_attrs);
    EXPECT_EQ(parsed[i].other, in.profiles[i].other);
  }
  std::istringstream dup(R"({"user_id":"a"})" "\n" R"({"user_id":"a"})" "\n");
  EXPECT_THROW(parse_profiles(dup), FormatError);
  std::istringstream overlap(R"({"user_id":"a","protected":{"x":"1"},"other":{"x":2}})" "\n");
  EXPECT_THROW(parse_profiles(overlap), FormatError);
}

TEST(Schema, ParsesAndValidates) {
  const auto s = parse_schema(json::parse(R"({"attributes":[{"name":"stance","values":["pro","con"]},
      {"name":"gender","kind":"protected","values":["f","m"]}]})"));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].kind, AttributeKind::differentiating_content);
  EXPECT_EQ(s[1].kind, AttributeKind::protected_user);
  EXPECT_THROW(parse_schema(json::parse(R"({"attributes":[{"name":"s","values":["only"]}]})")), SchemaError);
  EXPECT_THROW(parse_schema(json::parse(R"([1,2])")), SchemaError);
}

TEST(GroundTruthFile, FallbackAndPerQuery) {
  const auto gts = parse_ground_truth(json::parse(
      R"({"attribute":"stance","probabilities":{"pro":0.5,"con":0.5},"per_query":{"q1":{"pro":0.8,"con":0.2}}})"));
  ASSERT_TRUE(gts.fallback);
  EXPECT_EQ(gts.per_query.at("q1").probabilities.at("pro"), 0.8);
  const auto again = parse_ground_truth(to_json(gts));
  EXPECT_EQ(again.per_query.at("q1").probabilities, gts.per_query.at("q1").probabilities);
  EXPECT_THROW(parse_ground_truth(json::parse(R"({"attribute":"stance"})")), SchemaError);
}

TEST(Configs, MeasureConfigRoundTripAndErrors) {
  MeasureConfig c;
  c.epsilon = 0.07;
  c.k = 5;
  c.dr_kind = DistanceKind::rbo;
  c.weighting = Weighting::rank_discounted;
  c.aggregator = Aggregator::median;
  c.query_aggregation = QueryAggregation::max;
  c.user_metric = {{"age"}, {{"age", 50.0}}};
  const auto back = measure_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_THROW(measure_config_from_json(json::parse(R"({"k":0})")), ParameterError);
  EXPECT_THROW(measure_config_from_json(json::parse(R"({"distance":"cosine"})")), ConfigError);
  EXPECT_THROW(measure_config_from_json(json::parse(R"({"colour":1})")), ConfigError);
  const auto defaults = measure_config_from_json(json::object());
  EXPECT_FALSE(defaults.epsilon);
  EXPECT_EQ(defaults.k, 10u);
}

TEST(Configs, ScenarioRoundTrip) {
  auto cfg = binary_scenario(20, 4, 77);
  cfg.content_shift_protected = 0.1;
  cfg.content_shift_unprotected = 0.05;
  cfg.ranking_divergence = 0.25;
  cfg.stream_key = StreamKey::profile;
  const auto back = scenario_from_json(to_json(cfg));
  EXPECT_EQ(to_json(back), to_json(cfg));
  EXPECT_EQ(serialize_result_lists(simulate(back).lists), serialize_result_lists(simulate(cfg).lists));
}

json scenario_manifest(double delta, std::uint64_t seed) {
  auto cfg = binary_scenario(200, 3, seed);
  cfg.set_content_bias(delta);
  return json{{"scenario", to_json(cfg)}};
}

TEST(Manifest, ExactlyOneInputSource) {
  EXPECT_THROW(manifest_from_json(json::object()), ConfigError);
  auto both = scenario_manifest(0.0, 1);
  both["result_lists"] = "lists.jsonl";
  EXPECT_THROW(manifest_from_json(both), ConfigError);
  EXPECT_THROW(manifest_from_json(json{{"result_lists", "x"}}), ConfigError);
  auto unknown = scenario_manifest(0.0, 1);
  unknown["measures"] = {"magic"};
  EXPECT_THROW(manifest_from_json(unknown), ConfigError);
}

TEST(RunAudit, SkipsGroundTruthMeasuresWithoutGroundTruth) {
  auto in = simulate(binary_scenario(20, 2, 4));
  in.query_ground_truth.clear();
  const auto report = run_audit(in, {}, {});
  for (const char* name : {"content_bias_protected", "content_bias_unprotected", "echo_chamber_test"}) {
    ASSERT_NE(report.find(name), nullptr) << name;
    EXPECT_EQ(report.find(name)->status, "skipped") << name;
  }
  for (const char* name : {"individual_user_bias", "group_user_bias", "probabilistic_group_bias", "combined_bias"}) {
    ASSERT_NE(report.find(name), nullptr) << name;
    EXPECT_EQ(report.find(name)->status, "ok") << name;
  }
  EXPECT_THROW(run_audit(in, {"content_bias", "echo_chamber_test"}, {}), ConfigError);
}

TEST(RunAudit, DeterministicReports) {
  auto j = scenario_manifest(0.0, 12);
  j["significance"] = {{"permutations", 100}, {"bootstrap_resamples", 100}, {"seed", 9}};
  const auto m = manifest_from_json(j);
  EXPECT_EQ(to_json(run_audit(m)).dump(), to_json(run_audit(m)).dump());
}

TEST(RunAudit, InjectedContentBiasShowsInCombinedBias) {
  const auto report = run_audit(manifest_from_json(scenario_manifest(0.15, 13)));
  const auto* e = report.find("combined_bias");
  ASSERT_NE(e, nullptr);
  EXPECT_NEAR(e->verdict->magnitude, 0.30, 0.02);
  EXPECT_TRUE(e->verdict->biased);
}

TEST(RunAudit, WritesReportFilesFromLoadedInputs) {
  const auto dir = scratch_dir("files");
  const auto cfg = binary_scenario(10, 2, 21);
  const auto in = simulate(cfg);
  write_simulation(dir, cfg, in);
  json manifest{{"profiles", "profiles.jsonl"},
                {"result_lists", "lists.jsonl"},
                {"schema", "schema.json"},
                {"ground_truth", "ground_truth.json"},
                {"protected", {{"attribute", "group"}, {"value", "P"}}},
                {"differentiating_attribute", "stance"},
                {"config", {{"relevant_attributes", {"age", "region", "interest"}}, {"numeric_ranges", {{"age", 62}}}}},
                {"output_dir", "out"}};
  std::ofstream(dir / "manifest.json") << manifest.dump(2);
  fs::create_directories(dir / "out");
  const auto m = load_manifest(dir / "manifest.json");
  const auto loaded = resolve_input(m);
  EXPECT_EQ(loaded.lists, in.lists);
  const auto report = run_audit(m);
  const auto direct = run_audit(in, {}, {});
  EXPECT_EQ(to_json(report).dump(), to_json(direct).dump());
  for (const char* f : {"report.json", "summary.txt", "per_query.tsv"}) EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
  const auto written = json::parse(std::ifstream(dir / "out" / "report.json"));
  EXPECT_EQ(written.at("report_version"), kReportVersion);
  fs::remove_all(dir);
}

TEST(CompareAudit, SelfComparisonIsZero) {
  const auto in = simulate(binary_scenario(20, 2, 5));
  for (const auto& e : compare_audit(in, in).measures) EXPECT_EQ(e.verdict->magnitude, 0.0) << e.name;
}

TEST(CompareAudit, ContentShiftSeenAtClassLevel) {
  auto a_cfg = binary_scenario(2000, 1, 6);
  auto b_cfg = a_cfg;
  b_cfg.set_content_bias(0.2);
  const auto report = compare_audit(simulate(a_cfg), simulate(b_cfg));
  EXPECT_NEAR(report.find("comparative_bias.distribution[P]")->verdict->magnitude, 0.2, 0.03);
  EXPECT_NEAR(report.find("comparative_bias.distribution[P-bar]")->verdict->magnitude, 0.2, 0.03);
  EXPECT_LT(report.find("comparative_bias.distribution[all]")->verdict->magnitude, 0.05);
}

TEST(CompareAudit, DisjointBatteriesRejected) {
  auto a = simulate(binary_scenario(4, 1, 7));
  auto b_cfg = binary_scenario(4, 1, 7);
  b_cfg.queries[0].query_id = "other";
  EXPECT_THROW(compare_audit(a, simulate(b_cfg)), InputError);
}

}  // namespace
}  // namespace biasmeter
