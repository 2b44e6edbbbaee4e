#include <doctest.h>

#include <filesystem>
#include <set>

#include "ssnls/experiment.hpp"
#include "ssnls/io.hpp"

using namespace ssnls;
using namespace ssnls::experiment;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) { return fs::temp_directory_path() / "ssnls_test_experiment" / name; }

ExperimentConfig desk_align(const std::string& out) {
  return ExperimentConfig::from_json(
      {{"experiment", "doas_align"}, {"scale", 4}, {"seed", 3}, {"output_dir", scratch(out).string()}});
}

ExperimentConfig small_hsi(const std::string& out) {
  return ExperimentConfig::from_json({{"experiment", "hsi_structured"},
                                      {"scale", 10},
                                      {"seed", 2},
                                      {"threads", 2},
                                      {"hsi", {{"bands", 60}, {"samples_per_material", 40}, {"per_group", 4},
                                               {"profile", {{1, 8}, {2, 4}}}}},
                                      {"output_dir", scratch(out).string()}});
}

}  // namespace

TEST_CASE("experiment names") {
  for (auto k : {ExperimentKind::DoasAlign, ExperimentKind::DoasBackground, ExperimentKind::HsiInter,
                 ExperimentKind::HsiStructured, ExperimentKind::Bench})
    CHECK(parse_experiment(to_string(k)) == k);
  CHECK_THROWS_AS(parse_experiment("doas"), Error);
}

TEST_CASE("config parsing rejects unknown keys and bad types") {
  auto kind = [](const json& j) {
    try {
      ExperimentConfig::from_json(j);
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  CHECK(kind({{"experimnt", "doas_align"}}) == ErrorKind::Config);
  CHECK(kind({{"doas", {{"alhpa", 1.0}}}}) == ErrorKind::Config);
  CHECK(kind({{"sgp", {{"sigma", "big"}}}}) == ErrorKind::Config);
  CHECK(kind({{"hsi", 3}}) == ErrorKind::Config);
  CHECK(kind({{"experiment", "nope"}}) == ErrorKind::Config);
  CHECK(kind(json::array()) == ErrorKind::Config);
}

TEST_CASE("resolved configs are idempotent and round trip through JSON") {
  for (const char* name : {"doas_align", "doas_background", "hsi_inter", "hsi_structured", "bench"})
    for (int scale : {1, 4, 10}) {
      auto c = ExperimentConfig::from_json({{"experiment", name}, {"scale", scale}});
      const auto r = c.resolved();
      CHECK(r.resolved().to_json() == r.to_json());
      CHECK(ExperimentConfig::from_json(r.to_json()).to_json() == r.to_json());
      CHECK_NOTHROW(r.validate());
      CHECK(r.solvers == default_solvers(r.kind));
    }
}

TEST_CASE("scale-dependent defaults") {
  const auto full = ExperimentConfig::from_json({{"experiment", "doas_align"}}).resolved();
  CHECK(full.doas.bands == 1024);
  CHECK(full.doas.grid == "full");
  CHECK(full.doas.noise_sd == 0.0);
  const auto desk = desk_align("x").resolved();
  CHECK(desk.doas.bands == 256);
  CHECK(desk.doas.grid == "desk");
  const auto bg = ExperimentConfig::from_json({{"experiment", "doas_background"}, {"scale", 4}}).resolved();
  CHECK(bg.doas.bands == 1024);
  CHECK(bg.doas.grid == "full");
  CHECK(bg.doas.noise_sd == 5.58e-5);
  const auto hs = ExperimentConfig::from_json({{"experiment", "hsi_structured"}, {"scale", 10}}).resolved();
  CHECK(hs.hsi.bands == 204);
  CHECK(hs.hsi.per_group == 10);
  Index pixels = 0;
  for (const auto& l : hs.hsi.profile) pixels += l.count;
  CHECK(pixels == 100 + 50 + 5 + 1);
  const auto hi = ExperimentConfig::from_json({{"experiment", "hsi_inter"}}).resolved();
  Index inter_pixels = 0;
  for (const auto& l : hi.hsi.profile) inter_pixels += l.count;
  CHECK(inter_pixels == 307 * 307);
}

TEST_CASE("config validation") {
  auto bad = [](const json& j) {
    try {
      ExperimentConfig::from_json(j).resolved().validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::Config;
    }
    return false;
  };
  CHECK(bad({{"scale", 0}}));
  CHECK(bad({{"threads", -1}}));
  CHECK(bad({{"solvers", {"magic"}}}));
  CHECK(bad({{"experiment", "doas_background"}, {"solvers", {"l1"}}}));
  CHECK(bad({{"doas", {{"grid", "coarse"}}}}));
  CHECK(bad({{"doas", {{"grid", "custom"}}}}));
  CHECK(bad({{"doas", {{"alpha", 0.0}}}}));
  CHECK(bad({{"doas", {{"means", {1.0}}}}}));
  CHECK(bad({{"experiment", "hsi_structured"}, {"hsi", {{"scene", "x"}}}}));
  CHECK(bad({{"output_dir", ""}}));
}

TEST_CASE("stage seeds are distinct and deterministic") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 20; ++s)
    for (std::uint64_t stage = 0; stage < 20; ++stage) seen.insert(stage_seed(s, stage));
  CHECK(seen.size() == 400);
  CHECK(stage_seed(5, 2) == stage_seed(5, 2));
}

TEST_CASE("desk alignment run writes its outputs") {
  fs::remove_all(scratch("align_a"));
  const auto rec = run_experiment(desk_align("align_a"));
  for (const char* f : {"config.json", "metrics.csv", "run_record.json", "data.csv", "truth.csv",
                        "coefficients_l1_minus_l2.csv", "trace_l1_over_l2.csv"})
    CHECK(fs::exists(scratch("align_a") / f));
  CHECK(rec.metrics.rows.size() == 5);
  const auto cfg = json::parse(io::read_text(scratch("align_a") / "config.json"));
  CHECK(cfg == rec.config);
  CHECK(cfg.at("doas").at("bands") == 256);
  const auto record = json::parse(io::read_text(scratch("align_a") / "run_record.json"));
  CHECK(record.contains("wall_seconds"));
  const std::string metrics = io::read_text(scratch("align_a") / "metrics.csv");
  CHECK(metrics.find("seconds") == std::string::npos);
  const auto col = std::find(rec.metrics.columns.begin(), rec.metrics.columns.end(), "support_accuracy");
  REQUIRE(col != rec.metrics.columns.end());
  for (const auto& row : rec.metrics.rows) CHECK(row[size_t(col - rec.metrics.columns.begin())] == "1");
}

TEST_CASE("reruns with the same seed are byte-identical") {
  fs::remove_all(scratch("align_b"));
  run_experiment(desk_align("align_b"));
  fs::remove_all(scratch("align_c"));
  run_experiment(desk_align("align_c"));
  for (const auto& entry : fs::directory_iterator(scratch("align_b"))) {
    const auto name = entry.path().filename();
    if (name == "run_record.json" || name == "config.json") continue;
    INFO(name.string());
    CHECK(io::read_text(entry.path()) == io::read_text(scratch("align_c") / name));
  }
  fs::remove_all(scratch("hsi_a"));
  run_experiment(small_hsi("hsi_a"));
  auto other = small_hsi("hsi_b");
  other.threads = 1;
  fs::remove_all(scratch("hsi_b"));
  run_experiment(other);
  CHECK(io::read_text(scratch("hsi_a") / "metrics.csv") == io::read_text(scratch("hsi_b") / "metrics.csv"));
}

TEST_CASE("single-solver comparison") {
  const auto t = compare_solvers(desk_align("unused"), {"l1_minus_l2"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0][0] == "l1_minus_l2");
  CHECK(t.columns[0] == "solver");
  CHECK(t.to_csv().substr(0, 7) == "solver,");
  CHECK_THROWS_AS(compare_solvers(desk_align("unused"), {"simplex"}), Error);
}

TEST_CASE("structured run reports every dictionary and solver") {
  fs::remove_all(scratch("hsi_c"));
  const auto rec = run_experiment(small_hsi("hsi_c"));
  CHECK(rec.metrics.rows.size() == 12);
  std::set<std::string> dicts;
  for (const auto& row : rec.metrics.rows) dicts.insert(row[0]);
  CHECK(dicts == std::set<std::string>{"group", "mean", "bad"});
}

TEST_CASE("shipped schema lists exactly the resolved config keys") {
  const auto schema = json::parse(io::read_text(fs::path(SSNLS_SOURCE_DIR) / "docs" / "config.schema.json"));
  const auto props = schema.at("properties");
  auto keys = [](const json& j) {
    std::set<std::string> out;
    for (const auto& [k, v] : j.items()) out.insert(k);
    return out;
  };
  const auto cfg = ExperimentConfig::from_json({{"experiment", "hsi_inter"}}).resolved().to_json();
  CHECK(keys(props) == keys(cfg));
  for (const char* section : {"doas", "hsi", "bench", "sgp", "sparsity"}) {
    INFO(section);
    CHECK(keys(props.at(section).at("properties")) == keys(cfg.at(section)));
  }
}
