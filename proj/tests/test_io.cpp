#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <json.hpp>

#include "stnn/io.hpp"

using namespace stnn;
using namespace stnn::io;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("stnn_io_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("iso8601 formatting round-trips") {
  for (std::int64_t epoch : {0L, 1330560000L, 1330560300L, 1700000000L}) {
    CHECK(parse_iso8601(format_iso8601(epoch)) == epoch);
  }
  CHECK(format_iso8601(0) == "1970-01-01T00:00:00");
  CHECK(parse_iso8601("2012-03-01T00:00:00") % 86400 == 0);
  CHECK_THROWS_AS(parse_iso8601("not-a-time"), Error);
  CHECK_THROWS_AS(parse_iso8601("2012-13-01T00:00:00"), Error);
}

TEST_CASE("a hand-written two-sensor table parses with time encodings") {
  TempDir dir;
  write_text_file(dir.file("toy.speed.csv"),
                  "timestamp,a,b\n"
                  "2012-03-01T00:00:00,10.5,20.25\n"
                  "2012-03-01T00:05:00,11,21\n"
                  "2012-03-01T00:10:00,12,22\n");
  write_text_file(dir.file("toy.dist.csv"),
                  "id,a,b\n"
                  "a,0,500\n"
                  "b,inf,0\n");
  write_text_file(dir.file("toy.manifest.json"), R"({
    "name": "toy",
    "speed_table": "toy.speed.csv",
    "distance_file": "toy.dist.csv",
    "stride_seconds": 300,
    "features": ["speed", "time_of_day"],
    "units": "mph"
  })");

  Dataset ds = load_dataset(dir.file("toy.manifest.json"));
  CHECK(ds.name == "toy");
  CHECK(ds.x.num_sensors == 2);
  CHECK(ds.x.num_features == 2);
  CHECK(ds.x.num_steps == 3);
  CHECK(ds.x.at(0, 0, 0) == 10.5);
  CHECK(ds.x.at(1, 0, 2) == 22.0);
  // time-of-day fractions: midnight, 00:05, 00:10
  CHECK(ds.x.at(0, 1, 0) == 0.0);
  CHECK(ds.x.at(0, 1, 1) == doctest::Approx(300.0 / 86400.0).epsilon(1e-15));
  CHECK(ds.x.at(1, 1, 2) == doctest::Approx(600.0 / 86400.0).epsilon(1e-15));

  // static distances expand across every step as a view
  CHECK(ds.q.blocks.size() == 1);
  for (std::int64_t t = 0; t < 3; ++t) {
    CHECK(ds.q.at(0, 1, t) == 500.0);
    CHECK(!std::isfinite(ds.q.at(1, 0, t)));
  }
  CHECK(!ds.has_closures());
}

TEST_CASE("missing files are reported with the manifest field name") {
  TempDir dir;
  write_text_file(dir.file("toy.manifest.json"), R"({
    "name": "toy",
    "speed_table": "nope.csv",
    "distance_file": "also-nope.csv",
    "stride_seconds": 300,
    "features": ["speed", "time_of_day"],
    "units": "mph"
  })");
  try {
    load_dataset(dir.file("toy.manifest.json"));
    FAIL("expected an io error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Io);
    CHECK(std::string(e.what()).find("speed_table") != std::string::npos);
  }
}

TEST_CASE("ragged rows and bad timestamps carry line numbers") {
  TempDir dir;
  write_text_file(dir.file("bad.speed.csv"),
                  "timestamp,a,b\n"
                  "2012-03-01T00:00:00,1,2\n"
                  "2012-03-01T00:05:00,3\n");
  write_text_file(dir.file("bad.dist.csv"), "id,a,b\na,0,1\nb,1,0\n");
  write_text_file(dir.file("bad.manifest.json"), R"({
    "name": "bad", "speed_table": "bad.speed.csv", "distance_file": "bad.dist.csv",
    "stride_seconds": 300, "features": ["speed", "time_of_day"], "units": "mph"
  })");
  try {
    load_dataset(dir.file("bad.manifest.json"));
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Parse);
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);  // 1-based line
  }

  write_text_file(dir.file("bad.speed.csv"),
                  "timestamp,a,b\n"
                  "2012-03-01T00:00:00,1,2\n"
                  "2012-03-01T00:04:00,3,4\n");  // wrong stride
  CHECK_THROWS_AS(load_dataset(dir.file("bad.manifest.json")), Error);
}

TEST_CASE("distance ids must match the measurement table") {
  TempDir dir;
  write_text_file(dir.file("mix.speed.csv"),
                  "timestamp,a,b\n2012-03-01T00:00:00,1,2\n");
  write_text_file(dir.file("mix.dist.csv"), "id,a,c\na,0,1\nc,1,0\n");
  write_text_file(dir.file("mix.manifest.json"), R"({
    "name": "mix", "speed_table": "mix.speed.csv", "distance_file": "mix.dist.csv",
    "stride_seconds": 300, "features": ["speed", "time_of_day"], "units": "mph"
  })");
  CHECK_THROWS_AS(load_dataset(dir.file("mix.manifest.json")), Error);
}

TEST_CASE("a simulated dataset round-trips bit-exactly through the text formats") {
  TempDir dir;
  sim::GridNetwork network = sim::build_grid(2, 3);
  std::int32_t central = -1;
  sim::ClosureSchedule schedule = sim::default_schedule(network, 5, &central);
  // shrink the closure windows into the short run
  for (auto& c : schedule.closures) {
    c.start %= 150;
    c.end = c.start + 20;
  }
  Dataset original = from_sim(sim::run(network, schedule, 200, 5), "roundtrip");
  const std::string manifest = save_dataset(original, dir.path.string());

  Dataset loaded = load_dataset(manifest);
  CHECK(loaded.name == original.name);
  CHECK(loaded.x.values == original.x.values);
  CHECK(loaded.x.timestamps == original.x.timestamps);
  CHECK(loaded.x.sensor_ids == original.x.sensor_ids);
  REQUIRE(loaded.q.blocks.size() == original.q.blocks.size());
  for (std::size_t b = 0; b < loaded.q.blocks.size(); ++b) {
    CHECK(loaded.q.blocks[b].from_step == original.q.blocks[b].from_step);
    REQUIRE(loaded.q.blocks[b].values.size() == original.q.blocks[b].values.size());
    for (std::size_t i = 0; i < loaded.q.blocks[b].values.size(); ++i) {
      const double a = loaded.q.blocks[b].values[i];
      const double e = original.q.blocks[b].values[i];
      if (std::isfinite(e)) {
        CHECK(a == e);  // bit-exact round trip
      } else {
        CHECK(!std::isfinite(a));
      }
    }
  }
  REQUIRE(loaded.closures.size() == original.closures.size());
  for (std::size_t i = 0; i < loaded.closures.size(); ++i) {
    CHECK(loaded.closures[i].sensor_id == original.closures[i].sensor_id);
    CHECK(loaded.closures[i].start == original.closures[i].start);
    CHECK(loaded.closures[i].end == original.closures[i].end);
  }
}

TEST_CASE("resolve_targets handles all and comma lists") {
  sim::SimDataset run = sim::run(sim::build_grid(2, 2), {}, 10, 1);
  Dataset ds = from_sim(std::move(run), "t");
  CHECK(resolve_targets(ds.x, "all").size() == static_cast<std::size_t>(ds.x.num_sensors));
  CHECK(resolve_targets(ds.x, "").size() == static_cast<std::size_t>(ds.x.num_sensors));
  const std::vector<std::int64_t> two = resolve_targets(ds.x, "s001,s003");
  REQUIRE(two.size() == 2);
  CHECK(two[0] == 1);
  CHECK(two[1] == 3);
  CHECK_THROWS_AS(resolve_targets(ds.x, "sstandby"), Error);
}

TEST_CASE("metrics reports serialize with stable keys") {
  train::MetricsReport report;
  report.overall = {1.5, 2.0, 12.5, 100, 90};
  report.horizons = {{3, {1.0, 1.5, 10.0, 40, 40}}, {6, {2.0, 2.5, 15.0, 40, 40}}};
  const std::string text = metrics_json({{"model", report}}, {{"split", "test"}});
  const nlohmann::json j = nlohmann::json::parse(text);
  CHECK(j["split"] == "test");
  CHECK(j["model"]["overall"]["mae"] == 1.5);
  CHECK(j["model"]["overall"]["points"] == 100);
  CHECK(j["model"]["horizons"][0]["steps"] == 3);
  CHECK(j["model"]["horizons"][1]["mape_pct"] == 15.0);
}
