#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stnn/context.hpp"
#include "stnn/sim.hpp"
#include "stnn/train.hpp"

// Dataset file formats and ingestion. A dataset is a JSON manifest pointing
// at a timestamped measurement table, a distance file (one matrix, or a
// sequence of step-tagged matrices for dynamic networks) and an optional
// closure list. All numeric text uses round-trip float formatting, so
// save/load reproduces tensors bit-exactly.
namespace stnn::io {

// Strict "YYYY-MM-DDTHH:MM:SS" in UTC.
std::string format_iso8601(std::int64_t epoch_seconds);
std::int64_t parse_iso8601(const std::string& text);

struct ClosureRecord {
  std::string sensor_id;
  std::int64_t start = 0;
  std::int64_t end = 0;
};

struct Dataset {
  std::string name;
  ctx::SensorFeatureTensor x;
  ctx::DistanceTensor q;
  std::vector<ClosureRecord> closures;
  std::string units;         // e.g. "vehicles_per_step" or "mph"
  std::string measure_name;  // feature 0 name: "volume" or "speed"

  bool has_closures() const { return !closures.empty(); }
  train::DatasetView view() const { return {&x, &q, has_closures()}; }
};

// Parses the manifest and every referenced file; relative paths resolve
// against the manifest's directory. Errors carry file names and line numbers.
Dataset load_dataset(const std::string& manifest_path);

// Writes <name>.manifest.json plus the referenced tables into directory and
// returns the manifest path.
std::string save_dataset(const Dataset& dataset, const std::string& directory);

// Wraps a simulation run (closure schedule included) as a dataset.
Dataset from_sim(sim::SimDataset&& run, const std::string& name);

// Comma-separated sensor ids, or "all" (empty/"all" selects every sensor).
std::vector<std::int64_t> resolve_targets(const ctx::SensorFeatureTensor& x,
                                          const std::string& spec);

// Metrics report as stable-keyed JSON text; reports maps method -> report
// ("model", "ha", ...).
std::string metrics_json(const std::map<std::string, train::MetricsReport>& reports,
                         const std::map<std::string, std::string>& metadata);
void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

}  // namespace stnn::io
