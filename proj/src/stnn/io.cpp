#include "stnn/io.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace stnn::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

// --- timestamps -----------------------------------------------------------------

namespace {

std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp + (mp < 10 ? 3 : -9);
  y += m <= 2;
}

}  // namespace

std::string format_iso8601(std::int64_t epoch_seconds) {
  std::int64_t days = epoch_seconds / 86400;
  std::int64_t rem = epoch_seconds % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  std::int64_t y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04lld-%02u-%02uT%02lld:%02lld:%02lld",
                static_cast<long long>(y), m, d, static_cast<long long>(rem / 3600),
                static_cast<long long>((rem / 60) % 60), static_cast<long long>(rem % 60));
  return buf;
}

std::int64_t parse_iso8601(const std::string& text) {
  int y, mo, d, h, mi, s;
  char t;
  if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &t, &h, &mi, &s) != 7 ||
      (t != 'T' && t != ' ') || mo < 1 || mo > 12 || d < 1 || d > 31 || h < 0 || h > 23 ||
      mi < 0 || mi > 59 || s < 0 || s > 60) {
    fail(ErrorCode::Parse, "invalid ISO-8601 timestamp '" + text + "'");
  }
  return days_from_civil(y, static_cast<unsigned>(mo), static_cast<unsigned>(d)) * 86400 +
         h * 3600 + mi * 60 + s;
}

// --- small file helpers -----------------------------------------------------------

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot write '" + path + "'");
  out << content;
  if (!out) fail(ErrorCode::Io, "short write on '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') {
    fields.back().pop_back();
  }
  return fields;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return lines;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no, const std::string& what) {
  fail(ErrorCode::Parse, path + ":" + std::to_string(line_no + 1) + ": " + what);
}

double parse_number(const std::string& path, std::size_t line_no, const std::string& field) {
  bool ok = false;
  const double v = parse_double(field, ok);
  if (!ok) parse_fail(path, line_no, "cannot parse number '" + field + "'");
  return v;
}

// measurement table: header "timestamp,<id>,..." then one row per step
void load_speed_table(const std::string& path, std::int64_t stride_seconds,
                      ctx::SensorFeatureTensor& x) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.size() < 2) fail(ErrorCode::Parse, path + ": table needs a header and data rows");
  const std::vector<std::string> header = split_csv_line(lines[0]);
  if (header.size() < 2 || header[0] != "timestamp") {
    parse_fail(path, 0, "header must start with 'timestamp' and list sensor ids");
  }
  const std::int64_t n = static_cast<std::int64_t>(header.size()) - 1;
  const std::int64_t t_total = static_cast<std::int64_t>(lines.size()) - 1;

  x.num_sensors = n;
  x.num_features = 2;
  x.num_steps = t_total;
  x.stride_seconds = stride_seconds;
  x.sensor_ids.assign(header.begin() + 1, header.end());
  x.timestamps.resize(static_cast<std::size_t>(t_total));
  x.values.assign(static_cast<std::size_t>(n * 2 * t_total), 0.0);

  for (std::int64_t t = 0; t < t_total; ++t) {
    const std::size_t line_no = static_cast<std::size_t>(t) + 1;
    const std::vector<std::string> fields = split_csv_line(lines[line_no]);
    if (static_cast<std::int64_t>(fields.size()) != n + 1) {
      parse_fail(path, line_no, "expected " + std::to_string(n + 1) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    const std::int64_t ts = parse_iso8601(fields[0]);
    x.timestamps[static_cast<std::size_t>(t)] = ts;
    if (t > 0 && ts - x.timestamps[static_cast<std::size_t>(t - 1)] != stride_seconds) {
      parse_fail(path, line_no, "timestamp does not advance by the declared stride");
    }
    const double tod = static_cast<double>(((ts % 86400) + 86400) % 86400) / 86400.0;
    for (std::int64_t s = 0; s < n; ++s) {
      x.at(s, 0, t) = parse_number(path, line_no, fields[static_cast<std::size_t>(s) + 1]);
      x.at(s, 1, t) = tod;
    }
  }
  x.validate();
}

std::vector<double> parse_matrix_block(const std::string& path, const std::vector<std::string>& lines,
                                       std::size_t header_line,
                                       const std::vector<std::string>& ids) {
  const std::int64_t n = static_cast<std::int64_t>(ids.size());
  const std::vector<std::string> header = split_csv_line(lines[header_line]);
  if (static_cast<std::int64_t>(header.size()) != n + 1 || header[0] != "id") {
    parse_fail(path, header_line, "matrix header must be 'id,<sensor ids>'");
  }
  for (std::int64_t i = 0; i < n; ++i) {
    if (header[static_cast<std::size_t>(i) + 1] != ids[static_cast<std::size_t>(i)]) {
      parse_fail(path, header_line, "sensor ids disagree with the measurement table at column " +
                                        std::to_string(i + 1));
    }
  }
  std::vector<double> matrix(static_cast<std::size_t>(n * n));
  for (std::int64_t r = 0; r < n; ++r) {
    const std::size_t line_no = header_line + 1 + static_cast<std::size_t>(r);
    if (line_no >= lines.size()) parse_fail(path, line_no, "matrix block truncated");
    const std::vector<std::string> fields = split_csv_line(lines[line_no]);
    if (static_cast<std::int64_t>(fields.size()) != n + 1) {
      parse_fail(path, line_no, "expected " + std::to_string(n + 1) + " fields, found " +
                                    std::to_string(fields.size()));
    }
    if (fields[0] != ids[static_cast<std::size_t>(r)]) {
      parse_fail(path, line_no, "row id '" + fields[0] + "' out of order");
    }
    for (std::int64_t c = 0; c < n; ++c) {
      matrix[static_cast<std::size_t>(r * n + c)] =
          parse_number(path, line_no, fields[static_cast<std::size_t>(c) + 1]);
    }
  }
  return matrix;
}

void load_distance_file(const std::string& path, const std::vector<std::string>& ids,
                        std::int64_t num_steps, ctx::DistanceTensor& q) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty()) fail(ErrorCode::Parse, path + ": empty distance file");
  q.num_sensors = static_cast<std::int64_t>(ids.size());
  q.num_steps = num_steps;
  q.sensor_ids = ids;

  const std::int64_t n = q.num_sensors;
  if (split_csv_line(lines[0])[0] == "from") {
    // dynamic: repeated "from,<step>" + matrix blocks
    std::size_t pos = 0;
    while (pos < lines.size()) {
      const std::vector<std::string> head = split_csv_line(lines[pos]);
      if (head.size() != 2 || head[0] != "from") {
        parse_fail(path, pos, "expected 'from,<step>' block header");
      }
      const double step_value = parse_number(path, pos, head[1]);
      ctx::DistanceTensor::Block block;
      block.from_step = static_cast<std::int64_t>(step_value);
      block.values = parse_matrix_block(path, lines, pos + 1, ids);
      q.blocks.push_back(std::move(block));
      pos += 2 + static_cast<std::size_t>(n);
    }
  } else {
    ctx::DistanceTensor::Block block;
    block.from_step = 0;
    block.values = parse_matrix_block(path, lines, 0, ids);
    q.blocks.push_back(std::move(block));
  }
  q.validate();
}

std::vector<ClosureRecord> load_closures(const std::string& path,
                                         const std::vector<std::string>& ids) {
  const std::vector<std::string> lines = read_lines(path);
  if (lines.empty() || split_csv_line(lines[0]) != std::vector<std::string>{"segment", "start", "end"}) {
    fail(ErrorCode::Parse, path + ": closure header must be 'segment,start,end'");
  }
  std::vector<ClosureRecord> closures;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::vector<std::string> fields = split_csv_line(lines[i]);
    if (fields.size() != 3) parse_fail(path, i, "expected 3 fields");
    if (std::find(ids.begin(), ids.end(), fields[0]) == ids.end()) {
      parse_fail(path, i, "closure names unknown sensor '" + fields[0] + "'");
    }
    ClosureRecord rec;
    rec.sensor_id = fields[0];
    rec.start = static_cast<std::int64_t>(parse_number(path, i, fields[1]));
    rec.end = static_cast<std::int64_t>(parse_number(path, i, fields[2]));
    if (rec.start >= rec.end) parse_fail(path, i, "closure interval must be nonempty");
    closures.push_back(std::move(rec));
  }
  return closures;
}

}  // namespace

Dataset load_dataset(const std::string& manifest_path) {
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, manifest_path + ": " + e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  auto resolve = [&base](const std::string& rel) { return (base / rel).string(); };

  Dataset ds;
  try {
    ds.name = manifest.at("name").get<std::string>();
    ds.units = manifest.value("units", std::string("unknown"));
    const auto features = manifest.at("features").get<std::vector<std::string>>();
    ds.measure_name = features.empty() ? "value" : features.front();
    const std::int64_t stride = manifest.at("stride_seconds").get<std::int64_t>();

    const std::string speed_rel = manifest.at("speed_table").get<std::string>();
    if (!fs::exists(resolve(speed_rel))) {
      fail(ErrorCode::Io, "manifest field 'speed_table' names missing file '" + speed_rel + "'");
    }
    load_speed_table(resolve(speed_rel), stride, ds.x);

    const std::string dist_rel = manifest.at("distance_file").get<std::string>();
    if (!fs::exists(resolve(dist_rel))) {
      fail(ErrorCode::Io, "manifest field 'distance_file' names missing file '" + dist_rel + "'");
    }
    load_distance_file(resolve(dist_rel), ds.x.sensor_ids, ds.x.num_steps, ds.q);

    if (manifest.contains("closures")) {
      const std::string clo_rel = manifest.at("closures").get<std::string>();
      if (!fs::exists(resolve(clo_rel))) {
        fail(ErrorCode::Io, "manifest field 'closures' names missing file '" + clo_rel + "'");
      }
      ds.closures = load_closures(resolve(clo_rel), ds.x.sensor_ids);
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Parse, manifest_path + ": " + e.what());
  }
  return ds;
}

std::string save_dataset(const Dataset& dataset, const std::string& directory) {
  fs::create_directories(directory);
  const fs::path dir(directory);
  const std::string speed_name = dataset.name + ".speed.csv";
  const std::string dist_name = dataset.name + ".dist.csv";
  const std::string closures_name = dataset.name + ".closures.csv";
  const std::string manifest_name = dataset.name + ".manifest.json";

  {
    std::ostringstream out;
    out << "timestamp";
    for (const std::string& id : dataset.x.sensor_ids) out << ',' << id;
    out << '\n';
    for (std::int64_t t = 0; t < dataset.x.num_steps; ++t) {
      out << format_iso8601(dataset.x.timestamps[static_cast<std::size_t>(t)]);
      for (std::int64_t s = 0; s < dataset.x.num_sensors; ++s) {
        out << ',' << format_double(dataset.x.at(s, 0, t));
      }
      out << '\n';
    }
    write_text_file((dir / speed_name).string(), out.str());
  }

  {
    std::ostringstream out;
    const bool dynamic = dataset.q.blocks.size() > 1;
    const std::int64_t n = dataset.q.num_sensors;
    for (const auto& block : dataset.q.blocks) {
      if (dynamic) out << "from," << block.from_step << '\n';
      out << "id";
      for (const std::string& id : dataset.q.sensor_ids) out << ',' << id;
      out << '\n';
      for (std::int64_t r = 0; r < n; ++r) {
        out << dataset.q.sensor_ids[static_cast<std::size_t>(r)];
        for (std::int64_t c = 0; c < n; ++c) {
          const double v = block.values[static_cast<std::size_t>(r * n + c)];
          out << ',' << (std::isfinite(v) ? format_double(v) : std::string("inf"));
        }
        out << '\n';
      }
    }
    write_text_file((dir / dist_name).string(), out.str());
  }

  if (!dataset.closures.empty()) {
    std::ostringstream out;
    out << "segment,start,end\n";
    for (const ClosureRecord& c : dataset.closures) {
      out << c.sensor_id << ',' << c.start << ',' << c.end << '\n';
    }
    write_text_file((dir / closures_name).string(), out.str());
  }

  json manifest;
  manifest["name"] = dataset.name;
  manifest["speed_table"] = speed_name;
  manifest["distance_file"] = dist_name;
  manifest["distance_mode"] = dataset.q.blocks.size() > 1 ? "dynamic" : "static";
  manifest["stride_seconds"] = dataset.x.stride_seconds;
  manifest["features"] = std::vector<std::string>{dataset.measure_name, "time_of_day"};
  manifest["units"] = dataset.units;
  if (!dataset.closures.empty()) manifest["closures"] = closures_name;
  const std::string manifest_path = (dir / manifest_name).string();
  write_text_file(manifest_path, manifest.dump(2) + "\n");
  return manifest_path;
}

Dataset from_sim(sim::SimDataset&& run, const std::string& name) {
  Dataset ds;
  ds.name = name;
  ds.units = "vehicles_per_step";
  ds.measure_name = "volume";
  for (const sim::Closure& c : run.schedule.closures) {
    ds.closures.push_back(
        {run.network.segments[static_cast<std::size_t>(c.segment)].sensor_id, c.start, c.end});
  }
  ds.x = std::move(run.x);
  ds.q = std::move(run.q);
  return ds;
}

std::vector<std::int64_t> resolve_targets(const ctx::SensorFeatureTensor& x,
                                          const std::string& spec) {
  std::vector<std::int64_t> targets;
  if (spec.empty() || spec == "all") {
    targets.resize(static_cast<std::size_t>(x.num_sensors));
    for (std::int64_t i = 0; i < x.num_sensors; ++i) targets[static_cast<std::size_t>(i)] = i;
    return targets;
  }
  std::size_t start = 0;
  while (start <= spec.size()) {
    const std::size_t comma = spec.find(',', start);
    const std::string id =
        comma == std::string::npos ? spec.substr(start) : spec.substr(start, comma - start);
    if (!id.empty()) targets.push_back(x.index_of(id));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (targets.empty()) fail(ErrorCode::InvalidArgument, "no targets named in '" + spec + "'");
  return targets;
}

namespace {

json metrics_to_json(const train::Metrics& m) {
  json j;
  j["mae"] = m.mae;
  j["rmse"] = m.rmse;
  j["mape_pct"] = m.mape_pct;
  j["points"] = m.points;
  j["mape_points"] = m.mape_points;
  return j;
}

}  // namespace

std::string metrics_json(const std::map<std::string, train::MetricsReport>& reports,
                         const std::map<std::string, std::string>& metadata) {
  json j;
  for (const auto& [key, value] : metadata) j[key] = value;
  for (const auto& [method, report] : reports) {
    json r;
    r["overall"] = metrics_to_json(report.overall);
    r["horizons"] = json::array();
    for (const auto& [step, metrics] : report.horizons) {
      json h = metrics_to_json(metrics);
      h["steps"] = step;
      r["horizons"].push_back(std::move(h));
    }
    j[method] = std::move(r);
  }
  return j.dump(2) + "\n";
}

}  // namespace stnn::io
