// output.hpp: CSV tables, run manifests, atomic file writes.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "stochlind/app/config.hpp"

namespace stochlind::app {

using json = nlohmann::json;

// 17 significant digits: round-trips every double.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> comments;  // written as '# ' lines before the header
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> row_labels;  // optional leading text column

  void add_row(std::vector<double> r) {
    if (r.size() != header.size()) throw std::logic_error("CsvTable: row width differs from header");
    rows.push_back(std::move(r));
  }

  void add_row(std::string label, std::vector<double> r) {
    if (r.size() + 1 != header.size()) throw std::logic_error("CsvTable: row width differs from header");
    row_labels.push_back(std::move(label));
    rows.push_back(std::move(r));
  }

  std::string render() const {
    std::string out;
    for (const auto& c : comments) out += "# " + c + "\n";
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (std::size_t k = 0; k < rows.size(); ++k) {
      const auto& r = rows[k];
      const bool labelled = k < row_labels.size();
      if (labelled) out += row_labels[k];
      for (std::size_t i = 0; i < r.size(); ++i) out += (i || labelled ? "," : "") + format_number(r[i]);
      out += "\n";
    }
    return out;
  }
};

// Write to a sibling temporary file, then rename over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("cannot move output into place at '" + path.string() + "'");
  }
}

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;
  double tolerance = 0.0;
  std::string detail;
};

inline json to_json(const Check& c) {
  return json{{"name", c.name}, {"passed", c.passed}, {"value", c.value}, {"tolerance", c.tolerance},
              {"detail", c.detail}};
}

inline json config_echo(const ScenarioConfig& cfg) {
  json j;
  j["scenario"] = cfg.scenario;
  for (const auto& [sec, entries] : cfg.sections) {
    json s = json::object();
    for (const auto& [k, v] : entries) s[k] = v;
    j[sec] = s;
  }
  return j;
}

}  // namespace stochlind::app
