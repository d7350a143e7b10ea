#pragma once

// Experiment outputs in table/figure shapes:
//   report/occupancy.csv      transformer,anonymizer,entity,sector,accuracy
//   report/shortlist.csv      anonymizer,entity,male_pct,female_pct
//   report/anonymization.json masking statistics per anonymizer and entity set
//   report/curves/*.csv       epoch,split,metric,value
//   report/manifest.json      config fingerprint, config and the full bundle

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pba/anonymizer.hpp"
#include "pba/error.hpp"
#include "pba/fairness.hpp"
#include "pba/scorer.hpp"
#include "pba/text.hpp"

namespace pba {

// Accuracies are kept at the 4-decimal precision they are rendered with, so
// that a parsed CSV reproduces the grid exactly.
inline double quantize4(double x) { return std::round(x * 1e4) / 1e4; }

struct GridKey {
  std::string anonymizer;
  std::string entity;
  auto operator<=>(const GridKey&) const = default;
};

struct OccupancyRow {
  std::string transformer;
  std::string anonymizer;
  std::string entity;
  std::string sector;
  std::optional<double> accuracy;  // absent when the test split has no such sector

  bool operator==(const OccupancyRow&) const = default;
};

struct ExperimentResults {
  std::string transformer = "hashbag";
  nlohmann::json config = nlohmann::json::object();
  std::vector<GridKey> expected_cells;  // every (anonymizer, entity) the run must cover
  std::map<GridKey, SectorAccuracy> occupancy;
  std::map<GridKey, ShortlistReport> shortlists;
  std::map<GridKey, AnonymizationStats> anonymization;
  std::map<std::string, LearningCurve> curves;  // file stem -> curve
};

inline std::string config_fingerprint(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

namespace detail {

inline std::string fixed(double x, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline nlohmann::ordered_json stats_to_json(const AnonymizationStats& s) {
  nlohmann::ordered_json j;
  j["documents"] = s.documents;
  j["total_words"] = s.total_words;
  j["masked_spans"] = s.masked_spans;
  j["masked_words"] = s.masked_words;
  j["masked_fraction"] = s.masked_fraction;
  j["spans_by_label"] = s.spans_by_label;
  return j;
}

}  // namespace detail

// Lists grid keys lacking an occupancy or shortlist entry.
inline std::vector<std::string> missing_cells(const ExperimentResults& r) {
  std::vector<std::string> missing;
  if (r.expected_cells.empty()) missing.push_back("<no cells requested>");
  for (const auto& key : r.expected_cells) {
    const std::string name = key.anonymizer + "/" + key.entity;
    if (!r.occupancy.count(key)) missing.push_back("occupancy:" + name);
    if (!r.shortlists.count(key)) missing.push_back("shortlist:" + name);
  }
  return missing;
}

inline std::vector<OccupancyRow> occupancy_rows(const ExperimentResults& r) {
  std::vector<OccupancyRow> rows;
  for (const auto& key : r.expected_cells) {
    const auto& acc = r.occupancy.at(key);
    for (Group g : kAllGroups) {
      std::optional<double> a = acc[group_index(g)];
      if (a) a = quantize4(*a);
      rows.push_back({r.transformer, key.anonymizer, key.entity, std::string(group_name(g)), a});
    }
  }
  return rows;
}

inline std::string occupancy_csv(const std::vector<OccupancyRow>& rows) {
  std::string out = "transformer,anonymizer,entity,sector,accuracy\n";
  for (const auto& row : rows) {
    out += row.transformer + ',' + row.anonymizer + ',' + row.entity + ',' + row.sector + ',' +
           (row.accuracy ? detail::fixed(*row.accuracy, 4) : std::string("NA")) + '\n';
  }
  return out;
}

inline std::vector<OccupancyRow> parse_occupancy_csv(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  std::size_t line_no = 0;
  std::vector<OccupancyRow> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1) {
      if (line != "transformer,anonymizer,entity,sector,accuracy") throw ParseError(1, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 5) throw ParseError(line_no, "expected 5 fields");
    OccupancyRow row{f[0], f[1], f[2], f[3], std::nullopt};
    if (f[4] != "NA") {
      try {
        row.accuracy = std::stod(f[4]);
      } catch (const std::exception&) {
        throw ParseError(line_no, "bad accuracy '" + f[4] + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string shortlist_csv(const ExperimentResults& r) {
  std::string out = "anonymizer,entity,male_pct,female_pct\n";
  for (const auto& key : r.expected_cells) {
    const auto& s = r.shortlists.at(key);
    out += key.anonymizer + ',' + key.entity + ',' + detail::fixed(100.0 * s.male_fraction, 2) + ',' +
           detail::fixed(100.0 * s.female_fraction, 2) + '\n';
  }
  return out;
}

inline nlohmann::ordered_json results_to_json(const ExperimentResults& r) {
  nlohmann::ordered_json j;
  j["transformer"] = r.transformer;
  j["config"] = r.config;
  auto cells = nlohmann::ordered_json::array();
  for (const auto& key : r.expected_cells) {
    nlohmann::ordered_json c;
    c["anonymizer"] = key.anonymizer;
    c["entity"] = key.entity;
    if (auto it = r.occupancy.find(key); it != r.occupancy.end()) {
      nlohmann::ordered_json acc;
      for (Group g : kAllGroups) {
        const auto& a = it->second[group_index(g)];
        acc[std::string(group_name(g))] = a ? nlohmann::ordered_json(*a) : nlohmann::ordered_json(nullptr);
      }
      c["occupancy"] = acc;
    }
    if (auto it = r.shortlists.find(key); it != r.shortlists.end()) c["shortlist"] = shortlist_to_json(it->second);
    if (auto it = r.anonymization.find(key); it != r.anonymization.end())
      c["anonymization"] = detail::stats_to_json(it->second);
    cells.push_back(std::move(c));
  }
  j["cells"] = std::move(cells);
  auto curves = nlohmann::ordered_json::object();
  for (const auto& [name, curve] : r.curves) {
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : curve.points) pts.push_back({p.epoch, p.split, p.metric, p.value});
    curves[name] = std::move(pts);
  }
  j["curves"] = std::move(curves);
  return j;
}

inline ExperimentResults results_from_json(const nlohmann::json& j) {
  ExperimentResults r;
  try {
    r.transformer = j.at("transformer").get<std::string>();
    r.config = j.at("config");
    for (const auto& c : j.at("cells")) {
      GridKey key{c.at("anonymizer").get<std::string>(), c.at("entity").get<std::string>()};
      r.expected_cells.push_back(key);
      if (c.contains("occupancy")) {
        SectorAccuracy acc;
        for (Group g : kAllGroups) {
          const auto& v = c["occupancy"].at(std::string(group_name(g)));
          if (!v.is_null()) acc[group_index(g)] = v.get<double>();
        }
        r.occupancy[key] = acc;
      }
      if (c.contains("shortlist")) r.shortlists[key] = shortlist_from_json(c["shortlist"]);
      if (c.contains("anonymization")) {
        const auto& s = c["anonymization"];
        AnonymizationStats st;
        st.documents = s.at("documents").get<std::size_t>();
        st.total_words = s.at("total_words").get<std::size_t>();
        st.masked_spans = s.at("masked_spans").get<std::size_t>();
        st.masked_words = s.at("masked_words").get<std::size_t>();
        st.masked_fraction = s.at("masked_fraction").get<double>();
        st.spans_by_label = s.at("spans_by_label").get<std::map<std::string, std::size_t>>();
        r.anonymization[key] = st;
      }
    }
    for (const auto& [name, pts] : j.at("curves").items()) {
      LearningCurve curve;
      for (const auto& p : pts)
        curve.points.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::string>(), p.at(2).get<std::string>(),
                                p.at(3).get<double>()});
      r.curves[name] = std::move(curve);
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("results bundle: ") + e.what());
  }
  return r;
}

enum class ReportFormat { Csv, Json };

// Writes the report directory; byte-identical for identical inputs. The
// inputs are not modified.
inline std::vector<std::filesystem::path> emit_report(const ExperimentResults& results,
                                                      const std::filesystem::path& report_dir,
                                                      const std::vector<ReportFormat>& formats = {ReportFormat::Csv,
                                                                                                  ReportFormat::Json}) {
  const auto missing = missing_cells(results);
  if (!missing.empty()) {
    std::string msg = "incomplete results, missing:";
    for (const auto& m : missing) msg += " " + m;
    throw IncompleteResultsError(msg);
  }
  std::error_code ec;
  std::filesystem::create_directories(report_dir / "curves", ec);
  if (ec) throw IoError("cannot create " + report_dir.string() + ": " + ec.message());

  const auto wants = [&](ReportFormat f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::filesystem::path& rel, const std::string& content) {
    detail::write_file(report_dir / rel, content);
    written.push_back(rel);
  };

  if (wants(ReportFormat::Csv)) {
    write("occupancy.csv", occupancy_csv(occupancy_rows(results)));
    write("shortlist.csv", shortlist_csv(results));
    for (const auto& [name, curve] : results.curves) write(std::filesystem::path("curves") / (name + ".csv"), curve_to_csv(curve));
  }

  nlohmann::ordered_json anon = nlohmann::ordered_json::object();
  for (const auto& [key, stats] : results.anonymization)
    anon[key.anonymizer + "/" + key.entity] = detail::stats_to_json(stats);
  write("anonymization.json", anon.dump(2) + "\n");

  const std::string fingerprint = config_fingerprint(results.config);
  nlohmann::ordered_json manifest;
  manifest["run_id"] = "run-" + fingerprint;
  manifest["config_fingerprint"] = fingerprint;
  auto files = nlohmann::ordered_json::array();
  for (const auto& p : written) files.push_back(p.generic_string());
  manifest["files"] = std::move(files);
  if (wants(ReportFormat::Json)) manifest["results"] = results_to_json(results);
  write("manifest.json", manifest.dump(2) + "\n");
  return written;
}

}  // namespace pba
