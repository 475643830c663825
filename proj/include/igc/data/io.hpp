#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

#include <json.hpp>

#include "igc/data/dataset.hpp"

namespace igc::io {

using nlohmann::json;

inline json matrix_to_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows; ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

inline Matrix matrix_from_json(const json& j, std::size_t rows, std::size_t cols, const std::string& field) {
  if (!j.is_array() || j.size() != rows) throw ConfigError(field, "expected " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols)
      throw ConfigError(field + "[" + std::to_string(r) + "]", "expected " + std::to_string(cols) + " columns");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

inline json dims_to_json(const Dims& d) { return {{"y", d.y}, {"x", d.x}, {"a", d.a}, {"s", d.s}}; }
inline Dims dims_from_json(const json& j) {
  return Dims{j.at("y").get<std::size_t>(), j.at("x").get<std::size_t>(), j.at("a").get<std::size_t>(),
              j.at("s").get<std::size_t>()};
}

inline json trajectory_to_json(const Trajectory& tr) {
  return {{"id", tr.id},
          {"T", tr.length()},
          {"Y", matrix_to_json(tr.Y)},
          {"X", matrix_to_json(tr.X)},
          {"A", matrix_to_json(tr.A)},
          {"static", tr.statics},
          {"true_propensities", matrix_to_json(tr.true_propensities)},
          {"U", tr.U}};
}

inline Trajectory trajectory_from_json(const json& j, const Dims& d) {
  Trajectory tr;
  tr.id = j.at("id").get<std::uint64_t>();
  const auto T = j.at("T").get<std::size_t>();
  const std::string p = "trajectory " + std::to_string(tr.id) + ".";
  tr.Y = matrix_from_json(j.at("Y"), T, d.y, p + "Y");
  tr.X = matrix_from_json(j.at("X"), T, d.x, p + "X");
  tr.A = matrix_from_json(j.at("A"), T, d.a, p + "A");
  tr.statics = j.at("static").get<std::vector<double>>();
  tr.true_propensities = matrix_from_json(j.at("true_propensities"), T, d.a, p + "true_propensities");
  tr.U = j.at("U").get<double>();
  return tr;
}

/// Writes to `path.partial`, then renames, so an interrupted run never leaves a complete-looking file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os << content;
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

/// First line {"meta": {...}}, then one trajectory per line.
inline std::string dataset_to_jsonl(const Dataset& d, json meta) {
  meta["dims"] = dims_to_json(d.dims);
  meta["n"] = d.size();
  std::string out = json{{"meta", meta}}.dump() + "\n";
  for (const auto& tr : d.items) out += trajectory_to_json(tr).dump() + "\n";
  return out;
}

inline std::pair<Dataset, json> dataset_from_jsonl(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("dataset", "empty file");
  json head = json::parse(line);
  if (!head.contains("meta")) throw ConfigError("dataset", "first line must be a {\"meta\": ...} record");
  json meta = head["meta"];
  Dataset d;
  d.dims = dims_from_json(meta.at("dims"));
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    d.items.push_back(trajectory_from_json(json::parse(line), d.dims));
  }
  d.validate();
  return {std::move(d), std::move(meta)};
}

inline json query_to_json(const CapoQuery& q) {
  json j = {{"trajectory_id", q.trajectory_id}, {"t", q.t}, {"a_seq", matrix_to_json(q.a_seq)}};
  j["oracle"] = q.oracle.empty() ? json(nullptr) : json(q.oracle);
  j["oracle_se"] = q.oracle_se;
  j["oracle_method"] = q.oracle_method;
  return j;
}

inline CapoQuery query_from_json(const json& j) {
  CapoQuery q;
  q.trajectory_id = j.at("trajectory_id").get<std::uint64_t>();
  q.t = j.at("t").get<std::size_t>();
  const auto& a = j.at("a_seq");
  const std::size_t rows = a.size(), cols = rows ? a[0].size() : 0;
  q.a_seq = matrix_from_json(a, rows, cols, "a_seq");
  if (!j.at("oracle").is_null()) q.oracle = j.at("oracle").get<std::vector<double>>();
  q.oracle_se = j.value("oracle_se", 0.0);
  q.oracle_method = j.value("oracle_method", "");
  return q;
}

inline std::string queries_to_jsonl(const std::vector<CapoQuery>& qs, json meta) {
  meta["n"] = qs.size();
  std::string out = json{{"meta", meta}}.dump() + "\n";
  for (const auto& q : qs) out += query_to_json(q).dump() + "\n";
  return out;
}

inline std::pair<std::vector<CapoQuery>, json> queries_from_jsonl(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  json meta;
  std::vector<CapoQuery> qs;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    if (first && j.contains("meta")) {
      meta = j["meta"];
    } else {
      qs.push_back(query_from_json(j));
    }
    first = false;
  }
  return {std::move(qs), std::move(meta)};
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

/// One row per (trajectory, step): id,t,Y0..,X0..,A0..,static0..,p0..,U
inline std::string dataset_to_csv(const Dataset& d) {
  std::ostringstream os;
  os << "id,t";
  for (std::size_t c = 0; c < d.dims.y; ++c) os << ",Y" << c;
  for (std::size_t c = 0; c < d.dims.x; ++c) os << ",X" << c;
  for (std::size_t c = 0; c < d.dims.a; ++c) os << ",A" << c;
  for (std::size_t c = 0; c < d.dims.s; ++c) os << ",static" << c;
  for (std::size_t c = 0; c < d.dims.a; ++c) os << ",p" << c;
  os << ",U\n";
  for (const auto& tr : d.items)
    for (std::size_t t = 0; t < tr.length(); ++t) {
      os << tr.id << ',' << t;
      for (double v : tr.Y.row(t)) os << ',' << format_double(v);
      for (double v : tr.X.row(t)) os << ',' << format_double(v);
      for (double v : tr.A.row(t)) os << ',' << format_double(v);
      for (double v : tr.statics) os << ',' << format_double(v);
      for (double v : tr.true_propensities.row(t)) os << ',' << format_double(v);
      os << ',' << format_double(tr.U) << '\n';
    }
  return os.str();
}

/// FNV-1a over the canonical (sorted-key, compact) JSON dump, as 16 hex digits.
inline std::string config_hash(const json& j) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : j.dump()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace igc::io
