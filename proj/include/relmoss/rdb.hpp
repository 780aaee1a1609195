// SPDX-License-Identifier: Apache-2.0
#pragma once

// Relational database ingestion: a JSON schema manifest plus one CSV file per
// table. Keys are compared as whitespace-trimmed strings. Unparsable numeric
// and timestamp cells load as nulls and are counted in `warnings`.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"
#include "relmoss/csv.hpp"

namespace relmoss {

class RdbError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Modality { Numeric, Categorical, Timestamp, PrimaryKey, ForeignKey };

inline std::string to_string(Modality m) {
  switch (m) {
    case Modality::Numeric: return "numeric";
    case Modality::Categorical: return "categorical";
    case Modality::Timestamp: return "timestamp";
    case Modality::PrimaryKey: return "primary_key";
    case Modality::ForeignKey: return "foreign_key";
  }
  return "?";
}

inline Modality parse_modality(const std::string& s) {
  if (s == "numeric") return Modality::Numeric;
  if (s == "categorical") return Modality::Categorical;
  if (s == "timestamp") return Modality::Timestamp;
  if (s == "primary_key") return Modality::PrimaryKey;
  if (s == "foreign_key") return Modality::ForeignKey;
  throw RdbError("unknown column modality '" + s + "'");
}

struct ColumnSpec {
  std::string name;
  Modality modality = Modality::Numeric;
  std::optional<std::string> fk_target;

  bool operator==(const ColumnSpec&) const = default;
};

struct TableSchema {
  std::string name;
  std::string file;  // CSV path relative to the data directory
  std::vector<ColumnSpec> columns;

  std::size_t pk_column() const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c].modality == Modality::PrimaryKey) return c;
    throw RdbError("table " + name + " has no primary key");
  }

  std::optional<std::size_t> column_index(const std::string& col) const {
    for (std::size_t c = 0; c < columns.size(); ++c)
      if (columns[c].name == col) return c;
    return std::nullopt;
  }

  bool operator==(const TableSchema&) const = default;
};

// Null, numeric, timestamp (epoch seconds) or string (categorical token or key).
using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

inline bool is_null(const Cell& c) { return std::holds_alternative<std::monostate>(c); }

struct RawEntity {
  std::vector<Cell> cells;
  bool operator==(const RawEntity&) const = default;
};

struct Link {
  std::size_t source_table = 0;
  std::size_t fk_column = 0;
  std::size_t target_table = 0;
  bool operator==(const Link&) const = default;
};

struct LoadWarnings {
  std::size_t unparsable_numeric = 0;
  std::size_t unparsable_timestamp = 0;
};

struct RelationalDatabase {
  std::vector<TableSchema> schemas;
  std::vector<std::vector<RawEntity>> rows;
  std::vector<Link> links;
  LoadWarnings warnings;

  std::size_t table_count() const { return schemas.size(); }

  std::size_t table_index(const std::string& name) const {
    for (std::size_t t = 0; t < schemas.size(); ++t)
      if (schemas[t].name == name) return t;
    throw RdbError("unknown table '" + name + "'");
  }

  std::size_t total_rows() const {
    std::size_t n = 0;
    for (const auto& r : rows) n += r.size();
    return n;
  }

  std::string link_name(const Link& l) const {
    return schemas[l.source_table].name + "." + schemas[l.source_table].columns[l.fk_column].name +
           "->" + schemas[l.target_table].name;
  }

  // Row index of the entity whose PK equals `key`; built lazily by index_keys().
  std::optional<std::size_t> find_pk(std::size_t table, const std::string& key) const {
    const auto& idx = pk_index_.at(table);
    auto it = idx.find(key);
    if (it == idx.end()) return std::nullopt;
    return it->second;
  }

  // Rebuild PK lookup tables; throws on duplicate or null keys.
  void index_keys() {
    pk_index_.assign(schemas.size(), {});
    for (std::size_t t = 0; t < schemas.size(); ++t) {
      const std::size_t pk = schemas[t].pk_column();
      for (std::size_t r = 0; r < rows[t].size(); ++r) {
        const Cell& c = rows[t][r].cells[pk];
        if (is_null(c)) throw RdbError("null primary key in table " + schemas[t].name + " row " + std::to_string(r));
        const std::string& key = std::get<std::string>(c);
        if (!pk_index_[t].emplace(key, r).second) {
          throw RdbError("duplicate primary key '" + key + "' in table " + schemas[t].name);
        }
      }
    }
  }

  bool operator==(const RelationalDatabase& o) const {
    return schemas == o.schemas && rows == o.rows && links == o.links;
  }

 private:
  std::vector<std::unordered_map<std::string, std::size_t>> pk_index_;
};

// ---------------------------------------------------------------------------
// Schema manifest

inline std::vector<TableSchema> parse_manifest(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tables") || !j["tables"].is_array()) {
    throw RdbError("manifest: expected an object with a 'tables' array");
  }
  std::vector<TableSchema> out;
  for (const auto& tj : j["tables"]) {
    TableSchema ts;
    ts.name = tj.at("name").get<std::string>();
    ts.file = tj.at("file").get<std::string>();
    std::size_t pk_count = 0;
    for (const auto& cj : tj.at("columns")) {
      ColumnSpec cs;
      cs.name = cj.at("name").get<std::string>();
      cs.modality = parse_modality(cj.at("modality").get<std::string>());
      if (cj.contains("fk_target")) cs.fk_target = cj["fk_target"].get<std::string>();
      if (cs.fk_target.has_value() != (cs.modality == Modality::ForeignKey)) {
        throw RdbError("manifest: column " + ts.name + "." + cs.name +
                       ": fk_target must be present exactly for foreign_key columns");
      }
      if (ts.column_index(cs.name)) throw RdbError("manifest: duplicate column " + ts.name + "." + cs.name);
      pk_count += cs.modality == Modality::PrimaryKey;
      ts.columns.push_back(std::move(cs));
    }
    if (pk_count != 1) throw RdbError("manifest: table " + ts.name + " must have exactly one primary_key column");
    for (const auto& prev : out)
      if (prev.name == ts.name) throw RdbError("manifest: duplicate table " + ts.name);
    out.push_back(std::move(ts));
  }
  return out;
}

inline nlohmann::json manifest_json(const std::vector<TableSchema>& schemas) {
  nlohmann::json tables = nlohmann::json::array();
  for (const auto& ts : schemas) {
    nlohmann::json cols = nlohmann::json::array();
    for (const auto& c : ts.columns) {
      nlohmann::json cj{{"name", c.name}, {"modality", to_string(c.modality)}};
      if (c.fk_target) cj["fk_target"] = *c.fk_target;
      cols.push_back(std::move(cj));
    }
    tables.push_back({{"name", ts.name}, {"file", ts.file}, {"columns", std::move(cols)}});
  }
  return {{"tables", std::move(tables)}};
}

inline std::vector<Link> derive_links(const std::vector<TableSchema>& schemas) {
  std::vector<Link> links;
  for (std::size_t t = 0; t < schemas.size(); ++t) {
    for (std::size_t c = 0; c < schemas[t].columns.size(); ++c) {
      const auto& col = schemas[t].columns[c];
      if (col.modality != Modality::ForeignKey) continue;
      std::optional<std::size_t> target;
      for (std::size_t u = 0; u < schemas.size(); ++u)
        if (schemas[u].name == *col.fk_target) target = u;
      if (!target) {
        throw RdbError("foreign key " + schemas[t].name + "." + col.name + " targets unknown table '" +
                       *col.fk_target + "'");
      }
      links.push_back(Link{t, c, *target});
    }
  }
  return links;
}

// ---------------------------------------------------------------------------
// Cell parsing

inline Cell parse_cell(const csv::Field& f, Modality m, LoadWarnings& w) {
  const std::string_view raw = f.text;
  const std::string_view s = csv::trim(raw);
  if (!f.quoted && s.empty()) return std::monostate{};
  switch (m) {
    case Modality::PrimaryKey:
    case Modality::ForeignKey:
      return std::string(s);
    case Modality::Categorical:
      return std::string(raw);
    case Modality::Numeric: {
      double v = 0.0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
        ++w.unparsable_numeric;
        return std::monostate{};
      }
      return v;
    }
    case Modality::Timestamp: {
      std::int64_t v = 0;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size() || s.empty()) {
        ++w.unparsable_timestamp;
        return std::monostate{};
      }
      return v;
    }
  }
  return std::monostate{};
}

inline std::string format_cell(const Cell& c) {
  if (std::holds_alternative<double>(c)) return csv::format_double(std::get<double>(c));
  if (std::holds_alternative<std::int64_t>(c)) return std::to_string(std::get<std::int64_t>(c));
  if (std::holds_alternative<std::string>(c)) return std::get<std::string>(c);
  return {};
}

inline std::vector<RawEntity> load_table_csv(const std::filesystem::path& path, const TableSchema& schema,
                                             LoadWarnings& warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RdbError("cannot open table file " + path.string());
  csv::Record rec;
  std::size_t line = 0;
  if (!csv::read_record(in, rec, line)) throw RdbError(path.string() + ": missing header row");
  if (rec.size() != schema.columns.size()) {
    throw RdbError(path.string() + ": header has " + std::to_string(rec.size()) + " columns, schema declares " +
                   std::to_string(schema.columns.size()));
  }
  for (std::size_t c = 0; c < rec.size(); ++c) {
    if (rec[c].text != schema.columns[c].name) {
      throw RdbError(path.string() + ": header column " + std::to_string(c) + " is '" + rec[c].text +
                     "', expected '" + schema.columns[c].name + "'");
    }
  }
  std::vector<RawEntity> rows;
  while (csv::read_record(in, rec, line)) {
    if (rec.size() == 1 && rec[0].text.empty() && !rec[0].quoted) continue;  // blank line
    if (rec.size() != schema.columns.size()) {
      throw RdbError(path.string() + ":" + std::to_string(line) + ": malformed row with " +
                     std::to_string(rec.size()) + " cells, expected " + std::to_string(schema.columns.size()));
    }
    RawEntity e;
    e.cells.reserve(rec.size());
    for (std::size_t c = 0; c < rec.size(); ++c) e.cells.push_back(parse_cell(rec[c], schema.columns[c].modality, warnings));
    rows.push_back(std::move(e));
  }
  return rows;
}

inline RelationalDatabase load_database(const std::filesystem::path& manifest_path,
                                        const std::filesystem::path& data_dir) {
  std::ifstream in(manifest_path);
  if (!in) throw RdbError("cannot open manifest " + manifest_path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw RdbError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
  }
  RelationalDatabase db;
  try {
    db.schemas = parse_manifest(j);
  } catch (const nlohmann::json::exception& e) {
    throw RdbError(std::string("manifest: ") + e.what());
  }
  db.links = derive_links(db.schemas);
  for (const auto& ts : db.schemas) {
    try {
      db.rows.push_back(load_table_csv(data_dir / ts.file, ts, db.warnings));
    } catch (const csv::ParseError& e) {
      throw RdbError((data_dir / ts.file).string() + ": " + e.what());
    }
  }
  db.index_keys();
  return db;
}

// Writes manifest + CSVs so that load_database(dir/manifest_name, dir) reproduces db.
inline void save_database(const RelationalDatabase& db, const std::filesystem::path& dir,
                          const std::string& manifest_name = "manifest.json") {
  std::filesystem::create_directories(dir);
  {
    std::ofstream m(dir / manifest_name);
    if (!m) throw RdbError("cannot write manifest in " + dir.string());
    m << manifest_json(db.schemas).dump(2) << '\n';
  }
  for (std::size_t t = 0; t < db.schemas.size(); ++t) {
    const auto& ts = db.schemas[t];
    std::ofstream out(dir / ts.file, std::ios::binary);
    if (!out) throw RdbError("cannot write " + (dir / ts.file).string());
    for (std::size_t c = 0; c < ts.columns.size(); ++c) {
      if (c) out << ',';
      csv::write_field(out, ts.columns[c].name);
    }
    out << '\n';
    for (const auto& row : db.rows[t]) {
      for (std::size_t c = 0; c < row.cells.size(); ++c) {
        if (c) out << ',';
        const Cell& cell = row.cells[c];
        if (!is_null(cell)) csv::write_field(out, format_cell(cell), std::holds_alternative<std::string>(cell) &&
                                                                         std::get<std::string>(cell).empty());
      }
      out << '\n';
    }
  }
}

// ---------------------------------------------------------------------------
// Integrity

struct LinkIntegrity {
  std::size_t dangling = 0;
  std::size_t null = 0;
  bool operator==(const LinkIntegrity&) const = default;
};

struct IntegrityReport {
  std::map<std::string, LinkIntegrity> per_link;

  std::size_t total_dangling() const {
    std::size_t n = 0;
    for (const auto& [k, v] : per_link) n += v.dangling;
    return n;
  }

  nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : per_link) j[k] = {{"dangling", v.dangling}, {"null", v.null}};
    return j;
  }
};

inline IntegrityReport validate_referential_integrity(const RelationalDatabase& db) {
  IntegrityReport rep;
  for (const Link& l : db.links) {
    LinkIntegrity li;
    for (const auto& row : db.rows[l.source_table]) {
      const Cell& c = row.cells[l.fk_column];
      if (is_null(c)) {
        ++li.null;
      } else if (!db.find_pk(l.target_table, std::get<std::string>(c))) {
        ++li.dangling;
      }
    }
    rep.per_link[db.link_name(l)] = li;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Imbalance

struct ImbalanceStats {
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double ratio = 1.0;  // #majority / #minority
  bool single_class = false;
};

inline ImbalanceStats compute_imbalance_stats(std::span<const int> labels) {
  if (labels.empty()) throw std::invalid_argument("compute_imbalance_stats: empty label set");
  ImbalanceStats s;
  for (int y : labels) {
    if (y == 1) ++s.n_pos;
    else if (y == 0) ++s.n_neg;
    else throw std::invalid_argument("compute_imbalance_stats: labels must be 0 or 1");
  }
  const std::size_t lo = std::min(s.n_pos, s.n_neg), hi = std::max(s.n_pos, s.n_neg);
  if (lo == 0) {
    s.single_class = true;
    s.ratio = std::numeric_limits<double>::infinity();
  } else {
    s.ratio = static_cast<double>(hi) / static_cast<double>(lo);
  }
  return s;
}

}  // namespace relmoss
