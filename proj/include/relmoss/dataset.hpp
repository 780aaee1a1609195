// SPDX-License-Identifier: Apache-2.0
#pragma once

// A labelled entity-classification task over a relational database: the
// target table, one label and split tag per target row, the derived graph
// and cached relational signatures.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "relmoss/csv.hpp"
#include "relmoss/graph.hpp"
#include "relmoss/rdb.hpp"
#include "relmoss/rel_syn.hpp"

namespace relmoss {

enum class Split : int { None = -1, Train = 0, Val = 1, Test = 2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
    case Split::None: break;
  }
  return "none";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "val") return Split::Val;
  if (s == "test") return Split::Test;
  if (s.empty() || s == "none") return Split::None;
  throw RdbError("unknown split '" + s + "'");
}

struct TaskLabels {
  std::vector<int> label;    // per target row; -1 when unlabelled
  std::vector<Split> split;  // per target row
};

// labels CSV: entity_id,label,split
inline TaskLabels read_labels_csv(const std::filesystem::path& path, const RelationalDatabase& db,
                                  std::size_t target) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RdbError("cannot open labels file " + path.string());
  TaskLabels t;
  t.label.assign(db.rows[target].size(), -1);
  t.split.assign(db.rows[target].size(), Split::None);
  csv::Record rec;
  std::size_t line = 0;
  if (!csv::read_record(in, rec, line) || rec.size() != 3 || rec[0].text != "entity_id" || rec[1].text != "label" ||
      rec[2].text != "split") {
    throw RdbError(path.string() + ": header must be entity_id,label,split");
  }
  while (csv::read_record(in, rec, line)) {
    if (rec.size() != 3) throw RdbError(path.string() + ":" + std::to_string(line) + ": expected 3 cells");
    const std::string key(csv::trim(rec[0].text));
    const auto row = db.find_pk(target, key);
    if (!row) throw RdbError(path.string() + ":" + std::to_string(line) + ": unknown entity '" + key + "'");
    const std::string lab(csv::trim(rec[1].text));
    if (lab != "0" && lab != "1") throw RdbError(path.string() + ":" + std::to_string(line) + ": label must be 0 or 1");
    t.label[*row] = lab == "1" ? 1 : 0;
    t.split[*row] = parse_split(std::string(csv::trim(rec[2].text)));
  }
  return t;
}

inline void write_labels_csv(const std::filesystem::path& path, const RelationalDatabase& db, std::size_t target,
                             const TaskLabels& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RdbError("cannot write " + path.string());
  out << "entity_id,label,split\n";
  const std::size_t pk = db.schemas[target].pk_column();
  for (std::size_t r = 0; r < t.label.size(); ++r) {
    if (t.label[r] < 0) continue;
    csv::write_field(out, std::get<std::string>(db.rows[target][r].cells[pk]));
    out << ',' << t.label[r] << ',' << to_string(t.split[r]) << '\n';
  }
}

struct Dataset {
  RelationalDatabase db;
  HeteroGraph graph;
  std::size_t target = 0;
  TaskLabels labels;
  SignatureTable signatures;  // every row of the target table

  Dataset(RelationalDatabase d, std::size_t target_table, TaskLabels l)
      : db(std::move(d)), graph(build_graph(db)), target(target_table), labels(std::move(l)) {
    if (labels.label.size() != db.rows[target].size() || labels.split.size() != db.rows[target].size()) {
      throw RdbError("labels do not cover the target table");
    }
    signatures = compute_signatures(graph, target);
  }

  std::vector<std::size_t> rows_in(Split s) const {
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < labels.split.size(); ++r)
      if (labels.split[r] == s && labels.label[r] >= 0) out.push_back(r);
    return out;
  }

  std::vector<int> labels_of(const std::vector<std::size_t>& rows) const {
    std::vector<int> out;
    out.reserve(rows.size());
    for (std::size_t r : rows) out.push_back(labels.label[r]);
    return out;
  }

  // Per-table training masks: target rows in the train split, every row elsewhere.
  std::vector<std::vector<bool>> train_masks() const {
    std::vector<std::vector<bool>> m(db.table_count());
    m[target].assign(db.rows[target].size(), false);
    for (std::size_t r : rows_in(Split::Train)) m[target][r] = true;
    return m;
  }
};

}  // namespace relmoss
