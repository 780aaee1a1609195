// SPDX-License-Identifier: Apache-2.0
#pragma once

// Modality-specific feature encoding.
//
// Per column channels:
//   numeric     -> 2 (z-score, missing flag); nulls impute to the train mean
//   timestamp   -> 3 (min-max scaled, sin/cos of day-of-week); nulls -> (0.5, 0, 0)
//   categorical -> learnable embedding of width d_cat; unseen tokens and nulls
//                  map to a dedicated OOV row
// Key columns carry no features. The concatenation is projected to d by a
// per-table linear layer followed by ReLU.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include "json.hpp"
#include "relmoss/params.hpp"
#include "relmoss/rdb.hpp"
#include "relmoss/tensor.hpp"

namespace relmoss {

struct NumericStats {
  double mean = 0.0;
  double std = 1.0;
};

struct TimestampStats {
  std::int64_t min = 0;
  std::int64_t max = 0;
};

struct CategoricalVocab {
  std::vector<std::string> tokens;  // index order = first appearance in training rows
  std::unordered_map<std::string, std::size_t> index;

  std::size_t oov() const { return tokens.size(); }
  std::size_t rows() const { return tokens.size() + 1; }
  std::size_t lookup(const Cell& c) const {
    if (!std::holds_alternative<std::string>(c)) return oov();
    auto it = index.find(std::get<std::string>(c));
    return it == index.end() ? oov() : it->second;
  }
};

struct ModalityEncoderSpec {
  std::size_t column = 0;
  Modality modality = Modality::Numeric;
  NumericStats numeric;
  TimestampStats timestamp;
  CategoricalVocab vocab;
};

// Fitted statistics for one table.
struct TableFeatureSpec {
  std::string table;
  std::vector<ModalityEncoderSpec> columns;  // non-key columns, schema order
  bool empty_fit = false;                    // no training rows were available

  std::size_t dense_width() const {
    std::size_t w = 0;
    for (const auto& c : columns) {
      if (c.modality == Modality::Numeric) w += 2;
      else if (c.modality == Modality::Timestamp) w += 3;
    }
    return w;
  }
  std::size_t categorical_count() const {
    std::size_t n = 0;
    for (const auto& c : columns) n += c.modality == Modality::Categorical;
    return n;
  }
  std::size_t concat_width(std::size_t d_cat) const { return dense_width() + categorical_count() * d_cat; }
};

inline double day_of_week(std::int64_t epoch_seconds) {
  std::int64_t days = epoch_seconds / 86400;
  if (epoch_seconds < 0 && epoch_seconds % 86400 != 0) --days;
  return static_cast<double>(((days + 4) % 7 + 7) % 7);  // 1970-01-01 was a Thursday
}

// Statistics from rows where mask[row] is true. A table without any masked
// rows gets identity statistics and `empty_fit` set.
inline TableFeatureSpec fit_table_statistics(const TableSchema& schema, const std::vector<RawEntity>& rows,
                                             const std::vector<bool>& mask) {
  TableFeatureSpec spec;
  spec.table = schema.name;
  std::size_t used = 0;
  for (std::size_t r = 0; r < rows.size(); ++r) used += mask.at(r);
  spec.empty_fit = used == 0;

  for (std::size_t c = 0; c < schema.columns.size(); ++c) {
    const Modality m = schema.columns[c].modality;
    if (m == Modality::PrimaryKey || m == Modality::ForeignKey) continue;
    ModalityEncoderSpec col;
    col.column = c;
    col.modality = m;
    if (m == Modality::Numeric) {
      // Two-pass mean / population std over non-null training cells.
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!mask[r]) continue;
        if (const double* v = std::get_if<double>(&rows[r].cells[c])) {
          sum += *v;
          ++n;
        }
      }
      col.numeric.mean = n ? sum / static_cast<double>(n) : 0.0;
      double ss = 0.0;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!mask[r]) continue;
        if (const double* v = std::get_if<double>(&rows[r].cells[c])) ss += (*v - col.numeric.mean) * (*v - col.numeric.mean);
      }
      const double sd = n ? std::sqrt(ss / static_cast<double>(n)) : 0.0;
      col.numeric.std = sd > 1e-12 ? sd : 1.0;
    } else if (m == Modality::Timestamp) {
      bool any = false;
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!mask[r]) continue;
        if (const std::int64_t* v = std::get_if<std::int64_t>(&rows[r].cells[c])) {
          if (!any) col.timestamp = {*v, *v};
          col.timestamp.min = std::min(col.timestamp.min, *v);
          col.timestamp.max = std::max(col.timestamp.max, *v);
          any = true;
        }
      }
    } else {
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (!mask[r]) continue;
        if (const std::string* v = std::get_if<std::string>(&rows[r].cells[c])) {
          if (col.vocab.index.emplace(*v, col.vocab.tokens.size()).second) col.vocab.tokens.push_back(*v);
        }
      }
    }
    spec.columns.push_back(std::move(col));
  }
  return spec;
}

// masks[t][row]; tables without a mask entry use every row.
inline std::vector<TableFeatureSpec> fit_statistics(const RelationalDatabase& db,
                                                    const std::vector<std::vector<bool>>& masks) {
  std::vector<TableFeatureSpec> out;
  for (std::size_t t = 0; t < db.table_count(); ++t) {
    std::vector<bool> m = t < masks.size() && !masks[t].empty() ? masks[t] : std::vector<bool>(db.rows[t].size(), true);
    out.push_back(fit_table_statistics(db.schemas[t], db.rows[t], m));
  }
  return out;
}

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense channels and categorical indices of one entity.
struct EntityFeatures {
  std::vector<double> dense;
  std::vector<std::size_t> categories;
};

inline EntityFeatures featurize(const TableFeatureSpec& spec, const RawEntity& row) {
  EntityFeatures f;
  f.dense.reserve(spec.dense_width());
  for (const auto& col : spec.columns) {
    if (col.column >= row.cells.size()) throw EncodeError("featurize: row has too few cells for " + spec.table);
    const Cell& cell = row.cells[col.column];
    switch (col.modality) {
      case Modality::Numeric:
        if (is_null(cell)) {
          f.dense.push_back(0.0);
          f.dense.push_back(1.0);
        } else if (const double* v = std::get_if<double>(&cell)) {
          f.dense.push_back((*v - col.numeric.mean) / col.numeric.std);
          f.dense.push_back(0.0);
        } else {
          throw EncodeError("featurize: non-numeric cell in numeric column of " + spec.table);
        }
        break;
      case Modality::Timestamp:
        if (is_null(cell)) {
          f.dense.insert(f.dense.end(), {0.5, 0.0, 0.0});
        } else if (const std::int64_t* v = std::get_if<std::int64_t>(&cell)) {
          const double span = static_cast<double>(col.timestamp.max - col.timestamp.min);
          const double scaled = span > 0 ? static_cast<double>(*v - col.timestamp.min) / span : 0.5;
          const double angle = 2.0 * std::numbers::pi * day_of_week(*v) / 7.0;
          f.dense.insert(f.dense.end(), {scaled, std::sin(angle), std::cos(angle)});
        } else {
          throw EncodeError("featurize: non-timestamp cell in timestamp column of " + spec.table);
        }
        break;
      case Modality::Categorical:
        if (!is_null(cell) && !std::holds_alternative<std::string>(cell)) {
          throw EncodeError("featurize: non-categorical cell in categorical column of " + spec.table);
        }
        f.categories.push_back(col.vocab.lookup(cell));
        break;
      default:
        break;
    }
  }
  return f;
}

// Learnable part of one table's encoder.
struct TableEncoder {
  TableFeatureSpec spec;
  std::size_t d_cat = 16;
  std::size_t dim = 128;
  std::vector<TensorPtr> embeddings;  // one per categorical column, (vocab + 1) x d_cat
  TensorPtr proj_w;                   // concat_width x dim
  TensorPtr proj_b;                   // 1 x dim
  std::vector<std::pair<TensorPtr, TensorPtr>> hidden;  // extra dim x dim layers when depth > 1

  std::size_t concat_width() const { return spec.concat_width(d_cat); }
};

inline TableEncoder make_table_encoder(ParameterStore& params, TableFeatureSpec spec, std::size_t d_cat,
                                       std::size_t dim, Rng& rng, std::size_t depth = 1) {
  if (depth == 0) throw std::invalid_argument("make_table_encoder: depth must be >= 1");
  TableEncoder enc;
  enc.d_cat = d_cat;
  enc.dim = dim;
  const std::string prefix = "enc." + spec.table + ".";
  std::size_t k = 0;
  for (const auto& col : spec.columns) {
    if (col.modality != Modality::Categorical) continue;
    enc.embeddings.push_back(params.add_normal(prefix + "emb" + std::to_string(k++), col.vocab.rows(), d_cat, 0.1, rng));
  }
  enc.spec = std::move(spec);
  enc.proj_w = params.add_glorot(prefix + "proj.w", std::max<std::size_t>(enc.concat_width(), 1), dim, rng);
  enc.proj_b = params.add(prefix + "proj.b", 1, dim);
  for (std::size_t l = 1; l < depth; ++l) {
    const std::string p = prefix + "hidden" + std::to_string(l);
    enc.hidden.emplace_back(params.add_glorot(p + ".w", dim, dim, rng), params.add(p + ".b", 1, dim));
  }
  return enc;
}

// Precomputed dense channels and category ids for every row of a table.
struct EncodedTable {
  std::size_t dense_width = 0;
  std::vector<double> dense;                    // rows x dense_width
  std::vector<std::vector<std::size_t>> cats;   // per categorical column: id per row
};

inline EncodedTable precompute_features(const TableFeatureSpec& spec, const std::vector<RawEntity>& rows) {
  EncodedTable et;
  et.dense_width = spec.dense_width();
  et.cats.resize(spec.categorical_count());
  et.dense.reserve(rows.size() * et.dense_width);
  for (const auto& row : rows) {
    EntityFeatures f = featurize(spec, row);
    et.dense.insert(et.dense.end(), f.dense.begin(), f.dense.end());
    for (std::size_t k = 0; k < f.categories.size(); ++k) et.cats[k].push_back(f.categories[k]);
  }
  return et;
}

// Encodes the given rows of a precomputed table: (n x dim).
inline Var encode_rows(Tape& tape, const TableEncoder& enc, const EncodedTable& table,
                       const std::vector<std::size_t>& row_ids) {
  const std::size_t n = row_ids.size();
  std::vector<Var> parts;
  if (table.dense_width > 0) {
    Tensor dense(n, table.dense_width);
    for (std::size_t i = 0; i < n; ++i)
      std::copy_n(table.dense.data() + row_ids[i] * table.dense_width, table.dense_width,
                  dense.values.data() + i * table.dense_width);
    parts.push_back(tape.constant(std::move(dense)));
  }
  for (std::size_t k = 0; k < enc.embeddings.size(); ++k) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = table.cats[k][row_ids[i]];
    parts.push_back(gather_rows(tape.leaf(enc.embeddings[k]), std::move(idx)));
  }
  // Feature-less tables feed a single zero channel, so only the bias matters.
  Var x = parts.empty() ? tape.constant(Tensor(n, 1)) : (parts.size() == 1 ? parts[0] : concat(parts));
  Var h = relu(add_bias(matmul(x, tape.leaf(enc.proj_w)), tape.leaf(enc.proj_b)));
  for (const auto& [w, b] : enc.hidden) h = relu(add_bias(matmul(h, tape.leaf(w)), tape.leaf(b)));
  return h;
}

// Encodes raw entities of the encoder's table: (n x dim).
inline Var encode_entities(Tape& tape, const TableEncoder& enc, const std::vector<RawEntity>& rows) {
  EncodedTable et = precompute_features(enc.spec, rows);
  std::vector<std::size_t> ids(rows.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = i;
  return encode_rows(tape, enc, et, ids);
}

// ---------------------------------------------------------------------------
// Serialisation of fitted statistics (stored in checkpoint metadata)

inline nlohmann::json feature_spec_json(const TableFeatureSpec& s) {
  nlohmann::json cols = nlohmann::json::array();
  for (const auto& c : s.columns) {
    nlohmann::json cj{{"column", c.column}, {"modality", to_string(c.modality)}};
    if (c.modality == Modality::Numeric) cj["mean"] = c.numeric.mean, cj["std"] = c.numeric.std;
    if (c.modality == Modality::Timestamp) cj["min"] = c.timestamp.min, cj["max"] = c.timestamp.max;
    if (c.modality == Modality::Categorical) cj["vocab"] = c.vocab.tokens;
    cols.push_back(std::move(cj));
  }
  return {{"table", s.table}, {"empty_fit", s.empty_fit}, {"columns", std::move(cols)}};
}

inline TableFeatureSpec feature_spec_from_json(const nlohmann::json& j) {
  TableFeatureSpec s;
  s.table = j.at("table");
  s.empty_fit = j.at("empty_fit");
  for (const auto& cj : j.at("columns")) {
    ModalityEncoderSpec c;
    c.column = cj.at("column");
    c.modality = parse_modality(cj.at("modality"));
    if (c.modality == Modality::Numeric) c.numeric = {cj.at("mean"), cj.at("std")};
    if (c.modality == Modality::Timestamp) c.timestamp = {cj.at("min"), cj.at("max")};
    if (c.modality == Modality::Categorical) {
      for (const auto& tj : cj.at("vocab")) {
        const std::string tok = tj.get<std::string>();
        c.vocab.index.emplace(tok, c.vocab.tokens.size());
        c.vocab.tokens.push_back(tok);
      }
    }
    s.columns.push_back(std::move(c));
  }
  return s;
}

}  // namespace relmoss
