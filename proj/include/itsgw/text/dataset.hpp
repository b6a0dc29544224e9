#pragma once

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "itsgw/core/types.hpp"
#include "itsgw/model/train.hpp"
#include "itsgw/text/tokenizer.hpp"

namespace itsgw::text {

inline constexpr std::string_view kLabelColumn = "label";

struct TabularDataset {
  RecordSchema schema;
  std::vector<SensorRecord> records;
};

namespace detail {

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    std::string_view cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.front() == ' ' || cell.front() == '\t')) cell.remove_prefix(1);
    while (!cell.empty() && (cell.back() == ' ' || cell.back() == '\t' || cell.back() == '\r')) cell.remove_suffix(1);
    cells.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

/// Resolves a label cell: a class name from the schema, or a plain index.
inline std::size_t parse_label(std::string_view cell, const LabelSchema& labels) {
  if (auto idx = labels.index_of(std::string(cell))) return *idx;
  std::size_t v = 0;
  auto [end, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || end != cell.data() + cell.size())
    fail(errc::label_out_of_range, "unknown label '" + std::string(cell) + "'");
  if (v >= labels.class_names.size()) fail(errc::label_out_of_range, "label index " + std::string(cell) + " out of range");
  return v;
}

/// CSV with a header row. A column named "label" (optional) holds class names
/// or indices; every other column becomes a field, numeric when all of its
/// cells parse as numbers and categorical otherwise.
inline TabularDataset parse_tabular_csv(std::string_view text, const LabelSchema& labels) {
  std::vector<std::vector<std::string>> rows;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    rows.push_back(detail::split_csv_line(line));
  }
  if (rows.empty()) fail(errc::empty_dataset, "CSV has no header");
  const auto header = rows.front();
  std::optional<std::size_t> label_col;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == kLabelColumn) label_col = c;

  TabularDataset ds;
  ds.schema.class_count = labels.class_names.size();
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (label_col == c) continue;
    if (header[c].empty()) fail(errc::schema_mismatch, "empty column name in CSV header");
    bool numeric = true;
    for (std::size_t r = 1; r < rows.size() && numeric; ++r)
      numeric = c < rows[r].size() && detail::parse_double(rows[r][c]).has_value();
    ds.schema.fields.push_back({header[c], numeric ? FieldKind::numeric : FieldKind::categorical});
  }
  if (ds.schema.fields.empty()) fail(errc::empty_schema, "CSV has no feature columns");

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size())
      fail(errc::schema_mismatch, "CSV line " + std::to_string(r + 1) + " has " + std::to_string(row.size()) + " cells, header has " +
                                      std::to_string(header.size()));
    SensorRecord rec;
    rec.fields = ds.schema.fields;
    for (std::size_t c = 0, f = 0; c < row.size(); ++c) {
      if (label_col == c) {
        rec.label = parse_label(row[c], labels);
        continue;
      }
      if (ds.schema.fields[f++].kind == FieldKind::numeric)
        rec.values.emplace_back(*detail::parse_double(row[c]));
      else
        rec.values.emplace_back(row[c]);
    }
    validate_record(ds.schema, rec);
    ds.records.push_back(std::move(rec));
  }
  if (ds.records.empty()) fail(errc::empty_dataset, "CSV has a header but no rows");
  return ds;
}

inline TabularDataset load_tabular_csv(const std::string& path, const LabelSchema& labels) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(errc::io_error, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_tabular_csv(ss.str(), labels);
}

inline model::ModelInput to_model_input(const EncodedText& enc) { return {enc.ids, {}, enc.mask}; }

inline model::ModelInput record_input(const SensorRecord& record, const Vocab& vocab, std::size_t max_len) {
  return to_model_input(encode(serialize_record(record), vocab, max_len));
}

inline std::vector<std::string> record_corpus(std::span<const SensorRecord> records) {
  std::vector<std::string> corpus;
  corpus.reserve(records.size());
  for (const auto& r : records) corpus.push_back(serialize_record(r));
  return corpus;
}

/// Encodes labeled records; unlabeled records are rejected.
inline std::vector<model::LabeledInput> encode_labeled(std::span<const SensorRecord> records, const Vocab& vocab, std::size_t max_len) {
  std::vector<model::LabeledInput> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.label) fail(errc::label_out_of_range, "record has no label");
    out.push_back({record_input(r, vocab, max_len), *r.label});
  }
  return out;
}

}  // namespace itsgw::text
