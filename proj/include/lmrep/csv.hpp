#pragma once

// Minimal RFC 4180 reader/writer: quoted fields, embedded commas, doubled
// quotes, CRLF or LF line endings.

#include "lmrep/core.hpp"

#include <string>
#include <vector>

namespace lmrep::csv {

using Row = std::vector<std::string>;

struct Table {
  Row header;
  std::vector<Row> rows;

  std::ptrdiff_t column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<std::ptrdiff_t>(i);
    return -1;
  }
};

inline std::vector<Row> parse_rows(std::string_view text) {
  std::vector<Row> rows;
  Row row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      in_quotes = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') continue;
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (in_quotes) throw Error("csv: unterminated quoted field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

inline Table parse(std::string_view text) {
  auto rows = parse_rows(text);
  if (rows.empty()) throw Error("csv: missing header");
  Table table;
  table.header = std::move(rows.front());
  table.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (table.rows[r].size() != table.header.size())
      throw Error("csv: row " + std::to_string(r + 2) + " has " + std::to_string(table.rows[r].size()) +
                  " fields, expected " + std::to_string(table.header.size()));
  }
  return table;
}

inline Table read(const std::filesystem::path& path) { return parse(read_file(path)); }

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline void append_row(std::string& out, const Row& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) out.push_back(',');
    out += quote(row[i]);
  }
  out.push_back('\n');
}

inline std::string format(const Table& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) append_row(out, row);
  return out;
}

}  // namespace lmrep::csv
