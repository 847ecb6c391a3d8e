#pragma once

#include <charconv>
#include <cmath>
#include <limits>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lqd/evaluation/report.hpp"

namespace lqd::io {

class CsvError : public std::invalid_argument {
 public:
  CsvError(std::size_t line, const std::string& what)
      : std::invalid_argument("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline const char* kScoreHeader = "image_id,method,score,k_used,M,label,split";

inline std::string scores_csv(const std::vector<evaluation::LabeledScore>& rows) {
  std::string out = std::string(kScoreHeader) + "\r\n";
  for (const auto& r : rows) {
    out += csv_field(r.image_id) + ',' + csv_field(r.method) + ',' + (r.error ? "nan" : format_double(r.score)) + ',' +
           std::to_string(r.k_used) + ',' + format_double(r.high_freq_mean) + ',' +
           std::string(corruptions::label_name(r.label)) + ',' + csv_field(r.split) + "\r\n";
  }
  return out;
}

/// RFC 4180 records; `line` in errors is the 1-based physical line where the record starts.
inline std::vector<std::pair<std::size_t, std::vector<std::string>>> parse_csv(std::string_view text) {
  std::vector<std::pair<std::size_t, std::vector<std::string>>> records;
  std::vector<std::string> fields;
  std::string cur;
  std::size_t line = 1, start = 1;
  bool quoted = false, field_started = false;
  auto end_field = [&] {
    fields.push_back(std::move(cur));
    cur.clear();
    field_started = false;
  };
  auto end_record = [&] {
    end_field();
    if (!(fields.size() == 1 && fields[0].empty())) records.emplace_back(start, std::move(fields));
    fields.clear();
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        if (c == '\n') ++line;
        cur += c;
      }
      continue;
    }
    if (c == '"') {
      if (field_started || !cur.empty()) throw CsvError(line, "quote inside unquoted field");
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      continue;
    } else if (c == '\n') {
      end_record();
      start = ++line;
    } else {
      cur += c;
    }
  }
  if (quoted) throw CsvError(start, "unterminated quoted field");
  if (!cur.empty() || !fields.empty() || field_started) end_record();
  return records;
}

inline double parse_double_field(const std::string& s, std::size_t line, const char* what) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  double v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw CsvError(line, std::string("bad ") + what + " '" + s + "'");
  return v;
}

inline std::vector<evaluation::LabeledScore> parse_scores_csv(std::string_view text) {
  const auto recs = parse_csv(text);
  if (recs.empty()) throw CsvError(1, "empty file");
  std::string header;
  for (std::size_t i = 0; i < recs[0].second.size(); ++i) header += (i ? "," : "") + recs[0].second[i];
  if (header != kScoreHeader) throw CsvError(recs[0].first, "unexpected header '" + header + "'");
  std::vector<evaluation::LabeledScore> out;
  for (std::size_t r = 1; r < recs.size(); ++r) {
    const auto& [line, f] = recs[r];
    if (f.size() != 7) throw CsvError(line, "expected 7 fields, got " + std::to_string(f.size()));
    evaluation::LabeledScore s;
    s.image_id = f[0];
    s.method = f[1];
    s.score = parse_double_field(f[2], line, "score");
    if (!std::isfinite(s.score)) s.error = "score missing";
    std::size_t k = 0;
    const auto kr = std::from_chars(f[3].data(), f[3].data() + f[3].size(), k);
    if (kr.ec != std::errc() || kr.ptr != f[3].data() + f[3].size()) throw CsvError(line, "bad k_used '" + f[3] + "'");
    s.k_used = k;
    s.high_freq_mean = parse_double_field(f[4], line, "M");
    const auto lbl = corruptions::parse_label(f[5]);
    if (!lbl) throw CsvError(line, "bad label '" + f[5] + "'");
    s.label = *lbl;
    s.split = f[6];
    if (s.image_id.empty() || s.method.empty()) throw CsvError(line, "empty image_id or method");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace lqd::io
