#include "linkedmf/cli/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string_view>
#include <vector>

namespace linkedmf::cli {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view s) {
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  return lower == "na" || lower == "nan";
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw Error(ErrorKind::Data, path.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

LoadedMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Data, "cannot open " + path.string());

  std::vector<std::vector<double>> rows;
  std::vector<std::vector<bool>> missing;
  char delim = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (delim == 0) delim = line.find('\t') != std::string::npos ? '\t' : (line.find(',') != std::string::npos ? ',' : '\n');

    std::vector<double> values;
    std::vector<bool> gone;
    std::string_view rest(line);
    while (true) {
      const std::size_t cut = rest.find(delim);
      const std::string_view tok = trim(rest.substr(0, cut));
      if (is_missing_token(tok)) {
        values.push_back(0.0);
        gone.push_back(true);
      } else {
        double v = 0.0;
        const char* first = tok.data();
        const char* last = tok.data() + tok.size();
        if (!tok.empty() && *first == '+') ++first;
        const auto [ptr, ec] = std::from_chars(first, last, v);
        if (tok.empty() || ec != std::errc() || ptr != last || !std::isfinite(v)) {
          fail(path, line_no, "non-numeric token '" + std::string(tok) + "'");
        }
        values.push_back(v);
        gone.push_back(false);
      }
      if (cut == std::string_view::npos) break;
      rest.remove_prefix(cut + 1);
    }
    if (!rows.empty() && values.size() != rows.front().size()) {
      fail(path, line_no,
           "ragged row: " + std::to_string(values.size()) + " fields, expected " + std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(values));
    missing.push_back(std::move(gone));
  }
  if (rows.empty()) throw Error(ErrorKind::Data, path.string() + ": no data rows");

  const auto m = static_cast<Index>(rows.size());
  const auto n = static_cast<Index>(rows.front().size());
  LoadedMatrix out{Matrix(m, n), Mask(m, n)};
  for (Index r = 0; r < m; ++r) {
    for (Index c = 0; c < n; ++c) {
      out.values(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
      out.mask(r, c) = missing[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
  }
  if (out.mask.all()) throw Error(ErrorKind::Data, path.string() + ": every entry is missing");
  return out;
}

void write_matrix(const std::filesystem::path& path, const Matrix& values, const Mask* mask) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Data, "cannot write " + path.string());
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      if (c) out << '\t';
      if (mask && (*mask)(r, c)) {
        out << "NA";
      } else {
        out << format_double(values(r, c));
      }
    }
    out << '\n';
  }
  if (!out) throw Error(ErrorKind::Data, "failed writing " + path.string());
}

}  // namespace linkedmf::cli
