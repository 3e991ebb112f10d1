#include "dwiratio/scheme_io.hpp"

#include <charconv>
#include <cmath>
#include <vector>

#include "dwiratio/error.hpp"
#include "dwiratio/file_util.hpp"

namespace dwiratio {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

std::vector<double> parse_row(std::string_view line, const std::string& what) {
  std::vector<double> values;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && is_space(line[i])) ++i;
    if (i == line.size()) break;
    std::size_t j = i;
    while (j < line.size() && !is_space(line[j])) ++j;
    const std::string_view token = line.substr(i, j - i);
    double v = 0.0;
    const char* first = token.data();
    if (!token.empty() && token.front() == '+') ++first;
    const auto res = std::from_chars(first, token.data() + token.size(), v);
    if (res.ec != std::errc() || res.ptr != token.data() + token.size() || !std::isfinite(v)) {
      throw Error(ErrorCode::ParseError, what + ": '" + std::string(token) + "' is not a number");
    }
    values.push_back(v);
    i = j;
  }
  return values;
}

std::vector<std::vector<double>> parse_rows(std::string_view text, const std::string& what) {
  std::vector<std::vector<double>> rows;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t end = std::min(text.find('\n', start), text.size());
    auto row = parse_row(text.substr(start, end - start), what);
    if (!row.empty()) rows.push_back(std::move(row));
    start = end + 1;
  }
  return rows;
}

}  // namespace

GradientScheme parse_scheme(std::string_view bval_text, std::string_view bvec_text) {
  const auto bval_rows = parse_rows(bval_text, "bval");
  std::vector<double> bvals;
  for (const auto& r : bval_rows) bvals.insert(bvals.end(), r.begin(), r.end());
  if (bvals.empty()) throw Error(ErrorCode::ParseError, "bval: no values");

  const auto bvec = parse_rows(bvec_text, "bvec");
  if (bvec.size() != 3) {
    throw Error(ErrorCode::ColumnCountMismatch, "bvec: expected 3 rows, found " + std::to_string(bvec.size()));
  }
  for (std::size_t r = 0; r < 3; ++r) {
    if (bvec[r].size() != bvals.size()) {
      throw Error(ErrorCode::ColumnCountMismatch, "bvec row " + std::to_string(r) + " has " +
                                                      std::to_string(bvec[r].size()) + " columns, bval has " +
                                                      std::to_string(bvals.size()));
    }
  }

  std::vector<GradientEntry> entries;
  entries.reserve(bvals.size());
  for (std::size_t i = 0; i < bvals.size(); ++i) {
    const double b = bvals[i];
    if (b < 0.0) throw Error(ErrorCode::ParseError, "bval column " + std::to_string(i) + " is negative");
    const double x = bvec[0][i], y = bvec[1][i], z = bvec[2][i];
    const double norm = std::sqrt(x * x + y * y + z * z);
    if (b > 0.0 && std::abs(norm - 1.0) > kDirectionNormTolerance) {
      throw Error(ErrorCode::NonUnitDirection,
                  "bvec column " + std::to_string(i) + " has norm " + std::to_string(norm));
    }
    entries.push_back({b, norm > 0.0 ? UnitDirection(x, y, z) : UnitDirection()});
  }
  return GradientScheme(std::move(entries));
}

GradientScheme read_scheme(const std::filesystem::path& bval_path, const std::filesystem::path& bvec_path) {
  return parse_scheme(read_file(bval_path), read_file(bvec_path));
}

SchemeText format_scheme(const GradientScheme& scheme) {
  SchemeText out;
  std::array<std::string, 3> rows;
  for (std::size_t i = 0; i < scheme.size(); ++i) {
    const auto& e = scheme[i];
    const char* sep = i == 0 ? "" : " ";
    out.bval += sep + format_double(e.b);
    for (std::size_t a = 0; a < 3; ++a) rows[a] += sep + format_double(e.b > 0.0 ? e.dir[a] : 0.0);
  }
  out.bval += '\n';
  for (const auto& r : rows) out.bvec += r + '\n';
  return out;
}

void write_scheme(const GradientScheme& scheme, const std::filesystem::path& bval_path,
                  const std::filesystem::path& bvec_path) {
  const auto text = format_scheme(scheme);
  atomic_write_file(bval_path, text.bval);
  atomic_write_file(bvec_path, text.bvec);
}

}  // namespace dwiratio
