#pragma once

#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>

#include <json.hpp>

#include <bht/core.hpp>
#include <bht/protocols.hpp>

// File emission for protocol runs: comma separated CSV with a header row,
// and JSON metadata.  Numbers render via to_chars, so output is locale
// independent and round trips bit exact.

namespace bht {

inline std::string render_number(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline void write_csv(std::ostream& out, const Table& t) {
  for (std::size_t i = 0; i < t.columns.size(); ++i)
    out << (i ? "," : "") << t.columns[i];
  out << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i)
      out << (i ? "," : "") << render_number(row[i]);
    out << '\n';
  }
}

inline void write_csv_file(const std::filesystem::path& path,
                           const Table& t) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  write_csv(out, t);
}

inline Table spectrum_table(const FoldedSpectrum& s) {
  Table t;
  t.columns = {"f_mhz", "amplitude"};
  for (std::size_t b = 0; b < s.frequency.size(); ++b)
    t.rows.push_back({to_mhz(s.frequency[b]), s.amplitude[b]});
  return t;
}

inline void write_json_file(const std::filesystem::path& path,
                            const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DomainError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace bht
