#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <bht/core.hpp>

// Experiment configs as flat `key = value` text: `#` comments, dotted
// lowercase keys with units spelled in the name (t_ramp_ns), comma lists.
// A list on a sweepable scalar field fans the run out into a grid, cross
// product across fields; list-valued fields consume their list whole.
// Parsing and validation collect every defect instead of stopping at the
// first, so a caller can report them all at once.

namespace bht {

enum class FieldKind { number, number_list, text, toggle };

struct FieldSpec {
  std::string key;
  FieldKind kind = FieldKind::number;
  std::string fallback;  // default, written as it would appear in a file
  std::string help;
  bool sweepable = false;
  bool integer = false;
  double min = std::numeric_limits<double>::lowest();
  double max = std::numeric_limits<double>::max();
  std::vector<std::string> choices;  // text fields: allowed values
};

using Schema = std::vector<FieldSpec>;

struct ConfigEntry {
  std::string key;
  std::vector<std::string> values;
};

struct ConfigDoc {
  std::vector<ConfigEntry> entries;  // file order

  const ConfigEntry* find(std::string_view key) const {
    for (const auto& e : entries)
      if (e.key == key) return &e;
    return nullptr;
  }

  void set(std::string key, std::vector<std::string> values) {
    for (auto& e : entries)
      if (e.key == key) {
        e.values = std::move(values);
        return;
      }
    entries.push_back({std::move(key), std::move(values)});
  }

  void erase(std::string_view key) {
    for (auto it = entries.begin(); it != entries.end(); ++it)
      if (it->key == key) {
        entries.erase(it);
        return;
      }
  }
};

inline std::string config_trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// "a, b, c" -> {"a", "b", "c"}; pure whitespace -> {}.  Interior empties
// ("a,,b") are kept so validation can flag them.
inline std::vector<std::string> split_values(std::string_view raw) {
  if (config_trim(raw).empty()) return {};
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = raw.find(',', start);
    out.push_back(config_trim(raw.substr(
        start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline bool valid_config_key(std::string_view key) {
  if (key.empty() || key.front() == '.' || key.back() == '.') return false;
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') ||
                    c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

inline std::optional<double> parse_number(std::string_view token) {
  double v = 0;
  const char* last = token.data() + token.size();
  const auto res = std::from_chars(token.data(), last, v);
  if (res.ec != std::errc() || res.ptr != last) return std::nullopt;
  return v;
}

inline ConfigDoc parse_config_text(const std::string& text,
                                   std::vector<std::string>& problems) {
  ConfigDoc doc;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string body = config_trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string at = "line " + std::to_string(ln) + ": ";
    if (eq == std::string::npos) {
      problems.push_back(at + "expected key = value, got '" + body + "'");
      continue;
    }
    const std::string key = config_trim(std::string_view(body).substr(0, eq));
    if (!valid_config_key(key)) {
      problems.push_back(at + "bad key '" + key + "'");
      continue;
    }
    if (doc.find(key)) {
      problems.push_back(at + "duplicate key '" + key + "'");
      continue;
    }
    doc.entries.push_back(
        {key, split_values(std::string_view(body).substr(eq + 1))});
  }
  return doc;
}

// One --set assignment, same value syntax as a config line.
inline void apply_override(ConfigDoc& doc, const std::string& assignment,
                           std::vector<std::string>& problems) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    problems.push_back("override '" + assignment + "': expected key=value");
    return;
  }
  const std::string key =
      config_trim(std::string_view(assignment).substr(0, eq));
  if (!valid_config_key(key)) {
    problems.push_back("override '" + assignment + "': bad key '" + key +
                       "'");
    return;
  }
  doc.set(key, split_values(std::string_view(assignment).substr(eq + 1)));
}

namespace detail {

inline std::string render_range(const FieldSpec& f) {
  std::ostringstream os;
  os << "[" << f.min << ", " << f.max << "]";
  return os.str();
}

inline void check_number_token(const FieldSpec& f, const std::string& token,
                               std::vector<std::string>& problems) {
  const std::string head = "field '" + f.key + "': ";
  const auto v = parse_number(token);
  if (!v) {
    problems.push_back(head + "'" + token + "' is not a number");
    return;
  }
  if (*v < f.min || *v > f.max)
    problems.push_back(head + token + " out of range " + render_range(f));
  else if (f.integer && *v != std::round(*v))
    problems.push_back(head + token + " must be an integer");
}

}  // namespace detail

inline std::vector<std::string> validate_config(const ConfigDoc& doc,
                                                const Schema& schema) {
  std::vector<std::string> problems;
  auto spec_for = [&](const std::string& key) -> const FieldSpec* {
    for (const auto& f : schema)
      if (f.key == key) return &f;
    return nullptr;
  };
  for (const auto& e : doc.entries) {
    const FieldSpec* f = spec_for(e.key);
    const std::string head = "field '" + e.key + "': ";
    if (!f) {
      problems.push_back("unknown field '" + e.key + "'");
      continue;
    }
    bool holes = false;
    for (const auto& t : e.values)
      if (t.empty()) holes = true;
    if (holes) {
      problems.push_back(head + "empty list entry");
      continue;
    }
    if (e.values.empty()) {
      if (f->kind != FieldKind::number_list)
        problems.push_back(head + "empty value");
      continue;
    }
    switch (f->kind) {
      case FieldKind::number:
        if (e.values.size() > 1 && !f->sweepable)
          problems.push_back(head + "takes one value");
        for (const auto& t : e.values)
          detail::check_number_token(*f, t, problems);
        break;
      case FieldKind::number_list:
        for (const auto& t : e.values)
          detail::check_number_token(*f, t, problems);
        break;
      case FieldKind::text: {
        if (e.values.size() > 1) problems.push_back(head + "takes one value");
        const std::string& v = e.values.front();
        if (!f->choices.empty()) {
          bool ok = false;
          for (const auto& c : f->choices) ok = ok || c == v;
          if (!ok) {
            std::string list;
            for (const auto& c : f->choices)
              list += (list.empty() ? "" : ", ") + c;
            problems.push_back(head + "'" + v + "' must be one of " + list);
          }
        }
        break;
      }
      case FieldKind::toggle:
        if (e.values.size() > 1) problems.push_back(head + "takes one value");
        if (e.values.front() != "on" && e.values.front() != "off")
          problems.push_back(head + "must be on or off");
        break;
    }
  }
  return problems;
}

// One fully resolved run point: every schema field bound, defaults filled,
// sweep lists collapsed to single values.
struct ConfigPoint {
  std::vector<std::pair<const FieldSpec*, std::vector<std::string>>> fields;

  const std::vector<std::string>& tokens(std::string_view key) const {
    for (const auto& f : fields)
      if (f.first->key == key) return f.second;
    throw DomainError("config: no field '" + std::string(key) + "'");
  }

  const std::string& text(std::string_view key) const {
    return tokens(key).at(0);
  }

  double num(std::string_view key) const {
    return parse_number(text(key)).value();
  }

  std::vector<double> nums(std::string_view key) const {
    std::vector<double> out;
    for (const auto& t : tokens(key)) out.push_back(parse_number(t).value());
    return out;
  }

  bool toggle(std::string_view key) const { return text(key) == "on"; }
};

// Cross product over sweep lists, ordered by schema position so the grid
// layout is stable.  Pointers alias the schema; keep it alive.
inline std::vector<ConfigPoint> expand_config(const ConfigDoc& doc,
                                              const Schema& schema) {
  std::vector<ConfigPoint> points(1);
  for (const auto& f : schema) {
    const ConfigEntry* e = doc.find(f.key);
    const std::vector<std::string> values =
        e ? e->values : split_values(f.fallback);
    std::vector<std::vector<std::string>> alts;
    if (f.kind == FieldKind::number && f.sweepable && values.size() > 1)
      for (const auto& v : values) alts.push_back({v});
    else
      alts.push_back(values);
    std::vector<ConfigPoint> next;
    next.reserve(points.size() * alts.size());
    for (const auto& p : points)
      for (const auto& a : alts) {
        ConfigPoint q = p;
        q.fields.emplace_back(&f, a);
        next.push_back(std::move(q));
      }
    points = std::move(next);
  }
  return points;
}

// Keys the document actually sweeps, in schema order.
inline std::vector<std::string> swept_keys(const ConfigDoc& doc,
                                           const Schema& schema) {
  std::vector<std::string> keys;
  for (const auto& f : schema) {
    const ConfigEntry* e = doc.find(f.key);
    if (e && f.kind == FieldKind::number && f.sweepable &&
        e->values.size() > 1)
      keys.push_back(f.key);
  }
  return keys;
}

}  // namespace bht
