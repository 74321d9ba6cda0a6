#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace gdlab::lab {

/// Invalid spec content; `field` names the offending key (or "line N").
class SpecError : public std::invalid_argument {
 public:
  SpecError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

/// Experiment description read from a `key = value` text file. Lists are
/// comma-separated, `#` starts a comment. Every key must belong to the known
/// schema and values are normalized on parse, so the canonical form (and its
/// hash) ignores ordering, spacing and number formatting.
class ExperimentSpec {
 public:
  static ExperimentSpec parse(const std::string& text);
  static ExperimentSpec load(const std::string& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value);

  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<std::int64_t> get_int_list(const std::string& key,
                                         const std::vector<std::int64_t>& fallback) const;
  std::vector<std::string> get_string_list(const std::string& key,
                                           const std::vector<std::string>& fallback) const;
  std::optional<double> get_optional_double(const std::string& key) const;

  /// Sorted `key = value` lines.
  std::string canonical() const;
  /// Lower-case hex SHA-256 of canonical().
  std::string hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Keys accepted in spec files.
const std::vector<std::string>& spec_keys();

std::string sha256_hex(const std::string& data);

}  // namespace gdlab::lab
