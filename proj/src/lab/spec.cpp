#include "gdlab/lab/spec.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace gdlab::lab {

namespace {

enum class Kind { string, integer, real, boolean, int_list, string_list };

const std::map<std::string, Kind>& schema() {
  static const std::map<std::string, Kind> s = {
      {"experiment", Kind::string},     {"arch", Kind::string_list},
      {"activation", Kind::string},     {"depth", Kind::int_list},
      {"width", Kind::int_list},        {"n", Kind::integer},
      {"d", Kind::integer},             {"pixels", Kind::integer},
      {"filter", Kind::integer},        {"c_res", Kind::real},
      {"seed", Kind::integer},          {"seeds", Kind::int_list},
      {"trials", Kind::integer},        {"iterations", Kind::integer},
      {"eta", Kind::real},              {"eta_scale", Kind::real},
      {"cadence", Kind::integer},       {"dense_until", Kind::integer},
      {"lambda_margin", Kind::real},    {"divergence_factor", Kind::real},
      {"quad_nodes", Kind::integer},    {"eps", Kind::real},
      {"perturbation", Kind::real},     {"duplicate_inputs", Kind::boolean},
  };
  return s;
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::int64_t parse_int(const std::string& key, const std::string& text) {
  std::int64_t v = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw SpecError(key, "expected an integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end || text.empty() || !std::isfinite(v)) {
    throw SpecError(key, "expected a finite number, got '" + text + "'");
  }
  return v;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string normalize(const std::string& key, const std::string& raw) {
  const auto it = schema().find(key);
  if (it == schema().end()) throw SpecError(key, "unknown key");
  const std::string value = trim(raw);
  if (value.empty()) throw SpecError(key, "empty value");
  switch (it->second) {
    case Kind::string:
      return value;
    case Kind::integer:
      return std::to_string(parse_int(key, value));
    case Kind::real:
      return format_real(parse_real(key, value));
    case Kind::boolean: {
      std::string lower = value;
      std::transform(lower.begin(), lower.end(), lower.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (lower == "true" || lower == "yes" || lower == "1") return "true";
      if (lower == "false" || lower == "no" || lower == "0") return "false";
      throw SpecError(key, "expected true or false, got '" + value + "'");
    }
    case Kind::int_list:
    case Kind::string_list: {
      std::string out;
      for (const auto& item : split_list(value)) {
        if (item.empty()) throw SpecError(key, "empty list element");
        if (!out.empty()) out += ",";
        out += it->second == Kind::int_list ? std::to_string(parse_int(key, item)) : item;
      }
      return out;
    }
  }
  return value;
}

}  // namespace

const std::vector<std::string>& spec_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, kind] : schema()) k.push_back(name);
    return k;
  }();
  return keys;
}

ExperimentSpec ExperimentSpec::parse(const std::string& text) {
  ExperimentSpec spec;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw SpecError("line " + std::to_string(number), "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw SpecError("line " + std::to_string(number), "missing key");
    if (spec.has(key)) throw SpecError(key, "duplicate key");
    spec.values_[key] = normalize(key, line.substr(eq + 1));
  }
  return spec;
}

ExperimentSpec ExperimentSpec::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open spec file '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

void ExperimentSpec::set(const std::string& key, const std::string& value) {
  values_[key] = normalize(key, value);
}

std::string ExperimentSpec::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::int64_t ExperimentSpec::get_int(const std::string& key, std::int64_t fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_int(key, it->second);
}

double ExperimentSpec::get_double(const std::string& key, double fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : parse_real(key, it->second);
}

std::optional<double> ExperimentSpec::get_optional_double(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return parse_real(key, it->second);
}

bool ExperimentSpec::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second == "true";
}

std::vector<std::int64_t> ExperimentSpec::get_int_list(
    const std::string& key, const std::vector<std::int64_t>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::int64_t> out;
  for (const auto& item : split_list(it->second)) out.push_back(parse_int(key, item));
  return out;
}

std::vector<std::string> ExperimentSpec::get_string_list(
    const std::string& key, const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : split_list(it->second);
}

std::string ExperimentSpec::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xF];
  }
  return out;
}

std::string ExperimentSpec::hash() const { return sha256_hex(canonical()); }

}  // namespace gdlab::lab
