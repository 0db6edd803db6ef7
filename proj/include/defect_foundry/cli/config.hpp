#pragma once

// Strict per-command JSON configuration.
//
// Every command declares its keys with default values. A config file may
// only use declared keys, and each value must have the declared JSON type.
// A null default marks an optional value (a path or a number). Command-line
// flags are applied on top, then the effective document is hashed into the
// run manifest.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/io.hpp"

namespace defect_foundry::cli {

using nlohmann::json;
namespace fs = std::filesystem;

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace detail {

inline const char* type_name(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

inline bool compatible(const json& declared, const json& given) {
  if (declared.is_null()) return given.is_null() || given.is_string() || given.is_number();
  if (declared.is_number()) {
    if (!given.is_number()) return false;
    // Integer keys (seeds, counts) must stay integral.
    if (declared.is_number_integer() && !given.is_number_integer()) return false;
    if (declared.is_number_unsigned() && given.is_number_integer() && given.get<std::int64_t>() < 0) return false;
    return true;
  }
  if (declared.is_array()) return given.is_array();
  return std::string_view(type_name(declared)) == type_name(given);
}

}  // namespace detail

class Config {
 public:
  Config(std::string command, json defaults) : command_(std::move(command)), doc_(std::move(defaults)) {}

  /// Overlays a config document; unknown keys and type mismatches are input errors.
  void merge(const json& overlay, const std::string& where) {
    if (!overlay.is_object()) throw InputError(where + ": config must be a JSON object");
    for (const auto& [key, value] : overlay.items()) set(key, value, where);
  }

  void merge_file(const fs::path& path) { merge(io::read_json(path), path.string()); }

  void set(const std::string& key, const json& value, const std::string& where = "flag") {
    if (!doc_.contains(key)) {
      throw InputError(where + ": unknown key '" + key + "' for command '" + command_ + "'");
    }
    if (!detail::compatible(doc_[key], value)) {
      const char* want = doc_[key].is_number_unsigned()  ? "non-negative integer"
                         : doc_[key].is_number_integer() ? "integer"
                                                          : detail::type_name(doc_[key]);
      throw InputError(where + ": key '" + key + "' expects " + want + ", got " + value.dump());
    }
    // Keep the declared numeric kind so re-serialization is stable.
    if (doc_[key].is_number_float() && value.is_number()) {
      doc_[key] = value.get<double>();
    } else {
      doc_[key] = value;
    }
    explicit_.push_back(key);
  }

  [[nodiscard]] bool was_set(const std::string& key) const {
    return std::find(explicit_.begin(), explicit_.end(), key) != explicit_.end();
  }

  [[nodiscard]] double num(const std::string& key) const { return doc_.at(key).get<double>(); }
  [[nodiscard]] std::uint64_t u64(const std::string& key) const { return doc_.at(key).get<std::uint64_t>(); }
  [[nodiscard]] bool flag(const std::string& key) const { return doc_.at(key).get<bool>(); }
  [[nodiscard]] std::string str(const std::string& key) const { return doc_.at(key).get<std::string>(); }

  [[nodiscard]] std::optional<std::string> path(const std::string& key) const {
    const json& v = doc_.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_string()) throw InputError("config key '" + key + "' must be a string");
    return v.get<std::string>();
  }

  [[nodiscard]] std::optional<double> opt_num(const std::string& key) const {
    const json& v = doc_.at(key);
    if (v.is_null()) return std::nullopt;
    if (!v.is_number()) throw InputError("config key '" + key + "' must be a number");
    return v.get<double>();
  }

  [[nodiscard]] std::vector<double> nums(const std::string& key) const {
    const json& v = doc_.at(key);
    std::vector<double> out;
    for (const auto& x : v) {
      if (!x.is_number()) throw InputError("config key '" + key + "' must be an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }

  [[nodiscard]] const json& doc() const { return doc_; }
  [[nodiscard]] const std::string& command() const { return command_; }

  /// Hash of the canonical (sorted-key, compact) effective config.
  [[nodiscard]] std::string hash() const { return hex64(fnv1a64(doc_.dump())); }

 private:
  std::string command_;
  json doc_;
  std::vector<std::string> explicit_;
};

}  // namespace defect_foundry::cli
