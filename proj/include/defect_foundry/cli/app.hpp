#pragma once

// Argument parsing for the defect_foundry executable. Every config key of a
// command is also a flag: bin_ps becomes --bin-ps. Values are parsed as JSON
// when the key holds a number, boolean or array, and taken verbatim for
// string keys.

#include <cstdio>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "defect_foundry/cli/commands.hpp"

namespace defect_foundry::cli {

namespace detail {

inline std::string flag_for(const std::string& key) {
  std::string f = "--";
  for (char c : key) f.push_back(c == '_' ? '-' : c);
  return f;
}

/// Extra spellings used in the documentation.
inline std::string aliases_for(const std::string& key) {
  if (key == "fluence_per_cm2") return ",--fluence";
  if (key == "out_dir") return ",--out";
  return "";
}

/// Positional arguments per command, in order.
inline std::vector<std::string> positionals(const std::string& command) {
  if (command == "g2") return {"stream0", "stream1"};
  if (command == "simulate" || command == "odmr") return {};
  return {"input"};
}

inline json parse_flag_value(const json& declared, const std::string& key, const std::string& text) {
  if (declared.is_string()) return text;
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    // Optional keys (null default) take either a number or a string.
    if (declared.is_null()) return text;
    throw InputError("--" + key + ": cannot parse '" + text + "'");
  }
}

}  // namespace detail

/// Parses argv, runs the selected command and returns the exit code.
inline int run(int argc, const char* const* argv) {
  CLI::App app{"Simulation and analysis of single-defect emitter measurements", "defect_foundry"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  struct Bound {
    CLI::App* sub = nullptr;
    std::string config_path;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;
  };
  std::map<std::string, Bound> bound;

  for (const auto& spec : commands()) {
    Bound& b = bound[spec.name];
    b.sub = app.add_subcommand(spec.name, spec.help);
    b.sub->add_option("--config", b.config_path, "JSON config document");
    const json defaults = spec.defaults();
    for (const auto& key : detail::positionals(spec.name)) {
      b.options[key] = b.sub->add_option(key, b.values[key], key);
    }
    for (const auto& [key, value] : defaults.items()) {
      const auto pos = detail::positionals(spec.name);
      if (std::find(pos.begin(), pos.end(), key) != pos.end()) continue;
      std::string desc = "default " + value.dump();
      b.options[key] = b.sub->add_option(detail::flag_for(key) + detail::aliases_for(key), b.values[key], desc);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  for (auto& [name, b] : bound) {
    if (!b.sub->parsed()) continue;
    try {
      const json defaults = find_command(name).defaults();
      json overrides = json::object();
      for (const auto& [key, opt] : b.options) {
        if (opt->count() == 0) continue;
        overrides[key] = detail::parse_flag_value(defaults.at(key), key, b.values.at(key));
      }
      std::optional<fs::path> cfg;
      if (!b.config_path.empty()) cfg = b.config_path;
      return execute(name, cfg, overrides);
    } catch (const InputError& e) {
      std::fprintf(stderr, "defect_foundry %s: input error: %s\n", name.c_str(), e.what());
      return 1;
    } catch (const AnalysisError& e) {
      std::fprintf(stderr, "defect_foundry %s: analysis failed: %s\n", name.c_str(), e.what());
      return 2;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "defect_foundry %s: analysis failed: %s\n", name.c_str(), e.what());
      return 2;
    }
  }
  return 1;
}

}  // namespace defect_foundry::cli
