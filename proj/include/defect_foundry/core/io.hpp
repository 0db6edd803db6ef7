#pragma once

// File formats shared by the modules and the CLI:
//   time tags      CSV `channel,t_ps` + JSON sidecar {duration_ps, power_mw, seed, stream_id, label}
//   histograms     CSV `tau_ps,N_norm,raw_pairs`
//   images         CSV matrix (one row per line) or binary 16-bit PGM (P5, big-endian)
//   generic tables CSV with a fixed header, numeric cells
// All floating-point output uses 9 significant digits.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "defect_foundry/core/errors.hpp"
#include "defect_foundry/core/histogram.hpp"
#include "defect_foundry/core/image.hpp"
#include "defect_foundry/core/timetag.hpp"

namespace defect_foundry::io {

namespace fs = std::filesystem;
using nlohmann::json;

inline std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", x);
  return buf;
}

/// Rounds to 9 significant digits so JSON dumps stay golden-file stable.
/// Non-finite values become JSON null.
inline json json_number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return std::strtod(format_number(x).c_str(), nullptr);
}

inline json json_numbers(const std::vector<double>& xs) {
  json arr = json::array();
  for (double x : xs) arr.push_back(json_number(x));
  return arr;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
  if (!out) throw InputError("write failed for " + path.string());
}

inline json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": malformed JSON: " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

// ---------------------------------------------------------------- CSV tables

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

inline std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else if (c != '\r' && c != ' ' && c != '\t') {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

inline double parse_cell(const std::string& cell, const std::string& where, std::size_t line_no) {
  if (cell.empty()) throw InputError(where + ": line " + std::to_string(line_no) + ": empty cell");
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size()) {
    throw InputError(where + ": line " + std::to_string(line_no) + ": not a number: '" + cell + "'");
  }
  return v;
}

/// Parses CSV text whose first line must equal `expected_header` when given.
inline CsvTable parse_csv(std::string_view text, const std::vector<std::string>& expected_header,
                          const std::string& where = "csv") {
  CsvTable table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  bool have_header = false;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    const std::string_view line =
        text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    auto cells = split_csv_line(line);
    if (!have_header) {
      table.header = cells;
      have_header = true;
      if (!expected_header.empty() && cells != expected_header) {
        std::string want;
        for (const auto& h : expected_header) want += (want.empty() ? "" : ",") + h;
        throw InputError(where + ": line " + std::to_string(line_no) + ": expected header '" + want + "'");
      }
      continue;
    }
    if (cells.size() != table.header.size()) {
      throw InputError(where + ": line " + std::to_string(line_no) + ": expected " +
                       std::to_string(table.header.size()) + " columns, found " +
                       std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_cell(c, where, line_no));
    table.rows.push_back(std::move(row));
  }
  if (!have_header) throw InputError(where + ": missing header line");
  return table;
}

inline CsvTable read_csv(const fs::path& path, const std::vector<std::string>& expected_header) {
  return parse_csv(read_text(path), expected_header, path.string());
}

inline void write_csv(const fs::path& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::string text;
  for (std::size_t i = 0; i < header.size(); ++i) text += (i ? "," : "") + header[i];
  text += '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) text += (i ? "," : "") + format_number(row[i]);
    text += '\n';
  }
  write_text(path, text);
}

// ---------------------------------------------------------------- time tags

inline fs::path sidecar_path(const fs::path& csv_path) {
  fs::path p = csv_path;
  return p.replace_extension(".json");
}

inline json sidecar_json(const TimeTagStream& s) {
  return {{"duration_ps", s.duration()},
          {"power_mw", json_number(s.meta().power_mw)},
          {"seed", s.meta().seed},
          {"stream_id", s.meta().stream_id},
          {"label", s.meta().label}};
}

inline std::string timetag_csv(const TimeTagStream& s) {
  std::string text = "channel,t_ps\n";
  text.reserve(text.size() + s.size() * 16);
  char buf[48];
  for (const TimeTag& tag : s.tags()) {
    const int n = std::snprintf(buf, sizeof buf, "%u,%lld\n", static_cast<unsigned>(tag.channel),
                                static_cast<long long>(tag.t));
    text.append(buf, static_cast<std::size_t>(n));
  }
  return text;
}

inline void write_timetags(const fs::path& csv_path, const TimeTagStream& s) {
  write_text(csv_path, timetag_csv(s));
  write_json(sidecar_path(csv_path), sidecar_json(s));
}

/// Integer-exact parser for the tag CSV; errors carry the offending line number.
inline TimeTagStream read_timetags(const fs::path& csv_path) {
  const json side = read_json(sidecar_path(csv_path));
  AcquisitionMeta meta;
  Picoseconds duration = 0;
  try {
    for (const auto& [key, value] : side.items()) {
      if (key == "duration_ps") duration = value.get<Picoseconds>();
      else if (key == "power_mw") meta.power_mw = value.is_null() ? 0.0 : value.get<double>();
      else if (key == "seed") meta.seed = value.get<std::uint64_t>();
      else if (key == "stream_id") meta.stream_id = value.get<std::uint64_t>();
      else if (key == "label") meta.label = value.get<std::string>();
      else throw InputError(sidecar_path(csv_path).string() + ": unknown key '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InputError(sidecar_path(csv_path).string() + ": " + e.what());
  }

  const std::string text = read_text(csv_path);
  const std::string where = csv_path.string();
  std::vector<TimeTag> tags;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool header = false;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    if (!header) {
      if (line != "channel,t_ps") {
        throw InputError(where + ": line " + std::to_string(line_no) + ": expected header 'channel,t_ps'");
      }
      header = true;
      continue;
    }
    const std::size_t comma = line.find(',');
    auto fail = [&](const char* what) {
      throw InputError(where + ": line " + std::to_string(line_no) + ": " + what);
    };
    if (comma == std::string_view::npos || line.find(',', comma + 1) != std::string_view::npos) {
      fail("expected 2 columns");
    }
    const std::string ch_text(line.substr(0, comma));
    const std::string t_text(line.substr(comma + 1));
    char* end = nullptr;
    const long ch = std::strtol(ch_text.c_str(), &end, 10);
    if (ch_text.empty() || *end != '\0' || (ch != 0 && ch != 1)) fail("channel must be 0 or 1");
    const long long t = std::strtoll(t_text.c_str(), &end, 10);
    if (t_text.empty() || *end != '\0' || t < 0) fail("t_ps must be a non-negative integer");
    if (t > duration) fail("t_ps exceeds duration_ps");
    if (!tags.empty() && t < tags.back().t) fail("tags not sorted by time");
    tags.push_back({static_cast<std::uint8_t>(ch), static_cast<Picoseconds>(t)});
  }
  if (!header) throw InputError(where + ": missing header line");
  return {std::move(tags), duration, std::move(meta)};
}

// ---------------------------------------------------------------- histograms

inline void write_histogram(const fs::path& path, const CorrelationHistogram& h) {
  std::string text = "tau_ps,N_norm,raw_pairs\n";
  for (std::size_t i = 0; i < h.size(); ++i) {
    text += std::to_string(h.tau_ps(i)) + "," + format_number(h.values[i]) + "," +
            std::to_string(h.raw_pairs[i]) + "\n";
  }
  write_text(path, text);
}

// ---------------------------------------------------------------- images

inline void write_image_csv(const fs::path& path, const Image& img) {
  std::string text;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) text += (x ? "," : "") + format_number(img.at(x, y));
    text += '\n';
  }
  write_text(path, text);
}

inline Image read_image_csv(const fs::path& path) {
  const std::string text = read_text(path);
  Image img;
  std::size_t line_no = 0;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (img.width == 0) img.width = cells.size();
    if (cells.size() != img.width) {
      throw InputError(path.string() + ": line " + std::to_string(line_no) + ": ragged image row");
    }
    for (const auto& c : cells) img.pixels.push_back(parse_cell(c, path.string(), line_no));
    ++img.height;
  }
  img.validate();
  return img;
}

/// 16-bit binary PGM; values are rounded and clamped to [0, 65535].
inline void write_image_pgm(const fs::path& path, const Image& img) {
  img.validate();
  std::string data = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n65535\n";
  data.reserve(data.size() + img.pixels.size() * 2);
  for (double v : img.pixels) {
    const auto q = static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0));
    data.push_back(static_cast<char>(q >> 8));
    data.push_back(static_cast<char>(q & 0xFF));
  }
  write_text(path, data);
}

inline Image read_image_pgm(const fs::path& path) {
  const std::string data = read_text(path);
  std::size_t pos = 0;
  auto token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (token() != "P5") throw InputError(path.string() + ": not a binary PGM (P5)");
  Image img;
  try {
    img.width = std::stoul(token());
    img.height = std::stoul(token());
  } catch (const std::exception&) {
    throw InputError(path.string() + ": bad PGM dimensions");
  }
  const unsigned long maxval = std::stoul(token());
  ++pos;  // single whitespace before raster
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  if (data.size() < pos + img.width * img.height * bytes) throw InputError(path.string() + ": truncated PGM");
  img.pixels.resize(img.width * img.height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(data.data() + pos + i * bytes);
    img.pixels[i] = bytes == 2 ? static_cast<double>((p[0] << 8) | p[1]) : static_cast<double>(p[0]);
  }
  img.validate();
  return img;
}

inline Image read_image(const fs::path& path) {
  return path.extension() == ".pgm" ? read_image_pgm(path) : read_image_csv(path);
}

}  // namespace defect_foundry::io
