#include "affect/common.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace affect {

namespace {

std::string locate(const std::string& what, const std::string& file, std::size_t line,
                   const std::string& field) {
  std::string out;
  if (!file.empty()) out += file;
  if (line > 0) out += (out.empty() ? "line " : ":") + std::to_string(line);
  if (!field.empty()) out += (out.empty() ? "" : " ") + std::string("[") + field + "]";
  return out.empty() ? what : out + ": " + what;
}

}  // namespace

DataError::DataError(const std::string& what, std::string file, std::size_t line,
                     std::string field)
    : Error(locate(what, file, line, field)),
      file_(std::move(file)),
      line_(line),
      field_(std::move(field)) {}

DivergenceError::DivergenceError(const std::string& stage, std::size_t epoch, std::size_t batch)
    : Error(stage + " diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
            std::to_string(batch)),
      epoch_(epoch),
      batch_(batch) {}

ConfigError::ConfigError(const std::string& key, const std::string& what)
    : Error("config key '" + key + "': " + what), key_(key) {}

PrerequisiteError::PrerequisiteError(const std::string& missing, const std::string& command)
    : Error("missing prerequisite " + missing + "; produce it with: " + command),
      command_(command) {}

Date parse_date(std::string_view text) {
  const std::string s = trim(text);
  int y = 0;
  unsigned m = 0, d = 0;
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') throw DataError("invalid date '" + s + "'");
  auto parse = [&](std::size_t pos, std::size_t len, auto& out) {
    auto [ptr, ec] = std::from_chars(s.data() + pos, s.data() + pos + len, out);
    if (ec != std::errc{} || ptr != s.data() + pos + len) throw DataError("invalid date '" + s + "'");
  };
  parse(0, 4, y);
  parse(5, 2, m);
  parse(8, 2, d);
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                        std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid date '" + s + "'");
  return std::chrono::sys_days{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view label) {
  std::string key = std::to_string(base);
  key.push_back('/');
  key.append(label);
  return fnv1a64(key);
}

std::string trim(std::string_view s) {
  const auto* ws = " \t\r\n\f\v";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(std::move(cur));
  return out;
}

std::string csv_escape(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  const std::string s = trim(text);
  if (s.empty()) throw DataError("empty number");
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError("invalid number '" + s + "'");
  return v;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

std::uint64_t file_checksum(const std::filesystem::path& path) { return fnv1a64(read_file(path)); }

}  // namespace affect
