#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace affect {

// Error hierarchy. Every failure surfaced by the library derives from Error so
// callers (the CLI in particular) can report it uniformly.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data. Carries the file location when known.
class DataError : public Error {
 public:
  DataError(const std::string& what, std::string file = {}, std::size_t line = 0,
            std::string field = {});
  const std::string& file() const { return file_; }
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  std::string file_;
  std::size_t line_ = 0;
  std::string field_;
};

class DuplicateRecordError : public DataError {
 public:
  using DataError::DataError;
};

class OutOfRangeError : public DataError {
 public:
  using DataError::DataError;
};

class UnknownColumnError : public DataError {
 public:
  using DataError::DataError;
};

class UnimputableFeatureError : public Error {
 public:
  using Error::Error;
};

class IncompleteReportError : public Error {
 public:
  using Error::Error;
};

class DegenerateDistributionError : public Error {
 public:
  using Error::Error;
};

class VocabularyError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class WindowViolationError : public Error {
 public:
  using Error::Error;
};

class DegenerateTrainingError : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& stage, std::size_t epoch, std::size_t batch);
  std::size_t epoch() const { return epoch_; }
  std::size_t batch() const { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

class OracleSizeError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what);
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class PrerequisiteError : public Error {
 public:
  PrerequisiteError(const std::string& missing, const std::string& command);
  const std::string& command() const { return command_; }

 private:
  std::string command_;
};

// Calendar day.
using Date = std::chrono::sys_days;

// Parses an ISO-8601 calendar day (YYYY-MM-DD). Throws DataError.
Date parse_date(std::string_view text);
std::string format_date(Date d);
inline Date add_days(Date d, int days) { return d + std::chrono::days{days}; }
inline int days_between(Date from, Date to) { return static_cast<int>((to - from).count()); }

// 64-bit FNV-1a. Used for stable seeds, fingerprints and file checksums.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 14695981039346656037ULL);
std::string hex64(std::uint64_t value);
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

std::string trim(std::string_view s);
std::vector<std::string> split_csv_line(std::string_view line);
std::string csv_escape(std::string_view field);
// Shortest round-trippable decimal representation of a double.
std::string format_double(double v);
double parse_double(std::string_view text);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace affect
