#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "affect/common.hpp"

namespace affect {

// Little helpers for the checkpoint formats. Values are written in host byte
// order; checkpoints are not meant to move between architectures.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void doubles(const std::vector<double>& v) {
    pod<std::uint64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class BinaryReader {
 public:
  BinaryReader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  template <typename T>
  T pod() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in_) throw CheckpointError(source_ + ": truncated checkpoint");
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1u << 24)) throw CheckpointError(source_ + ": corrupt string length");
    std::string s(n, '\0');
    in_.read(s.data(), static_cast<std::streamsize>(n));
    if (!in_) throw CheckpointError(source_ + ": truncated checkpoint");
    return s;
  }
  std::vector<double> doubles() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ull << 32)) throw CheckpointError(source_ + ": corrupt vector length");
    std::vector<double> v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    if (!in_) throw CheckpointError(source_ + ": truncated checkpoint");
    return v;
  }
  void expect_magic(const char (&magic)[5]) {
    char buf[4];
    in_.read(buf, 4);
    if (!in_ || std::memcmp(buf, magic, 4) != 0)
      throw CheckpointError(source_ + ": not a " + std::string(magic, 4) + " checkpoint");
  }

 private:
  std::istream& in_;
  std::string source_;
};

}  // namespace affect
