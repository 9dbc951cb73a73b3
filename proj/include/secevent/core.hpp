/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef SECEVENT_CORE_HPP_
#define SECEVENT_CORE_HPP_

#include <Eigen/Dense>

#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace secevent {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

// Error hierarchy. Each class maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 2; }
};

class UsageError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 1; }
};

class DataError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

inline void warn(std::string_view msg) { std::cerr << "warning: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Random numbers. The std distributions are implementation-defined, so the
// helpers below derive everything from raw mt19937_64 output to keep seeded
// runs identical across standard libraries.
using Rng = std::mt19937_64;

inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

// Unbiased integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: empty range");
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<std::size_t>(x % bound);
}

inline double normal(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

// ---------------------------------------------------------------------------
// FNV-1a, used for stable ids and feature hashing.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 14695981039346656037ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xF];
  return out;
}

// ---------------------------------------------------------------------------
// Timestamps: whole seconds since the Unix epoch, UTC.
struct Timestamp {
  std::int64_t seconds = 0;
  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;
};

namespace detail {

inline bool parse_digits(std::string_view s, std::size_t pos, std::size_t n, int& out) {
  if (pos + n > s.size()) return false;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace detail

// Accepts YYYY-MM-DDTHH:MM:SS[.fraction](Z|+HH:MM|-HH:MM). Fractions are
// truncated and offsets folded into UTC.
inline Timestamp parse_timestamp(std::string_view s) {
  using namespace std::chrono;
  auto fail = [&]() -> Timestamp { throw DataError("invalid ISO-8601 timestamp '" + std::string(s) + "'"); };
  int y, mo, d, h, mi, sec;
  if (!detail::parse_digits(s, 0, 4, y) || s.size() < 19 || s[4] != '-' || !detail::parse_digits(s, 5, 2, mo) ||
      s[7] != '-' || !detail::parse_digits(s, 8, 2, d) || (s[10] != 'T' && s[10] != ' ') ||
      !detail::parse_digits(s, 11, 2, h) || s[13] != ':' || !detail::parse_digits(s, 14, 2, mi) || s[16] != ':' ||
      !detail::parse_digits(s, 17, 2, sec))
    return fail();
  std::size_t pos = 19;
  if (pos < s.size() && s[pos] == '.') {
    ++pos;
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
    if (pos == start) return fail();
  }
  int offset = 0;
  if (pos == s.size()) return fail();  // timezone designator is mandatory
  if (s[pos] == 'Z') {
    ++pos;
  } else if (s[pos] == '+' || s[pos] == '-') {
    int oh, om;
    if (!detail::parse_digits(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' ||
        !detail::parse_digits(s, pos + 4, 2, om))
      return fail();
    offset = (oh * 3600 + om * 60) * (s[pos] == '+' ? 1 : -1);
    pos += 6;
  } else {
    return fail();
  }
  if (pos != s.size()) return fail();
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || sec > 59) return fail();
  const auto t = sys_days{ymd}.time_since_epoch().count() * std::int64_t{86400} + h * 3600 + mi * 60 + sec;
  return Timestamp{t - offset};
}

inline std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const sys_seconds tp{seconds{t.seconds}};
  const auto day_point = floor<days>(tp);
  const year_month_day ymd{day_point};
  const hh_mm_ss hms{tp - day_point};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02lld:%02lld:%02lldZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<long long>(hms.hours().count()), static_cast<long long>(hms.minutes().count()),
                static_cast<long long>(hms.seconds().count()));
  return buf;
}

// Durations on the command line / config: "6h", "30m", "90s", "2d" or bare seconds.
inline std::int64_t parse_duration(std::string_view s) {
  if (s.empty()) throw UsageError("empty duration");
  std::int64_t scale = 1;
  switch (s.back()) {
    case 's': scale = 1; s.remove_suffix(1); break;
    case 'm': scale = 60; s.remove_suffix(1); break;
    case 'h': scale = 3600; s.remove_suffix(1); break;
    case 'd': scale = 86400; s.remove_suffix(1); break;
    default: break;
  }
  std::int64_t v = 0;
  if (s.empty()) throw UsageError("invalid duration");
  for (char c : s) {
    if (c < '0' || c > '9') throw UsageError("invalid duration '" + std::string(s) + "'");
    v = v * 10 + (c - '0');
  }
  return v * scale;
}

// ---------------------------------------------------------------------------
// UTF-8 helpers. Entity spans are expressed in code points.
inline bool is_utf8_continuation(unsigned char c) { return (c & 0xC0) == 0x80; }

inline std::size_t utf8_length(std::string_view s) {
  std::size_t n = 0;
  for (unsigned char c : s)
    if (!is_utf8_continuation(c)) ++n;
  return n;
}

// Byte offset of code point `cp` (cp == length gives s.size()).
inline std::size_t utf8_byte_offset(std::string_view s, std::size_t cp) {
  std::size_t seen = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!is_utf8_continuation(static_cast<unsigned char>(s[i]))) {
      if (seen == cp) return i;
      ++seen;
    }
  }
  if (seen == cp) return s.size();
  throw DataError("code point offset out of range");
}

inline std::size_t utf8_codepoint_index(std::string_view s, std::size_t byte) {
  return utf8_length(s.substr(0, byte));
}

// ---------------------------------------------------------------------------
// Little-endian binary helpers for the TWZ* file formats.
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto v = data_.substr(pos_, n);
    pos_ += n;
    return v;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw DataError("truncated binary file");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path + "'");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw DataError("write failed for '" + path + "'");
}

}  // namespace secevent

#endif  // SECEVENT_CORE_HPP_
