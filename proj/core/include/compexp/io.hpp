// Copyright 2026 The compexp Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

// Little-endian binary stream helpers for the artifact file formats.
// Layouts are only defined for little-endian IEEE-754 hosts.

namespace compexp::io {

static_assert(std::endian::native == std::endian::little,
              "artifact formats are defined little-endian");
static_assert(sizeof(double) == 8);

class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

template <typename T>
void write_pod(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in, const char* what) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw FormatError(std::string("truncated file while reading ") + what);
  return value;
}

inline void write_u32(std::ostream& out, std::uint32_t v) { write_pod(out, v); }
inline void write_u64(std::ostream& out, std::uint64_t v) { write_pod(out, v); }
inline void write_i32(std::ostream& out, std::int32_t v) { write_pod(out, v); }
inline void write_f64(std::ostream& out, double v) { write_pod(out, v); }

inline std::uint32_t read_u32(std::istream& in, const char* what) {
  return read_pod<std::uint32_t>(in, what);
}
inline std::uint64_t read_u64(std::istream& in, const char* what) {
  return read_pod<std::uint64_t>(in, what);
}
inline std::int32_t read_i32(std::istream& in, const char* what) {
  return read_pod<std::int32_t>(in, what);
}
inline double read_f64(std::istream& in, const char* what) {
  return read_pod<double>(in, what);
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& in, const char* what) {
  const std::uint32_t len = read_u32(in, what);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw FormatError(std::string("truncated file while reading ") + what);
  return s;
}

inline void write_f64_array(std::ostream& out, const std::vector<double>& v) {
  out.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline void read_f64_array(std::istream& in, std::vector<double>& v, const char* what) {
  in.read(reinterpret_cast<char*>(v.data()),
          static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (!in) throw FormatError(std::string("truncated file while reading ") + what);
}

inline void expect_magic(std::istream& in, const char* magic, const char* what) {
  const std::size_t len = std::strlen(magic);
  std::string got(len, '\0');
  in.read(got.data(), static_cast<std::streamsize>(len));
  if (!in || got != magic)
    throw FormatError(std::string(what) + ": bad magic, expected \"" + magic + "\"");
}

}  // namespace compexp::io
