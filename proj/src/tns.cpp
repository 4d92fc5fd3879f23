// Copyright 2026 The fastdenoise Authors. All Rights Reserved.
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

#include "fastdenoise/tns.hpp"

#include <bit>
#include <charconv>
#include <fstream>
#include <sstream>

#include "fastdenoise/error.hpp"

namespace fastdenoise {

std::string encode_tns(const DenseArray& a) {
  std::string out = "shape: ";
  const auto& dims = a.shape().dims();
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(dims[i]);
  }
  out += '\n';
  out.reserve(out.size() + 4 * a.size());
  for (float v : a.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out += static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  return out;
}

DenseArray decode_tns(const std::string& bytes) {
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos || bytes.compare(0, 7, "shape: ") != 0) {
    throw ConfigError("tns: missing 'shape:' header line");
  }
  std::vector<std::size_t> dims;
  std::string_view header(bytes.data() + 7, eol - 7);
  while (!header.empty()) {
    const auto comma = header.find(',');
    const auto field = header.substr(0, comma);
    std::size_t d = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), d);
    if (ec != std::errc() || ptr != field.data() + field.size()) {
      throw ConfigError("tns: bad extent '" + std::string(field) + "'");
    }
    dims.push_back(d);
    if (comma == std::string_view::npos) break;
    header.remove_prefix(comma + 1);
  }
  Shape shape(std::move(dims));
  const std::size_t n = shape.numel();
  if (bytes.size() - eol - 1 != 4 * n) {
    throw ConfigError("tns: payload holds " + std::to_string(bytes.size() - eol - 1) +
                      " bytes, shape " + shape.to_string() + " needs " +
                      std::to_string(4 * n));
  }
  std::vector<float> data(n);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + eol + 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(p[4 * i + b]) << (8 * b);
    data[i] = std::bit_cast<float>(bits);
  }
  try {
    return DenseArray(std::move(shape), std::move(data), FiniteCheck::kOn);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("tns: ") + e.what());
  }
}

void write_tns(const std::filesystem::path& path, const DenseArray& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ConfigError("cannot open " + path.string() + " for writing");
  const auto bytes = encode_tns(a);
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

DenseArray read_tns(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return decode_tns(ss.str());
}

}  // namespace fastdenoise
