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

#pragma once

#include <filesystem>
#include <string>

#include "fastdenoise/tensor.hpp"

namespace fastdenoise {

// .tns container: a text header line `shape: d0,d1,...\n` followed by the
// payload as little-endian IEEE-754 binary32 values in row-major order.

std::string encode_tns(const DenseArray& a);
/// Throws ConfigError on malformed headers, short payloads or non-finite data.
DenseArray decode_tns(const std::string& bytes);

void write_tns(const std::filesystem::path& path, const DenseArray& a);
DenseArray read_tns(const std::filesystem::path& path);

}  // namespace fastdenoise
