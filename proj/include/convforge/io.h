// Copyright 2026 The ConvForge Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CONVFORGE_IO_H_
#define CONVFORGE_IO_H_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

namespace convforge {

// Writes to "<path>.tmp" and renames over path, so readers never observe a
// partially written file.
void WriteFileAtomic(const std::filesystem::path& path, std::string_view data);
void WriteJsonAtomic(const std::filesystem::path& path, const nlohmann::json& j);

std::string ReadFile(const std::filesystem::path& path);
nlohmann::json ReadJson(const std::filesystem::path& path);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::uint64_t Fnv1a64(std::string_view data);
std::string Fnv1aHex(std::string_view data);

}  // namespace convforge

#endif  // CONVFORGE_IO_H_
