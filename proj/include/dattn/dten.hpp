// Copyright 2026 The dattn Authors.
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

// DTEN binary tensor files.
//
//   "DTEN" | u32 version = 1 | u8 rank | rank x u32 extents | f32 payload
//
// All integers and floats are little-endian, payload row-major. A JSON
// sidecar with the same basename and a ".json" extension carries axis roles
// and class names.

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "dattn/tensor.hpp"

namespace dattn::io {

inline constexpr std::string_view kDtenMagic = "DTEN";
inline constexpr std::uint32_t kDtenVersion = 1;

/// Serialize to DTEN bytes. Values are rounded to f32.
std::string encode_dten(const Tensor& tensor);

/// Parse DTEN bytes. Throws DataError on malformed input.
Tensor decode_dten(std::string_view bytes);

void write_dten(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_dten(const std::filesystem::path& path);

/// `scene.feat.dten` -> `scene.feat.json`.
std::filesystem::path sidecar_path(const std::filesystem::path& path);

void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// Write `tensor` and its sidecar in one call.
void write_dten_with_sidecar(const std::filesystem::path& path, const Tensor& tensor, const nlohmann::json& meta);

void write_bytes(const std::filesystem::path& path, std::string_view bytes);
std::string read_bytes(const std::filesystem::path& path);

}  // namespace dattn::io
