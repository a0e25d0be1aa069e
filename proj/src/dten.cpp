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

#include "dattn/dten.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "dattn/errors.hpp"

namespace dattn::io {
namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

template <typename T>
void put_le(std::string& out, T value) {
  auto raw = std::bit_cast<std::array<char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  out.append(raw.data(), raw.size());
}

template <typename T>
T get_le(std::string_view bytes, std::size_t& pos) {
  if (pos + sizeof(T) > bytes.size()) throw DataError("DTEN: truncated file");
  std::array<char, sizeof(T)> raw;
  std::memcpy(raw.data(), bytes.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(raw.begin(), raw.end());
  pos += sizeof(T);
  return std::bit_cast<T>(raw);
}

}  // namespace

std::string encode_dten(const Tensor& tensor) {
  const Shape& shape = tensor.shape();
  if (shape.rank() == 0) throw DimensionError("DTEN: cannot encode a rank-0 tensor");
  std::string out(kDtenMagic);
  put_le<std::uint32_t>(out, kDtenVersion);
  put_le<std::uint8_t>(out, static_cast<std::uint8_t>(shape.rank()));
  for (Index e : shape.extents()) put_le<std::uint32_t>(out, static_cast<std::uint32_t>(e));
  out.reserve(out.size() + 4 * static_cast<std::size_t>(tensor.size()));
  for (Index k = 0; k < tensor.size(); ++k) put_le<float>(out, static_cast<float>(tensor[k]));
  return out;
}

Tensor decode_dten(std::string_view bytes) {
  if (bytes.substr(0, kDtenMagic.size()) != kDtenMagic) throw DataError("DTEN: bad magic");
  std::size_t pos = kDtenMagic.size();
  const auto version = get_le<std::uint32_t>(bytes, pos);
  if (version != kDtenVersion) throw DataError("DTEN: unsupported version " + std::to_string(version));
  const auto rank = get_le<std::uint8_t>(bytes, pos);
  if (rank == 0 || rank > Shape::kMaxRank) throw DataError("DTEN: rank must be 1..4");
  std::vector<Index> extents(rank);
  for (auto& e : extents) {
    e = get_le<std::uint32_t>(bytes, pos);
    if (e == 0) throw DataError("DTEN: zero extent");
  }
  Shape shape(std::move(extents));
  const auto count = static_cast<std::size_t>(shape.size());
  if (bytes.size() - pos != 4 * count) throw DataError("DTEN: payload size does not match extents");
  Tensor t(std::move(shape));
  for (std::size_t k = 0; k < count; ++k) t[static_cast<Index>(k)] = get_le<float>(bytes, pos);
  return t;
}

void write_bytes(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot open for writing: " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw DataError("write failed: " + path.string());
}

std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open: " + path.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

void write_dten(const std::filesystem::path& path, const Tensor& tensor) {
  write_bytes(path, encode_dten(tensor));
}

Tensor read_dten(const std::filesystem::path& path) {
  try {
    return decode_dten(read_bytes(path));
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  auto p = path;
  p.replace_extension(".json");
  return p;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& doc) {
  write_bytes(path, doc.dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  const std::string text = read_bytes(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_dten_with_sidecar(const std::filesystem::path& path, const Tensor& tensor, const nlohmann::json& meta) {
  write_dten(path, tensor);
  write_json(sidecar_path(path), meta);
}

}  // namespace dattn::io
