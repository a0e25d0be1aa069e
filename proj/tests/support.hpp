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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dattn/attention.hpp"
#include "dattn/random.hpp"
#include "dattn/tensor.hpp"
#include "reference.hpp"

namespace dattn::testing {

inline FeatureMap random_features(Index w, Index h, Index d, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  auto cur = CounterRng(seed, 0x7e57).cursor();
  RowMatrixXd m(w * h, d);
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) m(r, c) = cur.uniform(lo, hi);
  return FeatureMap(w, h, m);
}

inline Eigen::MatrixXd random_matrix(Index rows, Index cols, std::uint64_t seed, double scale = 1.0) {
  auto cur = CounterRng(seed, 0x3a7).cursor();
  Eigen::MatrixXd m(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) m(r, c) = cur.uniform(-scale, scale);
  return m;
}

inline ModelParams random_params(Variant variant, Index d, Index c, std::uint64_t seed) {
  ModelParams p = init_params(variant, d, c, seed);
  p.b = random_matrix(p.b.size(), 1, seed + 101);
  p.h = random_matrix(p.h.size(), 1, seed + 202);
  return p;
}

inline reference::Grid grid(const FeatureMap& x) {
  reference::Grid g{static_cast<int>(x.width()), static_cast<int>(x.height()), static_cast<int>(x.depth()), {}};
  const auto m = x.matrix();
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) g.v.push_back(m(r, c));
  return g;
}

inline reference::Grid grid(Index w, Index h, const RowMatrixXd& pixels) {
  reference::Grid g{static_cast<int>(w), static_cast<int>(h), static_cast<int>(pixels.cols()), {}};
  for (Index r = 0; r < pixels.rows(); ++r)
    for (Index c = 0; c < pixels.cols(); ++c) g.v.push_back(pixels(r, c));
  return g;
}

inline reference::Weights weights(const Eigen::MatrixXd& m) {
  reference::Weights out{static_cast<int>(m.rows()), static_cast<int>(m.cols()), {}};
  for (Index r = 0; r < m.rows(); ++r)
    for (Index c = 0; c < m.cols(); ++c) out.v.push_back(m(r, c));
  return out;
}

// Storage order: row-major maps flatten pixel by pixel.
template <typename Derived>
std::vector<double> values(const Eigen::PlainObjectBase<Derived>& m) {
  return {m.data(), m.data() + m.size()};
}

// Fresh directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("dattn_test_" + name)) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

}  // namespace dattn::testing
