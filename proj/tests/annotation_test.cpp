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

#include <algorithm>
#include <cstring>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "dattn/annotation.hpp"
#include "dattn/errors.hpp"
#include "support.hpp"

namespace dattn {
namespace {

RowMatrixXd random_maps(Index n, Index c, std::uint64_t seed, double lo = 0.0, double hi = 1.0) {
  auto cur = CounterRng(seed, 0x9a9).cursor();
  RowMatrixXd m(n, c);
  for (Index r = 0; r < n; ++r)
    for (Index k = 0; k < c; ++k) m(r, k) = cur.uniform(lo, hi);
  return m;
}

bool bitwise_equal(const Eigen::Ref<const Eigen::VectorXd>& a, const Eigen::Ref<const Eigen::VectorXd>& b) {
  if (a.size() != b.size()) return false;
  for (Index k = 0; k < a.size(); ++k) {
    const double x = a[k], y = b[k];
    if (std::memcmp(&x, &y, sizeof(double)) != 0) return false;
  }
  return true;
}

TEST(MinmaxNormalize, Values) {
  EXPECT_EQ(minmax_normalize(Eigen::Vector3d(0, 2, 4)).matrix(), Eigen::Vector3d(0, 0.5, 1));
  EXPECT_TRUE((minmax_normalize(Eigen::VectorXd::Constant(5, 3.3)) == 0.0).all());
  const Eigen::Vector4d unit(0.0, 0.3, 1.0, 0.75);
  EXPECT_EQ(minmax_normalize(unit).matrix(), unit);
}

TEST(NormalizePerClass, Modes) {
  const RowMatrixXd maps = random_maps(12, 3, 1, -1.0, 2.0);
  const RowMatrixXd mm = normalize_per_class(maps, MergeNormalization::kMinMax);
  for (Index c = 0; c < 3; ++c) {
    EXPECT_EQ(mm.col(c).minCoeff(), 0.0);
    EXPECT_EQ(mm.col(c).maxCoeff(), 1.0);
  }
  const RowMatrixXd ss = normalize_per_class(maps, MergeNormalization::kSpatialSum);
  EXPECT_TRUE((ss.array() >= 0.0).all());
  for (Index c = 0; c < 3; ++c) EXPECT_NEAR(ss.col(c).sum(), 1.0, 1e-12);
}

TEST(MergeAttention, HandArithmetic) {
  const RowMatrixXd A = RowMatrixXd::Constant(1, 1, 0.8);
  const RowMatrixXd S = RowMatrixXd::Constant(1, 1, 0.4);
  EXPECT_DOUBLE_EQ(merge_attention(A, S, Eigen::VectorXd::Constant(1, 0.25))(0, 0), 0.5);
}

TEST(MergeAttention, EndpointsAreBitwise) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const RowMatrixXd A = normalize_per_class(random_maps(16, 3, seed), MergeNormalization::kMinMax);
    const RowMatrixXd S = normalize_per_class(random_maps(16, 3, seed + 100), MergeNormalization::kMinMax);
    const RowMatrixXd T = merge_attention(A, S, Eigen::Vector3d(1.0, 0.0, 0.5));
    EXPECT_TRUE(bitwise_equal(T.col(0), A.col(0)));
    EXPECT_TRUE(bitwise_equal(T.col(1), S.col(1)));
  }
}

TEST(MergeAttention, InteriorIsConvex) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RowMatrixXd A = random_maps(20, 4, seed);
    const RowMatrixXd S = random_maps(20, 4, seed + 500);
    const Eigen::VectorXd p = random_maps(4, 1, seed + 900).col(0);
    const RowMatrixXd T = merge_attention(A, S, p);
    EXPECT_TRUE((T.array() >= A.cwiseMin(S).array()).all());
    EXPECT_TRUE((T.array() <= A.cwiseMax(S).array()).all());
  }
}

TEST(MergeAttention, RejectsBadInput) {
  const RowMatrixXd A = random_maps(4, 2, 0);
  EXPECT_THROW(merge_attention(A, random_maps(4, 3, 0), Eigen::Vector2d(0.5, 0.5)), DimensionError);
  EXPECT_THROW(merge_attention(A, A, Eigen::Vector3d(0.5, 0.5, 0)), DimensionError);
  EXPECT_THROW(merge_attention(A, A, Eigen::Vector2d(1.5, 0.5)), ContractError);
}

FeatureMap energy_map(Index w, Index h, const std::vector<double>& energy) {
  RowMatrixXd m(w * h, 1);
  for (Index p = 0; p < w * h; ++p) m(p, 0) = energy[static_cast<std::size_t>(p)];
  return FeatureMap(w, h, m);
}

TEST(GenerateMask, ConstantAttentionClaimsNothing) {
  // a constant map normalizes to zeros and carries no localization signal
  const FeatureMap x = energy_map(2, 2, {5, 5, 5, 5});
  const PseudoMask m = generate_mask(RowMatrixXd::Constant(4, 1, 0.9), x, std::vector<int>{1});
  for (auto l : m.labels) EXPECT_EQ(l, PseudoMask::kBackground);
}

TEST(GenerateMask, SingleClassHighAttention) {
  RowMatrixXd T = RowMatrixXd::Constant(9, 1, 0.95);
  T(4, 0) = 0.0;  // one low pixel anchors the range
  const FeatureMap x = energy_map(3, 3, {9, 9, 9, 9, 0, 9, 9, 9, 9});
  const PseudoMask m = generate_mask(T, x, std::vector<int>{1});
  for (Index p = 0; p < 9; ++p) EXPECT_EQ(m.labels[static_cast<std::size_t>(p)], p == 4 ? 0 : 1);
}

TEST(GenerateMask, DisjointRegions) {
  // 4x1 strip: class 1 on pixel 0, class 2 on pixel 3, low energy at pixel 1
  RowMatrixXd T(4, 2);
  T << 1.0, 0.0,  //
      0.0, 0.0,   //
      0.0, 0.0,   //
      0.0, 1.0;
  const PseudoMask m = generate_mask(T, energy_map(4, 1, {1, 0, 1, 1}), std::vector<int>{1, 2});
  EXPECT_EQ(m.labels, (std::vector<std::uint8_t>{1, 0, 255, 2}));
}

// 4x4 instance: class 1 claims a 2x3 block (6 pixels), class 2 a 3x1 strip (3 pixels)
// overlapping it in two pixels.
struct OverlapInstance {
  RowMatrixXd T = RowMatrixXd::Zero(16, 2);
  FeatureMap x;
  OverlapInstance() {
    for (Index i = 0; i < 2; ++i)
      for (Index j = 0; j < 3; ++j) T(i * 4 + j, 0) = 1.0;
    for (Index i = 0; i < 3; ++i) T(i * 4 + 2, 1) = 1.0;
    std::vector<double> e(16, 1.0);
    e[15] = 0.0;
    x = energy_map(4, 4, e);
  }
};

TEST(GenerateMask, OverlapGoesToSmallerRegion) {
  const OverlapInstance inst;
  const PseudoMask m = generate_mask(inst.T, inst.x, std::vector<int>{1, 2});
  const std::vector<std::uint8_t> expected = {1, 1, 2, 255,    //
                                              1, 1, 2, 255,    //
                                              255, 255, 2, 255,  //
                                              255, 255, 255, 0};
  EXPECT_EQ(m.labels, expected);
  const auto ref = reference::mask(testing::values(inst.T), 16, 2, testing::grid(inst.x), {1, 2}, 0.2, 0.3);
  EXPECT_EQ(std::vector<int>(m.labels.begin(), m.labels.end()), ref);
}

TEST(GenerateMask, EqualSizeTieGoesToLowerLabel) {
  RowMatrixXd T = RowMatrixXd::Zero(4, 3);
  T(0, 1) = T(1, 1) = 1.0;  // label 2
  T(1, 2) = T(2, 2) = 1.0;  // label 3
  const PseudoMask m = generate_mask(T, energy_map(2, 2, {1, 1, 1, 1}), std::vector<int>{3, 2});
  EXPECT_EQ(m.labels[1], 2);
}

TEST(GenerateMask, MatchesBruteForceOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const Index w = 2 + static_cast<Index>(seed % 7), h = 2 + static_cast<Index>((seed / 7) % 7);
    const RowMatrixXd T = random_maps(w * h, 3, seed);
    const FeatureMap x = testing::random_features(w, h, 3, seed, 0.0, 1.0);
    std::vector<int> labels = {1, 2, 3};
    labels.resize(1 + seed % 3);
    const double fg = 0.1 + 0.1 * static_cast<double>(seed % 5);
    const PseudoMask m = generate_mask(T, x, labels, {fg, 0.3});
    const auto ref = reference::mask(testing::values(T), static_cast<int>(w * h), 3, testing::grid(x), labels, fg, 0.3);
    EXPECT_EQ(std::vector<int>(m.labels.begin(), m.labels.end()), ref) << "seed " << seed;
  }
}

TEST(GenerateMask, LabelsComeFromOwnCandidates) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const RowMatrixXd T = random_maps(36, 3, seed);
    const FeatureMap x = testing::random_features(6, 6, 2, seed, 0.0, 1.0);
    const std::vector<int> labels = {1, 2, 3};
    const PseudoMask m = generate_mask(T, x, labels);
    const auto bg = background_candidates(x, 0.3);
    for (std::size_t p = 0; p < 36; ++p) {
      const int l = m.labels[p];
      if (l == PseudoMask::kVoid) continue;
      if (l == 0) {
        EXPECT_TRUE(bg[p]);
      } else {
        EXPECT_TRUE(foreground_candidates(T.col(l - 1), 0.2)[p]);
      }
    }
  }
}

TEST(GenerateMask, PermutationEquivariant) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const RowMatrixXd T = random_maps(25, 2, seed);
    const FeatureMap x = testing::random_features(5, 5, 2, seed, 0.0, 1.0);
    const auto a = foreground_candidates(T.col(0), 0.2), b = foreground_candidates(T.col(1), 0.2);
    if (std::count(a.begin(), a.end(), true) == std::count(b.begin(), b.end(), true)) continue;  // tie rule is not symmetric
    RowMatrixXd swapped(25, 2);
    swapped << T.col(1), T.col(0);
    const PseudoMask m = generate_mask(T, x, std::vector<int>{1, 2});
    PseudoMask ms = generate_mask(swapped, x, std::vector<int>{1, 2});
    for (auto& l : ms.labels) l = l == 1 ? 2 : l == 2 ? 1 : l;
    EXPECT_EQ(m, ms);
  }
}

TEST(GenerateMask, RejectsBadLabels) {
  const RowMatrixXd T = random_maps(4, 2, 0);
  const FeatureMap x = energy_map(2, 2, {1, 2, 3, 4});
  EXPECT_THROW(generate_mask(T, x, std::vector<int>{}), ContractError);
  EXPECT_THROW(generate_mask(T, x, std::vector<int>{3}), ContractError);
  EXPECT_THROW(generate_mask(T, x, std::vector<int>{0}), ContractError);
  EXPECT_THROW(generate_mask(random_maps(5, 2, 0), x, std::vector<int>{1}), DimensionError);
}

TEST(BuildUnary, HandArithmetic) {
  PseudoMask m(2, 1);
  m.labels = {2, PseudoMask::kVoid};
  const ProbField f = build_unary(m, std::vector<int>{1, 2}, 4, 0.9);
  EXPECT_EQ(f.present, (std::vector<int>{0, 1, 2}));
  EXPECT_DOUBLE_EQ(f.z(0, 2), 0.9);
  EXPECT_DOUBLE_EQ(f.z(0, 0), 0.05);
  EXPECT_DOUBLE_EQ(f.z(0, 1), 0.05);
  EXPECT_EQ(f.z(0, 3), 0.0);
  for (int c : {0, 1, 2}) EXPECT_DOUBLE_EQ(f.z(1, c), 1.0 / 3.0);

  const ProbField two = build_unary(m, std::vector<int>{2}, 3, 0.8);
  EXPECT_EQ(two.z(1, 0), 0.5);
  EXPECT_EQ(two.z(1, 2), 0.5);
  EXPECT_EQ(two.z(1, 1), 0.0);
}

TEST(BuildUnary, ValidDistributionsOnSupport) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto cur = CounterRng(seed, 0xb1).cursor();
    std::vector<int> present = {1, 2, 3, 4};
    present.resize(1 + cur.below(4));
    PseudoMask m(5, 4);
    for (auto& l : m.labels) {
      const auto pick = cur.below(present.size() + 2);
      l = pick == 0 ? PseudoMask::kVoid : pick == 1 ? 0 : static_cast<std::uint8_t>(present[pick - 2]);
    }
    const double tau = cur.uniform(0.51, 0.99);
    const ProbField f = build_unary(m, present, 5, tau);
    const std::set<int> support(f.present.begin(), f.present.end());
    for (Index p = 0; p < f.z.rows(); ++p) {
      EXPECT_NEAR(f.z.row(p).sum(), 1.0, 1e-9);
      for (Index c = 0; c < 5; ++c) {
        EXPECT_GE(f.z(p, c), 0.0);
        if (!support.contains(static_cast<int>(c))) {
          EXPECT_EQ(f.z(p, c), 0.0);
        }
      }
    }
  }
}

TEST(BuildUnary, RejectsBadInput) {
  PseudoMask m(1, 1, 3);
  EXPECT_THROW(build_unary(m, std::vector<int>{3}, 4, 0.5), ContractError);
  EXPECT_THROW(build_unary(m, std::vector<int>{3}, 4, 1.0), ContractError);
  EXPECT_THROW(build_unary(m, std::vector<int>{2}, 4, 0.8), ContractError);
  EXPECT_THROW(build_unary(m, std::vector<int>{}, 4, 0.8), ContractError);
}

TEST(MaskFile, RoundTrip) {
  testing::ScratchDir dir("mask");
  PseudoMask m(3, 5);
  for (std::size_t k = 0; k < m.labels.size(); ++k) m.labels[k] = static_cast<std::uint8_t>(k % 3 == 0 ? 255 : k % 4);
  write_mask(dir / "a.mask", m, {"background", "cat"});
  EXPECT_EQ(read_mask(dir / "a.mask"), m);
  EXPECT_EQ(std::filesystem::file_size(dir / "a.mask"), 15U);
  EXPECT_TRUE(std::filesystem::exists(dir / "a.json"));
}

}  // namespace
}  // namespace dattn
