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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "dattn/crf.hpp"
#include "dattn/errors.hpp"
#include "support.hpp"

namespace dattn {
namespace {

// Random unary over classes `present` out of `classes`, rows normalized.
ProbField random_unary(Index w, Index h, std::vector<int> present, Index classes, std::uint64_t seed) {
  auto cur = CounterRng(seed, 0xc4f).cursor();
  ProbField f;
  f.width = w;
  f.height = h;
  f.tau = 0.8;
  f.present = std::move(present);
  f.z = RowMatrixXd::Zero(w * h, classes);
  for (Index p = 0; p < w * h; ++p) {
    double total = 0.0;
    for (int c : f.present) total += f.z(p, c) = cur.uniform() < 0.1 ? 0.0 : cur.uniform(0.01, 1.0);
    if (total == 0.0) f.z(p, f.present[0]) = total = 1.0;
    f.z.row(p) /= total;
  }
  return f;
}

RowMatrixXd random_image(Index n, std::uint64_t seed) {
  auto cur = CounterRng(seed, 0x1a9).cursor();
  RowMatrixXd m(n, 3);
  for (Index r = 0; r < n; ++r)
    for (Index k = 0; k < 3; ++k) m(r, k) = std::floor(cur.uniform(0.0, 256.0));
  return m;
}

std::vector<double> clamped_unary(const ProbField& f) {
  std::vector<double> u;
  for (Index p = 0; p < f.z.rows(); ++p)
    for (int c : f.present) u.push_back(-std::log(std::max(f.z(p, c), kUnaryFloor)));
  return u;
}

reference::CrfParams params(const CrfConfig& c) {
  return {c.n_iters, c.w_bilateral, c.theta_alpha, c.theta_beta, c.w_smooth, c.theta_gamma};
}

TEST(MeanField, ZeroWeightsGiveUnarySoftmax) {
  CrfConfig cfg;
  cfg.w_bilateral = cfg.w_smooth = 0.0;
  for (int iters : {1, 5, 12}) {
    cfg.n_iters = iters;
    const ProbField f = random_unary(6, 5, {0, 2, 3}, 4, static_cast<std::uint64_t>(iters));
    const Marginals m = mean_field(f, random_image(30, 1), cfg);
    for (Index p = 0; p < 30; ++p) {
      double total = 0.0;
      for (int c : f.present) total += std::max(f.z(p, c), kUnaryFloor);
      for (Index l = 0; l < 3; ++l) EXPECT_NEAR(m.q(p, l), std::max(f.z(p, f.present[static_cast<std::size_t>(l)]), kUnaryFloor) / total, 1e-12);
    }
  }
}

TEST(MeanField, SinglePixelKeepsUnary) {
  const ProbField f = random_unary(1, 1, {0, 1}, 2, 3);
  const Marginals m = mean_field(f, random_image(1, 3), CrfConfig{});
  EXPECT_NEAR(m.q(0, 0), f.z(0, 0), 1e-12);
  EXPECT_NEAR(m.q(0, 1), f.z(0, 1), 1e-12);
}

TEST(MeanField, FlippedPixelJoinsNeighbours) {
  // 3x3, uniform colour, every pixel favours label 1 except the centre
  ProbField f;
  f.width = f.height = 3;
  f.tau = 0.8;
  f.present = {0, 1};
  f.z.resize(9, 2);
  for (Index p = 0; p < 9; ++p) f.z.row(p) = p == 4 ? Eigen::RowVector2d(0.8, 0.2) : Eigen::RowVector2d(0.2, 0.8);
  const RowMatrixXd image = RowMatrixXd::Constant(9, 3, 128.0);
  CrfConfig cfg;
  EXPECT_EQ(argmax_mask(mean_field(f, image, cfg)).labels, std::vector<std::uint8_t>(9, 1));

  const auto ref = reference::mean_field(clamped_unary(f), 2, testing::grid(3, 3, image), params(cfg));
  EXPECT_GT(ref[4 * 2 + 1], ref[4 * 2 + 0]);

  CrfConfig off = cfg;
  off.w_bilateral = off.w_smooth = 0.0;
  EXPECT_EQ(argmax_mask(mean_field(f, image, off)).labels[4], 0);
}

TEST(MeanField, MarginalsValidEveryIteration) {
  CrfConfig cfg;
  cfg.n_iters = 8;
  int seen = 0;
  const ProbField f = random_unary(7, 6, {0, 1, 3}, 4, 9);
  mean_field(f, random_image(42, 9), cfg, [&](int iter, const RowMatrixXd& q) {
    EXPECT_EQ(iter, ++seen);
    EXPECT_TRUE((q.array() >= 0.0).all() && (q.array() <= 1.0).all());
    for (Index p = 0; p < q.rows(); ++p) EXPECT_NEAR(q.row(p).sum(), 1.0, 1e-9);
  });
  EXPECT_EQ(seen, 8);
}

TEST(MeanField, MatchesLiteralReferenceBitForBit) {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    std::vector<int> present = {0, 1, 2, 3, 4, 5};
    present.resize(2 + seed % 5);  // covers every label-count specialization and the generic path
    const ProbField f = random_unary(8, 8, present, 6, seed);
    const RowMatrixXd image = random_image(64, seed);
    CrfConfig cfg;
    cfg.n_iters = 3 + static_cast<int>(seed % 3);
    cfg.theta_beta = 20.0 + static_cast<double>(seed);
    const Marginals m = mean_field(f, image, cfg);
    const auto ref = reference::mean_field(clamped_unary(f), static_cast<int>(present.size()),
                                           testing::grid(8, 8, image), params(cfg));
    EXPECT_EQ(testing::values(m.q), ref) << "seed " << seed;
  }
}

TEST(MeanField, LargeImagePathMatchesReference) {
  // above the kernel-cache limit, rows are recomputed on the fly
  const ProbField f = random_unary(77, 77, {0, 1}, 2, 5);
  const RowMatrixXd image = random_image(77 * 77, 5);
  CrfConfig cfg;
  cfg.n_iters = 1;
  const Marginals m = mean_field(f, image, cfg);
  const auto ref = reference::mean_field(clamped_unary(f), 2, testing::grid(77, 77, image), params(cfg));
  EXPECT_EQ(testing::values(m.q), ref);
}

TEST(MeanField, DeterministicAndLabelEquivariant) {
  const ProbField f = random_unary(6, 6, {0, 1, 2}, 3, 4);
  const RowMatrixXd image = random_image(36, 4);
  const Marginals a = mean_field(f, image, CrfConfig{});
  EXPECT_EQ(a.q, mean_field(f, image, CrfConfig{}).q);

  ProbField swapped = f;
  swapped.z.col(0).swap(swapped.z.col(2));
  const Marginals b = mean_field(swapped, image, CrfConfig{});
  EXPECT_LT((a.q.col(0) - b.q.col(2)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.q.col(1) - b.q.col(1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.q.col(2) - b.q.col(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(MeanField, RejectsBadInput) {
  ProbField f = random_unary(3, 3, {0, 1}, 2, 0);
  EXPECT_THROW(mean_field(f, random_image(8, 0), CrfConfig{}), DimensionError);
  f.present = {0};
  EXPECT_THROW(mean_field(f, random_image(9, 0), CrfConfig{}), ContractError);
}

TEST(ArgmaxMask, Cases) {
  RowMatrixXd one_hot(3, 3);
  one_hot << 0, 1, 0,  //
      1, 0, 0,         //
      0, 0, 1;
  const std::vector<int> classes = {0, 2, 5};
  EXPECT_EQ(argmax_mask(one_hot, 3, 1, classes).labels, (std::vector<std::uint8_t>{2, 0, 5}));
  EXPECT_EQ(argmax_mask(RowMatrixXd::Constant(3, 3, 1.0 / 3.0), 1, 3, classes).labels,
            (std::vector<std::uint8_t>{0, 0, 0}));

  RowMatrixXd mixed(4, 2);
  mixed << 0.6, 0.4,  //
      0.3, 0.7,       //
      0.5, 0.5,       //
      0.49, 0.51;
  EXPECT_EQ(argmax_mask(mixed, 2, 2, std::vector<int>{0, 1}).labels, (std::vector<std::uint8_t>{0, 1, 0, 1}));
}

TEST(CrfConfig, ValidationAndJson) {
  CrfConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  EXPECT_EQ(cfg.n_iters, 5);
  EXPECT_EQ(cfg.w_bilateral, 10.0);
  EXPECT_EQ(cfg.theta_alpha, 8.0);
  EXPECT_EQ(cfg.theta_beta, 13.0);
  EXPECT_EQ(cfg.w_smooth, 3.0);
  EXPECT_EQ(cfg.theta_gamma, 3.0);

  cfg.n_iters = 7;
  cfg.theta_beta = 20.0;
  const CrfConfig back = crf_config_from_json(to_json(cfg));
  EXPECT_EQ(back.n_iters, 7);
  EXPECT_EQ(back.theta_beta, 20.0);

  EXPECT_THROW(crf_config_from_json({{"n_iter", 3}}), ConfigError);
  EXPECT_THROW(crf_config_from_json({{"n_iters", 0}}), ConfigError);
  EXPECT_THROW(crf_config_from_json({{"w_smooth", -1.0}}), ConfigError);
  EXPECT_THROW(crf_config_from_json({{"theta_gamma", 0.0}}), ConfigError);
  EXPECT_THROW(crf_config_from_json({{"theta_gamma", "wide"}}), ConfigError);
}

}  // namespace
}  // namespace dattn
