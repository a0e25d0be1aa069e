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

#include <string>

#include <gtest/gtest.h>

#include "dattn/dten.hpp"
#include "dattn/errors.hpp"
#include "support.hpp"

namespace dattn {
namespace {

TEST(Dten, HeaderLayout) {
  const Tensor t(Shape{2, 3}, (Tensor::Values(6) << 1, 2, 3, 4, 5, -0.5).finished());
  const std::string bytes = io::encode_dten(t);
  ASSERT_EQ(bytes.size(), 4U + 4U + 1U + 2 * 4U + 6 * 4U);
  EXPECT_EQ(bytes.substr(0, 4), "DTEN");
  EXPECT_EQ(bytes.substr(4, 4), std::string("\x01\x00\x00\x00", 4));
  EXPECT_EQ(bytes[8], '\x02');
  EXPECT_EQ(bytes.substr(9, 8), std::string("\x02\x00\x00\x00\x03\x00\x00\x00", 8));
  // 1.0f little-endian, then -0.5f last
  EXPECT_EQ(bytes.substr(17, 4), std::string("\x00\x00\x80\x3f", 4));
  EXPECT_EQ(bytes.substr(bytes.size() - 4), std::string("\x00\x00\x00\xbf", 4));
}

TEST(Dten, RoundTripAtFloatPrecision) {
  const FeatureMap x = testing::random_features(4, 3, 5, 1);
  const std::string bytes = io::encode_dten(x.tensor());
  const Tensor back = io::decode_dten(bytes);
  EXPECT_EQ(back.shape(), x.tensor().shape());
  EXPECT_TRUE((back.values() == x.tensor().values().cast<float>().cast<double>()).all());
  EXPECT_EQ(io::encode_dten(back), bytes);
}

TEST(Dten, FileAndSidecar) {
  testing::ScratchDir dir("dten");
  const Tensor t = Tensor::constant({3}, 0.25);
  io::write_dten_with_sidecar(dir / "sub/x.feat.dten", t, {{"axes", {"class"}}});
  EXPECT_EQ(io::read_dten(dir / "sub/x.feat.dten").values().matrix(), t.values().matrix());
  EXPECT_EQ(io::read_json(dir / "sub/x.feat.json")["axes"][0], "class");
  EXPECT_EQ(io::sidecar_path("a/b.mask"), std::filesystem::path("a/b.json"));
}

TEST(Dten, RejectsMalformedInput) {
  const std::string good = io::encode_dten(Tensor::constant({2, 2}, 1.0));
  EXPECT_THROW(io::decode_dten("DTEX" + good.substr(4)), DataError);
  std::string bad_version = good;
  bad_version[4] = '\x02';
  EXPECT_THROW(io::decode_dten(bad_version), DataError);
  std::string bad_rank = good;
  bad_rank[8] = '\x05';
  EXPECT_THROW(io::decode_dten(bad_rank), DataError);
  std::string zero_extent = good;
  zero_extent[9] = '\x00';
  EXPECT_THROW(io::decode_dten(zero_extent), DataError);
  EXPECT_THROW(io::decode_dten(good.substr(0, good.size() - 1)), DataError);
  EXPECT_THROW(io::decode_dten(good + "x"), DataError);
  EXPECT_THROW(io::decode_dten("DT"), DataError);
  EXPECT_THROW(io::read_dten("/nonexistent/file.dten"), DataError);
}

TEST(Json, MalformedFileIsDataError) {
  testing::ScratchDir dir("json");
  io::write_bytes(dir / "bad.json", "{not json");
  EXPECT_THROW(io::read_json(dir / "bad.json"), DataError);
}

}  // namespace
}  // namespace dattn
