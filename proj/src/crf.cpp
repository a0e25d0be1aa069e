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

#include "dattn/crf.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "dattn/errors.hpp"

namespace dattn {

void CrfConfig::validate() const {
  if (n_iters < 1) throw ConfigError("crf: n_iters must be at least 1");
  if (!(w_bilateral >= 0.0) || !(w_smooth >= 0.0)) throw ConfigError("crf: kernel weights must be nonnegative");
  if (!(theta_alpha > 0.0) || !(theta_beta > 0.0) || !(theta_gamma > 0.0)) {
    throw ConfigError("crf: kernel standard deviations must be positive");
  }
}

CrfConfig crf_config_from_json(const nlohmann::json& doc) {
  static const std::set<std::string> known = {"n_iters",  "w_bilateral", "theta_alpha",
                                              "theta_beta", "w_smooth",  "theta_gamma"};
  if (!doc.is_object()) throw ConfigError("crf config must be a JSON object");
  for (const auto& [key, _] : doc.items()) {
    if (!known.contains(key)) throw ConfigError("crf config: unknown key '" + key + "'");
  }
  CrfConfig cfg;
  try {
    cfg.n_iters = doc.value("n_iters", cfg.n_iters);
    cfg.w_bilateral = doc.value("w_bilateral", cfg.w_bilateral);
    cfg.theta_alpha = doc.value("theta_alpha", cfg.theta_alpha);
    cfg.theta_beta = doc.value("theta_beta", cfg.theta_beta);
    cfg.w_smooth = doc.value("w_smooth", cfg.w_smooth);
    cfg.theta_gamma = doc.value("theta_gamma", cfg.theta_gamma);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("crf config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

nlohmann::json to_json(const CrfConfig& cfg) {
  return {{"n_iters", cfg.n_iters},         {"w_bilateral", cfg.w_bilateral}, {"theta_alpha", cfg.theta_alpha},
          {"theta_beta", cfg.theta_beta},   {"w_smooth", cfg.w_smooth},       {"theta_gamma", cfg.theta_gamma}};
}

namespace {

// Full symmetric kernel matrix is kept when it fits in this many entries;
// larger images recompute kernel rows every iteration.
constexpr Index kMaxCachedKernelEntries = Index{1} << 25;

// k(p, q) = w1 * exp(-d2 / 2a^2) * exp(-c2 / 2b^2) + w2 * exp(-d2 / 2g^2)
// with d2 the squared pixel distance and c2 the squared intensity distance.
// Spatial factors depend only on the pixel offset and are tabulated.
class PairwiseKernel {
 public:
  PairwiseKernel(Index width, Index height, const Eigen::Ref<const RowMatrixXd>& image, const CrfConfig& cfg)
      : height_(height), image_(image), w_bilateral_(cfg.w_bilateral), w_smooth_(cfg.w_smooth),
        two_beta2_(2.0 * cfg.theta_beta * cfg.theta_beta),
        bilateral_spatial_(width, height), smooth_spatial_(width, height) {
    const double two_alpha2 = 2.0 * cfg.theta_alpha * cfg.theta_alpha;
    const double two_gamma2 = 2.0 * cfg.theta_gamma * cfg.theta_gamma;
    for (Index di = 0; di < width; ++di) {
      for (Index dj = 0; dj < height; ++dj) {
        const auto fi = static_cast<double>(di);
        const auto fj = static_cast<double>(dj);
        const double d2 = fi * fi + fj * fj;
        bilateral_spatial_(di, dj) = std::exp(-d2 / two_alpha2);
        smooth_spatial_(di, dj) = std::exp(-d2 / two_gamma2);
      }
    }
    const Index n = width * height;
    if (n * n <= kMaxCachedKernelEntries) {
      // tiled so the mirrored writes stay in cache
      constexpr Index kTile = 64;
      cache_.resize(n, n);
      for (Index pb = 0; pb < n; pb += kTile) {
        for (Index qb = pb; qb < n; qb += kTile) {
          for (Index p = pb; p < std::min(pb + kTile, n); ++p) {
            for (Index q = std::max(qb, p + 1); q < std::min(qb + kTile, n); ++q) {
              cache_(p, q) = cache_(q, p) = evaluate(p, q);
            }
          }
        }
        for (Index p = pb; p < std::min(pb + kTile, n); ++p) cache_(p, p) = 0.0;
      }
    }
  }

  [[nodiscard]] bool cached() const { return cache_.size() > 0; }
  [[nodiscard]] const double* row(Index p) const { return &cache_(p, 0); }

  /// Zero on the diagonal: a pixel sends no message to itself.
  [[nodiscard]] double operator()(Index p, Index q) const {
    if (cached()) return cache_(p, q);
    return p == q ? 0.0 : evaluate(p, q);
  }

 private:
  [[nodiscard]] double evaluate(Index p, Index q) const {
    const Index di = std::abs(p / height_ - q / height_);
    const Index dj = std::abs(p % height_ - q % height_);
    double c2 = 0.0;
    for (Index k = 0; k < image_.cols(); ++k) {
      const double d = image_(p, k) - image_(q, k);
      c2 += d * d;
    }
    return w_bilateral_ * bilateral_spatial_(di, dj) * std::exp(-c2 / two_beta2_) + w_smooth_ * smooth_spatial_(di, dj);
  }

  Index height_;
  Eigen::Ref<const RowMatrixXd> image_;
  double w_bilateral_, w_smooth_, two_beta2_;
  RowMatrixXd bilateral_spatial_, smooth_spatial_;
  RowMatrixXd cache_;
};

// acc[r * L + l] += k_rows[r][q] * Q(q, l), neighbours in ascending order.
template <Index L>
void accumulate_messages(const double* const* k_rows, Index rows, const RowMatrixXd& q_mat, Index labels,
                         double* acc) {
  const Index stride = L > 0 ? L : labels;
  for (Index q = 0; q < q_mat.rows(); ++q) {
    const double* q_row = &q_mat(q, 0);
    for (Index r = 0; r < rows; ++r) {
      const double k = k_rows[r][q];
      double* a = acc + r * stride;
      for (Index l = 0; l < stride; ++l) a[l] += k * q_row[l];
    }
  }
}

using AccumulateFn = void (*)(const double* const*, Index, const RowMatrixXd&, Index, double*);

AccumulateFn accumulate_for(Index labels) {
  switch (labels) {
    case 2: return accumulate_messages<2>;
    case 3: return accumulate_messages<3>;
    case 4: return accumulate_messages<4>;
    case 5: return accumulate_messages<5>;
    default: return accumulate_messages<0>;
  }
}

// q = exp(-e - max(-e)) / sum, summed in label order.
void softmax_neg_energy(const double* energy, double* q, Index labels) {
  double top = -energy[0];
  for (Index l = 1; l < labels; ++l) top = std::max(top, -energy[l]);
  double total = 0.0;
  for (Index l = 0; l < labels; ++l) {
    q[l] = std::exp(-energy[l] - top);
    total += q[l];
  }
  for (Index l = 0; l < labels; ++l) q[l] /= total;
}

}  // namespace

Marginals mean_field(const ProbField& unary, const Eigen::Ref<const RowMatrixXd>& image, const CrfConfig& cfg,
                     const MeanFieldObserver& observer) {
  cfg.validate();
  const Index n = unary.width * unary.height;
  if (unary.z.rows() != n || image.rows() != n) throw DimensionError("mean_field: unary and image sizes differ");
  const auto labels = static_cast<Index>(unary.present.size());
  if (labels < 2) throw ContractError("mean_field: needs at least two labels");

  RowMatrixXd u(n, labels);
  for (Index p = 0; p < n; ++p) {
    for (Index l = 0; l < labels; ++l) u(p, l) = -std::log(std::max(unary.z(p, unary.present[l]), kUnaryFloor));
  }

  Marginals out;
  out.width = unary.width;
  out.height = unary.height;
  out.class_index = unary.present;
  out.q.resize(n, labels);
  for (Index p = 0; p < n; ++p) softmax_neg_energy(&u(p, 0), &out.q(p, 0), labels);

  const PairwiseKernel kernel(unary.width, unary.height, image, cfg);
  RowMatrixXd next(n, labels);
  // Messages for a block of pixel rows share each neighbour's Q row. Every
  // accumulator still sums over neighbours in ascending order.
  constexpr Index kBlock = 4;
  std::vector<double> message(static_cast<std::size_t>(kBlock * labels));
  std::vector<double> energy(static_cast<std::size_t>(labels));
  const AccumulateFn accumulate = accumulate_for(labels);
  std::vector<double> kernel_row(static_cast<std::size_t>(kernel.cached() ? 0 : kBlock * n));
  for (int iter = 1; iter <= cfg.n_iters; ++iter) {
    for (Index p0 = 0; p0 < n; p0 += kBlock) {
      const Index rows = std::min(kBlock, n - p0);
      const double* k_rows[kBlock];
      for (Index r = 0; r < rows; ++r) {
        if (kernel.cached()) {
          k_rows[r] = kernel.row(p0 + r);
        } else {
          double* dst = &kernel_row[static_cast<std::size_t>(r * n)];
          for (Index q = 0; q < n; ++q) dst[q] = kernel(p0 + r, q);
          k_rows[r] = dst;
        }
      }
      std::fill(message.begin(), message.end(), 0.0);
      accumulate(k_rows, rows, out.q, labels, message.data());
      for (Index r = 0; r < rows; ++r) {
        const Index p = p0 + r;
        const double* acc = &message[static_cast<std::size_t>(r * labels)];
        // Potts: label l pays for the mass neighbours put on every other label.
        for (Index l = 0; l < labels; ++l) {
          double pairwise = 0.0;
          for (Index m = 0; m < labels; ++m) {
            if (m != l) pairwise += acc[m];
          }
          energy[static_cast<std::size_t>(l)] = u(p, l) + pairwise;
        }
        softmax_neg_energy(energy.data(), &next(p, 0), labels);
      }
    }
    out.q.swap(next);
    if (observer) observer(iter, out.q);
  }
  return out;
}

PseudoMask argmax_mask(const Eigen::Ref<const RowMatrixXd>& q, Index width, Index height,
                       std::span<const int> class_index) {
  if (q.rows() != width * height) throw DimensionError("argmax_mask: marginals do not match extents");
  if (static_cast<Index>(class_index.size()) != q.cols()) throw DimensionError("argmax_mask: class map length differs");
  PseudoMask mask(width, height);
  for (Index p = 0; p < q.rows(); ++p) {
    Index best = 0;
    for (Index l = 1; l < q.cols(); ++l) {
      if (q(p, l) > q(p, best)) best = l;
    }
    mask.labels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(class_index[static_cast<std::size_t>(best)]);
  }
  return mask;
}

PseudoMask argmax_mask(const Marginals& marginals) {
  return argmax_mask(marginals.q, marginals.width, marginals.height, marginals.class_index);
}

}  // namespace dattn
