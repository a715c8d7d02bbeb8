#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <Eigen/Geometry>

#include "splatmark/renderer.hpp"
#include "splatmark/scene.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

namespace splatmark {
namespace {

using testing::oracle_rotation;
using testing::oracle_sh;
using testing::oracle_weights;
using testing::random_asset;

CameraView front_camera(int size = 32, double focal = 40.0, double distance = 4.0) {
  return look_at(Eigen::Vector3d(0, 0, -distance), Eigen::Vector3d::Zero(), Eigen::Vector3d(0, -1, 0), focal, size,
                 size);
}

// ---- Projection ----------------------------------------------------------

TEST(Project, OnAxisMapsToPrincipalPoint) {
  GaussianAsset a = random_asset(1, 1);
  a.positions[0] = {0, 0, 5};
  CameraView v;
  v.fx = v.fy = 50;
  v.cx = 16;
  v.cy = 12;
  v.width = 32;
  v.height = 24;
  const auto p = project(a, v);
  ASSERT_TRUE(p[0].visible);
  EXPECT_NEAR(p[0].mean.x(), 16, 1e-12);
  EXPECT_NEAR(p[0].mean.y(), 12, 1e-12);
  EXPECT_NEAR(p[0].depth, 5, 1e-12);
}

TEST(Project, IsotropicStaysIsotropicUnderRotation) {
  GaussianAsset a = random_asset(1, 1);
  a.log_scales[0] = {std::log(0.2), std::log(0.2), std::log(0.2)};
  a.positions[0] = {0.3, -1.0, 2.0};
  CameraView v = look_at(Eigen::Vector3d(0, 0, 0), Eigen::Vector3d(0.3, -1.0, 2.0), Eigen::Vector3d(0.2, -1, 0.1),
                         60, 32, 32);
  const auto p = project(a, v);
  ASSERT_TRUE(p[0].visible);
  EXPECT_NEAR(p[0].cov(0, 1), 0.0, 1e-9);
  EXPECT_NEAR(p[0].cov(0, 0), p[0].cov(1, 1), 1e-9);
  const double z = std::sqrt(0.09 + 1.0 + 4.0);
  EXPECT_NEAR(p[0].cov(0, 0), std::pow(60 * 0.2 / z, 2), 1e-9);
}

TEST(Project, CullsBehindNearPlane) {
  GaussianAsset a = random_asset(2, 1);
  a.positions[0] = {0, 0, 0.1};
  a.positions[1] = {0, 0, -3};
  CameraView v;
  v.fx = v.fy = 10;
  const auto p = project(a, v);
  EXPECT_FALSE(p[0].visible);
  EXPECT_FALSE(p[1].visible);
}

TEST(Project, MatchesMonteCarloCovariance) {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    GaussianAsset a = random_asset(1, 100 + trial, 0.5);
    for (int k = 0; k < 3; ++k) a.log_scales[0][k] = std::log(rng.uniform(0.02, 0.08));
    const CameraView v = look_at(Eigen::Vector3d(rng.uniform(-1, 1), rng.uniform(-1, 1), -4),
                                 Eigen::Vector3d(rng.uniform(-0.2, 0.2), 0, 0), Eigen::Vector3d(0, -1, 0), 80, 64, 64);
    const auto p = project(a, v);
    ASSERT_TRUE(p[0].visible);
    const Eigen::Matrix3d r = oracle_rotation(a.rotations[0]);
    const auto s = a.scale(0);
    const Eigen::Vector3d mu(a.positions[0][0], a.positions[0][1], a.positions[0][2]);
    const int n = 200000;
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
    std::vector<Eigen::Vector2d> pts(n);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d z(rng.normal() * s[0], rng.normal() * s[1], rng.normal() * s[2]);
      const Eigen::Vector4d x4 = v.world_to_camera * (mu + r * z).homogeneous();
      pts[i] = {v.fx * x4.x() / x4.z() + v.cx, v.fy * x4.y() / x4.z() + v.cy};
      mean += pts[i];
    }
    mean /= n;
    for (const auto& q : pts) second += (q - mean) * (q - mean).transpose();
    second /= n - 1;
    const double scale = p[0].cov.norm();
    EXPECT_LT((second - p[0].cov).norm() / scale, 0.02) << "trial " << trial;
  }
}

// ---- Weight cache --------------------------------------------------------

GaussianAsset single_gaussian(double logit, double scale = 0.5) {
  GaussianAsset a = random_asset(1, 3);
  a.positions[0] = {0, 0, 0};
  a.log_scales[0] = {std::log(scale), std::log(scale), std::log(scale)};
  a.rotations[0] = {1, 0, 0, 0};
  a.opacity_logits[0] = logit;
  std::fill(a.sh.begin(), a.sh.end(), 0.0);
  return a;
}

TEST(WeightCache, OpaqueGaussianAtPixelCenter) {
  const auto a = single_gaussian(30.0);
  CameraView v = front_camera(33);  // odd size: center pixel center hits the mean
  const auto cache = build_weight_cache(a, v);
  const size_t center = 16 * 33 + 16;
  ASSERT_EQ(cache.pixel_offsets[center + 1] - cache.pixel_offsets[center], 1u);
  EXPECT_NEAR(cache.entry_weight[cache.pixel_offsets[center]], 1.0, 1e-9);
}

TEST(WeightCache, StackedHalfOpacity) {
  GaussianAsset a = single_gaussian(0.0);  // alpha = 0.5
  a = a.subset({0, 0});
  const auto cache = build_weight_cache(a, front_camera(33));
  const size_t center = 16 * 33 + 16;
  ASSERT_EQ(cache.pixel_offsets[center + 1] - cache.pixel_offsets[center], 2u);
  const uint32_t e = cache.pixel_offsets[center];
  EXPECT_EQ(cache.entry_gaussian[e], 0u);
  EXPECT_EQ(cache.entry_gaussian[e + 1], 1u);
  EXPECT_DOUBLE_EQ(cache.entry_weight[e], 0.5);
  EXPECT_DOUBLE_EQ(cache.entry_weight[e + 1], 0.25);
}

void expect_matches_oracle(const GaussianAsset& a, const CameraView& v, const SplatWeightCache& cache) {
  const auto oracle = oracle_weights(a, v);
  size_t nonempty = 0;
  for (size_t p = 0; p < oracle.size(); ++p) {
    std::map<size_t, double> got;
    for (uint32_t e = cache.pixel_offsets[p]; e < cache.pixel_offsets[p + 1]; ++e) got[cache.entry_gaussian[e]] = cache.entry_weight[e];
    ASSERT_EQ(got.size(), oracle[p].size()) << "pixel " << p;
    for (const auto& [g, w] : oracle[p]) {
      ASSERT_TRUE(got.count(g)) << "pixel " << p << " gaussian " << g;
      EXPECT_NEAR(got[g], w, 1e-6);
    }
    nonempty += !oracle[p].empty();
  }
  EXPECT_GT(nonempty, oracle.size() / 10);
}

TEST(WeightCache, MatchesBruteForceCompositing) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    const auto a = random_asset(10, seed, 0.8);
    const auto v = front_camera(40, 50.0);
    expect_matches_oracle(a, v, build_weight_cache(a, v));
    expect_matches_oracle(a, v, build_weight_cache_reference(a, v));
  }
}

TEST(WeightCache, FastPathEqualsReferenceBitwise) {
  const auto scene = make_toy_scene(3, 400, 2, 48);
  for (const auto& v : scene.views) {
    const auto fast = build_weight_cache(scene.asset, v);
    const auto ref = build_weight_cache_reference(scene.asset, v);
    EXPECT_EQ(fast.pixel_offsets, ref.pixel_offsets);
    EXPECT_EQ(fast.entry_gaussian, ref.entry_gaussian);
    EXPECT_EQ(fast.entry_weight, ref.entry_weight);
    EXPECT_EQ(fast.gaussian_entries, ref.gaussian_entries);
  }
}

TEST(WeightCache, WeightsNonnegativeAndSumAtMostOne) {
  const auto scene = make_toy_scene(4, 300, 1, 48);
  const auto cache = build_weight_cache(scene.asset, scene.views[0]);
  for (size_t p = 0; p + 1 < cache.pixel_offsets.size(); ++p) {
    double sum = 0.0, prev_trans = 1.0;
    for (uint32_t e = cache.pixel_offsets[p]; e < cache.pixel_offsets[p + 1]; ++e) {
      ASSERT_GE(cache.entry_weight[e], 0.0);
      sum += cache.entry_weight[e];
      const double trans = 1.0 - sum;
      ASSERT_LE(trans, prev_trans + 1e-15);
      prev_trans = trans;
    }
    ASSERT_LE(sum, 1.0 + 1e-12);
  }
}

// ---- SH ------------------------------------------------------------------

TEST(Sh, DcOnly) {
  std::array<double, kShDim> h{};
  h[sh_index(0, 0)] = 0.7;
  h[sh_index(1, 0)] = -3.0;
  h[sh_index(2, 0)] = 1.0;
  const Eigen::Vector3d dir = Eigen::Vector3d(0.3, -0.2, 0.9).normalized();
  const auto c = sh_to_color(h, dir);
  EXPECT_NEAR(c[0], 0.28209479 * 0.7 + 0.5, 1e-8);
  EXPECT_EQ(c[1], 0.0);
  EXPECT_NEAR(c[2], 0.28209479 + 0.5, 1e-8);
}

TEST(Sh, ZeroCoefficientsGiveHalfGray) {
  std::array<double, kShDim> h{};
  const auto c = sh_to_color(h, Eigen::Vector3d(0, 0, 1));
  EXPECT_EQ(c, Eigen::Vector3d(0.5, 0.5, 0.5));
}

TEST(Sh, MatchesIndependentBasis) {
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Vector3d d = Eigen::Vector3d(rng.normal(), rng.normal(), rng.normal()).normalized();
    const auto y = sh_basis(d);
    int k = 0;
    for (int l = 0; l <= 3; ++l) {
      for (int m = -l; m <= l; ++m, ++k) EXPECT_NEAR(y[k], oracle_sh(l, m, d), 1e-12) << "l=" << l << " m=" << m;
    }
    std::array<double, kShDim> h;
    for (double& v : h) v = rng.uniform(-0.4, 0.4);
    const auto c = sh_to_color(h, d);
    for (int ch = 0; ch < 3; ++ch) {
      double s = 0.5;
      int kk = 0;
      for (int l = 0; l <= 3; ++l) {
        for (int m = -l; m <= l; ++m, ++kk) s += h[sh_index(ch, kk)] * oracle_sh(l, m, d);
      }
      EXPECT_NEAR(c[ch], std::max(0.0, s), 1e-12);
    }
  }
}

TEST(Sh, LayoutMatchesFileOrder) {
  EXPECT_EQ(sh_index(0, 0), 0);
  EXPECT_EQ(sh_index(2, 0), 2);
  EXPECT_EQ(sh_index(0, 1), 3);
  EXPECT_EQ(sh_index(0, 15), 17);
  EXPECT_EQ(sh_index(1, 1), 18);
  EXPECT_EQ(sh_index(2, 15), 47);
}

// ---- Render --------------------------------------------------------------

TEST(Render, EmptyPixelIsBlack) {
  auto a = single_gaussian(2.0, 0.05);
  const auto cache = build_weight_cache(a, front_camera(32));
  const auto img = render(a, cache);
  EXPECT_EQ(img.at(0, 0, 0), 0.0);
  EXPECT_EQ(img.at(0, 0, 2), 0.0);
  EXPECT_GT(img.at(16, 16, 0), 0.0);
}

TEST(Render, OpaqueGrayGaussian) {
  auto a = single_gaussian(40.0);
  const auto cache = build_weight_cache(a, front_camera(33));
  const auto img = render(a, cache);
  for (int c = 0; c < 3; ++c) EXPECT_NEAR(img.at(16, 16, c), 0.5, 1e-12);
}

TEST(Render, ToySceneMatchesBruteForce) {
  const auto scene = make_toy_scene(1, 1000, 1, 128);
  const auto& v = scene.views[0];
  const auto cache = build_weight_cache(scene.asset, v);
  const auto img = render(scene.asset, cache);
  const auto oracle = oracle_weights(scene.asset, v);
  Eigen::Vector3d cam = v.center();
  double max_err = 0.0;
  for (size_t p = 0; p < oracle.size(); ++p) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (const auto& [g, w] : oracle[p]) {
      const auto& mu = scene.asset.positions[g];
      const Eigen::Vector3d dir = (Eigen::Vector3d(mu[0], mu[1], mu[2]) - cam).normalized();
      acc += w * sh_to_color(scene.asset.sh_of(g), dir);
    }
    for (int c = 0; c < 3; ++c) max_err = std::max(max_err, std::abs(std::clamp(acc[c], 0.0, 1.0) - img.data[p * 3 + c]));
  }
  EXPECT_LT(max_err, 1e-6);
}

TEST(Render, ReferenceAndParallelAgreeAndAreDeterministic) {
  const auto scene = make_toy_scene(2, 500, 1, 64);
  const auto cache = build_weight_cache(scene.asset, scene.views[0]);
  const auto a = render(scene.asset, cache);
  const auto b = render(scene.asset, cache);
  const auto r = render_reference(scene.asset.sh, cache);
  EXPECT_EQ(a.data, b.data);
  EXPECT_EQ(a.data, r.data);
}

TEST(Render, SizeMismatch) {
  const auto a = random_asset(5, 1);
  const auto cache = build_weight_cache(a, front_camera());
  EXPECT_THROW(render(random_asset(4, 1), cache), Error);
  EXPECT_THROW(render_gradient(a, cache, Image(31, 32, 3)), Error);
}

TEST(Render, LinearInShAwayFromClamps) {
  const auto scene = make_toy_scene(5, 500, 1, 48);
  const auto cache = build_weight_cache(scene.asset, scene.views[0]);
  Rng rng(3);
  std::vector<double> delta(scene.asset.sh.size());
  for (double& d : delta) d = rng.normal() * 1e-3;
  auto shifted = [&](double s) {
    std::vector<double> h = scene.asset.sh;
    for (size_t k = 0; k < h.size(); ++k) h[k] += s * delta[k];
    return render(h, cache);
  };
  const auto r0 = shifted(0.0), r1 = shifted(1.0), r2 = shifted(2.0);
  for (size_t k = 0; k < r0.size(); ++k) {
    const bool interior = r0.data[k] > 0.05 && r0.data[k] < 0.95;
    if (interior) EXPECT_NEAR(r2.data[k] - r0.data[k], 2.0 * (r1.data[k] - r0.data[k]), 1e-12);
  }
}

// ---- Gradient ------------------------------------------------------------

TEST(Gradient, ZeroUpstream) {
  const auto scene = make_toy_scene(6, 200, 1, 32);
  const auto cache = build_weight_cache(scene.asset, scene.views[0]);
  const auto g = render_gradient(scene.asset, cache, Image(32, 32, 3));
  for (double v : g) EXPECT_EQ(v, 0.0);
}

TEST(Gradient, SingleGaussianSinglePixel) {
  auto a = single_gaussian(1.0);
  a.sh[sh_index(0, 1)] = 0.1;
  a.sh[sh_index(1, 5)] = -0.05;
  const auto v = front_camera(33);
  const auto cache = build_weight_cache(a, v);
  Image up(33, 33, 3);
  const size_t center = 16 * 33 + 16;
  up.data[center * 3 + 0] = 0.7;
  up.data[center * 3 + 1] = -1.3;
  up.data[center * 3 + 2] = 2.0;
  const auto g = render_gradient(a, cache, up);
  const double w = cache.entry_weight[cache.pixel_offsets[center]];
  const auto y = sh_basis(cache.directions[0]);
  for (int c = 0; c < 3; ++c) {
    for (int k = 0; k < kShCoeffs; ++k) EXPECT_NEAR(g[sh_index(c, k)], w * y[k] * up.data[center * 3 + c], 1e-15);
  }
}

TEST(Gradient, ClampedColorHasZeroGradient) {
  auto a = single_gaussian(1.0);
  a.sh[sh_index(0, 0)] = -10.0;  // red channel clamped at zero
  const auto cache = build_weight_cache(a, front_camera(33));
  Image up(33, 33, 3, 1.0);
  const auto g = render_gradient(a, cache, up);
  for (int k = 0; k < kShCoeffs; ++k) EXPECT_EQ(g[sh_index(0, k)], 0.0);
  EXPECT_NE(g[sh_index(1, 0)], 0.0);
}

TEST(Gradient, MatchesFiniteDifferences) {
  const auto scene = make_toy_scene(7, 300, 1, 48);
  const auto cache = build_weight_cache(scene.asset, scene.views[0]);
  Rng rng(9);
  Image up(48, 48, 3);
  for (double& u : up.data) u = rng.normal();
  const auto g = render_gradient(scene.asset, cache, up);
  const double h = 1e-4;
  int checked = 0;
  while (checked < 150) {
    const size_t i = rng.below(scene.asset.size());
    if (cache.gaussian_offsets[i + 1] == cache.gaussian_offsets[i]) continue;
    const size_t k = i * kShDim + rng.below(kShDim);
    std::vector<double> hp = scene.asset.sh, hm = scene.asset.sh;
    hp[k] += h;
    hm[k] -= h;
    // Skip coordinates whose perturbation crosses a clamp.
    const auto rp = render(hp, cache), rm = render(hm, cache), r0 = render(scene.asset.sh, cache);
    bool near_clamp = false;
    for (size_t q = 0; q < r0.size(); ++q) {
      if ((rp.data[q] != r0.data[q] || rm.data[q] != r0.data[q]) &&
          (r0.data[q] < 1e-3 || r0.data[q] > 1 - 1e-3)) {
        near_clamp = true;
        break;
      }
    }
    if (near_clamp) continue;
    // Differencing per pixel before summing avoids cancellation in the loss.
    double diff = 0.0;
    for (size_t q = 0; q < r0.size(); ++q) diff += (rp.data[q] - rm.data[q]) * up.data[q];
    const double fd = diff / (2 * h);
    const double denom = std::max({std::abs(fd), std::abs(g[k]), 1e-6});
    EXPECT_LT(std::abs(fd - g[k]) / denom, 1e-4) << "coordinate " << k;
    ++checked;
  }
}

TEST(Gradient, ReferenceAgrees) {
  const auto scene = make_toy_scene(8, 300, 1, 40);
  const auto cache = build_weight_cache(scene.asset, scene.views[0]);
  Rng rng(2);
  Image up(40, 40, 3);
  for (double& u : up.data) u = rng.normal();
  const auto g1 = render_gradient(scene.asset, cache, up);
  const auto g2 = render_gradient_reference(scene.asset.sh, cache, up);
  const auto g3 = render_gradient(scene.asset, cache, up);
  EXPECT_EQ(g1, g3);
  for (size_t k = 0; k < g1.size(); ++k) EXPECT_NEAR(g1[k], g2[k], 1e-12 * (1 + std::abs(g2[k])));
}

// ---- Toy scene -----------------------------------------------------------

TEST(ToyScene, DeterministicAndRing) {
  const auto s1 = make_toy_scene(11, 100, 8, 32);
  const auto s2 = make_toy_scene(11, 100, 8, 32);
  EXPECT_TRUE(geometry_identical(s1.asset, s2.asset));
  EXPECT_EQ(s1.asset.sh, s2.asset.sh);
  ASSERT_EQ(s1.views.size(), 8u);
  for (size_t k = 0; k < 8; ++k) {
    EXPECT_EQ(s1.views[k].world_to_camera, s2.views[k].world_to_camera);
    EXPECT_EQ(s1.ground_truth[k].data, s2.ground_truth[k].data);
  }
  const Eigen::Vector3d c0 = s1.views[0].center();
  for (size_t k = 0; k < 8; ++k) {
    const Eigen::Vector3d c = s1.views[k].center();
    EXPECT_NEAR(c.y(), c0.y(), 1e-12);
    EXPECT_NEAR(std::hypot(c.x(), c.z()), std::hypot(c0.x(), c0.z()), 1e-12);
    const double ang = std::atan2(c.z(), c.x());
    double expect = 2 * M_PI * k / 8;
    if (expect > M_PI) expect -= 2 * M_PI;
    EXPECT_NEAR(ang, expect, 1e-12);
  }
  EXPECT_THROW(make_toy_scene(1, 9, 8, 32), Error);
}

TEST(ToyScene, FullCoverage) {
  const auto scene = make_toy_scene(0, 1000, 8, 128);
  for (const auto* list : {&scene.views, &scene.held_out_views}) {
    for (const auto& v : *list) {
      const auto cache = build_weight_cache(scene.asset, v);
      size_t covered = 0;
      for (size_t p = 0; p < 128 * 128; ++p) covered += cache.weight_sum(p) > 0.9;
      EXPECT_GE(covered, static_cast<size_t>(0.99 * 128 * 128));
    }
  }
}

TEST(Views, JsonRoundTrip) {
  const auto scene = make_toy_scene(0, 50, 3, 32);
  std::vector<CameraView> v, h;
  views_from_json(views_to_json(scene.views, scene.held_out_views), v, h);
  ASSERT_EQ(v.size(), 3u);
  ASSERT_EQ(h.size(), 4u);
  EXPECT_EQ(v[1].world_to_camera, scene.views[1].world_to_camera);
  EXPECT_EQ(h[2].fx, scene.held_out_views[2].fx);
}

}  // namespace
}  // namespace splatmark
