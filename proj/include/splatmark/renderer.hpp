#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "splatmark/asset.hpp"
#include "splatmark/image.hpp"

namespace splatmark {

inline constexpr double kNearPlane = 0.2;
inline constexpr double kMinContribution = 1.0 / 255.0;

// Pinhole camera. The camera frame looks down +z with x right and y down;
// pixel (u, v) = (fx * x / z + cx, fy * y / z + cy), pixel i spanning [i, i+1).
struct CameraView {
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 8, height = 8;

  void validate() const;
  Eigen::Vector3d center() const;
};

// Real SH basis up to degree 3 in the 3DGS sign convention.
std::array<double, kShCoeffs> sh_basis(const Eigen::Vector3d& dir);

// Per channel max(0, sum_k c_k Y_k(dir) + 0.5).
Eigen::Vector3d sh_to_color(std::span<const double, kShDim> coeffs, const Eigen::Vector3d& dir);

struct ProjectedGaussian {
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  double depth = 0.0;
  bool visible = false;
};

std::vector<ProjectedGaussian> project(const GaussianAsset& asset, const CameraView& view);

// Compositing weights for one view. Since geometry is frozen, rendering from
// this cache is linear in the SH coefficients up to the color clamps.
struct SplatWeightCache {
  int width = 0;
  int height = 0;
  size_t num_gaussians = 0;
  // Pixel-major CSR, each list front to back.
  std::vector<uint32_t> pixel_offsets;
  std::vector<uint32_t> entry_gaussian;
  std::vector<double> entry_weight;
  // Gaussian-major index into the entries above, ascending pixel order.
  std::vector<uint32_t> gaussian_offsets;
  std::vector<uint32_t> gaussian_entries;
  std::vector<uint32_t> entry_pixel;
  // Unit view direction and SH basis per Gaussian.
  std::vector<Eigen::Vector3d> directions;
  std::vector<std::array<double, kShCoeffs>> basis;

  size_t entries() const { return entry_gaussian.size(); }
  double weight_sum(size_t pixel) const;
};

// Tiled, OpenMP-parallel construction.
SplatWeightCache build_weight_cache(const GaussianAsset& asset, const CameraView& view);
// Naive per-pixel reference; agrees bitwise with build_weight_cache.
SplatWeightCache build_weight_cache_reference(const GaussianAsset& asset, const CameraView& view);

Image render(const GaussianAsset& asset, const SplatWeightCache& cache);
Image render(std::span<const double> sh, const SplatWeightCache& cache);
Image render_reference(std::span<const double> sh, const SplatWeightCache& cache);

// Adjoint of render: d loss / d sh for every Gaussian (N x 48, asset layout).
std::vector<double> render_gradient(const GaussianAsset& asset, const SplatWeightCache& cache,
                                    const Image& upstream);
std::vector<double> render_gradient(std::span<const double> sh, const SplatWeightCache& cache,
                                    const Image& upstream);
std::vector<double> render_gradient_reference(std::span<const double> sh, const SplatWeightCache& cache,
                                              const Image& upstream);

}  // namespace splatmark
