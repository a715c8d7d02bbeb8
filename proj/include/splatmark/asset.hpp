#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace splatmark {

inline constexpr int kShDegree = 3;
inline constexpr int kShCoeffs = 16;  // (degree + 1)^2
inline constexpr int kShDim = 48;     // 3 channels x 16 coefficients

// Position of (channel, coefficient) inside a Gaussian's 48 SH values. The
// layout follows the 3DGS PLY files: f_dc_0..2 first, then f_rest grouped by
// channel, 15 higher-order coefficients each.
constexpr int sh_index(int channel, int coeff) {
  return coeff == 0 ? channel : 3 + channel * 15 + (coeff - 1);
}

// A 3DGS asset. Quaternions are stored (w, x, y, z) as rot_0..3 in PLY files;
// scales are log-extents and opacities are logits, as in the file format.
struct GaussianAsset {
  std::vector<std::array<double, 3>> positions;
  std::vector<std::array<double, 3>> log_scales;
  std::vector<std::array<double, 4>> rotations;
  std::vector<double> opacity_logits;
  std::vector<double> sh;  // size() * kShDim

  size_t size() const { return positions.size(); }
  double opacity(size_t i) const;
  std::array<double, 3> scale(size_t i) const;
  std::span<const double, kShDim> sh_of(size_t i) const {
    return std::span<const double, kShDim>(sh.data() + i * kShDim, kShDim);
  }

  // Throws Error if any invariant is violated.
  void validate() const;
  // Drops the Gaussians not listed, keeping the given order.
  GaussianAsset subset(const std::vector<size_t>& keep) const;
};

// Learnable per-Gaussian SH perturbation, same layout as GaussianAsset::sh.
struct SHOffsetField {
  std::vector<double> values;

  SHOffsetField() = default;
  explicit SHOffsetField(size_t n) : values(n * kShDim, 0.0) {}
  size_t size() const { return values.size() / kShDim; }
  void validate() const;
};

bool geometry_identical(const GaussianAsset& a, const GaussianAsset& b);

GaussianAsset load_ply(const std::string& path);
void save_ply(const GaussianAsset& asset, const std::string& path);

GaussianAsset apply_offsets(const GaussianAsset& asset, const SHOffsetField& off);

enum class PruneMode { BottomOpacity, Random };
GaussianAsset prune(const GaussianAsset& asset, PruneMode mode, double fraction, uint64_t seed);

}  // namespace splatmark
