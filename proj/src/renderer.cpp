#include "splatmark/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Geometry>

#include "splatmark/common.hpp"

namespace splatmark {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                           -0.4570457994644658, 1.445305721320277, -0.5900435899266435};
constexpr int kTile = 16;

// Screen-space footprint of a Gaussian that can reach the contribution cutoff.
struct Splat {
  uint32_t index;
  double depth;
  double mx, my;
  double ca, cb, cc;  // conic: inverse 2D covariance [[ca, cb], [cb, cc]]
  double alpha;
  int x0, x1, y0, y1;  // inclusive pixel bounds
};

struct Entry {
  uint32_t gaussian;
  double weight;
};

Eigen::Matrix3d rotation_of(const std::array<double, 4>& q) {
  return Eigen::Quaterniond(q[0], q[1], q[2], q[3]).normalized().toRotationMatrix();
}

// Visible Gaussians with nonempty footprint, sorted front to back.
std::vector<Splat> make_splats(const GaussianAsset& asset, const CameraView& view) {
  const auto proj = project(asset, view);
  std::vector<Splat> splats;
  for (size_t i = 0; i < proj.size(); ++i) {
    const auto& p = proj[i];
    if (!p.visible) continue;
    const double alpha = asset.opacity(i);
    if (alpha * 255.0 <= 1.0) continue;
    // sigma >= 1/255  <=>  d^T cov^-1 d <= 2 ln(255 alpha).
    const double r2 = 2.0 * std::log(255.0 * alpha);
    const double det = p.cov.determinant();
    Splat s;
    s.index = static_cast<uint32_t>(i);
    s.depth = p.depth;
    s.mx = p.mean.x();
    s.my = p.mean.y();
    s.ca = p.cov(1, 1) / det;
    s.cb = -p.cov(0, 1) / det;
    s.cc = p.cov(0, 0) / det;
    s.alpha = alpha;
    // Exact axis-aligned bounds of the ellipse plus slack for rounding.
    const double ex = std::sqrt(r2 * p.cov(0, 0)) * (1.0 + 1e-9) + 1e-6;
    const double ey = std::sqrt(r2 * p.cov(1, 1)) * (1.0 + 1e-9) + 1e-6;
    // Pixel centers at i + 0.5 inside [m - e, m + e].
    const double fx0 = std::ceil(s.mx - ex - 0.5), fx1 = std::floor(s.mx + ex - 0.5);
    const double fy0 = std::ceil(s.my - ey - 0.5), fy1 = std::floor(s.my + ey - 0.5);
    if (fx1 < 0 || fy1 < 0 || fx0 > view.width - 1 || fy0 > view.height - 1) continue;
    s.x0 = static_cast<int>(std::max(fx0, 0.0));
    s.x1 = static_cast<int>(std::min(fx1, view.width - 1.0));
    s.y0 = static_cast<int>(std::max(fy0, 0.0));
    s.y1 = static_cast<int>(std::min(fy1, view.height - 1.0));
    splats.push_back(s);
  }
  std::sort(splats.begin(), splats.end(), [](const Splat& a, const Splat& b) {
    return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
  });
  return splats;
}

inline double splat_sigma(const Splat& s, double px, double py) {
  const double dx = px - s.mx, dy = py - s.my;
  const double power = -0.5 * (s.ca * dx * dx + 2.0 * s.cb * dx * dy + s.cc * dy * dy);
  return s.alpha * std::exp(power);
}

// Composites one pixel over candidate splats given in front-to-back order.
template <typename Candidates>
void composite_pixel(const Candidates& candidates, const std::vector<Splat>& splats, int x, int y,
                     std::vector<Entry>& out) {
  const double px = x + 0.5, py = y + 0.5;
  double transmittance = 1.0;
  for (uint32_t k : candidates) {
    const Splat& s = splats[k];
    if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
    const double sigma = splat_sigma(s, px, py);
    if (sigma < kMinContribution) continue;
    out.push_back({s.index, sigma * transmittance});
    transmittance *= 1.0 - sigma;
  }
}

void fill_directions(const GaussianAsset& asset, const CameraView& view, SplatWeightCache& cache) {
  const size_t n = asset.size();
  const Eigen::Vector3d cam = view.center();
  cache.directions.resize(n);
  cache.basis.resize(n);
  for (size_t i = 0; i < n; ++i) {
    Eigen::Vector3d d = Eigen::Vector3d(asset.positions[i][0], asset.positions[i][1], asset.positions[i][2]) - cam;
    const double len = d.norm();
    d = len > 0.0 ? Eigen::Vector3d(d / len) : Eigen::Vector3d(0, 0, 1);
    cache.directions[i] = d;
    cache.basis[i] = sh_basis(d);
  }
}

SplatWeightCache assemble(const GaussianAsset& asset, const CameraView& view,
                          std::vector<std::vector<Entry>>& lists) {
  SplatWeightCache cache;
  cache.width = view.width;
  cache.height = view.height;
  cache.num_gaussians = asset.size();
  const size_t n_pix = lists.size();
  cache.pixel_offsets.assign(n_pix + 1, 0);
  for (size_t p = 0; p < n_pix; ++p) cache.pixel_offsets[p + 1] = cache.pixel_offsets[p] + lists[p].size();
  const size_t total = cache.pixel_offsets[n_pix];
  cache.entry_gaussian.resize(total);
  cache.entry_weight.resize(total);
  cache.entry_pixel.resize(total);
  std::vector<uint32_t> counts(asset.size() + 1, 0);
  for (size_t p = 0; p < n_pix; ++p) {
    size_t e = cache.pixel_offsets[p];
    for (const Entry& en : lists[p]) {
      cache.entry_gaussian[e] = en.gaussian;
      cache.entry_weight[e] = en.weight;
      cache.entry_pixel[e] = static_cast<uint32_t>(p);
      ++counts[en.gaussian + 1];
      ++e;
    }
    std::vector<Entry>().swap(lists[p]);
  }
  for (size_t i = 0; i < asset.size(); ++i) counts[i + 1] += counts[i];
  cache.gaussian_offsets = counts;
  cache.gaussian_entries.resize(total);
  std::vector<uint32_t> cursor(counts.begin(), counts.end() - 1);
  for (size_t e = 0; e < total; ++e) cache.gaussian_entries[cursor[cache.entry_gaussian[e]]++] = static_cast<uint32_t>(e);
  fill_directions(asset, view, cache);
  return cache;
}

void gaussian_colors(std::span<const double> sh, const SplatWeightCache& cache, std::vector<double>& color,
                     std::vector<uint8_t>& active) {
  const size_t n = cache.num_gaussians;
  color.assign(n * 3, 0.0);
  active.assign(n * 3, 0);
#pragma omp parallel for schedule(static)
  for (size_t i = 0; i < n; ++i) {
    const auto& y = cache.basis[i];
    const double* h = sh.data() + i * kShDim;
    for (int c = 0; c < 3; ++c) {
      double v = 0.0;
      for (int k = 0; k < kShCoeffs; ++k) v += h[sh_index(c, k)] * y[k];
      v += 0.5;
      active[i * 3 + c] = v > 0.0;
      color[i * 3 + c] = v > 0.0 ? v : 0.0;
    }
  }
}

void check_sh(std::span<const double> sh, const SplatWeightCache& cache) {
  if (sh.size() != cache.num_gaussians * kShDim) {
    throw Error("render: cache built for " + std::to_string(cache.num_gaussians) + " Gaussians, SH has " +
                std::to_string(sh.size() / kShDim));
  }
}

void check_upstream(const Image& upstream, const SplatWeightCache& cache) {
  if (upstream.width != cache.width || upstream.height != cache.height || upstream.channels != 3) {
    throw Error("render_gradient: upstream gradient shape does not match the cache");
  }
}

// Composites without the final clamp.
Image composite(const std::vector<double>& color, const SplatWeightCache& cache, bool parallel) {
  Image img(cache.width, cache.height, 3);
  const size_t n_pix = static_cast<size_t>(cache.width) * cache.height;
#pragma omp parallel for schedule(static) if (parallel)
  for (size_t p = 0; p < n_pix; ++p) {
    double r = 0, g = 0, b = 0;
    for (uint32_t e = cache.pixel_offsets[p]; e < cache.pixel_offsets[p + 1]; ++e) {
      const double w = cache.entry_weight[e];
      const double* col = &color[static_cast<size_t>(cache.entry_gaussian[e]) * 3];
      r += w * col[0];
      g += w * col[1];
      b += w * col[2];
    }
    img.data[p * 3 + 0] = r;
    img.data[p * 3 + 1] = g;
    img.data[p * 3 + 2] = b;
  }
  return img;
}

inline double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

}  // namespace

void CameraView::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error("invalid camera: focal lengths must be positive");
  if (width < 8 || height < 8) throw Error("invalid camera: width and height must be at least 8");
  if (!world_to_camera.allFinite()) throw Error("invalid camera: non-finite transform");
}

Eigen::Vector3d CameraView::center() const {
  const Eigen::Matrix3d r = world_to_camera.topLeftCorner<3, 3>();
  const Eigen::Vector3d t = world_to_camera.topRightCorner<3, 1>();
  return -r.transpose() * t;
}

std::array<double, kShCoeffs> sh_basis(const Eigen::Vector3d& dir) {
  const double x = dir.x(), y = dir.y(), z = dir.z();
  const double xx = x * x, yy = y * y, zz = z * z;
  return {kC0,
          -kC1 * y,
          kC1 * z,
          -kC1 * x,
          kC2[0] * x * y,
          kC2[1] * y * z,
          kC2[2] * (2.0 * zz - xx - yy),
          kC2[3] * x * z,
          kC2[4] * (xx - yy),
          kC3[0] * y * (3.0 * xx - yy),
          kC3[1] * x * y * z,
          kC3[2] * y * (4.0 * zz - xx - yy),
          kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
          kC3[4] * x * (4.0 * zz - xx - yy),
          kC3[5] * z * (xx - yy),
          kC3[6] * x * (xx - 3.0 * yy)};
}

Eigen::Vector3d sh_to_color(std::span<const double, kShDim> coeffs, const Eigen::Vector3d& dir) {
  const auto y = sh_basis(dir);
  Eigen::Vector3d out;
  for (int c = 0; c < 3; ++c) {
    double v = 0.0;
    for (int k = 0; k < kShCoeffs; ++k) v += coeffs[sh_index(c, k)] * y[k];
    out[c] = std::max(0.0, v + 0.5);
  }
  return out;
}

std::vector<ProjectedGaussian> project(const GaussianAsset& asset, const CameraView& view) {
  view.validate();
  const Eigen::Matrix3d wr = view.world_to_camera.topLeftCorner<3, 3>();
  const Eigen::Vector3d wt = view.world_to_camera.topRightCorner<3, 1>();
  std::vector<ProjectedGaussian> out(asset.size());
  for (size_t i = 0; i < asset.size(); ++i) {
    const Eigen::Vector3d mu(asset.positions[i][0], asset.positions[i][1], asset.positions[i][2]);
    const Eigen::Vector3d t = wr * mu + wt;
    ProjectedGaussian& p = out[i];
    p.depth = t.z();
    if (!(t.z() >= kNearPlane)) continue;
    const double iz = 1.0 / t.z();
    p.mean = {view.fx * t.x() * iz + view.cx, view.fy * t.y() * iz + view.cy};
    Eigen::Matrix<double, 2, 3> j;
    j << view.fx * iz, 0.0, -view.fx * t.x() * iz * iz, 0.0, view.fy * iz, -view.fy * t.y() * iz * iz;
    const auto s = asset.scale(i);
    const Eigen::Matrix3d r = rotation_of(asset.rotations[i]);
    const Eigen::Matrix3d m = r * Eigen::Vector3d(s[0], s[1], s[2]).asDiagonal();
    const Eigen::Matrix3d sigma = m * m.transpose();
    const Eigen::Matrix<double, 2, 3> tw = j * wr;
    Eigen::Matrix2d cov = tw * sigma * tw.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    p.cov = cov;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    p.visible = det > 0.0 && cov(0, 0) > 0.0 && std::isfinite(det);
  }
  return out;
}

double SplatWeightCache::weight_sum(size_t pixel) const {
  double s = 0.0;
  for (uint32_t e = pixel_offsets[pixel]; e < pixel_offsets[pixel + 1]; ++e) s += entry_weight[e];
  return s;
}

SplatWeightCache build_weight_cache_reference(const GaussianAsset& asset, const CameraView& view) {
  const auto splats = make_splats(asset, view);
  std::vector<uint32_t> all(splats.size());
  std::iota(all.begin(), all.end(), 0u);
  std::vector<std::vector<Entry>> lists(static_cast<size_t>(view.width) * view.height);
  for (int y = 0; y < view.height; ++y) {
    for (int x = 0; x < view.width; ++x) composite_pixel(all, splats, x, y, lists[static_cast<size_t>(y) * view.width + x]);
  }
  return assemble(asset, view, lists);
}

SplatWeightCache build_weight_cache(const GaussianAsset& asset, const CameraView& view) {
  const auto splats = make_splats(asset, view);
  const int tiles_x = (view.width + kTile - 1) / kTile;
  const int tiles_y = (view.height + kTile - 1) / kTile;
  // Splats are appended in sorted order, so each tile list stays front to back.
  std::vector<std::vector<uint32_t>> bins(static_cast<size_t>(tiles_x) * tiles_y);
  for (uint32_t k = 0; k < splats.size(); ++k) {
    const Splat& s = splats[k];
    for (int ty = s.y0 / kTile; ty <= s.y1 / kTile; ++ty) {
      for (int tx = s.x0 / kTile; tx <= s.x1 / kTile; ++tx) bins[static_cast<size_t>(ty) * tiles_x + tx].push_back(k);
    }
  }
  std::vector<std::vector<Entry>> lists(static_cast<size_t>(view.width) * view.height);
#pragma omp parallel for schedule(dynamic)
  for (int t = 0; t < tiles_x * tiles_y; ++t) {
    const int tx = t % tiles_x, ty = t / tiles_x;
    for (int y = ty * kTile; y < std::min((ty + 1) * kTile, view.height); ++y) {
      for (int x = tx * kTile; x < std::min((tx + 1) * kTile, view.width); ++x) {
        composite_pixel(bins[t], splats, x, y, lists[static_cast<size_t>(y) * view.width + x]);
      }
    }
  }
  return assemble(asset, view, lists);
}

Image render(const GaussianAsset& asset, const SplatWeightCache& cache) { return render(asset.sh, cache); }

Image render(std::span<const double> sh, const SplatWeightCache& cache) {
  check_sh(sh, cache);
  std::vector<double> color;
  std::vector<uint8_t> active;
  gaussian_colors(sh, cache, color, active);
  Image img = composite(color, cache, true);
  for (double& v : img.data) v = clamp01(v);
  return img;
}

Image render_reference(std::span<const double> sh, const SplatWeightCache& cache) {
  check_sh(sh, cache);
  Image img(cache.width, cache.height, 3);
  const size_t n_pix = static_cast<size_t>(cache.width) * cache.height;
  for (size_t p = 0; p < n_pix; ++p) {
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (uint32_t e = cache.pixel_offsets[p]; e < cache.pixel_offsets[p + 1]; ++e) {
      const uint32_t i = cache.entry_gaussian[e];
      acc += cache.entry_weight[e] *
             sh_to_color(std::span<const double, kShDim>(sh.data() + static_cast<size_t>(i) * kShDim, kShDim),
                         cache.directions[i]);
    }
    for (int c = 0; c < 3; ++c) img.data[p * 3 + c] = clamp01(acc[c]);
  }
  return img;
}

std::vector<double> render_gradient(const GaussianAsset& asset, const SplatWeightCache& cache,
                                    const Image& upstream) {
  return render_gradient(asset.sh, cache, upstream);
}

std::vector<double> render_gradient(std::span<const double> sh, const SplatWeightCache& cache,
                                    const Image& upstream) {
  check_sh(sh, cache);
  check_upstream(upstream, cache);
  std::vector<double> color;
  std::vector<uint8_t> active;
  gaussian_colors(sh, cache, color, active);
  const Image pre = composite(color, cache, true);
  // Upstream gradient masked by the pixel clamp.
  std::vector<double> gpix(upstream.data.size());
  for (size_t k = 0; k < gpix.size(); ++k) {
    gpix[k] = (pre.data[k] >= 0.0 && pre.data[k] <= 1.0) ? upstream.data[k] : 0.0;
  }
  const size_t n = cache.num_gaussians;
  std::vector<double> grad(n * kShDim, 0.0);
#pragma omp parallel for schedule(dynamic, 64)
  for (size_t i = 0; i < n; ++i) {
    double gc[3] = {0, 0, 0};
    for (uint32_t k = cache.gaussian_offsets[i]; k < cache.gaussian_offsets[i + 1]; ++k) {
      const uint32_t e = cache.gaussian_entries[k];
      const double w = cache.entry_weight[e];
      const double* g = &gpix[static_cast<size_t>(cache.entry_pixel[e]) * 3];
      gc[0] += w * g[0];
      gc[1] += w * g[1];
      gc[2] += w * g[2];
    }
    const auto& y = cache.basis[i];
    double* out = &grad[i * kShDim];
    for (int c = 0; c < 3; ++c) {
      if (!active[i * 3 + c]) continue;
      for (int kk = 0; kk < kShCoeffs; ++kk) out[sh_index(c, kk)] = gc[c] * y[kk];
    }
  }
  return grad;
}

std::vector<double> render_gradient_reference(std::span<const double> sh, const SplatWeightCache& cache,
                                              const Image& upstream) {
  check_sh(sh, cache);
  check_upstream(upstream, cache);
  const size_t n = cache.num_gaussians;
  const size_t n_pix = static_cast<size_t>(cache.width) * cache.height;
  std::vector<double> color(n * 3), pre_color(n * 3);
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      double v = 0.5;
      for (int k = 0; k < kShCoeffs; ++k) v += sh[i * kShDim + sh_index(c, k)] * cache.basis[i][k];
      pre_color[i * 3 + c] = v;
      color[i * 3 + c] = std::max(0.0, v);
    }
  }
  std::vector<double> gcolor(n * 3, 0.0);
  for (size_t p = 0; p < n_pix; ++p) {
    double pre[3] = {0, 0, 0};
    for (uint32_t e = cache.pixel_offsets[p]; e < cache.pixel_offsets[p + 1]; ++e) {
      for (int c = 0; c < 3; ++c) pre[c] += cache.entry_weight[e] * color[cache.entry_gaussian[e] * 3 + c];
    }
    for (uint32_t e = cache.pixel_offsets[p]; e < cache.pixel_offsets[p + 1]; ++e) {
      for (int c = 0; c < 3; ++c) {
        if (pre[c] < 0.0 || pre[c] > 1.0) continue;
        gcolor[cache.entry_gaussian[e] * 3 + c] += cache.entry_weight[e] * upstream.data[p * 3 + c];
      }
    }
  }
  std::vector<double> grad(n * kShDim, 0.0);
  for (size_t i = 0; i < n; ++i) {
    for (int c = 0; c < 3; ++c) {
      if (!(pre_color[i * 3 + c] > 0.0)) continue;
      for (int k = 0; k < kShCoeffs; ++k) grad[i * kShDim + sh_index(c, k)] = gcolor[i * 3 + c] * cache.basis[i][k];
    }
  }
  return grad;
}

}  // namespace splatmark
