#include "splatmark/scene.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <Eigen/Geometry>
#include <json.hpp>

#include "splatmark/common.hpp"

namespace splatmark {

namespace {

constexpr double kBallRadius = 2.2;
constexpr double kRingRadius = 4.0;
constexpr double kRingHeight = -0.6;  // slightly above the equator (y points down)

// Smooth color field so renders have natural low-frequency structure.
Eigen::Vector3d base_color(const Eigen::Vector3d& p, const double phase[9]) {
  Eigen::Vector3d c;
  for (int k = 0; k < 3; ++k) {
    c[k] = 0.5 + 0.22 * std::sin(1.3 * p.x() + phase[3 * k]) * std::cos(1.1 * p.y() + phase[3 * k + 1]) +
           0.15 * std::sin(1.7 * p.z() + 0.8 * p.x() + phase[3 * k + 2]);
  }
  return c;
}

}  // namespace

CameraView look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                   double focal, int width, int height) {
  const Eigen::Vector3d z = (target - eye).normalized();
  const Eigen::Vector3d y = (-up + up.dot(z) * z).normalized();
  const Eigen::Vector3d x = y.cross(z);
  CameraView v;
  Eigen::Matrix3d r;
  r.row(0) = x;
  r.row(1) = y;
  r.row(2) = z;
  v.world_to_camera.setIdentity();
  v.world_to_camera.topLeftCorner<3, 3>() = r;
  v.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  v.fx = v.fy = focal;
  v.cx = width / 2.0;
  v.cy = height / 2.0;
  v.width = width;
  v.height = height;
  return v;
}

ToyScene make_toy_scene(uint64_t seed, size_t n_gaussians, size_t n_views, int resolution, size_t n_held_out) {
  if (n_gaussians < 10) throw Error("make_toy_scene: n_gaussians must be at least 10");
  if (n_views < 1) throw Error("make_toy_scene: n_views must be at least 1");
  if (resolution < 8) throw Error("make_toy_scene: resolution must be at least 8");
  Rng rng(derive_seed(seed, "toy-scene"));
  double phase[9];
  for (double& p : phase) p = rng.uniform(0.0, 2.0 * M_PI);

  ToyScene scene;
  GaussianAsset& a = scene.asset;
  a.positions.resize(n_gaussians);
  a.log_scales.resize(n_gaussians);
  a.rotations.resize(n_gaussians);
  a.opacity_logits.resize(n_gaussians);
  a.sh.assign(n_gaussians * kShDim, 0.0);
  constexpr double kC0 = 0.28209479177387814;
  // Typical spacing of uniformly placed points; scales follow it so the
  // ball stays opaque regardless of the Gaussian count.
  const double spacing = kBallRadius * std::cbrt(4.0 * M_PI / 3.0 / static_cast<double>(n_gaussians));
  for (size_t i = 0; i < n_gaussians; ++i) {
    Eigen::Vector3d p;
    do {
      p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    } while (p.squaredNorm() > 1.0);
    p *= kBallRadius;
    a.positions[i] = {p.x(), p.y(), p.z()};
    for (int k = 0; k < 3; ++k) a.log_scales[i][k] = std::log(spacing * rng.uniform(0.45, 1.0));
    Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    q.normalize();
    a.rotations[i] = {q[0], q[1], q[2], q[3]};
    // Mostly solid Gaussians with a faint minority.
    const double alpha = rng.uniform() < 0.1 ? rng.uniform(0.02, 0.15) : rng.uniform(0.55, 0.95);
    a.opacity_logits[i] = std::log(alpha / (1.0 - alpha));
    const Eigen::Vector3d col = base_color(p, phase);
    double* h = &a.sh[i * kShDim];
    for (int c = 0; c < 3; ++c) {
      h[sh_index(c, 0)] = (col[c] + rng.uniform(-0.06, 0.06) - 0.5) / kC0;
      for (int k = 1; k < kShCoeffs; ++k) {
        const double amp = k < 4 ? 0.12 : (k < 9 ? 0.06 : 0.03);
        h[sh_index(c, k)] = rng.uniform(-amp, amp);
      }
    }
  }

  // Focal length chosen so even the image corners look into the ball.
  const double half_angle = std::asin(kBallRadius / std::hypot(kRingRadius, kRingHeight));
  const double focal = 0.5 * std::sqrt(2.0) * resolution / std::tan(0.88 * half_angle);
  const Eigen::Vector3d up(0, -1, 0);  // world y points down, like image rows
  auto ring = [&](double theta) {
    const Eigen::Vector3d eye(kRingRadius * std::cos(theta), kRingHeight, kRingRadius * std::sin(theta));
    return look_at(eye, Eigen::Vector3d::Zero(), up, focal, resolution, resolution);
  };
  for (size_t k = 0; k < n_views; ++k) scene.views.push_back(ring(2.0 * M_PI * k / n_views));
  for (size_t k = 0; k < n_held_out; ++k) {
    const double slot = std::floor(static_cast<double>(k) * n_views / n_held_out) + 0.5;
    scene.held_out_views.push_back(ring(2.0 * M_PI * slot / n_views));
  }
  for (const auto& v : scene.views) scene.ground_truth.push_back(render(a, build_weight_cache(a, v)));
  return scene;
}

std::string views_to_json(const std::vector<CameraView>& views, const std::vector<CameraView>& held_out) {
  auto encode = [](const std::vector<CameraView>& vs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& v : vs) {
      nlohmann::json m = nlohmann::json::array();
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m.push_back(v.world_to_camera(r, c));
      }
      arr.push_back({{"world_to_camera", m},
                     {"fx", v.fx},
                     {"fy", v.fy},
                     {"cx", v.cx},
                     {"cy", v.cy},
                     {"width", v.width},
                     {"height", v.height}});
    }
    return arr;
  };
  nlohmann::json j = {{"version", 1}, {"views", encode(views)}, {"held_out_views", encode(held_out)}};
  return j.dump(2);
}

void views_from_json(const std::string& text, std::vector<CameraView>& views, std::vector<CameraView>& held_out) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("views file: ") + e.what());
  }
  auto decode = [](const nlohmann::json& arr) {
    std::vector<CameraView> out;
    for (const auto& e : arr) {
      CameraView v;
      const auto& m = e.at("world_to_camera");
      if (m.size() != 16) throw ParseError("views file: world_to_camera must have 16 entries");
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) v.world_to_camera(r, c) = m.at(r * 4 + c).get<double>();
      }
      v.fx = e.at("fx").get<double>();
      v.fy = e.at("fy").get<double>();
      v.cx = e.at("cx").get<double>();
      v.cy = e.at("cy").get<double>();
      v.width = e.at("width").get<int>();
      v.height = e.at("height").get<int>();
      v.validate();
      out.push_back(v);
    }
    return out;
  };
  try {
    views = decode(j.at("views"));
    held_out = j.contains("held_out_views") ? decode(j.at("held_out_views")) : std::vector<CameraView>{};
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("views file: ") + e.what());
  }
}

void save_views(const std::string& path, const std::vector<CameraView>& views,
                const std::vector<CameraView>& held_out) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write views file: " + path);
  out << views_to_json(views, held_out) << "\n";
}

void load_views(const std::string& path, std::vector<CameraView>& views, std::vector<CameraView>& held_out) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read views file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  views_from_json(ss.str(), views, held_out);
}

}  // namespace splatmark
