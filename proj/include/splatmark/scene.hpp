#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "splatmark/asset.hpp"
#include "splatmark/image.hpp"
#include "splatmark/renderer.hpp"

namespace splatmark {

struct ToyScene {
  GaussianAsset asset;
  std::vector<CameraView> views;           // training ring
  std::vector<CameraView> held_out_views;  // interleaved between training views
  std::vector<Image> ground_truth;         // renders of `views`
};

// Procedural full-coverage Gaussian ball with smooth colors and random SH up
// to degree 3, viewed by an inward-facing ring of cameras. Ground truth is
// the renderer's own output, so no fitting is involved.
ToyScene make_toy_scene(uint64_t seed, size_t n_gaussians, size_t n_views, int resolution,
                        size_t n_held_out = 4);

// Camera at `eye` looking at `target`, image y axis pointing away from `up`.
CameraView look_at(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, const Eigen::Vector3d& up,
                   double focal, int width, int height);

std::string views_to_json(const std::vector<CameraView>& views, const std::vector<CameraView>& held_out);
void views_from_json(const std::string& text, std::vector<CameraView>& views, std::vector<CameraView>& held_out);
void save_views(const std::string& path, const std::vector<CameraView>& views,
                const std::vector<CameraView>& held_out);
void load_views(const std::string& path, std::vector<CameraView>& views, std::vector<CameraView>& held_out);

}  // namespace splatmark
