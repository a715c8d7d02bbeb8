#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "splatmark/common.hpp"
#include "splatmark/image.hpp"

namespace splatmark {

enum class DistortionKind { None, Crop, Scale, Rotate, Brightness, Jpeg, Noise, Blur, Occlusion, Combined };

std::string to_string(DistortionKind kind);
DistortionKind distortion_from_string(const std::string& name);

struct DistortionSpec {
  DistortionKind kind = DistortionKind::None;
  double crop_keep = 0.4;  // retained area fraction
  double scale_min = 0.75, scale_max = 1.25;
  double angle_min = -M_PI / 6, angle_max = M_PI / 6;
  double brightness_min = 0.5, brightness_max = 1.5;
  int jpeg_quality_min = 10, jpeg_quality_max = 10;
  double noise_sigma = 0.1;
  int blur_kernel = 3;
  double blur_sigma = 0.1;
  double occlusion_max = 0.2;  // largest masked area fraction
  uint64_t seed = 0;

  void validate() const;
};

// Concrete parameters drawn from a spec's ranges with its seed.
struct DistortionSample {
  DistortionKind kind = DistortionKind::None;
  double scale = 1.0;
  double angle = 0.0;
  double brightness = 1.0;
  int quality = 100;
  int occ_x0 = 0, occ_y0 = 0, occ_x1 = 0, occ_y1 = 0;  // half-open rectangle
};
DistortionSample sample_distortion(const DistortionSpec& spec, int width, int height);

struct TrainDistortion {
  Image output;
  DistortionSample sample;
  std::function<Image(const Image&)> backward;  // d loss / d input from d loss / d output
};

// Differentiable distortion with an exact adjoint (JPEG uses a smooth
// rounding surrogate). Identity parameters return the input unchanged.
TrainDistortion apply_train(const Image& image, const DistortionSpec& spec);

// Reference-grade distortion through OpenCV; deterministic for a given seed.
Image apply_eval(const Image& image, const DistortionSpec& spec);

// Differentiable JPEG at a fixed quality (exposed for validation).
TrainDistortion diff_jpeg(const Image& image, int quality);
// Real codec round trip through 8-bit baseline JPEG.
Image real_jpeg(const Image& image, int quality);
// IJG quality scaling of the standard tables; index 0 luminance, 1 chroma.
std::vector<int> jpeg_quant_table(int quality, bool chroma);

// Draws one training distortion per call: kinds uniformly from the enabled set.
struct DistortionSampler {
  std::vector<DistortionKind> kinds = {DistortionKind::None,   DistortionKind::Crop,       DistortionKind::Scale,
                                       DistortionKind::Rotate, DistortionKind::Brightness, DistortionKind::Jpeg};
  DistortionSpec base;

  DistortionSpec draw(Rng& rng) const;
};

}  // namespace splatmark
