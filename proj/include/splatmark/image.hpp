#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace splatmark {

// Row-major, channel-interleaved floating point image. Rendered images hold
// values in [0, 1]; gradients reuse the same container without that bound.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c = 3, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w) * h * c, fill) {}

  size_t size() const { return data.size(); }
  size_t pixels() const { return static_cast<size_t>(width) * height; }
  double& at(int y, int x, int c) { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  double at(int y, int x, int c) const { return data[(static_cast<size_t>(y) * width + x) * channels + c]; }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }
};

void require_same_shape(const Image& a, const Image& b, const char* what);
void require_finite(const Image& img, const char* what);

// 8-bit PNG export/import; values are clamped and rounded on write.
void save_png(const Image& img, const std::string& path);
Image load_png(const std::string& path);

// A fixed linear map between images, applied identically to every channel.
// Each output pixel is a weighted sum of input pixels. The adjoint scatters
// in a fixed order, so it is deterministic.
class PixelOp {
 public:
  struct Tap {
    uint32_t src;
    double weight;
  };

  PixelOp() = default;
  PixelOp(int in_w, int in_h, int out_w, int out_h);

  int in_width() const { return in_w_; }
  int in_height() const { return in_h_; }
  int out_width() const { return out_w_; }
  int out_height() const { return out_h_; }

  void add_tap(uint32_t dst, uint32_t src, double w);
  // Must be called once after all taps are added, in destination order.
  void finish();

  Image apply(const Image& in) const;
  Image adjoint(const Image& grad_out) const;
  PixelOp compose_after(const PixelOp& first) const;  // this ∘ first

 private:
  int in_w_ = 0, in_h_ = 0, out_w_ = 0, out_h_ = 0;
  std::vector<uint32_t> offsets_;
  std::vector<uint32_t> pending_dst_;
  std::vector<Tap> taps_;
};

enum class Border { Clamp, Reflect };

// Bilinear sampling. `map` receives an output pixel center (x, y) in output
// pixel units and returns the continuous source location in input pixel
// units, where input pixel i covers [i, i + 1).
PixelOp make_sampling_op(int in_w, int in_h, int out_w, int out_h,
                         const std::function<void(double, double, double&, double&)>& map,
                         Border border);

// Bilinear resize with half-pixel centers and edge clamping.
PixelOp make_resize_op(int in_w, int in_h, int out_w, int out_h);

Image resize_bilinear(const Image& in, int out_w, int out_h);

}  // namespace splatmark
