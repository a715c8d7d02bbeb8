#include "splatmark/distort.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace splatmark {

namespace {

constexpr int kLumaBase[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                               14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                               18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                               49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
constexpr int kChromaBase[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                                 24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                                 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                                 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

Image identity_backward(const Image& g) { return g; }

TrainDistortion linear_distortion(const Image& image, PixelOp op, const DistortionSample& sample) {
  TrainDistortion out;
  out.sample = sample;
  out.output = op.apply(image);
  auto shared = std::make_shared<PixelOp>(std::move(op));
  out.backward = [shared](const Image& g) { return shared->adjoint(g); };
  return out;
}

// Multiplies by `factor` and clamps to [0, 1]; gradient passes where the
// product lies inside the interval.
TrainDistortion clamp_scaled(const Image& image, double factor, const DistortionSample& sample) {
  TrainDistortion out;
  out.sample = sample;
  out.output = image;
  auto mask = std::make_shared<std::vector<uint8_t>>(image.size());
  for (size_t k = 0; k < image.size(); ++k) {
    const double v = factor * image.data[k];
    (*mask)[k] = v >= 0.0 && v <= 1.0;
    out.output.data[k] = std::clamp(v, 0.0, 1.0);
  }
  out.backward = [mask, factor](const Image& g) {
    Image r = g;
    for (size_t k = 0; k < r.size(); ++k) r.data[k] = (*mask)[k] ? factor * g.data[k] : 0.0;
    return r;
  };
  return out;
}

PixelOp center_crop_op(int w, int h, double keep) {
  const double r = std::sqrt(keep);
  return make_sampling_op(
      w, h, w, h,
      [=](double x, double y, double& u, double& v) {
        u = 0.5 * w + (x - 0.5 * w) * r;
        v = 0.5 * h + (y - 0.5 * h) * r;
      },
      Border::Clamp);
}

PixelOp rotation_op(int w, int h, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  const double cx = 0.5 * w, cy = 0.5 * h;
  // Same sense as OpenCV's getRotationMatrix2D: output pixel (x, y) reads
  // the input at the inverse rotation.
  return make_sampling_op(
      w, h, w, h,
      [=](double x, double y, double& u, double& v) {
        const double dx = x - cx, dy = y - cy;
        u = cx + c * dx - s * dy;
        v = cy + s * dx + c * dy;
      },
      Border::Reflect);
}

PixelOp gaussian_blur_op(int w, int h, int ksize, double sigma) {
  const int r = ksize / 2;
  std::vector<double> k(static_cast<size_t>(ksize));
  double sum = 0.0;
  for (int i = 0; i < ksize; ++i) {
    k[i] = std::exp(-0.5 * (i - r) * (i - r) / (sigma * sigma));
    sum += k[i];
  }
  for (double& v : k) v /= sum;
  auto reflect101 = [](int i, int n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return i;
  };
  PixelOp op(w, h, w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          const double wt = k[dy + r] * k[dx + r];
          op.add_tap(static_cast<uint32_t>(y * w + x),
                     static_cast<uint32_t>(reflect101(y + dy, h) * w + reflect101(x + dx, w)), wt);
        }
      }
    }
  }
  op.finish();
  return op;
}

// ---- Differentiable JPEG -------------------------------------------------------

struct Plane {
  int w = 0, h = 0;
  std::vector<double> v;
  Plane() = default;
  Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0.0) {}
  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

const std::array<double, 64>& dct_matrix() {
  static const std::array<double, 64> m = [] {
    std::array<double, 64> a{};
    for (int u = 0; u < 8; ++u) {
      const double cu = u == 0 ? std::sqrt(0.125) : 0.5;
      for (int x = 0; x < 8; ++x) a[u * 8 + x] = cu * std::cos((2 * x + 1) * u * M_PI / 16.0);
    }
    return a;
  }();
  return m;
}

// In-place 8x8 block transform: forward D B D^T or inverse D^T B D.
void block_transform(Plane& p, bool inverse) {
  const auto& d = dct_matrix();
  for (int by = 0; by < p.h; by += 8) {
    for (int bx = 0; bx < p.w; bx += 8) {
      double b[64], t[64];
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) b[y * 8 + x] = p.at(by + y, bx + x);
      }
      for (int u = 0; u < 8; ++u) {
        for (int x = 0; x < 8; ++x) {
          double s = 0.0;
          for (int y = 0; y < 8; ++y) s += (inverse ? d[y * 8 + u] : d[u * 8 + y]) * b[y * 8 + x];
          t[u * 8 + x] = s;
        }
      }
      for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
          double s = 0.0;
          for (int x = 0; x < 8; ++x) s += t[u * 8 + x] * (inverse ? d[x * 8 + v] : d[v * 8 + x]);
          p.at(by + u, bx + v) = s;
        }
      }
    }
  }
}

// Replicates edges up to (pw, ph); adjoint folds the padding back.
Plane pad_edges(const Plane& p, int pw, int ph) {
  Plane out(pw, ph);
  for (int y = 0; y < ph; ++y) {
    for (int x = 0; x < pw; ++x) out.at(y, x) = p.at(std::min(y, p.h - 1), std::min(x, p.w - 1));
  }
  return out;
}
Plane pad_edges_adjoint(const Plane& g, int w, int h) {
  Plane out(w, h);
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) out.at(std::min(y, h - 1), std::min(x, w - 1)) += g.at(y, x);
  }
  return out;
}

Plane downsample2(const Plane& p) {
  Plane out(p.w / 2, p.h / 2);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) {
      out.at(y, x) = 0.25 * (p.at(2 * y, 2 * x) + p.at(2 * y, 2 * x + 1) + p.at(2 * y + 1, 2 * x) +
                             p.at(2 * y + 1, 2 * x + 1));
    }
  }
  return out;
}
Plane downsample2_adjoint(const Plane& g) {
  Plane out(g.w * 2, g.h * 2);
  for (int y = 0; y < out.h; ++y) {
    for (int x = 0; x < out.w; ++x) out.at(y, x) = 0.25 * g.at(y / 2, x / 2);
  }
  return out;
}

Plane apply_op(const PixelOp& op, const Plane& p, bool adjoint) {
  Image img(p.w, p.h, 1);
  img.data = p.v;
  const Image r = adjoint ? op.adjoint(img) : op.apply(img);
  Plane out(r.width, r.height);
  out.v = r.data;
  return out;
}

struct JpegState {
  int w = 0, h = 0, pw = 0, ph = 0;
  std::vector<int> qy, qc;
  PixelOp upsample;                 // chroma (pw/2, ph/2) -> (pw, ph)
  std::array<Plane, 3> quotients;   // DCT coefficients divided by the table
  std::vector<uint8_t> clamp_mask;  // output inside [0, 1]
};

double surrogate_round(double q) {
  const double r = std::nearbyint(q);
  const double d = q - r;
  return r + d * d * d;
}
double surrogate_round_grad(double q) {
  const double d = q - std::nearbyint(q);
  return 3.0 * d * d;
}

}  // namespace

std::vector<int> jpeg_quant_table(int quality, bool chroma) {
  quality = std::clamp(quality, 1, 100);
  const int scale = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  std::vector<int> t(64);
  for (int i = 0; i < 64; ++i) {
    const int base = chroma ? kChromaBase[i] : kLumaBase[i];
    t[i] = std::clamp((base * scale + 50) / 100, 1, 255);
  }
  return t;
}

TrainDistortion diff_jpeg(const Image& image, int quality) {
  if (image.channels != 3) throw Error("diff_jpeg: expected 3 channels");
  auto st = std::make_shared<JpegState>();
  st->w = image.width;
  st->h = image.height;
  st->pw = (image.width + 15) / 16 * 16;
  st->ph = (image.height + 15) / 16 * 16;
  st->qy = jpeg_quant_table(quality, false);
  st->qc = jpeg_quant_table(quality, true);
  st->upsample = make_resize_op(st->pw / 2, st->ph / 2, st->pw, st->ph);

  std::array<Plane, 3> ycc = {Plane(st->w, st->h), Plane(st->w, st->h), Plane(st->w, st->h)};
  for (int y = 0; y < st->h; ++y) {
    for (int x = 0; x < st->w; ++x) {
      const double r = 255.0 * image.at(y, x, 0), g = 255.0 * image.at(y, x, 1), b = 255.0 * image.at(y, x, 2);
      ycc[0].at(y, x) = 0.299 * r + 0.587 * g + 0.114 * b - 128.0;
      ycc[1].at(y, x) = -0.168736 * r - 0.331264 * g + 0.5 * b;
      ycc[2].at(y, x) = 0.5 * r - 0.418688 * g - 0.081312 * b;
    }
  }
  std::array<Plane, 3> rec;
  for (int c = 0; c < 3; ++c) {
    Plane p = pad_edges(ycc[c], st->pw, st->ph);
    if (c > 0) p = downsample2(p);
    block_transform(p, false);
    const auto& table = c == 0 ? st->qy : st->qc;
    st->quotients[c] = p;
    for (int y = 0; y < p.h; ++y) {
      for (int x = 0; x < p.w; ++x) {
        const double q = table[(y % 8) * 8 + x % 8];
        st->quotients[c].at(y, x) = p.at(y, x) / q;
        p.at(y, x) = surrogate_round(p.at(y, x) / q) * q;
      }
    }
    block_transform(p, true);
    if (c > 0) p = apply_op(st->upsample, p, false);
    rec[c] = p;
  }
  TrainDistortion out;
  out.sample.kind = DistortionKind::Jpeg;
  out.sample.quality = quality;
  out.output = Image(st->w, st->h, 3);
  st->clamp_mask.assign(image.size(), 0);
  for (int y = 0; y < st->h; ++y) {
    for (int x = 0; x < st->w; ++x) {
      const double yy = rec[0].at(y, x) + 128.0, cb = rec[1].at(y, x), cr = rec[2].at(y, x);
      const double rgb[3] = {yy + 1.402 * cr, yy - 0.344136 * cb - 0.714136 * cr, yy + 1.772 * cb};
      for (int c = 0; c < 3; ++c) {
        const double v = rgb[c] / 255.0;
        const size_t k = (static_cast<size_t>(y) * st->w + x) * 3 + c;
        st->clamp_mask[k] = v >= 0.0 && v <= 1.0;
        out.output.data[k] = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  out.backward = [st](const Image& g) {
    std::array<Plane, 3> grec = {Plane(st->pw, st->ph), Plane(st->pw, st->ph), Plane(st->pw, st->ph)};
    for (int y = 0; y < st->h; ++y) {
      for (int x = 0; x < st->w; ++x) {
        double gr[3];
        for (int c = 0; c < 3; ++c) {
          const size_t k = (static_cast<size_t>(y) * st->w + x) * 3 + c;
          gr[c] = st->clamp_mask[k] ? g.data[k] / 255.0 : 0.0;
        }
        grec[0].at(y, x) = gr[0] + gr[1] + gr[2];
        grec[1].at(y, x) = -0.344136 * gr[1] + 1.772 * gr[2];
        grec[2].at(y, x) = 1.402 * gr[0] - 0.714136 * gr[1];
      }
    }
    std::array<Plane, 3> gycc;
    for (int c = 0; c < 3; ++c) {
      Plane p = grec[c];
      if (c > 0) p = apply_op(st->upsample, p, true);
      // The inverse block DCT is orthonormal, so its adjoint is the forward DCT.
      block_transform(p, false);
      const auto& table = c == 0 ? st->qy : st->qc;
      for (int y = 0; y < p.h; ++y) {
        for (int x = 0; x < p.w; ++x) {
          // d/dF [round~(F / q) q] = round~'(F / q)
          p.at(y, x) *= surrogate_round_grad(st->quotients[c].at(y, x));
        }
      }
      block_transform(p, true);
      if (c > 0) p = downsample2_adjoint(p);
      gycc[c] = pad_edges_adjoint(p, st->w, st->h);
    }
    Image gi(st->w, st->h, 3);
    for (int y = 0; y < st->h; ++y) {
      for (int x = 0; x < st->w; ++x) {
        const double gy = gycc[0].at(y, x), gb = gycc[1].at(y, x), gcr = gycc[2].at(y, x);
        gi.at(y, x, 0) = 255.0 * (0.299 * gy - 0.168736 * gb + 0.5 * gcr);
        gi.at(y, x, 1) = 255.0 * (0.587 * gy - 0.331264 * gb - 0.418688 * gcr);
        gi.at(y, x, 2) = 255.0 * (0.114 * gy + 0.5 * gb - 0.081312 * gcr);
      }
    }
    return gi;
  };
  return out;
}

// ---- Specs and sampling ------------------------------------------------------------

std::string to_string(DistortionKind kind) {
  switch (kind) {
    case DistortionKind::None: return "none";
    case DistortionKind::Crop: return "crop";
    case DistortionKind::Scale: return "scale";
    case DistortionKind::Rotate: return "rotate";
    case DistortionKind::Brightness: return "brightness";
    case DistortionKind::Jpeg: return "jpeg";
    case DistortionKind::Noise: return "noise";
    case DistortionKind::Blur: return "blur";
    case DistortionKind::Occlusion: return "occlusion";
    case DistortionKind::Combined: return "combined";
  }
  return "unknown";
}

DistortionKind distortion_from_string(const std::string& name) {
  for (auto k : {DistortionKind::None, DistortionKind::Crop, DistortionKind::Scale, DistortionKind::Rotate,
                 DistortionKind::Brightness, DistortionKind::Jpeg, DistortionKind::Noise, DistortionKind::Blur,
                 DistortionKind::Occlusion, DistortionKind::Combined}) {
    if (to_string(k) == name) return k;
  }
  throw Error("unknown distortion kind: " + name);
}

void DistortionSpec::validate() const {
  auto check = [](bool ok, const char* what) {
    if (!ok) throw Error(std::string("invalid distortion spec: ") + what);
  };
  check(crop_keep > 0.0 && crop_keep <= 1.0, "crop keep fraction must lie in (0, 1]");
  check(scale_min > 0.0 && scale_min <= scale_max, "scale range");
  check(angle_min <= angle_max && angle_max - angle_min <= 2 * M_PI, "angle range");
  check(brightness_min >= 0.0 && brightness_min <= brightness_max, "brightness range");
  check(jpeg_quality_min >= 1 && jpeg_quality_min <= jpeg_quality_max && jpeg_quality_max <= 100, "jpeg quality");
  check(noise_sigma >= 0.0, "noise sigma");
  check(blur_kernel >= 1 && blur_kernel % 2 == 1 && blur_sigma > 0.0, "blur kernel must be odd, sigma positive");
  check(occlusion_max >= 0.0 && occlusion_max <= 0.2, "occlusion fraction must lie in [0, 0.2]");
}

DistortionSample sample_distortion(const DistortionSpec& spec, int width, int height) {
  spec.validate();
  Rng rng(derive_seed(spec.seed, "distortion"));
  DistortionSample s;
  s.kind = spec.kind;
  s.scale = spec.scale_min == spec.scale_max ? spec.scale_min : rng.uniform(spec.scale_min, spec.scale_max);
  s.angle = spec.angle_min == spec.angle_max ? spec.angle_min : rng.uniform(spec.angle_min, spec.angle_max);
  s.brightness = spec.brightness_min == spec.brightness_max ? spec.brightness_min
                                                            : rng.uniform(spec.brightness_min, spec.brightness_max);
  s.quality = spec.jpeg_quality_min +
              static_cast<int>(rng.below(static_cast<uint64_t>(spec.jpeg_quality_max - spec.jpeg_quality_min + 1)));
  const double area = rng.uniform(0.0, spec.occlusion_max) * width * height;
  const double aspect = std::exp(rng.uniform(std::log(0.5), std::log(2.0)));
  const int ow = std::clamp(static_cast<int>(std::lround(std::sqrt(area * aspect))), 0, width);
  const int oh = ow > 0 ? std::clamp(static_cast<int>(std::floor(area / ow)), 0, height) : 0;
  s.occ_x0 = static_cast<int>(rng.below(static_cast<uint64_t>(width - ow + 1)));
  s.occ_y0 = static_cast<int>(rng.below(static_cast<uint64_t>(height - oh + 1)));
  s.occ_x1 = s.occ_x0 + ow;
  s.occ_y1 = s.occ_y0 + oh;
  return s;
}

DistortionSpec DistortionSampler::draw(Rng& rng) const {
  if (kinds.empty()) throw Error("distortion sampler has no kinds enabled");
  DistortionSpec spec = base;
  spec.kind = kinds[rng.below(kinds.size())];
  spec.seed = rng.next_u64();
  return spec;
}

// ---- Training path ----------------------------------------------------------------

TrainDistortion apply_train(const Image& image, const DistortionSpec& spec) {
  const DistortionSample s = sample_distortion(spec, image.width, image.height);
  const int w = image.width, h = image.height;
  auto identity = [&]() {
    TrainDistortion out;
    out.output = image;
    out.sample = s;
    out.backward = identity_backward;
    return out;
  };
  switch (spec.kind) {
    case DistortionKind::None:
      return identity();
    case DistortionKind::Crop:
      if (spec.crop_keep == 1.0) return identity();
      return linear_distortion(image, center_crop_op(w, h, spec.crop_keep), s);
    case DistortionKind::Scale: {
      const int sw = std::max(1, static_cast<int>(std::lround(s.scale * w)));
      const int sh = std::max(1, static_cast<int>(std::lround(s.scale * h)));
      if (sw == w && sh == h) return identity();
      const PixelOp down = make_resize_op(w, h, sw, sh);
      const PixelOp up = make_resize_op(sw, sh, w, h);
      return linear_distortion(image, up.compose_after(down), s);
    }
    case DistortionKind::Rotate:
      if (s.angle == 0.0) return identity();
      return linear_distortion(image, rotation_op(w, h, s.angle), s);
    case DistortionKind::Brightness:
      if (s.brightness == 1.0) return identity();
      return clamp_scaled(image, s.brightness, s);
    case DistortionKind::Jpeg: {
      TrainDistortion out = diff_jpeg(image, s.quality);
      out.sample = s;
      return out;
    }
    case DistortionKind::Noise: {
      if (spec.noise_sigma == 0.0) return identity();
      Rng rng(derive_seed(spec.seed, "noise"));
      Image noisy = image;
      for (double& v : noisy.data) v += spec.noise_sigma * rng.normal();
      TrainDistortion out = clamp_scaled(noisy, 1.0, s);
      return out;
    }
    case DistortionKind::Blur:
      return linear_distortion(image, gaussian_blur_op(w, h, spec.blur_kernel, spec.blur_sigma), s);
    case DistortionKind::Occlusion: {
      TrainDistortion out;
      out.sample = s;
      out.output = image;
      for (int y = s.occ_y0; y < s.occ_y1; ++y) {
        for (int x = s.occ_x0; x < s.occ_x1; ++x) {
          for (int c = 0; c < image.channels; ++c) out.output.at(y, x, c) = 0.0;
        }
      }
      out.backward = [s](const Image& g) {
        Image r = g;
        for (int y = s.occ_y0; y < s.occ_y1; ++y) {
          for (int x = s.occ_x0; x < s.occ_x1; ++x) {
            for (int c = 0; c < r.channels; ++c) r.at(y, x, c) = 0.0;
          }
        }
        return r;
      };
      return out;
    }
    case DistortionKind::Combined: {
      DistortionSpec crop = spec, bright = spec, jpeg = spec;
      crop.kind = DistortionKind::Crop;
      bright.kind = DistortionKind::Brightness;
      jpeg.kind = DistortionKind::Jpeg;
      auto a = std::make_shared<TrainDistortion>(apply_train(image, crop));
      auto b = std::make_shared<TrainDistortion>(apply_train(a->output, bright));
      auto c = std::make_shared<TrainDistortion>(apply_train(b->output, jpeg));
      TrainDistortion out;
      out.sample = s;
      out.output = c->output;
      out.backward = [a, b, c](const Image& g) { return a->backward(b->backward(c->backward(g))); };
      return out;
    }
  }
  throw Error("apply_train: unsupported distortion kind");
}

// ---- Evaluation path -----------------------------------------------------------

namespace {

cv::Mat to_mat(const Image& img) {
  cv::Mat m(img.height, img.width, CV_64FC3);
  std::copy(img.data.begin(), img.data.end(), m.ptr<double>(0));
  return m;
}

Image from_mat(const cv::Mat& m) {
  cv::Mat d;
  m.convertTo(d, CV_64FC3);
  Image img(d.cols, d.rows, 3);
  for (int y = 0; y < d.rows; ++y) std::copy(d.ptr<double>(y), d.ptr<double>(y) + d.cols * 3, &img.data[static_cast<size_t>(y) * d.cols * 3]);
  for (double& v : img.data) v = std::clamp(v, 0.0, 1.0);
  return img;
}

}  // namespace

Image real_jpeg(const Image& image, int quality) {
  cv::Mat rgb8(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        // OpenCV expects BGR channel order.
        rgb8.ptr<uint8_t>(y)[x * 3 + (2 - c)] =
            static_cast<uint8_t>(std::lround(std::clamp(image.at(y, x, c), 0.0, 1.0) * 255.0));
      }
    }
  }
  std::vector<uint8_t> buf;
  if (!cv::imencode(".jpg", rgb8, buf, {cv::IMWRITE_JPEG_QUALITY, quality})) throw Error("JPEG encode failed");
  const cv::Mat dec = cv::imdecode(buf, cv::IMREAD_COLOR);
  Image out(image.width, image.height, 3);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = dec.ptr<uint8_t>(y)[x * 3 + (2 - c)] / 255.0;
    }
  }
  return out;
}

Image apply_eval(const Image& image, const DistortionSpec& spec) {
  if (image.channels != 3) throw Error("apply_eval: expected 3 channels");
  const DistortionSample s = sample_distortion(spec, image.width, image.height);
  const int w = image.width, h = image.height;
  switch (spec.kind) {
    case DistortionKind::None:
      return image;
    case DistortionKind::Crop: {
      const int cw = std::max(1, static_cast<int>(std::lround(w * std::sqrt(spec.crop_keep))));
      const int ch = std::max(1, static_cast<int>(std::lround(h * std::sqrt(spec.crop_keep))));
      const cv::Mat src = to_mat(image);
      cv::Mat dst;
      cv::resize(src(cv::Rect((w - cw) / 2, (h - ch) / 2, cw, ch)), dst, cv::Size(w, h), 0, 0, cv::INTER_CUBIC);
      return from_mat(dst);
    }
    case DistortionKind::Scale: {
      const int sw = std::max(1, static_cast<int>(std::lround(s.scale * w)));
      const int sh = std::max(1, static_cast<int>(std::lround(s.scale * h)));
      cv::Mat mid, dst;
      cv::resize(to_mat(image), mid, cv::Size(sw, sh), 0, 0, cv::INTER_CUBIC);
      cv::resize(mid, dst, cv::Size(w, h), 0, 0, cv::INTER_CUBIC);
      return from_mat(dst);
    }
    case DistortionKind::Rotate: {
      const cv::Mat rot = cv::getRotationMatrix2D(cv::Point2f((w - 1) * 0.5f, (h - 1) * 0.5f), s.angle * 180.0 / M_PI, 1.0);
      cv::Mat dst;
      cv::warpAffine(to_mat(image), dst, rot, cv::Size(w, h), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
      return from_mat(dst);
    }
    case DistortionKind::Brightness: {
      Image out = image;
      for (double& v : out.data) v = std::clamp(v * s.brightness, 0.0, 1.0);
      return out;
    }
    case DistortionKind::Jpeg:
      return real_jpeg(image, s.quality);
    case DistortionKind::Noise: {
      if (spec.noise_sigma == 0.0) return image;
      Rng rng(derive_seed(spec.seed, "noise"));
      Image out = image;
      for (double& v : out.data) v = std::clamp(v + spec.noise_sigma * rng.normal(), 0.0, 1.0);
      return out;
    }
    case DistortionKind::Blur: {
      cv::Mat dst;
      cv::GaussianBlur(to_mat(image), dst, cv::Size(spec.blur_kernel, spec.blur_kernel), spec.blur_sigma,
                       spec.blur_sigma, cv::BORDER_REFLECT_101);
      return from_mat(dst);
    }
    case DistortionKind::Occlusion: {
      Image out = image;
      for (int y = s.occ_y0; y < s.occ_y1; ++y) {
        for (int x = s.occ_x0; x < s.occ_x1; ++x) {
          for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.0;
        }
      }
      return out;
    }
    case DistortionKind::Combined: {
      DistortionSpec crop = spec, bright = spec, jpeg = spec;
      crop.kind = DistortionKind::Crop;
      bright.kind = DistortionKind::Brightness;
      jpeg.kind = DistortionKind::Jpeg;
      return apply_eval(apply_eval(apply_eval(image, crop), bright), jpeg);
    }
  }
  throw Error("apply_eval: unsupported distortion kind");
}

}  // namespace splatmark
