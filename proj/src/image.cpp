#include "splatmark/image.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <opencv2/imgcodecs.hpp>

#include "splatmark/common.hpp"

namespace splatmark {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw Error(std::string(what) + ": image shape mismatch (" + std::to_string(a.width) + "x" +
                std::to_string(a.height) + "x" + std::to_string(a.channels) + " vs " +
                std::to_string(b.width) + "x" + std::to_string(b.height) + "x" +
                std::to_string(b.channels) + ")");
  }
}

void require_finite(const Image& img, const char* what) {
  for (double v : img.data) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite pixel value");
  }
}

void save_png(const Image& img, const std::string& path) {
  if (img.channels != 3 && img.channels != 1) throw Error("save_png: expected 1 or 3 channels");
  cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < img.channels; ++c) {
        double v = std::clamp(img.at(y, x, c), 0.0, 1.0);
        // OpenCV stores BGR.
        int cc = img.channels == 3 ? 2 - c : 0;
        m.ptr<uint8_t>(y)[x * img.channels + cc] = static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path, m)) throw Error("save_png: cannot write " + path);
}

Image load_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_COLOR);
  if (m.empty()) throw Error("load_png: cannot read " + path);
  Image img(m.cols, m.rows, 3);
  for (int y = 0; y < m.rows; ++y) {
    for (int x = 0; x < m.cols; ++x) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = m.ptr<uint8_t>(y)[x * 3 + (2 - c)] / 255.0;
    }
  }
  return img;
}

PixelOp::PixelOp(int in_w, int in_h, int out_w, int out_h)
    : in_w_(in_w), in_h_(in_h), out_w_(out_w), out_h_(out_h) {}

void PixelOp::add_tap(uint32_t dst, uint32_t src, double w) {
  pending_dst_.push_back(dst);
  taps_.push_back({src, w});
}

void PixelOp::finish() {
  const size_t n_out = static_cast<size_t>(out_w_) * out_h_;
  offsets_.assign(n_out + 1, 0);
  for (uint32_t d : pending_dst_) {
    if (d >= n_out) throw Error("PixelOp: destination out of range");
    ++offsets_[d + 1];
  }
  for (size_t i = 0; i < n_out; ++i) offsets_[i + 1] += offsets_[i];
  std::vector<Tap> sorted(taps_.size());
  std::vector<uint32_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (size_t k = 0; k < taps_.size(); ++k) sorted[cursor[pending_dst_[k]]++] = taps_[k];
  taps_ = std::move(sorted);
  pending_dst_.clear();
  pending_dst_.shrink_to_fit();
}

Image PixelOp::apply(const Image& in) const {
  if (in.width != in_w_ || in.height != in_h_) throw Error("PixelOp::apply: input shape mismatch");
  const int ch = in.channels;
  if (ch > 4) throw Error("PixelOp::apply: at most 4 channels supported");
  Image out(out_w_, out_h_, ch);
  const size_t n_out = static_cast<size_t>(out_w_) * out_h_;
#pragma omp parallel for schedule(static)
  for (size_t d = 0; d < n_out; ++d) {
    double acc[4] = {0, 0, 0, 0};
    for (uint32_t k = offsets_[d]; k < offsets_[d + 1]; ++k) {
      const double* s = &in.data[static_cast<size_t>(taps_[k].src) * ch];
      for (int c = 0; c < ch; ++c) acc[c] += taps_[k].weight * s[c];
    }
    for (int c = 0; c < ch; ++c) out.data[d * ch + c] = acc[c];
  }
  return out;
}

Image PixelOp::adjoint(const Image& grad_out) const {
  if (grad_out.width != out_w_ || grad_out.height != out_h_) {
    throw Error("PixelOp::adjoint: gradient shape mismatch");
  }
  const int ch = grad_out.channels;
  Image g(in_w_, in_h_, ch);
  const size_t n_out = static_cast<size_t>(out_w_) * out_h_;
  for (size_t d = 0; d < n_out; ++d) {
    const double* go = &grad_out.data[d * ch];
    for (uint32_t k = offsets_[d]; k < offsets_[d + 1]; ++k) {
      double* s = &g.data[static_cast<size_t>(taps_[k].src) * ch];
      for (int c = 0; c < ch; ++c) s[c] += taps_[k].weight * go[c];
    }
  }
  return g;
}

PixelOp PixelOp::compose_after(const PixelOp& first) const {
  if (first.out_w_ != in_w_ || first.out_h_ != in_h_) throw Error("PixelOp::compose_after: shape mismatch");
  PixelOp op(first.in_w_, first.in_h_, out_w_, out_h_);
  const size_t n_out = static_cast<size_t>(out_w_) * out_h_;
  for (size_t d = 0; d < n_out; ++d) {
    std::map<uint32_t, double> acc;
    for (uint32_t k = offsets_[d]; k < offsets_[d + 1]; ++k) {
      const uint32_t mid = taps_[k].src;
      for (uint32_t j = first.offsets_[mid]; j < first.offsets_[mid + 1]; ++j) {
        acc[first.taps_[j].src] += taps_[k].weight * first.taps_[j].weight;
      }
    }
    for (const auto& [src, w] : acc) op.add_tap(static_cast<uint32_t>(d), src, w);
  }
  op.finish();
  return op;
}

namespace {

int border_index(int i, int n, Border border) {
  if (border == Border::Clamp) return std::clamp(i, 0, n - 1);
  if (n == 1) return 0;
  // Symmetric reflection (edge pixel repeated): ... 1 0 | 0 1 2 ... n-1 | n-1 n-2 ...
  const int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

PixelOp make_sampling_op(int in_w, int in_h, int out_w, int out_h,
                         const std::function<void(double, double, double&, double&)>& map,
                         Border border) {
  PixelOp op(in_w, in_h, out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      double sx, sy;
      map(x + 0.5, y + 0.5, sx, sy);
      const double u = sx - 0.5, v = sy - 0.5;
      const double fu = std::floor(u), fv = std::floor(v);
      const int x0 = static_cast<int>(fu), y0 = static_cast<int>(fv);
      const double ax = u - fu, ay = v - fv;
      const uint32_t dst = static_cast<uint32_t>(y * out_w + x);
      const double wts[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
      const int xs[4] = {x0, x0 + 1, x0, x0 + 1};
      const int ys[4] = {y0, y0, y0 + 1, y0 + 1};
      for (int k = 0; k < 4; ++k) {
        if (wts[k] == 0.0) continue;
        const int xi = border_index(xs[k], in_w, border);
        const int yi = border_index(ys[k], in_h, border);
        op.add_tap(dst, static_cast<uint32_t>(yi * in_w + xi), wts[k]);
      }
    }
  }
  op.finish();
  return op;
}

PixelOp make_resize_op(int in_w, int in_h, int out_w, int out_h) {
  const double sx = static_cast<double>(in_w) / out_w;
  const double sy = static_cast<double>(in_h) / out_h;
  return make_sampling_op(
      in_w, in_h, out_w, out_h,
      [&](double x, double y, double& u, double& v) {
        u = x * sx;
        v = y * sy;
      },
      Border::Clamp);
}

Image resize_bilinear(const Image& in, int out_w, int out_h) {
  if (in.width == out_w && in.height == out_h) return in;
  return make_resize_op(in.width, in.height, out_w, out_h).apply(in);
}

}  // namespace splatmark
