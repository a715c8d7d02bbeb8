#include "splatmark/encoders.hpp"

#include <cmath>
#include <sstream>

#include "splatmark/clip.hpp"
#include "splatmark/common.hpp"

namespace splatmark {

namespace {

constexpr const char* kToyPrefix = "toy-hist-v1";

class ToyTape final : public ImageTape {
 public:
  const ToyBundle::Params* params = nullptr;
  const Eigen::MatrixXd* projection = nullptr;
  const std::vector<double>* pool_weight = nullptr;
  Image resized;
  PixelOp resize;
  bool resized_input = false;

  Image backward(const Feature& grad_feature) const override {
    if (grad_feature.size() != kFeatureDim) throw Error("toy encoder: gradient is not 512-dim");
    const int k_bins = params->bins;
    const double kp1 = k_bins + 1.0;
    const Eigen::VectorXd gh = params->gain * (projection->transpose() * grad_feature);
    Image g(resized.width, resized.height, 3);
    for (size_t p = 0; p < resized.pixels(); ++p) {
      const double w = (*pool_weight)[p];
      for (int c = 0; c < 3; ++c) {
        const double v = resized.data[p * 3 + c];
        const double u = v * kp1;
        const int lo = static_cast<int>(std::floor(u));
        double acc = 0.0;
        for (int k = std::max(lo, 1); k <= std::min(lo + 1, k_bins); ++k) {
          const double d = u - k;
          if (std::abs(d) >= 1.0 || d == 0.0) continue;
          acc += gh[c * k_bins + (k - 1)] * (d > 0 ? -kp1 : kp1);
        }
        g.data[p * 3 + c] = acc * w;
      }
    }
    return resized_input ? resize.adjoint(g) : g;
  }
};

}  // namespace

ToyBundle::ToyBundle(const Params& params) : params_(params) {
  if (params_.bins < 2 || params_.size < 11 || !(params_.gain > 0)) throw Error("toy bundle: invalid parameters");
  const int dim = 3 * params_.bins;
  Rng rng(derive_seed(params_.seed, "toy-projection"));
  projection_.resize(kFeatureDim, dim);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (int r = 0; r < kFeatureDim; ++r) {
    for (int c = 0; c < dim; ++c) projection_(r, c) = rng.normal() * scale;
  }
  // Stage 3 followed by global averaging weighs each pixel by the number of
  // 3x3 windows that contain it.
  const int s = params_.size;
  pool_weight_.resize(static_cast<size_t>(s) * s);
  auto cover = [s](int i) { return (i > 0 ? 1 : 0) + 1 + (i < s - 1 ? 1 : 0); };
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      pool_weight_[static_cast<size_t>(y) * s + x] = cover(x) * cover(y) / (9.0 * s * s);
    }
  }
}

std::string ToyBundle::identifier() const {
  std::ostringstream os;
  os.precision(17);
  os << kToyPrefix << ":seed=" << params_.seed << ":gain=" << params_.gain << ":bins=" << params_.bins
     << ":size=" << params_.size;
  return os.str();
}

ToyBundle::Params ToyBundle::parse_identifier(const std::string& id) {
  if (id.rfind(kToyPrefix, 0) != 0) throw Error("not a toy bundle identifier: " + id);
  Params p;
  std::stringstream ss(id.substr(std::string(kToyPrefix).size()));
  std::string item;
  while (std::getline(ss, item, ':')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw Error("malformed toy bundle identifier: " + id);
    const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
    if (key == "seed") p.seed = std::stoull(val);
    else if (key == "gain") p.gain = std::stod(val);
    else if (key == "bins") p.bins = std::stoi(val);
    else if (key == "size") p.size = std::stoi(val);
    else throw Error("unknown key in toy bundle identifier: " + key);
  }
  return p;
}

Image ToyBundle::barcode_render(const TokenSequence& tokens) const {
  const int s = params_.size;
  Image img(s, s, 3);
  for (int x = 0; x < std::min(s, kTokenSlots); ++x) {
    const double v = tokens.tokens[x] / static_cast<double>(kEndToken);
    for (int y = 0; y < s; ++y) {
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = v;
    }
  }
  return img;
}

Eigen::VectorXd ToyBundle::pooled_histogram(const Image& resized) const {
  const int k_bins = params_.bins;
  const double kp1 = k_bins + 1.0;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(3 * k_bins);
  for (size_t p = 0; p < resized.pixels(); ++p) {
    const double w = pool_weight_[p];
    for (int c = 0; c < 3; ++c) {
      const double u = resized.data[p * 3 + c] * kp1;
      const int lo = static_cast<int>(std::floor(u));
      for (int k = std::max(lo, 1); k <= std::min(lo + 1, k_bins); ++k) {
        const double m = 1.0 - std::abs(u - k);
        if (m > 0.0) h[c * k_bins + (k - 1)] += w * m;
      }
    }
  }
  return h;
}

Feature ToyBundle::encode_text(const TokenSequence& tokens) const { return encode_image(barcode_render(tokens)); }

std::unique_ptr<ImageTape> ToyBundle::encode_image_tape(const Image& image) const {
  if (image.channels != 3) throw Error("toy encoder: expected a 3-channel image");
  require_finite(image, "toy encoder");
  auto tape = std::make_unique<ToyTape>();
  tape->params = &params_;
  tape->projection = &projection_;
  tape->pool_weight = &pool_weight_;
  if (image.width != params_.size || image.height != params_.size) {
    tape->resize = make_resize_op(image.width, image.height, params_.size, params_.size);
    tape->resized = tape->resize.apply(image);
    tape->resized_input = true;
  } else {
    tape->resized = image;
  }
  tape->feature = params_.gain * (projection_ * pooled_histogram(tape->resized));
  return tape;
}

Feature ToyBundle::encode_image_dense(const Image& image) const {
  const Image x = resize_bilinear(image, params_.size, params_.size);
  const int s = params_.size, k_bins = params_.bins;
  const double kp1 = k_bins + 1.0;
  Eigen::VectorXd pooled = Eigen::VectorXd::Zero(3 * k_bins);
  std::vector<double> ramps(static_cast<size_t>(k_bins) + 2);
  std::vector<double> hats(static_cast<size_t>(s) * s);
  for (int c = 0; c < 3; ++c) {
    for (int k = 1; k <= k_bins; ++k) {
      for (int y = 0; y < s; ++y) {
        for (int xx = 0; xx < s; ++xx) {
          const double v = x.at(y, xx, c);
          for (int j = k - 1; j <= k + 1; ++j) ramps[j] = std::max(0.0, v - j / kp1);
          hats[static_cast<size_t>(y) * s + xx] = kp1 * (ramps[k - 1] - 2.0 * ramps[k] + ramps[k + 1]);
        }
      }
      double total = 0.0;
      for (int y = 0; y < s; ++y) {
        for (int xx = 0; xx < s; ++xx) {
          double acc = 0.0;
          for (int dy = -1; dy <= 1; ++dy) {
            for (int dx = -1; dx <= 1; ++dx) {
              const int yy = y + dy, x2 = xx + dx;
              if (yy >= 0 && yy < s && x2 >= 0 && x2 < s) acc += hats[static_cast<size_t>(yy) * s + x2];
            }
          }
          total += acc / 9.0;
        }
      }
      pooled[c * k_bins + (k - 1)] = total / (static_cast<double>(s) * s);
    }
  }
  return params_.gain * (projection_ * pooled);
}

std::unique_ptr<EncoderBundle> make_bundle(const std::string& identifier, const std::string& clip_weights) {
  if (identifier == "toy") return std::make_unique<ToyBundle>();
  if (identifier.rfind(kToyPrefix, 0) == 0) return std::make_unique<ToyBundle>(ToyBundle::parse_identifier(identifier));
  if (identifier.rfind("clip", 0) == 0) {
    if (clip_weights.empty()) throw Error("CLIP bundle requires a weights file (--clip-weights)");
    return std::make_unique<ClipBundle>(clip_weights);
  }
  throw Error("unknown encoder bundle: " + identifier);
}

}  // namespace splatmark
