#pragma once

#include <cstdint>
#include <memory>
#include <string>

#include <Eigen/Core>

#include "splatmark/codec.hpp"
#include "splatmark/image.hpp"

namespace splatmark {

// Result of an image encoding that remembers what it needs for the adjoint.
class ImageTape {
 public:
  virtual ~ImageTape() = default;
  Feature feature;
  // d loss / d pixels of the encoded image, given d loss / d feature.
  virtual Image backward(const Feature& grad_feature) const = 0;
};

// A frozen, aligned pair of text and image encoders with 512-dim outputs.
// Implementations are immutable and safe to call concurrently.
class EncoderBundle {
 public:
  virtual ~EncoderBundle() = default;
  virtual std::string identifier() const = 0;
  virtual Feature encode_text(const TokenSequence& tokens) const = 0;
  virtual std::unique_ptr<ImageTape> encode_image_tape(const Image& image) const = 0;
  Feature encode_image(const Image& image) const { return encode_image_tape(image)->feature; }
};

// Weight-free aligned pair. The image encoder is a frozen three-stage
// convolutional network followed by global average pooling and a seeded
// affine map:
//   stage 1  1x1 conv, ReLU ramps  r_j = relu(x - j / (K + 1)),  j = 0..K+1
//   stage 2  1x1 conv, second differences  m_k = (K + 1)(r_{k-1} - 2 r_k + r_{k+1})
//            which are triangular bin memberships centered at k / (K + 1)
//   stage 3  3x3 depthwise mean filter, zero padded
// Inputs are first resized bilinearly to size x size. The text encoder is
// the image encoder applied to barcode_render(tokens), so both share one
// feature space by construction. Exact 0 (padding) and 1 fall outside every
// bin's support.
class ToyBundle final : public EncoderBundle {
 public:
  struct Params {
    uint64_t seed = 1;
    double gain = 30.0;
    int bins = 256;
    int size = 77;
  };

  ToyBundle() : ToyBundle(Params{}) {}
  explicit ToyBundle(const Params& params);

  std::string identifier() const override;
  Feature encode_text(const TokenSequence& tokens) const override;
  std::unique_ptr<ImageTape> encode_image_tape(const Image& image) const override;

  // Token s becomes a 1-pixel-wide full-height gray column of intensity
  // token / 49407 (columns beyond 77 stay black).
  Image barcode_render(const TokenSequence& tokens) const;
  // Literal dense evaluation of the three stages, for testing the fast path.
  Feature encode_image_dense(const Image& image) const;

  const Params& params() const { return params_; }
  static Params parse_identifier(const std::string& id);

 private:
  Eigen::VectorXd pooled_histogram(const Image& resized) const;

  Params params_;
  Eigen::MatrixXd projection_;  // 512 x 3K
  std::vector<double> pool_weight_;
};

// Builds a bundle from its identifier. CLIP bundles need the weight file.
std::unique_ptr<EncoderBundle> make_bundle(const std::string& identifier, const std::string& clip_weights = "");

}  // namespace splatmark
