#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "splatmark/encoders.hpp"

namespace splatmark {

// Tensors from a safetensors file, converted to float64 on load.
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;
};
std::map<std::string, Tensor> load_safetensors(const std::string& path);

// CLIP model in the Hugging Face layout: pre-LN transformer blocks with
// quick-GELU MLPs, a causal text tower pooled at the end-of-text token and a
// ViT image tower pooled at the class token. The image path is
// differentiable. Scalar is float for production and double for checks.
template <typename Scalar>
class BasicClipBundle final : public EncoderBundle {
 public:
  // `path` is a model.safetensors file; a config.json next to it supplies
  // head counts and layer-norm epsilon when present.
  explicit BasicClipBundle(const std::string& path);
  ~BasicClipBundle() override;

  std::string identifier() const override;
  Feature encode_text(const TokenSequence& tokens) const override;
  std::unique_ptr<ImageTape> encode_image_tape(const Image& image) const override;

  int image_size() const;

  struct Model;

 private:
  std::unique_ptr<Model> model_;
  std::string identifier_;
};

using ClipBundle = BasicClipBundle<float>;

extern template class BasicClipBundle<float>;
extern template class BasicClipBundle<double>;

// Published CLIP preprocessing constants.
inline constexpr double kClipMean[3] = {0.48145466, 0.4578275, 0.40821073};
inline constexpr double kClipStd[3] = {0.26862954, 0.26130258, 0.27577711};

}  // namespace splatmark
