#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "splatmark/asset.hpp"
#include "splatmark/codec.hpp"
#include "splatmark/distort.hpp"
#include "splatmark/encoders.hpp"
#include "splatmark/metrics.hpp"
#include "splatmark/renderer.hpp"

namespace splatmark {

struct EmbedConfig {
  double lambda_recon = 1.0;
  double lambda_msg = 0.03;
  double lambda_off = 10.0;
  double lambda_ssim = 0.2;  // weight of 1 - SSIM inside the RGB loss
  int epochs = 100;
  int batch_views = 16;
  // Optimizer steps per epoch; 0 means ceil(n_views / batch_views).
  int steps_per_epoch = 0;
  double learning_rate = 5e-3;
  double weight_decay = 1e-6;
  // Highest SH degree whose offsets are optimized; higher bands stay zero.
  int max_sh_degree = 3;
  bool distortions = true;
  DistortionSampler sampler;
  uint64_t seed = 0;

  void validate() const;
};

// (1/N) sum_i ||h_i||^2, with its gradient when grad is non-null.
double offset_loss(const SHOffsetField& offsets, std::vector<double>* grad = nullptr);

// lambda_ssim (1 - SSIM) + (1 - lambda_ssim) mean |a - b| + perceptual(a, b).
// The gradient is with respect to `watermarked`.
double recon_loss(const Image& watermarked, const Image& original, double lambda_ssim,
                  const PerceptualMetric& perceptual, Image* grad = nullptr);

struct EmbedEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double loss_msg = 0.0;
  double loss_recon = 0.0;
  double loss_off = 0.0;
  double bit_accuracy = 0.0;  // over all batch views of the epoch, after distortion
  double psnr = 0.0;          // watermarked vs original render, mean over batch views
};
std::string to_json_line(const EmbedEpochLog& log);

struct EmbedResult {
  SHOffsetField offsets;
  std::vector<EmbedEpochLog> log;
};

// Optimizes SH offsets so that renders of the asset carry `message` for the
// frozen decoder. Geometry and opacity are never touched.
EmbedResult embed(const GaussianAsset& asset, const MessageBits& message, const std::vector<CameraView>& views,
                  const EncoderBundle& bundle, const DecoderModel& decoder, const EmbedConfig& config,
                  const PerceptualMetric& perceptual = NullPerceptual(),
                  const std::function<void(const EmbedEpochLog&)>& on_epoch = {});

// Blind extraction: only the rendered view, the bundle and the decoder.
MessageBits extract(const Image& view, const EncoderBundle& bundle, const DecoderModel& decoder);
// Renders the asset from `view` first.
MessageBits extract(const GaussianAsset& asset, const std::optional<CameraView>& view, const EncoderBundle& bundle,
                    const DecoderModel& decoder);

// Mean metrics over views: bit accuracy of extraction after an evaluation
// distortion, and PSNR / SSIM of undistorted watermarked vs original renders.
struct ViewEvaluation {
  MetricRow summary;
  std::vector<double> per_view_accuracy;
};
ViewEvaluation evaluate_views(const GaussianAsset& original, const GaussianAsset& watermarked,
                              const std::vector<CameraView>& views, const EncoderBundle& bundle,
                              const DecoderModel& decoder, const MessageBits& message,
                              const DistortionSpec& distortion = {});

// Raises when the decoder was not trained for this bundle or message length.
void check_compatible(const EncoderBundle& bundle, const DecoderModel& decoder, const MessageBits& message);

}  // namespace splatmark
