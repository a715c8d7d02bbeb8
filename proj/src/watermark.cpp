#include "splatmark/watermark.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "splatmark/common.hpp"

namespace splatmark {

void EmbedConfig::validate() const {
  if (!(lambda_recon >= 0 && lambda_msg >= 0 && lambda_off >= 0)) throw Error("embed config: weights must be >= 0");
  if (!(lambda_ssim >= 0 && lambda_ssim <= 1)) throw Error("embed config: lambda_ssim must lie in [0, 1]");
  if (epochs < 1) throw Error("embed config: epochs must be >= 1");
  if (batch_views < 1) throw Error("embed config: batch_views must be >= 1");
  if (max_sh_degree < 0 || max_sh_degree > 3) throw Error("embed config: max_sh_degree must lie in [0, 3]");
  if (steps_per_epoch < 0) throw Error("embed config: steps_per_epoch must be >= 0");
  if (!(learning_rate > 0) || weight_decay < 0) throw Error("embed config: invalid optimizer settings");
  if (distortions) sampler.base.validate();
}

double offset_loss(const SHOffsetField& offsets, std::vector<double>* grad) {
  offsets.validate();
  const size_t n = offsets.size();
  if (grad) grad->assign(offsets.values.size(), 0.0);
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (size_t k = 0; k < offsets.values.size(); ++k) {
    const double v = offsets.values[k];
    sum += v * v;
    if (grad) (*grad)[k] = 2.0 * v / static_cast<double>(n);
  }
  return sum / static_cast<double>(n);
}

double recon_loss(const Image& watermarked, const Image& original, double lambda_ssim,
                  const PerceptualMetric& perceptual, Image* grad) {
  require_same_shape(watermarked, original, "recon_loss");
  Image g_ssim;
  const double s = ssim(watermarked, original, grad ? &g_ssim : nullptr);
  const double n = static_cast<double>(watermarked.size());
  double l1 = 0.0;
  for (size_t k = 0; k < watermarked.size(); ++k) l1 += std::abs(watermarked.data[k] - original.data[k]);
  l1 /= n;
  double loss = lambda_ssim * (1.0 - s) + (1.0 - lambda_ssim) * l1;
  Image g_p;
  if (perceptual.enabled()) loss += perceptual.distance(watermarked, original, grad ? &g_p : nullptr);
  if (grad) {
    *grad = Image(watermarked.width, watermarked.height, watermarked.channels);
    for (size_t k = 0; k < watermarked.size(); ++k) {
      const double d = watermarked.data[k] - original.data[k];
      const double sign = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
      grad->data[k] = -lambda_ssim * g_ssim.data[k] + (1.0 - lambda_ssim) * sign / n;
      if (perceptual.enabled()) grad->data[k] += g_p.data[k];
    }
  }
  return loss;
}

std::string to_json_line(const EmbedEpochLog& log) {
  nlohmann::json j = {{"epoch", log.epoch},       {"loss", log.loss},
                      {"loss_msg", log.loss_msg}, {"loss_recon", log.loss_recon},
                      {"loss_off", log.loss_off}, {"bit_acc", log.bit_accuracy}};
  j["psnr"] = std::isinf(log.psnr) ? nlohmann::json("inf") : nlohmann::json(log.psnr);
  return j.dump();
}

void check_compatible(const EncoderBundle& bundle, const DecoderModel& decoder, const MessageBits& message) {
  if (decoder.encoder_id() != bundle.identifier()) {
    throw Error("decoder was trained for encoder '" + decoder.encoder_id() + "' but the bundle is '" +
                bundle.identifier() + "'");
  }
  if (static_cast<size_t>(decoder.bits()) != message.size()) {
    throw Error("decoder expects " + std::to_string(decoder.bits()) + " bits, message has " +
                std::to_string(message.size()));
  }
}

namespace {

struct ViewState {
  SplatWeightCache cache;
  Image original;
};

struct ViewStep {
  std::vector<double> grad;  // d loss / d sh for this view, unscaled by batch size
  double loss_msg = 0.0;
  double loss_recon = 0.0;
  double bit_accuracy = 0.0;
  double psnr = 0.0;
};

}  // namespace

EmbedResult embed(const GaussianAsset& asset, const MessageBits& message, const std::vector<CameraView>& views,
                  const EncoderBundle& bundle, const DecoderModel& decoder, const EmbedConfig& config,
                  const PerceptualMetric& perceptual, const std::function<void(const EmbedEpochLog&)>& on_epoch) {
  asset.validate();
  message.validate();
  config.validate();
  if (views.empty()) throw Error("embed: no training views");
  check_compatible(bundle, decoder, message);

  const size_t dim = asset.sh.size();
  std::vector<ViewState> state(views.size());
  for (size_t v = 0; v < views.size(); ++v) {
    state[v].cache = build_weight_cache(asset, views[v]);
    state[v].original = render(asset, state[v].cache);
  }

  EmbedResult result;
  result.offsets = SHOffsetField(asset.size());
  std::vector<double>& h = result.offsets.values;
  std::vector<double> m(dim, 0.0), s(dim, 0.0), sh(dim);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  // Coefficient k of a channel belongs to degree floor(sqrt(k)).
  std::vector<uint8_t> trainable(dim, 0);
  const int max_coeff = (config.max_sh_degree + 1) * (config.max_sh_degree + 1);
  for (size_t i = 0; i < asset.size(); ++i) {
    for (int c = 0; c < 3; ++c) {
      for (int k = 0; k < max_coeff; ++k) trainable[i * kShDim + sh_index(c, k)] = 1;
    }
  }

  Rng rng(derive_seed(config.seed, "embed"));
  const int batch = config.batch_views;
  const int steps = config.steps_per_epoch > 0
                        ? config.steps_per_epoch
                        : static_cast<int>((views.size() + static_cast<size_t>(batch) - 1) / static_cast<size_t>(batch));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    EmbedEpochLog log;
    log.epoch = epoch;
    double acc_sum = 0.0, psnr_sum = 0.0, msg_sum = 0.0, rec_sum = 0.0;
    int psnr_count = 0, view_count = 0;
    for (int st = 0; st < steps; ++st) {
      // Draw all randomness up front so the parallel section is deterministic.
      std::vector<size_t> picks(static_cast<size_t>(batch));
      std::vector<DistortionSpec> specs(static_cast<size_t>(batch));
      for (int b = 0; b < batch; ++b) {
        picks[b] = static_cast<size_t>(rng.below(views.size()));
        if (config.distortions) specs[b] = config.sampler.draw(rng);
      }
      for (size_t k = 0; k < dim; ++k) sh[k] = asset.sh[k] + h[k];

      std::vector<ViewStep> out(static_cast<size_t>(batch));
#pragma omp parallel for schedule(dynamic, 1)
      for (int b = 0; b < batch; ++b) {
        const ViewState& vs = state[picks[b]];
        ViewStep& r = out[b];
        const Image img = render(sh, vs.cache);
        Image grad_img(img.width, img.height, img.channels);
        if (config.lambda_recon > 0) {
          Image g;
          r.loss_recon = recon_loss(img, vs.original, config.lambda_ssim, perceptual, &g);
          for (size_t k = 0; k < g.size(); ++k) grad_img.data[k] += config.lambda_recon * g.data[k];
        } else {
          r.loss_recon = recon_loss(img, vs.original, config.lambda_ssim, perceptual, nullptr);
        }
        r.psnr = psnr(img, vs.original);

        const TrainDistortion dist = config.distortions ? apply_train(img, specs[b]) : apply_train(img, {});
        const auto tape = bundle.encode_image_tape(dist.output);
        const Eigen::VectorXd logits = decoder.logits(tape->feature);
        Eigen::VectorXd grad_logits;
        r.loss_msg = message_loss_from_logits(logits, message, &grad_logits);
        const Eigen::VectorXd probs = (1.0 + (-logits.array()).exp()).inverse().matrix();
        r.bit_accuracy = bit_accuracy(decode_bits(probs), message);
        if (config.lambda_msg > 0) {
          const Feature gf = decoder.feature_gradient(tape->feature, config.lambda_msg * grad_logits);
          const Image gd = dist.backward(tape->backward(gf));
          for (size_t k = 0; k < gd.size(); ++k) grad_img.data[k] += gd.data[k];
        }
        r.grad = render_gradient(sh, vs.cache, grad_img);
      }

      // Fixed-order reduction over the batch.
      std::vector<double> grad(dim, 0.0);
      for (int b = 0; b < batch; ++b) {
        const ViewStep& r = out[b];
        for (size_t k = 0; k < dim; ++k) grad[k] += r.grad[k];
        msg_sum += r.loss_msg;
        rec_sum += r.loss_recon;
        acc_sum += r.bit_accuracy;
        if (std::isfinite(r.psnr)) {
          psnr_sum += r.psnr;
          ++psnr_count;
        }
        ++view_count;
      }
      std::vector<double> g_off;
      log.loss_off = offset_loss(result.offsets, &g_off);
      ++step;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      for (size_t k = 0; k < dim; ++k) {
        if (!trainable[k]) continue;
        const double g = grad[k] / batch + config.lambda_off * g_off[k] + config.weight_decay * h[k];
        m[k] = beta1 * m[k] + (1 - beta1) * g;
        s[k] = beta2 * s[k] + (1 - beta2) * g * g;
        h[k] -= config.learning_rate * (m[k] / bc1) / (std::sqrt(s[k] / bc2) + eps);
      }
    }
    log.loss_msg = msg_sum / view_count;
    log.loss_recon = rec_sum / view_count;
    log.loss = config.lambda_recon * log.loss_recon + config.lambda_msg * log.loss_msg +
               config.lambda_off * log.loss_off;
    log.bit_accuracy = acc_sum / view_count;
    log.psnr = psnr_count ? psnr_sum / psnr_count : std::numeric_limits<double>::infinity();
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

MessageBits extract(const Image& view, const EncoderBundle& bundle, const DecoderModel& decoder) {
  if (decoder.encoder_id() != bundle.identifier()) {
    throw Error("decoder was trained for encoder '" + decoder.encoder_id() + "' but the bundle is '" +
                bundle.identifier() + "'");
  }
  return decode_bits(decoder.probabilities(bundle.encode_image(view)));
}

MessageBits extract(const GaussianAsset& asset, const std::optional<CameraView>& view, const EncoderBundle& bundle,
                    const DecoderModel& decoder) {
  if (!view) throw Error("extract: a camera view is required to render an asset");
  return extract(render(asset, build_weight_cache(asset, *view)), bundle, decoder);
}

ViewEvaluation evaluate_views(const GaussianAsset& original, const GaussianAsset& watermarked,
                              const std::vector<CameraView>& views, const EncoderBundle& bundle,
                              const DecoderModel& decoder, const MessageBits& message,
                              const DistortionSpec& distortion) {
  check_compatible(bundle, decoder, message);
  if (views.empty()) throw Error("evaluate_views: no views");
  ViewEvaluation ev;
  ev.summary.label = to_string(distortion.kind);
  double acc = 0.0, p = 0.0, s = 0.0;
  int finite = 0;
  for (size_t v = 0; v < views.size(); ++v) {
    const Image a = render(original, build_weight_cache(original, views[v]));
    const Image b = render(watermarked, build_weight_cache(watermarked, views[v]));
    DistortionSpec spec = distortion;
    spec.seed = derive_seed(distortion.seed, "eval-view-" + std::to_string(v));
    const double va = bit_accuracy(extract(apply_eval(b, spec), bundle, decoder), message);
    ev.per_view_accuracy.push_back(va);
    acc += va;
    const double pv = psnr(b, a);
    if (std::isfinite(pv)) {
      p += pv;
      ++finite;
    }
    s += ssim(b, a);
  }
  const double n = static_cast<double>(views.size());
  ev.summary.bit_accuracy = acc / n;
  ev.summary.psnr = finite ? p / finite : std::numeric_limits<double>::infinity();
  ev.summary.ssim = s / n;
  return ev;
}

}  // namespace splatmark
