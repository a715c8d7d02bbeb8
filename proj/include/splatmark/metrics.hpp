#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "splatmark/asset.hpp"
#include "splatmark/codec.hpp"
#include "splatmark/image.hpp"

namespace splatmark {

// Fraction of agreeing bit positions.
double bit_accuracy(const MessageBits& a, const MessageBits& b);

// 10 log10(1 / MSE) on [0, 1] pixels; +infinity for identical images.
double psnr(const Image& a, const Image& b);

// Mean SSIM over all 11x11 windows that lie fully inside the image, with a
// Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03 and dynamic range 1,
// averaged over channels.
double ssim(const Image& a, const Image& b);
// Same value; fills d SSIM / d a when grad_a is non-null.
double ssim(const Image& a, const Image& b, Image* grad_a);

inline constexpr int kSsimWindow = 11;

struct OffsetStats {
  double mean_squared_norm = 0.0;  // (1/N) sum_i ||h_i||^2
  double rms = 0.0;                // root mean square over all entries
  double max_abs = 0.0;
};
OffsetStats offset_stats(const SHOffsetField& offsets);

// Pluggable perceptual distance (LPIPS-like). The default is disabled.
class PerceptualMetric {
 public:
  virtual ~PerceptualMetric() = default;
  virtual std::string name() const = 0;
  virtual bool enabled() const { return true; }
  // Distance; when grad_a is non-null, also d distance / d a.
  virtual double distance(const Image& a, const Image& b, Image* grad_a) const = 0;
};

class NullPerceptual final : public PerceptualMetric {
 public:
  std::string name() const override { return "none"; }
  bool enabled() const override { return false; }
  double distance(const Image& a, const Image& b, Image* grad_a) const override;
};

// One row of a results table (Bit Acc, PSNR, SSIM, LPIPS).
struct MetricRow {
  std::string label;
  double bit_accuracy = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> lpips;
};

// PSNR as text: "inf" for identical images, otherwise two decimals.
std::string format_psnr(double db);
void write_report_csv(const std::string& path, const std::vector<MetricRow>& rows);
void write_report_json(const std::string& path, const std::vector<MetricRow>& rows);

}  // namespace splatmark
