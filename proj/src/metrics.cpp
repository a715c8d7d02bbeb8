#include "splatmark/metrics.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "splatmark/common.hpp"

namespace splatmark {

namespace {

constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kSsimWindow>& ssim_kernel() {
  static const std::array<double, kSsimWindow> k = [] {
    std::array<double, kSsimWindow> w{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
      const double d = i - kSsimWindow / 2;
      w[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
      sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
  }();
  return k;
}

// Separable valid-mode filtering of one plane: (w, h) -> (w - 10, h - 10).
std::vector<double> filter_valid(const std::vector<double>& in, int w, int h) {
  const auto& k = ssim_kernel();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h), out(static_cast<size_t>(ow) * oh);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * in[static_cast<size_t>(y) * w + x + i];
      tmp[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kSsimWindow; ++i) s += k[i] * tmp[static_cast<size_t>(y + i) * ow + x];
      out[static_cast<size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

// Adjoint of filter_valid: (w - 10, h - 10) -> (w, h).
std::vector<double> filter_valid_adjoint(const std::vector<double>& g, int w, int h) {
  const auto& k = ssim_kernel();
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> tmp(static_cast<size_t>(ow) * h, 0.0), out(static_cast<size_t>(w) * h, 0.0);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = g[static_cast<size_t>(y) * ow + x];
      for (int i = 0; i < kSsimWindow; ++i) tmp[static_cast<size_t>(y + i) * ow + x] += k[i] * v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<size_t>(y) * ow + x];
      for (int i = 0; i < kSsimWindow; ++i) out[static_cast<size_t>(y) * w + x + i] += k[i] * v;
    }
  }
  return out;
}

}  // namespace

double bit_accuracy(const MessageBits& a, const MessageBits& b) {
  if (a.size() != b.size()) throw Error("bit_accuracy: message lengths differ");
  if (a.size() == 0) throw Error("bit_accuracy: empty messages");
  size_t same = 0;
  for (size_t i = 0; i < a.size(); ++i) same += a.bits[i] == b.bits[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  double mse = 0.0;
  for (size_t k = 0; k < a.size(); ++k) {
    const double d = a.data[k] - b.data[k];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b) { return ssim(a, b, nullptr); }

double ssim(const Image& a, const Image& b, Image* grad_a) {
  require_same_shape(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow) throw Error("ssim: image smaller than the 11x11 window");
  const int w = a.width, h = a.height, nc = a.channels;
  const int ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  const size_t n = static_cast<size_t>(w) * h, no = static_cast<size_t>(ow) * oh;
  if (grad_a) *grad_a = Image(w, h, nc);
  double total = 0.0;
  for (int c = 0; c < nc; ++c) {
    std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
    for (size_t p = 0; p < n; ++p) {
      pa[p] = a.data[p * nc + c];
      pb[p] = b.data[p * nc + c];
      aa[p] = pa[p] * pa[p];
      bb[p] = pb[p] * pb[p];
      ab[p] = pa[p] * pb[p];
    }
    const auto ma = filter_valid(pa, w, h), mb = filter_valid(pb, w, h);
    const auto eaa = filter_valid(aa, w, h), ebb = filter_valid(bb, w, h), eab = filter_valid(ab, w, h);
    std::vector<double> g_m, g_aa, g_ab;
    if (grad_a) {
      g_m.resize(no);
      g_aa.resize(no);
      g_ab.resize(no);
    }
    double sum = 0.0;
    for (size_t q = 0; q < no; ++q) {
      const double saa = eaa[q] - ma[q] * ma[q], sbb = ebb[q] - mb[q] * mb[q], sab = eab[q] - ma[q] * mb[q];
      const double a1 = 2 * ma[q] * mb[q] + kC1, a2 = 2 * sab + kC2;
      const double b1 = ma[q] * ma[q] + mb[q] * mb[q] + kC1, b2 = saa + sbb + kC2;
      const double s = a1 * a2 / (b1 * b2);
      sum += s;
      if (grad_a) {
        // Partials of s in factored form, which vanish exactly for a == b.
        const double r1 = a1 / b1, r2 = a2 / b2;
        const double d_sab = 2 * r1 / b2;
        const double d_saa = -s / b2;
        const double d_ma = 2 * (mb[q] * r2 - s * ma[q]) / b1;
        const double scale = 1.0 / (static_cast<double>(no) * nc);
        // Chain through saa = E[a^2] - ma^2 and sab = E[ab] - ma mb.
        g_m[q] = scale * (d_ma + 2 * (ma[q] * s - mb[q] * r1) / b2);
        g_aa[q] = scale * d_saa;
        g_ab[q] = scale * d_sab;
      }
    }
    total += sum / static_cast<double>(no);
    if (grad_a) {
      const auto gm = filter_valid_adjoint(g_m, w, h), gaa = filter_valid_adjoint(g_aa, w, h),
                 gab = filter_valid_adjoint(g_ab, w, h);
      for (size_t p = 0; p < n; ++p) grad_a->data[p * nc + c] = gm[p] + (pb[p] * gab[p] + 2 * pa[p] * gaa[p]);
    }
  }
  return total / nc;
}

OffsetStats offset_stats(const SHOffsetField& offsets) {
  OffsetStats s;
  if (offsets.values.empty()) return s;
  double sq = 0.0;
  for (double v : offsets.values) {
    sq += v * v;
    s.max_abs = std::max(s.max_abs, std::abs(v));
  }
  s.mean_squared_norm = sq / static_cast<double>(offsets.size());
  s.rms = std::sqrt(sq / static_cast<double>(offsets.values.size()));
  return s;
}

double NullPerceptual::distance(const Image& a, const Image& b, Image* grad_a) const {
  require_same_shape(a, b, "perceptual distance");
  if (grad_a) *grad_a = Image(a.width, a.height, a.channels);
  return 0.0;
}

std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  std::ostringstream os;
  os << std::fixed << std::setprecision(2) << db;
  return os.str();
}

void write_report_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "label,bit_acc,psnr,ssim,lpips\n";
  for (const auto& r : rows) {
    out << r.label << ',' << std::fixed << std::setprecision(4) << 100.0 * r.bit_accuracy << ','
        << format_psnr(r.psnr) << ',' << std::setprecision(4) << r.ssim << ',';
    if (r.lpips) out << *r.lpips;
    out << '\n';
  }
}

void write_report_json(const std::string& path, const std::vector<MetricRow>& rows) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json row = {{"label", r.label}, {"bit_acc", 100.0 * r.bit_accuracy}, {"ssim", r.ssim}};
    row["psnr"] = std::isinf(r.psnr) ? nlohmann::json("inf") : nlohmann::json(r.psnr);
    row["lpips"] = r.lpips ? nlohmann::json(*r.lpips) : nlohmann::json(nullptr);
    j.push_back(row);
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << j.dump(2) << '\n';
}

}  // namespace splatmark
