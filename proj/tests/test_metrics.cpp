#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "splatmark/common.hpp"
#include "splatmark/metrics.hpp"
#include "test_util.hpp"

namespace splatmark {
namespace {

MessageBits bits_of(std::initializer_list<int> v) {
  std::vector<uint8_t> b;
  for (int x : v) b.push_back(static_cast<uint8_t>(x));
  return MessageBits(b);
}

Image random_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  Image img(w, h, 3);
  for (double& v : img.data) v = rng.uniform();
  return img;
}

// The trigonometric fixture pair whose SSIM was computed once with
// scikit-image structural_similarity(channel_axis=-1, data_range=1,
// gaussian_weights=True, sigma=1.5, use_sample_covariance=False).
std::pair<Image, Image> trig_pair() {
  const int h = 37, w = 45;
  Image a(w, h, 3), b(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        a.at(y, x, c) = 0.5 + 0.4 * std::sin(0.3 * x + 0.2 * y + c) * std::cos(0.17 * y - 0.5 * c);
        b.at(y, x, c) =
            std::clamp(a.at(y, x, c) + 0.15 * std::sin(1.7 * x + 0.9 * y * y / static_cast<double>(h) + c), 0.0, 1.0);
      }
    }
  }
  return {a, b};
}

// Direct per-window evaluation with a 2D Gaussian window.
double oracle_ssim(const Image& a, const Image& b) {
  double wgt[11][11], sum = 0.0;
  for (int i = 0; i < 11; ++i) {
    for (int j = 0; j < 11; ++j) {
      wgt[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 2.25));
      sum += wgt[i][j];
    }
  }
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    double acc = 0.0;
    int count = 0;
    for (int y0 = 0; y0 + 11 <= a.height; ++y0) {
      for (int x0 = 0; x0 + 11 <= a.width; ++x0) {
        double ma = 0, mb = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            ma += wgt[i][j] / sum * a.at(y0 + i, x0 + j, c);
            mb += wgt[i][j] / sum * b.at(y0 + i, x0 + j, c);
          }
        }
        double va = 0, vb = 0, cov = 0;
        for (int i = 0; i < 11; ++i) {
          for (int j = 0; j < 11; ++j) {
            const double da = a.at(y0 + i, x0 + j, c) - ma, db = b.at(y0 + i, x0 + j, c) - mb;
            va += wgt[i][j] / sum * da * da;
            vb += wgt[i][j] / sum * db * db;
            cov += wgt[i][j] / sum * da * db;
          }
        }
        const double c1 = 1e-4, c2 = 9e-4;
        acc += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
    total += acc / count;
  }
  return total / a.channels;
}

TEST(BitAccuracy, Table) {
  EXPECT_EQ(bit_accuracy(bits_of({1, 0, 1, 1}), bits_of({1, 0, 1, 1})), 1.0);
  EXPECT_EQ(bit_accuracy(bits_of({1, 0, 1, 1}), bits_of({0, 1, 0, 0})), 0.0);
  EXPECT_EQ(bit_accuracy(bits_of({1, 0, 1, 1}), bits_of({1, 0, 0, 1})), 0.75);
  EXPECT_THROW(bit_accuracy(bits_of({1}), bits_of({1, 0})), Error);
}

TEST(BitAccuracy, SymmetricAndComplement) {
  for (uint64_t s = 0; s < 20; ++s) {
    const auto a = MessageBits::random(32, s), b = MessageBits::random(32, s + 100);
    EXPECT_EQ(bit_accuracy(a, b), bit_accuracy(b, a));
    MessageBits comp = a;
    for (auto& v : comp.bits) v ^= 1;
    EXPECT_EQ(1.0 - bit_accuracy(a, comp), 1.0);
  }
}

TEST(Psnr, ClosedForms) {
  const Image a = random_image(20, 20, 1);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  EXPECT_EQ(format_psnr(psnr(a, a)), "inf");
  Image c1(16, 16, 3, 0.3), c2(16, 16, 3, 0.4);
  EXPECT_NEAR(psnr(c1, c2), 20.0, 1e-9);
  EXPECT_EQ(format_psnr(psnr(c1, c2)), "20.00");
  EXPECT_THROW(psnr(c1, Image(15, 16, 3)), Error);
}

TEST(Psnr, MatchesDefinitionAndSymmetric) {
  const Image a = random_image(23, 17, 2), b = random_image(23, 17, 3);
  double mse = 0.0;
  for (size_t k = 0; k < a.size(); ++k) mse += (a.data[k] - b.data[k]) * (a.data[k] - b.data[k]);
  mse /= static_cast<double>(a.size());
  EXPECT_NEAR(psnr(a, b), -10.0 * std::log10(mse), 1e-12);
  EXPECT_EQ(psnr(a, b), psnr(b, a));
}

TEST(Ssim, IdentityIsExactlyOne) {
  const Image a = random_image(30, 25, 4);
  EXPECT_EQ(ssim(a, a), 1.0);
}

TEST(Ssim, InvertedContentBelowOne) {
  Image a(32, 32, 3, 0.1), b(32, 32, 3, 0.9);
  for (int y = 0; y < 32; ++y) {
    for (int x = 16; x < 32; ++x) {
      for (int c = 0; c < 3; ++c) {
        a.at(y, x, c) = 0.9;
        b.at(y, x, c) = 0.1;
      }
    }
  }
  EXPECT_LT(ssim(a, b), 1.0);
}

TEST(Ssim, MatchesFrozenReferenceValue) {
  const auto [a, b] = trig_pair();
  EXPECT_NEAR(ssim(a, b), 0.6248861066079656, 1e-4);
  EXPECT_NEAR(ssim(a, b), 0.6248861066079656, 1e-10);
}

TEST(Ssim, MatchesPerWindowOracleAndSymmetric) {
  const Image a = random_image(26, 19, 5);
  Image b = a;
  Rng rng(6);
  for (double& v : b.data) v = std::clamp(v + 0.2 * rng.normal(), 0.0, 1.0);
  EXPECT_NEAR(ssim(a, b), oracle_ssim(a, b), 1e-10);
  EXPECT_NEAR(ssim(a, b), ssim(b, a), 1e-14);
}

TEST(Ssim, RejectsSmallImages) { EXPECT_THROW(ssim(Image(10, 20, 3), Image(10, 20, 3)), Error); }

TEST(Ssim, GradientMatchesFiniteDifferences) {
  const auto [a, b] = trig_pair();
  Image g;
  ssim(a, b, &g);
  Rng rng(7);
  for (int t = 0; t < 100; ++t) {
    const size_t k = rng.below(a.size());
    Image p = a, m = a;
    p.data[k] += 1e-6;
    m.data[k] -= 1e-6;
    const double fd = (ssim(p, b) - ssim(m, b)) / 2e-6;
    EXPECT_NEAR(g.data[k], fd, 1e-4 * std::abs(fd) + 1e-9);
  }
}

TEST(OffsetStats, ClosedForm) {
  SHOffsetField f(2);
  for (int k = 0; k < kShDim; ++k) f.values[k] = 1.0;
  const auto s = offset_stats(f);
  EXPECT_DOUBLE_EQ(s.mean_squared_norm, 24.0);
  EXPECT_DOUBLE_EQ(s.max_abs, 1.0);
  EXPECT_DOUBLE_EQ(s.rms, std::sqrt(0.5));
}

TEST(Perceptual, NullIsDisabledAndZero) {
  NullPerceptual p;
  EXPECT_FALSE(p.enabled());
  Image g;
  EXPECT_EQ(p.distance(random_image(8, 8, 1), random_image(8, 8, 2), &g), 0.0);
  EXPECT_EQ(g.size(), 8u * 8u * 3u);
}

TEST(Report, CsvAndJsonColumns) {
  std::vector<MetricRow> rows = {{"none", 1.0, std::numeric_limits<double>::infinity(), 1.0, std::nullopt},
                                 {"jpeg", 0.9375, 31.5, 0.91, 0.05}};
  const auto csv = testing::temp_path("report.csv"), js = testing::temp_path("report.json");
  write_report_csv(csv, rows);
  write_report_json(js, rows);
  std::ifstream in(csv);
  std::string header, r1, r2;
  std::getline(in, header);
  std::getline(in, r1);
  std::getline(in, r2);
  EXPECT_EQ(header, "label,bit_acc,psnr,ssim,lpips");
  EXPECT_EQ(r1, "none,100.0000,inf,1.0000,");
  EXPECT_EQ(r2, "jpeg,93.7500,31.50,0.9100,0.0500");
  std::ifstream jin(js);
  const auto j = nlohmann::json::parse(jin);
  EXPECT_EQ(j[0]["psnr"], "inf");
  EXPECT_EQ(j[1]["bit_acc"], 93.75);
  EXPECT_TRUE(j[0]["lpips"].is_null());
}

}  // namespace
}  // namespace splatmark
