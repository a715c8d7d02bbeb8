#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "splatmark/clip.hpp"
#include "splatmark/common.hpp"
#include "splatmark/encoders.hpp"
#include "splatmark/scene.hpp"
#include "splatmark/renderer.hpp"

namespace splatmark {
namespace {

Image random_image(int w, int h, uint64_t seed, double lo = 0.0, double hi = 1.0) {
  Rng rng(seed);
  Image img(w, h, 3);
  for (double& v : img.data) v = rng.uniform(lo, hi);
  return img;
}

double max_abs_diff(const Feature& a, const Feature& b) { return (a - b).cwiseAbs().maxCoeff(); }

// ---- Toy bundle --------------------------------------------------------------------

TEST(ToyBundle, FastPathMatchesDenseStages) {
  ToyBundle toy;
  for (uint64_t seed : {1, 2, 3}) {
    const Image img = random_image(40 + static_cast<int>(seed) * 13, 50, seed);
    const Feature fast = toy.encode_image(img);
    const Feature dense = toy.encode_image_dense(img);
    EXPECT_LT(max_abs_diff(fast, dense), 1e-9 * (1.0 + dense.norm()));
  }
  const Image native = random_image(77, 77, 9);
  EXPECT_LT(max_abs_diff(toy.encode_image(native), toy.encode_image_dense(native)), 1e-9 * 100);
}

TEST(ToyBundle, TextIsImageOfBarcodeExactly) {
  ToyBundle toy;
  for (int L : {1, 16, 32, 74}) {
    const auto t = tokenize(MessageBits::random(L, L));
    const Feature a = toy.encode_text(t);
    const Feature b = toy.encode_image(toy.barcode_render(t));
    ASSERT_EQ(a.size(), kFeatureDim);
    EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(ToyBundle, Determinism) {
  ToyBundle toy;
  Image gray(30, 30, 3);
  for (double& v : gray.data) v = 0.5;
  const Feature a = toy.encode_image(gray), b = toy.encode_image(gray);
  EXPECT_EQ((a - b).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(a.allFinite());
  const auto t = tokenize(MessageBits::random(16, 1));
  EXPECT_EQ((toy.encode_text(t) - toy.encode_text(t)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ToyBundle, OneBitFlipChangesTextFeature) {
  ToyBundle toy;
  MessageBits a = MessageBits::random(16, 4), b = a;
  b.bits[7] ^= 1;
  EXPECT_GT((toy.encode_text(tokenize(a)) - toy.encode_text(tokenize(b))).norm(), 1e-3);
}

TEST(ToyBundle, PaddingAndFramesAreInDeadZones) {
  ToyBundle toy;
  Image black(77, 77, 3);
  EXPECT_EQ(toy.encode_image(black).cwiseAbs().maxCoeff(), 0.0);
  Image white = black;
  for (double& v : white.data) v = 1.0;
  EXPECT_EQ(toy.encode_image(white).cwiseAbs().maxCoeff(), 0.0);
}

TEST(ToyBundle, IdentifierRoundTrip) {
  ToyBundle::Params p;
  p.seed = 5;
  p.gain = 12.5;
  p.bins = 64;
  p.size = 33;
  ToyBundle toy(p);
  const auto q = ToyBundle::parse_identifier(toy.identifier());
  EXPECT_EQ(q.seed, 5u);
  EXPECT_EQ(q.gain, 12.5);
  EXPECT_EQ(q.bins, 64);
  EXPECT_EQ(q.size, 33);
  EXPECT_EQ(make_bundle(toy.identifier())->identifier(), toy.identifier());
  EXPECT_EQ(make_bundle("toy")->identifier(), ToyBundle().identifier());
  EXPECT_THROW(make_bundle("clip"), Error);
  EXPECT_THROW(make_bundle("nope"), Error);
}

TEST(ToyBundle, RejectsNonFinitePixels) {
  ToyBundle toy;
  Image img = random_image(16, 16, 1);
  img.data[5] = std::nan("");
  EXPECT_THROW(toy.encode_image(img), Error);
}

// Checks the adjoint against central differences of the scalar r . E_V(x).
// Coordinates whose two one-sided differences disagree straddle a bin kink
// and are skipped, as they are not differentiable points.
void check_adjoint(const EncoderBundle& bundle, const Image& img, double h, double tol, int want) {
  Rng rng(77);
  Feature r(kFeatureDim);
  for (int i = 0; i < kFeatureDim; ++i) r[i] = rng.normal();
  const auto tape = bundle.encode_image_tape(img);
  const Image g = tape->backward(r);
  const double f0 = r.dot(tape->feature);
  int checked = 0;
  for (int attempt = 0; attempt < 20 * want && checked < want; ++attempt) {
    const size_t k = rng.below(img.size());
    Image p = img, m = img;
    p.data[k] += h;
    m.data[k] -= h;
    const double fp = r.dot(bundle.encode_image(p)), fm = r.dot(bundle.encode_image(m));
    const double right = (fp - f0) / h, left = (f0 - fm) / h;
    if (std::abs(right - left) > 1e-3 * std::max(std::abs(right), std::abs(left)) + 1e-9) continue;
    const double fd = (fp - fm) / (2 * h);
    EXPECT_NEAR(g.data[k], fd, tol * std::max(std::abs(fd), 1e-6)) << "pixel " << k;
    ++checked;
  }
  EXPECT_GE(checked, want);
}

TEST(ToyBundle, AdjointMatchesFiniteDifferences) {
  ToyBundle toy;
  check_adjoint(toy, random_image(16, 16, 3, 0.05, 0.95), 1e-6, 1e-3, 100);
  check_adjoint(toy, random_image(77, 77, 4, 0.05, 0.95), 1e-6, 1e-3, 100);
}

// ---- CLIP adapter on a tiny random checkpoint ----------------------------------------

const std::filesystem::path kTinyClip = std::filesystem::path(SPLATMARK_FIXTURE_DIR) / "tiny_clip";

class TinyClip : public ::testing::Test {
 protected:
  void SetUp() override {
    if (!std::filesystem::exists(kTinyClip / "model.safetensors")) GTEST_SKIP() << "tiny CLIP fixture missing";
    std::ifstream in(kTinyClip / "reference.json");
    ref = nlohmann::json::parse(in);
    for (int s = 0; s < kTokenSlots; ++s) tokens.tokens[s] = ref["tokens"][s].get<int32_t>();
    image = Image(ref["image_hw"][1].get<int>(), ref["image_hw"][0].get<int>(), 3);
    for (size_t k = 0; k < image.size(); ++k) image.data[k] = ref["image"][k].get<double>();
    text_ref = to_feature(ref["text_feature"]);
    image_ref = to_feature(ref["image_feature"]);
  }
  static Feature to_feature(const nlohmann::json& j) {
    Feature f(static_cast<Eigen::Index>(j.size()));
    for (size_t i = 0; i < j.size(); ++i) f[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    return f;
  }
  static double cosine_distance(const Feature& a, const Feature& b) { return 1.0 - a.dot(b) / (a.norm() * b.norm()); }

  nlohmann::json ref;
  TokenSequence tokens;
  Image image;
  Feature text_ref, image_ref;
};

TEST_F(TinyClip, DoubleMatchesReferenceImplementation) {
  BasicClipBundle<double> clip((kTinyClip / "model.safetensors").string());
  EXPECT_EQ(clip.image_size(), 32);
  const Feature t = clip.encode_text(tokens);
  const Feature v = clip.encode_image(image);
  ASSERT_EQ(t.size(), kFeatureDim);
  ASSERT_EQ(v.size(), kFeatureDim);
  EXPECT_LT(max_abs_diff(t, text_ref), 1e-8 * (1 + text_ref.norm()));
  EXPECT_LT(max_abs_diff(v, image_ref), 1e-8 * (1 + image_ref.norm()));
}

TEST_F(TinyClip, FloatWithinCosineTolerance) {
  ClipBundle clip((kTinyClip / "model.safetensors").string());
  EXPECT_LT(cosine_distance(clip.encode_text(tokens), text_ref), 1e-4);
  EXPECT_LT(cosine_distance(clip.encode_image(image), image_ref), 1e-4);
  EXPECT_EQ(clip.identifier().rfind("clip-vit:p8:s32:v64x2:t64x2:", 0), 0u);
}

TEST_F(TinyClip, ImageAdjointMatchesFiniteDifferences) {
  BasicClipBundle<double> clip((kTinyClip / "model.safetensors").string());
  check_adjoint(clip, random_image(16, 16, 5), 1e-5, 1e-3, 100);
}

TEST_F(TinyClip, MakeBundleLoadsClip) {
  const auto b = make_bundle("clip", (kTinyClip / "model.safetensors").string());
  EXPECT_EQ(b->identifier().rfind("clip-vit", 0), 0u);
}

}  // namespace
}  // namespace splatmark
