#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace splatmark {

inline constexpr int kTokenSlots = 77;
inline constexpr int kStartToken = 49406;
inline constexpr int kEndToken = 49407;
inline constexpr int kMaxPayloadToken = 49405;
inline constexpr int kMaxBits = 74;
inline constexpr int kFeatureDim = 512;

using Feature = Eigen::VectorXd;

struct MessageBits {
  std::vector<uint8_t> bits;

  MessageBits() = default;
  explicit MessageBits(std::vector<uint8_t> b) : bits(std::move(b)) {}
  size_t size() const { return bits.size(); }
  void validate() const;
  bool operator==(const MessageBits&) const = default;

  // Hex digits of the message read as a big-endian L-bit integer; bit 1 is
  // the most significant.
  static MessageBits from_hex(const std::string& hex, int length);
  std::string to_hex() const;
  static MessageBits random(int length, uint64_t seed);
};

struct TokenSequence {
  std::array<int32_t, kTokenSlots> tokens{};
  bool operator==(const TokenSequence&) const = default;
};

// Token for bit i (1-based) of an L-bit message taking value b.
int32_t bit_token(int i, int b, int length);
TokenSequence tokenize(const MessageBits& bits);

// Summed binary cross-entropy with probabilities clamped to [1e-7, 1 - 1e-7].
double message_loss(const Eigen::VectorXd& probabilities, const MessageBits& target);
// Same loss evaluated from logits. The gradient (p - M) is taken with
// respect to the logits and ignores the clamp.
double message_loss_from_logits(const Eigen::VectorXd& logits, const MessageBits& target,
                                Eigen::VectorXd* grad_logits);
MessageBits decode_bits(const Eigen::VectorXd& probabilities);

// 512 -> 512 -> 256 -> L fully connected decoder, GELU hidden activations and
// logistic outputs.
class DecoderModel {
 public:
  DecoderModel() = default;
  DecoderModel(int length, uint64_t seed, std::string encoder_id, bool normalize_features = false);

  int bits() const { return static_cast<int>(b3_.size()); }
  uint64_t seed() const { return seed_; }
  const std::string& encoder_id() const { return encoder_id_; }
  bool normalize_features() const { return normalize_; }

  Eigen::VectorXd logits(const Feature& f) const;
  Eigen::VectorXd probabilities(const Feature& f) const;
  // Vector-Jacobian product: d loss / d feature given d loss / d logits.
  Feature feature_gradient(const Feature& f, const Eigen::VectorXd& grad_logits) const;

  void save(const std::string& path, const std::string& extra_json = "{}") const;
  static DecoderModel load(const std::string& path);
  bool operator==(const DecoderModel& o) const;

 private:
  friend class DecoderTrainer;
  Eigen::MatrixXd prepare(const Eigen::MatrixXd& x) const;

  Eigen::MatrixXd w1_, w2_, w3_;  // out x in
  Eigen::VectorXd b1_, b2_, b3_;
  uint64_t seed_ = 0;
  std::string encoder_id_;
  bool normalize_ = false;
};

struct DecoderTrainConfig {
  int epochs = 100;
  int batch_size = 64;
  double learning_rate = 5e-3;
  double weight_decay = 1e-6;
  size_t max_messages = 2048;
  uint64_t seed = 0;
  bool normalize_features = false;
};

struct DecoderEpochStats {
  int epoch;
  double loss;
  double train_accuracy;
  double heldout_accuracy;
};

struct DecoderTrainResult {
  DecoderModel model;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
  size_t train_messages = 0;
  size_t heldout_messages = 0;
  std::vector<DecoderEpochStats> log;
};

using TextEncoder = std::function<Feature(const TokenSequence&)>;

// Distinct messages: all 2^L when that is at most max_count, otherwise
// max_count random ones. The result is shuffled.
std::vector<MessageBits> sample_messages(int length, size_t max_count, uint64_t seed);

DecoderTrainResult train_decoder(const TextEncoder& encoder, const std::string& encoder_id, int length,
                                 const DecoderTrainConfig& config,
                                 const std::function<void(const DecoderEpochStats&)>& on_epoch = {});

}  // namespace splatmark
