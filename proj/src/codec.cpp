#include "splatmark/codec.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <json.hpp>

#include "splatmark/common.hpp"

namespace splatmark {

namespace {

constexpr double kProbClamp = 1e-7;
constexpr char kCheckpointMagic[8] = {'S', 'P', 'L', 'M', 'D', 'E', 'C', '\0'};
constexpr uint32_t kCheckpointVersion = 1;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_length(int length) {
  if (length < 1 || length > kMaxBits) {
    throw Error("message length L = " + std::to_string(length) + " outside [1, " + std::to_string(kMaxBits) + "]");
  }
}

// Rounds through float32 so that saved and in-memory weights agree exactly.
void round_to_float(Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(m.data()[i]);
}
void round_to_float(Eigen::VectorXd& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = static_cast<float>(v[i]);
}

struct Forward {
  Eigen::MatrixXd x, z1, a1, z2, a2, z3;
};

}  // namespace

// ---- Messages and tokens ----------------------------------------------------

void MessageBits::validate() const {
  check_length(static_cast<int>(bits.size()));
  for (uint8_t b : bits) {
    if (b > 1) throw Error("message bits must be 0 or 1");
  }
}

MessageBits MessageBits::from_hex(const std::string& hex_in, int length) {
  check_length(length);
  std::string hex = hex_in;
  if (hex.rfind("0x", 0) == 0 || hex.rfind("0X", 0) == 0) hex = hex.substr(2);
  const size_t digits = static_cast<size_t>((length + 3) / 4);
  if (hex.size() != digits) {
    throw Error("hex message has " + std::to_string(hex.size()) + " digits, expected " + std::to_string(digits) +
                " for L = " + std::to_string(length));
  }
  std::vector<uint8_t> all;
  for (char ch : hex) {
    int v;
    if (ch >= '0' && ch <= '9') v = ch - '0';
    else if (ch >= 'a' && ch <= 'f') v = ch - 'a' + 10;
    else if (ch >= 'A' && ch <= 'F') v = ch - 'A' + 10;
    else throw Error(std::string("invalid hex digit '") + ch + "'");
    for (int k = 3; k >= 0; --k) all.push_back(static_cast<uint8_t>((v >> k) & 1));
  }
  const size_t pad = all.size() - static_cast<size_t>(length);
  for (size_t k = 0; k < pad; ++k) {
    if (all[k]) throw Error("hex message value does not fit in L = " + std::to_string(length) + " bits");
  }
  return MessageBits(std::vector<uint8_t>(all.begin() + static_cast<long>(pad), all.end()));
}

std::string MessageBits::to_hex() const {
  const size_t digits = (bits.size() + 3) / 4;
  const size_t pad = digits * 4 - bits.size();
  std::vector<uint8_t> all(pad, 0);
  all.insert(all.end(), bits.begin(), bits.end());
  std::string out;
  for (size_t d = 0; d < digits; ++d) {
    int v = 0;
    for (int k = 0; k < 4; ++k) v = (v << 1) | all[d * 4 + k];
    out += "0123456789abcdef"[v];
  }
  return out;
}

MessageBits MessageBits::random(int length, uint64_t seed) {
  check_length(length);
  Rng rng(seed);
  std::vector<uint8_t> b(static_cast<size_t>(length));
  for (auto& x : b) x = static_cast<uint8_t>(rng.next_u64() >> 63);
  return MessageBits(std::move(b));
}

int32_t bit_token(int i, int b, int length) {
  check_length(length);
  if (i < 1 || i > length || (b != 0 && b != 1)) throw Error("bit_token: position or value out of range");
  const int64_t num = (2 * static_cast<int64_t>(i - 1) + b) * 49404;
  return static_cast<int32_t>(1 + num / (2 * length - 1));
}

TokenSequence tokenize(const MessageBits& bits) {
  bits.validate();
  const int length = static_cast<int>(bits.size());
  TokenSequence t;
  t.tokens[0] = kStartToken;
  for (int i = 1; i <= length; ++i) t.tokens[i] = bit_token(i, bits.bits[i - 1], length);
  t.tokens[length + 1] = kEndToken;
  return t;
}

// ---- Loss and thresholding ----------------------------------------------------

double message_loss(const Eigen::VectorXd& probabilities, const MessageBits& target) {
  if (static_cast<size_t>(probabilities.size()) != target.size()) {
    throw Error("message_loss: " + std::to_string(probabilities.size()) + " probabilities for " +
                std::to_string(target.size()) + " bits");
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) {
    const double p = std::clamp(probabilities[i], kProbClamp, 1.0 - kProbClamp);
    loss -= target.bits[i] ? std::log(p) : std::log(1.0 - p);
  }
  return loss;
}

double message_loss_from_logits(const Eigen::VectorXd& logits, const MessageBits& target,
                                Eigen::VectorXd* grad_logits) {
  if (static_cast<size_t>(logits.size()) != target.size()) {
    throw Error("message_loss: " + std::to_string(logits.size()) + " logits for " + std::to_string(target.size()) +
                " bits");
  }
  Eigen::VectorXd p = logits.unaryExpr([](double z) { return sigmoid(z); });
  if (grad_logits) {
    *grad_logits = p;
    for (Eigen::Index i = 0; i < p.size(); ++i) (*grad_logits)[i] -= target.bits[i];
  }
  return message_loss(p, target);
}

MessageBits decode_bits(const Eigen::VectorXd& probabilities) {
  std::vector<uint8_t> b(static_cast<size_t>(probabilities.size()));
  for (Eigen::Index i = 0; i < probabilities.size(); ++i) b[i] = probabilities[i] >= 0.5 ? 1 : 0;
  return MessageBits(std::move(b));
}

// ---- Decoder ------------------------------------------------------------------

DecoderModel::DecoderModel(int length, uint64_t seed, std::string encoder_id, bool normalize_features)
    : seed_(seed), encoder_id_(std::move(encoder_id)), normalize_(normalize_features) {
  check_length(length);
  Rng rng(derive_seed(seed, "decoder-init"));
  auto init = [&rng](Eigen::MatrixXd& w, Eigen::VectorXd& b, int out, int in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    w.resize(out, in);
    b.resize(out);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = static_cast<float>(rng.uniform(-bound, bound));
    }
    for (int r = 0; r < out; ++r) b[r] = static_cast<float>(rng.uniform(-bound, bound));
  };
  init(w1_, b1_, 512, kFeatureDim);
  init(w2_, b2_, 256, 512);
  init(w3_, b3_, length, 256);
}

Eigen::MatrixXd DecoderModel::prepare(const Eigen::MatrixXd& x) const {
  if (x.cols() != kFeatureDim) {
    throw Error("decoder expects " + std::to_string(kFeatureDim) + "-dim features, got " + std::to_string(x.cols()));
  }
  if (!normalize_) return x;
  Eigen::MatrixXd y = x;
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double n = y.row(r).norm();
    if (n > 0.0) y.row(r) /= n;
  }
  return y;
}

namespace {

Forward run_forward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& w1, const Eigen::VectorXd& b1,
                    const Eigen::MatrixXd& w2, const Eigen::VectorXd& b2, const Eigen::MatrixXd& w3,
                    const Eigen::VectorXd& b3) {
  Forward f;
  f.x = x;
  f.z1 = (x * w1.transpose()).rowwise() + b1.transpose();
  f.a1 = f.z1.unaryExpr([](double v) { return gelu(v); });
  f.z2 = (f.a1 * w2.transpose()).rowwise() + b2.transpose();
  f.a2 = f.z2.unaryExpr([](double v) { return gelu(v); });
  f.z3 = (f.a2 * w3.transpose()).rowwise() + b3.transpose();
  return f;
}

}  // namespace

Eigen::VectorXd DecoderModel::logits(const Feature& f) const {
  const Eigen::MatrixXd x = prepare(f.transpose());
  return run_forward(x, w1_, b1_, w2_, b2_, w3_, b3_).z3.row(0).transpose();
}

Eigen::VectorXd DecoderModel::probabilities(const Feature& f) const {
  return logits(f).unaryExpr([](double z) { return sigmoid(z); });
}

Feature DecoderModel::feature_gradient(const Feature& f, const Eigen::VectorXd& grad_logits) const {
  if (grad_logits.size() != bits()) throw Error("feature_gradient: gradient length does not match L");
  const Eigen::MatrixXd x = prepare(f.transpose());
  const Forward fw = run_forward(x, w1_, b1_, w2_, b2_, w3_, b3_);
  const Eigen::RowVectorXd d3 = grad_logits.transpose();
  const Eigen::RowVectorXd d2 = (d3 * w3_).cwiseProduct(fw.z2.row(0).unaryExpr([](double v) { return gelu_grad(v); }));
  const Eigen::RowVectorXd d1 = (d2 * w2_).cwiseProduct(fw.z1.row(0).unaryExpr([](double v) { return gelu_grad(v); }));
  Eigen::VectorXd gx = (d1 * w1_).transpose();
  if (normalize_) {
    const double n = f.norm();
    if (n > 0.0) {
      const Eigen::VectorXd u = f / n;
      gx = (gx - u * u.dot(gx)) / n;
    }
  }
  return gx;
}

bool DecoderModel::operator==(const DecoderModel& o) const {
  return w1_ == o.w1_ && w2_ == o.w2_ && w3_ == o.w3_ && b1_ == o.b1_ && b2_ == o.b2_ && b3_ == o.b3_ &&
         seed_ == o.seed_ && encoder_id_ == o.encoder_id_ && normalize_ == o.normalize_;
}

void DecoderModel::save(const std::string& path, const std::string& extra_json) const {
  nlohmann::json meta = {
      {"format", "splatmark-decoder"},
      {"version", kCheckpointVersion},
      {"bits", bits()},
      {"layers", {{kFeatureDim, 512}, {512, 256}, {256, bits()}}},
      {"activations", {"gelu", "gelu", "sigmoid"}},
      {"blob_order", {"w1", "b1", "w2", "b2", "w3", "b3"}},
      {"weight_layout", "row-major [out][in], little-endian float32"},
      {"seed", seed_},
      {"encoder_id", encoder_id_},
      {"normalize_features", normalize_},
      {"extra", nlohmann::json::parse(extra_json)},
  };
  const std::string text = meta.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write decoder checkpoint: " + path);
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  const uint32_t version = kCheckpointVersion;
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&version), sizeof(version));
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  auto put = [&out](const double* p, Eigen::Index n, Eigen::Index rows, Eigen::Index cols, bool matrix) {
    std::vector<float> buf(static_cast<size_t>(n));
    if (matrix) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) buf[r * cols + c] = static_cast<float>(p[c * rows + r]);
      }
    } else {
      for (Eigen::Index i = 0; i < n; ++i) buf[i] = static_cast<float>(p[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
  };
  put(w1_.data(), w1_.size(), w1_.rows(), w1_.cols(), true);
  put(b1_.data(), b1_.size(), 0, 0, false);
  put(w2_.data(), w2_.size(), w2_.rows(), w2_.cols(), true);
  put(b2_.data(), b2_.size(), 0, 0, false);
  put(w3_.data(), w3_.size(), w3_.rows(), w3_.cols(), true);
  put(b3_.data(), b3_.size(), 0, 0, false);
  if (!out) throw Error("write failed: " + path);
}

DecoderModel DecoderModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open decoder checkpoint: " + path);
  char magic[8];
  uint32_t version = 0;
  uint64_t len = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError("not a decoder checkpoint: " + path);
  }
  if (version != kCheckpointVersion) throw ParseError("unsupported decoder checkpoint version " + std::to_string(version));
  if (len > (1u << 24)) throw ParseError("decoder checkpoint metadata too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("decoder checkpoint metadata: ") + e.what());
  }
  DecoderModel m;
  const int length = meta.at("bits").get<int>();
  check_length(length);
  m.seed_ = meta.at("seed").get<uint64_t>();
  m.encoder_id_ = meta.at("encoder_id").get<std::string>();
  m.normalize_ = meta.value("normalize_features", false);
  auto get_matrix = [&in](Eigen::MatrixXd& w, int rows, int cols) {
    std::vector<float> buf(static_cast<size_t>(rows) * cols);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    w.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) w(r, c) = buf[static_cast<size_t>(r) * cols + c];
    }
  };
  auto get_vector = [&in](Eigen::VectorXd& b, int n) {
    std::vector<float> buf(static_cast<size_t>(n));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
    b.resize(n);
    for (int i = 0; i < n; ++i) b[i] = buf[i];
  };
  get_matrix(m.w1_, 512, kFeatureDim);
  get_vector(m.b1_, 512);
  get_matrix(m.w2_, 256, 512);
  get_vector(m.b2_, 256);
  get_matrix(m.w3_, length, 256);
  get_vector(m.b3_, length);
  if (!in) throw ParseError("truncated decoder checkpoint: " + path);
  return m;
}

// ---- Training -------------------------------------------------------------------

std::vector<MessageBits> sample_messages(int length, size_t max_count, uint64_t seed) {
  check_length(length);
  Rng rng(seed);
  std::vector<MessageBits> out;
  if (length < 63 && (uint64_t{1} << length) <= max_count) {
    const uint64_t total = uint64_t{1} << length;
    for (uint64_t v = 0; v < total; ++v) {
      std::vector<uint8_t> b(static_cast<size_t>(length));
      for (int i = 0; i < length; ++i) b[i] = static_cast<uint8_t>((v >> (length - 1 - i)) & 1);
      out.emplace_back(std::move(b));
    }
  } else {
    std::set<std::vector<uint8_t>> seen;
    while (out.size() < max_count) {
      std::vector<uint8_t> b(static_cast<size_t>(length));
      for (auto& x : b) x = static_cast<uint8_t>(rng.next_u64() >> 63);
      if (seen.insert(b).second) out.emplace_back(std::move(b));
    }
  }
  rng.shuffle(out);
  return out;
}

class DecoderTrainer {
 public:
  static DecoderTrainResult run(const TextEncoder& encoder, const std::string& encoder_id, int length,
                                const DecoderTrainConfig& cfg,
                                const std::function<void(const DecoderEpochStats&)>& on_epoch) {
    if (cfg.epochs < 0 || cfg.batch_size < 1) throw Error("train_decoder: invalid epochs or batch size");
    const auto messages = sample_messages(length, cfg.max_messages, derive_seed(cfg.seed, "messages"));
    const size_t n = messages.size();
    const size_t n_train = std::max<size_t>(1, n / 2);

    Eigen::MatrixXd feats(static_cast<Eigen::Index>(n), kFeatureDim);
    Eigen::MatrixXd targets(static_cast<Eigen::Index>(n), length);
    bool bad_dim = false;
#pragma omp parallel for schedule(dynamic)
    for (size_t k = 0; k < n; ++k) {
      const Feature f = encoder(tokenize(messages[k]));
      if (f.size() != kFeatureDim) {
        bad_dim = true;
        continue;
      }
      feats.row(static_cast<Eigen::Index>(k)) = f.transpose();
      for (int i = 0; i < length; ++i) targets(static_cast<Eigen::Index>(k), i) = messages[k].bits[i];
    }
    if (bad_dim) throw Error("train_decoder: encoder output is not " + std::to_string(kFeatureDim) + "-dimensional");

    DecoderTrainResult result;
    result.model = DecoderModel(length, cfg.seed, encoder_id, cfg.normalize_features);
    DecoderModel& m = result.model;
    const Eigen::MatrixXd x_all = m.prepare(feats);
    const Eigen::MatrixXd x_train = x_all.topRows(static_cast<Eigen::Index>(n_train));
    const Eigen::MatrixXd y_train = targets.topRows(static_cast<Eigen::Index>(n_train));
    const Eigen::MatrixXd x_test = x_all.bottomRows(static_cast<Eigen::Index>(n - n_train));
    const Eigen::MatrixXd y_test = targets.bottomRows(static_cast<Eigen::Index>(n - n_train));
    result.train_messages = n_train;
    result.heldout_messages = n - n_train;

    Adam adam(m, cfg);
    Rng rng(derive_seed(cfg.seed, "decoder-batches"));
    std::vector<size_t> order(n_train);
    for (size_t i = 0; i < n_train; ++i) order[i] = i;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      rng.shuffle(order);
      double loss_sum = 0.0;
      for (size_t start = 0; start < n_train; start += static_cast<size_t>(cfg.batch_size)) {
        const size_t bsz = std::min(static_cast<size_t>(cfg.batch_size), n_train - start);
        Eigen::MatrixXd xb(static_cast<Eigen::Index>(bsz), kFeatureDim), yb(static_cast<Eigen::Index>(bsz), length);
        for (size_t r = 0; r < bsz; ++r) {
          xb.row(static_cast<Eigen::Index>(r)) = x_train.row(static_cast<Eigen::Index>(order[start + r]));
          yb.row(static_cast<Eigen::Index>(r)) = y_train.row(static_cast<Eigen::Index>(order[start + r]));
        }
        loss_sum += step(m, adam, xb, yb) * static_cast<double>(bsz);
      }
      DecoderEpochStats stats{epoch, loss_sum / static_cast<double>(n_train), accuracy(m, x_train, y_train),
                              x_test.rows() ? accuracy(m, x_test, y_test) : 0.0};
      result.log.push_back(stats);
      if (on_epoch) on_epoch(stats);
    }
    round_all(m);
    result.train_accuracy = accuracy(m, x_train, y_train);
    result.heldout_accuracy = x_test.rows() ? accuracy(m, x_test, y_test) : 0.0;
    return result;
  }

 private:
  // torch.optim.Adam semantics; weight decay enters as L2 on the gradient.
  struct Adam {
    Adam(const DecoderModel& m, const DecoderTrainConfig& cfg)
        : lr(cfg.learning_rate), wd(cfg.weight_decay) {
      for (const auto* p : {&m.w1_, &m.w2_, &m.w3_}) {
        mm.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
        vm.emplace_back(Eigen::MatrixXd::Zero(p->rows(), p->cols()));
      }
      for (const auto* p : {&m.b1_, &m.b2_, &m.b3_}) {
        mv.emplace_back(Eigen::VectorXd::Zero(p->size()));
        vv.emplace_back(Eigen::VectorXd::Zero(p->size()));
      }
    }
    template <typename P>
    void update(P& param, P grad, P& m1, P& m2) {
      grad += wd * param;
      m1 = b1 * m1 + (1 - b1) * grad;
      m2 = b2 * m2 + (1 - b2) * grad.cwiseProduct(grad);
      const double c1 = 1 - std::pow(b1, t), c2 = 1 - std::pow(b2, t);
      param -= (lr / c1) * m1.cwiseQuotient(((m2 / c2).cwiseSqrt().array() + eps).matrix());
    }
    double lr, wd, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    int t = 0;
    std::vector<Eigen::MatrixXd> mm, vm;
    std::vector<Eigen::VectorXd> mv, vv;
  };

  static double step(DecoderModel& m, Adam& adam, const Eigen::MatrixXd& xb, const Eigen::MatrixXd& yb) {
    const Forward f = run_forward(xb, m.w1_, m.b1_, m.w2_, m.b2_, m.w3_, m.b3_);
    const double bsz = static_cast<double>(xb.rows());
    const Eigen::MatrixXd p = f.z3.unaryExpr([](double z) { return sigmoid(z); });
    double loss = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      const double q = std::clamp(p.data()[i], kProbClamp, 1.0 - kProbClamp);
      loss -= yb.data()[i] > 0.5 ? std::log(q) : std::log(1.0 - q);
    }
    const Eigen::MatrixXd d3 = (p - yb) / bsz;
    const Eigen::MatrixXd d2 = (d3 * m.w3_).cwiseProduct(f.z2.unaryExpr([](double v) { return gelu_grad(v); }));
    const Eigen::MatrixXd d1 = (d2 * m.w2_).cwiseProduct(f.z1.unaryExpr([](double v) { return gelu_grad(v); }));
    ++adam.t;
    adam.update<Eigen::MatrixXd>(m.w3_, d3.transpose() * f.a2, adam.mm[2], adam.vm[2]);
    adam.update<Eigen::VectorXd>(m.b3_, d3.colwise().sum().transpose(), adam.mv[2], adam.vv[2]);
    adam.update<Eigen::MatrixXd>(m.w2_, d2.transpose() * f.a1, adam.mm[1], adam.vm[1]);
    adam.update<Eigen::VectorXd>(m.b2_, d2.colwise().sum().transpose(), adam.mv[1], adam.vv[1]);
    adam.update<Eigen::MatrixXd>(m.w1_, d1.transpose() * f.x, adam.mm[0], adam.vm[0]);
    adam.update<Eigen::VectorXd>(m.b1_, d1.colwise().sum().transpose(), adam.mv[0], adam.vv[0]);
    return loss / bsz;
  }

  // Makes the trained parameters float32-representable so checkpoints are lossless.
  static void round_all(DecoderModel& m) {
    round_to_float(m.w1_);
    round_to_float(m.w2_);
    round_to_float(m.w3_);
    round_to_float(m.b1_);
    round_to_float(m.b2_);
    round_to_float(m.b3_);
  }

  static double accuracy(const DecoderModel& m, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
    const Forward f = run_forward(x, m.w1_, m.b1_, m.w2_, m.b2_, m.w3_, m.b3_);
    size_t correct = 0;
    for (Eigen::Index i = 0; i < f.z3.size(); ++i) {
      // p >= 0.5 exactly when the logit is >= 0.
      correct += (f.z3.data()[i] >= 0.0) == (y.data()[i] > 0.5);
    }
    return static_cast<double>(correct) / static_cast<double>(f.z3.size());
  }
};

DecoderTrainResult train_decoder(const TextEncoder& encoder, const std::string& encoder_id, int length,
                                 const DecoderTrainConfig& config,
                                 const std::function<void(const DecoderEpochStats&)>& on_epoch) {
  return DecoderTrainer::run(encoder, encoder_id, length, config, on_epoch);
}

}  // namespace splatmark
