#include "splatmark/clip.hpp"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "splatmark/common.hpp"

namespace splatmark {

namespace {

double half_to_double(uint16_t h) {
  const uint32_t sign = (h >> 15) & 1, exp = (h >> 10) & 0x1f, frac = h & 0x3ff;
  double v;
  if (exp == 0) v = std::ldexp(static_cast<double>(frac), -24);
  else if (exp == 31) v = frac ? std::nan("") : INFINITY;
  else v = std::ldexp(static_cast<double>(frac | 0x400), static_cast<int>(exp) - 25);
  return sign ? -v : v;
}

double bf16_to_double(uint16_t h) {
  const uint32_t bits = static_cast<uint32_t>(h) << 16;
  float f;
  std::memcpy(&f, &bits, sizeof(f));
  return f;
}

}  // namespace

std::map<std::string, Tensor> load_safetensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open safetensors file: " + path);
  uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || header_len > (uint64_t{1} << 30)) throw ParseError("safetensors: bad header length");
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const std::exception& e) {
    throw ParseError(std::string("safetensors header: ") + e.what());
  }
  const std::streamoff base = static_cast<std::streamoff>(8 + header_len);
  std::map<std::string, Tensor> out;
  for (const auto& [name, info] : header.items()) {
    if (name == "__metadata__") continue;
    Tensor t;
    t.shape = info.at("shape").get<std::vector<int64_t>>();
    const auto offsets = info.at("data_offsets").get<std::vector<uint64_t>>();
    const std::string dtype = info.at("dtype").get<std::string>();
    size_t count = 1;
    for (auto d : t.shape) count *= static_cast<size_t>(d);
    const size_t bytes = offsets.at(1) - offsets.at(0);
    std::vector<char> raw(bytes);
    in.seekg(base + static_cast<std::streamoff>(offsets[0]));
    in.read(raw.data(), static_cast<std::streamsize>(bytes));
    if (!in) throw ParseError("safetensors: truncated tensor " + name);
    t.data.resize(count);
    if (dtype == "F32" && bytes == count * 4) {
      for (size_t i = 0; i < count; ++i) {
        float f;
        std::memcpy(&f, raw.data() + i * 4, 4);
        t.data[i] = f;
      }
    } else if (dtype == "F64" && bytes == count * 8) {
      std::memcpy(t.data.data(), raw.data(), bytes);
    } else if ((dtype == "F16" || dtype == "BF16") && bytes == count * 2) {
      for (size_t i = 0; i < count; ++i) {
        uint16_t h;
        std::memcpy(&h, raw.data() + i * 2, 2);
        t.data[i] = dtype == "F16" ? half_to_double(h) : bf16_to_double(h);
      }
    } else if (dtype == "I64") {
      continue;  // buffers such as position_ids are not needed
    } else {
      throw ParseError("safetensors: unsupported dtype " + dtype + " for " + name);
    }
    out.emplace(name, std::move(t));
  }
  return out;
}

template <typename Scalar>
struct BasicClipBundle<Scalar>::Model {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowVec = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

  struct Linear {
    Mat w;  // out x in
    RowVec b;
    bool has_bias = false;
    Mat forward(const Mat& x) const {
      Mat y = x * w.transpose();
      if (has_bias) y.rowwise() += b;
      return y;
    }
  };
  struct Norm {
    RowVec gamma, beta;
  };
  struct Layer {
    Norm ln1, ln2;
    Linear q, k, v, o, fc1, fc2;
  };
  struct Tower {
    std::vector<Layer> layers;
    int heads = 1;
    int width = 0;
  };

  Tower text, vision;
  Mat token_embedding, text_positions;
  Norm text_final;
  Linear text_projection;

  Mat patch_weight;  // width x (3 * p * p), column order (c, ky, kx)
  RowVec class_embedding;
  Mat vision_positions;
  Norm pre_norm, post_norm;
  Linear visual_projection;
  int patch = 32;
  int image_size = 224;
  double eps = 1e-5;

  // Cached per-layer activations for the backward pass.
  struct LayerCache {
    Mat x, a, mean_inv1, q, k, v, attn_concat, h2, b, mean_inv2, f1;
    std::vector<Mat> probs;
  };

  static Mat to_mat(const Tensor& t, int64_t rows, int64_t cols) {
    if (static_cast<int64_t>(t.data.size()) != rows * cols) throw Error("CLIP weights: unexpected tensor size");
    Mat m(rows, cols);
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c = 0; c < cols; ++c) m(r, c) = static_cast<Scalar>(t.data[r * cols + c]);
    }
    return m;
  }
  static RowVec to_row(const Tensor& t) {
    RowVec v(static_cast<Eigen::Index>(t.data.size()));
    for (size_t i = 0; i < t.data.size(); ++i) v[static_cast<Eigen::Index>(i)] = static_cast<Scalar>(t.data[i]);
    return v;
  }

  static const Tensor& get(const std::map<std::string, Tensor>& w, const std::string& name) {
    auto it = w.find(name);
    if (it == w.end()) throw ParseError("CLIP weights: missing tensor '" + name + "'");
    return it->second;
  }

  static Linear linear(const std::map<std::string, Tensor>& w, const std::string& name, bool bias = true) {
    const Tensor& t = get(w, name + ".weight");
    if (t.shape.size() != 2) throw ParseError("CLIP weights: '" + name + ".weight' is not a matrix");
    Linear l;
    l.w = to_mat(t, t.shape[0], t.shape[1]);
    if (bias) {
      l.b = to_row(get(w, name + ".bias"));
      l.has_bias = true;
    }
    return l;
  }

  static Norm norm(const std::map<std::string, Tensor>& w, const std::string& name) {
    return {to_row(get(w, name + ".weight")), to_row(get(w, name + ".bias"))};
  }

  static Tower tower(const std::map<std::string, Tensor>& w, const std::string& prefix, int heads) {
    Tower t;
    t.heads = heads;
    for (int i = 0;; ++i) {
      const std::string p = prefix + ".encoder.layers." + std::to_string(i);
      if (!w.count(p + ".layer_norm1.weight")) break;
      Layer l;
      l.ln1 = norm(w, p + ".layer_norm1");
      l.ln2 = norm(w, p + ".layer_norm2");
      l.q = linear(w, p + ".self_attn.q_proj");
      l.k = linear(w, p + ".self_attn.k_proj");
      l.v = linear(w, p + ".self_attn.v_proj");
      l.o = linear(w, p + ".self_attn.out_proj");
      l.fc1 = linear(w, p + ".mlp.fc1");
      l.fc2 = linear(w, p + ".mlp.fc2");
      t.layers.push_back(std::move(l));
    }
    if (t.layers.empty()) throw ParseError("CLIP weights: no encoder layers under '" + prefix + "'");
    t.width = static_cast<int>(t.layers[0].q.w.cols());
    if (t.width % heads != 0) throw ParseError("CLIP weights: width not divisible by head count");
    return t;
  }

  // Row-wise layer norm; returns output and stores (mean, 1/std) per row.
  Mat layer_norm(const Mat& x, const Norm& n, Mat* stats) const {
    Mat y(x.rows(), x.cols());
    if (stats) stats->resize(x.rows(), 2);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar mean = x.row(r).mean();
      const Scalar var = (x.row(r).array() - mean).square().mean();
      const Scalar inv = Scalar(1) / std::sqrt(var + static_cast<Scalar>(eps));
      y.row(r) = ((x.row(r).array() - mean) * inv).matrix().cwiseProduct(n.gamma) + n.beta;
      if (stats) {
        (*stats)(r, 0) = mean;
        (*stats)(r, 1) = inv;
      }
    }
    return y;
  }

  static Mat layer_norm_backward(const Mat& x, const Mat& stats, const Norm& n, const Mat& dy) {
    Mat dx(x.rows(), x.cols());
    const Scalar d = static_cast<Scalar>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Scalar inv = stats(r, 1);
      const RowVec xhat = ((x.row(r).array() - stats(r, 0)) * inv).matrix();
      const RowVec dxhat = dy.row(r).cwiseProduct(n.gamma);
      const Scalar m1 = dxhat.sum() / d;
      const Scalar m2 = dxhat.cwiseProduct(xhat).sum() / d;
      dx.row(r) = (inv * (dxhat.array() - m1 - xhat.array() * m2)).matrix();
    }
    return dx;
  }

  static Scalar sigm(Scalar z) { return Scalar(1) / (Scalar(1) + std::exp(-z)); }

  Mat block(const Tower& t, const Layer& l, const Mat& x, bool causal, LayerCache* cache) const {
    Mat s1, s2;
    const Mat a = layer_norm(x, l.ln1, &s1);
    const Mat q = l.q.forward(a), k = l.k.forward(a), v = l.v.forward(a);
    const int hd = t.width / t.heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd)));
    const Eigen::Index n = x.rows();
    Mat concat(n, t.width);
    std::vector<Mat> probs;
    for (int h = 0; h < t.heads; ++h) {
      const auto qh = q.middleCols(h * hd, hd), kh = k.middleCols(h * hd, hd), vh = v.middleCols(h * hd, hd);
      Mat s = (qh * scale) * kh.transpose();
      for (Eigen::Index i = 0; i < n; ++i) {
        Scalar mx = -std::numeric_limits<Scalar>::infinity();
        const Eigen::Index lim = causal ? i + 1 : n;
        for (Eigen::Index j = 0; j < lim; ++j) mx = std::max(mx, s(i, j));
        Scalar sum = 0;
        for (Eigen::Index j = 0; j < n; ++j) {
          s(i, j) = j < lim ? std::exp(s(i, j) - mx) : Scalar(0);
          sum += s(i, j);
        }
        s.row(i) /= sum;
      }
      concat.middleCols(h * hd, hd) = s * vh;
      if (cache) probs.push_back(std::move(s));
    }
    const Mat h2 = x + l.o.forward(concat);
    const Mat b = layer_norm(h2, l.ln2, &s2);
    const Mat f1 = l.fc1.forward(b);
    const Mat g = f1.unaryExpr([](Scalar z) { return z * sigm(Scalar(1.702) * z); });
    Mat out = h2 + l.fc2.forward(g);
    if (cache) {
      *cache = LayerCache{x, a, s1, q, k, v, concat, h2, b, s2, f1, std::move(probs)};
    }
    return out;
  }

  Mat block_backward(const Tower& t, const Layer& l, const LayerCache& c, const Mat& dout) const {
    // MLP branch.
    const Mat dg = dout * l.fc2.w;
    const Mat df1 = dg.binaryExpr(c.f1, [](Scalar d, Scalar z) {
      const Scalar s = sigm(Scalar(1.702) * z);
      return d * (s + Scalar(1.702) * z * s * (Scalar(1) - s));
    });
    const Mat db = df1 * l.fc1.w;
    const Mat dh2 = dout + layer_norm_backward(c.h2, c.mean_inv2, l.ln2, db);
    // Attention branch.
    const Mat dconcat = dh2 * l.o.w;
    const int hd = t.width / t.heads;
    const Scalar scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd)));
    Mat dq(c.q.rows(), c.q.cols()), dk(c.k.rows(), c.k.cols()), dv(c.v.rows(), c.v.cols());
    for (int h = 0; h < t.heads; ++h) {
      const Mat& p = c.probs[h];
      const auto doh = dconcat.middleCols(h * hd, hd);
      const auto qh = c.q.middleCols(h * hd, hd), kh = c.k.middleCols(h * hd, hd), vh = c.v.middleCols(h * hd, hd);
      const Mat dp = doh * vh.transpose();
      dv.middleCols(h * hd, hd) = p.transpose() * doh;
      Mat ds = p.cwiseProduct(dp);
      const Vec rows = ds.rowwise().sum();
      ds -= p.cwiseProduct(rows.replicate(1, p.cols()));
      dq.middleCols(h * hd, hd) = (ds * kh) * scale;
      dk.middleCols(h * hd, hd) = (ds.transpose() * qh) * scale;
    }
    const Mat da = dq * l.q.w + dk * l.k.w + dv * l.v.w;
    return dh2 + layer_norm_backward(c.x, c.mean_inv1, l.ln1, da);
  }
};

namespace {

uint64_t file_fingerprint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  uint64_t h = 1469598103934665603ull;
  std::vector<char> buf(1 << 20);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    const auto n = in.gcount();
    for (std::streamsize i = 0; i < n; ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

template <typename Scalar>
class ClipTape final : public ImageTape {
 public:
  using Model = typename BasicClipBundle<Scalar>::Model;
  using Mat = typename Model::Mat;

  const Model* model = nullptr;
  PixelOp resize;
  bool resized_input = false;
  std::vector<typename Model::LayerCache> caches;
  Mat tokens_pre, pre_stats, final_tokens, post_stats;
  int grid = 0;

  Image backward(const Feature& grad_feature) const override {
    const Model& m = *model;
    if (grad_feature.size() != m.visual_projection.w.rows()) throw Error("CLIP: gradient has wrong dimension");
    Mat dproj(1, grad_feature.size());
    for (Eigen::Index i = 0; i < grad_feature.size(); ++i) dproj(0, i) = static_cast<Scalar>(grad_feature[i]);
    const Mat dpooled = dproj * m.visual_projection.w;
    const Mat cls = final_tokens.topRows(1);
    const Mat dcls = Model::layer_norm_backward(cls, post_stats, m.post_norm, dpooled);
    Mat d = Mat::Zero(final_tokens.rows(), final_tokens.cols());
    d.topRows(1) = dcls;
    for (size_t li = m.vision.layers.size(); li-- > 0;) {
      d = m.block_backward(m.vision, m.vision.layers[li], caches[li], d);
    }
    d = Model::layer_norm_backward(tokens_pre, pre_stats, m.pre_norm, d);
    const Mat dpatch = d.bottomRows(d.rows() - 1) * m.patch_weight;  // (grid^2) x (3 p p)
    const int p = m.patch, s = m.image_size;
    Image g(s, s, 3);
    for (int gy = 0; gy < grid; ++gy) {
      for (int gx = 0; gx < grid; ++gx) {
        const Eigen::Index row = gy * grid + gx;
        for (int c = 0; c < 3; ++c) {
          for (int ky = 0; ky < p; ++ky) {
            for (int kx = 0; kx < p; ++kx) {
              g.at(gy * p + ky, gx * p + kx, c) =
                  static_cast<double>(dpatch(row, (c * p + ky) * p + kx)) / kClipStd[c];
            }
          }
        }
      }
    }
    return resized_input ? resize.adjoint(g) : g;
  }
};

}  // namespace

template <typename Scalar>
BasicClipBundle<Scalar>::BasicClipBundle(const std::string& path) : model_(std::make_unique<Model>()) {
  const auto w = load_safetensors(path);
  int text_heads = 0, vision_heads = 0;
  const auto cfg_path = std::filesystem::path(path).parent_path() / "config.json";
  if (std::filesystem::exists(cfg_path)) {
    std::ifstream in(cfg_path);
    const auto cfg = nlohmann::json::parse(in);
    if (cfg.contains("text_config")) text_heads = cfg["text_config"].value("num_attention_heads", 0);
    if (cfg.contains("vision_config")) {
      vision_heads = cfg["vision_config"].value("num_attention_heads", 0);
      model_->eps = cfg["vision_config"].value("layer_norm_eps", 1e-5);
    }
  }
  Model& m = *model_;
  const Tensor& tok = Model::get(w, "text_model.embeddings.token_embedding.weight");
  const Tensor& tpos = Model::get(w, "text_model.embeddings.position_embedding.weight");
  const int text_width = static_cast<int>(tok.shape.at(1));
  m.token_embedding = Model::to_mat(tok, tok.shape[0], tok.shape[1]);
  m.text_positions = Model::to_mat(tpos, tpos.shape[0], tpos.shape[1]);
  if (m.text_positions.rows() < kTokenSlots) throw ParseError("CLIP weights: text context shorter than 77");
  m.text = Model::tower(w, "text_model", text_heads ? text_heads : std::max(1, text_width / 64));
  m.text_final = Model::norm(w, "text_model.final_layer_norm");
  m.text_projection = Model::linear(w, "text_projection", false);

  const Tensor& pw = Model::get(w, "vision_model.embeddings.patch_embedding.weight");
  if (pw.shape.size() != 4 || pw.shape[1] != 3) throw ParseError("CLIP weights: unexpected patch embedding shape");
  const int vision_width = static_cast<int>(pw.shape[0]);
  m.patch = static_cast<int>(pw.shape[2]);
  m.patch_weight = Model::to_mat(pw, pw.shape[0], pw.shape[1] * pw.shape[2] * pw.shape[3]);
  m.class_embedding = Model::to_row(Model::get(w, "vision_model.embeddings.class_embedding"));
  const Tensor& vpos = Model::get(w, "vision_model.embeddings.position_embedding.weight");
  m.vision_positions = Model::to_mat(vpos, vpos.shape[0], vpos.shape[1]);
  const int grid = static_cast<int>(std::lround(std::sqrt(static_cast<double>(vpos.shape[0] - 1))));
  if (grid * grid + 1 != vpos.shape[0]) throw ParseError("CLIP weights: position embedding is not a square grid");
  m.image_size = grid * m.patch;
  m.vision = Model::tower(w, "vision_model", vision_heads ? vision_heads : std::max(1, vision_width / 64));
  m.pre_norm = Model::norm(w, "vision_model.pre_layrnorm");
  m.post_norm = Model::norm(w, "vision_model.post_layernorm");
  m.visual_projection = Model::linear(w, "visual_projection", false);
  if (m.visual_projection.w.rows() != kFeatureDim || m.text_projection.w.rows() != kFeatureDim) {
    throw ParseError("CLIP weights: projection dimension is not 512");
  }

  std::ostringstream id;
  id << "clip-vit:p" << m.patch << ":s" << m.image_size << ":v" << vision_width << "x" << m.vision.layers.size()
     << ":t" << text_width << "x" << m.text.layers.size() << ":" << std::hex << file_fingerprint(path);
  identifier_ = id.str();
}

template <typename Scalar>
BasicClipBundle<Scalar>::~BasicClipBundle() = default;

template <typename Scalar>
std::string BasicClipBundle<Scalar>::identifier() const {
  return identifier_;
}

template <typename Scalar>
int BasicClipBundle<Scalar>::image_size() const {
  return model_->image_size;
}

template <typename Scalar>
Feature BasicClipBundle<Scalar>::encode_text(const TokenSequence& tokens) const {
  using Mat = typename Model::Mat;
  const Model& m = *model_;
  Mat x(kTokenSlots, m.token_embedding.cols());
  Eigen::Index eot = 0;
  for (int i = 0; i < kTokenSlots; ++i) {
    const int32_t t = tokens.tokens[i];
    if (t < 0 || t >= m.token_embedding.rows()) throw Error("CLIP text: token id out of vocabulary");
    x.row(i) = m.token_embedding.row(t) + m.text_positions.row(i);
    if (t > tokens.tokens[eot]) eot = i;
  }
  for (const auto& l : m.text.layers) x = m.block(m.text, l, x, true, nullptr);
  const Mat pooled = m.layer_norm(x.row(eot), m.text_final, nullptr);
  const Mat f = m.text_projection.forward(pooled);
  Feature out(f.cols());
  for (Eigen::Index i = 0; i < f.cols(); ++i) out[i] = static_cast<double>(f(0, i));
  return out;
}

template <typename Scalar>
std::unique_ptr<ImageTape> BasicClipBundle<Scalar>::encode_image_tape(const Image& image) const {
  using Mat = typename Model::Mat;
  const Model& m = *model_;
  if (image.channels != 3) throw Error("CLIP encoder: expected a 3-channel image");
  require_finite(image, "CLIP encoder");
  auto tape = std::make_unique<ClipTape<Scalar>>();
  tape->model = &m;
  const int s = m.image_size, p = m.patch, grid = s / p;
  tape->grid = grid;
  Image x = image;
  if (image.width != s || image.height != s) {
    tape->resize = make_resize_op(image.width, image.height, s, s);
    x = tape->resize.apply(image);
    tape->resized_input = true;
  }
  Mat patches(grid * grid, 3 * p * p);
  for (int gy = 0; gy < grid; ++gy) {
    for (int gx = 0; gx < grid; ++gx) {
      for (int c = 0; c < 3; ++c) {
        for (int ky = 0; ky < p; ++ky) {
          for (int kx = 0; kx < p; ++kx) {
            patches(gy * grid + gx, (c * p + ky) * p + kx) =
                static_cast<Scalar>((x.at(gy * p + ky, gx * p + kx, c) - kClipMean[c]) / kClipStd[c]);
          }
        }
      }
    }
  }
  Mat tokens(grid * grid + 1, m.patch_weight.rows());
  tokens.row(0) = m.class_embedding;
  tokens.bottomRows(grid * grid) = patches * m.patch_weight.transpose();
  tokens += m.vision_positions;
  tape->tokens_pre = tokens;
  Mat h = m.layer_norm(tokens, m.pre_norm, &tape->pre_stats);
  tape->caches.resize(m.vision.layers.size());
  for (size_t li = 0; li < m.vision.layers.size(); ++li) {
    h = m.block(m.vision, m.vision.layers[li], h, false, &tape->caches[li]);
  }
  tape->final_tokens = h;
  const Mat pooled = m.layer_norm(h.topRows(1), m.post_norm, &tape->post_stats);
  const Mat f = m.visual_projection.forward(pooled);
  tape->feature.resize(f.cols());
  for (Eigen::Index i = 0; i < f.cols(); ++i) tape->feature[i] = static_cast<double>(f(0, i));
  return tape;
}

template class BasicClipBundle<float>;
template class BasicClipBundle<double>;

}  // namespace splatmark
