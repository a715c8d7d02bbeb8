#include "splatmark/asset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "splatmark/common.hpp"

namespace splatmark {

static_assert(std::endian::native == std::endian::little, "PLY I/O assumes a little-endian host");

namespace {

constexpr double kUnitTolerance = 1e-6;

std::vector<std::string> required_properties() {
  std::vector<std::string> names = {"x", "y", "z"};
  for (int i = 0; i < 3; ++i) names.push_back("f_dc_" + std::to_string(i));
  for (int i = 0; i < 45; ++i) names.push_back("f_rest_" + std::to_string(i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  return names;
}

// File column order written by save_ply.
std::vector<std::string> written_properties() {
  std::vector<std::string> names = {"x", "y", "z", "nx", "ny", "nz"};
  for (int i = 0; i < 3; ++i) names.push_back("f_dc_" + std::to_string(i));
  for (int i = 0; i < 45; ++i) names.push_back("f_rest_" + std::to_string(i));
  names.push_back("opacity");
  for (int i = 0; i < 3; ++i) names.push_back("scale_" + std::to_string(i));
  for (int i = 0; i < 4; ++i) names.push_back("rot_" + std::to_string(i));
  return names;
}

int type_size(const std::string& t) {
  static const std::map<std::string, int> sizes = {
      {"char", 1},   {"uchar", 1},  {"int8", 1},   {"uint8", 1},  {"short", 2},  {"ushort", 2},
      {"int16", 2},  {"uint16", 2}, {"int", 4},    {"uint", 4},   {"int32", 4},  {"uint32", 4},
      {"float", 4},  {"float32", 4}, {"double", 8}, {"float64", 8}};
  auto it = sizes.find(t);
  return it == sizes.end() ? 0 : it->second;
}

double read_scalar(const char* p, const std::string& t) {
  auto get = [p](auto v) {
    std::memcpy(&v, p, sizeof(v));
    return static_cast<double>(v);
  };
  if (t == "float" || t == "float32") return get(float{});
  if (t == "double" || t == "float64") return get(double{});
  if (t == "char" || t == "int8") return get(int8_t{});
  if (t == "uchar" || t == "uint8") return get(uint8_t{});
  if (t == "short" || t == "int16") return get(int16_t{});
  if (t == "ushort" || t == "uint16") return get(uint16_t{});
  if (t == "int" || t == "int32") return get(int32_t{});
  return get(uint32_t{});
}

struct Property {
  std::string name;
  std::string type;
  size_t offset;
};

struct Element {
  std::string name;
  size_t count = 0;
  size_t stride = 0;
  std::vector<Property> props;
};

}  // namespace

double GaussianAsset::opacity(size_t i) const { return 1.0 / (1.0 + std::exp(-opacity_logits[i])); }

std::array<double, 3> GaussianAsset::scale(size_t i) const {
  return {std::exp(log_scales[i][0]), std::exp(log_scales[i][1]), std::exp(log_scales[i][2])};
}

void GaussianAsset::validate() const {
  const size_t n = positions.size();
  if (n < 1) throw Error("invalid asset: N ≥ 1 violated (N = 0)");
  if (log_scales.size() != n || rotations.size() != n || opacity_logits.size() != n ||
      sh.size() != n * kShDim) {
    throw Error("invalid asset: field lengths disagree with N = " + std::to_string(n));
  }
  for (size_t i = 0; i < n; ++i) {
    double qn = 0.0;
    for (int k = 0; k < 3; ++k) {
      if (!std::isfinite(positions[i][k])) throw Error("invalid asset: non-finite position at " + std::to_string(i));
      const double s = std::exp(log_scales[i][k]);
      if (!std::isfinite(log_scales[i][k]) || !(s > 0.0) || !std::isfinite(s)) {
        throw Error("invalid asset: scale not strictly positive at " + std::to_string(i));
      }
    }
    for (int k = 0; k < 4; ++k) qn += rotations[i][k] * rotations[i][k];
    if (!(std::abs(std::sqrt(qn) - 1.0) <= kUnitTolerance)) {
      throw Error("invalid asset: quaternion not unit length at " + std::to_string(i));
    }
    if (!std::isfinite(opacity_logits[i])) throw Error("invalid asset: non-finite opacity at " + std::to_string(i));
  }
  for (size_t k = 0; k < sh.size(); ++k) {
    if (!std::isfinite(sh[k])) {
      throw Error("invalid asset: non-finite SH coefficient at Gaussian " + std::to_string(k / kShDim));
    }
  }
}

GaussianAsset GaussianAsset::subset(const std::vector<size_t>& keep) const {
  GaussianAsset out;
  out.positions.reserve(keep.size());
  out.log_scales.reserve(keep.size());
  out.rotations.reserve(keep.size());
  out.opacity_logits.reserve(keep.size());
  out.sh.reserve(keep.size() * kShDim);
  for (size_t i : keep) {
    if (i >= size()) throw Error("subset: index out of range");
    out.positions.push_back(positions[i]);
    out.log_scales.push_back(log_scales[i]);
    out.rotations.push_back(rotations[i]);
    out.opacity_logits.push_back(opacity_logits[i]);
    out.sh.insert(out.sh.end(), sh.begin() + i * kShDim, sh.begin() + (i + 1) * kShDim);
  }
  return out;
}

void SHOffsetField::validate() const {
  if (values.size() % kShDim != 0) throw Error("invalid offsets: length is not a multiple of 48");
  for (double v : values) {
    if (!std::isfinite(v)) throw Error("invalid offsets: non-finite value");
  }
}

bool geometry_identical(const GaussianAsset& a, const GaussianAsset& b) {
  auto bits_equal = [](const auto& x, const auto& y) {
    return x.size() == y.size() &&
           (x.empty() || std::memcmp(x.data(), y.data(), x.size() * sizeof(x[0])) == 0);
  };
  return bits_equal(a.positions, b.positions) && bits_equal(a.log_scales, b.log_scales) &&
         bits_equal(a.rotations, b.rotations) && bits_equal(a.opacity_logits, b.opacity_logits);
}

GaussianAsset load_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open PLY file: " + path);
  std::string line;
  if (!std::getline(in, line) || line != "ply") throw ParseError("malformed header: missing 'ply' magic");

  std::vector<Element> elements;
  bool format_ok = false;
  bool ended = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt != "binary_little_endian") throw ParseError("malformed header: unsupported format '" + fmt + "'");
      format_ok = true;
    } else if (key == "comment" || key == "obj_info" || key.empty()) {
      continue;
    } else if (key == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (e.name.empty() || count < 0 || ls.fail()) throw ParseError("malformed header: bad element line '" + line + "'");
      e.count = static_cast<size_t>(count);
      elements.push_back(e);
    } else if (key == "property") {
      if (elements.empty()) throw ParseError("malformed header: property before any element");
      std::string type, name;
      ls >> type >> name;
      if (type == "list") throw ParseError("malformed header: list property '" + name + "' is not supported");
      const int sz = type_size(type);
      if (sz == 0 || name.empty()) throw ParseError("malformed header: bad property line '" + line + "'");
      Element& e = elements.back();
      e.props.push_back({name, type, e.stride});
      e.stride += static_cast<size_t>(sz);
    } else if (key == "end_header") {
      ended = true;
      break;
    } else {
      throw ParseError("malformed header: unknown keyword '" + key + "'");
    }
  }
  if (!ended) throw ParseError("malformed header: missing end_header");
  if (!format_ok) throw ParseError("malformed header: missing format line");

  size_t skip = 0;
  const Element* vertex = nullptr;
  for (const Element& e : elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
    skip += e.count * e.stride;
  }
  if (!vertex) throw ParseError("malformed header: no 'vertex' element");

  std::map<std::string, const Property*> by_name;
  for (const Property& p : vertex->props) by_name[p.name] = &p;
  std::vector<const Property*> cols;  // 59 columns, required_properties() order
  for (const std::string& name : required_properties()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ParseError("missing required property '" + name + "'");
    cols.push_back(it->second);
  }

  const size_t n = vertex->count;
  if (n < 1) throw ParseError("invalid asset: N ≥ 1 violated (header declares 0 vertices)");
  const std::streampos data_start = in.tellg();
  in.seekg(0, std::ios::end);
  const size_t available = static_cast<size_t>(in.tellg() - data_start);
  const size_t needed = skip + n * vertex->stride;
  if (available < needed) {
    throw ParseError("truncated payload: header declares " + std::to_string(n) + " vertices (" +
                     std::to_string(needed) + " bytes) but only " + std::to_string(available) +
                     " bytes follow the header");
  }
  in.seekg(data_start + static_cast<std::streamoff>(skip));
  std::vector<char> buf(n * vertex->stride);
  in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!in) throw ParseError("truncated payload: read failed");

  GaussianAsset a;
  a.positions.resize(n);
  a.log_scales.resize(n);
  a.rotations.resize(n);
  a.opacity_logits.resize(n);
  a.sh.resize(n * kShDim);
  for (size_t i = 0; i < n; ++i) {
    const char* rec = buf.data() + i * vertex->stride;
    std::array<double, 59> v{};
    for (size_t c = 0; c < cols.size(); ++c) {
      v[c] = read_scalar(rec + cols[c]->offset, cols[c]->type);
      if (!std::isfinite(v[c])) {
        throw ParseError("non-finite value in property '" + cols[c]->name + "' at vertex " + std::to_string(i));
      }
    }
    a.positions[i] = {v[0], v[1], v[2]};
    for (int k = 0; k < kShDim; ++k) a.sh[i * kShDim + k] = v[3 + k];
    a.opacity_logits[i] = v[51];
    a.log_scales[i] = {v[52], v[53], v[54]};
    std::array<double, 4> q = {v[55], v[56], v[57], v[58]};
    const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    if (!(qn > 0.0)) throw ParseError("degenerate value in property 'rot_0..3' at vertex " + std::to_string(i));
    if (std::abs(qn - 1.0) > kUnitTolerance) {
      for (double& x : q) x /= qn;
    }
    a.rotations[i] = q;
  }
  return a;
}

void save_ply(const GaussianAsset& asset, const std::string& path) {
  asset.validate();
  const size_t n = asset.size();
  const auto names = written_properties();
  std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(n) + "\n";
  for (const auto& name : names) header += "property float " + name + "\n";
  header += "end_header\n";

  std::vector<float> rec(names.size());
  std::vector<char> body(n * names.size() * sizeof(float));
  for (size_t i = 0; i < n; ++i) {
    size_t c = 0;
    for (int k = 0; k < 3; ++k) rec[c++] = static_cast<float>(asset.positions[i][k]);
    for (int k = 0; k < 3; ++k) rec[c++] = 0.0f;
    for (int k = 0; k < kShDim; ++k) rec[c++] = static_cast<float>(asset.sh[i * kShDim + k]);
    rec[c++] = static_cast<float>(asset.opacity_logits[i]);
    for (int k = 0; k < 3; ++k) rec[c++] = static_cast<float>(asset.log_scales[i][k]);
    for (int k = 0; k < 4; ++k) rec[c++] = static_cast<float>(asset.rotations[i][k]);
    for (float f : rec) {
      if (!std::isfinite(f)) throw Error("save_ply: value overflows float32 at Gaussian " + std::to_string(i));
    }
    std::memcpy(body.data() + i * rec.size() * sizeof(float), rec.data(), rec.size() * sizeof(float));
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("save_ply: cannot open for writing: " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!out) throw Error("save_ply: write failed: " + path);
}

GaussianAsset apply_offsets(const GaussianAsset& asset, const SHOffsetField& off) {
  if (off.values.size() != asset.sh.size()) {
    throw Error("apply_offsets: offset field has " + std::to_string(off.size()) + " Gaussians, asset has " +
                std::to_string(asset.size()));
  }
  GaussianAsset out = asset;
  for (size_t k = 0; k < out.sh.size(); ++k) out.sh[k] += off.values[k];
  return out;
}

GaussianAsset prune(const GaussianAsset& asset, PruneMode mode, double fraction, uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw Error("prune: fraction must lie in [0, 1)");
  const size_t n = asset.size();
  const size_t keep = static_cast<size_t>(std::ceil(static_cast<long double>(n) * (1.0L - fraction)));
  const size_t remove = n - std::min(keep, n);
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (mode == PruneMode::BottomOpacity) {
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return asset.opacity(a) < asset.opacity(b); });
  } else {
    Rng rng(seed);
    rng.shuffle(order);
  }
  std::vector<char> removed(n, 0);
  for (size_t k = 0; k < remove; ++k) removed[order[k]] = 1;
  std::vector<size_t> kept;
  kept.reserve(n - remove);
  for (size_t i = 0; i < n; ++i) {
    if (!removed[i]) kept.push_back(i);
  }
  return asset.subset(kept);
}

}  // namespace splatmark
