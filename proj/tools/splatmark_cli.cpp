// Command-line front end. Every command writes its resolved configuration,
// a JSON-lines log and its outputs into a fresh run directory.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "splatmark/asset.hpp"
#include "splatmark/clip.hpp"
#include "splatmark/codec.hpp"
#include "splatmark/common.hpp"
#include "splatmark/distort.hpp"
#include "splatmark/encoders.hpp"
#include "splatmark/metrics.hpp"
#include "splatmark/renderer.hpp"
#include "splatmark/scene.hpp"
#include "splatmark/watermark.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatmark;

namespace {

constexpr int kConfigVersion = 1;

struct Common {
  uint64_t seed = 0;
  std::string runs_dir = "runs";
  std::string run_dir;  // explicit directory, overrides runs_dir
  std::string clip_weights;
};

// Run directory with config.json, log.jsonl and outputs.
class Run {
 public:
  Run(const Common& common, const std::string& command, json config) {
    if (!common.run_dir.empty()) {
      dir_ = common.run_dir;
    } else {
      const auto now = std::chrono::system_clock::now();
      const std::time_t t = std::chrono::system_clock::to_time_t(now);
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
      std::ostringstream name;
      name << std::put_time(std::gmtime(&t), "%Y%m%d-%H%M%S") << "-" << std::setw(3) << std::setfill('0') << ms
           << "-" << command;
      dir_ = fs::path(common.runs_dir) / name.str();
      for (int k = 1; fs::exists(dir_); ++k) dir_ = fs::path(common.runs_dir) / (name.str() + "-" + std::to_string(k));
    }
    fs::create_directories(dir_);
    config["version"] = kConfigVersion;
    config["command"] = command;
    config["seed"] = common.seed;
    std::ofstream(dir_ / "config.json") << config.dump(2) << "\n";
    log_.open(dir_ / "log.jsonl");
  }

  const fs::path& dir() const { return dir_; }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  void log(const std::string& line) {
    log_ << line << "\n";
    log_.flush();
  }
  void log(const json& j) { log(j.dump()); }

 private:
  fs::path dir_;
  std::ofstream log_;
};

std::unique_ptr<EncoderBundle> bundle_for(const std::string& id, const Common& common) {
  return make_bundle(id, common.clip_weights);
}

std::vector<CameraView> pick_views(const std::string& views_path, bool held_out) {
  std::vector<CameraView> views, held;
  load_views(views_path, views, held);
  auto& out = held_out ? held : views;
  if (out.empty()) throw Error(std::string("views file has no ") + (held_out ? "held-out" : "training") + " views");
  return out;
}

json row_json(const MetricRow& r) {
  json j = {{"label", r.label}, {"bit_acc", r.bit_accuracy}, {"psnr", format_psnr(r.psnr)}, {"ssim", r.ssim}};
  if (r.lpips) j["lpips"] = *r.lpips;
  return j;
}

void write_reports(Run& run, const std::vector<MetricRow>& rows) {
  write_report_csv(run.path("report.csv"), rows);
  write_report_json(run.path("report.json"), rows);
  for (const auto& r : rows) {
    std::printf("%-12s bit_acc %.4f  psnr %s  ssim %.4f\n", r.label.c_str(), r.bit_accuracy,
                format_psnr(r.psnr).c_str(), r.ssim);
  }
}

// Embedding options shared by embed, evaluate --suite ablation and sweep.
struct EmbedOptions {
  EmbedConfig config;
  bool no_distortions = false;

  void add(CLI::App* app) {
    app->add_option("--epochs", config.epochs, "optimization epochs")->capture_default_str();
    app->add_option("--batch-views", config.batch_views, "views per optimizer step")->capture_default_str();
    app->add_option("--steps-per-epoch", config.steps_per_epoch, "0 = ceil(views / batch)")->capture_default_str();
    app->add_option("--lr", config.learning_rate, "Adam learning rate")->capture_default_str();
    app->add_option("--lambda-msg", config.lambda_msg)->capture_default_str();
    app->add_option("--lambda-recon", config.lambda_recon)->capture_default_str();
    app->add_option("--lambda-off", config.lambda_off)->capture_default_str();
    app->add_option("--lambda-ssim", config.lambda_ssim)->capture_default_str();
    app->add_option("--max-sh-degree", config.max_sh_degree, "highest SH band that is optimized")
        ->capture_default_str();
    app->add_flag("--no-distortions", no_distortions, "disable the training distortion layer");
  }

  EmbedConfig resolve(uint64_t seed) const {
    EmbedConfig c = config;
    c.distortions = !no_distortions;
    c.seed = derive_seed(seed, "embed");
    c.validate();
    return c;
  }
};

json embed_config_json(const EmbedConfig& c) {
  json kinds = json::array();
  for (auto k : c.sampler.kinds) kinds.push_back(to_string(k));
  return {{"lambda_recon", c.lambda_recon}, {"lambda_msg", c.lambda_msg},     {"lambda_off", c.lambda_off},
          {"lambda_ssim", c.lambda_ssim},   {"epochs", c.epochs},             {"batch_views", c.batch_views},
          {"steps_per_epoch", c.steps_per_epoch}, {"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay}, {"max_sh_degree", c.max_sh_degree}, {"distortions", c.distortions},
          {"distortion_kinds", kinds},      {"embed_seed", c.seed}};
}

// Inputs naming an asset, its views, a decoder and a message.
struct WatermarkInputs {
  std::string asset, views, decoder, message;

  void add(CLI::App* app, bool need_message = true) {
    app->add_option("--asset", asset, "original asset PLY")->required()->check(CLI::ExistingFile);
    app->add_option("--views", views, "views JSON")->required()->check(CLI::ExistingFile);
    app->add_option("--decoder", decoder, "decoder checkpoint")->required()->check(CLI::ExistingFile);
    auto* m = app->add_option("--message", message, "message as hex, big-endian");
    if (need_message) m->required();
  }

  json to_json() const { return {{"asset", asset}, {"views", views}, {"decoder", decoder}, {"message", message}}; }
};

EmbedResult run_embed(Run& run, const GaussianAsset& asset, const MessageBits& msg,
                      const std::vector<CameraView>& views, const EncoderBundle& bundle,
                      const DecoderModel& decoder, const EmbedConfig& cfg, const std::string& tag) {
  return embed(asset, msg, views, bundle, decoder, cfg, NullPerceptual(), [&](const EmbedEpochLog& l) {
    if (tag.empty()) {
      run.log(to_json_line(l));
    } else {
      json j = json::parse(to_json_line(l));
      j["run"] = tag;
      run.log(j);
    }
  });
}

int cmd_make_scene(const Common& common, size_t n_gaussians, size_t n_views, size_t n_held_out, int resolution) {
  Run run(common, "make-scene",
          {{"gaussians", n_gaussians}, {"views", n_views}, {"held_out", n_held_out}, {"resolution", resolution}});
  ToyScene scene = make_toy_scene(derive_seed(common.seed, "scene"), n_gaussians, n_views, resolution, n_held_out);
  save_ply(scene.asset, run.path("scene.ply"));
  save_views(run.path("views.json"), scene.views, scene.held_out_views);
  for (size_t v = 0; v < scene.ground_truth.size(); ++v) {
    char name[32];
    std::snprintf(name, sizeof name, "view_%03zu.png", v);
    save_png(scene.ground_truth[v], run.path(name));
  }
  run.log(json{{"event", "scene"}, {"gaussians", scene.asset.size()}, {"views", scene.views.size()}});
  std::printf("%s\n", run.dir().c_str());
  return 0;
}

int cmd_train_decoder(const Common& common, int bits, const std::string& encoder, int epochs, const std::string& out,
                      bool normalize) {
  std::unique_ptr<EncoderBundle> bundle;
  if (encoder == "toy") {
    bundle = std::make_unique<ToyBundle>();
  } else {
    if (common.clip_weights.empty()) throw Error("--encoder clip needs --clip-weights");
    bundle = std::make_unique<ClipBundle>(common.clip_weights);
  }
  DecoderTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.seed = derive_seed(common.seed, "decoder");
  cfg.normalize_features = normalize;
  Run run(common, "train-decoder",
          {{"bits", bits}, {"encoder", encoder}, {"encoder_id", bundle->identifier()}, {"epochs", epochs},
           {"batch_size", cfg.batch_size}, {"learning_rate", cfg.learning_rate}, {"weight_decay", cfg.weight_decay},
           {"max_messages", cfg.max_messages}, {"decoder_seed", cfg.seed}, {"normalize_features", normalize},
           {"out", out}});
  const EncoderBundle& b = *bundle;
  auto result = train_decoder([&](const TokenSequence& t) { return b.encode_text(t); }, b.identifier(), bits, cfg,
                              [&](const DecoderEpochStats& s) {
                                run.log(json{{"epoch", s.epoch},
                                             {"loss", s.loss},
                                             {"train_acc", s.train_accuracy},
                                             {"heldout_acc", s.heldout_accuracy}});
                              });
  const std::string extra = json{{"train_accuracy", result.train_accuracy},
                                 {"heldout_accuracy", result.heldout_accuracy}}
                                .dump();
  result.model.save(run.path("decoder.bin"), extra);
  if (!out.empty()) result.model.save(out, extra);
  std::printf("train_acc %.4f heldout_acc %.4f\n", result.train_accuracy, result.heldout_accuracy);
  return 0;
}

int cmd_embed(const Common& common, const WatermarkInputs& in, const EmbedOptions& opts, const std::string& out) {
  const EmbedConfig cfg = opts.resolve(common.seed);
  json config = in.to_json();
  config["embed"] = embed_config_json(cfg);
  config["out"] = out;
  Run run(common, "embed", config);
  const GaussianAsset asset = load_ply(in.asset);
  const DecoderModel decoder = DecoderModel::load(in.decoder);
  const MessageBits msg = MessageBits::from_hex(in.message, decoder.bits());
  auto bundle = bundle_for(decoder.encoder_id(), common);
  const auto views = pick_views(in.views, false);
  auto result = run_embed(run, asset, msg, views, *bundle, decoder, cfg, "");
  const GaussianAsset wm = apply_offsets(asset, result.offsets);
  save_ply(wm, run.path("watermarked.ply"));
  if (!out.empty()) save_ply(wm, out);
  const auto stats = offset_stats(result.offsets);
  run.log(json{{"event", "offsets"}, {"rms", stats.rms}, {"max_abs", stats.max_abs}});
  const auto& last = result.log.back();
  std::printf("epochs %zu bit_acc %.4f psnr %s\n", result.log.size(), last.bit_accuracy,
              format_psnr(last.psnr).c_str());
  return 0;
}

int cmd_extract(const Common& common, const std::string& asset_path, const std::string& image_path,
                const std::string& views_path, int view, bool held_out, const std::string& decoder_path) {
  Run run(common, "extract",
          {{"asset", asset_path}, {"image", image_path}, {"views", views_path}, {"view", view},
           {"held_out", held_out}, {"decoder", decoder_path}});
  const DecoderModel decoder = DecoderModel::load(decoder_path);
  auto bundle = bundle_for(decoder.encoder_id(), common);
  MessageBits msg;
  if (!image_path.empty()) {
    msg = extract(load_png(image_path), *bundle, decoder);
  } else {
    if (asset_path.empty()) throw Error("extract needs --asset or --image");
    std::optional<CameraView> cam;
    if (!views_path.empty()) {
      const auto views = pick_views(views_path, held_out);
      if (view < 0 || static_cast<size_t>(view) >= views.size()) throw Error("--view out of range");
      cam = views[static_cast<size_t>(view)];
    }
    msg = extract(load_ply(asset_path), cam, *bundle, decoder);
  }
  run.log(json{{"message", msg.to_hex()}});
  std::printf("%s\n", msg.to_hex().c_str());
  return 0;
}

// One row per distortion column of the robustness table.
std::vector<DistortionKind> robustness_kinds() {
  return {DistortionKind::None,   DistortionKind::Noise, DistortionKind::Rotate,     DistortionKind::Scale,
          DistortionKind::Blur,   DistortionKind::Crop,  DistortionKind::Brightness, DistortionKind::Jpeg,
          DistortionKind::Combined};
}

int cmd_evaluate(const Common& common, const std::string& suite, const WatermarkInputs& in,
                 const std::string& watermarked, const EmbedOptions& opts, bool held_out) {
  json config = in.to_json();
  config["suite"] = suite;
  config["watermarked"] = watermarked;
  config["held_out"] = held_out;
  const EmbedConfig base = opts.resolve(common.seed);
  if (suite == "ablation") config["embed"] = embed_config_json(base);
  Run run(common, "evaluate", config);

  const GaussianAsset asset = load_ply(in.asset);
  const DecoderModel decoder = DecoderModel::load(in.decoder);
  const MessageBits msg = MessageBits::from_hex(in.message, decoder.bits());
  auto bundle = bundle_for(decoder.encoder_id(), common);
  std::vector<CameraView> train_views, held;
  load_views(in.views, train_views, held);
  const auto& eval_views = held_out && !held.empty() ? held : train_views;
  std::vector<MetricRow> rows;

  if (suite == "robustness" || suite == "invisibility") {
    if (watermarked.empty()) throw Error("--suite " + suite + " needs --watermarked");
    const GaussianAsset wm = load_ply(watermarked);
    if (suite == "robustness") {
      for (auto kind : robustness_kinds()) {
        DistortionSpec spec;
        spec.kind = kind;
        spec.seed = derive_seed(common.seed, "evaluate-" + to_string(kind));
        auto ev = evaluate_views(asset, wm, eval_views, *bundle, decoder, msg, spec);
        ev.summary.label = to_string(kind);
        run.log(row_json(ev.summary));
        rows.push_back(ev.summary);
      }
    } else {
      auto tr = evaluate_views(asset, wm, train_views, *bundle, decoder, msg);
      tr.summary.label = "train_views";
      rows.push_back(tr.summary);
      if (!held.empty()) {
        auto ho = evaluate_views(asset, wm, held, *bundle, decoder, msg);
        ho.summary.label = "held_out_views";
        rows.push_back(ho.summary);
      }
      for (const auto& r : rows) run.log(row_json(r));
    }
  } else if (suite == "ablation") {
    struct Variant {
      const char* label;
      bool recon, off;
    };
    for (const Variant& v : {Variant{"msg", false, false}, Variant{"msg+recon", true, false},
                             Variant{"msg+recon+off", true, true}}) {
      EmbedConfig cfg = base;
      if (!v.recon) cfg.lambda_recon = 0.0;
      if (!v.off) cfg.lambda_off = 0.0;
      auto result = run_embed(run, asset, msg, train_views, *bundle, decoder, cfg, v.label);
      const GaussianAsset wm = apply_offsets(asset, result.offsets);
      auto ev = evaluate_views(asset, wm, eval_views, *bundle, decoder, msg);
      ev.summary.label = v.label;
      run.log(row_json(ev.summary));
      rows.push_back(ev.summary);
    }
  } else {
    throw Error("unknown suite: " + suite);
  }
  write_reports(run, rows);
  return 0;
}

int cmd_attack(const Common& common, const std::string& mode, double fraction, const WatermarkInputs& in,
               const std::string& watermarked, bool held_out) {
  PruneMode pm;
  if (mode == "prune-bottom") {
    pm = PruneMode::BottomOpacity;
  } else if (mode == "prune-random") {
    pm = PruneMode::Random;
  } else {
    throw Error("unknown attack mode: " + mode);
  }
  json config = in.to_json();
  config.update({{"mode", mode}, {"fraction", fraction}, {"watermarked", watermarked}, {"held_out", held_out}});
  Run run(common, "attack", config);
  const GaussianAsset asset = load_ply(in.asset);
  const GaussianAsset wm = load_ply(watermarked);
  if (!geometry_identical(asset, wm)) throw Error("watermarked asset does not match the original geometry");
  const DecoderModel decoder = DecoderModel::load(in.decoder);
  const MessageBits msg = MessageBits::from_hex(in.message, decoder.bits());
  auto bundle = bundle_for(decoder.encoder_id(), common);
  const auto views = pick_views(in.views, held_out);

  // The same Gaussians are removed from both assets, so PSNR compares like with like.
  const uint64_t prune_seed = derive_seed(common.seed, "prune");
  const GaussianAsset pruned_orig = prune(asset, pm, fraction, prune_seed);
  const GaussianAsset pruned_wm = prune(wm, pm, fraction, prune_seed);
  save_ply(pruned_wm, run.path("pruned.ply"));

  auto before = evaluate_views(asset, wm, views, *bundle, decoder, msg);
  before.summary.label = "unattacked";
  // Fidelity of the attacked watermarked asset against the intact original.
  auto after = evaluate_views(asset, pruned_wm, views, *bundle, decoder, msg);
  after.summary.label = mode;
  auto rel = evaluate_views(pruned_orig, pruned_wm, views, *bundle, decoder, msg);
  rel.summary.label = mode + "-vs-pruned-original";
  std::vector<MetricRow> rows = {before.summary, after.summary, rel.summary};
  for (const auto& r : rows) run.log(row_json(r));
  write_reports(run, rows);
  return 0;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw Error("bad grid value: '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw Error("empty grid");
  return out;
}

int cmd_sweep(const Common& common, const std::string& param, const std::string& grid_text,
              const WatermarkInputs& in, const EmbedOptions& opts, bool held_out) {
  const auto grid = parse_grid(grid_text);
  const EmbedConfig base = opts.resolve(common.seed);
  auto setter = [&](EmbedConfig& c, double v) {
    if (param == "lambda_msg") {
      c.lambda_msg = v;
    } else if (param == "lambda_recon") {
      c.lambda_recon = v;
    } else if (param == "lambda_off") {
      c.lambda_off = v;
    } else if (param == "lambda_ssim") {
      c.lambda_ssim = v;
    } else {
      throw Error("unknown sweep parameter: " + param);
    }
    c.validate();
  };
  for (double v : grid) {
    EmbedConfig probe = base;
    setter(probe, v);
  }
  json config = in.to_json();
  config.update({{"param", param}, {"grid", grid}, {"held_out", held_out}, {"embed", embed_config_json(base)}});
  Run run(common, "sweep", config);
  const GaussianAsset asset = load_ply(in.asset);
  const DecoderModel decoder = DecoderModel::load(in.decoder);
  const MessageBits msg = MessageBits::from_hex(in.message, decoder.bits());
  auto bundle = bundle_for(decoder.encoder_id(), common);
  std::vector<CameraView> train_views, held;
  load_views(in.views, train_views, held);
  const auto& eval_views = held_out && !held.empty() ? held : train_views;
  std::vector<MetricRow> rows;
  for (double v : grid) {
    EmbedConfig cfg = base;
    setter(cfg, v);
    std::ostringstream label;
    label << param << "=" << v;
    auto result = run_embed(run, asset, msg, train_views, *bundle, decoder, cfg, label.str());
    auto ev = evaluate_views(asset, apply_offsets(asset, result.offsets), eval_views, *bundle, decoder, msg);
    ev.summary.label = label.str();
    json row = row_json(ev.summary);
    row["value"] = v;
    run.log(row);
    rows.push_back(ev.summary);
  }
  write_reports(run, rows);
  return 0;
}

int cmd_export_stego(const Common& common, const std::string& asset_path, const std::string& wm_path,
                     const std::string& views_path, bool include_held_out) {
  Run run(common, "export-stego-set",
          {{"asset", asset_path}, {"watermarked", wm_path}, {"views", views_path},
           {"include_held_out", include_held_out}});
  const GaussianAsset asset = load_ply(asset_path);
  const GaussianAsset wm = load_ply(wm_path);
  if (!geometry_identical(asset, wm)) throw Error("watermarked asset does not match the original geometry");
  std::vector<CameraView> views, held;
  load_views(views_path, views, held);
  if (include_held_out) views.insert(views.end(), held.begin(), held.end());
  if (views.size() < 2) throw Error("need at least two views for a balanced set");

  // Half the views (rounded down) are exported watermarked, chosen by the seed.
  std::vector<size_t> order(views.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(common.seed, "stego-set"));
  rng.shuffle(order);
  const size_t n_marked = views.size() / 2;
  std::vector<bool> marked(views.size(), false);
  for (size_t i = 0; i < n_marked; ++i) marked[order[i]] = true;

  const fs::path images = run.dir() / "images";
  fs::create_directories(images);
  std::ofstream labels(run.dir() / "labels.csv");
  labels << "file,view,watermarked\n";
  size_t index = 0;
  for (size_t k = 0; k < views.size(); ++k) {
    const size_t v = order[k];
    // Exactly balanced: drop the last unmarked view when the count is odd.
    if (views.size() % 2 == 1 && !marked[v] && k == views.size() - 1) break;
    const GaussianAsset& a = marked[v] ? wm : asset;
    char name[32];
    std::snprintf(name, sizeof name, "img_%03zu.png", index++);
    save_png(render(a, build_weight_cache(a, views[v])), (images / name).string());
    labels << name << "," << v << "," << (marked[v] ? 1 : 0) << "\n";
  }
  run.log(json{{"images", index}, {"watermarked", n_marked}});
  std::printf("%s\n", run.dir().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Watermarking toolkit for 3D Gaussian splatting assets"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--seed", common.seed, "run-level seed")->capture_default_str();
  app.add_option("--runs-dir", common.runs_dir, "parent of timestamped run directories")->capture_default_str();
  app.add_option("--run-dir", common.run_dir, "write this run into exactly this directory");
  app.add_option("--clip-weights", common.clip_weights, "CLIP weights (.safetensors) for clip bundles");

  auto* make_scene = app.add_subcommand("make-scene", "generate the procedural toy scene");
  size_t n_gaussians = 2000, n_views = 8, n_held_out = 4;
  int resolution = 128;
  make_scene->add_option("--gaussians", n_gaussians)->capture_default_str();
  make_scene->add_option("--views", n_views)->capture_default_str();
  make_scene->add_option("--held-out", n_held_out)->capture_default_str();
  make_scene->add_option("--resolution", resolution)->capture_default_str();

  auto* train = app.add_subcommand("train-decoder", "train the message decoder on text features");
  int bits = 16, dec_epochs = 100;
  std::string encoder = "toy", dec_out;
  bool normalize = false;
  train->add_option("--bits", bits, "message length L")->required();
  train->add_option("--encoder", encoder)->check(CLI::IsMember({"toy", "clip"}))->capture_default_str();
  train->add_option("--epochs", dec_epochs)->capture_default_str();
  train->add_option("--out", dec_out, "checkpoint path (a copy is kept in the run directory)");
  train->add_flag("--normalize-features", normalize, "L2-normalize features before the decoder");

  auto* embed_cmd = app.add_subcommand("embed", "embed a message into an asset's SH coefficients");
  WatermarkInputs embed_in;
  EmbedOptions embed_opts;
  std::string embed_out;
  embed_in.add(embed_cmd);
  embed_opts.add(embed_cmd);
  embed_cmd->add_option("--out", embed_out, "watermarked PLY (a copy is kept in the run directory)");

  auto* extract_cmd = app.add_subcommand("extract", "blindly extract the message from a render");
  std::string ex_asset, ex_image, ex_views, ex_decoder;
  int ex_view = 0;
  bool ex_held = false;
  extract_cmd->add_option("--asset", ex_asset)->check(CLI::ExistingFile);
  extract_cmd->add_option("--image", ex_image, "PNG to decode instead of rendering")->check(CLI::ExistingFile);
  extract_cmd->add_option("--views", ex_views)->check(CLI::ExistingFile);
  extract_cmd->add_option("--view", ex_view, "view index")->capture_default_str();
  extract_cmd->add_flag("--held-out", ex_held, "index into the held-out views");
  extract_cmd->add_option("--decoder", ex_decoder)->required()->check(CLI::ExistingFile);

  auto* eval_cmd = app.add_subcommand("evaluate", "robustness, invisibility or ablation report");
  std::string suite, eval_wm;
  WatermarkInputs eval_in;
  EmbedOptions eval_opts;
  bool eval_train_views = false;
  eval_cmd->add_option("--suite", suite)->required()->check(CLI::IsMember({"robustness", "invisibility", "ablation"}));
  eval_in.add(eval_cmd);
  eval_opts.add(eval_cmd);
  eval_cmd->add_option("--watermarked", eval_wm)->check(CLI::ExistingFile);
  eval_cmd->add_flag("--train-views", eval_train_views, "evaluate on training views instead of held-out ones");

  auto* attack_cmd = app.add_subcommand("attack", "prune Gaussians and re-evaluate");
  std::string mode, attack_wm;
  double fraction = 0.05;
  WatermarkInputs attack_in;
  bool attack_train_views = false;
  attack_cmd->add_option("--mode", mode)->required()->check(CLI::IsMember({"prune-bottom", "prune-random"}));
  attack_cmd->add_option("--fraction", fraction)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  attack_in.add(attack_cmd);
  attack_cmd->add_option("--watermarked", attack_wm)->required()->check(CLI::ExistingFile);
  attack_cmd->add_flag("--train-views", attack_train_views);

  auto* sweep_cmd = app.add_subcommand("sweep", "embed over a grid of one loss weight");
  std::string param = "lambda_msg", grid;
  WatermarkInputs sweep_in;
  EmbedOptions sweep_opts;
  bool sweep_train_views = false;
  sweep_cmd->add_option("--param", param)
      ->check(CLI::IsMember({"lambda_msg", "lambda_recon", "lambda_off", "lambda_ssim"}))
      ->capture_default_str();
  sweep_cmd->add_option("--grid", grid, "comma-separated values")->required();
  sweep_in.add(sweep_cmd);
  sweep_opts.add(sweep_cmd);
  sweep_cmd->add_flag("--train-views", sweep_train_views);

  auto* stego_cmd = app.add_subcommand("export-stego-set", "balanced PNG set of watermarked and original renders");
  std::string st_asset, st_wm, st_views;
  bool st_held = false;
  stego_cmd->add_option("--asset", st_asset)->required()->check(CLI::ExistingFile);
  stego_cmd->add_option("--watermarked", st_wm)->required()->check(CLI::ExistingFile);
  stego_cmd->add_option("--views", st_views)->required()->check(CLI::ExistingFile);
  stego_cmd->add_flag("--include-held-out", st_held);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_scene) return cmd_make_scene(common, n_gaussians, n_views, n_held_out, resolution);
    if (*train) return cmd_train_decoder(common, bits, encoder, dec_epochs, dec_out, normalize);
    if (*embed_cmd) return cmd_embed(common, embed_in, embed_opts, embed_out);
    if (*extract_cmd) return cmd_extract(common, ex_asset, ex_image, ex_views, ex_view, ex_held, ex_decoder);
    if (*eval_cmd) return cmd_evaluate(common, suite, eval_in, eval_wm, eval_opts, !eval_train_views);
    if (*attack_cmd) return cmd_attack(common, mode, fraction, attack_in, attack_wm, !attack_train_views);
    if (*sweep_cmd) return cmd_sweep(common, param, grid, sweep_in, sweep_opts, !sweep_train_views);
    if (*stego_cmd) return cmd_export_stego(common, st_asset, st_wm, st_views, st_held);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
