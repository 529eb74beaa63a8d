// hierpose: synth | train | infer | eval | overlay
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "font.hpp"
#include "hierpose/error.hpp"
#include "hierpose/parallel.hpp"
#include "hierpose/pipeline.hpp"

namespace fs = std::filesystem;
using namespace hierpose;

namespace {

void echo_config(const CLI::App& app, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# resolved configuration of `hierpose " << app.get_name() << "`\n" << app.config_to_str(true, false);
}

void log_line(const std::string& s) { std::cerr << "[hierpose] " << s << '\n'; }

std::vector<std::pair<int, int>> parse_grid(const std::string& spec) {
  // "64:16,96:24"
  std::vector<std::pair<int, int>> out;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw Error("grid entry '" + item + "' must be scale:stride");
    int scale = 0, stride = 0;
    if (!CLI::detail::lexical_cast(item.substr(0, colon), scale) ||
        !CLI::detail::lexical_cast(item.substr(colon + 1), stride))
      throw Error("grid entry '" + item + "' must be scale:stride");
    out.emplace_back(scale, stride);
  }
  return out;
}

struct Common {
  uint64_t seed = 0;
  int workers = default_workers();
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed")->capture_default_str();
  cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->set_config("--config", "", "Optional TOML/INI file with option values; flags override it");
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  Common common;
  SynthSpec spec;
  std::string out;
};

int cmd_synth(const CLI::App& app, SynthArgs& a) {
  a.spec.seed = a.common.seed;
  a.spec.workers = a.common.workers;
  fs::create_directories(a.out);
  const auto m = generate_synthetic(a.spec, a.out);
  echo_config(app, fs::path(a.out) / "synth_config.toml");
  std::cout << "wrote " << m.images.size() << " scenes, " << m.proposals.size() << " proposals to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  Common common;
  std::string manifest, out, particles = "full", features, scores;
  int layers = 3, bins = 8, voxel_res = 32, max_iter = 200;
  double C = 1.0, epsilon = 1e-3, tau = 0.5, neg_iou = 0.3;
};

int cmd_train(const CLI::App& app, TrainArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto manifest = load_manifest(a.manifest);
  TrainOptions o;
  o.layers = a.layers;
  o.azimuth_bins = a.bins;
  o.voxel_resolution = a.voxel_res;
  o.tau = a.tau;
  o.seed = a.common.seed;
  o.workers = a.common.workers;
  o.cnt_mode = parse_cnt_mode(a.particles);
  o.negative_iou = a.neg_iou;
  o.ssvm.C = a.C;
  o.ssvm.epsilon = a.epsilon;
  o.ssvm.max_iter = a.max_iter;
  o.feature_table = a.features;
  o.score_table = a.scores;
  o.log = log_line;
  const TrainOutput r = train_model(manifest, o);
  save_model(a.out, r.assets, r.weights);
  std::ofstream trace(fs::path(a.out) / "trace.csv");
  trace << "iteration,violation,dual\n";
  const auto& st = r.ssvm.state;
  for (size_t i = 0; i < st.violation_trace.size(); ++i) {
    trace << i + 1 << ',' << st.violation_trace[i] << ',';
    if (i < st.dual_trace.size()) trace << st.dual_trace[i];
    trace << '\n';
  }
  echo_config(app, fs::path(a.out) / "train_config.toml");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::cout << "trained " << a.layers << "-layer model (" << st.iteration << " iterations, "
            << (r.ssvm.converged ? "converged" : "not converged") << ") in " << secs << " s -> " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct InferArgs {
  Common common;
  std::string model, manifest, out, grid;
  double nms = 0.5;
};

int cmd_infer(const CLI::App& app, InferArgs& a) {
  auto [assets, weights] = load_model(a.model);
  auto manifest = load_manifest(a.manifest);
  if (!a.grid.empty()) {
    const auto grid = parse_grid(a.grid);
    std::vector<int> scales, strides;
    for (auto [s, t] : grid) {
      scales.push_back(s);
      strides.push_back(t);
    }
    manifest.proposals.clear();
    for (const auto& img : manifest.images)
      for (const Rect& r : grid_proposals(img.width, img.height, scales, strides))
        manifest.proposals.push_back({img.id, r, std::nullopt});
  }
  const auto images = load_images(manifest, a.common.workers);
  const auto dets = run_inference(assets, weights, manifest, images, a.common.workers, a.nms);
  write_detections(a.out, dets, assets.config);
  echo_config(app, fs::path(a.out).string() + ".config.toml");
  std::cout << "wrote " << dets.size() << " detections to " << a.out << '\n';
  return 0;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  Common common;
  std::string manifest, detections, model, out, csv, seg, masks;
  int bins = 8;
};

int cmd_eval(const CLI::App& app, EvalArgs& a) {
  const auto manifest = load_manifest(a.manifest);
  std::optional<std::pair<ModelAssets, WeightVector>> model;
  HierarchyConfig config;
  if (!a.model.empty()) {
    model = load_model(a.model);
    config = model->first.config;
  } else {
    config = hierarchy_from_manifest(manifest, 3, a.bins);
  }
  const auto dets = read_detections(a.detections, config);
  const auto truths = ground_truth(manifest, config);
  const auto report = evaluate(dets, truths, config.azimuth_bins, config.subcategory_count());
  std::ostringstream text;
  write_report(text, report, config.subcategories);
  if (!a.seg.empty()) {
    const CadRegistry cads = model ? model->first.cads : load_cads(manifest, config);
    const auto match = match_detections(dets, truths);
    double sum = 0.0;
    int n = 0;
    for (size_t d = 0; d < dets.size(); ++d) {
      if (match[d] < 0 || !dets[d].assignment.deepest_viewpoint()) continue;
      const auto& img = manifest.image(dets[d].image_id);
      SegmentationAssets as{&cads, &truths[match[d]], nullptr, img.width, img.height};
      std::optional<SilhouetteMask> mask;
      SegmentationMode mode = SegmentationMode::CadAlignment;
      if (a.seg == "mask") {
        mode = SegmentationMode::Mask2d;
        const fs::path mp = fs::path(a.masks) / (dets[d].image_id + ".pgm");
        if (a.masks.empty() || !fs::exists(mp)) throw Error("missing mask " + mp.string());
        const GrayImage g = read_pgm(mp);
        mask.emplace(g.width(), g.height());
        for (int y = 0; y < g.height(); ++y)
          for (int x = 0; x < g.width(); ++x) mask->bits[size_t(y) * g.width() + x] = g.at(x, y) > 0.5;
        as.mask = &*mask;
      } else if (a.seg != "cad") {
        throw Error("--seg must be 'cad' or 'mask'");
      }
      sum += segmentation_iou(dets[d], mode, as);
      ++n;
    }
    text << "\nsegmentation IoU (" << a.seg << ", " << n << " boxes) " << (n ? sum / n : 0.0) << '\n';
  }
  std::cout << text.str();
  if (!a.out.empty()) {
    std::ofstream(a.out) << text.str();
    echo_config(app, a.out + ".config.toml");
  }
  if (!a.csv.empty()) {
    std::ofstream csv(a.csv);
    write_pr_csv(csv, report);
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct OverlayArgs {
  Common common;
  std::string model, manifest, detections, out;
  int top = 1;
};

int cmd_overlay(const CLI::App& app, OverlayArgs& a) {
  auto [assets, weights] = load_model(a.model);
  const auto manifest = load_manifest(a.manifest);
  const auto dets = read_detections(a.detections, assets.config);
  fs::create_directories(a.out);
  std::map<std::string, std::vector<const Detection*>> per_image;
  for (const auto& d : dets) per_image[d.image_id].push_back(&d);
  int written = 0;
  for (const auto& rec : manifest.images) {
    GrayImage img = read_pgm(manifest.resolve(rec.path));
    const GrayImage orig = img;
    auto& list = per_image[rec.id];
    std::stable_sort(list.begin(), list.end(), [](auto* x, auto* y) { return x->energy > y->energy; });
    for (int k = 0; k < std::min<int>(a.top, list.size()); ++k) {
      const Detection& d = *list[k];
      auto contrast = [&](int x, int y) { img.at(x, y) = orig.at(x, y) > 0.5 ? 0.0 : 1.0; };
      const auto vp = d.assignment.deepest_viewpoint();
      if (vp && assets.config.layers >= 2) {
        const CadModel& cad = d.assignment.f >= 0 ? assets.cads.finer[d.assignment.f]
                                                  : assets.cads.merged[d.assignment.subcategory()];
        const SilhouetteMask m = render_in_image(cad, *vp, d.region, img.width(), img.height());
        for (int y = 0; y < m.height; ++y)
          for (int x = 0; x < m.width; ++x)
            if (m.on_contour(x, y)) contrast(x, y);
      } else {
        const Rect& r = d.region;
        for (int x = r.x; x < r.x + r.w; ++x) {
          contrast(x, r.y);
          contrast(x, r.y + r.h - 1);
        }
        for (int y = r.y; y < r.y + r.h; ++y) {
          contrast(r.x, y);
          contrast(r.x + r.w - 1, y);
        }
      }
      std::string label = "v" + std::to_string(d.assignment.v[0]);
      if (d.assignment.subcategory() >= 0) label += " " + assets.config.subcategories[d.assignment.subcategory()];
      if (d.assignment.f >= 0) label += " " + assets.config.finer[d.assignment.f];
      tools::draw_text(img, d.region.x, std::max(0, d.region.y - 9), label, 1.0);
    }
    write_pgm(fs::path(a.out) / (rec.id + ".pgm"), img);
    ++written;
  }
  echo_config(app, fs::path(a.out) / "overlay_config.toml");
  std::cout << "wrote " << written << " overlays to " << a.out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical hybrid random field for detection, continuous pose and sub-category recognition"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Render a synthetic dataset");
  add_common(synth, sa.common);
  synth->add_option("--out", sa.out, "Output directory")->required();
  synth->add_option("--scenes", sa.spec.scenes, "Number of scenes")->capture_default_str();
  synth->add_option("--width", sa.spec.image_width, "Image width")->capture_default_str();
  synth->add_option("--height", sa.spec.image_height, "Image height")->capture_default_str();
  synth->add_option("--elevation-min", sa.spec.elevation_min, "Minimum elevation (rad)")->capture_default_str();
  synth->add_option("--elevation-max", sa.spec.elevation_max, "Maximum elevation (rad)")->capture_default_str();
  synth->add_option("--distance-min", sa.spec.distance_min, "Minimum camera distance")->capture_default_str();
  synth->add_option("--distance-max", sa.spec.distance_max, "Maximum camera distance")->capture_default_str();
  synth->add_option("--center-jitter", sa.spec.center_jitter, "Object placement jitter (px)")->capture_default_str();
  synth->add_option("--jitter-proposals", sa.spec.jitter_proposals, "Jittered positive proposals per scene")
      ->capture_default_str();
  synth->add_option("--negatives", sa.spec.negative_proposals, "Random negative proposals per scene")
      ->capture_default_str();
  synth->add_option("--noise", sa.spec.noise, "Pixel noise sigma")->capture_default_str();
  synth->add_option("--background-contrast", sa.spec.background_contrast, "Scale of the background texture")
      ->capture_default_str();
  synth->add_option("--prefix", sa.spec.prefix, "Image id prefix")->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a 1-, 2- or 3-layer model");
  add_common(train, ta.common);
  train->add_option("--manifest", ta.manifest, "Training manifest")->required()->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Model directory")->required();
  train->add_option("--layers", ta.layers, "Hierarchy depth")->check(CLI::Range(1, 3))->capture_default_str();
  train->add_option("--bins", ta.bins, "Azimuth bins")->check(CLI::PositiveNumber)->capture_default_str();
  train->add_option("--C", ta.C, "SSVM regularization constant")->capture_default_str();
  train->add_option("--epsilon", ta.epsilon, "Cutting-plane tolerance")->capture_default_str();
  train->add_option("--max-iter", ta.max_iter, "Cutting-plane iterations")->capture_default_str();
  train->add_option("--voxel-res", ta.voxel_res, "Voxel resolution of merged CADs")->capture_default_str();
  train->add_option("--tau", ta.tau, "Merge fraction")->capture_default_str();
  train->add_option("--negative-iou", ta.neg_iou, "Max overlap of negative proposals")->capture_default_str();
  train->add_option("--particles", ta.particles, "full | anchor (discrete) | ignore")->capture_default_str();
  train->add_option("--features", ta.features, "Region table of appearance features")->check(CLI::ExistingFile);
  train->add_option("--det-scores", ta.scores, "Region table of detector scores")->check(CLI::ExistingFile);

  InferArgs ia;
  auto* infer = app.add_subcommand("infer", "Detect objects and estimate labels");
  add_common(infer, ia.common);
  infer->add_option("--model", ia.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--manifest", ia.manifest, "Manifest with images and proposals")->required()->check(
      CLI::ExistingFile);
  infer->add_option("--out", ia.out, "Detections file")->required();
  infer->add_option("--nms", ia.nms, "NMS overlap")->capture_default_str();
  infer->add_option("--grid", ia.grid, "Replace proposals by sliding windows, e.g. 64:16,96:24");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score detections against ground truth");
  add_common(eval, ea.common);
  eval->add_option("--manifest", ea.manifest, "Ground-truth manifest")->required()->check(CLI::ExistingFile);
  eval->add_option("--detections", ea.detections, "Detections file")->required()->check(CLI::ExistingFile);
  eval->add_option("--model", ea.model, "Model directory (label names, CADs)")->check(CLI::ExistingDirectory);
  eval->add_option("--bins", ea.bins, "Azimuth bins when no model is given")->capture_default_str();
  eval->add_option("--out", ea.out, "Report file");
  eval->add_option("--csv", ea.csv, "Precision/recall CSV");
  eval->add_option("--seg", ea.seg, "Segmentation IoU mode: cad | mask");
  eval->add_option("--masks", ea.masks, "Directory of <image_id>.pgm masks for --seg mask");

  OverlayArgs oa;
  auto* overlay = app.add_subcommand("overlay", "Draw projected contours and labels");
  add_common(overlay, oa.common);
  overlay->add_option("--model", oa.model, "Model directory")->required()->check(CLI::ExistingDirectory);
  overlay->add_option("--manifest", oa.manifest, "Manifest")->required()->check(CLI::ExistingFile);
  overlay->add_option("--detections", oa.detections, "Detections file")->required()->check(CLI::ExistingFile);
  overlay->add_option("--out", oa.out, "Output directory")->required();
  overlay->add_option("--top", oa.top, "Detections drawn per image")->capture_default_str();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*synth) return cmd_synth(*synth, sa);
    if (*train) return cmd_train(*train, ta);
    if (*infer) return cmd_infer(*infer, ia);
    if (*eval) return cmd_eval(*eval, ea);
    if (*overlay) return cmd_overlay(*overlay, oa);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
