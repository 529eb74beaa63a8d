#include "hierpose/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hierpose/error.hpp"
#include "hierpose/parallel.hpp"

namespace hierpose {

namespace fs = std::filesystem;
using nlohmann::json;

ImageStore load_images(const DatasetManifest& manifest, int workers) {
  std::vector<GrayImage> rasters(manifest.images.size());
  parallel_for(rasters.size(), workers, [&](size_t i) {
    const auto& rec = manifest.images[i];
    rasters[i] = read_pgm(manifest.resolve(rec.path));
    if (rasters[i].width() != rec.width || rasters[i].height() != rec.height)
      throw Error("image '" + rec.id + "' is " + std::to_string(rasters[i].width()) + "x" +
                  std::to_string(rasters[i].height()) + ", manifest says " + std::to_string(rec.width) + "x" +
                  std::to_string(rec.height));
  });
  ImageStore store;
  for (size_t i = 0; i < rasters.size(); ++i) store.emplace(manifest.images[i].id, std::move(rasters[i]));
  return store;
}

ImageRef image_ref(const ImageStore& store, const std::string& id) {
  auto it = store.find(id);
  if (it == store.end()) throw Error("no image raster for '" + id + "'");
  return {id, &it->second};
}

BundleContext ModelAssets::context() const {
  BundleContext ctx;
  ctx.config = &config;
  ctx.cads = &cads;
  ctx.refs = &refs;
  ctx.detector = detector.get();
  ctx.provider = provider.get();
  ctx.seed = seed;
  ctx.cnt_mode = cnt_mode;
  return ctx;
}

std::string cnt_mode_name(CntMode mode) {
  switch (mode) {
    case CntMode::Full: return "full";
    case CntMode::AnchorOnly: return "anchor";
    case CntMode::Ignore: return "ignore";
  }
  return "full";
}

CntMode parse_cnt_mode(const std::string& name) {
  if (name == "full") return CntMode::Full;
  if (name == "anchor") return CntMode::AnchorOnly;
  if (name == "ignore") return CntMode::Ignore;
  throw Error("unknown particle mode '" + name + "' (full, anchor, ignore)");
}

namespace {

FeatureDims feature_dims(const AppearanceProvider& provider) {
  return {static_cast<int>(hog_of_template(GrayImage(kTemplateSize, kTemplateSize)).size()), provider.dim()};
}

void load_providers(ModelAssets& a) {
  if (a.feature_table.empty())
    a.provider = std::make_shared<FilterBankProvider>();
  else
    a.provider = std::make_shared<FileFeatureProvider>(FileFeatureProvider::load(a.feature_table));
  if (!a.score_table.empty()) a.detector = std::make_shared<FileScoreDetector>(FileScoreDetector::load(a.score_table));
}

struct Region {
  std::string image_id;
  Rect box;
  LabelAssignment truth;
};

}  // namespace

TrainOutput train_model(const DatasetManifest& manifest, const TrainOptions& opt, const ImageStore* images) {
  auto log = [&](const std::string& s) {
    if (opt.log) opt.log(s);
  };
  ImageStore owned;
  if (images == nullptr) {
    owned = load_images(manifest, opt.workers);
    images = &owned;
  }
  TrainOutput out;
  ModelAssets& a = out.assets;
  a.config = hierarchy_from_manifest(manifest, opt.layers, opt.azimuth_bins);
  a.config.svm_c = opt.ssvm.C;
  a.voxel_resolution = opt.voxel_resolution;
  a.tau = opt.tau;
  a.seed = opt.seed;
  a.cnt_mode = opt.cnt_mode;
  a.feature_table = opt.feature_table.empty() ? "" : fs::absolute(opt.feature_table).string();
  a.score_table = opt.score_table.empty() ? "" : fs::absolute(opt.score_table).string();
  a.refs = distance_reference(manifest);
  if (opt.layers >= 2) {
    a.cads = load_cads(manifest, a.config, opt.voxel_resolution, opt.tau);
    for (const auto& name : a.config.finer)
      for (const auto& c : manifest.cads)
        if (c.finer == name) a.cad_paths.push_back(fs::absolute(manifest.resolve(c.path)).string());
  }
  load_providers(a);

  // Training regions.
  std::vector<Region> regions;
  std::map<std::string, std::vector<Rect>> objects;
  for (const auto& ann : manifest.annotations) {
    regions.push_back({ann.image_id, ann.box, annotation_labels(ann, a.config)});
    if (ann.object) {
      objects[ann.image_id].push_back(ann.box);
      ++out.positives;
    } else {
      ++out.negatives;
    }
  }
  for (const auto& p : manifest.proposals) {
    double best = 0.0;
    for (const auto& r : objects[p.image_id]) best = std::max(best, iou(r, p.box));
    if (best < opt.negative_iou) {
      regions.push_back({p.image_id, p.box, LabelAssignment::background()});
      ++out.negatives;
    }
  }
  if (out.positives == 0 || out.negatives == 0) throw Error("train: need positive and negative regions");
  log("training regions: " + std::to_string(out.positives) + " positive, " + std::to_string(out.negatives) +
      " negative");

  // Detector on local appearance.
  std::vector<AppearanceVector> apps(regions.size());
  parallel_for(regions.size(), opt.workers, [&](size_t i) {
    apps[i] = local_appearance(image_ref(*images, regions[i].image_id), regions[i].box, *a.provider);
  });
  if (!a.detector) {
    std::vector<std::vector<double>> pos, neg;
    for (size_t i = 0; i < regions.size(); ++i) (regions[i].truth.object ? pos : neg).push_back(apps[i].values);
    a.detector = std::make_shared<LogisticDetector>(train_detector(pos, neg, opt.logistic));
    log("detector trained");
  }

  // Potentials, computed once.
  std::vector<TrainingSample> samples(regions.size());
  const BundleContext ctx = a.context();
  parallel_for(regions.size(), opt.workers, [&](size_t i) {
    samples[i].bundle = build_bundle(image_ref(*images, regions[i].image_id), regions[i].box, ctx);
    samples[i].truth = regions[i].truth;
  });
  log("potentials computed for " + std::to_string(samples.size()) + " regions");

  const WeightLayout layout(a.config, feature_dims(*a.provider));
  SsvmOptions so = opt.ssvm;
  so.workers = opt.workers;
  if (so.losses.subcat_counts.empty() && opt.layers >= 2) {
    so.losses.subcat_counts.assign(a.config.subcategory_count(), 0);
    for (const auto& s : samples)
      if (s.truth.object) ++so.losses.subcat_counts[s.truth.s[0]];
    for (auto& c : so.losses.subcat_counts) c = std::max(c, 1);
  }
  out.ssvm = train_ssvm(samples, a.config, layout, so);
  out.weights = out.ssvm.w;
  log("ssvm: " + std::to_string(out.ssvm.state.iteration) + " iterations, " +
      (out.ssvm.converged ? "converged" : "iteration limit reached"));
  return out;
}

void save_model(const fs::path& dir, const ModelAssets& a, const WeightVector& w) {
  fs::create_directories(dir);
  json j;
  j["format"] = "hierpose-model 1";
  j["layers"] = a.config.layers;
  j["azimuth_bins"] = a.config.azimuth_bins;
  j["subcategories"] = a.config.subcategories;
  j["finer"] = a.config.finer;
  j["finer_subcat"] = a.config.finer_subcat;
  const auto& sc = a.config.sample_counts;
  j["sample_counts"] = {sc.azimuth, sc.elevation, sc.distance, sc.occlusion};
  const auto& sg = a.config.sigmas;
  j["sigmas"] = {{"azimuth", sg.azimuth},
                 {"elevation", sg.elevation},
                 {"mean_elevation", sg.mean_elevation},
                 {"occlusion_fraction", sg.occlusion_fraction}};
  j["svm_c"] = a.config.svm_c;
  j["voxel_resolution"] = a.voxel_resolution;
  j["tau"] = a.tau;
  j["seed"] = a.seed;
  j["particles"] = cnt_mode_name(a.cnt_mode);
  j["cads"] = a.cad_paths;
  json refs = json::array();
  for (const auto& r : a.refs.records) refs.push_back({r.width, r.height, r.distance});
  j["distance_reference"] = refs;
  j["feature_table"] = a.feature_table;
  j["score_table"] = a.score_table;
  j["weights"] = "weights.txt";
  if (a.score_table.empty()) {
    const auto* det = dynamic_cast<const LogisticDetector*>(a.detector.get());
    if (det == nullptr) throw Error("save_model: detector is not serializable");
    det->save(dir / "detector.txt");
    j["detector"] = "detector.txt";
  }
  std::ofstream(dir / "model.json") << j.dump(2) << '\n';
  w.save(dir / "weights.txt");
}

std::pair<ModelAssets, WeightVector> load_model(const fs::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw Error("cannot read " + (dir / "model.json").string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("model.json: " + std::string(e.what()));
  }
  if (j.value("format", "") != "hierpose-model 1") throw Error("model.json: unsupported format");
  ModelAssets a;
  try {
    a.config.layers = j.at("layers");
    a.config.azimuth_bins = j.at("azimuth_bins");
    a.config.subcategories = j.at("subcategories").get<std::vector<std::string>>();
    a.config.finer = j.at("finer").get<std::vector<std::string>>();
    a.config.finer_subcat = j.at("finer_subcat").get<std::vector<int>>();
    const auto sc = j.at("sample_counts").get<std::vector<int>>();
    if (sc.size() != 4) throw Error("model.json: sample_counts needs 4 entries");
    a.config.sample_counts = {sc[0], sc[1], sc[2], sc[3]};
    const auto& sg = j.at("sigmas");
    a.config.sigmas = {sg.at("azimuth"), sg.at("elevation"), sg.at("mean_elevation"), sg.at("occlusion_fraction")};
    a.config.svm_c = j.at("svm_c");
    a.voxel_resolution = j.at("voxel_resolution");
    a.tau = j.at("tau");
    a.seed = j.at("seed");
    a.cnt_mode = parse_cnt_mode(j.at("particles"));
    a.cad_paths = j.at("cads").get<std::vector<std::string>>();
    for (const auto& r : j.at("distance_reference")) a.refs.records.push_back({r.at(0), r.at(1), r.at(2)});
    a.feature_table = j.value("feature_table", "");
    a.score_table = j.value("score_table", "");
  } catch (const json::exception& e) {
    throw Error("model.json: " + std::string(e.what()));
  }
  a.config.validate();
  if (a.config.layers >= 2) {
    if (a.cad_paths.size() != a.config.finer.size()) throw Error("model.json: one CAD path per finer id required");
    std::vector<CadModel> models;
    for (size_t f = 0; f < a.cad_paths.size(); ++f)
      models.push_back(normalize_mesh(read_obj(a.cad_paths[f], a.config.finer[f])));
    a.cads = CadRegistry::build(a.config, std::move(models), a.voxel_resolution, a.tau);
  }
  load_providers(a);
  if (!a.detector) {
    if (!j.contains("detector")) throw Error("model.json: no detector");
    a.detector = std::make_shared<LogisticDetector>(LogisticDetector::load(dir / j.at("detector").get<std::string>()));
  }
  WeightVector w = WeightVector::load(dir / j.value("weights", "weights.txt"));
  if (w.layout.config_hash() != config_hash(a.config, feature_dims(*a.provider)))
    throw Error("weights do not match the model configuration");
  return {std::move(a), std::move(w)};
}

std::vector<Detection> run_inference(const ModelAssets& a, const WeightVector& w, const DatasetManifest& manifest,
                                     const ImageStore& images, int workers, double nms_overlap) {
  std::vector<Detection> all;
  const BundleContext ctx = a.context();
  for (const auto& img : manifest.images) {
    const auto props = manifest.proposals_of(img.id);
    if (props.empty()) continue;
    auto dets = detect_image(image_ref(images, img.id), props, w, ctx, nms_overlap, workers);
    all.insert(all.end(), std::make_move_iterator(dets.begin()), std::make_move_iterator(dets.end()));
  }
  return all;
}

namespace {

std::string num(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

}  // namespace

void write_detections(const fs::path& path, std::span<const Detection> dets, const HierarchyConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& d : dets) {
    const auto vp = d.viewpoint();
    const ContinuousViewpoint cv = vp.value_or(ContinuousViewpoint{});
    const int s = d.assignment.subcategory();
    const int f = d.assignment.f;
    out << d.image_id << ' ' << d.region.x << ' ' << d.region.y << ' ' << d.region.w << ' ' << d.region.h << ' '
        << num(d.energy) << ' ' << d.assignment.v[0] << ' ' << num(cv.azimuth) << ' ' << num(cv.elevation) << ' '
        << num(cv.distance) << ' ' << num(cv.occ.dx) << ' ' << num(cv.occ.dy) << ' '
        << (s >= 0 ? config.subcategories.at(s) : "-") << ' ' << (f >= 0 ? config.finer.at(f) : "-") << '\n';
  }
}

std::vector<Detection> read_detections(const fs::path& path, const HierarchyConfig& config) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read detections " + path.string());
  std::vector<Detection> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream ls(line);
    std::vector<std::string> t;
    for (std::string s; ls >> s;) t.push_back(s);
    if (t.empty() || t[0][0] == '#') continue;
    auto fail = [&](const std::string& m) -> Error {
      return Error(path.string() + ":" + std::to_string(n) + ": " + m);
    };
    if (t.size() != 14) throw fail("expected 14 fields, got " + std::to_string(t.size()));
    auto d_ = [&](size_t i) {
      double v{};
      auto [p, ec] = std::from_chars(t[i].data(), t[i].data() + t[i].size(), v);
      if (ec != std::errc() || p != t[i].data() + t[i].size()) throw fail("bad number '" + t[i] + "'");
      return v;
    };
    auto i_ = [&](size_t i) {
      int v{};
      auto [p, ec] = std::from_chars(t[i].data(), t[i].data() + t[i].size(), v);
      if (ec != std::errc() || p != t[i].data() + t[i].size()) throw fail("bad integer '" + t[i] + "'");
      return v;
    };
    Detection d;
    d.image_id = t[0];
    d.region = {i_(1), i_(2), i_(3), i_(4)};
    d.energy = d_(5);
    d.azimuth_bins = config.azimuth_bins;
    const int v = i_(6);
    ContinuousViewpoint cv{d_(7), d_(8), d_(9), {d_(10), d_(11)}};
    int s = kBackground, f = kBackground;
    try {
      if (t[12] != "-") s = config.subcategory_index(t[12]);
      if (t[13] != "-") f = config.finer_index(t[13]);
    } catch (const Error& e) {
      throw fail(e.what());
    }
    const int layers = f != kBackground ? 3 : s != kBackground ? 2 : 1;
    d.assignment = LabelAssignment::foreground(layers, v, s, f);
    if (layers >= 2) d.assignment.cv2 = cv;
    if (layers >= 3) d.assignment.cv3 = cv;
    out.push_back(std::move(d));
  }
  return out;
}

std::optional<double> mean_cad_alignment_iou(std::span<const Detection> dets, std::span<const GroundTruthObject> truths,
                                             const CadRegistry& cads, const DatasetManifest& manifest) {
  const auto match = match_detections(dets, truths);
  double sum = 0.0;
  int n = 0;
  for (size_t d = 0; d < dets.size(); ++d) {
    if (match[d] < 0 || !dets[d].assignment.deepest_viewpoint()) continue;
    const auto& img = manifest.image(dets[d].image_id);
    SegmentationAssets as{&cads, &truths[match[d]], nullptr, img.width, img.height};
    sum += segmentation_iou(dets[d], SegmentationMode::CadAlignment, as);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

}  // namespace hierpose
