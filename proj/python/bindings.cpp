#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hierpose/error.hpp"
#include "hierpose/features.hpp"
#include "hierpose/pipeline.hpp"

namespace py = pybind11;
using namespace hierpose;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

GrayImage to_image(const Array& a) {
  if (a.ndim() != 2) throw Error("image must be a 2-D array");
  GrayImage img(int(a.shape(1)), int(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), img.pixels().begin());
  return img;
}

CadModel to_mesh(const Array& vertices, const py::array_t<int, py::array::c_style | py::array::forcecast>& faces) {
  if (vertices.ndim() != 2 || vertices.shape(1) != 3) throw Error("vertices must have shape (n, 3)");
  if (faces.ndim() != 2 || faces.shape(1) != 3) throw Error("faces must have shape (m, 3)");
  CadModel m;
  m.id = "mesh";
  auto v = vertices.unchecked<2>();
  for (py::ssize_t i = 0; i < v.shape(0); ++i) m.vertices.push_back({v(i, 0), v(i, 1), v(i, 2)});
  auto f = faces.unchecked<2>();
  for (py::ssize_t i = 0; i < f.shape(0); ++i) m.faces.push_back({f(i, 0), f(i, 1), f(i, 2)});
  m.validate();
  return m;
}

py::dict report_dict(const EvalReport& r) {
  py::dict ap;
  for (const auto& c : r.columns) ap[py::str(c.name)] = c.result.ap ? py::cast(*c.result.ap) : py::none();
  py::dict bins;
  for (const auto& [n, pr] : r.viewpoint_by_bins) bins[py::int_(n)] = pr.ap ? py::cast(*pr.ap) : py::none();
  py::dict out;
  out["ap"] = ap;
  out["viewpoint_by_bins"] = bins;
  out["matched"] = r.matched;
  out["azimuth_accuracy"] = r.azimuth_accuracy;
  out["subcat_accuracy"] = r.subcat_accuracy;
  out["finer_accuracy"] = r.finer_accuracy;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "hierpose core bindings";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);

  m.def(
      "hog",
      [](const Array& image, int cell, int bins) {
        const auto d = hog_of_template(to_image(image), cell, bins);
        return py::array_t<double>(py::ssize_t(d.values.size()), d.values.data());
      },
      py::arg("image"), py::arg("cell") = kDefaultCellPx, py::arg("bins") = kDefaultBins,
      "HOG of a template image (rows = y). 576 values for 64x64 input.");

  m.def(
      "normalize_mesh",
      [](const Array& vertices, const py::array_t<int, py::array::c_style | py::array::forcecast>& faces) {
        const auto n = normalize_mesh(to_mesh(vertices, faces));
        py::array_t<double> out({py::ssize_t(n.vertices.size()), py::ssize_t(3)});
        auto o = out.mutable_unchecked<2>();
        for (size_t i = 0; i < n.vertices.size(); ++i) {
          o(i, 0) = n.vertices[i].x;
          o(i, 1) = n.vertices[i].y;
          o(i, 2) = n.vertices[i].z;
        }
        return out;
      },
      py::arg("vertices"), py::arg("faces"));

  m.def(
      "project_mesh",
      [](const Array& vertices, const py::array_t<int, py::array::c_style | py::array::forcecast>& faces,
         double azimuth, double elevation, double distance, int width, int height, std::pair<double, double> occ) {
        const auto mask = project_mesh(to_mesh(vertices, faces), {azimuth, elevation, distance},
                                       {occ.first, occ.second}, width, height);
        py::array_t<uint8_t> out({py::ssize_t(height), py::ssize_t(width)});
        std::copy(mask.bits.begin(), mask.bits.end(), out.mutable_data());
        return out;
      },
      py::arg("vertices"), py::arg("faces"), py::arg("azimuth"), py::arg("elevation"), py::arg("distance"),
      py::arg("width"), py::arg("height"), py::arg("occ") = std::pair<double, double>{0.0, 0.0},
      "Binary silhouette (height x width) of a normalized mesh.");

  m.def(
      "generate_synthetic",
      [](const std::filesystem::path& out, int scenes, uint64_t seed, int width, int height, const std::string& prefix) {
        SynthSpec s;
        s.scenes = scenes;
        s.seed = seed;
        s.image_width = width;
        s.image_height = height;
        s.prefix = prefix;
        const auto manifest = generate_synthetic(s, out);
        return py::dict(py::arg("images") = manifest.images.size(), py::arg("annotations") = manifest.annotations.size(),
                        py::arg("proposals") = manifest.proposals.size());
      },
      py::arg("out"), py::arg("scenes") = 50, py::arg("seed") = 1, py::arg("width") = 128, py::arg("height") = 128,
      py::arg("prefix") = "scene");

  m.def(
      "train",
      [](const std::filesystem::path& manifest, const std::filesystem::path& out, int layers, int bins, double C,
         uint64_t seed, const std::string& particles) {
        TrainOptions o;
        o.layers = layers;
        o.azimuth_bins = bins;
        o.ssvm.C = C;
        o.seed = seed;
        o.cnt_mode = parse_cnt_mode(particles);
        TrainOutput r;
        {
          py::gil_scoped_release release;
          r = train_model(load_manifest(manifest), o);
          save_model(out, r.assets, r.weights);
        }
        return py::dict(py::arg("iterations") = r.ssvm.state.iteration, py::arg("converged") = r.ssvm.converged,
                        py::arg("positives") = r.positives, py::arg("negatives") = r.negatives);
      },
      py::arg("manifest"), py::arg("out"), py::arg("layers") = 3, py::arg("bins") = 8, py::arg("C") = 1.0,
      py::arg("seed") = 0, py::arg("particles") = "full");

  m.def(
      "infer",
      [](const std::filesystem::path& model, const std::filesystem::path& manifest, const std::filesystem::path& out) {
        py::gil_scoped_release release;
        const auto [assets, weights] = load_model(model);
        const auto m = load_manifest(manifest);
        const auto dets = run_inference(assets, weights, m, load_images(m));
        write_detections(out, dets, assets.config);
        return dets.size();
      },
      py::arg("model"), py::arg("manifest"), py::arg("out"));

  m.def(
      "evaluate",
      [](const std::filesystem::path& manifest, const std::filesystem::path& detections,
         const std::filesystem::path& model) {
        const auto config = load_model(model).first.config;
        const auto m = load_manifest(manifest);
        const auto dets = read_detections(detections, config);
        return report_dict(evaluate(dets, ground_truth(m, config), config.azimuth_bins, config.subcategory_count()));
      },
      py::arg("manifest"), py::arg("detections"), py::arg("model"));
}
