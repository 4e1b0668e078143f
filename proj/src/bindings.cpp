#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "spnerf/errors.hpp"
#include "spnerf/evaluation.hpp"
#include "spnerf/geometry.hpp"
#include "spnerf/io.hpp"
#include "spnerf/merging.hpp"
#include "spnerf/pipeline.hpp"
#include "spnerf/superpoints.hpp"
#include "spnerf/synth.hpp"

namespace py = pybind11;
using namespace spnerf;

namespace {

py::array_t<double> vec3s_to_array(const std::vector<Vec3>& rows) {
  py::array_t<double> out({static_cast<py::ssize_t>(rows.size()), py::ssize_t(3)});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < view.shape(0); ++i) {
    for (py::ssize_t a = 0; a < 3; ++a) view(i, a) = rows[static_cast<size_t>(i)][a];
  }
  return out;
}

std::vector<Vec3> array_to_vec3s(const py::array_t<double, py::array::c_style>& arr) {
  if (arr.ndim() != 2 || arr.shape(1) != 3) throw ConfigError("expected an (N, 3) array");
  auto view = arr.unchecked<2>();
  std::vector<Vec3> rows(static_cast<size_t>(view.shape(0)));
  for (py::ssize_t i = 0; i < view.shape(0); ++i) {
    rows[static_cast<size_t>(i)] = Vec3(view(i, 0), view(i, 1), view(i, 2));
  }
  return rows;
}

py::array_t<uint32_t> u32_to_array(const std::vector<uint32_t>& values) {
  return py::array_t<uint32_t>(static_cast<py::ssize_t>(values.size()), values.data());
}

std::vector<uint32_t> array_to_u32(const py::array_t<uint32_t, py::array::c_style>& arr) {
  return {arr.data(), arr.data() + arr.size()};
}

}  // namespace

PYBIND11_MODULE(_spnerf, m) {
  m.doc() = "Superpoint-based zero-shot point cloud segmentation";

  py::register_exception<Error>(m, "SpnerfError", PyExc_RuntimeError);

  py::class_<PointCloud>(m, "PointCloud")
      .def(py::init([](py::array_t<double, py::array::c_style> positions) {
             PointCloud cloud;
             cloud.positions = array_to_vec3s(positions);
             return cloud;
           }),
           py::arg("positions"))
      .def_property_readonly("positions",
                             [](const PointCloud& c) { return vec3s_to_array(c.positions); })
      .def_property_readonly("normals",
                             [](const PointCloud& c) { return vec3s_to_array(c.normals); })
      .def_property_readonly("labels", [](const PointCloud& c) { return u32_to_array(c.gt_labels); })
      .def("__len__", &PointCloud::size);

  py::class_<SuperpointPartition>(m, "SuperpointPartition")
      .def_property_readonly("assignment",
                             [](const SuperpointPartition& p) { return u32_to_array(p.assignment); })
      .def_readonly("superpoint_count", &SuperpointPartition::superpoint_count)
      .def_property_readonly("members", [](const SuperpointPartition& p) { return p.members; });

  py::class_<FeatureField>(m, "FeatureField")
      .def_property_readonly("dims", [](const FeatureField& f) { return f.dims; })
      .def_readonly("scale_count", &FeatureField::scale_count)
      .def_readonly("embed_dim", &FeatureField::embed_dim)
      .def_readonly("voxel_size", &FeatureField::voxel_size)
      .def("density",
           [](const FeatureField& f, double x, double y, double z) {
             return f.density(Vec3(x, y, z));
           })
      .def("query", [](const FeatureField& f, double x, double y, double z, uint32_t scale) {
        return f.query(Vec3(x, y, z), scale);
      });

  py::class_<SegmentationResult>(m, "SegmentationResult")
      .def_property_readonly(
          "point_labels", [](const SegmentationResult& r) { return u32_to_array(r.point_labels); })
      .def_property_readonly(
          "superpoint_class",
          [](const SegmentationResult& r) { return u32_to_array(r.superpoint_class); })
      .def_readonly("class_count", &SegmentationResult::class_count)
      .def_readonly("superpoint_count", &SegmentationResult::superpoint_count);

  m.def("default_scene_json", [](uint64_t seed) { return scene_spec_to_json(default_desk_scene(seed)); },
        py::arg("seed") = 1);
  m.def("default_config_json", [] { return config_to_json(default_pipeline_config()); });

  m.def("generate_scene",
        [](const std::string& scene_json) { return generate_scene(scene_spec_from_json(scene_json)); },
        py::arg("scene_json"));

  m.def("estimate_normals",
        [](const PointCloud& cloud, uint32_t k) { return vec3s_to_array(estimate_normals(cloud, k)); },
        py::arg("cloud"), py::arg("k") = 10);

  m.def("farthest_point_sampling",
        [](py::array_t<double, py::array::c_style> points, uint32_t m_samples, uint32_t seed_index) {
          return u32_to_array(farthest_point_sampling(array_to_vec3s(points), m_samples, seed_index));
        },
        py::arg("points"), py::arg("m"), py::arg("seed_index") = 0);

  m.def("build_superpoints",
        [](const PointCloud& cloud, double k_thresh, uint32_t min_size, uint32_t knn_k) {
          return build_superpoints(cloud, {k_thresh, min_size, knn_k});
        },
        py::arg("cloud"), py::arg("k_thresh") = 0.05, py::arg("min_size") = 20,
        py::arg("knn_k") = 10);

  m.def("point_relevancy",
        [](const std::vector<double>& f, const std::vector<double>& pos,
           const std::vector<std::vector<double>>& negatives) {
          return point_relevancy(f, pos, negatives);
        },
        py::arg("f"), py::arg("f_pos"), py::arg("negatives"));

  m.def("miou_macc",
        [](py::array_t<uint32_t, py::array::c_style> pred,
           py::array_t<uint32_t, py::array::c_style> gt, uint32_t class_count) {
          ConfusionMatrix matrix = confusion(array_to_u32(pred), array_to_u32(gt), class_count);
          return py::make_tuple(miou(matrix), macc(matrix));
        },
        py::arg("pred"), py::arg("gt"), py::arg("class_count"));

  m.def("read_ply", [](const std::filesystem::path& path) { return io::read_ply(path); },
        py::arg("path"));
  m.def("write_ply",
        [](const PointCloud& cloud, const std::filesystem::path& path, bool binary) {
          io::write_ply(cloud, path, binary);
        },
        py::arg("cloud"), py::arg("path"), py::arg("binary") = true);
  m.def("read_field", [](const std::filesystem::path& path) { return io::read_field(path); },
        py::arg("path"));
  m.def("read_partition", [](const std::filesystem::path& path) { return io::read_partition(path); },
        py::arg("path"));

  m.def("run_pipeline",
        [](const std::string& scene_json, const std::string& config_json,
           const std::filesystem::path& out_dir) {
          SceneSpec scene = scene_spec_from_json(scene_json);
          PipelineConfig config = config_from_json(config_json);
          PipelineOutputs out = run_pipeline(scene, config, out_dir);
          py::dict result;
          result["miou"] = out.miou;
          result["macc"] = out.macc;
          result["cloud_ply"] = out.cloud_ply.string();
          result["labeled_ply"] = out.labeled_ply.string();
          result["field"] = out.field.string();
          result["partition"] = out.partition.string();
          result["metrics_json"] = out.metrics_json.string();
          return result;
        },
        py::arg("scene_json"), py::arg("config_json"), py::arg("out_dir"));
}
