#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "percmap/camera.hpp"
#include "percmap/errors.hpp"
#include "percmap/eval.hpp"
#include "percmap/json_io.hpp"
#include "percmap/map_core.hpp"
#include "percmap/targets.hpp"
#include "percmap/version.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json parse(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw percmap::ContractError(std::string(what) + ": " + e.what());
  }
}

// A single map document or a list of them, one per frame.
std::vector<percmap::VectorMap> maps_of(const std::string& text, const char* what) {
  const json j = parse(text, what);
  std::vector<percmap::VectorMap> maps;
  try {
    if (j.is_array()) {
      for (const auto& m : j) maps.push_back(percmap::map_from_json(m));
    } else {
      maps.push_back(percmap::map_from_json(j));
    }
  } catch (const json::exception& e) {
    throw percmap::ContractError(std::string(what) + ": " + e.what());
  } catch (const percmap::ContractError& e) {
    throw percmap::ContractError(std::string(what) + ": " + e.what());
  }
  return maps;
}

percmap::CameraRig rig_of(const std::string& text) {
  if (text == "toy") return percmap::CameraRig::toy();
  if (text == "surround") return percmap::CameraRig::surround();
  return percmap::rig_from_json(parse(text, "rig"));
}

// Read-only view over the tensor buffer; the capsule keeps the storage alive.
py::array view_of(const percmap::Tensor& t) {
  auto* owner = new percmap::Tensor(t);
  py::capsule base(owner, [](void* p) { delete static_cast<percmap::Tensor*>(p); });
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  std::vector<py::ssize_t> strides(shape.size());
  py::ssize_t stride = sizeof(double);
  for (std::size_t i = shape.size(); i-- > 0;) {
    strides[i] = stride;
    stride *= shape[i];
  }
  py::array a(py::dtype::of<double>(), shape, strides, owner->data().data(), base);
  a.attr("setflags")(py::arg("write") = false);
  return a;
}

std::vector<percmap::Point2> points_of(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                                       const char* what) {
  if (a.ndim() != 2 || a.shape(1) != 2)
    throw percmap::ContractError(std::string(what) + ": expected an (n, 2) array of points");
  std::vector<percmap::Point2> pts(static_cast<std::size_t>(a.shape(0)));
  const auto r = a.unchecked<2>();
  for (py::ssize_t i = 0; i < a.shape(0); ++i) pts[static_cast<std::size_t>(i)] = {r(i, 0), r(i, 1)};
  return pts;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "percmap native core";
  m.attr("__version__") = percmap::kVersion;

  py::register_local_exception<percmap::ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_local_exception<percmap::IoError>(m, "IoError", PyExc_OSError);
  py::register_local_exception<percmap::NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_local_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def(
      "py_evaluate",
      [](const std::string& preds_json, const std::string& gts_json, const std::string& cfg_json) {
        py::gil_scoped_release nogil;
        const auto preds = maps_of(preds_json, "predictions");
        const auto gts = maps_of(gts_json, "ground truth");
        if (preds.size() != gts.size())
          throw percmap::ContractError("predictions and ground truth hold different frame counts");
        const percmap::EvalConfig cfg =
            cfg_json.empty() ? percmap::EvalConfig{} : percmap::eval_config_from_json(parse(cfg_json, "config"));
        std::vector<percmap::FramePair> pairs;
        for (std::size_t i = 0; i < gts.size(); ++i) pairs.push_back({preds[i], gts[i]});
        return percmap::dump_canonical(percmap::to_json(percmap::evaluate(pairs, cfg)));
      },
      py::arg("preds_json"), py::arg("gts_json"), py::arg("cfg_json") = "",
      "Evaluate map documents; returns the report JSON text written by `percmap eval`.");

  m.def(
      "py_chamfer",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& b, std::size_t n_eval, bool closed) {
        percmap::MapInstance ia, ib;
        ia.points = points_of(a, "a_points");
        ib.points = points_of(b, "b_points");
        ia.category = ib.category = closed ? percmap::Category::ped() : percmap::Category::div();
        py::gil_scoped_release nogil;
        percmap::validate_instance(ia);
        percmap::validate_instance(ib);
        return percmap::chamfer_distance(ia, ib, n_eval);
      },
      py::arg("a_points"), py::arg("b_points"), py::arg("n_eval") = 100, py::arg("closed") = false,
      "Symmetric Chamfer distance in meters after resampling both chains to n_eval points.");

  m.def(
      "py_rasterize",
      [](const std::string& map_json, const std::string& grid_json, double width) {
        percmap::RasterMask mask;
        {
          py::gil_scoped_release nogil;
          const auto maps = maps_of(map_json, "map");
          if (maps.size() != 1) throw percmap::ContractError("map: expected a single map document");
          const percmap::BevGrid grid = percmap::grid_from_json(parse(grid_json, "grid"));
          mask = percmap::rasterize_instances(maps.front(), grid, percmap::RasterOptions{width, true});
        }
        return view_of(mask.mask);
      },
      py::arg("map_json"), py::arg("grid_json"), py::arg("width") = 1.0,
      "Binary BEV masks [H, W, N_c] as a read-only array.");

  m.def(
      "make_heatmap_target",
      [](const std::string& map_json, const std::string& rig, double sigma, double z_ground) {
        percmap::HeatmapTarget target;
        {
          py::gil_scoped_release nogil;
          const auto maps = maps_of(map_json, "map");
          if (maps.size() != 1) throw percmap::ContractError("map: expected a single map document");
          target = percmap::make_heatmap_target(maps.front(), rig_of(rig), sigma, z_ground);
        }
        return view_of(target.heatmap);
      },
      py::arg("map_json"), py::arg("rig") = "toy", py::arg("sigma") = 3.0, py::arg("z_ground") = 0.0,
      "Keypoint heatmaps [N, H_I, W_I, N_c] as a read-only array. `rig` is \"toy\", \"surround\" or rig JSON.");

  m.attr("evaluate") = m.attr("py_evaluate");
  m.attr("chamfer_distance") = m.attr("py_chamfer");
  m.attr("rasterize_instances") = m.attr("py_rasterize");
}
