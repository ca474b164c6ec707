#include "forge/error.hpp"
#include "forge/evaluation.hpp"
#include "forge/experiment_config.hpp"
#include "forge/phantom.hpp"
#include "forge/pipeline.hpp"
#include "forge/registration.hpp"
#include "forge/segmentation.hpp"
#include "forge/synthesis.hpp"
#include "forge/v3d_io.hpp"
#include "forge/warp.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace forge;

namespace {

// JSON crosses the boundary as text; the Python package decodes it.
using Json = nlohmann::json;

template <typename T>
torch::Tensor from_numpy(const py::array_t<T, py::array::c_style | py::array::forcecast>& a,
                         torch::Dtype dtype) {
  std::vector<int64_t> shape(a.shape(), a.shape() + a.ndim());
  return torch::from_blob(const_cast<T*>(a.data()), shape, dtype).clone();
}

torch::Tensor floats(const py::array& a) { return from_numpy<float>(a, torch::kFloat32); }
torch::Tensor ints(const py::array& a) { return from_numpy<int64_t>(a, torch::kInt64); }

py::array to_numpy(const torch::Tensor& t) {
  const auto c = t.detach().contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  if (c.scalar_type() == torch::kInt64) {
    py::array_t<int64_t> out(shape);
    std::memcpy(out.mutable_data(), c.data_ptr<int64_t>(), c.numel() * sizeof(int64_t));
    return out;
  }
  const auto f = c.to(torch::kFloat32);
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), f.data_ptr<float>(), f.numel() * sizeof(float));
  return out;
}

int64_t infer_classes(const torch::Tensor& labels) { return labels.max().item<int64_t>() + 1; }

LabelMap label_map(const py::array& a, std::optional<int64_t> k) {
  const auto t = ints(a);
  return LabelMap(t, k.value_or(infer_classes(t)));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of forge: phantoms, warping, losses, evaluation and the staged pipeline.";

  static py::exception<Error> base(m, "ForgeError");
  static py::exception<ConfigError> config_error(m, "ConfigError", base.ptr());
  static py::exception<ContractError> contract_error(m, "ContractError", base.ptr());
  static py::exception<DependencyError> dependency_error(m, "DependencyError", base.ptr());
  static py::exception<StaleArtifactError> stale_error(m, "StaleArtifactError", base.ptr());
  static py::exception<TrainingDivergedError> diverged_error(m, "TrainingDivergedError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      py::set_error(config_error, e.what());
    } catch (const ContractError& e) {
      py::set_error(contract_error, e.what());
    } catch (const DependencyError& e) {
      py::set_error(dependency_error, e.what());
    } catch (const StaleArtifactError& e) {
      py::set_error(stale_error, e.what());
    } catch (const TrainingDivergedError& e) {
      py::set_error(diverged_error, e.what());
    } catch (const Error& e) {
      py::set_error(base, e.what());
    }
  });

  m.def(
      "generate_phantoms",
      [](const std::string& spec_json, int64_t count) {
        PhantomSpec spec = Json::parse(spec_json);
        py::list out;
        for (const auto& s : generate_population(spec, count))
          out.append(py::make_tuple(to_numpy(s.image.tensor()), to_numpy(s.labels.tensor()),
                                    to_numpy(s.deformation.tensor())));
        return out;
      },
      py::arg("spec_json"), py::arg("count"));
  m.def("default_phantom_spec", [] { return Json(PhantomSpec{}).dump(); });

  m.def(
      "warp_trilinear",
      [](const py::array& volume, const py::array& field) {
        return to_numpy(warp_trilinear(Volume(floats(volume)), DisplacementField(floats(field))).tensor());
      },
      py::arg("volume"), py::arg("field"));
  m.def(
      "warp_nearest",
      [](const py::array& labels, const py::array& field) {
        return to_numpy(warp_nearest(label_map(labels, std::nullopt), DisplacementField(floats(field))).tensor());
      },
      py::arg("labels"), py::arg("field"));

  m.def(
      "local_cc_loss",
      [](const py::array& a, const py::array& b, int64_t n, double eps) {
        return local_cc_loss(Volume(floats(a)), Volume(floats(b)), n, eps);
      },
      py::arg("a"), py::arg("b"), py::arg("patch_size") = 9, py::arg("eps") = 1e-5);
  m.def(
      "smoothness_loss", [](const py::array& field) { return smoothness_loss(DisplacementField(floats(field))); },
      py::arg("field"));
  m.def(
      "ce_loss",
      [](const py::array& logits, const py::array& target) {
        return ce_loss(floats(logits).to(torch::kFloat64), ints(target)).item<double>();
      },
      py::arg("logits"), py::arg("target"));

  m.def(
      "synthesize",
      [](const py::array& atlas, const py::array& labels, const py::array& shape,
         const std::optional<py::array>& intensity) {
        std::optional<IntensityField> offset;
        if (intensity) offset = IntensityField(floats(*intensity));
        const auto s = synthesize(Volume(floats(atlas)), label_map(labels, std::nullopt),
                                  DisplacementField(floats(shape)), offset);
        return py::make_tuple(to_numpy(s.image.tensor()), to_numpy(s.labels.tensor()));
      },
      py::arg("atlas"), py::arg("labels"), py::arg("shape"), py::arg("intensity") = std::nullopt);

  m.def(
      "dice",
      [](const py::array& pred, const py::array& truth, int64_t region) {
        const auto p = ints(pred), t = ints(truth);
        const auto k = std::max({infer_classes(p), infer_classes(t), region + 1});
        return dice(LabelMap(p, k), LabelMap(t, k), region);
      },
      py::arg("pred"), py::arg("truth"), py::arg("region"));
  m.def(
      "evaluate",
      [](const std::vector<py::array>& preds, const std::vector<py::array>& truths, int64_t num_classes) {
        std::vector<LabelMap> p, t;
        for (const auto& a : preds) p.push_back(label_map(a, num_classes));
        for (const auto& a : truths) t.push_back(label_map(a, num_classes));
        return Json(evaluate(p, t)).dump();
      },
      py::arg("predictions"), py::arg("truths"), py::arg("num_classes"));

  m.def("load_volume", [](const std::filesystem::path& p) { return to_numpy(load_volume(p).tensor()); });
  m.def("load_labels", [](const std::filesystem::path& p) { return to_numpy(load_label_map(p).tensor()); });
  m.def("load_field", [](const std::filesystem::path& p) { return to_numpy(load_displacement_field(p).tensor()); });
  m.def("save_volume", [](const py::array& v, const std::filesystem::path& p) { save_volume(Volume(floats(v)), p); });
  m.def("save_labels", [](const py::array& l, const std::filesystem::path& p) {
    save_label_map(label_map(l, std::nullopt), p);
  });

  m.def(
      "resolve_config",
      [](const std::string& config_json) { return to_json(experiment_config_from_json(Json::parse(config_json))).dump(); },
      py::arg("config_json"));
  m.def("stages", [] { return Pipeline::stages(); });
  m.def(
      "run_stage",
      [](const std::string& config_json, const std::string& stage, const std::filesystem::path& root, bool force) {
        py::gil_scoped_release release;
        Pipeline p(experiment_config_from_json(Json::parse(config_json)), root);
        const auto r = p.run(stage, force);
        return Json{{"stage", r.stage}, {"skipped", r.skipped}, {"metrics", r.metrics}}.dump();
      },
      py::arg("config_json"), py::arg("stage"), py::arg("root"), py::arg("force") = false);
}
