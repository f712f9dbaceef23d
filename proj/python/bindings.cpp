#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "jdiff/diffusion.hpp"
#include "jdiff/pipeline.hpp"
#include "jdiff/rng.hpp"
#include "jdiff/schedule.hpp"
#include "jdiff/tensor.hpp"

namespace py = pybind11;
using namespace jdiff;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  Shape shape(a.ndim());
  for (int i = 0; i < a.ndim(); ++i) shape[i] = static_cast<int>(a.shape(i));
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor::from_vector(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["fid_a"] = r.fid_a;
  d["fid_b"] = r.fid_b;
  d["is_a_mean"] = r.is_a.mean;
  d["is_a_std"] = r.is_a.std;
  d["is_b_mean"] = r.is_b.mean;
  d["is_b_std"] = r.is_b.std;
  d["matching_macro_precision"] = r.matching.macro_precision;
  d["matching_macro_recall"] = r.matching.macro_recall;
  d["conditional_macro_precision"] = r.conditional.macro_precision;
  d["conditional_macro_recall"] = r.conditional.macro_recall;
  d["sample_count"] = r.sample_count;
  d["config_digest"] = r.config_digest;
  d["mode"] = r.mode;
  return d;
}

RunConfig parse_config(const std::string& text, const std::vector<std::string>& overrides) {
  return RunConfig::parse(text, overrides);
}

}  // namespace

PYBIND11_MODULE(_jdiff, m) {
  m.doc() = "Joint multimodal diffusion engine";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);

  py::class_<Rng>(m, "Rng")
      .def(py::init<uint64_t, uint64_t>(), py::arg("seed"), py::arg("stream") = 0)
      .def("uniform", &Rng::uniform)
      .def("normal", &Rng::normal)
      .def("derive", &Rng::derive, py::arg("substream"));

  py::class_<NoiseSchedule>(m, "NoiseSchedule")
      .def_readonly("T", &NoiseSchedule::T)
      .def("beta", &NoiseSchedule::beta, py::arg("t"))
      .def("alpha", &NoiseSchedule::alpha, py::arg("t"))
      .def("alpha_bar", &NoiseSchedule::alpha_bar, py::arg("t"));

  m.def("linear_schedule", &linear_schedule, py::arg("timesteps"), py::arg("beta_start"),
        py::arg("beta_end"));

  m.def(
      "q_sample",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x0, int t,
         const NoiseSchedule& s,
         const py::array_t<double, py::array::c_style | py::array::forcecast>& eps) {
        return array_from_tensor(q_sample(tensor_from_array(x0), t, s, tensor_from_array(eps)));
      },
      py::arg("x0"), py::arg("t"), py::arg("schedule"), py::arg("eps"),
      "Closed-form forward noising of x0 to step t with the given noise.");

  m.def(
      "forward_step",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x_prev, int t,
         const NoiseSchedule& s, Rng& rng) {
        return array_from_tensor(forward_step(tensor_from_array(x_prev), t, s, rng));
      },
      py::arg("x_prev"), py::arg("t"), py::arg("schedule"), py::arg("rng"),
      "One stochastic forward diffusion step from t-1 to t.");

  py::class_<RunConfig>(m, "RunConfig")
      .def_static("parse", &parse_config, py::arg("text"),
                  py::arg("overrides") = std::vector<std::string>{})
      .def_static("from_file", &RunConfig::from_file, py::arg("path"),
                  py::arg("overrides") = std::vector<std::string>{})
      .def("digest", &RunConfig::digest)
      .def("canonical", &RunConfig::canonical)
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("outdir", &RunConfig::outdir)
      .def_readwrite("mode", &RunConfig::mode)
      .def_readwrite("timesteps", &RunConfig::timesteps)
      .def_readwrite("epochs", &RunConfig::epochs);

  m.def("pack", &cmd_pack, py::arg("config"), "Build the paired dataset cache; returns its digest.");
  m.def("train", &cmd_train, py::arg("config"), py::arg("resume") = std::string{},
        py::call_guard<py::gil_scoped_release>(),
        "Train (or resume) the denoiser per the config.");
  m.def("sample", &cmd_sample, py::arg("config"), py::arg("checkpoint") = std::string{},
        py::call_guard<py::gil_scoped_release>(),
        "Sample per config.mode from the latest checkpoint; returns the dump path.");
  m.def(
      "evaluate",
      [](const RunConfig& c) {
        MetricReport r;
        {
          py::gil_scoped_release release;
          r = cmd_eval(c);
        }
        return report_dict(r);
      },
      py::arg("config"), "Evaluate the sample dump for config.mode.");
  m.def("inspect", &inspect_file, py::arg("path"),
        "Human-readable summary of a container or manifest file.");
}
