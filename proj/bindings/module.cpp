#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dpgen/accountant.hpp"
#include "dpgen/checkpoint.hpp"
#include "dpgen/data.hpp"
#include "dpgen/metrics.hpp"
#include "dpgen/sanitizer.hpp"

namespace py = pybind11;
using namespace dpgen;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<int64_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<size_t>(i)] = a.shape(i);
  std::vector<double> data(a.data(), a.data() + a.size());
  return Tensor(shape, std::move(data));
}

py::array_t<double> array_from_tensor(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
  py::array_t<double> a(shape);
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_dpgen, m) {
  m.doc() = "differentially private generative training core";

  py::class_<RngStream>(m, "RngStream")
      .def(py::init<uint64_t, uint64_t>(), py::arg("seed"), py::arg("position") = 0)
      .def("substream", [](const RngStream& s, const std::string& name) { return s.substream(name); })
      .def("uniform", &RngStream::uniform)
      .def("gaussian", &RngStream::gaussian, py::arg("mean") = 0.0, py::arg("std") = 1.0)
      .def_property_readonly("seed", &RngStream::seed)
      .def_property_readonly("position", &RngStream::position);

  m.def("gaussian_sample",
        [](const std::vector<int64_t>& shape, double mean, double std, RngStream& rng) {
          return array_from_tensor(gaussian_sample(shape, mean, std, rng));
        },
        py::arg("shape"), py::arg("mean"), py::arg("std"), py::arg("rng"));

  m.def("l2_norm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
          return l2_norm(tensor_from_array(a));
        });

  m.def("clip_to_norm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& g, double c) {
          return array_from_tensor(clip_to_norm(tensor_from_array(g), c));
        },
        py::arg("g"), py::arg("c"));

  py::class_<ClipConfig>(m, "ClipConfig")
      .def(py::init<double, double>(), py::arg("c1") = 1.0, py::arg("c2") = 1.0)
      .def_readwrite("c1", &ClipConfig::c1)
      .def_readwrite("c2", &ClipConfig::c2);

  py::enum_<EfMode>(m, "EfMode")
      .value("PER_SOURCE", EfMode::PerSource)
      .value("AGGREGATE", EfMode::Aggregate);

  py::class_<EfState>(m, "EfState")
      .def_static("zeros", &EfState::zeros, py::arg("shape"), py::arg("mode") = EfMode::PerSource)
      .def_readonly("step", &EfState::step)
      .def("error",
           [](const EfState& s, int source) {
             return array_from_tensor(s.errors.at(static_cast<size_t>(source)));
           },
           py::arg("source"));

  m.def("ef_step",
        [](EfState& state,
           const std::vector<py::array_t<double, py::array::c_style | py::array::forcecast>>& grads,
           const ClipConfig& clip) {
          if (grads.size() > kNumSources) throw std::invalid_argument("at most three sources");
          SourceGrads sg;
          for (size_t i = 0; i < grads.size(); ++i) sg[i] = tensor_from_array(grads[i]);
          return array_from_tensor(ef_step(state, sg, clip));
        },
        py::arg("state"), py::arg("grads"), py::arg("clip"));

  m.def("dp_noise",
        [](const std::vector<int64_t>& shape, double sigma, const ClipConfig& clip, RngStream& rng) {
          return array_from_tensor(dp_noise(shape, DpNoiseConfig{sigma, false}, clip, rng));
        },
        py::arg("shape"), py::arg("sigma"), py::arg("clip"), py::arg("rng"));

  // accountant
  m.def("rdp_gaussian", &rdp_gaussian, py::arg("order"), py::arg("sigma"), py::arg("sensitivity"));
  m.def("rdp_subsampled_gaussian", &rdp_subsampled_gaussian, py::arg("order"), py::arg("sigma"),
        py::arg("gamma"));
  m.def("default_order_grid", &default_order_grid);

  py::class_<RdpLedger>(m, "RdpLedger")
      .def_readonly("orders", &RdpLedger::orders)
      .def_readonly("eps_per_order", &RdpLedger::eps_per_order)
      .def_readonly("gamma", &RdpLedger::gamma)
      .def_readonly("sigma", &RdpLedger::sigma)
      .def_readonly("steps", &RdpLedger::steps);

  m.def("make_ledger", &make_ledger, py::arg("orders"), py::arg("sigma"), py::arg("gamma"));
  m.def("step_account", &step_account, py::arg("ledger"));
  m.def("to_eps_delta", &to_eps_delta, py::arg("ledger"), py::arg("delta"));
  m.def("steps_for_budget",
        [](double eps, double delta, double sigma, double gamma, const std::vector<double>& orders) {
          return steps_for_budget(DpBudget{eps, delta}, sigma, gamma, orders);
        },
        py::arg("eps"), py::arg("delta"), py::arg("sigma"), py::arg("gamma"), py::arg("orders"));

  // metrics
  m.def("frechet_distance",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& mean_a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& cov_a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& mean_b,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& cov_b) {
          FeatureStats a{std::vector<double>(mean_a.data(), mean_a.data() + mean_a.size()),
                         tensor_from_array(cov_a)};
          FeatureStats b{std::vector<double>(mean_b.data(), mean_b.data() + mean_b.size()),
                         tensor_from_array(cov_b)};
          return frechet_distance(a, b);
        },
        py::arg("mean_a"), py::arg("cov_a"), py::arg("mean_b"), py::arg("cov_b"));

  m.def("feature_stats",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& features) {
          FeatureStats st = feature_stats(tensor_from_array(features));
          return py::make_tuple(py::array_t<double>(static_cast<py::ssize_t>(st.mean.size()),
                                                    st.mean.data()),
                                array_from_tensor(st.cov));
        },
        py::arg("features"));

  // data
  m.def("synth_dataset",
        [](int classes, int per_class, int64_t h, int64_t w, uint64_t seed) {
          LabeledDataset ds = synth_dataset(classes, per_class, h, w, seed);
          return py::make_tuple(array_from_tensor(ds.images), ds.labels);
        },
        py::arg("classes"), py::arg("per_class"), py::arg("h"), py::arg("w"), py::arg("seed"));
  m.def("read_idx_images",
        [](const std::string& path) { return array_from_tensor(read_idx_images(path)); });
  m.def("read_idx_labels", &read_idx_labels);
  m.def("write_idx_images",
        [](const std::string& path,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& images) {
          write_idx_images(path, tensor_from_array(images));
        });
  m.def("write_idx_labels", &write_idx_labels);

  // public generator sampling
  m.def("sample_from_checkpoint",
        [](const std::string& path, int64_t count, uint64_t seed) {
          PublicGenerator pg = load_public_generator(path);
          GeneratedBatch gb = sample_generator(pg.spec, pg.params, pg.noise, count, seed);
          return py::make_tuple(array_from_tensor(gb.images), gb.labels);
        },
        py::arg("path"), py::arg("count"), py::arg("seed"));

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<FormatError>(m, "FormatError");
  py::register_exception<NumericError>(m, "NumericError");
}
