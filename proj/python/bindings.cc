// Copyright 2026 The AdaDFQ Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "adadfq/adaptability.h"
#include "adadfq/checkpoint.h"
#include "adadfq/commands.h"
#include "adadfq/config.h"
#include "adadfq/data.h"
#include "adadfq/errors.h"
#include "adadfq/quantizer.h"

namespace py = pybind11;
using namespace adadfq;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

Array matrix_to_array(const std::vector<std::vector<double>>& m) {
  const auto n = static_cast<py::ssize_t>(m.size());
  Array out({n, n});
  auto view = out.mutable_unchecked<2>();
  for (py::ssize_t i = 0; i < n; ++i)
    for (py::ssize_t j = 0; j < n; ++j) view(i, j) = m[i][j];
  return out;
}

py::dict dataset_dict(const Dataset& ds) {
  py::dict d;
  d["train_x"] = to_array(ds.train_x);
  d["train_y"] = ds.train_y;
  d["test_x"] = to_array(ds.test_x);
  d["test_y"] = ds.test_y;
  d["num_classes"] = ds.num_classes;
  d["provenance"] = ds.provenance;
  return d;
}

// Checkpointed network held by Python; inference runs in eval mode.
class Network {
 public:
  explicit Network(MlpNetwork net, CheckpointMetadata meta)
      : net_(std::make_shared<MlpNetwork>(std::move(net))), meta_(std::move(meta)) {}

  Array logits(const Array& x) {
    NoGradGuard no_grad;
    net_->set_mode(Mode::kEval);
    return to_array(net_->forward(to_tensor(x)));
  }
  std::vector<int> predict(const Array& x) { return adadfq::predict(*net_, to_tensor(x)); }
  std::size_t input_dim() const { return net_->input_dim(); }
  std::size_t output_dim() const { return net_->output_dim(); }
  const CheckpointMetadata& metadata() const { return meta_; }

 private:
  std::shared_ptr<MlpNetwork> net_;
  CheckpointMetadata meta_;
};

}  // namespace

PYBIND11_MODULE(_adadfq, m) {
  m.doc() = "Data-free quantization lab: quantizer, adaptability metrics and commands";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

  m.def("quantize_value", &quantize_value, py::arg("theta"), py::arg("range_min"),
        py::arg("range_max"), py::arg("bits"),
        "Integer code of theta, or None when the range is degenerate.");
  m.def("dequantize_value", &dequantize_value, py::arg("code"), py::arg("range_min"),
        py::arg("range_max"), py::arg("bits"));
  m.def(
      "fake_quant",
      [](const Array& x, double lo, double hi, int bits) {
        return to_array(fake_quant(to_tensor(x), lo, hi, bits));
      },
      py::arg("x"), py::arg("range_min"), py::arg("range_max"), py::arg("bits"));

  m.def(
      "entropy_from_logits",
      [](const Array& logits) { return to_array(entropy_from_logits(to_tensor(logits))); },
      py::arg("logits"), "Row entropies of softmax(logits), in nats.");
  m.def(
      "normalize_entropy",
      [](const Array& h, std::size_t c, double base) {
        return to_array(normalize_entropy(to_tensor(h), c, base));
      },
      py::arg("h_info"), py::arg("num_classes"), py::arg("log_base") = std::numbers::e);
  m.def(
      "disagreement_vector",
      [](const Array& zp, const Array& zq) {
        return to_array(disagreement_vector(to_tensor(zp), to_tensor(zq)));
      },
      py::arg("z_p"), py::arg("z_q"));
  m.def(
      "pds_similarity",
      [](const Array& zp, const Array& zq) {
        return matrix_to_array(pds_similarity(to_tensor(zp), to_tensor(zq)));
      },
      py::arg("z_p"), py::arg("z_q"), "Pairwise l1 distances between p_ds rows.");

  m.def(
      "make_blobs",
      [](std::size_t c, std::size_t per_class, std::size_t dim, double spread,
         std::uint64_t seed) { return dataset_dict(make_blobs(c, per_class, dim, spread, seed)); },
      py::arg("num_classes"), py::arg("per_class"), py::arg("dim"), py::arg("spread"),
      py::arg("seed"));
  m.def(
      "make_rings",
      [](std::size_t c, std::size_t per_class, std::uint64_t seed) {
        return dataset_dict(make_rings(c, per_class, seed));
      },
      py::arg("num_classes"), py::arg("per_class"), py::arg("seed"));

  py::class_<RunConfig>(m, "RunConfig")
      .def_static(
          "parse", [](const std::string& text) { return parse_config(text); }, py::arg("text"))
      .def_static("load", &load_config, py::arg("path"))
      .def("__str__", [](const RunConfig& c) { return serialize_config(c); })
      .def_property_readonly("hash", [](const RunConfig& c) { return config_hash(c); })
      .def_readwrite("seed", &RunConfig::seed)
      .def_readwrite("out_dir", &RunConfig::out_dir)
      .def_property(
          "bits", [](const RunConfig& c) { return c.quant.bits; },
          [](RunConfig& c, int bits) {
            c.quant.bits = bits;
            c.validate();
          })
      .def_property(
          "epochs", [](const RunConfig& c) { return c.game.epochs; },
          [](RunConfig& c, std::size_t e) {
            c.game.epochs = e;
            c.validate();
          });

  py::class_<CheckpointMetadata>(m, "CheckpointMetadata")
      .def_readonly("kind", &CheckpointMetadata::kind)
      .def_readonly("seed", &CheckpointMetadata::seed)
      .def_readonly("epoch", &CheckpointMetadata::epoch)
      .def_readonly("config_hash", &CheckpointMetadata::config_hash)
      .def_readonly("role", &CheckpointMetadata::role);

  py::class_<Network>(m, "Network")
      .def_static(
          "load",
          [](const std::filesystem::path& path) {
            CheckpointMetadata meta;
            MlpNetwork net = load_network(path, &meta);
            return Network(std::move(net), meta);
          },
          py::arg("path"))
      .def("logits", &Network::logits, py::arg("x"))
      .def("predict", &Network::predict, py::arg("x"))
      .def_property_readonly("input_dim", &Network::input_dim)
      .def_property_readonly("output_dim", &Network::output_dim)
      .def_property_readonly("metadata", &Network::metadata);

  m.def(
      "train_teacher",
      [](const RunConfig& c) {
        const TeacherResult r = cmd_train_teacher(c);
        return py::dict(py::arg("train_accuracy") = r.train_accuracy,
                        py::arg("test_accuracy") = r.test_accuracy,
                        py::arg("final_loss") = r.final_loss);
      },
      py::arg("config"));
  m.def(
      "quantize",
      [](const RunConfig& c, const std::filesystem::path& ckpt) {
        const QuantizeResult r = cmd_quantize(c, ckpt);
        return py::dict(py::arg("bits") = r.bits,
                        py::arg("teacher_accuracy") = r.teacher_accuracy,
                        py::arg("student_accuracy") = r.student_accuracy);
      },
      py::arg("config"), py::arg("teacher_ckpt"));
  m.def(
      "dfq",
      [](const RunConfig& c, const std::filesystem::path& ckpt) {
        const DfqResult r = cmd_dfq(c, ckpt);
        return py::dict(py::arg("iterations") = r.trace.size(),
                        py::arg("equilibrium") = r.equilibrium.equilibrium,
                        py::arg("mean_delta_sum") = r.equilibrium.mean_delta_sum,
                        py::arg("mean_abs_delta_g") = r.equilibrium.mean_abs_delta_g,
                        py::arg("margin_fraction_first_quarter") =
                            r.margin_fraction_first_quarter,
                        py::arg("margin_fraction_last_quarter") =
                            r.margin_fraction_last_quarter);
      },
      py::arg("config"), py::arg("teacher_ckpt"));
  m.def(
      "evaluate",
      [](const RunConfig& c, const std::filesystem::path& ckpt) {
        const EvalResult r = cmd_eval(c, ckpt);
        return py::dict(py::arg("accuracy") = r.accuracy,
                        py::arg("per_class_accuracy") = r.per_class_accuracy,
                        py::arg("confusion") = r.confusion, py::arg("samples") = r.samples);
      },
      py::arg("config"), py::arg("ckpt"));
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<const char*> argv{"adadfq"};
        for (const auto& a : args) argv.push_back(a.c_str());
        py::gil_scoped_release release;
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Runs one CLI subcommand and returns its exit code.");
}
