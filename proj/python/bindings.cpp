#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "awdlab/adversarial.hpp"
#include "awdlab/config.hpp"
#include "awdlab/dog.hpp"
#include "awdlab/error.hpp"
#include "awdlab/experiment.hpp"
#include "awdlab/gradcheck.hpp"
#include "awdlab/grid.hpp"
#include "awdlab/model.hpp"
#include "awdlab/optimizer.hpp"
#include "awdlab/pruning.hpp"

namespace py = pybind11;
using namespace awdlab;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::array_t<double> to_array(const Tensor& t) {
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::array_t<double> grad_array(const Tensor& t) {
  if (!t.has_grad()) throw StateError("no gradient recorded for this parameter");
  py::array_t<double> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.grad().begin(), t.grad().end(), out.mutable_data());
  return out;
}

py::dict step_dict(const StepReport& r) {
  py::dict d;
  d["step"] = r.step;
  d["lr"] = r.lr;
  d["weight_norm"] = r.weight_norm;
  d["grad_norm"] = r.grad_norm;
  d["lambda_raw"] = r.lambda_raw;
  d["lambda_applied"] = r.lambda_applied;
  d["theta_min"] = r.theta_min;
  d["theta_max"] = r.theta_max;
  return d;
}

py::dict record_dict(const MetricsRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["train_xent"] = r.train_xent;
  d["train_acc"] = r.train_acc;
  d["val_acc"] = r.val_acc;
  d["test_acc"] = r.test_acc;
  d["robust_val_acc"] = r.robust_val_acc ? py::cast(*r.robust_val_acc) : py::none();
  d["weight_norm"] = r.weight_norm;
  d["lambda_mean"] = r.lambda_mean;
  d["lr"] = r.lr;
  return d;
}

py::tuple dataset_tuple(const Dataset& d) { return py::make_tuple(to_array(d.inputs), d.labels); }

}  // namespace

PYBIND11_MODULE(_awdlab, m) {
  m.doc() = "Adaptive weight decay: autodiff core, optimizers, attacks and experiment harness.";

  static py::exception<Error> base(m, "Error", PyExc_RuntimeError);
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<IndexError>(m, "IndexError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<StateError>(m, "StateError", base.ptr());
  py::register_exception<RangeError>(m, "RangeError", base.ptr());
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());

  py::class_<Model>(m, "Model")
      .def_static("mlp", &Model::mlp, py::arg("layer_sizes"), py::arg("seed"))
      .def_static("small_cnn", &Model::small_cnn, py::arg("in_channels"), py::arg("height"), py::arg("width"),
                  py::arg("channels"), py::arg("classes"), py::arg("seed"))
      .def("logits", [](const Model& md, const Array& x) { return to_array(md.logits(to_tensor(x))); })
      .def("predict", [](const Model& md, const Array& x) { return md.predict(to_tensor(x)); })
      .def("loss", [](const Model& md, const Array& x, const std::vector<int>& y) { return md.loss(to_tensor(x), y); })
      .def("loss_and_grad",
           [](Model& md, const Array& x, const std::vector<int>& y) { return md.loss_and_grad(to_tensor(x), y); },
           "Mean cross-entropy; stores parameter gradients.")
      .def("input_gradient",
           [](const Model& md, const Array& x, const std::vector<int>& y) {
             return to_array(md.input_gradient(to_tensor(x), y));
           })
      .def_property_readonly("param_names",
                             [](const Model& md) {
                               std::vector<std::string> names;
                               for (const auto& p : md.params()) names.push_back(p.name);
                               return names;
                             })
      .def("param", [](const Model& md, const std::string& name) { return to_array(md.param(name).tensor); })
      .def("grad", [](const Model& md, const std::string& name) { return grad_array(md.param(name).tensor); })
      .def("set_param",
           [](Model& md, const std::string& name, const Array& v) {
             auto& t = md.param(name).tensor;
             Tensor nt = to_tensor(v);
             if (nt.shape() != t.shape())
               throw DimensionError("set_param: expected " + shape_str(t.shape()) + ", got " + shape_str(nt.shape()));
             t = std::move(nt);
           })
      .def_property_readonly("parameter_count", &Model::parameter_count)
      .def_property_readonly("num_classes", &Model::num_classes)
      .def("checksum", [](const Model& md) { return param_checksum(md); })
      .def("copy", [](const Model& md) { return Model(md); });

  m.def("param_l2_norm", &param_l2_norm);
  m.def("grad_l2_norm", &grad_l2_norm);
  m.def("save_model", [](const std::filesystem::path& path, const Model& md) { save_checkpoint(path, {md, {}, 0, 0.0}); });
  m.def("load_model", [](const std::filesystem::path& path) { return load_checkpoint(path).model; });

  m.def(
      "finite_difference_check",
      [](const Model& md, const Array& x, const std::vector<int>& y, double h, double tol, std::size_t samples) {
        const auto r = finite_difference_check(md, to_tensor(x), y, h, tol, samples);
        py::dict out;
        for (const auto& e : r.tensors) out[py::str(e.name)] = e.max_rel_error;
        return py::make_tuple(r.all_pass(), out);
      },
      py::arg("model"), py::arg("inputs"), py::arg("labels"), py::arg("h") = 1e-5, py::arg("tol") = 1e-4,
      py::arg("samples") = 100, "Returns (all_pass, {tensor: max relative error}).");

  m.def("cosine_lr", &cosine_lr, py::arg("step"), py::arg("total_steps"), py::arg("base_lr"));
  m.def("awd_lambda", &awd_lambda, py::arg("grad_norm"), py::arg("weight_norm"), py::arg("dog"));
  m.def("adadecay_theta", &adadecay_theta, py::arg("normalized_grad"), py::arg("alpha"));

  py::class_<Optimizer>(m, "Optimizer")
      .def_static(
          "fixed",
          [](const Model& md, double lr, std::int64_t total_steps, double weight_decay, double momentum) {
            return Optimizer(FixedDecay{weight_decay}, make_state(md, lr, total_steps, momentum));
          },
          py::arg("model"), py::arg("lr"), py::arg("total_steps"), py::arg("weight_decay"), py::arg("momentum") = 0.9)
      .def_static(
          "adaptive",
          [](const Model& md, double lr, std::int64_t total_steps, double dog, double momentum) {
            return Optimizer(AdaptiveDecay{dog, 0.1, 0.9}, make_state(md, lr, total_steps, momentum));
          },
          py::arg("model"), py::arg("lr"), py::arg("total_steps"), py::arg("dog") = 0.016, py::arg("momentum") = 0.9)
      .def_static(
          "adadecay",
          [](const Model& md, double lr, std::int64_t total_steps, double weight_decay, double alpha,
             double momentum) {
            return Optimizer(AdaDecay{weight_decay, alpha}, make_state(md, lr, total_steps, momentum));
          },
          py::arg("model"), py::arg("lr"), py::arg("total_steps"), py::arg("weight_decay"), py::arg("alpha") = 1.0,
          py::arg("momentum") = 0.9)
      .def("step", [](Optimizer& o, Model& md) { return step_dict(o.step(md)); }, "Step on the cosine schedule.")
      .def("step_with_lr", [](Optimizer& o, Model& md, double lr) { return step_dict(o.step(md, lr)); })
      .def_property_readonly("lambda_bar", [](const Optimizer& o) { return o.state().lambda_bar; })
      .def_property_readonly("steps_taken", [](const Optimizer& o) { return o.state().step; })
      .def_property_readonly("mode", [](const Optimizer& o) { return mode_name(o.mode()); });

  m.def("dog_value",
        [](double wd, double wn, double gn) -> py::object {
          const auto v = dog_value(wd, wn, gn);
          return v ? py::cast(*v) : py::none();
        },
        py::arg("weight_decay"), py::arg("weight_norm"), py::arg("grad_norm"));
  m.def(
      "estimate_dog",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& rows, double tol, std::size_t patience) {
        if (rows.ndim() != 2 || rows.shape(1) != 6)
          throw DimensionError("estimate_dog: expected an n x 6 array (step, epoch, weight_norm, grad_norm, lambda_eff, xent)");
        DogTrace trace;
        auto r = rows.unchecked<2>();
        for (py::ssize_t i = 0; i < rows.shape(0); ++i)
          trace.append({static_cast<std::int64_t>(r(i, 0)), static_cast<std::int64_t>(r(i, 1)), r(i, 2), r(i, 3),
                        r(i, 4), r(i, 5)});
        return estimate_dog(trace, tol, patience);
      },
      py::arg("trace"), py::arg("tol") = 1e-3, py::arg("patience") = 5,
      "Plateau-averaged DoG of a trace array as returned by run_experiment.");
  m.def("plateau_epoch", &plateau_epoch, py::arg("epoch_losses"), py::arg("tol") = 1e-3, py::arg("patience") = 5);

  m.def(
      "flip_labels_symmetric",
      [](const std::vector<int>& labels, std::size_t classes, double rate, std::uint64_t seed) {
        auto r = flip_labels_symmetric(labels, classes, rate, seed);
        return py::make_tuple(r.labels, r.spec.flipped_indices);
      },
      py::arg("labels"), py::arg("num_classes"), py::arg("rate"), py::arg("seed"),
      "Returns (noisy_labels, flipped_indices).");
  m.def(
      "synth_clusters",
      [](std::size_t c, std::size_t dim, std::size_t n, double s, std::uint64_t seed) {
        return dataset_tuple(synth_clusters(c, dim, n, s, seed));
      },
      py::arg("classes"), py::arg("dim"), py::arg("per_class"), py::arg("separation"), py::arg("seed"));
  m.def(
      "synth_images",
      [](std::size_t c, std::size_t h, std::size_t w, std::size_t n, std::uint64_t seed) {
        return dataset_tuple(synth_images(c, h, w, n, seed));
      },
      py::arg("classes"), py::arg("height"), py::arg("width"), py::arg("per_class"), py::arg("seed"));
  m.def(
      "pad_and_crop",
      [](const Array& x, std::size_t pad, bool flip, std::uint64_t seed) {
        return to_array(pad_and_crop(to_tensor(x), pad, flip, seed));
      },
      py::arg("images"), py::arg("pad") = 4, py::arg("flip") = true, py::arg("seed") = 0);

  m.def(
      "pgd_attack",
      [](const Model& md, const Array& x, const std::vector<int>& y, double eps, double step, int steps,
         bool random_start, std::uint64_t seed) {
        AttackConfig cfg;
        cfg.epsilon = eps;
        cfg.step_size = step;
        cfg.steps = steps;
        cfg.random_start = random_start;
        return to_array(pgd_attack(md, to_tensor(x), y, cfg, seed));
      },
      py::arg("model"), py::arg("inputs"), py::arg("labels"), py::arg("epsilon") = 8.0 / 255.0,
      py::arg("step_size") = 2.0 / 255.0, py::arg("steps") = 7, py::arg("random_start") = true, py::arg("seed") = 0);

  m.def(
      "global_l1_prune",
      [](const Model& md, double s, bool include_biases) {
        auto r = global_l1_prune(md, s, include_biases);
        return py::make_tuple(std::move(r.model), r.report.pruned);
      },
      py::arg("model"), py::arg("sparsity"), py::arg("include_biases") = false, "Returns (pruned_model, pruned_count).");

  m.def("geometric_sequence", &geometric_sequence, py::arg("start"), py::arg("end"), py::arg("length"));
  m.def(
      "normalize_config", [](const std::string& text) { return config_to_text(parse_config(text)); },
      "Parses config text and returns its canonical form with every key.");
  m.def(
      "run_experiment",
      [](const std::string& text) {
        const auto cfg = parse_config(text);
        RunResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(cfg);
        }
        py::dict out;
        py::list history;
        for (const auto& h : r.history) history.append(record_dict(h));
        out["history"] = history;
        out["best"] = record_dict(r.best);
        out["aborted"] = r.aborted;
        out["abort_reason"] = r.abort_reason;
        out["train_acc_flipped"] = r.train_acc_flipped;
        out["train_acc_clean"] = r.train_acc_clean;
        out["max_ratio_error"] = r.max_ratio_error;
        py::array_t<double> trace(std::vector<py::ssize_t>{static_cast<py::ssize_t>(r.trace.rows().size()), 6});
        auto t = trace.mutable_unchecked<2>();
        for (std::size_t i = 0; i < r.trace.rows().size(); ++i) {
          const auto& row = r.trace.rows()[i];
          const double v[6] = {static_cast<double>(row.step), static_cast<double>(row.epoch), row.weight_norm,
                               row.grad_norm, row.lambda_eff, row.xent};
          for (int j = 0; j < 6; ++j) t(i, j) = v[j];
        }
        out["trace"] = trace;
        out["final_model"] = r.final_model;
        out["best_model"] = r.best_model;
        return out;
      },
      py::arg("config_text"), "Runs one experiment from config text and returns its metrics.");
}
