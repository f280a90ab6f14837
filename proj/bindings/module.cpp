// Python bindings over the registration core. Arrays cross the boundary as
// numpy float64; volumes are [D,H,W] or [C,D,H,W], fields are [3,D,H,W].

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "spikewarp/checkpoint.hpp"
#include "spikewarp/conversion.hpp"
#include "spikewarp/deform.hpp"
#include "spikewarp/energy.hpp"
#include "spikewarp/losses.hpp"
#include "spikewarp/metrics.hpp"
#include "spikewarp/stats.hpp"
#include "spikewarp/synthetic.hpp"
#include "spikewarp/trainer.hpp"
#include "spikewarp/volume_io.hpp"

namespace py = pybind11;
using namespace spikewarp;

namespace {

using Arr = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor<double> to_tensor(const Arr& a) {
  Shape shape;
  if (a.ndim() == 3) {
    shape = Shape{1, a.shape(0), a.shape(1), a.shape(2)};
  } else if (a.ndim() == 4) {
    shape = Shape{a.shape(0), a.shape(1), a.shape(2), a.shape(3)};
  } else {
    throw std::invalid_argument("expected a 3d or 4d array");
  }
  Tensor<double> t(shape);
  std::copy(a.data(), a.data() + t.numel(), t.data.data());
  return t;
}

Arr from_tensor(const Tensor<double>& t) {
  if (t.shape.size() != 4) throw std::invalid_argument("expected a rank-4 tensor");
  Arr a({t.shape[0], t.shape[1], t.shape[2], t.shape[3]});
  std::copy(t.data.data(), t.data.data() + t.numel(), a.mutable_data());
  return a;
}

}  // namespace

PYBIND11_MODULE(_spikewarp, m) {
  m.doc() = "spiking deformable registration core";

  // deformation
  m.def(
      "warp_trilinear",
      [](const Arr& moving, const Arr& field) {
        return from_tensor(warp_trilinear(to_tensor(moving), to_tensor(field)));
      },
      py::arg("moving"), py::arg("field"));
  m.def(
      "warp_nearest",
      [](const Arr& labels, const Arr& field) {
        return from_tensor(warp_nearest(to_tensor(labels), to_tensor(field)));
      },
      py::arg("labels"), py::arg("field"));
  m.def(
      "svf_integrate",
      [](const Arr& velocity, int squarings) {
        return from_tensor(svf_integrate(to_tensor(velocity), squarings));
      },
      py::arg("velocity"), py::arg("squarings") = 7);
  m.def(
      "jacobian_analysis",
      [](const Arr& field) {
        auto rep = jacobian_analysis(to_tensor(field));
        py::dict d;
        d["fold_percent"] = rep.fold_percent;
        d["sdlogj"] = rep.sdlogj;
        d["detj"] = from_tensor(rep.detj);
        return d;
      },
      py::arg("field"));

  // losses and metrics
  m.def(
      "image_ncc",
      [](const Arr& fixed, const Arr& warped, std::int64_t window, double eps) {
        return image_ncc(to_tensor(fixed), to_tensor(warped), window, eps);
      },
      py::arg("fixed"), py::arg("warped"), py::arg("window") = 9, py::arg("eps") = 1e-8);
  m.def(
      "dice",
      [](const Arr& a, const Arr& b, const std::vector<std::int64_t>& labels) {
        auto r = dice_per_label(to_tensor(a), to_tensor(b), labels);
        py::dict d;
        d["mean"] = r.mean;
        py::dict per;
        for (auto& [lab, v] : r.per_label) per[py::int_(lab)] = v;
        d["per_label"] = per;
        return d;
      },
      py::arg("a"), py::arg("b"), py::arg("labels"));
  m.def(
      "hd95",
      [](const Arr& a, const Arr& b) -> py::object {
        auto h = hd95(to_tensor(a), to_tensor(b));
        if (!h) return py::none();
        return py::float_(*h);
      },
      py::arg("a"), py::arg("b"));

  // statistics
  m.def("sign_flip_test", &sign_flip_test, py::arg("deltas"), py::arg("n_flips") = 20000,
        py::arg("seed") = 0);
  m.def(
      "wilcoxon",
      [](const std::vector<double>& deltas) {
        auto r = wilcoxon_signed_rank(deltas);
        py::dict d;
        d["w"] = r.w;
        d["p"] = r.p;
        d["degenerate"] = r.degenerate;
        d["n_used"] = r.n_used;
        return d;
      },
      py::arg("deltas"));
  m.def("bootstrap_ci", &bootstrap_ci, py::arg("deltas"), py::arg("n_boot") = 10000,
        py::arg("level") = 0.95, py::arg("seed") = 0);
  m.def(
      "effect_size_dz",
      [](const std::vector<double>& deltas) {
        auto e = effect_size_dz(deltas);
        return py::make_tuple(e.dz, e.defined);
      },
      py::arg("deltas"));
  m.def("percentile", &percentile, py::arg("values"), py::arg("p"));

  // energy
  m.def(
      "energy_ratio_projected",
      [](double macs, double synops) { return energy_ratio_projected(macs, synops).R; },
      py::arg("ann_macs"), py::arg("snn_synops"));
  m.def(
      "energy_ratio_analytical",
      [](double rho_bar, std::int64_t T) { return energy_ratio_analytical(rho_bar, T).R; },
      py::arg("rho_bar"), py::arg("timesteps"));

  // synthetic data
  m.def(
      "generate_pair",
      [](std::int64_t dim, std::int64_t classes, double amplitude, double smoothness,
         std::uint64_t seed) {
        SyntheticConfig cfg;
        cfg.dim = dim;
        cfg.classes = classes;
        cfg.amplitude = amplitude;
        cfg.smoothness = smoothness;
        cfg.seed = seed;
        auto p = generate_pair<double>(cfg);
        py::dict d;
        d["fixed"] = from_tensor(p.fixed);
        d["moving"] = from_tensor(p.moving);
        d["fixed_labels"] = from_tensor(p.fixed_labels);
        d["moving_labels"] = from_tensor(p.moving_labels);
        d["velocity"] = from_tensor(p.velocity);
        d["displacement"] = from_tensor(p.displacement);
        return d;
      },
      py::arg("dim") = 32, py::arg("classes") = 4, py::arg("amplitude") = 3.0,
      py::arg("smoothness") = 1.5, py::arg("seed") = 0);

  // volume io
  m.def(
      "read_nifti1",
      [](const std::string& path) {
        auto v = read_nifti1(path);
        py::dict d;
        d["data"] = from_tensor(v.data);
        d["spacing"] = py::make_tuple(v.spacing[0], v.spacing[1], v.spacing[2]);
        return d;
      },
      py::arg("path"));
  m.def(
      "write_nifti1",
      [](const std::string& path, const Arr& vol) { write_nifti1(path, to_tensor(vol)); },
      py::arg("path"), py::arg("volume"));
  m.def(
      "preprocess",
      [](const Arr& vol, double lo, double hi) {
        return from_tensor(preprocess(to_tensor(vol), lo, hi));
      },
      py::arg("volume"), py::arg("lo_pct") = 0.5, py::arg("hi_pct") = 99.5);

  // model inference from a checkpoint
  m.def(
      "register_pair",
      [](const std::string& ckpt, const Arr& fixed, const Arr& moving) {
        auto net = load_checkpoint<double>(ckpt);
        Tape<double> tape;
        auto res = forward(net, tape, to_tensor(fixed), to_tensor(moving));
        py::dict d;
        d["field"] = from_tensor(tape.value(res.field));
        d["rates"] = res.rates;
        return d;
      },
      py::arg("checkpoint"), py::arg("fixed"), py::arg("moving"));
  m.def(
      "checkpoint_info",
      [](const std::string& path) {
        CheckpointMeta meta;
        auto net = load_checkpoint<double>(path, &meta);
        py::dict d;
        d["flavor"] = meta.flavor;
        d["phase"] = meta.phase;
        d["seed"] = meta.seed;
        d["timesteps"] = net.spec.timesteps;
        d["encoder_channels"] = net.spec.encoder_channels;
        d["decoder_channels"] = net.spec.decoder_channels;
        return d;
      },
      py::arg("path"));
}
