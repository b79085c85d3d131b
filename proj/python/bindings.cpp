// Copyright 2026 The regsyn Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Python bindings: volumes as float32 numpy arrays (z, y, x), fields as
// (3, z, y, x) arrays ordered (dz, dy, dx).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "regsyn/metrics.hpp"
#include "regsyn/phantom.hpp"
#include "regsyn/registration.hpp"
#include "regsyn/trainer.hpp"

namespace py = pybind11;
using namespace regsyn;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Dims dims_of(const py::buffer_info& b, int offset = 0) {
  if (b.ndim != 3 + offset) throw DimensionError("expected a " + std::to_string(3 + offset) + "-d array");
  return {static_cast<int>(b.shape[offset]), static_cast<int>(b.shape[offset + 1]),
          static_cast<int>(b.shape[offset + 2])};
}

template <class T>
std::vector<T> copy_out(const py::buffer_info& b) {
  const T* p = static_cast<const T*>(b.ptr);
  return std::vector<T>(p, p + b.size);
}

py::array_t<float> to_array(std::span<const float> v, std::vector<py::ssize_t> shape) {
  py::array_t<float> out(shape);
  std::memcpy(out.mutable_data(), v.data(), v.size() * sizeof(float));
  return out;
}

py::array_t<float> volume_array(const Volume& v) { return to_array(v.voxels(), {v.dims().d, v.dims().h, v.dims().w}); }

py::array_t<std::uint8_t> mask_array(const Mask& m) {
  py::array_t<std::uint8_t> out({m.dims().d, m.dims().h, m.dims().w});
  std::memcpy(out.mutable_data(), m.voxels().data(), m.voxels().size());
  return out;
}

py::array_t<float> field_array(const DeformationField& f) {
  return to_array(f.values(), {3, f.dims().d, f.dims().h, f.dims().w});
}

Units parse_units(const std::string& s) {
  if (s == "hu" || s == "HU") return Units::HU;
  if (s == "normalized") return Units::Normalized;
  throw ParameterError("units must be 'hu' or 'normalized'");
}

Volume make_volume(const FloatArray& a, const std::string& units) {
  const auto b = a.request();
  return Volume(dims_of(b), {}, copy_out<float>(b), parse_units(units), Modality::Source);
}

Mask make_mask(const ByteArray& a) {
  const auto b = a.request();
  return Mask(dims_of(b), copy_out<std::uint8_t>(b));
}

DeformationField make_field(const FloatArray& a) {
  const auto b = a.request();
  if (b.ndim != 4 || b.shape[0] != 3) throw DimensionError("field must have shape (3, D, H, W)");
  return DeformationField(dims_of(b, 1), copy_out<float>(b));
}

py::dict cohort_dict(const CohortReport& r) {
  auto ms = [](const MeanStd& m) { return py::make_tuple(m.mean, m.std); };
  py::list cases;
  for (const auto& c : r.cases) {
    cases.append(py::dict(py::arg("id") = c.id, py::arg("mae_hu") = c.mae,
                          py::arg("psnr_db") = c.psnr.infinite ? py::float_(INFINITY) : py::float_(c.psnr.db),
                          py::arg("ssim") = c.ssim));
  }
  return py::dict(py::arg("cases") = cases, py::arg("mae_hu") = ms(r.mae), py::arg("psnr_db") = ms(r.psnr),
                  py::arg("ssim") = ms(r.ssim));
}

class Synthesizer {
 public:
  explicit Synthesizer(const std::filesystem::path& checkpoint) : ck_(load_checkpoint(checkpoint)) {}

  py::array_t<float> infer_hu(const FloatArray& source_hu) {
    const Volume v = make_volume(source_hu, "hu");
    InferInfo info;
    Volume out = [&] {
      py::gil_scoped_release release;
      return infer(ck_, v, &info);
    }();
    touched_ = info.touched;
    return volume_array(out);
  }

  std::string variant() const { return to_string(ck_.meta.variant); }
  const std::set<std::string>& touched() const { return touched_; }

 private:
  LoadedCheckpoint ck_;
  std::set<std::string> touched_;
};

}  // namespace

PYBIND11_MODULE(_regsyn, m) {
  m.doc() = "Registration-guided cross-modality 3D synthesis";

  py::register_exception<Error>(m, "RegsynError", PyExc_RuntimeError);

  m.def("load_volume", [](const std::filesystem::path& p) {
    const Volume v = load_volume(p);
    return py::make_tuple(volume_array(v), to_string(v.units()));
  }, py::arg("path"), "Returns (voxels, units).");
  m.def("save_volume", [](const FloatArray& a, const std::filesystem::path& p, const std::string& units) {
    save_volume(make_volume(a, units), p);
  }, py::arg("voxels"), py::arg("path"), py::arg("units") = "hu");

  m.def("phantom_pair", [](int size, std::uint64_t seed, double amplitude, double sigma) {
    PhantomConfig cfg;
    cfg.dims = {size, size, size};
    cfg.misalign_amplitude = amplitude;
    cfg.misalign_sigma = sigma;
    cfg.validate();
    const PhantomPair p = generate_phantom_pair(cfg, seed);
    return py::dict(py::arg("source") = volume_array(p.source),
                    py::arg("target_aligned") = volume_array(p.target_aligned),
                    py::arg("target_misaligned") = volume_array(p.target_misaligned),
                    py::arg("field") = field_array(p.true_field), py::arg("mask") = mask_array(p.mask));
  }, py::arg("size") = 64, py::arg("seed") = 0, py::arg("amplitude") = 3.0, py::arg("sigma") = 8.0,
     "Normalized phantom volumes, body mask and the true misalignment field.");

  m.def("warp", [](const FloatArray& v, const FloatArray& field) {
    return volume_array(warp(make_volume(v, "normalized"), make_field(field)));
  }, py::arg("volume"), py::arg("field"), "Trilinear resampling at p + field(p), clamped at the border.");
  m.def("smoothness_loss", [](const FloatArray& field) { return smoothness_loss(make_field(field)); },
        py::arg("field"));

  m.def("mae", [](const FloatArray& p, const FloatArray& r, const ByteArray& mask) {
    return mae_masked(make_volume(p, "hu"), make_volume(r, "hu"), make_mask(mask));
  }, py::arg("pred"), py::arg("ref"), py::arg("mask"));
  m.def("psnr", [](const FloatArray& p, const FloatArray& r, const ByteArray& mask, double range) {
    const Psnr v = psnr_masked(make_volume(p, "hu"), make_volume(r, "hu"), make_mask(mask), range);
    return v.infinite ? INFINITY : v.db;
  }, py::arg("pred"), py::arg("ref"), py::arg("mask"), py::arg("data_range") = kDefaultDataRangeHu);
  m.def("ssim", [](const FloatArray& p, const FloatArray& r, const ByteArray& mask, double range) {
    return ssim_masked(make_volume(p, "hu"), make_volume(r, "hu"), make_mask(mask), range);
  }, py::arg("pred"), py::arg("ref"), py::arg("mask"), py::arg("data_range") = kDefaultDataRangeHu);

  m.def("write_phantom_dataset", [](const std::filesystem::path& out, int size, std::uint64_t seed, int train,
                                    int val, int test) {
    PhantomConfig cfg;
    cfg.dims = {size, size, size};
    write_phantom_dataset(out, cfg, seed, SplitCounts{train, val, test});
  }, py::arg("out"), py::arg("size") = 32, py::arg("seed") = 7, py::arg("train") = 10, py::arg("val") = 2,
     py::arg("test") = 5);

  m.def("train", [](const std::filesystem::path& config, bool quiet) {
    TrainConfig cfg = load_train_config(config);
    cfg.quiet = quiet;
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(cfg);
    }
    return py::dict(py::arg("run_dir") = r.run_dir, py::arg("checkpoint") = r.checkpoint,
                    py::arg("iterations") = r.iterations, py::arg("val_mae_hu") = r.val_mae,
                    py::arg("first_total") = r.first.total, py::arg("last_total") = r.last.total);
  }, py::arg("config"), py::arg("quiet") = true, "Trains from a key=value config file.");

  m.def("evaluate", [](const std::filesystem::path& pred, const std::filesystem::path& ref,
                       const std::filesystem::path& mask) { return cohort_dict(evaluate_dataset(pred, ref, mask)); },
        py::arg("pred"), py::arg("ref"), py::arg("mask"));

  py::class_<Synthesizer>(m, "Synthesizer")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def("infer", &Synthesizer::infer_hu, py::arg("source_hu"), "Source-to-target translation of an HU volume.")
      .def_property_readonly("variant", &Synthesizer::variant)
      .def_property_readonly("touched", &Synthesizer::touched,
                             "Parameter tensors read by the last infer() call.");
}
