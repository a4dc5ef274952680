#include "flagdit/apps.hpp"
#include "flagdit/checkpoint.hpp"
#include "flagdit/errors.hpp"
#include "flagdit/run_config.hpp"
#include "flagdit/sampler.hpp"
#include "flagdit/synthetic.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace flagdit;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

LatentFrameGrid to_grid(const FloatArray& a) {
    if (a.ndim() != 4) throw DimensionError("expected a [H, W, T, C] array");
    LatentFrameGrid g = LatentFrameGrid::zeros(a.shape(0), a.shape(1), a.shape(2), a.shape(3));
    auto dst = g.values.mutable_data();
    const float* src = a.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<real>(src[i]);
    return g;
}

FloatArray to_array(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    FloatArray out(shape);
    float* dst = out.mutable_data();
    auto src = t.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i]);
    return out;
}

SamplerConfig sampler_config(std::size_t steps, double shift, double cfg) {
    SamplerConfig c;
    c.steps = steps;
    c.shift = shift;
    c.cfg_scale = cfg;
    c.validate();
    return c;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Flow-based diffusion transformer core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<LayoutError>(m, "LayoutError", PyExc_ValueError);
    py::register_exception<StructureError>(m, "StructureError", PyExc_ValueError);
    py::register_exception<DimensionError>(m, "DimensionError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_IOError);

    m.def("time_shift", &time_shift, py::arg("t"), py::arg("m"));
    m.def("make_time_grid", &make_time_grid, py::arg("steps"), py::arg("m"));
    m.def("proportional_scale", &proportional_scale, py::arg("train_length"),
          py::arg("infer_length"));
    m.def("ntk_scale_base", &ntk_scale_base, py::arg("base"), py::arg("scale"),
          py::arg("head_dim"));
    m.def(
        "layout_for",
        [](std::size_t h, std::size_t w, std::size_t t, std::size_t p) {
            const LayoutInfo info = layout_for(h, w, t, p);
            py::dict d;
            d["length"] = info.length;
            d["nextline"] = info.nextline_indices;
            d["nextframe"] = info.nextframe_indices;
            d["patch"] = info.patch_indices;
            return d;
        },
        py::arg("height"), py::arg("width"), py::arg("frames") = 1, py::arg("patch") = 1);
    m.def(
        "roundtrip",
        [](const FloatArray& a, std::size_t p) {
            const LatentFrameGrid g = to_grid(a);
            return to_array(unpatchify(decode_sequence(encode_sequence(patchify(g, p), p)), p).values);
        },
        py::arg("grid"), py::arg("patch"), "decode(encode(patchify(grid))) as an array");
    m.def(
        "token_kinds",
        [](const FloatArray& a, std::size_t p) {
            const TokenSequence seq = encode_sequence(patchify(to_grid(a), p), p);
            std::string out;
            for (auto k : seq.kinds) out += token_kind_symbol(k);
            return out;
        },
        py::arg("grid"), py::arg("patch"));
    m.def(
        "make_pattern_image",
        [](const std::string& cls, std::size_t h, std::size_t w, std::size_t period,
           std::uint64_t seed, bool jitter) {
            return to_array(make_pattern_image(parse_pattern_class(cls), h, w, period, seed, jitter).values);
        },
        py::arg("cls"), py::arg("height"), py::arg("width"), py::arg("period") = 4,
        py::arg("seed") = 0, py::arg("jitter") = true);
    m.def(
        "classify_pattern",
        [](const FloatArray& a) { return to_string(classify_pattern(to_grid(a))); },
        py::arg("grid"));
    m.def(
        "channel_normalize", [](const FloatArray& a) { return to_array(channel_normalize(to_grid(a)).values); },
        py::arg("grid"));

    py::class_<FlagDiT>(m, "Model")
        .def(py::init([](const std::string& preset, std::size_t patch, std::size_t channels,
                         std::size_t train_height, std::size_t train_width, std::uint64_t seed) {
                 FlagDiTConfig c = FlagDiTConfig::preset(preset);
                 c.patch = patch;
                 c.channels = channels;
                 c.train_height = train_height;
                 c.train_width = train_width;
                 c.seed = seed;
                 return FlagDiT(c);
             }),
             py::arg("preset") = "tiny", py::arg("patch") = 2, py::arg("channels") = 1,
             py::arg("train_height") = 16, py::arg("train_width") = 16, py::arg("seed") = 0)
        .def_static("load", &load_checkpoint, py::arg("path"))
        .def("save", [](const FlagDiT& model, const std::string& path) { save_checkpoint(path, model); })
        .def_property_readonly("config",
                               [](const FlagDiT& model) {
                                   py::dict d;
                                   for (const auto& [k, v] : model_fields(model.config())) d[k.c_str()] = v;
                                   return d;
                               })
        .def_property_readonly("parameter_count", &FlagDiT::parameter_count)
        .def("gate_values", &FlagDiT::gate_values)
        .def(
            "velocity",
            [](const FlagDiT& model, const FloatArray& grid, double t,
               std::vector<std::size_t> prompt) {
                NoGradGuard no_grad;
                const std::size_t p = model.config().patch;
                const TokenSequence seq = encode_sequence(patchify(to_grid(grid), p), p);
                return to_array(model.forward(seq, t, prompt));
            },
            py::arg("grid"), py::arg("t"), py::arg("prompt"),
            "Velocity per patch token, [num_patches, p*p*C]")
        .def(
            "sample",
            [](const FlagDiT& model, std::vector<std::size_t> prompt, std::size_t height,
               std::size_t width, std::size_t frames, std::size_t steps, double shift, double cfg,
               std::uint64_t seed) {
                const SamplerConfig sc = sampler_config(steps, shift, cfg);
                Rng rng(seed);
                LatentFrameGrid g;
                {
                    py::gil_scoped_release release;
                    g = extrapolate_sample(model, height, width, frames, prompt, sc, rng);
                }
                return to_array(g.values);
            },
            py::arg("prompt"), py::arg("height"), py::arg("width"), py::arg("frames") = 1,
            py::arg("steps") = 50, py::arg("shift") = 6.0, py::arg("cfg") = 4.0,
            py::arg("seed") = 0);
}
