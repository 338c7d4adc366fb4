#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "tmc/codec.hpp"
#include "tmc/colorspace.hpp"
#include "tmc/entropy.hpp"
#include "tmc/errors.hpp"
#include "tmc/harness.hpp"
#include "tmc/metrics.hpp"
#include "tmc/scene_io.hpp"
#include "tmc/tucker.hpp"

namespace py = pybind11;
using namespace tmc;

namespace {

using FArray = py::array_t<double, py::array::f_style | py::array::forcecast>;
using CArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

// numpy arrays map to tensors in Fortran order, which is the tensor's own linearization.
DenseTensor to_tensor(const FArray& a) {
    Dims dims(a.shape(), a.shape() + a.ndim());
    return DenseTensor(dims, std::vector<double>(a.data(), a.data() + a.size()));
}

FArray to_array(const DenseTensor& t) {
    std::vector<py::ssize_t> shape(t.dims().begin(), t.dims().end());
    FArray out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

py::tuple model_tuple(const TuckerModel& m) { return py::make_tuple(to_array(m.core), m.factors); }

TuckerModel to_model(const FArray& core, const std::vector<Matrix>& factors) { return {to_tensor(core), factors}; }

// Scenes cross the boundary as (views, exposures, height, width, 3) arrays.
SceneStack to_scene(const CArray& a, ColorSpace space = ColorSpace::RGB, const std::string& name = "array") {
    if (a.ndim() != 5 || a.shape(4) != 3) throw ArgumentError("scene array must have shape (V, E, H, W, 3)");
    SceneStack s;
    s.meta = {name, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
              static_cast<std::size_t>(a.shape(3)), static_cast<std::size_t>(a.shape(2)), space};
    const double* p = a.data();
    for (std::size_t i = 0; i < s.meta.views * s.meta.exposures; ++i) {
        ColorImage img(s.meta.width, s.meta.height, space);
        for (std::size_t k = 0; k < img.pixel_count(); ++k, p += 3)
            for (int c = 0; c < 3; ++c) img.planes[c][k] = p[c];
        s.images.push_back(std::move(img));
    }
    s.validate();
    return s;
}

CArray from_scene(const SceneStack& s) {
    const auto& m = s.meta;
    CArray out({static_cast<py::ssize_t>(m.views), static_cast<py::ssize_t>(m.exposures),
                static_cast<py::ssize_t>(m.height), static_cast<py::ssize_t>(m.width), py::ssize_t{3}});
    double* p = out.mutable_data();
    for (const ColorImage& img : s.images)
        for (std::size_t k = 0; k < img.pixel_count(); ++k, p += 3)
            for (int c = 0; c < 3; ++c) p[c] = img.planes[c][k];
    return out;
}

CArray map_pixels(const CArray& px, Pixel (*f)(const Pixel&)) {
    if (px.ndim() < 1 || px.shape(px.ndim() - 1) != 3) throw ArgumentError("last axis must have length 3");
    CArray out(std::vector<py::ssize_t>(px.shape(), px.shape() + px.ndim()));
    const double* in = px.data();
    double* o = out.mutable_data();
    for (py::ssize_t i = 0; i < px.size(); i += 3) {
        const Pixel q = f(Pixel{in[i], in[i + 1], in[i + 2]});
        o[i] = q[0];
        o[i + 1] = q[1];
        o[i + 2] = q[2];
    }
    return out;
}

Bytes to_bytes(const py::bytes& b) {
    const std::string_view v = b;
    return Bytes(v.begin(), v.end());
}

py::bytes from_bytes(const Bytes& b) { return py::bytes(reinterpret_cast<const char*>(b.data()), b.size()); }

}  // namespace

PYBIND11_MODULE(_tmc, m) {
    m.doc() = "Tucker compression of multi-exposure stereo image stacks";

    py::register_exception<ArgumentError>(m, "ArgumentError", PyExc_ValueError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<BackendError>(m, "BackendError", PyExc_RuntimeError);

    m.def("t_hosvd", [](const FArray& x, const Dims& ranks) { return model_tuple(t_hosvd(to_tensor(x), ranks)); },
          py::arg("x"), py::arg("ranks"), "Truncated HOSVD. Returns (core, factors).");

    m.def(
        "tucker_als",
        [](const FArray& x, const Dims& ranks, std::size_t max_sweeps, double fit_tol, bool pairwise_perturbation) {
            SolveConfig cfg;
            cfg.ranks = ranks;
            cfg.max_sweeps = max_sweeps;
            cfg.fit_tol = fit_tol;
            cfg.use_pairwise_perturbation = pairwise_perturbation;
            const SolveResult r = tucker_als(to_tensor(x), cfg);
            py::list trace;
            for (const auto& s : r.trace) trace.append(py::make_tuple(to_string(s.kind), s.fit));
            py::dict out;
            out["core"] = to_array(r.model.core);
            out["factors"] = r.model.factors;
            out["trace"] = trace;
            out["converged"] = r.converged;
            return out;
        },
        py::arg("x"), py::arg("ranks"), py::arg("max_sweeps") = 50, py::arg("fit_tol") = 1e-5,
        py::arg("pairwise_perturbation") = true);

    m.def("reconstruct", [](const FArray& core, const std::vector<Matrix>& f) { return to_array(reconstruct(to_model(core, f))); },
          py::arg("core"), py::arg("factors"));
    m.def("fit", [](const FArray& x, const FArray& core, const std::vector<Matrix>& f) {
        return fit(to_tensor(x), to_model(core, f));
    }, py::arg("x"), py::arg("core"), py::arg("factors"));

    m.def("rgb_to_ycbcr", [](const CArray& px) { return map_pixels(px, &rgb_to_ycbcr); }, py::arg("pixels"));
    m.def("ycbcr_to_rgb", [](const CArray& px) { return map_pixels(px, &ycbcr_to_rgb_unclamped); }, py::arg("pixels"));
    m.def("rgb_to_ipt", [](const CArray& px) { return map_pixels(px, &rgb_to_ipt); }, py::arg("pixels"));
    m.def("ipt_to_rgb", [](const CArray& px) { return map_pixels(px, &ipt_to_rgb_unclamped); }, py::arg("pixels"));

    m.def("synthesize_scene",
          [](std::size_t w, std::size_t h, std::size_t e, std::size_t v, std::uint64_t seed) {
              return from_scene(synthesize_scene(w, h, e, v, seed));
          },
          py::arg("width"), py::arg("height"), py::arg("exposures") = 5, py::arg("views") = 2, py::arg("seed") = 0);
    m.def("load_scene", [](const std::filesystem::path& dir, const std::string& pattern) {
        return from_scene(load_scene(dir, pattern));
    }, py::arg("path"), py::arg("pattern") = std::string(kDefaultPattern));
    m.def("save_scene",
          [](const CArray& scene, const std::filesystem::path& dir, const std::string& format) {
              write_scene(to_scene(scene), dir, format == "ppm" ? ImageFormat::Ppm : ImageFormat::Png);
          },
          py::arg("scene"), py::arg("path"), py::arg("format") = "png");

    m.def("rank_preset",
          [](int preset, const CArray& scene) { return RankPresetTable{}.ranks(preset, to_scene(scene).meta); },
          py::arg("preset"), py::arg("scene"));

    m.def(
        "encode",
        [](const CArray& scene, const std::string& space, int preset, std::optional<Dims> ranks, int qp,
           const std::string& path, const std::string& entropy, std::size_t max_sweeps, const std::string& backend) {
            EncodeConfig cfg;
            cfg.space = parse_color_space(space);
            cfg.preset = preset;
            cfg.ranks = std::move(ranks);
            cfg.qp = qp;
            cfg.path = parse_coding_path(path);
            cfg.entropy = entropy == "stored" ? EntropyTag::Stored : EntropyTag::Range;
            if (entropy != "stored" && entropy != "range") throw ArgumentError("entropy must be 'stored' or 'range'");
            cfg.solver.max_sweeps = max_sweeps;
            cfg.backend = parse_backend(backend);
            const SceneStack s = to_scene(scene);
            EncodeResult r;
            {
                py::gil_scoped_release release;
                r = encode_stream(s, cfg);
            }
            py::dict stats;
            stats["bits_latent"] = r.stats.bits_latent;
            stats["bits_backend"] = r.stats.bits_backend;
            stats["bits_total"] = r.stats.bits_total;
            stats["fit"] = r.stats.fit;
            stats["sweeps"] = r.stats.sweeps;
            stats["ranks"] = r.stream.header.rank_dims();
            return py::make_tuple(from_bytes(r.bytes), stats);
        },
        py::arg("scene"), py::arg("space") = "ycbcr", py::arg("preset") = 5, py::arg("ranks") = py::none(),
        py::arg("qp") = 20, py::arg("path") = "latent", py::arg("entropy") = "range", py::arg("max_sweeps") = 50,
        py::arg("backend") = "builtin", "Encodes an RGB scene array. Returns (stream bytes, stats).");

    m.def("decode", [](const py::bytes& data) {
        const Bytes b = to_bytes(data);
        SceneStack s;
        {
            py::gil_scoped_release release;
            s = decode_stream(b);
        }
        return from_scene(s);
    }, py::arg("data"), "Decodes a stream to an RGB scene array in [0, 1].");

    m.def("stream_header", [](const py::bytes& data) {
        const Bytes b = to_bytes(data);
        const StreamHeader h = parse_stream(b).header;
        py::dict out;
        out["path"] = to_string(h.path);
        out["space"] = std::string(to_string(h.space));
        out["dims"] = h.dims();
        out["ranks"] = h.rank_dims();
        out["qp"] = h.qp;
        return out;
    }, py::arg("data"));

    m.def("scene_psnr", [](const CArray& ref, const CArray& test) {
        std::vector<double> out;
        for (const auto& v : scene_psnr(to_scene(ref), to_scene(test)).views) out.push_back(v.psnr);
        return out;
    }, py::arg("ref"), py::arg("test"), "Per-view PSNR in dB over all exposures and channels.");

    m.def("entropy_encode", [](const py::bytes& data, const std::string& tag) {
        return from_bytes(entropy_encode(to_bytes(data), tag == "stored" ? EntropyTag::Stored : EntropyTag::Range));
    }, py::arg("data"), py::arg("tag") = "range");
    m.def("entropy_decode", [](const py::bytes& data, const std::string& tag) {
        return from_bytes(entropy_decode(to_bytes(data), tag == "stored" ? EntropyTag::Stored : EntropyTag::Range));
    }, py::arg("data"), py::arg("tag") = "range");
}
