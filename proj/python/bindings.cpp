// pybind11 bindings. Images cross the boundary as float64 arrays shaped
// (channels, height, width); single planes as (height, width).
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <complex>
#include <map>
#include <optional>
#include <span>
#include <sstream>

#include "dda/classifier.hpp"
#include "dda/datasets.hpp"
#include "dda/diagnostics.hpp"
#include "dda/errors.hpp"
#include "dda/experiment.hpp"
#include "dda/rng.hpp"
#include "dda/transform.hpp"

namespace py = pybind11;
using namespace dda;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Plane to_plane(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array (height, width)");
    const auto h = static_cast<std::size_t>(a.shape(0));
    const auto w = static_cast<std::size_t>(a.shape(1));
    return Plane(h, w, std::vector<double>(a.data(), a.data() + h * w));
}

Array from_plane(const Plane& p) {
    Array out({p.height(), p.width()});
    std::copy(p.values().begin(), p.values().end(), out.mutable_data());
    return out;
}

ImageTensor to_image(const Array& a) {
    if (a.ndim() != 3) throw py::value_error("expected a 3-D array (channels, height, width)");
    const auto c = static_cast<std::size_t>(a.shape(0));
    const auto h = static_cast<std::size_t>(a.shape(1));
    const auto w = static_cast<std::size_t>(a.shape(2));
    std::vector<Plane> planes;
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* base = a.data() + ch * h * w;
        planes.emplace_back(h, w, std::vector<double>(base, base + h * w));
    }
    return ImageTensor(std::move(planes));
}

Array from_image(const ImageTensor& img) {
    Array out({img.channels(), img.height(), img.width()});
    double* dst = out.mutable_data();
    for (std::size_t c = 0; c < img.channels(); ++c)
        dst = std::copy(img.plane(c).values().begin(), img.plane(c).values().end(), dst);
    return out;
}

std::vector<ImageTensor> to_images(const Array& a) {
    if (a.ndim() != 4) throw py::value_error("expected a 4-D array (n, channels, height, width)");
    std::vector<ImageTensor> out;
    const auto n = static_cast<std::size_t>(a.shape(0));
    const auto stride = static_cast<std::size_t>(a.shape(1) * a.shape(2) * a.shape(3));
    for (std::size_t i = 0; i < n; ++i) {
        Array one({a.shape(1), a.shape(2), a.shape(3)});
        std::copy(a.data() + i * stride, a.data() + (i + 1) * stride, one.mutable_data());
        out.push_back(to_image(one));
    }
    return out;
}

Array from_images(const std::vector<ImageTensor>& images) {
    if (images.empty()) return Array(std::vector<py::ssize_t>{0, 0, 0, 0});
    const auto& f = images.front();
    Array out({images.size(), f.channels(), f.height(), f.width()});
    double* dst = out.mutable_data();
    for (const auto& img : images)
        for (std::size_t c = 0; c < img.channels(); ++c)
            dst = std::copy(img.plane(c).values().begin(), img.plane(c).values().end(), dst);
    return out;
}

Dataset make_dataset(const Array& images, const std::vector<int>& labels, const std::string& domain) {
    Dataset d;
    d.images = to_images(images);
    d.labels = labels;
    d.domain = parse_domain(domain);
    d.validate();
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Direct domain adaptation core: Fourier ops, transforms, datasets, PCA, experiment commands";

    // Translators run newest first, so the subclass is registered last.
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    auto data_error = py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
    py::register_exception<DegenerateImageError>(m, "DegenerateImageError", data_error.ptr());

    m.def("fft2", [](const Array& a) {
        const Spectrum s = fft2(to_plane(a));
        py::array_t<std::complex<double>> out({s.height, s.width});
        auto* dst = out.mutable_data();
        for (std::size_t i = 0; i < s.re.size(); ++i) dst[i] = {s.re[i], s.im[i]};
        return out;
    });
    m.def("ifft2", [](const py::array_t<std::complex<double>, py::array::c_style | py::array::forcecast>& a) {
        if (a.ndim() != 2) throw py::value_error("expected a 2-D complex array");
        Spectrum s{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)), {}, {}};
        for (py::ssize_t i = 0; i < a.size(); ++i) {
            s.re.push_back(a.data()[i].real());
            s.im.push_back(a.data()[i].imag());
        }
        return from_plane(ifft2(s));
    });
    m.def("cross_correlate", [](const Array& a, const Array& b) { return from_plane(cross_correlate(to_plane(a), to_plane(b))); });
    m.def("convolve", [](const Array& a, const Array& b) { return from_plane(convolve(to_plane(a), to_plane(b))); });
    m.def("autocorrelate", [](const Array& a) { return from_plane(autocorrelate(to_plane(a))); });
    m.def("center_shift", [](const Array& a) { return from_plane(center_shift(to_plane(a))); });

    m.def("derive_seed", [](std::uint64_t base, const std::vector<std::uint64_t>& ids) {
        return derive_seed(base, std::span<const std::uint64_t>(ids));
    }, py::arg("base"), py::arg("ids"));

    py::class_<TransformConfig>(m, "TransformConfig")
        .def(py::init<>())
        .def_readwrite("pixels_per_draw", &TransformConfig::pixels_per_draw)
        .def_readwrite("renormalize", &TransformConfig::renormalize)
        .def_readwrite("seed", &TransformConfig::seed)
        .def_readwrite("center_kernels", &TransformConfig::center_kernels)
        .def_readwrite("swap_convolution_operands", &TransformConfig::swap_convolution_operands);

    py::class_<DomainStats>(m, "DomainStats")
        .def(py::init([](const Array& mean_autocorr, std::vector<double> mean_pixel, const std::string& domain,
                         std::uint64_t sample_count, std::int64_t seed) {
                 DomainStats s;
                 s.mean_autocorr = to_image(mean_autocorr);
                 s.mean_pixel = std::move(mean_pixel);
                 s.domain = parse_domain(domain);
                 s.sample_count = sample_count;
                 s.seed = seed;
                 return s;
             }),
             py::arg("mean_autocorr"), py::arg("mean_pixel"), py::arg("domain"), py::arg("sample_count") = 1,
             py::arg("seed") = 0)
        .def_property_readonly("mean_autocorr", [](const DomainStats& s) { return from_image(s.mean_autocorr); })
        .def_readonly("mean_pixel", &DomainStats::mean_pixel)
        .def_readonly("sample_count", &DomainStats::sample_count)
        .def_readonly("seed", &DomainStats::seed)
        .def_property_readonly("domain", [](const DomainStats& s) { return std::string(to_string(s.domain)); });

    m.def("mean_autocorrelation", [](const Array& images) { return from_image(mean_autocorrelation(to_images(images))); });
    m.def("mean_random_pixel", [](const Array& images, std::uint64_t seed) { return mean_random_pixel(to_images(images), seed); });
    m.def("compute_domain_stats",
          [](const Array& images, const std::vector<int>& labels, const std::string& domain, std::uint64_t seed) {
              return compute_domain_stats(make_dataset(images, labels, domain), seed);
          },
          py::arg("images"), py::arg("labels"), py::arg("domain"), py::arg("seed"));
    m.def("transform_source",
          [](const Array& x, const Array& donor, const DomainStats& target_stats, const TransformConfig& cfg) {
              return from_image(transform_source(to_image(x), to_image(donor), target_stats, cfg));
          },
          py::arg("x"), py::arg("donor"), py::arg("target_stats"), py::arg("cfg") = TransformConfig{});
    m.def("transform_target",
          [](const Array& x, const std::vector<double>& mean_pixel, const DomainStats& source_stats,
             const TransformConfig& cfg) {
              return from_image(transform_target(to_image(x), mean_pixel, source_stats, cfg));
          },
          py::arg("x"), py::arg("mean_pixel"), py::arg("source_stats"), py::arg("cfg") = TransformConfig{});
    m.def("renormalize", [](const Array& x) { return from_image(renormalize(to_image(x))); });
    m.def("read_stats", [](const std::filesystem::path& p, const std::string& domain) { return read_stats(p, parse_domain(domain)); });
    m.def("write_stats", &write_stats);

    m.def("load_idx", [](const std::filesystem::path& images, const std::filesystem::path& labels) {
        const Dataset d = load_idx(images, labels);
        return py::make_tuple(from_images(d.images), d.labels);
    });

    m.def("fit_pca", [](const Array& samples, std::size_t k) {
        if (samples.ndim() != 2) throw py::value_error("expected (n, d) samples");
        Eigen::MatrixXd x(samples.shape(0), samples.shape(1));
        for (py::ssize_t i = 0; i < samples.shape(0); ++i)
            for (py::ssize_t j = 0; j < samples.shape(1); ++j) x(i, j) = samples.at(i, j);
        const PcaModel model = fit_pca(x, k);
        Array comps({model.components.cols(), model.components.rows()});
        for (Eigen::Index j = 0; j < model.components.cols(); ++j)
            for (Eigen::Index i = 0; i < model.components.rows(); ++i) comps.mutable_at(j, i) = model.components(i, j);
        std::vector<double> var(model.explained_variance.data(), model.explained_variance.data() + model.explained_variance.size());
        return py::make_tuple(comps, var);
    }, "Returns (components as k x d rows, explained variances).");

    m.def("run", [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
                    std::optional<std::filesystem::path> out, bool use_dda,
                    const std::map<std::string, std::string>& overrides) {
        ExperimentConfig cfg = load_config(config);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        if (seed) cfg.seed = *seed;
        if (out) cfg.out_dir = *out;
        cfg.use_dda = use_dda;
        std::ostringstream log;
        RunSummary s;
        {
            py::gil_scoped_release release;
            s = cmd_run(cfg, log);
        }
        py::dict d;
        d["baseline_source_test_acc"] = s.baseline_source_acc;
        d["baseline_target_test_acc"] = s.baseline_target_acc;
        d["dda_source_test_acc"] = s.dda_source_acc;
        d["dda_target_test_acc"] = s.dda_target_acc;
        d["domain_gap_before"] = s.gap_before;
        d["domain_gap_after"] = s.gap_after;
        return d;
    }, py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(), py::arg("use_dda") = true,
       py::arg("overrides") = std::map<std::string, std::string>{});

    m.def("stats", [](const std::filesystem::path& config, std::optional<std::filesystem::path> out,
                      const std::map<std::string, std::string>& overrides) {
        ExperimentConfig cfg = load_config(config);
        for (const auto& [k, v] : overrides) cfg.set(k, v);
        if (out) cfg.out_dir = *out;
        std::ostringstream log;
        const StatsPair s = cmd_stats(cfg, log);
        return py::make_tuple(s.source, s.target);
    }, py::arg("config"), py::arg("out") = py::none(),
       py::arg("overrides") = std::map<std::string, std::string>{});
}
