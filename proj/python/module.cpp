// qsmkit._core: thin numpy bindings over the C++ library. Arrays are
// C-ordered (nz, ny, nx) so the fastest axis is x, matching the native
// layout byte for byte.

#include <array>
#include <cstring>
#include <utility>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "qsm/config.hpp"
#include "qsm/dipole.hpp"
#include "qsm/errors.hpp"
#include "qsm/inversion.hpp"
#include "qsm/losses.hpp"
#include "qsm/metrics.hpp"
#include "qsm/parallel.hpp"
#include "qsm/phantom.hpp"
#include "qsm/siren.hpp"
#include "qsm/trainer.hpp"
#include "qsm/volume_io.hpp"

namespace py = pybind11;

namespace {

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using Vec3 = std::array<double, 3>;

qsm::GridSpec grid_of(const DoubleArray& a, const Vec3& voxel) {
    if (a.ndim() != 3) throw qsm::ConfigError("expected a 3-D array (nz, ny, nx)");
    qsm::GridSpec g;
    g.dims = {static_cast<int>(a.shape(2)), static_cast<int>(a.shape(1)),
              static_cast<int>(a.shape(0))};
    g.voxel = voxel;
    g.validate();
    return g;
}

qsm::Volume3D to_volume(const DoubleArray& a, const Vec3& voxel) {
    qsm::Volume3D v(grid_of(a, voxel));
    std::memcpy(v.data.data(), a.data(), v.data.size() * sizeof(double));
    return v;
}

py::array_t<double> to_array(const qsm::Volume3D& v) {
    py::array_t<double> a({v.grid.dims[2], v.grid.dims[1], v.grid.dims[0]});
    std::memcpy(a.mutable_data(), v.data.data(), v.data.size() * sizeof(double));
    return a;
}

py::array_t<double> values_to_array(const qsm::GridSpec& g,
                                    const std::vector<double>& values) {
    py::array_t<double> a({g.dims[2], g.dims[1], g.dims[0]});
    std::memcpy(a.mutable_data(), values.data(), values.size() * sizeof(double));
    return a;
}

qsm::VoxelMask to_mask(const DoubleArray& a, const Vec3& voxel) {
    qsm::VoxelMask m(grid_of(a, voxel));
    const double* p = a.data();
    for (std::size_t i = 0; i < m.flags.size(); ++i) m.flags[i] = p[i] != 0.0 ? 1 : 0;
    return m;
}

qsm::Orientation orient_of(const Vec3& b) {
    return qsm::Orientation::normalized(b[0], b[1], b[2]);
}

py::dict report_dict(const qsm::MetricsReport& r) {
    py::dict d;
    d["hfen"] = r.hfen;
    d["nrmse"] = r.nrmse;
    d["ssim"] = r.ssim;
    d["psnr"] = r.psnr;
    d["mask_voxels"] = r.mask_voxels;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "desk-scale QSM toolkit";

    py::register_exception<qsm::Error>(m, "QsmError", PyExc_RuntimeError);

    m.def("set_thread_count", &qsm::set_thread_count, py::arg("n"));

    m.def(
        "dipole_kernel",
        [](const std::array<int, 3>& dims, const Vec3& voxel, const Vec3& orient) {
            qsm::GridSpec g;
            g.dims = dims;
            g.voxel = voxel;
            g.validate();
            const qsm::DipoleKernel dk = qsm::dipole_kernel(g, orient_of(orient));
            return values_to_array(g, dk.values);
        },
        py::arg("dims"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0},
        py::arg("orient") = Vec3{0.0, 0.0, 1.0},
        "Unit-magnitude dipole kernel on the DFT lattice; dims are (nx, ny, nz).");

    m.def(
        "cone_mask",
        [](const std::array<int, 3>& dims, const Vec3& voxel, const Vec3& orient,
           double t) {
            qsm::GridSpec g;
            g.dims = dims;
            g.voxel = voxel;
            g.validate();
            const qsm::DipoleKernel dk = qsm::dipole_kernel(g, orient_of(orient));
            const qsm::ConeMask cm = qsm::cone_mask(dk, t);
            py::array_t<bool> a({g.dims[2], g.dims[1], g.dims[0]});
            bool* p = a.mutable_data();
            for (std::size_t i = 0; i < cm.flags.size(); ++i) p[i] = cm.flags[i] != 0;
            return a;
        },
        py::arg("dims"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0},
        py::arg("orient") = Vec3{0.0, 0.0, 1.0}, py::arg("t") = 0.2);

    m.def(
        "forward",
        [](const DoubleArray& chi, const Vec3& voxel, const Vec3& orient) {
            const qsm::Volume3D v = to_volume(chi, voxel);
            const auto k = qsm::dipole_kernel_cached(v.grid, orient_of(orient));
            return to_array(qsm::forward_field(v, *k));
        },
        py::arg("chi"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0},
        py::arg("orient") = Vec3{0.0, 0.0, 1.0});

    m.def(
        "tkd",
        [](const DoubleArray& field, const Vec3& voxel, const Vec3& orient, double t,
           bool zero_fill) {
            const qsm::Volume3D v = to_volume(field, voxel);
            const auto k = qsm::dipole_kernel_cached(v.grid, orient_of(orient));
            qsm::TkdConfig cfg;
            cfg.t = t;
            cfg.zero_fill = zero_fill;
            return to_array(qsm::tkd_invert(v, *k, cfg));
        },
        py::arg("field"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0},
        py::arg("orient") = Vec3{0.0, 0.0, 1.0}, py::arg("t") = 0.2,
        py::arg("zero_fill") = false);

    m.def(
        "cosmos",
        [](const std::vector<DoubleArray>& fields, const std::vector<Vec3>& orients,
           const Vec3& voxel, double damping) {
            if (fields.size() != orients.size())
                throw qsm::ConfigError("cosmos: one orientation per field");
            qsm::OrientationSet set;
            for (std::size_t i = 0; i < fields.size(); ++i)
                set.items.emplace_back(orient_of(orients[i]), to_volume(fields[i], voxel));
            return to_array(qsm::cosmos_invert(set, damping));
        },
        py::arg("fields"), py::arg("orients"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0},
        py::arg("damping") = 0.0);

    m.def(
        "weight_mask",
        [](const std::array<int, 3>& dims, const Vec3& voxel, const Vec3& orient,
           double tau) {
            qsm::GridSpec g;
            g.dims = dims;
            g.voxel = voxel;
            g.validate();
            const qsm::DipoleKernel dk = qsm::dipole_kernel(g, orient_of(orient));
            return values_to_array(g, qsm::weight_mask(dk, tau).values);
        },
        py::arg("dims"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0},
        py::arg("orient") = Vec3{0.0, 0.0, 1.0}, py::arg("tau") = 0.15);

    m.def(
        "phantom_from_config",
        [](const std::string& json_text) {
            const qsm::ExperimentConfig cfg = qsm::parse_config(json_text);
            auto [chi, mask] = qsm::build_phantom(cfg.phantom);
            qsm::Volume3D mv(mask.grid);
            for (std::size_t i = 0; i < mask.flags.size(); ++i)
                mv.data[i] = mask.flags[i] ? 1.0 : 0.0;
            return py::make_tuple(to_array(chi), to_array(mv));
        },
        py::arg("config_json"),
        "Rasterizes the config's phantom; returns (chi, mask) arrays.");

    m.def(
        "orientation_sweep",
        [](int n, double cap_deg, std::uint64_t seed) {
            std::vector<Vec3> out;
            for (const auto& o : qsm::orientation_sweep(n, cap_deg, seed))
                out.push_back(o.b);
            return out;
        },
        py::arg("n"), py::arg("cap_deg") = 30.0, py::arg("seed") = 11);

    m.def(
        "metrics",
        [](const DoubleArray& x, const DoubleArray& ref, const Vec3& voxel,
           const py::object& mask) {
            const qsm::Volume3D xv = to_volume(x, voxel);
            const qsm::Volume3D rv = to_volume(ref, voxel);
            if (mask.is_none()) return report_dict(qsm::metrics_report(xv, rv));
            const qsm::VoxelMask m = to_mask(mask.cast<DoubleArray>(), voxel);
            return report_dict(qsm::metrics_report(xv, rv, &m));
        },
        py::arg("x"), py::arg("ref"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0},
        py::arg("mask") = py::none());

    m.def(
        "save_volume",
        [](const std::string& path, const DoubleArray& a, const Vec3& voxel) {
            qsm::save_volume(to_volume(a, voxel), path);
        },
        py::arg("path"), py::arg("array"), py::arg("voxel") = Vec3{1.0, 1.0, 1.0});

    m.def(
        "load_volume",
        [](const std::string& path) {
            const qsm::Volume3D v = qsm::load_volume(path);
            return py::make_tuple(to_array(v), v.grid.voxel);
        },
        py::arg("path"), "Returns (array, voxel_size).");

    m.def(
        "train_from_config",
        [](const std::string& json_text) {
            const qsm::ExperimentConfig cfg = qsm::parse_config(json_text);
            auto [chi, mask] = qsm::build_phantom(cfg.phantom);
            const qsm::OrientationSet set =
                qsm::synth_orientation_set(chi, cfg.orientations, cfg.noise);
            std::vector<qsm::TrainSample> data;
            for (const auto& [orient, field] : set.items)
                data.push_back({field, chi, orient});
            qsm::TrainState st =
                qsm::alternate_train(data, cfg.train, cfg.steps, cfg.seed);
            const qsm::Volume3D chi_hat = st.recon.forward(data.front().field);
            st.recon.drop_cache();
            py::dict out = report_dict(qsm::metrics_report_tolerant(chi_hat, chi, &mask));
            out["trace_rows"] = st.trace.size();
            out["first_total"] = st.trace.front().total;
            out["last_total"] = st.trace.back().total;
            out["chi_hat"] = to_array(chi_hat);
            return out;
        },
        py::arg("config_json"),
        "Runs the alternating trainer per the config; returns metrics and the "
        "reconstruction.");
}
