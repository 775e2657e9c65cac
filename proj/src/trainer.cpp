#include "qsm/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "qsm/io_blob.hpp"
#include "qsm/parallel.hpp"
#include "qsm/phantom.hpp"
#include "qsm/rng.hpp"

namespace qsm {

namespace {

// Fixed internal stream for complement orientations so padded runs stay
// reproducible without another config knob.
constexpr std::uint64_t kComplementSeed = 0x5EEDFACEULL;

bool near_collinear(const Orientation& a, const Orientation& b) {
    return std::abs(a.dot(b)) >= 1.0 - 1e-6;
}

std::vector<Orientation> derive_loss_orients(const std::vector<TrainSample>& data,
                                             const HyperParams& hp) {
    std::vector<Orientation> orients;
    for (const auto& s : data) {
        bool dup = false;
        for (const auto& o : orients) dup = dup || near_collinear(o, s.orient);
        if (!dup) orients.push_back(s.orient);
    }
    const std::size_t m = hp.m_orientations == 0
                              ? orients.size()
                              : static_cast<std::size_t>(hp.m_orientations);
    if (m < orients.size())
        throw ConfigError("m_orientations is below the number of distinct data orientations");
    if (m > orients.size()) {
        const auto cands = orientation_sweep(static_cast<int>(2 * m + 8), 45.0, kComplementSeed);
        for (const auto& c : cands) {
            if (orients.size() == m) break;
            bool dup = false;
            for (const auto& o : orients) dup = dup || near_collinear(o, c);
            if (!dup) orients.push_back(c);
        }
        if (orients.size() < m)
            throw ConfigError("could not derive enough distinct loss orientations");
    }
    return orients;
}

struct SampleCache {
    Spectrum3D field_spec;
    Volume3D label_field;
    std::shared_ptr<const DipoleKernel> kernel;
    WeightMask w;
};

std::vector<double> flat_params(const SirenNet& net) {
    std::vector<double> p;
    net.read_params(p);
    return p;
}

std::uint64_t fnv1a_bytes(const void* data, std::size_t bytes) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 1469598103934665603ULL;
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

} // namespace

void TrainConfig::validate() const {
    hp.validate();
    siren.validate();
    if (siren.in_dim != 6 || siren.out_dim != 1)
        throw ConfigError("trainer needs a 6-in 1-out siren");
    if (!(lr_recon > 0.0) || !(lr_inr > 0.0))
        throw ConfigError("learning rates must be > 0");
    if (recon_per_cycle < 1 || inr_per_cycle < 1)
        throw ConfigError("alternation counts must be >= 1 per phase");
}

TrainState init_train_state(const std::vector<TrainSample>& data,
                            const TrainConfig& cfg, std::uint64_t seed) {
    if (data.empty()) throw EmptyDataset("alternate_train: no training samples");
    cfg.validate();
    const GridSpec grid = data.front().field.grid;
    grid.validate();
    for (const auto& s : data) {
        require_same_grid(grid, s.field.grid, "alternate_train");
        require_same_grid(grid, s.chi_label.grid, "alternate_train");
    }
    TrainState st;
    st.cfg = cfg;
    st.recon = ConvReconstructor(mix_seed(seed, 1), cfg.recon_channels);
    st.siren = SirenNet(cfg.siren, mix_seed(seed, 2));
    st.adam_recon.init(static_cast<std::size_t>(st.recon.param_count()));
    st.adam_siren.init(static_cast<std::size_t>(st.siren.param_count()));
    st.loss_orients = derive_loss_orients(data, cfg.hp);
    if (cfg.dc_mode == DcMode::PerOrientationFields) {
        // Every loss orientation needs an observed field.
        std::size_t matched = 0;
        for (const auto& o : st.loss_orients)
            for (const auto& s : data)
                if (near_collinear(o, s.orient)) {
                    ++matched;
                    break;
                }
        if (matched != st.loss_orients.size())
            throw ConfigError("per-orientation data consistency needs a field per loss orientation");
    }
    return st;
}

void train_steps(TrainState& st, const std::vector<TrainSample>& data, int steps) {
    if (data.empty()) throw EmptyDataset("train_steps: no training samples");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    st.cfg.validate();
    const HyperParams& hp = st.cfg.hp;
    const GridSpec grid = data.front().field.grid;
    for (const auto& s : data) {
        require_same_grid(grid, s.field.grid, "train_steps");
        require_same_grid(grid, s.chi_label.grid, "train_steps");
    }
    if (st.loss_orients.empty()) st.loss_orients = derive_loss_orients(data, hp);
    const std::size_t m = st.loss_orients.size();
    const std::int64_t n = grid.count();

    std::vector<SampleCache> cache(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        cache[i].kernel = dipole_kernel_cached(grid, data[i].orient);
        cache[i].field_spec = fft_forward(data[i].field);
        cache[i].label_field = forward_field(data[i].chi_label, *cache[i].kernel);
        cache[i].w = weight_mask(*cache[i].kernel, hp.tau);
    }

    std::vector<DipoleKernel> d_ref;
    d_ref.reserve(m);
    for (const auto& o : st.loss_orients) d_ref.push_back(*dipole_kernel_cached(grid, o));

    // Field spectra for the physically consistent data-consistency variant:
    // the first sample matching each loss orientation.
    std::vector<const Spectrum3D*> per_orient_fields;
    if (st.cfg.dc_mode == DcMode::PerOrientationFields) {
        for (const auto& o : st.loss_orients) {
            const Spectrum3D* found = nullptr;
            for (std::size_t i = 0; i < data.size() && !found; ++i)
                if (near_collinear(o, data[i].orient)) found = &cache[i].field_spec;
            if (!found)
                throw ConfigError("per-orientation data consistency needs a field per loss orientation");
            per_orient_fields.push_back(found);
        }
    }

    CoordBatch stacked(static_cast<Eigen::Index>(m) * n, 6);
    for (std::size_t i = 0; i < m; ++i)
        stacked.middleRows(static_cast<Eigen::Index>(i) * n, n) =
            kernel_coords(grid, st.loss_orients[i]);

    // Current predicted kernels; the net keeps the matching forward cache so
    // the next INR step can backpropagate without re-evaluating.
    std::vector<DipoleKernel> d_hat(m);
    auto refresh_d_hat = [&]() {
        const Eigen::MatrixXd out = st.siren.forward(stacked);
        for (std::size_t i = 0; i < m; ++i) {
            d_hat[i].grid = grid;
            d_hat[i].orient = st.loss_orients[i];
            d_hat[i].values.assign(out.data() + static_cast<std::int64_t>(i) * n,
                                   out.data() + static_cast<std::int64_t>(i + 1) * n);
        }
    };
    refresh_d_hat();

    const int cycle = st.cfg.recon_per_cycle + st.cfg.inr_per_cycle;
    st.trace.reserve(st.trace.size() + static_cast<std::size_t>(steps));
    for (int s = 0; s < steps; ++s) {
        const int step = st.iteration;
        const char phase = st.phase_at(step);
        const std::size_t si = static_cast<std::size_t>((step / cycle) % data.size());
        const TrainSample& sample = data[si];
        const SampleCache& sc = cache[si];

        Volume3D chi_hat = st.recon.forward(sample.field);
        const Spectrum3D chi_spec = fft_forward(chi_hat);
        const ReconLoss rl = detail::recon_supervision_loss_cached(
            chi_hat, sample.chi_label, sc.label_field, *sc.kernel, hp);
        const KernelGrads l_inr = loss_inr(d_hat, d_ref, sc.w);
        const KernelGrads l_fill = loss_fill(d_hat, sc.w, hp.eps);
        const DcResult l_dc =
            st.cfg.dc_mode == DcMode::PerOrientationFields
                ? detail::loss_dc_spectra(per_orient_fields, chi_spec, d_hat, sc.w)
                : detail::loss_dc_spectra({&sc.field_spec}, chi_spec, d_hat, sc.w);
        const DipoleResult dip = loss_dipole(l_inr, l_fill, l_dc);

        TraceRow row;
        row.step = step;
        row.phase = phase;
        row.recon = rl.value;
        row.inr = l_inr.value;
        row.fill = l_fill.value;
        row.dc = l_dc.value;
        row.dipole = dip.value;
        row.total = loss_total(rl.value, dip.value, hp.lambda_eff());
        st.trace.push_back(row);

        if (phase == 'R') {
            st.recon.zero_grad();
            st.recon.backward(rl.d_chi);
            std::vector<double> params, grads;
            st.recon.read_params(params);
            st.recon.read_grads(grads);
            st.adam_recon.step(params, grads, st.cfg.lr_recon);
            st.recon.write_params(params);
        } else {
            const double scale =
                st.cfg.inr_objective == InrObjective::Total ? hp.lambda_eff() : 1.0;
            Eigen::MatrixXd dl(static_cast<Eigen::Index>(m) * n, 1);
            for (std::size_t i = 0; i < m; ++i)
                for (std::int64_t t = 0; t < n; ++t)
                    dl(static_cast<Eigen::Index>(i) * n + t, 0) =
                        scale * dip.d_kernels[i][t];
            st.siren.zero_grad();
            st.siren.backward(dl);
            std::vector<double> params, grads;
            st.siren.read_params(params);
            st.siren.read_grads(grads);
            st.adam_siren.step(params, grads, st.cfg.lr_inr);
            st.siren.write_params(params);
            refresh_d_hat();
        }
        ++st.iteration;
    }
    st.siren.drop_cache();
    st.recon.drop_cache();
}

TrainState alternate_train(const std::vector<TrainSample>& data,
                           const TrainConfig& cfg, int steps, std::uint64_t seed) {
    if (steps < 2) throw ConfigError("alternate_train needs steps >= 2");
    TrainState st = init_train_state(data, cfg, seed);
    train_steps(st, data, steps);
    return st;
}

std::uint64_t param_hash(const SirenNet& net) {
    std::vector<double> p = flat_params(net);
    return fnv1a_bytes(p.data(), p.size() * sizeof(double));
}

std::uint64_t param_hash(const ConvReconstructor& recon) {
    std::vector<double> p;
    recon.read_params(p);
    return fnv1a_bytes(p.data(), p.size() * sizeof(double));
}

const char* to_string(DcMode m) {
    return m == DcMode::AsWritten ? "as_written" : "per_orientation_fields";
}

DcMode dc_mode_from_string(const std::string& s) {
    if (s == "as_written") return DcMode::AsWritten;
    if (s == "per_orientation_fields") return DcMode::PerOrientationFields;
    throw ConfigError("unknown dc_mode '" + s + "'");
}

const char* to_string(InrObjective o) {
    return o == InrObjective::Total ? "total" : "dipole";
}

InrObjective inr_objective_from_string(const std::string& s) {
    if (s == "total") return InrObjective::Total;
    if (s == "dipole") return InrObjective::Dipole;
    throw ConfigError("unknown inr_phase_objective '" + s + "'");
}

void save_train_checkpoint(const TrainState& st, const std::string& path) {
    nlohmann::json orients = nlohmann::json::array();
    for (const auto& o : st.loss_orients) orients.push_back({o.b[0], o.b[1], o.b[2]});
    nlohmann::json header{
        {"magic", "QSMT1"},
        {"siren",
         {{"depth", st.cfg.siren.depth},
          {"width", st.cfg.siren.width},
          {"omega0", st.cfg.siren.omega0},
          {"in_dim", st.cfg.siren.in_dim},
          {"out_dim", st.cfg.siren.out_dim}}},
        {"channels", st.cfg.recon_channels},
        {"hyper",
         {{"tau", st.cfg.hp.tau},
          {"eps", st.cfg.hp.eps},
          {"lambda", st.cfg.hp.lambda},
          {"w_model", st.cfg.hp.w_model},
          {"w_grad", st.cfg.hp.w_grad},
          {"w_dipole", st.cfg.hp.w_dipole},
          {"w_voxel", st.cfg.hp.w_voxel},
          {"t_tkd", st.cfg.hp.t_tkd},
          {"t_cone", st.cfg.hp.t_cone},
          {"m_orientations", st.cfg.hp.m_orientations}}},
        {"train",
         {{"lr_recon", st.cfg.lr_recon},
          {"lr_inr", st.cfg.lr_inr},
          {"recon_per_cycle", st.cfg.recon_per_cycle},
          {"inr_per_cycle", st.cfg.inr_per_cycle},
          {"dc_mode", to_string(st.cfg.dc_mode)},
          {"inr_phase_objective", to_string(st.cfg.inr_objective)}}},
        {"adam", {{"recon_t", st.adam_recon.t}, {"siren_t", st.adam_siren.t}}},
        {"iteration", st.iteration},
        {"loss_orients", orients}};
    std::vector<double> payload;
    std::vector<double> tmp;
    st.recon.read_params(tmp);
    payload.insert(payload.end(), tmp.begin(), tmp.end());
    st.siren.read_params(tmp);
    payload.insert(payload.end(), tmp.begin(), tmp.end());
    payload.insert(payload.end(), st.adam_recon.m.begin(), st.adam_recon.m.end());
    payload.insert(payload.end(), st.adam_recon.v.begin(), st.adam_recon.v.end());
    payload.insert(payload.end(), st.adam_siren.m.begin(), st.adam_siren.m.end());
    payload.insert(payload.end(), st.adam_siren.v.begin(), st.adam_siren.v.end());
    detail::write_json_payload(path, header, payload.data(),
                               static_cast<std::int64_t>(payload.size()));
}

TrainState load_train_checkpoint(const std::string& path) {
    auto [header, payload] = detail::read_json_payload(path);
    if (header.value("magic", "") != std::string("QSMT1"))
        throw IoError(path + ": not a training checkpoint");
    TrainState st;
    const auto& sj = header.at("siren");
    st.cfg.siren.depth = sj.at("depth").get<int>();
    st.cfg.siren.width = sj.at("width").get<int>();
    st.cfg.siren.omega0 = sj.at("omega0").get<double>();
    st.cfg.siren.in_dim = sj.at("in_dim").get<int>();
    st.cfg.siren.out_dim = sj.at("out_dim").get<int>();
    st.cfg.recon_channels = header.at("channels").get<std::vector<int>>();
    const auto& hj = header.at("hyper");
    st.cfg.hp.tau = hj.at("tau").get<double>();
    st.cfg.hp.eps = hj.at("eps").get<double>();
    st.cfg.hp.lambda = hj.at("lambda").get<double>();
    st.cfg.hp.w_model = hj.at("w_model").get<double>();
    st.cfg.hp.w_grad = hj.at("w_grad").get<double>();
    st.cfg.hp.w_dipole = hj.at("w_dipole").get<double>();
    st.cfg.hp.w_voxel = hj.at("w_voxel").get<double>();
    st.cfg.hp.t_tkd = hj.at("t_tkd").get<double>();
    st.cfg.hp.t_cone = hj.at("t_cone").get<double>();
    st.cfg.hp.m_orientations = hj.at("m_orientations").get<int>();
    const auto& tj = header.at("train");
    st.cfg.lr_recon = tj.at("lr_recon").get<double>();
    st.cfg.lr_inr = tj.at("lr_inr").get<double>();
    st.cfg.recon_per_cycle = tj.at("recon_per_cycle").get<int>();
    st.cfg.inr_per_cycle = tj.at("inr_per_cycle").get<int>();
    st.cfg.dc_mode = dc_mode_from_string(tj.at("dc_mode").get<std::string>());
    st.cfg.inr_objective = inr_objective_from_string(tj.at("inr_phase_objective").get<std::string>());
    st.iteration = header.at("iteration").get<int>();
    for (const auto& o : header.at("loss_orients"))
        st.loss_orients.push_back(Orientation::normalized(
            o.at(0).get<double>(), o.at(1).get<double>(), o.at(2).get<double>()));

    st.recon = ConvReconstructor(0, st.cfg.recon_channels);
    st.siren = SirenNet(st.cfg.siren, 0);
    const std::size_t nr = static_cast<std::size_t>(st.recon.param_count());
    const std::size_t ns = static_cast<std::size_t>(st.siren.param_count());
    if (payload.size() != 2 * nr + 2 * ns + nr + ns)
        throw IoError(path + ": checkpoint payload size mismatch");
    std::size_t p = 0;
    auto take = [&](std::size_t count) {
        std::vector<double> v(payload.begin() + p, payload.begin() + p + count);
        p += count;
        return v;
    };
    st.recon.write_params(take(nr));
    st.siren.write_params(take(ns));
    st.adam_recon.init(nr);
    st.adam_recon.m = take(nr);
    st.adam_recon.v = take(nr);
    st.adam_recon.t = header.at("adam").at("recon_t").get<std::int64_t>();
    st.adam_siren.init(ns);
    st.adam_siren.m = take(ns);
    st.adam_siren.v = take(ns);
    st.adam_siren.t = header.at("adam").at("siren_t").get<std::int64_t>();
    return st;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open '" + path + "' for writing");
    std::fputs("step,phase,recon,inr,fill,dc,dipole,total\n", f);
    for (const auto& r : trace)
        std::fprintf(f, "%d,%c,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.phase,
                     r.recon, r.inr, r.fill, r.dc, r.dipole, r.total);
    std::fclose(f);
}

} // namespace qsm
