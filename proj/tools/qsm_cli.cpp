// qsm: phantom synthesis, dipole-model baselines, INR training, and metrics
// over the QSMV1 volume format.

#include <algorithm>
#include <array>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <string>
#include <unistd.h>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsm/config.hpp"
#include "qsm/dipole.hpp"
#include "qsm/errors.hpp"
#include "qsm/inversion.hpp"
#include "qsm/io_blob.hpp"
#include "qsm/metrics.hpp"
#include "qsm/parallel.hpp"
#include "qsm/phantom.hpp"
#include "qsm/siren.hpp"
#include "qsm/trainer.hpp"
#include "qsm/volume_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    int threads = 0;
};

qsm::ExperimentConfig effective_config(const GlobalOpts& g, bool require_file) {
    qsm::ExperimentConfig cfg;
    if (!g.config_path.empty()) {
        cfg = qsm::load_config_file(g.config_path);
    } else if (require_file) {
        throw qsm::ConfigError("this command needs --config");
    }
    if (g.seed) cfg.seed = *g.seed;
    if (!g.out_dir.empty()) cfg.output_dir = g.out_dir;
    return cfg;
}

qsm::Orientation parse_orient(const std::string& s) {
    double x = 0.0, y = 0.0, z = 0.0;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%lf,%lf,%lf%c", &x, &y, &z, &tail) != 3)
        throw qsm::ConfigError("bad orientation '" + s + "'; expected x,y,z");
    return qsm::Orientation::normalized(x, y, z);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw qsm::IoError("cannot open '" + path.string() + "' for writing");
    out << text;
    if (!out) throw qsm::IoError("short write to '" + path.string() + "'");
}

fs::path ensure_out_dir(const qsm::ExperimentConfig& cfg) {
    fs::path dir(cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw qsm::IoError("cannot create '" + dir.string() + "': " + ec.message());
    return dir;
}

void maybe_write_metrics(const qsm::Volume3D& x, const std::string& ref_path,
                         const std::string& mask_path, const fs::path& out) {
    if (ref_path.empty()) return;
    const qsm::Volume3D ref = qsm::load_volume(ref_path);
    std::optional<qsm::VoxelMask> mask;
    if (!mask_path.empty()) mask = qsm::load_mask(mask_path);
    const qsm::MetricsReport r =
        qsm::metrics_report(x, ref, mask ? &*mask : nullptr);
    write_text(out, qsm::metrics_json(r) + "\n");
}

double json_metric(const json& m, const char* key) {
    const json& v = m.at(key);
    if (v.is_string()) return std::numeric_limits<double>::infinity();
    if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
    return v.get<double>();
}

// ---- phantom ---------------------------------------------------------

int cmd_phantom(const GlobalOpts& g) {
    const qsm::ExperimentConfig cfg = effective_config(g, true);
    const fs::path dir = ensure_out_dir(cfg);
    const auto [chi, mask] = qsm::build_phantom(cfg.phantom);
    qsm::save_volume(chi, (dir / "chi.qsmv").string());
    qsm::save_mask(mask, (dir / "mask.qsmv").string());
    return 0;
}

// ---- forward ---------------------------------------------------------

int cmd_forward(const GlobalOpts& g, const std::string& chi_path,
                const std::string& orient_str, const std::string& ref_path,
                const std::string& mask_path) {
    const qsm::ExperimentConfig cfg = effective_config(g, chi_path.empty());
    const fs::path dir = ensure_out_dir(cfg);
    qsm::Volume3D chi;
    if (!chi_path.empty())
        chi = qsm::load_volume(chi_path);
    else
        chi = qsm::build_phantom(cfg.phantom).first;
    const qsm::Orientation orient = parse_orient(orient_str);
    const qsm::OrientationSet set =
        qsm::synth_orientation_set(chi, {orient}, cfg.noise);
    const qsm::Volume3D& field = set.items.front().second;
    qsm::save_volume(field, (dir / "field.qsmv").string());
    maybe_write_metrics(field, ref_path, mask_path, dir / "metrics.json");
    return 0;
}

// ---- tkd -------------------------------------------------------------

int cmd_tkd(const GlobalOpts& g, const std::string& field_path,
            const std::string& orient_str, std::optional<double> t_flag,
            bool zero_fill, const std::string& ref_path, const std::string& mask_path) {
    const qsm::ExperimentConfig cfg = effective_config(g, false);
    const fs::path dir = ensure_out_dir(cfg);
    const qsm::Volume3D field = qsm::load_volume(field_path);
    const qsm::Orientation orient = parse_orient(orient_str);
    qsm::TkdConfig tkd = cfg.tkd;
    if (t_flag) tkd.t = *t_flag;
    if (zero_fill) tkd.zero_fill = true;
    const auto kernel = qsm::dipole_kernel_cached(field.grid, orient);
    const qsm::Volume3D chi = qsm::tkd_invert(field, *kernel, tkd);
    qsm::save_volume(chi, (dir / "chi_tkd.qsmv").string());
    maybe_write_metrics(chi, ref_path, mask_path, dir / "metrics.json");
    return 0;
}

// ---- cosmos ----------------------------------------------------------

int cmd_cosmos(const GlobalOpts& g, const std::vector<std::string>& field_paths,
               const std::vector<std::string>& orient_strs,
               std::optional<double> damping_flag, const std::string& ref_path,
               const std::string& mask_path) {
    const qsm::ExperimentConfig cfg = effective_config(g, false);
    const fs::path dir = ensure_out_dir(cfg);
    if (field_paths.size() != orient_strs.size())
        throw qsm::ConfigError("cosmos needs one --orient per --field");
    qsm::OrientationSet set;
    for (std::size_t i = 0; i < field_paths.size(); ++i)
        set.items.emplace_back(parse_orient(orient_strs[i]),
                               qsm::load_volume(field_paths[i]));
    const double damping = damping_flag ? *damping_flag : cfg.cosmos_damping;
    const qsm::Volume3D chi = qsm::cosmos_invert(set, damping);
    qsm::save_volume(chi, (dir / "chi_cosmos.qsmv").string());
    maybe_write_metrics(chi, ref_path, mask_path, dir / "metrics.json");
    return 0;
}

// ---- train -----------------------------------------------------------

std::string combo_dir_name(const std::array<double, 3>& c) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "wm%g_wg%g_wd%g", c[0], c[1], c[2]);
    return buf;
}

std::string hash_hex(std::uint64_t h) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
    return buf;
}

struct TrainData {
    qsm::Volume3D chi;
    qsm::VoxelMask mask;
    std::vector<qsm::TrainSample> samples;
};

TrainData build_train_data(const qsm::ExperimentConfig& cfg) {
    TrainData d;
    auto built = qsm::build_phantom(cfg.phantom);
    d.chi = std::move(built.first);
    d.mask = std::move(built.second);
    const qsm::OrientationSet set =
        qsm::synth_orientation_set(d.chi, cfg.orientations, cfg.noise);
    for (const auto& [orient, field] : set.items)
        d.samples.push_back({field, d.chi, orient});
    return d;
}

void run_one_combo(const qsm::ExperimentConfig& cfg, const TrainData& data,
                   const std::array<double, 3>& combo, const fs::path& dir) {
    qsm::ExperimentConfig run = cfg;
    run.train.hp.w_model = combo[0];
    run.train.hp.w_grad = combo[1];
    run.train.hp.w_dipole = combo[2];

    const std::string name = combo_dir_name(combo);
    const fs::path final_dir = dir / name;
    const std::string token = hash_hex(qsm::config_hash(cfg, combo));
    if (fs::exists(final_dir / "config_hash.txt")) {
        std::ifstream in(final_dir / "config_hash.txt");
        std::string prev;
        in >> prev;
        if (prev == token) return; // completed by an earlier run
    }

    const fs::path tmp_dir =
        dir / (name + ".tmp-" + std::to_string(static_cast<long>(::getpid())));
    fs::create_directories(tmp_dir);

    qsm::TrainState st =
        qsm::alternate_train(data.samples, run.train, run.steps, run.seed);
    qsm::write_trace_csv(st.trace, (tmp_dir / "loss.csv").string());
    qsm::save_train_checkpoint(st, (tmp_dir / "checkpoint.qsmt").string());
    qsm::save_siren(st.siren, (tmp_dir / "siren.qsms").string());

    for (std::size_t i = 0; i < st.loss_orients.size(); ++i) {
        const qsm::DipoleKernel dk =
            qsm::synthesize_kernel(st.siren, data.chi.grid, st.loss_orients[i]);
        qsm::Volume3D v;
        v.grid = dk.grid;
        v.data = dk.values;
        qsm::save_volume(v, (tmp_dir / ("dhat_" + std::to_string(i) + ".qsmv")).string());
    }

    const qsm::Volume3D chi_hat = st.recon.forward(data.samples.front().field);
    st.recon.drop_cache();
    qsm::save_volume(chi_hat, (tmp_dir / "chi_hat.qsmv").string());
    const qsm::MetricsReport r = qsm::metrics_report_tolerant(chi_hat, data.chi, &data.mask);
    write_text(tmp_dir / "metrics.json", qsm::metrics_json(r) + "\n");
    write_text(tmp_dir / "config_hash.txt", token + "\n");

    if (fs::exists(final_dir)) {
        std::ifstream in(final_dir / "config_hash.txt");
        std::string prev;
        in >> prev;
        if (prev == token) {
            // Another worker finished the same work first; keep its result.
            fs::remove_all(tmp_dir);
            return;
        }
        fs::remove_all(final_dir); // stale output from an older config
    }
    fs::rename(tmp_dir, final_dir);
}

int cmd_train(const GlobalOpts& g) {
    const qsm::ExperimentConfig cfg = effective_config(g, true);
    const fs::path dir = ensure_out_dir(cfg);
    const TrainData data = build_train_data(cfg);

    std::vector<std::array<double, 3>> combos;
    if (cfg.sweep.empty())
        combos.push_back({cfg.train.hp.w_model, cfg.train.hp.w_grad, cfg.train.hp.w_dipole});
    else
        combos = cfg.sweep.expand();

    for (const auto& combo : combos) run_one_combo(cfg, data, combo, dir);

    // Table across combos, rebuilt from the directories so resumes stay
    // consistent.
    std::string table = "w_model,w_grad,w_dipole,hfen,nrmse,ssim,psnr\n";
    for (const auto& combo : combos) {
        std::ifstream in(dir / combo_dir_name(combo) / "metrics.json");
        if (!in) throw qsm::IoError("missing metrics for " + combo_dir_name(combo));
        json m = json::parse(in);
        char row[256];
        std::snprintf(row, sizeof row, "%g,%g,%g,%.17g,%.17g,%.17g,%.17g\n", combo[0],
                      combo[1], combo[2], json_metric(m, "hfen"),
                      json_metric(m, "nrmse"), json_metric(m, "ssim"),
                      json_metric(m, "psnr"));
        table += row;
    }
    write_text(dir / "summary.csv", table);
    return 0;
}

// ---- sweep-orientations ------------------------------------------------

int cmd_sweep_orientations(const GlobalOpts& g, const std::string& ckpt_path,
                           bool spread) {
    const qsm::ExperimentConfig cfg = effective_config(g, true);
    const fs::path dir = ensure_out_dir(cfg);
    if (!fs::exists(ckpt_path)) {
        std::fprintf(stderr, "error: checkpoint '%s' not found\n", ckpt_path.c_str());
        return 5;
    }
    qsm::TrainState st = qsm::load_train_checkpoint(ckpt_path);

    const auto [chi, mask] = qsm::build_phantom(cfg.phantom);
    const std::vector<qsm::Orientation> orients = qsm::orientation_sweep(
        cfg.orientation_sweep.count, cfg.orientation_sweep.cap_deg,
        cfg.orientation_sweep.seed);

    std::string csv = "bx,by,bz,hfen,nrmse,ssim,psnr\n";
    std::array<double, 4> lo{}, hi{};
    lo.fill(std::numeric_limits<double>::infinity());
    hi.fill(-std::numeric_limits<double>::infinity());
    for (const auto& orient : orients) {
        const qsm::OrientationSet set =
            qsm::synth_orientation_set(chi, {orient}, cfg.noise);
        const qsm::Volume3D chi_hat = st.recon.forward(set.items.front().second);
        st.recon.drop_cache();
        const qsm::MetricsReport r = qsm::metrics_report_tolerant(chi_hat, chi, &mask);
        char row[256];
        if (std::isinf(r.psnr))
            std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,inf\n",
                          orient.b[0], orient.b[1], orient.b[2], r.hfen, r.nrmse, r.ssim);
        else
            std::snprintf(row, sizeof row, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          orient.b[0], orient.b[1], orient.b[2], r.hfen, r.nrmse, r.ssim,
                          r.psnr);
        csv += row;
        const std::array<double, 4> vals{r.hfen, r.nrmse, r.ssim, r.psnr};
        for (std::size_t i = 0; i < 4; ++i) {
            if (std::isnan(vals[i])) continue;
            lo[i] = std::min(lo[i], vals[i]);
            hi[i] = std::max(hi[i], vals[i]);
        }
    }
    write_text(dir / "orientation_sweep.csv", csv);
    if (spread) {
        std::array<double, 4> sp{};
        for (std::size_t i = 0; i < 4; ++i)
            sp[i] = hi[i] >= lo[i] ? hi[i] - lo[i]
                                   : std::numeric_limits<double>::quiet_NaN();
        std::printf("spread hfen=%.17g nrmse=%.17g ssim=%.17g psnr=%.17g\n", sp[0],
                    sp[1], sp[2], sp[3]);
    }
    return 0;
}

// ---- metrics -----------------------------------------------------------

int cmd_metrics(const GlobalOpts& g, const std::string& x_path,
                const std::string& ref_path, const std::string& mask_path) {
    const qsm::Volume3D x = qsm::load_volume(x_path);
    const qsm::Volume3D ref = qsm::load_volume(ref_path);
    std::optional<qsm::VoxelMask> mask;
    if (!mask_path.empty()) mask = qsm::load_mask(mask_path);
    const qsm::MetricsReport r = qsm::metrics_report(x, ref, mask ? &*mask : nullptr);
    std::printf("%s\n", qsm::metrics_json(r).c_str());
    if (!g.out_dir.empty() || !g.config_path.empty()) {
        const qsm::ExperimentConfig cfg = effective_config(g, false);
        const fs::path dir = ensure_out_dir(cfg);
        write_text(dir / "metrics.json", qsm::metrics_json(r) + "\n");
    }
    return 0;
}

// ---- kernel-export ------------------------------------------------------

int cmd_kernel_export(const GlobalOpts& g, const std::string& orient_str,
                      const std::string& dims_str, const std::string& voxel_str,
                      const std::string& ckpt_path) {
    qsm::ExperimentConfig cfg = effective_config(g, false);
    const fs::path dir = ensure_out_dir(cfg);
    qsm::GridSpec grid = cfg.phantom.grid;
    if (!dims_str.empty()) {
        int a = 0, b = 0, c = 0;
        char tail = 0;
        if (std::sscanf(dims_str.c_str(), "%d,%d,%d%c", &a, &b, &c, &tail) != 3)
            throw qsm::ConfigError("bad --dims '" + dims_str + "'; expected nx,ny,nz");
        grid.dims = {a, b, c};
    }
    if (!voxel_str.empty()) {
        double a = 0.0, b = 0.0, c = 0.0;
        char tail = 0;
        if (std::sscanf(voxel_str.c_str(), "%lf,%lf,%lf%c", &a, &b, &c, &tail) != 3)
            throw qsm::ConfigError("bad --voxel '" + voxel_str + "'; expected vx,vy,vz");
        grid.voxel = {a, b, c};
    }
    grid.validate();
    const qsm::Orientation orient = parse_orient(orient_str);

    qsm::DipoleKernel dk;
    if (!ckpt_path.empty()) {
        const auto [header, payload] = qsm::detail::read_json_payload(ckpt_path);
        const std::string magic = header.value("magic", "");
        if (magic == "SIREN1") {
            qsm::SirenNet net = qsm::load_siren(ckpt_path);
            dk = qsm::synthesize_kernel(net, grid, orient);
        } else if (magic == "QSMT1") {
            qsm::TrainState st = qsm::load_train_checkpoint(ckpt_path);
            dk = qsm::synthesize_kernel(st.siren, grid, orient);
        } else {
            throw qsm::IoError(ckpt_path + ": not a checkpoint file");
        }
    } else {
        dk = qsm::dipole_kernel(grid, orient);
    }
    qsm::Volume3D v;
    v.grid = dk.grid;
    v.data = dk.values;
    qsm::save_volume(v, (dir / "kernel.qsmv").string());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale QSM toolkit"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOpts g;
    app.add_option("--config", g.config_path, "experiment config JSON");
    std::uint64_t seed_val = 0;
    CLI::Option* seed_opt = app.add_option("--seed", seed_val, "override config seed");
    app.add_option("--out", g.out_dir, "output directory (overrides config)");
    app.add_option("--threads", g.threads, "worker threads (0 = auto)");

    auto* sc_phantom = app.add_subcommand("phantom", "rasterize the phantom and mask");

    auto* sc_forward = app.add_subcommand("forward", "apply the dipole model");
    std::string fwd_chi, fwd_orient = "0,0,1", fwd_ref, fwd_mask;
    sc_forward->add_option("--chi", fwd_chi, "susceptibility volume (else config phantom)");
    sc_forward->add_option("--orient", fwd_orient, "field direction x,y,z");
    sc_forward->add_option("--ref", fwd_ref, "reference field for metrics");
    sc_forward->add_option("--mask", fwd_mask, "metrics mask");

    auto* sc_tkd = app.add_subcommand("tkd", "truncated k-space division");
    std::string tkd_field, tkd_orient = "0,0,1", tkd_ref, tkd_mask;
    double tkd_t = 0.0;
    bool tkd_zero = false;
    sc_tkd->add_option("--field", tkd_field, "field volume")->required();
    sc_tkd->add_option("--orient", tkd_orient, "field direction x,y,z");
    CLI::Option* tkd_t_opt = sc_tkd->add_option("--t", tkd_t, "truncation threshold");
    sc_tkd->add_flag("--zero-fill", tkd_zero, "zero the near-cone bins");
    sc_tkd->add_option("--ref", tkd_ref, "reference chi for metrics");
    sc_tkd->add_option("--mask", tkd_mask, "metrics mask");

    auto* sc_cosmos = app.add_subcommand("cosmos", "multi-orientation least squares");
    std::vector<std::string> cos_fields, cos_orients;
    double cos_damping = 0.0;
    std::string cos_ref, cos_mask;
    sc_cosmos->add_option("--field", cos_fields, "field volume (repeat per orientation)");
    sc_cosmos->add_option("--orient", cos_orients, "direction x,y,z (repeat per field)");
    CLI::Option* cos_damp_opt = sc_cosmos->add_option("--damping", cos_damping, "ridge term");
    sc_cosmos->add_option("--ref", cos_ref, "reference chi for metrics");
    sc_cosmos->add_option("--mask", cos_mask, "metrics mask");

    auto* sc_train = app.add_subcommand("train", "alternating INR/reconstructor training");

    auto* sc_sweep = app.add_subcommand("sweep-orientations",
                                        "evaluate a frozen model across orientations");
    std::string sweep_ckpt;
    bool sweep_spread = false;
    sc_sweep->add_option("--checkpoint", sweep_ckpt, "training checkpoint")->required();
    sc_sweep->add_flag("--spread", sweep_spread, "print max-min per metric");

    auto* sc_metrics = app.add_subcommand("metrics", "compare two volumes");
    std::string met_x, met_ref, met_mask;
    sc_metrics->add_option("--x", met_x, "volume under test")->required();
    sc_metrics->add_option("--ref", met_ref, "reference volume")->required();
    sc_metrics->add_option("--mask", met_mask, "metrics mask");

    auto* sc_kernel = app.add_subcommand("kernel-export", "write a dipole kernel volume");
    std::string ker_orient = "0,0,1", ker_dims, ker_voxel, ker_ckpt;
    sc_kernel->add_option("--orient", ker_orient, "field direction x,y,z");
    sc_kernel->add_option("--dims", ker_dims, "grid dims nx,ny,nz");
    sc_kernel->add_option("--voxel", ker_voxel, "voxel size vx,vy,vz");
    sc_kernel->add_option("--checkpoint", ker_ckpt, "synthesize from a trained INR");

    CLI11_PARSE(app, argc, argv);

    if (seed_opt->count() > 0) g.seed = seed_val;
    qsm::set_thread_count(g.threads);

    try {
        if (sc_phantom->parsed()) return cmd_phantom(g);
        if (sc_forward->parsed()) return cmd_forward(g, fwd_chi, fwd_orient, fwd_ref, fwd_mask);
        if (sc_tkd->parsed())
            return cmd_tkd(g, tkd_field, tkd_orient,
                           tkd_t_opt->count() ? std::optional<double>(tkd_t) : std::nullopt,
                           tkd_zero, tkd_ref, tkd_mask);
        if (sc_cosmos->parsed())
            return cmd_cosmos(g, cos_fields, cos_orients,
                              cos_damp_opt->count() ? std::optional<double>(cos_damping)
                                                    : std::nullopt,
                              cos_ref, cos_mask);
        if (sc_train->parsed()) return cmd_train(g);
        if (sc_sweep->parsed()) return cmd_sweep_orientations(g, sweep_ckpt, sweep_spread);
        if (sc_metrics->parsed()) return cmd_metrics(g, met_x, met_ref, met_mask);
        if (sc_kernel->parsed())
            return cmd_kernel_export(g, ker_orient, ker_dims, ker_voxel, ker_ckpt);
        std::fprintf(stderr, "error: no command\n");
        return 2;
    } catch (const qsm::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const qsm::ShapeOutOfBounds& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const qsm::InsufficientOrientations& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const qsm::DegenerateOrientations& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const qsm::EmptyDataset& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const qsm::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const qsm::GridMismatch& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    } catch (const qsm::ZeroReference& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const qsm::MissingForwardCache& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 5;
    } catch (const qsm::Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
