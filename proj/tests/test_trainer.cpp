#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <qsm/dipole.hpp>
#include <qsm/grid.hpp>
#include <qsm/losses.hpp>
#include <qsm/siren.hpp>
#include <qsm/trainer.hpp>

using namespace qsm;

namespace {

const GridSpec kGrid{{8, 8, 8}, {1.0, 1.0, 1.0}};

Volume3D random_volume(const GridSpec& g, std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> n(0.0, 0.05);
    Volume3D v(g);
    for (auto& x : v.data) x = n(eng);
    return v;
}

TrainSample make_sample(const GridSpec& g, const Orientation& b, std::uint64_t seed) {
    TrainSample s;
    s.chi_label = random_volume(g, seed);
    s.orient = b;
    s.field = forward_field(s.chi_label, b);
    return s;
}

// Small nets keep each step cheap; the dynamics are identical.
TrainConfig small_config() {
    TrainConfig cfg;
    cfg.siren = SirenSpec{3, 16, 30.0, 6, 1};
    cfg.recon_channels = {1, 4, 1};
    return cfg;
}

std::vector<TrainSample> axis_pair() {
    return {make_sample(kGrid, Orientation::normalized(0, 0, 1), 1),
            make_sample(kGrid, Orientation::normalized(1, 0, 0), 2)};
}

} // namespace

TEST_CASE("phase schedule follows the cycle counts") {
    TrainState st;
    st.cfg.recon_per_cycle = 1;
    st.cfg.inr_per_cycle = 1;
    const std::string alt = "RIRIRIRIRI";
    for (int s = 0; s < 10; ++s) CHECK(st.phase_at(s) == alt[static_cast<std::size_t>(s)]);
    st.cfg.recon_per_cycle = 2;
    st.cfg.inr_per_cycle = 1;
    const std::string two = "RRIRRIRRI";
    for (int s = 0; s < 9; ++s) CHECK(st.phase_at(s) == two[static_cast<std::size_t>(s)]);
    st.cfg.recon_per_cycle = 1;
    st.cfg.inr_per_cycle = 3;
    const std::string three = "RIIIRIII";
    for (int s = 0; s < 8; ++s) CHECK(st.phase_at(s) == three[static_cast<std::size_t>(s)]);
}

TEST_CASE("ten alternating steps run five of each phase and isolate the modules") {
    const auto data = axis_pair();
    TrainState st = init_train_state(data, small_config(), 7);
    int r_steps = 0, i_steps = 0;
    for (int s = 0; s < 10; ++s) {
        const std::uint64_t siren_before = param_hash(st.siren);
        const std::uint64_t recon_before = param_hash(st.recon);
        train_steps(st, data, 1);
        REQUIRE(st.trace.size() == static_cast<std::size_t>(s + 1));
        const TraceRow& row = st.trace.back();
        CHECK(row.step == s);
        if (row.phase == 'R') {
            ++r_steps;
            // A reconstructor update must leave the INR untouched, bit for bit.
            CHECK(param_hash(st.siren) == siren_before);
            CHECK(param_hash(st.recon) != recon_before);
        } else {
            ++i_steps;
            CHECK(param_hash(st.recon) == recon_before);
            CHECK(param_hash(st.siren) != siren_before);
        }
    }
    CHECK(r_steps == 5);
    CHECK(i_steps == 5);
    CHECK(st.iteration == 10);
}

TEST_CASE("trace rows are internally consistent and pre-update") {
    const auto data = axis_pair();
    const TrainConfig cfg = small_config();
    TrainState st = init_train_state(data, cfg, 11);

    // Recompute the first row's losses from the freshly initialized modules.
    TrainState probe = st;
    Volume3D chi_hat = probe.recon.forward(data[0].field);
    const auto kernel0 = dipole_kernel_cached(kGrid, data[0].orient);
    const WeightMask w0 = weight_mask(*kernel0, cfg.hp.tau);
    const ReconLoss rl = recon_supervision_loss(chi_hat, data[0].chi_label, *kernel0, cfg.hp);
    std::vector<DipoleKernel> d_hat, d_ref;
    for (const auto& o : st.loss_orients) {
        d_hat.push_back(synthesize_kernel(probe.siren, kGrid, o));
        d_ref.push_back(*dipole_kernel_cached(kGrid, o));
    }
    const KernelGrads l_inr = loss_inr(d_hat, d_ref, w0);
    const KernelGrads l_fill = loss_fill(d_hat, w0, cfg.hp.eps);
    const DcResult l_dc = loss_dc(data[0].field, chi_hat, d_hat, w0);

    train_steps(st, data, 2);
    const TraceRow& row = st.trace[0];
    CHECK(row.phase == 'R');
    CHECK(row.recon == doctest::Approx(rl.value).epsilon(1e-12));
    CHECK(row.inr == doctest::Approx(l_inr.value).epsilon(1e-12));
    CHECK(row.fill == doctest::Approx(l_fill.value).epsilon(1e-12));
    CHECK(row.dc == doctest::Approx(l_dc.value).epsilon(1e-12));
    for (const auto& r : st.trace) {
        CHECK(r.dipole == r.inr + r.fill + r.dc);
        CHECK(r.total == loss_total(r.recon, r.dipole, cfg.hp.lambda_eff()));
    }

    // The row is captured before the update: a second run whose first step
    // already applied an update would disagree from step 1 on, not step 0.
    TrainState st2 = init_train_state(data, cfg, 11);
    train_steps(st2, data, 1);
    CHECK(st2.trace[0].total == st.trace[0].total);
}

TEST_CASE("training is deterministic in the seed") {
    const auto data = axis_pair();
    const TrainConfig cfg = small_config();
    const TrainState a = alternate_train(data, cfg, 6, 31);
    const TrainState b = alternate_train(data, cfg, 6, 31);
    const TrainState c = alternate_train(data, cfg, 6, 32);
    CHECK(param_hash(a.siren) == param_hash(b.siren));
    CHECK(param_hash(a.recon) == param_hash(b.recon));
    CHECK(param_hash(a.siren) != param_hash(c.siren));
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t t = 0; t < a.trace.size(); ++t) {
        CHECK(a.trace[t].total == b.trace[t].total);
        CHECK(a.trace[t].dipole == b.trace[t].dipole);
    }
}

TEST_CASE("training is invariant to the worker count") {
    const auto data = axis_pair();
    const TrainConfig cfg = small_config();
    set_thread_count(1);
    const TrainState a = alternate_train(data, cfg, 4, 41);
    set_thread_count(4);
    const TrainState b = alternate_train(data, cfg, 4, 41);
    set_thread_count(0);
    CHECK(param_hash(a.siren) == param_hash(b.siren));
    CHECK(param_hash(a.recon) == param_hash(b.recon));
    for (std::size_t t = 0; t < a.trace.size(); ++t)
        CHECK(a.trace[t].total == b.trace[t].total);
}

TEST_CASE("lambda zero freezes the INR under the total objective") {
    const auto data = axis_pair();
    TrainConfig cfg = small_config();
    cfg.hp.lambda = 0.0;
    REQUIRE(cfg.inr_objective == InrObjective::Total);
    TrainState st = init_train_state(data, cfg, 51);
    const std::uint64_t siren_before = param_hash(st.siren);
    const std::uint64_t recon_before = param_hash(st.recon);
    train_steps(st, data, 6);
    CHECK(param_hash(st.siren) == siren_before);
    // The reconstructor keeps updating regardless.
    CHECK(param_hash(st.recon) != recon_before);
}

TEST_CASE("the dipole-only objective updates the INR even at lambda zero") {
    const auto data = axis_pair();
    TrainConfig cfg = small_config();
    cfg.hp.lambda = 0.0;
    cfg.inr_objective = InrObjective::Dipole;
    TrainState st = init_train_state(data, cfg, 52);
    const std::uint64_t before = param_hash(st.siren);
    train_steps(st, data, 6);
    CHECK(param_hash(st.siren) != before);
}

TEST_CASE("loss orientations: dedup, padding, and the too-small error") {
    auto data = axis_pair();
    data.push_back(make_sample(kGrid, Orientation::normalized(0, 0, -1), 3)); // collinear
    TrainConfig cfg = small_config();

    TrainState st = init_train_state(data, cfg, 61);
    CHECK(st.loss_orients.size() == 2); // +z and -z collapse

    cfg.hp.m_orientations = 5;
    TrainState padded = init_train_state(data, cfg, 61);
    REQUIRE(padded.loss_orients.size() == 5);
    // Data orientations come first, complements after, all pairwise distinct.
    CHECK(std::abs(padded.loss_orients[0].dot(data[0].orient)) >= 1.0 - 1e-12);
    CHECK(std::abs(padded.loss_orients[1].dot(data[1].orient)) >= 1.0 - 1e-12);
    for (std::size_t i = 0; i < 5; ++i) {
        const auto& o = padded.loss_orients[i];
        CHECK(std::abs(o.b[0] * o.b[0] + o.b[1] * o.b[1] + o.b[2] * o.b[2] - 1.0) < 1e-12);
        for (std::size_t j = i + 1; j < 5; ++j)
            CHECK(std::abs(o.dot(padded.loss_orients[j])) < 1.0 - 1e-6);
    }
    // Same inputs, same padding.
    TrainState padded2 = init_train_state(data, cfg, 62);
    for (std::size_t i = 0; i < 5; ++i)
        for (int d = 0; d < 3; ++d)
            CHECK(padded.loss_orients[i].b[d] == padded2.loss_orients[i].b[d]);

    cfg.hp.m_orientations = 1;
    CHECK_THROWS_AS(init_train_state(data, cfg, 61), ConfigError);
}

TEST_CASE("per-orientation data consistency needs full field coverage") {
    TrainConfig cfg = small_config();
    cfg.dc_mode = DcMode::PerOrientationFields;
    const auto data = axis_pair();
    CHECK_NOTHROW(init_train_state(data, cfg, 71));

    cfg.hp.m_orientations = 3; // one padded orientation has no observed field
    CHECK_THROWS_AS(init_train_state(data, cfg, 71), ConfigError);

    cfg.hp.m_orientations = 0;
    TrainState st = init_train_state(data, cfg, 71);
    CHECK_NOTHROW(train_steps(st, data, 4));
    CHECK(st.trace.size() == 4);
}

TEST_CASE("config validation") {
    TrainConfig cfg = small_config();
    CHECK_NOTHROW(cfg.validate());
    auto bad = cfg;
    bad.siren.in_dim = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lr_recon = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.lr_inr = -1e-4;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.recon_per_cycle = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.inr_per_cycle = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.hp.tau = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("empty datasets and short runs are rejected") {
    const TrainConfig cfg = small_config();
    CHECK_THROWS_AS(alternate_train({}, cfg, 4, 0), EmptyDataset);
    CHECK_THROWS_AS(alternate_train(axis_pair(), cfg, 1, 0), ConfigError);
    TrainState st = init_train_state(axis_pair(), cfg, 0);
    CHECK_THROWS_AS(train_steps(st, axis_pair(), 0), ConfigError);
    auto mixed = axis_pair();
    mixed[1].field = random_volume({{4, 4, 4}, {1, 1, 1}}, 5);
    CHECK_THROWS_AS(init_train_state(mixed, cfg, 0), GridMismatch);
}

TEST_CASE("enum spellings round-trip") {
    CHECK(dc_mode_from_string(to_string(DcMode::AsWritten)) == DcMode::AsWritten);
    CHECK(dc_mode_from_string(to_string(DcMode::PerOrientationFields)) ==
          DcMode::PerOrientationFields);
    CHECK(inr_objective_from_string(to_string(InrObjective::Total)) == InrObjective::Total);
    CHECK(inr_objective_from_string(to_string(InrObjective::Dipole)) == InrObjective::Dipole);
    CHECK_THROWS_AS(dc_mode_from_string("sideways"), ConfigError);
    CHECK_THROWS_AS(inr_objective_from_string("both"), ConfigError);
}

TEST_CASE("checkpoints restore the exact optimizer and module state") {
    namespace fs = std::filesystem;
    const auto data = axis_pair();
    const TrainConfig cfg = small_config();
    const fs::path path = fs::temp_directory_path() / "qsm_train_ckpt.qsmt";

    TrainState st = init_train_state(data, cfg, 81);
    train_steps(st, data, 5);
    save_train_checkpoint(st, path.string());
    TrainState back = load_train_checkpoint(path.string());

    CHECK(back.iteration == st.iteration);
    CHECK(param_hash(back.siren) == param_hash(st.siren));
    CHECK(param_hash(back.recon) == param_hash(st.recon));
    CHECK(back.adam_recon.t == st.adam_recon.t);
    CHECK(back.adam_siren.t == st.adam_siren.t);
    CHECK(back.adam_recon.m == st.adam_recon.m);
    CHECK(back.adam_recon.v == st.adam_recon.v);
    CHECK(back.adam_siren.m == st.adam_siren.m);
    CHECK(back.adam_siren.v == st.adam_siren.v);
    CHECK(back.cfg.hp.tau == cfg.hp.tau);
    CHECK(back.cfg.lr_inr == cfg.lr_inr);
    CHECK(back.cfg.recon_channels == cfg.recon_channels);
    CHECK(back.cfg.dc_mode == cfg.dc_mode);
    CHECK(back.cfg.inr_objective == cfg.inr_objective);
    REQUIRE(back.loss_orients.size() == st.loss_orients.size());
    for (std::size_t i = 0; i < st.loss_orients.size(); ++i)
        for (int d = 0; d < 3; ++d)
            CHECK(back.loss_orients[i].b[d] == st.loss_orients[i].b[d]);
    fs::remove(path);
}

TEST_CASE("resuming from a checkpoint continues the run bit for bit") {
    namespace fs = std::filesystem;
    const auto data = axis_pair();
    const TrainConfig cfg = small_config();
    const fs::path path = fs::temp_directory_path() / "qsm_train_resume.qsmt";

    const TrainState straight = alternate_train(data, cfg, 10, 91);

    TrainState st = init_train_state(data, cfg, 91);
    train_steps(st, data, 5);
    save_train_checkpoint(st, path.string());
    TrainState resumed = load_train_checkpoint(path.string());
    train_steps(resumed, data, 5);

    CHECK(resumed.iteration == straight.iteration);
    CHECK(param_hash(resumed.siren) == param_hash(straight.siren));
    CHECK(param_hash(resumed.recon) == param_hash(straight.recon));
    // The resumed trace covers only the new steps, numbered from where the
    // checkpoint stopped.
    REQUIRE(resumed.trace.size() == 5);
    CHECK(resumed.trace.front().step == 5);
    CHECK(resumed.trace.back().total == straight.trace.back().total);
    fs::remove(path);
}

TEST_CASE("a non-checkpoint file is rejected on load") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "qsm_not_a_ckpt.qsmt";
    SirenNet net(SirenSpec{2, 4, 30.0, 6, 1}, 0);
    save_siren(net, path.string());
    CHECK_THROWS_AS(load_train_checkpoint(path.string()), IoError);
    fs::remove(path);
}

TEST_CASE("trace CSV format") {
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "qsm_trace.csv";
    std::vector<TraceRow> trace(2);
    trace[0] = {0, 'R', 0.125, 1.0 / 3.0, 0.25, 2.0, 2.5833333333333335, 0.9};
    trace[1] = {1, 'I', 0.0625, 0.1, 0.2, 0.3, 0.6, 0.2425};
    write_trace_csv(trace, path.string());

    std::FILE* f = std::fopen(path.string().c_str(), "rb");
    REQUIRE(f != nullptr);
    char line[512];
    REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
    CHECK(std::string(line) == "step,phase,recon,inr,fill,dc,dipole,total\n");
    for (const auto& row : trace) {
        REQUIRE(std::fgets(line, sizeof line, f) != nullptr);
        int step = -1;
        char phase = '?';
        double vals[6];
        REQUIRE(std::sscanf(line, "%d,%c,%lg,%lg,%lg,%lg,%lg,%lg", &step, &phase, &vals[0],
                            &vals[1], &vals[2], &vals[3], &vals[4], &vals[5]) == 8);
        CHECK(step == row.step);
        CHECK(phase == row.phase);
        // %.17g round-trips doubles exactly.
        CHECK(vals[0] == row.recon);
        CHECK(vals[1] == row.inr);
        CHECK(vals[2] == row.fill);
        CHECK(vals[3] == row.dc);
        CHECK(vals[4] == row.dipole);
        CHECK(vals[5] == row.total);
    }
    std::fclose(f);
    fs::remove(path);
}
