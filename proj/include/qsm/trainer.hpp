#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qsm/adam.hpp"
#include "qsm/dipole.hpp"
#include "qsm/grid.hpp"
#include "qsm/losses.hpp"
#include "qsm/recon.hpp"
#include "qsm/siren.hpp"

namespace qsm {

struct TrainSample {
    Volume3D field;
    Volume3D chi_label;
    Orientation orient;
};

// How the data-consistency residual pairs fields with kernels: the observed
// field against every kernel exactly as written, or one field per
// orientation when the dataset provides them.
enum class DcMode { AsWritten, PerOrientationFields };

// Which objective the INR phase minimizes; the total loss is the default,
// the dipole loss alone is the variant described alongside the schedule.
enum class InrObjective { Total, Dipole };

struct TrainConfig {
    HyperParams hp;
    SirenSpec siren;
    std::vector<int> recon_channels{1, 8, 8, 1};
    double lr_recon = 1e-3;
    double lr_inr = 1e-4;
    int recon_per_cycle = 1;
    int inr_per_cycle = 1;
    DcMode dc_mode = DcMode::AsWritten;
    InrObjective inr_objective = InrObjective::Total;

    void validate() const;
};

struct TraceRow {
    int step = 0;
    char phase = 'R'; // 'R' reconstructor update, 'I' INR update
    double recon = 0.0;
    double inr = 0.0;
    double fill = 0.0;
    double dc = 0.0;
    double dipole = 0.0;
    double total = 0.0;
};

struct TrainState {
    TrainConfig cfg;
    ConvReconstructor recon;
    SirenNet siren;
    AdamState adam_recon;
    AdamState adam_siren;
    std::vector<Orientation> loss_orients;
    int iteration = 0;
    std::vector<TraceRow> trace;

    char phase_at(int step) const {
        const int cycle = cfg.recon_per_cycle + cfg.inr_per_cycle;
        return (step % cycle) < cfg.recon_per_cycle ? 'R' : 'I';
    }
};

// Initializes both modules and the orientation set used by the dipole
// losses (the distinct data orientations, padded deterministically when
// hp.m_orientations asks for more).
TrainState init_train_state(const std::vector<TrainSample>& data,
                            const TrainConfig& cfg, std::uint64_t seed);

// Runs additional alternating steps on an existing state. Each step updates
// exactly one module; trace rows record the losses the step saw before its
// update.
void train_steps(TrainState& state, const std::vector<TrainSample>& data, int steps);

// init + train in one call. steps >= 2 so both phases run.
TrainState alternate_train(const std::vector<TrainSample>& data,
                           const TrainConfig& cfg, int steps, std::uint64_t seed);

// FNV-1a over the raw parameter bytes; the phase-isolation probes.
std::uint64_t param_hash(const SirenNet& net);
std::uint64_t param_hash(const ConvReconstructor& recon);

// Config/checkpoint spellings of the enums.
const char* to_string(DcMode m);
DcMode dc_mode_from_string(const std::string& s);
const char* to_string(InrObjective o);
InrObjective inr_objective_from_string(const std::string& s);

void save_train_checkpoint(const TrainState& state, const std::string& path);
TrainState load_train_checkpoint(const std::string& path);

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

} // namespace qsm
