#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "qsm/inversion.hpp"
#include "qsm/losses.hpp"
#include "qsm/phantom.hpp"
#include "qsm/trainer.hpp"

namespace qsm {

// Loss-weight sweep: explicit (w_model, w_grad, w_dipole) rows plus an
// optional cartesian product of per-weight lists. expand() concatenates the
// rows first, then the product in w_model-major order, deduplicated.
struct SweepSpec {
    std::vector<std::array<double, 3>> combos;
    std::vector<double> w_model;
    std::vector<double> w_grad;
    std::vector<double> w_dipole;

    bool empty() const;
    std::vector<std::array<double, 3>> expand() const;
};

struct OrientationSweepSpec {
    int count = 18;
    double cap_deg = 30.0;
    std::uint64_t seed = 11;
};

// The whole experiment file; every field has a concrete value after parsing.
struct ExperimentConfig {
    PhantomSpec phantom;
    NoiseSpec noise;
    std::vector<Orientation> orientations{Orientation{}};
    TkdConfig tkd;
    double cosmos_damping = 0.0;
    TrainConfig train; // train.hp mirrors the "hyper" section
    int steps = 2000;
    SweepSpec sweep;
    OrientationSweepSpec orientation_sweep;
    std::uint64_t seed = 0;
    std::string output_dir = "out";

    void validate() const;
};

// Strict parse: unknown keys anywhere raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical minified serialization of everything that affects one sweep
// combination's training outputs; its FNV-1a hash is the resume token.
std::string canonical_config_json(const ExperimentConfig& cfg,
                                  const std::array<double, 3>& combo);
std::uint64_t config_hash(const ExperimentConfig& cfg, const std::array<double, 3>& combo);

} // namespace qsm
