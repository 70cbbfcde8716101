#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metagrad/meta/engine.hpp"
#include "metagrad/nn/network.hpp"

namespace metagrad::harness {

struct DatasetConfig {
    std::string kind = "synthetic"; // "omniglot" | "synthetic"
    std::string root;               // omniglot directory (METAGRAD_DATASET_ROOT overrides)
    int n_way = 5;
    int k_shot = 1;
    int q_targets = 15;
    std::uint64_t eval_seed = 99;
    std::uint64_t split_seed = 7;
    int image_size = 28;
    bool rotations = true; // 90-degree-increment class augmentation (omniglot)
    // synthetic pool knobs
    std::uint64_t synth_seed = 1234;
    int classes = 64;
    int instances_per_class = 20;
    double noise = 0.05;
    double jitter_px = 1.0;
    int val_classes = 12;
    int test_classes = 12;
};

struct RunConfig {
    int epochs = 150;
    int iterations = 500; // per epoch
    std::vector<std::uint64_t> seeds = {0, 1, 2};
    DType precision = DType::f32;
    std::string out_dir = "runs/default"; // METAGRAD_OUT_DIR overrides
    int val_episodes = 600;
    int test_episodes = 600;
    int eval_inner_steps = 0; // 0 = same as meta.inner_steps
    bool check_finite = false;
};

/// Full declarative description of a run. Network bn modes are derived from
/// the BNRS/BNWB toggles unless the [network] block pins them explicitly.
struct ExperimentConfig {
    DatasetConfig dataset;
    nn::NetworkSpec network;
    meta::MetaConfig meta;
    RunConfig run;

    void finalize(); // derive dependent fields, then validate
    void validate() const;
    std::string canonical_text() const;
    std::uint64_t digest() const;
};

std::uint64_t fnv1a64(const std::string& s);

ExperimentConfig parse_config_text(const std::string& text);
/// Parse a file and apply environment overrides (METAGRAD_DATASET_ROOT,
/// METAGRAD_OUT_DIR).
ExperimentConfig load_config_file(const std::string& path);

/// Shipped presets: "omniglot-paper", "omniglot-desk", "synthetic-ci".
ExperimentConfig preset(const std::string& name);
std::string preset_text(const std::string& name);

} // namespace metagrad::harness
