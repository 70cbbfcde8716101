#pragma once

#include <optional>
#include <string>
#include <vector>

#include "metagrad/data/class_pool.hpp"
#include "metagrad/harness/checkpoint.hpp"
#include "metagrad/harness/config.hpp"
#include "metagrad/harness/metrics.hpp"

namespace metagrad::harness {

/// Pool, split and the fixed evaluation sets of a run. Identical for every
/// seed of the run (the paper protocol fixes the class split and the
/// evaluation tasks; only training dynamics depend on the run seed).
struct DataBundle {
    data::ClassPool pool;
    data::SplitAssignment split;
    std::vector<data::Episode> val_set;
    std::vector<data::Episode> test_set;
};

DataBundle build_data(const ExperimentConfig& cfg);

struct EvalResult {
    double accuracy = 0.0;
    double stderr_tasks = 0.0; // standard error over episodes
    double mean_loss = 0.0;
};

/// Adapt on each episode's support set (first-order SGD suffices at
/// inference), predict targets with BN slot-N eval statistics, and score.
/// Multiple states ensemble by averaging per-target softmax probabilities
/// before the argmax. Deterministic; never mutates the states.
EvalResult evaluate(const ExperimentConfig& cfg,
                    const std::vector<const meta::MetaState*>& states,
                    const std::vector<data::Episode>& episodes);

/// Ensemble combination rule: average the members' per-target softmax
/// probability vectors, then argmax of the average.
std::vector<std::int64_t> ensemble_argmax(const std::vector<Tensor>& member_probs);

/// Indices of the 3 highest validation accuracies; ties resolve toward the
/// earlier epoch. Fewer than 3 entries is a selection error.
std::vector<int> select_top3(const std::vector<double>& val_accs);

/// Load 3 checkpoints and evaluate their softmax-average ensemble.
EvalResult test_with_ensemble(const ExperimentConfig& cfg,
                              const std::vector<std::string>& checkpoint_paths,
                              const std::vector<data::Episode>& episodes);

struct SeedRunResult {
    std::uint64_t seed = 0;
    bool diverged = false;
    std::string diverged_at; // "epoch:iteration"
    std::vector<double> val_accs;
    std::vector<double> val_losses;
    double best_val_acc = 0.0;
    int best_val_epoch = -1;
    std::vector<int> top3_epochs;
    std::optional<EvalResult> test;
    std::optional<EvalResult> best_val; // evaluation numbers of the best epoch
    double ms_per_iter_first = std::nan("");
    double ms_per_iter_second = std::nan("");
    std::string metrics_path;
    std::vector<std::string> checkpoint_paths;
};

struct RunArtifacts {
    std::vector<SeedRunResult> seeds;
    std::string summary_path;
};

/// Train one seed: epochs x iterations outer updates, per-epoch fixed-set
/// validation + checkpoint; a non-finite meta-loss marks the run diverged
/// and stops it (divergence is data, not a crash).
SeedRunResult run_seed(const ExperimentConfig& cfg, const DataBundle& data, std::uint64_t seed,
                       const std::optional<Checkpoint>& resume = std::nullopt);

/// All seeds of the config + summary file. Throws nothing on divergence;
/// inspect the per-seed results.
RunArtifacts run_training(const ExperimentConfig& cfg,
                          const std::optional<std::string>& resume_path = std::nullopt,
                          const std::optional<std::uint64_t>& only_seed = std::nullopt);

void write_summary(const std::string& path, const ExperimentConfig& cfg,
                   const std::vector<SeedRunResult>& seeds);

} // namespace metagrad::harness
