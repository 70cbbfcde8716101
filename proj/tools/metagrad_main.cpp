#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "metagrad/harness/checkpoint.hpp"
#include "metagrad/harness/config.hpp"
#include "metagrad/harness/runner.hpp"
#include "metagrad/nn/network.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergedAll = 4;

using namespace metagrad;
using namespace metagrad::harness;

ExperimentConfig resolve_config(const std::string& config_arg) {
    // Accept a preset name or a config file path.
    try {
        return preset(config_arg);
    } catch (const ConfigError&) {
        return load_config_file(config_arg);
    }
}

int cmd_train(const std::string& config_arg, std::optional<std::uint64_t> seed,
              std::optional<std::string> resume, std::optional<std::string> out) {
    ExperimentConfig cfg = resolve_config(config_arg);
    if (out) {
        cfg.run.out_dir = *out;
        cfg.finalize();
    }
    RunArtifacts artifacts = run_training(cfg, resume, seed);

    bool all_diverged = true;
    for (const auto& s : artifacts.seeds) {
        std::printf("seed %llu: %s", static_cast<unsigned long long>(s.seed),
                    s.diverged ? "diverged at " : "best val acc ");
        if (s.diverged)
            std::printf("%s\n", s.diverged_at.c_str());
        else
            std::printf("%.4f (epoch %d)\n", s.best_val_acc, s.best_val_epoch);
        if (s.test)
            std::printf("seed %llu: test acc %.4f +/- %.4f (top-3 ensemble)\n",
                        static_cast<unsigned long long>(s.seed), s.test->accuracy,
                        s.test->stderr_tasks);
        all_diverged = all_diverged && s.diverged;
    }
    std::printf("summary: %s\n", artifacts.summary_path.c_str());
    return all_diverged ? kExitDivergedAll : kExitOk;
}

int cmd_eval(const std::vector<std::string>& ckpts, const std::string& split) {
    LoadedCheckpoint first = load_checkpoint(ckpts.front());
    ExperimentConfig cfg = parse_config_text(first.ckpt.config_text);
    DataBundle data = build_data(cfg);
    const auto& episodes = split == "test" ? data.test_set : data.val_set;

    EvalResult r;
    if (ckpts.size() == 1) {
        r = evaluate(cfg, {&first.ckpt.state}, episodes);
    } else {
        r = test_with_ensemble(cfg, ckpts, episodes);
    }
    std::printf("%s accuracy: %.4f +/- %.4f (stderr over %zu tasks), mean loss %.4f\n",
                split.c_str(), r.accuracy, r.stderr_tasks, episodes.size(), r.mean_loss);
    return kExitOk;
}

int cmd_inspect(const std::string& path) {
    LoadedCheckpoint lc = load_checkpoint(path);
    const Checkpoint& c = lc.ckpt;
    ExperimentConfig cfg = parse_config_text(c.config_text);

    std::printf("checkpoint: %s\n", path.c_str());
    std::printf("  seed %llu, completed epochs %d, next iteration %lld, precision %s\n",
                static_cast<unsigned long long>(c.seed), c.epoch,
                static_cast<long long>(c.iteration), dtype_name(c.dtype));
    std::printf("  config digest %llu\n", static_cast<unsigned long long>(c.config_digest));

    std::printf("  loss weights v:");
    for (double v : c.state.loss_weights) std::printf(" %.4f", v);
    std::printf("\n");

    if (c.state.inner_lrs.empty()) {
        std::printf("  learned rates: (LSLR disabled; fixed alpha = %g)\n",
                    cfg.meta.fixed_alpha);
        return kExitOk;
    }
    std::printf("  learned per-layer per-step rates alpha:\n");
    auto groups = nn::layer_groups(c.state.theta0);
    std::printf("    %-8s", "layer");
    for (int i = 1; i <= cfg.meta.inner_steps; ++i) std::printf("  step%-5d", i);
    std::printf("\n");
    for (const auto& g : groups) {
        std::printf("    %-8s", g.c_str());
        for (int i = 1; i <= cfg.meta.inner_steps; ++i)
            std::printf("  %+.5f", c.state.inner_lrs.at("alpha/" + g + "/step" +
                                                        std::to_string(i)).item());
        std::printf("\n");
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"metagrad: few-shot meta-learning engine"};
    app.require_subcommand(1);

    std::string config_arg;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> resume, out;
    auto* train = app.add_subcommand("train", "train per the experiment config");
    train->add_option("--config", config_arg, "config file or preset name")->required();
    train->add_option("--seed", seed, "run only this seed");
    train->add_option("--resume", resume, "resume from a checkpoint");
    train->add_option("--out", out, "output directory override");

    std::vector<std::string> ckpts;
    std::string split = "val";
    auto* eval = app.add_subcommand("eval", "evaluate checkpoint(s) on a fixed task set");
    eval->add_option("--ckpt", ckpts, "checkpoint file(s); 3 files ensemble")->required();
    eval->add_option("--split", split, "val or test")->check(CLI::IsMember({"val", "test"}));

    std::string inspect_path;
    auto* inspect = app.add_subcommand("inspect", "print learned rates and loss weights");
    inspect->add_option("--ckpt", inspect_path, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_arg, seed, resume, out);
        if (eval->parsed()) return cmd_eval(ckpts, split);
        if (inspect->parsed()) return cmd_inspect(inspect_path);
    } catch (const metagrad::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const metagrad::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitError;
    }
    return kExitOk;
}
