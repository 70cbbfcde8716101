#include "metagrad/harness/runner.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <numeric>
#include <tuple>

#include "metagrad/autodiff.hpp"
#include "metagrad/data/omniglot.hpp"
#include "metagrad/ops.hpp"

namespace fs = std::filesystem;

namespace metagrad::harness {

DataBundle build_data(const ExperimentConfig& cfg) {
    DataBundle out;
    const DType dt = cfg.run.precision;
    if (cfg.dataset.kind == "omniglot") {
        data::ClassPool base = data::load_omniglot(cfg.dataset.root, cfg.dataset.image_size);
        out.split = data::split_classes(base, cfg.dataset.split_seed);
        out.pool = cfg.dataset.rotations ? data::augment_rotations(base, out.split)
                                         : std::move(base);
    } else {
        Rng pool_rng(cfg.dataset.synth_seed);
        data::ClassPool base = data::synth_glyph_pool(
            cfg.dataset.classes, cfg.dataset.instances_per_class, cfg.dataset.image_size,
            cfg.dataset.noise, cfg.dataset.jitter_px, pool_rng);
        const std::size_t n = base.classes.size();
        out.split = data::split_counts(
            base, cfg.dataset.split_seed,
            n - static_cast<std::size_t>(cfg.dataset.val_classes + cfg.dataset.test_classes),
            static_cast<std::size_t>(cfg.dataset.val_classes),
            static_cast<std::size_t>(cfg.dataset.test_classes));
        out.pool = cfg.dataset.rotations ? data::augment_rotations(base, out.split)
                                         : std::move(base);
    }
    out.val_set = data::fixed_eval_set(out.pool, out.split, data::Section::meta_val,
                                       cfg.dataset.n_way, cfg.dataset.k_shot,
                                       cfg.dataset.q_targets, cfg.dataset.eval_seed, dt,
                                       cfg.run.val_episodes);
    out.test_set = data::fixed_eval_set(out.pool, out.split, data::Section::meta_test,
                                        cfg.dataset.n_way, cfg.dataset.k_shot,
                                        cfg.dataset.q_targets, cfg.dataset.eval_seed + 1, dt,
                                        cfg.run.test_episodes);
    return out;
}

EvalResult evaluate(const ExperimentConfig& cfg,
                    const std::vector<const meta::MetaState*>& states,
                    const std::vector<data::Episode>& episodes) {
    if (states.empty() || episodes.empty())
        throw ShapeError("evaluate: need at least one state and one episode");
    for (std::size_t i = 1; i < states.size(); ++i)
        states[0]->theta0.require_compatible(states[i]->theta0, "evaluate(ensemble)");

    const int n_eval =
        cfg.run.eval_inner_steps > 0 ? cfg.run.eval_inner_steps : cfg.meta.inner_steps;

    auto run_episode = [&](const data::Episode& ep) {
        autodiff::NoRecordGuard ng;
        std::vector<Tensor> member_probs;
        double loss_sum = 0.0;
        for (const meta::MetaState* st : states) {
            nn::BatchNormState bn = st->bn; // working copy; never written back
            meta::NetworkTaskModel model(cfg.network, bn);
            nn::StatsRecorder discard;
            meta::AdaptOptions opt;
            opt.n_steps = n_eval;
            opt.order = meta::Order::first;
            opt.purpose = meta::AdaptPurpose::inference;
            opt.fixed_alpha = cfg.meta.fixed_alpha;
            opt.inner_lrs = cfg.meta.toggles.lslr ? &st->inner_lrs : nullptr;
            opt.recorder = &discard;
            auto traj = meta::adapt(model, st->theta0, ep.support_x, ep.support_y, opt);
            Tensor lg = model.logits(traj.params.back(), ep.target_x, n_eval,
                                     nn::ForwardMode::eval, nullptr);
            loss_sum += cross_entropy(lg, ep.target_y).item();
            member_probs.push_back(softmax(lg));
        }
        auto pred = ensemble_argmax(member_probs);
        std::size_t hits = 0;
        for (std::size_t i = 0; i < pred.size(); ++i)
            if (pred[i] == ep.target_y[i]) ++hits;
        return std::pair<double, double>{
            static_cast<double>(hits) / static_cast<double>(pred.size()),
            loss_sum / static_cast<double>(states.size())};
    };

    std::vector<double> accs(episodes.size()), losses(episodes.size());
    const int parallel = std::max(1, cfg.meta.parallel_tasks);
    if (parallel == 1) {
        for (std::size_t i = 0; i < episodes.size(); ++i)
            std::tie(accs[i], losses[i]) = run_episode(episodes[i]);
    } else {
        for (std::size_t start = 0; start < episodes.size();
             start += static_cast<std::size_t>(parallel)) {
            const std::size_t end =
                std::min(episodes.size(), start + static_cast<std::size_t>(parallel));
            std::vector<std::future<std::pair<double, double>>> futs;
            for (std::size_t i = start; i < end; ++i)
                futs.push_back(std::async(std::launch::async, run_episode, episodes[i]));
            for (std::size_t i = start; i < end; ++i)
                std::tie(accs[i], losses[i]) = futs[i - start].get();
        }
    }

    EvalResult r;
    for (double a : accs) r.accuracy += a;
    r.accuracy /= static_cast<double>(accs.size());
    for (double l : losses) r.mean_loss += l;
    r.mean_loss /= static_cast<double>(losses.size());
    if (accs.size() > 1) {
        double var = 0.0;
        for (double a : accs) var += (a - r.accuracy) * (a - r.accuracy);
        var /= static_cast<double>(accs.size() - 1);
        r.stderr_tasks = std::sqrt(var / static_cast<double>(accs.size()));
    }
    return r;
}

std::vector<std::int64_t> ensemble_argmax(const std::vector<Tensor>& member_probs) {
    if (member_probs.empty()) throw ShapeError("ensemble_argmax: no members");
    autodiff::NoRecordGuard ng;
    Tensor avg = member_probs[0];
    for (std::size_t i = 1; i < member_probs.size(); ++i) avg = add(avg, member_probs[i]);
    avg = scale(avg, 1.0 / static_cast<double>(member_probs.size()));
    return argmax_rows(avg);
}

std::vector<int> select_top3(const std::vector<double>& val_accs) {
    if (val_accs.size() < 3)
        throw ShapeError("select_top3: need >= 3 epochs, got " +
                         std::to_string(val_accs.size()));
    std::vector<int> idx(val_accs.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return val_accs[static_cast<std::size_t>(a)] > val_accs[static_cast<std::size_t>(b)];
    });
    return {idx[0], idx[1], idx[2]};
}

EvalResult test_with_ensemble(const ExperimentConfig& cfg,
                              const std::vector<std::string>& checkpoint_paths,
                              const std::vector<data::Episode>& episodes) {
    std::vector<Checkpoint> ckpts;
    for (const auto& p : checkpoint_paths) ckpts.push_back(load_checkpoint(p).ckpt);
    std::vector<const meta::MetaState*> states;
    for (const auto& c : ckpts) states.push_back(&c.state);
    return evaluate(cfg, states, episodes);
}

namespace {

std::string seed_dir(const ExperimentConfig& cfg, std::uint64_t seed) {
    return cfg.run.out_dir + "/seed" + std::to_string(seed);
}

std::string ckpt_path(const ExperimentConfig& cfg, std::uint64_t seed, int epoch) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "/ckpt_epoch%04d.mgck", epoch);
    return seed_dir(cfg, seed) + buf;
}

} // namespace

SeedRunResult run_seed(const ExperimentConfig& cfg, const DataBundle& data, std::uint64_t seed,
                       const std::optional<Checkpoint>& resume) {
    SeedRunResult result;
    result.seed = seed;
    char run_id[24];
    std::snprintf(run_id, sizeof(run_id), "%016llx",
                  static_cast<unsigned long long>(cfg.digest()));

    autodiff::set_finite_check(cfg.run.check_finite);
    fs::create_directories(seed_dir(cfg, seed));

    RngStreams streams = RngStreams::for_seed(seed);
    meta::MetaState state;
    Rng train_rng = streams.train;
    int start_epoch = 0;
    if (resume) {
        state = resume->state;
        train_rng.restore_state(resume->train_rng_state);
        start_epoch = resume->epoch;
        // Validation history before the resume point is reconstructed from
        // the metrics file when summarizing; epochs re-run from here.
    } else {
        state = meta::init_meta_state(cfg.network, cfg.meta, streams.init, cfg.run.precision);
    }

    result.metrics_path = seed_dir(cfg, seed) + "/metrics.tsv";
    MetricsWriter metrics(result.metrics_path, /*append=*/resume.has_value());

    double ms_first_sum = 0.0, ms_second_sum = 0.0;
    std::int64_t n_first = 0, n_second = 0;

    for (int epoch = start_epoch; epoch < cfg.run.epochs && !result.diverged; ++epoch) {
        for (int it = 0; it < cfg.run.iterations; ++it) {
            const std::int64_t giter =
                static_cast<std::int64_t>(epoch) * cfg.run.iterations + it;
            std::vector<data::Episode> batch;
            batch.reserve(static_cast<std::size_t>(cfg.meta.task_batch));
            for (int b = 0; b < cfg.meta.task_batch; ++b)
                batch.push_back(data::sample_episode(
                    data.pool, data.split, data::Section::meta_train, cfg.dataset.n_way,
                    cfg.dataset.k_shot, cfg.dataset.q_targets, train_rng, cfg.run.precision,
                    "train-" + std::to_string(giter) + "-" + std::to_string(b)));

            MetricsRecord rec;
            rec.run_id = run_id;
            rec.seed = seed;
            rec.epoch = epoch;
            rec.iteration = giter;
            try {
                meta::OuterMetrics m = meta::outer_update(cfg.network, cfg.meta, state, batch,
                                                          epoch, giter);
                rec.train_loss = m.loss;
                rec.train_acc = m.accuracy;
                rec.beta = m.beta;
                rec.order = m.order == meta::Order::first ? "first" : "second";
                rec.wall_ms = m.wall_ms;
                rec.support_losses = m.support_losses;
                rec.target_losses = m.target_losses;
                rec.v_weights = m.v;
                metrics.write(rec);
                if (m.order == meta::Order::first) {
                    ms_first_sum += m.wall_ms;
                    ++n_first;
                } else {
                    ms_second_sum += m.wall_ms;
                    ++n_second;
                }
            } catch (const NumericError& e) {
                result.diverged = true;
                result.diverged_at = std::to_string(epoch) + ":" + std::to_string(giter);
                rec.kind = "diverged";
                rec.train_loss = std::nan("");
                metrics.write(rec);
                break;
            }
        }
        if (result.diverged) break;

        EvalResult val = evaluate(cfg, {&state}, data.val_set);
        result.val_accs.push_back(val.accuracy);
        result.val_losses.push_back(val.mean_loss);

        MetricsRecord erec;
        erec.kind = "epoch";
        erec.run_id = run_id;
        erec.seed = seed;
        erec.epoch = epoch;
        erec.iteration = static_cast<std::int64_t>(epoch + 1) * cfg.run.iterations - 1;
        erec.val_acc = val.accuracy;
        erec.val_loss = val.mean_loss;
        erec.v_weights = state.loss_weights;
        metrics.write(erec);

        Checkpoint ckpt;
        ckpt.config_text = cfg.canonical_text();
        ckpt.config_digest = cfg.digest();
        ckpt.seed = seed;
        ckpt.epoch = epoch + 1;
        ckpt.iteration = static_cast<std::int64_t>(epoch + 1) * cfg.run.iterations;
        ckpt.dtype = cfg.run.precision;
        ckpt.train_rng_state = train_rng.serialize_state();
        ckpt.state = state;
        const std::string path = ckpt_path(cfg, seed, epoch);
        save_checkpoint(path, ckpt);
        result.checkpoint_paths.push_back(path);
    }

    if (n_first > 0) result.ms_per_iter_first = ms_first_sum / static_cast<double>(n_first);
    if (n_second > 0) result.ms_per_iter_second = ms_second_sum / static_cast<double>(n_second);

    if (!result.val_accs.empty()) {
        auto best = std::max_element(result.val_accs.begin(), result.val_accs.end());
        result.best_val_epoch = static_cast<int>(best - result.val_accs.begin()) + start_epoch;
        result.best_val_acc = *best;
    }

    if (!result.diverged && result.val_accs.size() >= 3) {
        result.top3_epochs = select_top3(result.val_accs);
        for (int& e : result.top3_epochs) e += start_epoch;
        std::vector<std::string> paths;
        for (int e : result.top3_epochs) paths.push_back(ckpt_path(cfg, seed, e));
        result.test = test_with_ensemble(cfg, paths, data.test_set);
    }
    return result;
}

void write_summary(const std::string& path, const ExperimentConfig& cfg,
                   const std::vector<SeedRunResult>& seeds) {
    std::ofstream out(path);
    if (!out) throw IoError("summary: cannot open '" + path + "'");
    out << "[run]\n";
    out << "config_digest = " << cfg.digest() << "\n";
    out << "seeds = ";
    for (std::size_t i = 0; i < seeds.size(); ++i) out << (i ? "," : "") << seeds[i].seed;
    out << "\n";

    std::vector<double> best_accs, test_accs;
    for (const auto& s : seeds) {
        out << "\n[seed-" << s.seed << "]\n";
        out << "status = " << (s.diverged ? "diverged" : "completed") << "\n";
        if (s.diverged) out << "diverged_at = " << s.diverged_at << "\n";
        out << "best_val_acc = " << s.best_val_acc << "\n";
        out << "best_val_epoch = " << s.best_val_epoch << "\n";
        if (!s.top3_epochs.empty()) {
            out << "top3_epochs = ";
            for (std::size_t i = 0; i < s.top3_epochs.size(); ++i)
                out << (i ? "," : "") << s.top3_epochs[i];
            out << "\n";
        }
        if (s.test) {
            out << "test_acc = " << s.test->accuracy << "\n";
            out << "test_stderr_tasks = " << s.test->stderr_tasks << "\n";
        }
        out << "ms_per_iter_first_order = " << s.ms_per_iter_first << "\n";
        out << "ms_per_iter_second_order = " << s.ms_per_iter_second << "\n";
        if (!s.diverged) {
            best_accs.push_back(s.best_val_acc);
            if (s.test) test_accs.push_back(s.test->accuracy);
        }
    }

    auto mean_std = [](const std::vector<double>& v) {
        double m = 0.0, sd = 0.0;
        if (v.empty()) return std::pair<double, double>{std::nan(""), std::nan("")};
        for (double x : v) m += x;
        m /= static_cast<double>(v.size());
        if (v.size() > 1) {
            for (double x : v) sd += (x - m) * (x - m);
            sd = std::sqrt(sd / static_cast<double>(v.size() - 1));
        }
        return std::pair<double, double>{m, sd};
    };

    out << "\n[aggregate]\n";
    out << "completed_seeds = " << best_accs.size() << "\n";
    auto [bm, bs] = mean_std(best_accs);
    out << "best_val_acc_mean = " << bm << "\n";
    out << "best_val_acc_std_seeds = " << bs << "\n";
    auto [tm, ts] = mean_std(test_accs);
    out << "test_acc_mean = " << tm << "\n";
    out << "test_acc_std_seeds = " << ts << "\n";
}

RunArtifacts run_training(const ExperimentConfig& cfg,
                          const std::optional<std::string>& resume_path,
                          const std::optional<std::uint64_t>& only_seed) {
    fs::create_directories(cfg.run.out_dir);
    DataBundle data = build_data(cfg);

    std::optional<Checkpoint> resume;
    if (resume_path) {
        LoadedCheckpoint lc = load_checkpoint(*resume_path, cfg.digest());
        if (lc.digest_mismatch)
            std::fprintf(stderr,
                         "warning: checkpoint config digest differs from the running config\n");
        resume = std::move(lc.ckpt);
    }

    RunArtifacts artifacts;
    for (std::uint64_t seed : cfg.run.seeds) {
        if (only_seed && seed != *only_seed) continue;
        if (resume && resume->seed != seed) continue;
        artifacts.seeds.push_back(run_seed(cfg, data, seed, resume));
    }
    if (artifacts.seeds.empty())
        throw ConfigError("run_training: no seed selected (check --seed / --resume)");

    artifacts.summary_path = cfg.run.out_dir + "/summary.txt";
    write_summary(artifacts.summary_path, cfg, artifacts.seeds);
    return artifacts;
}

} // namespace metagrad::harness
