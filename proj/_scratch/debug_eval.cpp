#include <cstdio>
#include "metagrad/harness/checkpoint.hpp"
#include "metagrad/harness/config.hpp"
#include "metagrad/harness/runner.hpp"

using namespace metagrad;
using namespace metagrad::harness;

int main(int argc, char** argv) {
    LoadedCheckpoint lc = load_checkpoint(argv[1]);
    ExperimentConfig cfg = parse_config_text(lc.ckpt.config_text);
    DataBundle data = build_data(cfg);

    auto train_eps = data::fixed_eval_set(data.pool, data.split, data::Section::meta_train,
                                          cfg.dataset.n_way, cfg.dataset.k_shot,
                                          cfg.dataset.q_targets, 555, cfg.run.precision, 50);
    auto val_eps = data::fixed_eval_set(data.pool, data.split, data::Section::meta_val,
                                        cfg.dataset.n_way, cfg.dataset.k_shot,
                                        cfg.dataset.q_targets, 556, cfg.run.precision, 50);
    EvalResult tr = evaluate(cfg, {&lc.ckpt.state}, train_eps);
    EvalResult va = evaluate(cfg, {&lc.ckpt.state}, val_eps);
    std::printf("train-section eval acc %.4f loss %.4f\n", tr.accuracy, tr.mean_loss);
    std::printf("val-section   eval acc %.4f loss %.4f\n", va.accuracy, va.mean_loss);
    return 0;
}
