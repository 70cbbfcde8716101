#include "metagrad/harness/config.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace metagrad::harness {

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

namespace {

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key '" + key + "' expects a bool, got '" + v + "'");
}

long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        long long x = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
    }
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

const char* bn_stats_name(nn::BnStatsMode m) {
    switch (m) {
        case nn::BnStatsMode::batch: return "batch";
        case nn::BnStatsMode::shared_running: return "shared-running";
        case nn::BnStatsMode::per_step_running: return "per-step-running";
    }
    return "?";
}

nn::BnStatsMode bn_stats_from(const std::string& v) {
    if (v == "batch") return nn::BnStatsMode::batch;
    if (v == "shared-running") return nn::BnStatsMode::shared_running;
    if (v == "per-step-running") return nn::BnStatsMode::per_step_running;
    throw ConfigError("config: unknown bn_stats_mode '" + v + "'");
}

const char* bn_params_name(nn::BnParamsMode m) {
    return m == nn::BnParamsMode::shared ? "shared" : "per-step";
}

nn::BnParamsMode bn_params_from(const std::string& v) {
    if (v == "shared") return nn::BnParamsMode::shared;
    if (v == "per-step") return nn::BnParamsMode::per_step;
    throw ConfigError("config: unknown bn_params_mode '" + v + "'");
}

struct ParseState {
    ExperimentConfig cfg;
    bool bn_stats_explicit = false;
    bool bn_params_explicit = false;
};

using Setter = std::function<void(ParseState&, const std::string&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"dataset.kind",
         [](ParseState& s, const std::string& k, const std::string& v) {
             if (v != "omniglot" && v != "synthetic")
                 throw ConfigError("config: dataset.kind must be omniglot or synthetic");
             (void)k;
             s.cfg.dataset.kind = v;
         }},
        {"dataset.root", [](ParseState& s, const std::string&, const std::string& v) { s.cfg.dataset.root = v; }},
        {"dataset.n_way", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.n_way = static_cast<int>(parse_int(k, v)); }},
        {"dataset.k_shot", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.k_shot = static_cast<int>(parse_int(k, v)); }},
        {"dataset.q_targets", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.q_targets = static_cast<int>(parse_int(k, v)); }},
        {"dataset.eval_seed", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.eval_seed = static_cast<std::uint64_t>(parse_int(k, v)); }},
        {"dataset.split_seed", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.split_seed = static_cast<std::uint64_t>(parse_int(k, v)); }},
        {"dataset.image_size", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.image_size = static_cast<int>(parse_int(k, v)); }},
        {"dataset.rotations", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.rotations = parse_bool(k, v); }},
        {"dataset.synth_seed", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.synth_seed = static_cast<std::uint64_t>(parse_int(k, v)); }},
        {"dataset.classes", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.classes = static_cast<int>(parse_int(k, v)); }},
        {"dataset.instances_per_class", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.instances_per_class = static_cast<int>(parse_int(k, v)); }},
        {"dataset.noise", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.noise = parse_double(k, v); }},
        {"dataset.jitter_px", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.jitter_px = parse_double(k, v); }},
        {"dataset.val_classes", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.val_classes = static_cast<int>(parse_int(k, v)); }},
        {"dataset.test_classes", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.dataset.test_classes = static_cast<int>(parse_int(k, v)); }},

        {"network.kind",
         [](ParseState& s, const std::string&, const std::string& v) {
             if (v == "conv")
                 s.cfg.network.kind = nn::NetworkKind::conv;
             else if (v == "mlp")
                 s.cfg.network.kind = nn::NetworkKind::mlp;
             else
                 throw ConfigError("config: network.kind must be conv or mlp");
         }},
        {"network.in_channels", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.in_channels = static_cast<int>(parse_int(k, v)); }},
        {"network.conv_layers", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.conv_layers = static_cast<int>(parse_int(k, v)); }},
        {"network.filters", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.filters = static_cast<int>(parse_int(k, v)); }},
        {"network.kernel", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.kernel = static_cast<int>(parse_int(k, v)); }},
        {"network.stride", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.stride = static_cast<int>(parse_int(k, v)); }},
        {"network.padding", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.padding = static_cast<int>(parse_int(k, v)); }},
        {"network.input_dim", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.input_dim = static_cast<int>(parse_int(k, v)); }},
        {"network.hidden",
         [](ParseState& s, const std::string& k, const std::string& v) {
             s.cfg.network.hidden.clear();
             for (const auto& item : split_list(v))
                 s.cfg.network.hidden.push_back(static_cast<int>(parse_int(k, item)));
         }},
        {"network.bn_stats_mode",
         [](ParseState& s, const std::string&, const std::string& v) {
             if (v == "auto") return;
             s.cfg.network.bn_stats = bn_stats_from(v);
             s.bn_stats_explicit = true;
         }},
        {"network.bn_params_mode",
         [](ParseState& s, const std::string&, const std::string& v) {
             if (v == "auto") return;
             s.cfg.network.bn_params = bn_params_from(v);
             s.bn_params_explicit = true;
         }},
        {"network.bn_bias_only", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.bn_bias_only = parse_bool(k, v); }},
        {"network.bn_eps", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.bn_eps = parse_double(k, v); }},
        {"network.bn_momentum", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.network.bn_momentum = parse_double(k, v); }},

        {"meta.inner_steps", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.inner_steps = static_cast<int>(parse_int(k, v)); }},
        {"meta.task_batch", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.task_batch = static_cast<int>(parse_int(k, v)); }},
        {"meta.alpha", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.fixed_alpha = parse_double(k, v); }},
        {"meta.alpha_init", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.alpha_init = parse_double(k, v); }},
        {"meta.msl", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.toggles.msl = parse_bool(k, v); }},
        {"meta.lslr", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.toggles.lslr = parse_bool(k, v); }},
        {"meta.bnrs", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.toggles.bnrs = parse_bool(k, v); }},
        {"meta.bnwb", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.toggles.bnwb = parse_bool(k, v); }},
        {"meta.da", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.toggles.da = parse_bool(k, v); }},
        {"meta.ca", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.toggles.ca = parse_bool(k, v); }},
        {"meta.da_switch_epoch", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.da_switch_epoch = static_cast<int>(parse_int(k, v)); }},
        {"meta.msl_horizon", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.msl.horizon_epochs = static_cast<int>(parse_int(k, v)); }},
        {"meta.msl_floor", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.msl.floor = parse_double(k, v); }},
        {"meta.include_pre_update_loss", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.msl.include_pre_update = parse_bool(k, v); }},
        {"meta.msl_per_iteration", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.msl.per_iteration = parse_bool(k, v); }},
        {"meta.lr_max", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.lr_max = parse_double(k, v); }},
        {"meta.lr_min", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.lr_min = parse_double(k, v); }},
        {"meta.parallel_tasks", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.parallel_tasks = static_cast<int>(parse_int(k, v)); }},
        {"meta.grad_clip", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.meta.grad_clip = parse_double(k, v); }},

        {"run.epochs", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.run.epochs = static_cast<int>(parse_int(k, v)); }},
        {"run.iterations", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.run.iterations = static_cast<int>(parse_int(k, v)); }},
        {"run.seeds",
         [](ParseState& s, const std::string& k, const std::string& v) {
             s.cfg.run.seeds.clear();
             for (const auto& item : split_list(v))
                 s.cfg.run.seeds.push_back(static_cast<std::uint64_t>(parse_int(k, item)));
         }},
        {"run.precision", [](ParseState& s, const std::string&, const std::string& v) { s.cfg.run.precision = dtype_from_name(v); }},
        {"run.out_dir", [](ParseState& s, const std::string&, const std::string& v) { s.cfg.run.out_dir = v; }},
        {"run.val_episodes", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.run.val_episodes = static_cast<int>(parse_int(k, v)); }},
        {"run.test_episodes", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.run.test_episodes = static_cast<int>(parse_int(k, v)); }},
        {"run.eval_inner_steps", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.run.eval_inner_steps = static_cast<int>(parse_int(k, v)); }},
        {"run.check_finite", [](ParseState& s, const std::string& k, const std::string& v) { s.cfg.run.check_finite = parse_bool(k, v); }},
    };
    return table;
}

} // namespace

void ExperimentConfig::finalize() {
    network.image_h = network.image_w = dataset.image_size;
    network.n_way = dataset.n_way;
    network.max_inner_steps = meta.inner_steps;
    meta.total_iterations = static_cast<std::int64_t>(run.epochs) * run.iterations;
    meta.iterations_per_epoch = run.iterations;
    validate();
}

void ExperimentConfig::validate() const {
    if (dataset.kind != "omniglot" && dataset.kind != "synthetic")
        throw ConfigError("config: dataset.kind must be omniglot or synthetic");
    if (dataset.n_way < 2) throw ConfigError("config: dataset.n_way must be >= 2");
    if (dataset.k_shot < 1 || dataset.q_targets < 1)
        throw ConfigError("config: k_shot and q_targets must be >= 1");
    if (dataset.kind == "synthetic") {
        if (dataset.val_classes + dataset.test_classes >= dataset.classes)
            throw ConfigError("config: synthetic pool needs training classes left after "
                              "val/test allocation");
        if (dataset.k_shot + dataset.q_targets > dataset.instances_per_class)
            throw ConfigError("config: k_shot + q_targets exceeds instances_per_class");
    }
    if (meta.inner_steps < 1) throw ConfigError("config: meta.inner_steps must be >= 1");
    if (meta.task_batch < 1) throw ConfigError("config: meta.task_batch must be >= 1");
    if (meta.parallel_tasks < 1) throw ConfigError("config: meta.parallel_tasks must be >= 1");
    if (meta.lr_max <= 0 || meta.lr_min < 0 || meta.lr_min > meta.lr_max)
        throw ConfigError("config: invalid lr range");
    if (run.epochs < 1 || run.iterations < 1)
        throw ConfigError("config: run.epochs and run.iterations must be >= 1");
    if (run.seeds.empty()) throw ConfigError("config: run.seeds must be non-empty");
    if (run.eval_inner_steps < 0 || run.eval_inner_steps > meta.inner_steps)
        throw ConfigError("config: run.eval_inner_steps must be in [0, inner_steps]");
    if (run.val_episodes < 1 || run.test_episodes < 1)
        throw ConfigError("config: evaluation episode counts must be >= 1");
    network.validate();
}

std::string ExperimentConfig::canonical_text() const {
    std::ostringstream os;
    os << "[dataset]\n";
    os << "kind = " << dataset.kind << "\n";
    os << "root = " << dataset.root << "\n";
    os << "n_way = " << dataset.n_way << "\n";
    os << "k_shot = " << dataset.k_shot << "\n";
    os << "q_targets = " << dataset.q_targets << "\n";
    os << "eval_seed = " << dataset.eval_seed << "\n";
    os << "split_seed = " << dataset.split_seed << "\n";
    os << "image_size = " << dataset.image_size << "\n";
    os << "rotations = " << (dataset.rotations ? "true" : "false") << "\n";
    os << "synth_seed = " << dataset.synth_seed << "\n";
    os << "classes = " << dataset.classes << "\n";
    os << "instances_per_class = " << dataset.instances_per_class << "\n";
    os << "noise = " << fmt_double(dataset.noise) << "\n";
    os << "jitter_px = " << fmt_double(dataset.jitter_px) << "\n";
    os << "val_classes = " << dataset.val_classes << "\n";
    os << "test_classes = " << dataset.test_classes << "\n";
    os << "\n[network]\n";
    os << "kind = " << (network.kind == nn::NetworkKind::conv ? "conv" : "mlp") << "\n";
    os << "in_channels = " << network.in_channels << "\n";
    os << "conv_layers = " << network.conv_layers << "\n";
    os << "filters = " << network.filters << "\n";
    os << "kernel = " << network.kernel << "\n";
    os << "stride = " << network.stride << "\n";
    os << "padding = " << network.padding << "\n";
    os << "input_dim = " << network.input_dim << "\n";
    os << "hidden = ";
    for (std::size_t i = 0; i < network.hidden.size(); ++i)
        os << (i ? "," : "") << network.hidden[i];
    os << "\n";
    os << "bn_stats_mode = " << bn_stats_name(network.bn_stats) << "\n";
    os << "bn_params_mode = " << bn_params_name(network.bn_params) << "\n";
    os << "bn_bias_only = " << (network.bn_bias_only ? "true" : "false") << "\n";
    os << "bn_eps = " << fmt_double(network.bn_eps) << "\n";
    os << "bn_momentum = " << fmt_double(network.bn_momentum) << "\n";
    os << "\n[meta]\n";
    os << "inner_steps = " << meta.inner_steps << "\n";
    os << "task_batch = " << meta.task_batch << "\n";
    os << "alpha = " << fmt_double(meta.fixed_alpha) << "\n";
    os << "alpha_init = " << fmt_double(meta.alpha_init) << "\n";
    os << "msl = " << (meta.toggles.msl ? "true" : "false") << "\n";
    os << "lslr = " << (meta.toggles.lslr ? "true" : "false") << "\n";
    os << "bnrs = " << (meta.toggles.bnrs ? "true" : "false") << "\n";
    os << "bnwb = " << (meta.toggles.bnwb ? "true" : "false") << "\n";
    os << "da = " << (meta.toggles.da ? "true" : "false") << "\n";
    os << "ca = " << (meta.toggles.ca ? "true" : "false") << "\n";
    os << "da_switch_epoch = " << meta.da_switch_epoch << "\n";
    os << "msl_horizon = " << meta.msl.horizon_epochs << "\n";
    os << "msl_floor = " << fmt_double(meta.msl.floor) << "\n";
    os << "include_pre_update_loss = " << (meta.msl.include_pre_update ? "true" : "false") << "\n";
    os << "msl_per_iteration = " << (meta.msl.per_iteration ? "true" : "false") << "\n";
    os << "lr_max = " << fmt_double(meta.lr_max) << "\n";
    os << "lr_min = " << fmt_double(meta.lr_min) << "\n";
    os << "parallel_tasks = " << meta.parallel_tasks << "\n";
    os << "grad_clip = " << fmt_double(meta.grad_clip) << "\n";
    os << "\n[run]\n";
    os << "epochs = " << run.epochs << "\n";
    os << "iterations = " << run.iterations << "\n";
    os << "seeds = ";
    for (std::size_t i = 0; i < run.seeds.size(); ++i) os << (i ? "," : "") << run.seeds[i];
    os << "\n";
    os << "precision = " << dtype_name(run.precision) << "\n";
    os << "out_dir = " << run.out_dir << "\n";
    os << "val_episodes = " << run.val_episodes << "\n";
    os << "test_episodes = " << run.test_episodes << "\n";
    os << "eval_inner_steps = " << run.eval_inner_steps << "\n";
    os << "check_finite = " << (run.check_finite ? "true" : "false") << "\n";
    return os.str();
}

std::uint64_t ExperimentConfig::digest() const { return fnv1a64(canonical_text()); }

ExperimentConfig parse_config_text(const std::string& text) {
    ParseState st;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']')
                throw ConfigError("config: malformed section header at line " +
                                  std::to_string(lineno));
            section = trim(t.substr(1, t.size() - 2));
            if (section != "dataset" && section != "network" && section != "meta" &&
                section != "run")
                throw ConfigError("config: unknown section '" + section + "'");
            continue;
        }
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: expected 'key = value' at line " + std::to_string(lineno));
        if (section.empty())
            throw ConfigError("config: key outside any section at line " + std::to_string(lineno));
        std::string key = section + "." + trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        auto it = setters().find(key);
        if (it == setters().end()) throw ConfigError("config: unknown key '" + key + "'");
        it->second(st, key, value);
    }
    // Derive bn modes from the toggles unless pinned in [network].
    if (!st.bn_stats_explicit)
        st.cfg.network.bn_stats = st.cfg.meta.toggles.bnrs ? nn::BnStatsMode::per_step_running
                                                           : nn::BnStatsMode::batch;
    if (!st.bn_params_explicit)
        st.cfg.network.bn_params =
            st.cfg.meta.toggles.bnwb ? nn::BnParamsMode::per_step : nn::BnParamsMode::shared;
    st.cfg.finalize();
    return st.cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_config_text(ss.str());
    if (const char* root = std::getenv("METAGRAD_DATASET_ROOT")) {
        cfg.dataset.root = root;
    }
    if (const char* out = std::getenv("METAGRAD_OUT_DIR")) {
        cfg.run.out_dir = out;
    }
    cfg.finalize();
    return cfg;
}

namespace {

constexpr const char* kOmniglotPaper = R"(# Full-protocol preset: 150 epochs x 500 iterations, task batch 16,
# 64-filter strided backbone, all six improvements enabled.
[dataset]
kind = omniglot
root = data/omniglot
n_way = 5
k_shot = 1
q_targets = 15
eval_seed = 99
split_seed = 7
image_size = 28
rotations = true

[network]
kind = conv
conv_layers = 4
filters = 64
kernel = 3
stride = 2
padding = 1

[meta]
inner_steps = 5
task_batch = 16
alpha = 0.1
alpha_init = 0.1
msl = true
lslr = true
bnrs = true
bnwb = true
da = true
ca = true
da_switch_epoch = 50
msl_horizon = 100
msl_floor = 0.001
lr_max = 0.001
lr_min = 1e-5
parallel_tasks = 2

[run]
epochs = 150
iterations = 500
seeds = 0,1,2
precision = f32
out_dir = runs/omniglot-paper
val_episodes = 600
test_episodes = 600
)";

constexpr const char* kOmniglotDesk = R"(# Desk-scale preset: 25 epochs x 100 iterations, task batch 8, 32 filters.
[dataset]
kind = omniglot
root = data/omniglot
n_way = 5
k_shot = 1
q_targets = 5
eval_seed = 99
split_seed = 7
image_size = 28
rotations = true

[network]
kind = conv
conv_layers = 4
filters = 32
kernel = 3
stride = 2
padding = 1

[meta]
inner_steps = 5
task_batch = 8
alpha = 0.1
alpha_init = 0.1
msl = true
lslr = true
bnrs = true
bnwb = true
da = true
ca = true
da_switch_epoch = 8
msl_horizon = 16
msl_floor = 0.001
lr_max = 0.001
lr_min = 1e-5
parallel_tasks = 2

[run]
epochs = 25
iterations = 100
seeds = 0,1,2
precision = f32
out_dir = runs/omniglot-desk
val_episodes = 150
test_episodes = 600
)";

constexpr const char* kSyntheticCi = R"(# CI preset on the procedural glyph pool: 2000 total iterations.
[dataset]
kind = synthetic
n_way = 5
k_shot = 1
q_targets = 5
eval_seed = 99
split_seed = 7
image_size = 28
rotations = false
synth_seed = 1234
classes = 64
instances_per_class = 20
noise = 0.05
jitter_px = 1.0
val_classes = 12
test_classes = 12

[network]
kind = conv
conv_layers = 4
filters = 16
kernel = 3
stride = 2
padding = 1

[meta]
inner_steps = 5
task_batch = 4
alpha = 0.1
alpha_init = 0.1
msl = true
lslr = true
bnrs = true
bnwb = true
da = true
ca = true
da_switch_epoch = 5
msl_horizon = 10
msl_floor = 0.001
lr_max = 0.001
lr_min = 1e-5
parallel_tasks = 2

[run]
epochs = 20
iterations = 100
seeds = 0,1,2
precision = f32
out_dir = runs/synthetic-ci
val_episodes = 100
test_episodes = 600
)";

} // namespace

std::string preset_text(const std::string& name) {
    if (name == "omniglot-paper") return kOmniglotPaper;
    if (name == "omniglot-desk") return kOmniglotDesk;
    if (name == "synthetic-ci") return kSyntheticCi;
    throw ConfigError("unknown preset '" + name +
                      "' (expected omniglot-paper, omniglot-desk or synthetic-ci)");
}

ExperimentConfig preset(const std::string& name) { return parse_config_text(preset_text(name)); }

} // namespace metagrad::harness
