#include "metagrad/nn/network.hpp"

#include <algorithm>
#include <cmath>

#include "metagrad/autodiff.hpp"
#include "metagrad/ops.hpp"

namespace metagrad::nn {

std::pair<int, int> NetworkSpec::spatial_after(int k) const {
    int h = image_h, w = image_w;
    for (int i = 0; i < k; ++i) {
        h = (h + 2 * padding - kernel) / stride + 1;
        w = (w + 2 * padding - kernel) / stride + 1;
    }
    return {h, w};
}

std::int64_t NetworkSpec::flat_features() const {
    if (kind == NetworkKind::mlp) return hidden.empty() ? input_dim : hidden.back();
    auto [h, w] = spatial_after(conv_layers);
    return static_cast<std::int64_t>(filters) * h * w;
}

void NetworkSpec::validate() const {
    if (n_way < 1) throw ShapeError("NetworkSpec: n_way must be >= 1");
    if (max_inner_steps < 1) throw ShapeError("NetworkSpec: max_inner_steps must be >= 1");
    if (num_layers() < 1) throw ShapeError("NetworkSpec: at least one layer required");
    if (bn_momentum <= 0.0 || bn_momentum > 1.0)
        throw ShapeError("NetworkSpec: bn_momentum must be in (0, 1]");
    if (kind == NetworkKind::conv) {
        int h = image_h, w = image_w;
        for (int k = 1; k <= conv_layers; ++k) {
            if (h + 2 * padding < kernel || w + 2 * padding < kernel)
                throw ShapeError("NetworkSpec: padded input " + std::to_string(h) + "x" +
                                 std::to_string(w) + " smaller than kernel at conv layer " +
                                 std::to_string(k));
            h = (h + 2 * padding - kernel) / stride + 1;
            w = (w + 2 * padding - kernel) / stride + 1;
            if (h < 1 || w < 1)
                throw ShapeError("NetworkSpec: spatial dims collapse to " + std::to_string(h) +
                                 "x" + std::to_string(w) + " after conv layer " + std::to_string(k));
        }
    }
}

std::string layer_group(const std::string& param_name) {
    auto pos = param_name.find('/');
    return pos == std::string::npos ? param_name : param_name.substr(0, pos);
}

std::vector<std::string> layer_groups(const ParamSet& params) {
    std::vector<std::string> out;
    for (const auto& [name, _] : params) {
        std::string g = layer_group(name);
        if (out.empty() || std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
    }
    return out;
}

std::string bn_param_name(int layer, int slot, bool scale, BnParamsMode mode, bool bias_only) {
    std::string base = "bn" + std::to_string(layer + 1);
    const bool stepped = mode == BnParamsMode::per_step && (!scale || !bias_only);
    if (stepped) base += "/step" + std::to_string(slot);
    return base + (scale ? "/scale" : "/bias");
}

namespace {

Tensor init_uniform(Shape shape, double bound, Rng& rng, DType dt) {
    std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& x : v) x = rng.uniform(-bound, bound);
    return Tensor::from_vector(std::move(shape), v, dt);
}

void add_bn_params(ParamSet& params, const NetworkSpec& spec, int layer, std::int64_t channels,
                   DType dt) {
    const int slots = spec.param_slots();
    if (spec.bn_params == BnParamsMode::shared) {
        params.add(bn_param_name(layer, 0, true, spec.bn_params, spec.bn_bias_only),
                   Tensor::ones({channels}, dt));
        params.add(bn_param_name(layer, 0, false, spec.bn_params, spec.bn_bias_only),
                   Tensor::zeros({channels}, dt));
        return;
    }
    if (spec.bn_bias_only) {
        params.add(bn_param_name(layer, 0, true, spec.bn_params, true),
                   Tensor::ones({channels}, dt));
        for (int s = 0; s < slots; ++s)
            params.add(bn_param_name(layer, s, false, spec.bn_params, true),
                       Tensor::zeros({channels}, dt));
        return;
    }
    for (int s = 0; s < slots; ++s) {
        params.add(bn_param_name(layer, s, true, spec.bn_params, false),
                   Tensor::ones({channels}, dt));
        params.add(bn_param_name(layer, s, false, spec.bn_params, false),
                   Tensor::zeros({channels}, dt));
    }
}

std::int64_t bn_channels(const NetworkSpec& spec, int layer) {
    if (spec.kind == NetworkKind::conv) return spec.filters;
    return spec.hidden[static_cast<std::size_t>(layer)];
}

} // namespace

BuildResult build_network(const NetworkSpec& spec, Rng& rng, DType dt) {
    spec.validate();
    BuildResult out;
    ParamSet& p = out.params;

    if (spec.kind == NetworkKind::conv) {
        for (int k = 0; k < spec.conv_layers; ++k) {
            const std::int64_t cin = k == 0 ? spec.in_channels : spec.filters;
            const double bound = 1.0 / std::sqrt(static_cast<double>(cin) * spec.kernel * spec.kernel);
            p.add("conv" + std::to_string(k + 1) + "/weight",
                  init_uniform({spec.filters, cin, spec.kernel, spec.kernel}, bound, rng, dt));
            add_bn_params(p, spec, k, spec.filters, dt);
        }
    } else {
        std::int64_t in = spec.input_dim;
        for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
            const std::int64_t outdim = spec.hidden[k];
            const double bound = 1.0 / std::sqrt(static_cast<double>(in));
            p.add("l" + std::to_string(k + 1) + "/weight", init_uniform({in, outdim}, bound, rng, dt));
            add_bn_params(p, spec, static_cast<int>(k), outdim, dt);
            in = outdim;
        }
    }

    const std::int64_t feat = spec.flat_features();
    const double hb = 1.0 / std::sqrt(static_cast<double>(feat));
    p.add("head/weight", init_uniform({feat, spec.n_way}, hb, rng, dt));
    p.add("head/bias", init_uniform({spec.n_way}, hb, rng, dt));

    BatchNormState& bn = out.bn;
    bn.stats_mode = spec.bn_stats;
    bn.eps = spec.bn_eps;
    bn.momentum = spec.bn_momentum;
    const int slots = spec.stat_slots();
    bn.layers.resize(static_cast<std::size_t>(spec.num_layers()));
    for (int l = 0; l < spec.num_layers(); ++l) {
        const std::int64_t c = bn_channels(spec, l);
        for (int s = 0; s < slots; ++s)
            bn.layers[static_cast<std::size_t>(l)].push_back(
                BnSlotStats{Tensor::zeros({c}, dt), Tensor::ones({c}, dt), 0});
    }
    return out;
}

void update_running_stats(BnSlotStats& slot, const Tensor& batch_mean, const Tensor& batch_var,
                          double momentum) {
    if (momentum <= 0.0 || momentum > 1.0)
        throw ShapeError("update_running_stats: momentum must be in (0, 1]");
    autodiff::NoRecordGuard ng;
    slot.mean = add(scale(slot.mean, 1.0 - momentum), scale(batch_mean.detached(), momentum));
    slot.var = add(scale(slot.var, 1.0 - momentum), scale(batch_var.detached(), momentum));
    slot.count += 1;
}

void apply_bn_observations(BatchNormState& bn, const StatsRecorder& recorder) {
    for (const auto& obs : recorder)
        update_running_stats(bn.layers[static_cast<std::size_t>(obs.layer)]
                                      [static_cast<std::size_t>(obs.slot)],
                             obs.mean, obs.var, bn.momentum);
}

namespace {

struct BnInputGeometry {
    std::vector<int> reduce_axes;
    Shape channel_shape; // broadcastable against x
    std::int64_t channels;
};

BnInputGeometry bn_geometry(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() == 4) return {{0, 2, 3}, {s[1], 1, 1}, s[1]};
    if (s.size() == 2) return {{0}, {s[1]}, s[1]};
    throw ShapeError("batchnorm: expected [B,F] or NCHW input, got " + shape_str(s));
}

Tensor batchnorm(const NetworkSpec& spec, const ParamSet& params, BatchNormState& bn,
                 const Tensor& x, int layer, int step_index, ForwardMode mode,
                 StatsRecorder* recorder) {
    const BnInputGeometry geo = bn_geometry(x);
    const int pslot = spec.bn_params == BnParamsMode::per_step ? step_index : 0;
    const Tensor& gamma =
        params.at(bn_param_name(layer, spec.bn_bias_only ? 0 : pslot, true, spec.bn_params,
                                spec.bn_bias_only));
    const Tensor& beta = params.at(bn_param_name(layer, pslot, false, spec.bn_params,
                                                 spec.bn_bias_only));

    const int sslot = bn.slot_for(step_index);
    BnSlotStats& slot = bn.layers[static_cast<std::size_t>(layer)][static_cast<std::size_t>(sslot)];

    const bool use_running = mode == ForwardMode::eval &&
                             bn.stats_mode != BnStatsMode::batch && slot.count >= 1;
    if (use_running)
        return batchnorm_apply(x, gamma, beta, slot.mean, slot.var, bn.eps);

    if (mode == ForwardMode::train && x.shape()[0] < 2)
        throw NumericError("batchnorm: train mode needs batch size >= 2 for batch statistics "
                           "(layer bn" + std::to_string(layer + 1) + ")");

    Tensor m = mean_axes(x, geo.reduce_axes, false);                            // [C]
    Tensor c = sub(x, reshape(m, geo.channel_shape));
    Tensor v = mean_axes(mul(c, c), geo.reduce_axes, false);                    // biased [C]
    Tensor denom = sqrt(add_scalar(v, bn.eps));
    Tensor xhat = div(c, reshape(denom, geo.channel_shape));
    Tensor y = add(mul(xhat, reshape(gamma, geo.channel_shape)),
                   reshape(beta, geo.channel_shape));

    if (mode == ForwardMode::train && bn.stats_mode != BnStatsMode::batch) {
        if (recorder)
            recorder->push_back(BnObservation{layer, sslot, m.detached(), v.detached()});
        else
            update_running_stats(slot, m, v, bn.momentum);
    }
    return y;
}

} // namespace

Tensor forward(const NetworkSpec& spec, const ParamSet& params, BatchNormState& bn,
               const Tensor& inputs, int step_index, ForwardMode mode, StatsRecorder* recorder) {
    if (step_index < 0 || step_index > spec.max_inner_steps)
        throw ShapeError("forward: step_index " + std::to_string(step_index) +
                         " outside the allocated 0.." + std::to_string(spec.max_inner_steps) +
                         " slots");

    Tensor x = inputs;
    if (spec.kind == NetworkKind::conv) {
        const Shape& s = x.shape();
        if (s.size() != 4 || s[1] != spec.in_channels || s[2] != spec.image_h ||
            s[3] != spec.image_w)
            throw ShapeError("forward: input " + shape_str(s) + " does not match spec " +
                             std::to_string(spec.in_channels) + "x" + std::to_string(spec.image_h) +
                             "x" + std::to_string(spec.image_w));
        for (int k = 0; k < spec.conv_layers; ++k) {
            x = conv2d(x, params.at("conv" + std::to_string(k + 1) + "/weight"), spec.stride,
                       spec.padding);
            x = batchnorm(spec, params, bn, x, k, step_index, mode, recorder);
            x = relu(x);
        }
        x = flatten_from(x, 1);
    } else {
        if (x.shape().size() != 2 || x.shape()[1] != spec.input_dim)
            throw ShapeError("forward: input " + shape_str(x.shape()) + " does not match mlp dim " +
                             std::to_string(spec.input_dim));
        for (std::size_t k = 0; k < spec.hidden.size(); ++k) {
            x = matmul(x, params.at("l" + std::to_string(k + 1) + "/weight"));
            x = batchnorm(spec, params, bn, x, static_cast<int>(k), step_index, mode, recorder);
            x = relu(x);
        }
    }
    return add_bias(matmul(x, params.at("head/weight")), params.at("head/bias"));
}

} // namespace metagrad::nn
