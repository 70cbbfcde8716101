#include "metagrad/meta/adam.hpp"

#include <cmath>

namespace metagrad::meta {

ParamSet adam_step(const ParamSet& trainables, const ParamSet& grads, AdamState& state, double lr,
                   const AdamConfig& cfg) {
    trainables.require_compatible(grads, "adam_step");
    trainables.require_compatible(state.m, "adam_step(state)");
    trainables.require_compatible(state.v, "adam_step(state)");

    state.t += 1;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

    ParamSet out;
    for (std::size_t e = 0; e < trainables.size(); ++e) {
        const auto& [name, p] = trainables.entry(e);
        const Tensor& g = grads.entry(e).second;
        Tensor m_old = state.m.entry(e).second;
        Tensor v_old = state.v.entry(e).second;

        Tensor m_new = Tensor::uninitialized(p.shape(), p.dtype());
        Tensor v_new = Tensor::uninitialized(p.shape(), p.dtype());
        Tensor p_new = Tensor::uninitialized(p.shape(), p.dtype());
        dispatch_dtype(p.dtype(), [&](auto tag) {
            using T = decltype(tag);
            auto pd = p.data<T>();
            auto gd = g.data<T>();
            auto md = m_old.data<T>();
            auto vd = v_old.data<T>();
            auto mn = m_new.mutable_data<T>();
            auto vn = v_new.mutable_data<T>();
            auto pn = p_new.mutable_data<T>();
            for (std::size_t i = 0; i < pd.size(); ++i) {
                const double gi = static_cast<double>(gd[i]);
                const double mi = cfg.beta1 * static_cast<double>(md[i]) + (1.0 - cfg.beta1) * gi;
                const double vi =
                    cfg.beta2 * static_cast<double>(vd[i]) + (1.0 - cfg.beta2) * gi * gi;
                const double mhat = mi / bc1;
                const double vhat = vi / bc2;
                mn[i] = static_cast<T>(mi);
                vn[i] = static_cast<T>(vi);
                pn[i] = static_cast<T>(static_cast<double>(pd[i]) -
                                       lr * mhat / (std::sqrt(vhat) + cfg.eps));
            }
        });
        state.m.set(name, m_new);
        state.v.set(name, v_new);
        out.add(name, p_new);
    }
    return out;
}

} // namespace metagrad::meta
