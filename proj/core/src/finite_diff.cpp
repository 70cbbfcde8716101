#include "metagrad/finite_diff.hpp"

#include "metagrad/errors.hpp"

namespace metagrad {

ParamSet finite_difference_oracle(const std::function<double(const ParamSet&)>& f,
                                  const ParamSet& at, double step) {
    if (step <= 0.0) throw ShapeError("finite_difference_oracle: step must be > 0");

    ParamSet work = at.clone_values();
    ParamSet result = at.zeros_like();

    for (std::size_t e = 0; e < at.size(); ++e) {
        const auto& [name, base] = at.entry(e);
        Tensor wt = work.at(name);
        Tensor rt = result.at(name);
        for (std::int64_t i = 0; i < base.numel(); ++i) {
            const double orig = base.at_flat(i);
            auto poke = [&](double v) {
                dispatch_dtype(wt.dtype(), [&](auto tag) {
                    using T = decltype(tag);
                    wt.mutable_data<T>()[static_cast<std::size_t>(i)] = static_cast<T>(v);
                });
            };
            poke(orig + step);
            const double fp = f(work);
            poke(orig - step);
            const double fm = f(work);
            poke(orig);
            dispatch_dtype(rt.dtype(), [&](auto tag) {
                using T = decltype(tag);
                rt.mutable_data<T>()[static_cast<std::size_t>(i)] =
                    static_cast<T>((fp - fm) / (2.0 * step));
            });
        }
    }
    return result;
}

} // namespace metagrad
