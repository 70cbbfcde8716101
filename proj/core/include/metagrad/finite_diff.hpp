#pragma once

#include <functional>

#include "metagrad/param_set.hpp"

namespace metagrad {

/// Central-difference gradient estimate (f(x+h e_i) - f(x-h e_i)) / 2h per
/// element. Verification oracle: independent of the reverse-mode path it
/// checks. Run it in 64-bit.
ParamSet finite_difference_oracle(const std::function<double(const ParamSet&)>& f,
                                  const ParamSet& at, double step);

} // namespace metagrad
