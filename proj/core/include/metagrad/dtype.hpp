#pragma once

#include <cstdint>
#include <string>

#include "metagrad/errors.hpp"

namespace metagrad {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline std::size_t dtype_size(DType dt) {
    return dt == DType::f32 ? sizeof(float) : sizeof(double);
}

inline const char* dtype_name(DType dt) {
    return dt == DType::f32 ? "f32" : "f64";
}

inline DType dtype_from_name(const std::string& s) {
    if (s == "f32" || s == "float32") return DType::f32;
    if (s == "f64" || s == "float64") return DType::f64;
    throw ConfigError("unknown precision '" + s + "' (expected f32 or f64)");
}

/// Invoke f with a value of the element type selected by dt.
template <class F>
decltype(auto) dispatch_dtype(DType dt, F&& f) {
    if (dt == DType::f32) return f(float{});
    return f(double{});
}

} // namespace metagrad
