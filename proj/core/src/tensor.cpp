#include "metagrad/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

namespace metagrad {

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d < 0) throw ShapeError("negative extent in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ',';
        os << s[i];
    }
    os << ']';
    return os.str();
}

bool same_shape(const Shape& a, const Shape& b) { return a == b; }

static std::shared_ptr<TensorImpl> make_impl(Shape shape, DType dt) {
    auto impl = std::make_shared<TensorImpl>();
    std::int64_t n = shape_numel(shape);
    impl->shape = std::move(shape);
    impl->dtype = dt;
    impl->data = std::make_shared<RawBuffer>(static_cast<std::size_t>(n) * dtype_size(dt));
    return impl;
}

Tensor Tensor::uninitialized(Shape shape, DType dt) { return wrap(make_impl(std::move(shape), dt)); }

Tensor Tensor::zeros(Shape shape, DType dt) {
    Tensor t = uninitialized(std::move(shape), dt);
    std::memset(t.impl_->data->data(), 0, t.impl_->data->size());
    return t;
}

Tensor Tensor::full(Shape shape, double value, DType dt) {
    Tensor t = uninitialized(std::move(shape), dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        auto d = t.mutable_data<T>();
        for (auto& x : d) x = static_cast<T>(value);
    });
    return t;
}

Tensor Tensor::ones(Shape shape, DType dt) { return full(std::move(shape), 1.0, dt); }

Tensor Tensor::scalar(double value, DType dt) { return full(Shape{}, value, dt); }

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, DType dt) {
    if (shape_numel(shape) != static_cast<std::int64_t>(values.size()))
        throw ShapeError("from_vector: " + std::to_string(values.size()) +
                         " values for shape " + shape_str(shape));
    Tensor t = uninitialized(std::move(shape), dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        auto d = t.mutable_data<T>();
        for (std::size_t i = 0; i < values.size(); ++i) d[i] = static_cast<T>(values[i]);
    });
    return t;
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return at_flat(0);
}

double Tensor::at_flat(std::int64_t i) const {
    return dispatch_dtype(dtype(), [&](auto tag) -> double {
        using T = decltype(tag);
        return static_cast<double>(data<T>()[static_cast<std::size_t>(i)]);
    });
}

double Tensor::at(std::initializer_list<std::int64_t> idx) const {
    const Shape& s = shape();
    if (idx.size() != s.size()) throw ShapeError("at(): rank mismatch for shape " + shape_str(s));
    std::int64_t flat = 0;
    std::size_t k = 0;
    for (auto i : idx) {
        if (i < 0 || i >= s[k]) throw ShapeError("at(): index out of range");
        flat = flat * s[k] + i;
        ++k;
    }
    return at_flat(flat);
}

std::vector<double> Tensor::to_vector() const {
    std::vector<double> out(static_cast<std::size_t>(numel()));
    dispatch_dtype(dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto d = data<T>();
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<double>(d[i]);
    });
    return out;
}

Tensor Tensor::detached() const {
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = impl_->shape;
    impl->dtype = impl_->dtype;
    impl->data = impl_->data; // share payload
    impl->node = nullptr;
    return wrap(std::move(impl));
}

Tensor Tensor::cast(DType dt) const {
    if (dt == dtype()) return detached();
    return from_vector(shape(), to_vector(), dt);
}

bool Tensor::all_finite() const {
    return dispatch_dtype(dtype(), [&](auto tag) -> bool {
        using T = decltype(tag);
        for (T v : data<T>())
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    });
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.defined() || !b.defined()) return a.defined() == b.defined();
    if (a.dtype() != b.dtype() || a.shape() != b.shape()) return false;
    const auto* pa = a.impl()->data.get();
    const auto* pb = b.impl()->data.get();
    return pa->size() == pb->size() && std::memcmp(pa->data(), pb->data(), pa->size()) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeError("max_abs_diff: shapes differ");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i)
        m = std::max(m, std::abs(a.at_flat(i) - b.at_flat(i)));
    return m;
}

double max_rel_err(const Tensor& a, const Tensor& b, double floor) {
    if (a.shape() != b.shape()) throw ShapeError("max_rel_err: shapes differ");
    double m = 0.0;
    for (std::int64_t i = 0; i < a.numel(); ++i) {
        double x = a.at_flat(i), y = b.at_flat(i);
        m = std::max(m, std::abs(x - y) / std::max(std::abs(y), floor));
    }
    return m;
}

} // namespace metagrad
