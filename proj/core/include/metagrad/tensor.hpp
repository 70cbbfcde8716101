#pragma once

#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metagrad/dtype.hpp"
#include "metagrad/errors.hpp"

namespace metagrad {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);
bool same_shape(const Shape& a, const Shape& b);

namespace autodiff {
struct Node;
}

/// Contiguous payload without value-initialization (kernels overwrite it).
struct RawBuffer {
    explicit RawBuffer(std::size_t n)
        : n_(n), bytes_(std::make_unique_for_overwrite<std::byte[]>(n)) {}
    std::byte* data() { return bytes_.get(); }
    const std::byte* data() const { return bytes_.get(); }
    std::size_t size() const { return n_; }

private:
    std::size_t n_;
    std::unique_ptr<std::byte[]> bytes_;
};

struct TensorImpl {
    Shape shape;
    DType dtype = DType::f64;
    // Shared so stop_gradient / reshape can alias without copying. Contents are
    // immutable once the producing op returns.
    std::shared_ptr<RawBuffer> data;
    std::shared_ptr<autodiff::Node> node; // creator; null for leaves and constants
};

/// Dense n-dimensional array handle. Value semantics over a shared immutable
/// payload; every operation produces a new tensor. Tensors created while
/// recording is enabled carry provenance usable by autodiff::grad.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, DType dt);
    static Tensor ones(Shape shape, DType dt);
    static Tensor full(Shape shape, double value, DType dt);
    static Tensor scalar(double value, DType dt);
    static Tensor from_vector(Shape shape, const std::vector<double>& values, DType dt);
    /// Allocated but uninitialized; for kernel outputs.
    static Tensor uninitialized(Shape shape, DType dt);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    DType dtype() const { return impl_->dtype; }
    std::int64_t numel() const { return shape_numel(impl_->shape); }

    template <class T>
    std::span<const T> data() const {
        check_type<T>();
        return {reinterpret_cast<const T*>(impl_->data->data()), static_cast<std::size_t>(numel())};
    }

    template <class T>
    std::span<T> mutable_data() {
        check_type<T>();
        return {reinterpret_cast<T*>(impl_->data->data()), static_cast<std::size_t>(numel())};
    }

    /// Value of a 1-element tensor, as double.
    double item() const;
    /// Element at a multi-index, as double.
    double at(std::initializer_list<std::int64_t> idx) const;
    double at_flat(std::int64_t i) const;
    std::vector<double> to_vector() const;

    bool has_node() const { return impl_ && impl_->node != nullptr; }
    const std::shared_ptr<autodiff::Node>& node() const { return impl_->node; }
    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

    /// Value-identical tensor with no provenance (shares the payload).
    Tensor detached() const;

    /// Copy with the same values in another precision (no provenance).
    Tensor cast(DType dt) const;

    bool all_finite() const;

    static Tensor wrap(std::shared_ptr<TensorImpl> impl) {
        Tensor t;
        t.impl_ = std::move(impl);
        return t;
    }

private:
    template <class T>
    void check_type() const {
        constexpr DType want = std::is_same_v<T, float> ? DType::f32 : DType::f64;
        static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
        if (impl_->dtype != want)
            throw ShapeError(std::string("tensor dtype is ") + dtype_name(impl_->dtype) +
                             ", accessed as " + dtype_name(want));
    }

    std::shared_ptr<TensorImpl> impl_;
};

/// Exact bit equality of shape, dtype and payload.
bool bit_equal(const Tensor& a, const Tensor& b);

/// max |a-b| over all elements (shapes must match).
double max_abs_diff(const Tensor& a, const Tensor& b);

/// max relative error |a-b| / max(|b|, floor); floor guards near-zero entries.
double max_rel_err(const Tensor& a, const Tensor& b, double floor = 1e-12);

} // namespace metagrad
