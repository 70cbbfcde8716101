#include "metagrad/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace metagrad {

namespace {

void check_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
    if (a.dtype() != b.dtype())
        throw ShapeError(std::string(op) + ": mixed dtypes " + dtype_name(a.dtype()) + " vs " +
                         dtype_name(b.dtype()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

Shape broadcast_result_shape(const char* op, const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    std::size_t r = std::max(sa.size(), sb.size());
    Shape out(r);
    for (std::size_t i = 0; i < r; ++i) {
        std::int64_t da = i < r - sa.size() ? 1 : sa[i - (r - sa.size())];
        std::int64_t db = i < r - sb.size() ? 1 : sb[i - (r - sb.size())];
        if (da != db && da != 1 && db != 1) shape_fail(op, a, b);
        out[i] = std::max(da, db);
    }
    return out;
}

std::vector<std::int64_t> row_strides(const Shape& s) {
    std::vector<std::int64_t> st(s.size(), 1);
    for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
    return st;
}

// ---- elementwise kernels ----

enum class Bin { add, sub, mul, div };

template <typename T>
void binary_kernel(Bin op, const T* a, const T* b, T* out, std::int64_t n) {
    switch (op) {
        case Bin::add:
            for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
            break;
        case Bin::sub:
            for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
            break;
        case Bin::mul:
            for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
            break;
        case Bin::div:
            for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] / b[i];
            break;
    }
}

Tensor binary_run(Bin op, const Tensor& a, const Tensor& b) {
    Tensor out = Tensor::uninitialized(a.shape(), a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        binary_kernel<T>(op, a.data<T>().data(), b.data<T>().data(), out.mutable_data<T>().data(),
                         a.numel());
    });
    return out;
}

enum class Un { neg, exp, log, sqrt, relu };

template <typename T>
void unary_kernel(Un op, const T* a, T* out, std::int64_t n) {
    switch (op) {
        case Un::neg:
            for (std::int64_t i = 0; i < n; ++i) out[i] = -a[i];
            break;
        case Un::exp:
            for (std::int64_t i = 0; i < n; ++i) out[i] = std::exp(a[i]);
            break;
        case Un::log:
            for (std::int64_t i = 0; i < n; ++i) out[i] = std::log(a[i]);
            break;
        case Un::sqrt:
            for (std::int64_t i = 0; i < n; ++i) out[i] = std::sqrt(a[i]);
            break;
        case Un::relu:
            for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
            break;
    }
}

Tensor unary_run(Un op, const Tensor& a) {
    Tensor out = Tensor::uninitialized(a.shape(), a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        unary_kernel<T>(op, a.data<T>().data(), out.mutable_data<T>().data(), a.numel());
    });
    return out;
}

Tensor relu_mask(const Tensor& a) {
    Tensor out = Tensor::uninitialized(a.shape(), a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto in = a.data<T>();
        auto o = out.mutable_data<T>();
        for (std::int64_t i = 0; i < a.numel(); ++i) o[i] = in[i] > T(0) ? T(1) : T(0);
    });
    return out;
}

} // namespace

// ---- same-shape primitives ----

static Tensor add_same(const Tensor& a, const Tensor& b) {
    return autodiff::record_op("add", binary_run(Bin::add, a, b), {a, b},
                               [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

static Tensor sub_same(const Tensor& a, const Tensor& b) {
    return autodiff::record_op("sub", binary_run(Bin::sub, a, b), {a, b},
                               [](const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

static Tensor mul_same(const Tensor& a, const Tensor& b) {
    return autodiff::record_op("mul", binary_run(Bin::mul, a, b), {a, b},
                               [a, b](const Tensor& g) {
                                   return std::vector<Tensor>{mul_same(g, b), mul_same(g, a)};
                               });
}

static Tensor div_same(const Tensor& a, const Tensor& b) {
    return autodiff::record_op("div", binary_run(Bin::div, a, b), {a, b},
                               [a, b](const Tensor& g) {
                                   Tensor ga = div_same(g, b);
                                   Tensor gb = neg(div_same(mul_same(g, a), mul_same(b, b)));
                                   return std::vector<Tensor>{ga, gb};
                               });
}

static Tensor binary_broadcast(const char* op, const Tensor& a, const Tensor& b,
                               Tensor (*same)(const Tensor&, const Tensor&)) {
    check_same_dtype(op, a, b);
    if (a.shape() == b.shape()) return same(a, b);
    Shape bs = broadcast_result_shape(op, a, b);
    Tensor aa = a.shape() == bs ? a : broadcast_to(a, bs);
    Tensor bb = b.shape() == bs ? b : broadcast_to(b, bs);
    return same(aa, bb);
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_broadcast("add", a, b, add_same); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_broadcast("sub", a, b, sub_same); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_broadcast("mul", a, b, mul_same); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_broadcast("div", a, b, div_same); }

Tensor neg(const Tensor& a) {
    return autodiff::record_op("neg", unary_run(Un::neg, a), {a},
                               [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::uninitialized(a.shape(), a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto in = a.data<T>();
        auto o = out.mutable_data<T>();
        const T cc = static_cast<T>(c);
        for (std::int64_t i = 0; i < a.numel(); ++i) o[i] = in[i] * cc;
    });
    return autodiff::record_op("scale", out, {a},
                               [c](const Tensor& g) { return std::vector<Tensor>{scale(g, c)}; });
}

Tensor add_scalar(const Tensor& a, double c) {
    Tensor out = Tensor::uninitialized(a.shape(), a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        auto in = a.data<T>();
        auto o = out.mutable_data<T>();
        const T cc = static_cast<T>(c);
        for (std::int64_t i = 0; i < a.numel(); ++i) o[i] = in[i] + cc;
    });
    return autodiff::record_op("add_scalar", out, {a},
                               [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor exp(const Tensor& a) {
    return autodiff::record_op("exp", unary_run(Un::exp, a), {a}, [a](const Tensor& g) {
        return std::vector<Tensor>{mul_same(g, exp(a))};
    });
}

Tensor log(const Tensor& a) {
    return autodiff::record_op("log", unary_run(Un::log, a), {a}, [a](const Tensor& g) {
        return std::vector<Tensor>{div_same(g, a)};
    });
}

Tensor sqrt(const Tensor& a) {
    return autodiff::record_op("sqrt", unary_run(Un::sqrt, a), {a}, [a](const Tensor& g) {
        return std::vector<Tensor>{div_same(scale(g, 0.5), sqrt(a))};
    });
}

Tensor relu(const Tensor& a) {
    return autodiff::record_op("relu", unary_run(Un::relu, a), {a}, [a](const Tensor& g) {
        // d/dx relu is a constant 0/1 mask a.e.; second derivative vanishes.
        return std::vector<Tensor>{mul_same(g, relu_mask(a))};
    });
}

// ---- matmul / transpose ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_same_dtype("matmul", a, b);
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
        shape_fail("matmul", a, b);
    const std::int64_t M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
    Tensor out = Tensor::zeros({M, N}, a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* pa = a.data<T>().data();
        const T* pb = b.data<T>().data();
        T* pc = out.mutable_data<T>().data();
        for (std::int64_t i = 0; i < M; ++i) {
            T* crow = pc + i * N;
            for (std::int64_t l = 0; l < K; ++l) {
                const T av = pa[i * K + l];
                const T* brow = pb + l * N;
                for (std::int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
            }
        }
    });
    return autodiff::record_op("matmul", out, {a, b}, [a, b](const Tensor& g) {
        return std::vector<Tensor>{matmul(g, transpose(b)), matmul(transpose(a), g)};
    });
}

Tensor transpose(const Tensor& a) {
    if (a.shape().size() != 2)
        throw ShapeError("transpose: expected 2-D, got " + shape_str(a.shape()));
    const std::int64_t R = a.shape()[0], C = a.shape()[1];
    Tensor out = Tensor::uninitialized({C, R}, a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* in = a.data<T>().data();
        T* o = out.mutable_data<T>().data();
        for (std::int64_t i = 0; i < R; ++i)
            for (std::int64_t j = 0; j < C; ++j) o[j * R + i] = in[i * C + j];
    });
    return autodiff::record_op("transpose", out, {a}, [](const Tensor& g) {
        return std::vector<Tensor>{transpose(g)};
    });
}

// ---- shape ops ----

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape) +
                         " changes element count");
    auto impl = std::make_shared<TensorImpl>();
    impl->shape = shape;
    impl->dtype = a.dtype();
    impl->data = a.impl_ptr()->data; // alias payload
    Tensor view = Tensor::wrap(std::move(impl));
    Shape in_shape = a.shape();
    return autodiff::record_op("reshape", view, {a}, [in_shape](const Tensor& g) {
        return std::vector<Tensor>{reshape(g, in_shape)};
    });
}

Tensor flatten_from(const Tensor& a, int axis) {
    const Shape& s = a.shape();
    if (axis < 0 || axis >= static_cast<int>(s.size()))
        throw ShapeError("flatten_from: bad axis");
    Shape out(s.begin(), s.begin() + axis);
    std::int64_t rest = 1;
    for (std::size_t i = axis; i < s.size(); ++i) rest *= s[i];
    out.push_back(rest);
    return reshape(a, out);
}

Tensor sum_axes(const Tensor& a, std::vector<int> axes, bool keepdims) {
    const Shape& s = a.shape();
    std::sort(axes.begin(), axes.end());
    axes.erase(std::unique(axes.begin(), axes.end()), axes.end());
    for (int ax : axes)
        if (ax < 0 || ax >= static_cast<int>(s.size()))
            throw ShapeError("sum_axes: axis " + std::to_string(ax) + " out of range for " +
                             shape_str(s));
    if (axes.empty()) return reshape(a, s);

    std::vector<bool> reduced(s.size(), false);
    for (int ax : axes) reduced[ax] = true;
    Shape keep_shape(s.size());
    Shape out_shape;
    for (std::size_t i = 0; i < s.size(); ++i) {
        keep_shape[i] = reduced[i] ? 1 : s[i];
        if (!reduced[i]) out_shape.push_back(s[i]);
    }
    if (keepdims) out_shape = keep_shape;
    if (out_shape.empty()) out_shape = Shape{}; // rank-0 scalar

    Tensor out = Tensor::zeros(keepdims ? keep_shape : out_shape, a.dtype());
    // Decompose into [outer][kept block][reduced suffix run]: the run sums
    // over contiguous memory and the block accumulates with unit stride.
    // Traversal order is fixed, so reductions stay bit-reproducible.
    const int rank = static_cast<int>(s.size());
    int r = rank;
    std::int64_t run = 1;
    while (r > 0 && reduced[static_cast<std::size_t>(r - 1)]) {
        run *= s[static_cast<std::size_t>(r - 1)];
        --r;
    }
    int bsplit = r;
    std::int64_t block = 1;
    while (bsplit > 0 && !reduced[static_cast<std::size_t>(bsplit - 1)]) {
        block *= s[static_cast<std::size_t>(bsplit - 1)];
        --bsplit;
    }
    std::int64_t outer = 1;
    for (int i = 0; i < bsplit; ++i) outer *= s[static_cast<std::size_t>(i)];
    auto in_strides = row_strides(s);
    auto out_strides = row_strides(keep_shape);
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* in = a.data<T>().data();
        T* o = out.mutable_data<T>().data();
        std::vector<std::int64_t> idx(static_cast<std::size_t>(bsplit), 0);
        for (std::int64_t u = 0; u < outer; ++u) {
            std::int64_t ioff = 0, ooff = 0;
            for (int i = 0; i < bsplit; ++i) {
                ioff += idx[static_cast<std::size_t>(i)] * in_strides[static_cast<std::size_t>(i)];
                if (!reduced[static_cast<std::size_t>(i)])
                    ooff += idx[static_cast<std::size_t>(i)] *
                            out_strides[static_cast<std::size_t>(i)];
            }
            const T* src = in + ioff;
            T* dst = o + ooff;
            if (run == 1) {
                for (std::int64_t k = 0; k < block; ++k) dst[k] += src[k];
            } else {
                for (std::int64_t k = 0; k < block; ++k) {
                    const T* p = src + k * run;
                    T acc = T(0);
                    for (std::int64_t t = 0; t < run; ++t) acc += p[t];
                    dst[k] += acc;
                }
            }
            for (int i = bsplit - 1; i >= 0; --i) {
                if (++idx[static_cast<std::size_t>(i)] < s[static_cast<std::size_t>(i)]) break;
                idx[static_cast<std::size_t>(i)] = 0;
            }
        }
    });

    Shape in_shape = s;
    return autodiff::record_op(
        "sum_axes", out, {a}, [in_shape, keepdims, keep_shape](const Tensor& g) {
            Tensor gk = keepdims ? g : reshape(g, keep_shape);
            return std::vector<Tensor>{broadcast_to(gk, in_shape)};
        });
}

Tensor sum(const Tensor& a) {
    std::vector<int> axes(a.shape().size());
    std::iota(axes.begin(), axes.end(), 0);
    if (axes.empty()) return reshape(a, Shape{});
    return sum_axes(a, axes, false);
}

Tensor mean_axes(const Tensor& a, std::vector<int> axes, bool keepdims) {
    std::int64_t n = 1;
    for (int ax : axes) n *= a.shape()[ax];
    return scale(sum_axes(a, std::move(axes), keepdims), 1.0 / static_cast<double>(n));
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor broadcast_to(const Tensor& a, const Shape& target) {
    const Shape& s = a.shape();
    if (s == target) return reshape(a, target);
    if (s.size() > target.size())
        throw ShapeError("broadcast_to: rank of " + shape_str(s) + " exceeds " + shape_str(target));
    const std::size_t off = target.size() - s.size();
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] != target[off + i] && s[i] != 1)
            throw ShapeError("broadcast_to: cannot expand " + shape_str(s) + " to " +
                             shape_str(target));

    Tensor out = Tensor::uninitialized(target, a.dtype());
    // Pad the input shape to the target rank, then decompose the target into
    // [outer][matching block][expanded suffix run]: runs are constant fills,
    // run-free blocks are straight copies.
    const int rank = static_cast<int>(target.size());
    Shape idims(static_cast<std::size_t>(rank), 1);
    for (std::size_t i = 0; i < s.size(); ++i) idims[off + i] = s[i];
    int r = rank;
    std::int64_t run = 1;
    while (r > 0 && idims[static_cast<std::size_t>(r - 1)] == 1) {
        run *= target[static_cast<std::size_t>(r - 1)];
        --r;
    }
    int bsplit = r;
    std::int64_t block = 1;
    while (bsplit > 0 &&
           idims[static_cast<std::size_t>(bsplit - 1)] == target[static_cast<std::size_t>(bsplit - 1)]) {
        block *= target[static_cast<std::size_t>(bsplit - 1)];
        --bsplit;
    }
    std::int64_t outer = 1;
    for (int i = 0; i < bsplit; ++i) outer *= target[static_cast<std::size_t>(i)];
    auto istrides = row_strides(idims);
    auto tstrides = row_strides(target);
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* in = a.data<T>().data();
        T* o = out.mutable_data<T>().data();
        std::vector<std::int64_t> idx(static_cast<std::size_t>(bsplit), 0);
        for (std::int64_t u = 0; u < outer; ++u) {
            std::int64_t ioff = 0, ooff = 0;
            for (int i = 0; i < bsplit; ++i) {
                ooff += idx[static_cast<std::size_t>(i)] * tstrides[static_cast<std::size_t>(i)];
                if (idims[static_cast<std::size_t>(i)] != 1)
                    ioff += idx[static_cast<std::size_t>(i)] * istrides[static_cast<std::size_t>(i)];
            }
            const T* src = in + ioff;
            T* dst = o + ooff;
            if (run == 1) {
                std::memcpy(dst, src, static_cast<std::size_t>(block) * sizeof(T));
            } else {
                for (std::int64_t k = 0; k < block; ++k) {
                    const T v = src[k];
                    T* d = dst + k * run;
                    for (std::int64_t t = 0; t < run; ++t) d[t] = v;
                }
            }
            for (int i = bsplit - 1; i >= 0; --i) {
                if (++idx[static_cast<std::size_t>(i)] < target[static_cast<std::size_t>(i)]) break;
                idx[static_cast<std::size_t>(i)] = 0;
            }
        }
    });

    Shape in_shape = s;
    Shape tgt = target;
    return autodiff::record_op("broadcast_to", out, {a}, [in_shape, tgt](const Tensor& g) {
        const std::size_t off2 = tgt.size() - in_shape.size();
        std::vector<int> axes;
        for (std::size_t d = 0; d < tgt.size(); ++d) {
            bool expanded = d < off2 || (in_shape[d - off2] == 1 && tgt[d] != 1);
            if (expanded) axes.push_back(static_cast<int>(d));
        }
        Tensor r = axes.empty() ? g : sum_axes(g, axes, true);
        return std::vector<Tensor>{reshape(r, in_shape)};
    });
}

// ---- convolution family ----

namespace {

struct ConvDims {
    std::int64_t n, c, h, w;   // input
    std::int64_t o, kh, kw;    // kernel
    std::int64_t oh, ow;       // output
};

ConvDims conv_dims(const char* op, const Shape& x, const Shape& k, int stride, int pad) {
    if (x.size() != 4 || k.size() != 4)
        throw ShapeError(std::string(op) + ": expected NCHW input and OIHW kernel, got " +
                         shape_str(x) + " and " + shape_str(k));
    if (x[1] != k[1])
        throw ShapeError(std::string(op) + ": input channels " + std::to_string(x[1]) +
                         " != kernel channels " + std::to_string(k[1]));
    if (stride < 1) throw ShapeError(std::string(op) + ": stride must be >= 1");
    if (pad < 0) throw ShapeError(std::string(op) + ": negative padding");
    ConvDims d{};
    d.n = x[0];
    d.c = x[1];
    d.h = x[2];
    d.w = x[3];
    d.o = k[0];
    d.kh = k[2];
    d.kw = k[3];
    d.oh = (d.h + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.w + 2 * pad - d.kw) / stride + 1;
    if (d.h + 2 * pad < d.kh || d.w + 2 * pad < d.kw)
        throw ShapeError(std::string(op) + ": kernel " + shape_str(k) +
                         " larger than padded input " + shape_str(x));
    return d;
}

// C[M,N] += A[M,K] * B[K,N], row-major. The contiguous j loop vectorizes.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        T* crow = c + i * n;
        for (std::int64_t l = 0; l < k; ++l) {
            const T av = a[i * k + l];
            const T* brow = b + l * n;
            for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[M,N] += A[M,K] * B[N,K]^T (dot products over the contiguous K axis).
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, std::int64_t m, std::int64_t k, std::int64_t n) {
    for (std::int64_t i = 0; i < m; ++i) {
        const T* arow = a + i * k;
        T* crow = c + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const T* brow = b + j * k;
            T acc = T(0);
            for (std::int64_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
            crow[j] += acc;
        }
    }
}

// Patch matrix of one image: cols[(c,i,j), (oh,ow)], zero-padded.
template <typename T>
void im2col(const T* x, T* cols, const ConvDims& d, int stride, int pad) {
    const std::int64_t spatial = d.oh * d.ow;
    for (std::int64_t c = 0; c < d.c; ++c) {
        const T* xc = x + c * d.h * d.w;
        for (std::int64_t i = 0; i < d.kh; ++i)
            for (std::int64_t j = 0; j < d.kw; ++j) {
                T* dst = cols + ((c * d.kh + i) * d.kw + j) * spatial;
                for (std::int64_t oh = 0; oh < d.oh; ++oh) {
                    const std::int64_t ih = oh * stride - pad + i;
                    if (ih < 0 || ih >= d.h) {
                        for (std::int64_t ow = 0; ow < d.ow; ++ow) dst[oh * d.ow + ow] = T(0);
                        continue;
                    }
                    const T* xrow = xc + ih * d.w;
                    for (std::int64_t ow = 0; ow < d.ow; ++ow) {
                        const std::int64_t iw = ow * stride - pad + j;
                        dst[oh * d.ow + ow] = (iw < 0 || iw >= d.w) ? T(0) : xrow[iw];
                    }
                }
            }
    }
}

// Adjoint of im2col: scatter-add patch columns back into the image.
template <typename T>
void col2im(const T* cols, T* x, const ConvDims& d, int stride, int pad) {
    const std::int64_t spatial = d.oh * d.ow;
    for (std::int64_t c = 0; c < d.c; ++c) {
        T* xc = x + c * d.h * d.w;
        for (std::int64_t i = 0; i < d.kh; ++i)
            for (std::int64_t j = 0; j < d.kw; ++j) {
                const T* src = cols + ((c * d.kh + i) * d.kw + j) * spatial;
                for (std::int64_t oh = 0; oh < d.oh; ++oh) {
                    const std::int64_t ih = oh * stride - pad + i;
                    if (ih < 0 || ih >= d.h) continue;
                    T* xrow = xc + ih * d.w;
                    for (std::int64_t ow = 0; ow < d.ow; ++ow) {
                        const std::int64_t iw = ow * stride - pad + j;
                        if (iw >= 0 && iw < d.w) xrow[iw] += src[oh * d.ow + ow];
                    }
                }
            }
    }
}

template <typename T>
void conv2d_forward_kernel(const T* x, const T* k, T* y, const ConvDims& d, int stride, int pad) {
    const std::int64_t patch = d.c * d.kh * d.kw;
    const std::int64_t spatial = d.oh * d.ow;
    std::vector<T> cols(static_cast<std::size_t>(patch * spatial));
    for (std::int64_t n = 0; n < d.n; ++n) {
        im2col(x + n * d.c * d.h * d.w, cols.data(), d, stride, pad);
        gemm_nn(k, cols.data(), y + n * d.o * spatial, d.o, patch, spatial);
    }
}

template <typename T>
void conv2d_input_grad_kernel(const T* gy, const T* k, T* gx, const ConvDims& d, int stride,
                              int pad) {
    const std::int64_t patch = d.c * d.kh * d.kw;
    const std::int64_t spatial = d.oh * d.ow;
    // K^T once: [patch, O]
    std::vector<T> kt(static_cast<std::size_t>(patch * d.o));
    for (std::int64_t o = 0; o < d.o; ++o)
        for (std::int64_t p = 0; p < patch; ++p) kt[p * d.o + o] = k[o * patch + p];
    std::vector<T> gcols(static_cast<std::size_t>(patch * spatial));
    for (std::int64_t n = 0; n < d.n; ++n) {
        std::fill(gcols.begin(), gcols.end(), T(0));
        gemm_nn(kt.data(), gy + n * d.o * spatial, gcols.data(), patch, d.o, spatial);
        col2im(gcols.data(), gx + n * d.c * d.h * d.w, d, stride, pad);
    }
}

template <typename T>
void conv2d_kernel_grad_kernel(const T* x, const T* gy, T* gk, const ConvDims& d, int stride,
                               int pad) {
    const std::int64_t patch = d.c * d.kh * d.kw;
    const std::int64_t spatial = d.oh * d.ow;
    std::vector<T> cols(static_cast<std::size_t>(patch * spatial));
    for (std::int64_t n = 0; n < d.n; ++n) {
        im2col(x + n * d.c * d.h * d.w, cols.data(), d, stride, pad);
        gemm_nt(gy + n * d.o * spatial, cols.data(), gk, d.o, spatial, patch);
    }
}

} // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad) {
    check_same_dtype("conv2d", x, k);
    ConvDims d = conv_dims("conv2d", x.shape(), k.shape(), stride, pad);
    Tensor y = Tensor::zeros({d.n, d.o, d.oh, d.ow}, x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        conv2d_forward_kernel<T>(x.data<T>().data(), k.data<T>().data(),
                                 y.mutable_data<T>().data(), d, stride, pad);
    });
    const std::int64_t in_h = d.h, in_w = d.w, kh = d.kh, kw = d.kw;
    return autodiff::record_op("conv2d", y, {x, k},
                               [x, k, stride, pad, in_h, in_w, kh, kw](const Tensor& g) {
                                   Tensor gx = conv2d_input_grad(g, k, stride, pad, in_h, in_w);
                                   Tensor gk = conv2d_kernel_grad(x, g, stride, pad, kh, kw);
                                   return std::vector<Tensor>{gx, gk};
                               });
}

Tensor conv2d_input_grad(const Tensor& gy, const Tensor& k, int stride, int pad, std::int64_t in_h,
                         std::int64_t in_w) {
    check_same_dtype("conv2d_input_grad", gy, k);
    ConvDims d = conv_dims("conv2d_input_grad", {gy.shape()[0], k.shape()[1], in_h, in_w},
                           k.shape(), stride, pad);
    if (gy.shape() != Shape{d.n, d.o, d.oh, d.ow})
        throw ShapeError("conv2d_input_grad: output grad shape " + shape_str(gy.shape()) +
                         " inconsistent with reconstructed dims");
    Tensor gx = Tensor::zeros({d.n, d.c, d.h, d.w}, gy.dtype());
    dispatch_dtype(gy.dtype(), [&](auto tag) {
        using T = decltype(tag);
        conv2d_input_grad_kernel<T>(gy.data<T>().data(), k.data<T>().data(),
                                    gx.mutable_data<T>().data(), d, stride, pad);
    });
    // Bilinear in (gy, k): adjoint w.r.t. gy is conv2d itself, w.r.t. k the
    // kernel-gradient correlation. Both recorded, so this op double-differentiates.
    return autodiff::record_op("conv2d_input_grad", gx, {gy, k},
                               [gy, k, stride, pad](const Tensor& u) {
                                   Tensor g_gy = conv2d(u, k, stride, pad);
                                   Tensor g_k = conv2d_kernel_grad(u, gy, stride, pad,
                                                                   k.shape()[2], k.shape()[3]);
                                   return std::vector<Tensor>{g_gy, g_k};
                               });
}

Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& gy, int stride, int pad, std::int64_t kh,
                          std::int64_t kw) {
    check_same_dtype("conv2d_kernel_grad", x, gy);
    ConvDims d = conv_dims("conv2d_kernel_grad", x.shape(),
                           {gy.shape()[1], x.shape()[1], kh, kw}, stride, pad);
    if (gy.shape() != Shape{d.n, d.o, d.oh, d.ow})
        throw ShapeError("conv2d_kernel_grad: output grad shape " + shape_str(gy.shape()) +
                         " inconsistent with reconstructed dims");
    Tensor gk = Tensor::zeros({d.o, d.c, d.kh, d.kw}, x.dtype());
    dispatch_dtype(x.dtype(), [&](auto tag) {
        using T = decltype(tag);
        conv2d_kernel_grad_kernel<T>(x.data<T>().data(), gy.data<T>().data(),
                                     gk.mutable_data<T>().data(), d, stride, pad);
    });
    const std::int64_t in_h = d.h, in_w = d.w;
    return autodiff::record_op("conv2d_kernel_grad", gk, {x, gy},
                               [x, gy, stride, pad, in_h, in_w](const Tensor& u) {
                                   Tensor g_x = conv2d_input_grad(gy, u, stride, pad, in_h, in_w);
                                   Tensor g_gy = conv2d(x, u, stride, pad);
                                   return std::vector<Tensor>{g_x, g_gy};
                               });
}

// ---- softmax / cross-entropy ----

Tensor row_max_detached(const Tensor& a) {
    const Shape& s = a.shape();
    if (s.empty()) throw ShapeError("row_max_detached: rank-0 input");
    Shape out_shape = s;
    out_shape.back() = 1;
    const std::int64_t cols = s.back();
    const std::int64_t rows = a.numel() / cols;
    Tensor out = Tensor::uninitialized(out_shape, a.dtype());
    dispatch_dtype(a.dtype(), [&](auto tag) {
        using T = decltype(tag);
        const T* in = a.data<T>().data();
        T* o = out.mutable_data<T>().data();
        for (std::int64_t r = 0; r < rows; ++r) {
            T m = in[r * cols];
            for (std::int64_t c = 1; c < cols; ++c) m = std::max(m, in[r * cols + c]);
            o[r] = m;
        }
    });
    return out;
}

Tensor log_softmax(const Tensor& a) {
    // Shift by a detached row max: softmax is shift-invariant, so the constant
    // shift changes neither values nor any order of derivative.
    Tensor shifted = sub(a, row_max_detached(a));
    Tensor lse = log(sum_axes(exp(shifted), {static_cast<int>(a.shape().size()) - 1}, true));
    return sub(shifted, lse);
}

Tensor softmax(const Tensor& a) { return exp(log_softmax(a)); }

Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels) {
    const Shape& s = logits.shape();
    if (s.size() != 2) throw ShapeError("cross_entropy: logits must be [batch, classes], got " +
                                        shape_str(s));
    const std::int64_t batch = s[0], classes = s[1];
    if (batch < 1) throw ShapeError("cross_entropy: empty batch");
    if (static_cast<std::int64_t>(labels.size()) != batch)
        throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                         std::to_string(batch));
    for (std::int64_t i = 0; i < batch; ++i)
        if (labels[static_cast<std::size_t>(i)] < 0 || labels[static_cast<std::size_t>(i)] >= classes)
            throw ShapeError("cross_entropy: label " +
                             std::to_string(labels[static_cast<std::size_t>(i)]) +
                             " out of range for " + std::to_string(classes) + " classes");
    Tensor picked = mul(log_softmax(logits), onehot(labels, classes, logits.dtype()));
    return scale(sum(picked), -1.0 / static_cast<double>(batch));
}

Tensor batchnorm_apply(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                       const Tensor& mean, const Tensor& var, double eps) {
    const Shape& s = x.shape();
    Shape cshape;
    if (s.size() == 4)
        cshape = {s[1], 1, 1};
    else if (s.size() == 2)
        cshape = {s[1]};
    else
        throw ShapeError("batchnorm_apply: expected [B,F] or NCHW input, got " + shape_str(s));
    if (gamma.shape() != Shape{s[1]} || beta.shape() != Shape{s[1]} ||
        mean.shape() != Shape{s[1]} || var.shape() != Shape{s[1]})
        throw ShapeError("batchnorm_apply: per-channel vectors must be [" + std::to_string(s[1]) +
                         "]");
    Tensor centered = sub(x, reshape(mean, cshape));
    Tensor denom = sqrt(add_scalar(var, eps));
    Tensor xhat = div(centered, reshape(denom, cshape));
    return add(mul(xhat, reshape(gamma, cshape)), reshape(beta, cshape));
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
    const Shape& s = x.shape();
    if (bias.shape().size() != 1)
        throw ShapeError("add_bias: bias must be rank-1, got " + shape_str(bias.shape()));
    if (s.size() == 2) {
        if (bias.shape()[0] != s[1]) shape_fail("add_bias", x, bias);
        return add(x, bias);
    }
    if (s.size() == 4) {
        if (bias.shape()[0] != s[1]) shape_fail("add_bias", x, bias);
        return add(x, reshape(bias, {s[1], 1, 1}));
    }
    throw ShapeError("add_bias: expected [B,F] or NCHW input, got " + shape_str(s));
}

Tensor onehot(const std::vector<std::int64_t>& labels, std::int64_t classes, DType dt) {
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(labels.size()), classes}, dt);
    dispatch_dtype(dt, [&](auto tag) {
        using T = decltype(tag);
        auto o = out.mutable_data<T>();
        for (std::size_t i = 0; i < labels.size(); ++i)
            o[i * static_cast<std::size_t>(classes) + static_cast<std::size_t>(labels[i])] = T(1);
    });
    return out;
}

std::vector<std::int64_t> argmax_rows(const Tensor& a) {
    if (a.shape().size() != 2) throw ShapeError("argmax_rows: expected 2-D");
    const std::int64_t rows = a.shape()[0], cols = a.shape()[1];
    std::vector<std::int64_t> out(static_cast<std::size_t>(rows));
    for (std::int64_t r = 0; r < rows; ++r) {
        std::int64_t best = 0;
        double bv = a.at_flat(r * cols);
        for (std::int64_t c = 1; c < cols; ++c) {
            double v = a.at_flat(r * cols + c);
            if (v > bv) {
                bv = v;
                best = c;
            }
        }
        out[static_cast<std::size_t>(r)] = best;
    }
    return out;
}

Tensor zeros_like(const Tensor& t) { return Tensor::zeros(t.shape(), t.dtype()); }

} // namespace metagrad
