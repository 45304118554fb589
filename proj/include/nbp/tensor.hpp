#ifndef NBP_TENSOR_HPP
#define NBP_TENSOR_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "nbp/common.hpp"

namespace nbp::num {

// Dense row-major array over float (training) or double (verification).
// Values are immutable from a caller's point of view: ops return fresh
// tensors. Every public op checks its output for NaN/Inf and throws
// numeric_error instead of silently propagating.
template <class T>
class basic_tensor {
public:
    basic_tensor() = default;

    explicit basic_tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), T(0)) {}

    basic_tensor(std::vector<std::size_t> shape, std::vector<T> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (data_.size() != count(shape_))
            throw invalid_argument("tensor: data size does not match shape");
    }

    static basic_tensor full(std::vector<std::size_t> shape, T v) {
        basic_tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), v);
        return t;
    }

    static basic_tensor scalar(T v) { return basic_tensor({}, {v}); }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return data_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    // Scalar (rank-0 or single-element) access.
    T item() const {
        if (data_.size() != 1) throw invalid_argument("tensor::item: not a scalar");
        return data_[0];
    }

    bool same_shape(const basic_tensor& o) const { return shape_ == o.shape_; }

    static std::size_t count(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (auto s : shape) n *= s;
        return n;
    }

private:
    std::vector<std::size_t> shape_;
    std::vector<T> data_;
};

using ftensor = basic_tensor<float>;
using dtensor = basic_tensor<double>;

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

template <class T>
void check_finite(const basic_tensor<T>& t, const char* op) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(static_cast<double>(t[i])))
            throw numeric_error(std::string("non-finite value produced by ") + op);
    }
}

namespace detail {

inline int normalize_axis(int axis, std::size_t rank, const char* op) {
    int r = static_cast<int>(rank);
    if (axis < 0) axis += r;
    if (axis < 0 || axis >= r)
        throw invalid_argument(std::string(op) + ": axis out of range for rank " + std::to_string(r));
    return axis;
}

inline std::vector<std::size_t> strides_of(const std::vector<std::size_t>& shape) {
    std::vector<std::size_t> st(shape.size(), 1);
    for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
        st[i] = st[i + 1] * shape[i + 1];
    return st;
}

// Splits a shape around `axis` into (outer, len, inner) extents so that flat
// index = (o * len + a) * inner + i.
struct axis_split {
    std::size_t outer, len, inner;
};

inline axis_split split_at(const std::vector<std::size_t>& shape, int axis) {
    axis_split s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <class T>
basic_tensor<T> add(const basic_tensor<T>& a, const basic_tensor<T>& b) {
    if (!a.same_shape(b))
        throw invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    basic_tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    check_finite(out, "add");
    return out;
}

template <class T>
basic_tensor<T> sub(const basic_tensor<T>& a, const basic_tensor<T>& b) {
    if (!a.same_shape(b))
        throw invalid_argument("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    basic_tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    check_finite(out, "sub");
    return out;
}

template <class T>
basic_tensor<T> scale(const basic_tensor<T>& a, T s) {
    basic_tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    check_finite(out, "scale");
    return out;
}

template <class T>
basic_tensor<T> mul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
    if (!a.same_shape(b))
        throw invalid_argument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    basic_tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    check_finite(out, "mul");
    return out;
}

template <class T>
basic_tensor<T> relu(const basic_tensor<T>& a) {
    basic_tensor<T> out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
    return out;
}

// ---------------------------------------------------------------------------
// matmul, batched over leading axes
// ---------------------------------------------------------------------------
//
// A: [batch..., m, k] x B: [batch..., k, n] -> [batch..., m, n].
// A rank-2 operand is broadcast across the other operand's batch axes; this
// is the only broadcasting rule in the module.

namespace detail {

template <class T>
void gemm_acc(const T* __restrict__ a, const T* __restrict__ b, T* __restrict__ c, std::size_t m,
              std::size_t k, std::size_t n) {
    // c (m x n) += a (m x k) * b (k x n); ikj order so the inner loop runs
    // over contiguous rows of b and c and vectorizes. restrict lets the
    // compiler keep the c row in registers across the k loop.
    for (std::size_t i = 0; i < m; ++i) {
        const T* __restrict__ arow = a + i * k;
        T* __restrict__ crow = c + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const T av = arow[kk];
            const T* __restrict__ brow = b + kk * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace detail

template <class T>
basic_tensor<T> matmul(const basic_tensor<T>& a, const basic_tensor<T>& b) {
    if (a.rank() < 2 || b.rank() < 2) throw invalid_argument("matmul: operands must have rank >= 2");
    const auto& as = a.shape();
    const auto& bs = b.shape();
    const std::size_t m = as[a.rank() - 2], ka = as[a.rank() - 1];
    const std::size_t kb = bs[b.rank() - 2], n = bs[b.rank() - 1];
    if (ka != kb)
        throw invalid_argument("matmul: inner dimensions differ " + shape_str(as) + " vs " + shape_str(bs));

    std::vector<std::size_t> abatch(as.begin(), as.end() - 2);
    std::vector<std::size_t> bbatch(bs.begin(), bs.end() - 2);
    std::vector<std::size_t> batch;
    bool bcast_a = false, bcast_b = false;
    if (abatch == bbatch) {
        batch = abatch;
    } else if (bbatch.empty()) {
        batch = abatch;
        bcast_b = true;
    } else if (abatch.empty()) {
        batch = bbatch;
        bcast_a = true;
    } else {
        throw invalid_argument("matmul: incompatible batch axes " + shape_str(as) + " vs " + shape_str(bs));
    }

    std::vector<std::size_t> out_shape = batch;
    out_shape.push_back(m);
    out_shape.push_back(n);
    basic_tensor<T> out(out_shape);

    const std::size_t nb = basic_tensor<T>::count(batch);
    const std::size_t a_step = bcast_a ? 0 : m * ka;
    const std::size_t b_step = bcast_b ? 0 : ka * n;
    for (std::size_t i = 0; i < nb; ++i)
        detail::gemm_acc(a.data() + i * a_step, b.data() + i * b_step, out.data() + i * m * n, m, ka, n);
    check_finite(out, "matmul");
    return out;
}

// ---------------------------------------------------------------------------
// softmax / layer norm
// ---------------------------------------------------------------------------

template <class T>
basic_tensor<T> softmax(const basic_tensor<T>& a, int axis) {
    const int ax = detail::normalize_axis(axis, a.rank(), "softmax");
    const auto sp = detail::split_at(a.shape(), ax);
    basic_tensor<T> out(a.shape());
    for (std::size_t o = 0; o < sp.outer; ++o) {
        for (std::size_t in = 0; in < sp.inner; ++in) {
            const std::size_t base = o * sp.len * sp.inner + in;
            T mx = a[base];
            for (std::size_t j = 1; j < sp.len; ++j) mx = std::max(mx, a[base + j * sp.inner]);
            T sum = T(0);
            for (std::size_t j = 0; j < sp.len; ++j) {
                const T e = std::exp(a[base + j * sp.inner] - mx);
                out[base + j * sp.inner] = e;
                sum += e;
            }
            for (std::size_t j = 0; j < sp.len; ++j) out[base + j * sp.inner] /= sum;
        }
    }
    check_finite(out, "softmax");
    return out;
}

// Normalizes over the last (feature) axis. No learned affine; compose one
// from mul/add when needed.
template <class T>
basic_tensor<T> layer_norm(const basic_tensor<T>& a, T eps) {
    if (a.rank() < 1) throw invalid_argument("layer_norm: rank-0 input");
    const std::size_t f = a.shape().back();
    const std::size_t rows = a.numel() / f;
    basic_tensor<T> out(a.shape());
    for (std::size_t r = 0; r < rows; ++r) {
        const T* x = a.data() + r * f;
        T* y = out.data() + r * f;
        T mean = T(0);
        for (std::size_t j = 0; j < f; ++j) mean += x[j];
        mean /= T(f);
        T var = T(0);
        for (std::size_t j = 0; j < f; ++j) var += (x[j] - mean) * (x[j] - mean);
        var /= T(f);
        const T inv = T(1) / std::sqrt(var + eps);
        for (std::size_t j = 0; j < f; ++j) y[j] = (x[j] - mean) * inv;
    }
    check_finite(out, "layer_norm");
    return out;
}

// ---------------------------------------------------------------------------
// shape ops
// ---------------------------------------------------------------------------

namespace detail {

// Walks an output tensor in flat order while tracking the source offset for
// per-axis source strides (zero stride = broadcast axis). The innermost axis
// is handled as one contiguous or strided run per visit.
template <class T>
void gather_strided(const std::vector<std::size_t>& out_shape, const std::vector<std::size_t>& src_stride,
                    const T* __restrict__ src, T* __restrict__ dst) {
    const std::size_t r = out_shape.size();
    if (r == 0) {
        dst[0] = src[0];
        return;
    }
    const std::size_t inner = out_shape[r - 1];
    const std::size_t inner_st = src_stride[r - 1];
    std::size_t outer = 1;
    for (std::size_t d = 0; d + 1 < r; ++d) outer *= out_shape[d];
    std::vector<std::size_t> idx(r, 0);
    std::size_t off = 0;
    for (std::size_t o = 0; o < outer; ++o) {
        T* __restrict__ row = dst + o * inner;
        if (inner_st == 1) {
            std::copy_n(src + off, inner, row);
        } else if (inner_st == 0) {
            std::fill_n(row, inner, src[off]);
        } else {
            const T* __restrict__ s = src + off;
            for (std::size_t j = 0; j < inner; ++j) row[j] = s[j * inner_st];
        }
        for (std::size_t d = r - 1; d-- > 0;) {
            off += src_stride[d];
            if (++idx[d] < out_shape[d]) break;
            off -= src_stride[d] * out_shape[d];
            idx[d] = 0;
        }
    }
}

}  // namespace detail

template <class T>
basic_tensor<T> permute_axes(const basic_tensor<T>& a, const std::vector<std::size_t>& perm) {
    if (perm.size() != a.rank()) throw invalid_argument("permute_axes: perm size != rank");
    std::vector<bool> seen(perm.size(), false);
    for (auto p : perm) {
        if (p >= perm.size() || seen[p]) throw invalid_argument("permute_axes: invalid permutation");
        seen[p] = true;
    }
    std::vector<std::size_t> out_shape(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = a.shape()[perm[i]];
    basic_tensor<T> out(out_shape);
    const auto in_st = detail::strides_of(a.shape());
    std::vector<std::size_t> src_stride(perm.size());
    for (std::size_t d = 0; d < perm.size(); ++d) src_stride[d] = in_st[perm[d]];
    detail::gather_strided(out_shape, src_stride, a.data(), out.data());
    return out;
}

template <class T>
basic_tensor<T> reshape(const basic_tensor<T>& a, std::vector<std::size_t> new_shape) {
    if (basic_tensor<T>::count(new_shape) != a.numel())
        throw invalid_argument("reshape: element count mismatch " + shape_str(a.shape()) + " -> " +
                               shape_str(new_shape));
    return basic_tensor<T>(std::move(new_shape), std::vector<T>(a.data(), a.data() + a.numel()));
}

// Explicit broadcast: each axis of `a` must equal the target or be 1;
// missing leading axes are treated as 1.
template <class T>
basic_tensor<T> broadcast_to(const basic_tensor<T>& a, const std::vector<std::size_t>& target) {
    if (a.rank() > target.size()) throw invalid_argument("broadcast_to: rank exceeds target");
    std::vector<std::size_t> padded(target.size(), 1);
    std::copy(a.shape().begin(), a.shape().end(), padded.end() - static_cast<long>(a.rank()));
    for (std::size_t d = 0; d < target.size(); ++d)
        if (padded[d] != target[d] && padded[d] != 1)
            throw invalid_argument("broadcast_to: axis " + std::to_string(d) + " not broadcastable " +
                                   shape_str(a.shape()) + " -> " + shape_str(target));
    basic_tensor<T> out(target);
    auto in_st = detail::strides_of(padded);
    for (std::size_t d = 0; d < target.size(); ++d)
        if (padded[d] == 1) in_st[d] = 0;
    detail::gather_strided(target, in_st, a.data(), out.data());
    return out;
}

template <class T>
basic_tensor<T> concat(const std::vector<basic_tensor<T>>& xs, int axis) {
    if (xs.empty()) throw invalid_argument("concat: empty input list");
    const int ax = detail::normalize_axis(axis, xs[0].rank(), "concat");
    std::size_t total = 0;
    for (const auto& x : xs) {
        if (x.rank() != xs[0].rank()) throw invalid_argument("concat: rank mismatch");
        for (std::size_t d = 0; d < x.rank(); ++d)
            if (d != static_cast<std::size_t>(ax) && x.shape()[d] != xs[0].shape()[d])
                throw invalid_argument("concat: shape mismatch off the concat axis");
        total += x.shape()[static_cast<std::size_t>(ax)];
    }
    std::vector<std::size_t> out_shape = xs[0].shape();
    out_shape[static_cast<std::size_t>(ax)] = total;
    basic_tensor<T> out(out_shape);
    const auto osp = detail::split_at(out_shape, ax);
    std::size_t off = 0;
    for (const auto& x : xs) {
        const auto sp = detail::split_at(x.shape(), ax);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t j = 0; j < sp.len; ++j)
                std::copy_n(x.data() + (o * sp.len + j) * sp.inner, sp.inner,
                            out.data() + (o * osp.len + off + j) * osp.inner);
        off += sp.len;
    }
    return out;
}

// Row selection along axis 0; indices may repeat.
template <class T>
basic_tensor<T> gather_rows(const basic_tensor<T>& a, const std::vector<std::size_t>& idx) {
    if (a.rank() < 1) throw invalid_argument("gather_rows: rank-0 input");
    const std::size_t row = a.numel() / a.shape()[0];
    std::vector<std::size_t> out_shape = a.shape();
    out_shape[0] = idx.size();
    basic_tensor<T> out(out_shape);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= a.shape()[0]) throw invalid_argument("gather_rows: index out of range");
        std::copy_n(a.data() + idx[i] * row, row, out.data() + i * row);
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
basic_tensor<T> reduce_sum(const basic_tensor<T>& a, int axis) {
    const int ax = detail::normalize_axis(axis, a.rank(), "reduce_sum");
    const auto sp = detail::split_at(a.shape(), ax);
    std::vector<std::size_t> out_shape;
    for (std::size_t d = 0; d < a.rank(); ++d)
        if (d != static_cast<std::size_t>(ax)) out_shape.push_back(a.shape()[d]);
    basic_tensor<T> out(out_shape);
    for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t in = 0; in < sp.inner; ++in) {
            T s = T(0);
            for (std::size_t j = 0; j < sp.len; ++j) s += a[(o * sp.len + j) * sp.inner + in];
            out[o * sp.inner + in] = s;
        }
    check_finite(out, "reduce_sum");
    return out;
}

template <class T>
basic_tensor<T> reduce_mean(const basic_tensor<T>& a, int axis) {
    const int ax = detail::normalize_axis(axis, a.rank(), "reduce_mean");
    auto out = reduce_sum(a, ax);
    const T inv = T(1) / T(a.shape()[static_cast<std::size_t>(ax)]);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= inv;
    return out;
}

template <class T>
basic_tensor<T> reduce_sum_all(const basic_tensor<T>& a) {
    T s = T(0);
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i];
    auto out = basic_tensor<T>::scalar(s);
    check_finite(out, "reduce_sum_all");
    return out;
}

template <class T>
basic_tensor<T> reduce_mean_all(const basic_tensor<T>& a) {
    if (a.numel() == 0) throw invalid_argument("reduce_mean_all: empty tensor");
    auto out = reduce_sum_all(a);
    return basic_tensor<T>::scalar(out.item() / T(a.numel()));
}

// ---------------------------------------------------------------------------
// random fills (draws are always double internally so float and double
// tensors consume identical RNG streams)
// ---------------------------------------------------------------------------

template <class T>
void fill_standard_normal(basic_tensor<T>& t, rng_t& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(n(rng));
}

template <class T>
void fill_uniform(basic_tensor<T>& t, rng_t& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(u(rng));
}

template <class T>
basic_tensor<T> standard_normal_like(const std::vector<std::size_t>& shape, rng_t& rng) {
    basic_tensor<T> t(shape);
    fill_standard_normal(t, rng);
    return t;
}

}  // namespace nbp::num

#endif
