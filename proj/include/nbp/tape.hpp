#ifndef NBP_TAPE_HPP
#define NBP_TAPE_HPP

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "nbp/tensor.hpp"

namespace nbp::num {

// Handle into a tape. Cheap to copy; valid only for the tape that issued it.
struct var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are recorded in evaluation order, which is a
// topological order by construction, so the backward pass is a single
// reverse sweep visiting each node exactly once. Single-owner: a tape is
// not shared across concurrent tasks.
template <class T>
class tape {
public:
    using tensor = basic_tensor<T>;

    var constant(tensor v) { return push(std::move(v), {}); }
    var leaf(tensor v) { return push(std::move(v), {}); }

    const tensor& value(var v) const { return at(v).value; }

    const tensor& grad(var v) const {
        if (!ran_backward_) throw invalid_argument("tape::grad: backward has not run");
        return at(v).grad;
    }

    std::size_t size() const { return nodes_.size(); }

    // -- taped ops ----------------------------------------------------------

    var add(var a, var b) {
        var out = push(num::add(value(a), value(b)), [this, a, b](const tensor& g) {
            accumulate(a, g);
            accumulate(b, g);
        });
        return out;
    }

    var sub(var a, var b) {
        return push(num::sub(value(a), value(b)), [this, a, b](const tensor& g) {
            accumulate(a, g);
            accumulate_scaled(b, g, T(-1));
        });
    }

    var scale(var a, T s) {
        return push(num::scale(value(a), s), [this, a, s](const tensor& g) { accumulate_scaled(a, g, s); });
    }

    var mul(var a, var b) {
        return push(num::mul(value(a), value(b)), [this, a, b](const tensor& g) {
            accumulate(a, num::mul(g, value(b)));
            accumulate(b, num::mul(g, value(a)));
        });
    }

    var relu(var a) {
        return push(num::relu(value(a)), [this, a](const tensor& g) {
            const tensor& x = value(a);
            tensor dx(x.shape());
            for (std::size_t i = 0; i < x.numel(); ++i) dx[i] = x[i] > T(0) ? g[i] : T(0);
            accumulate(a, dx);
        });
    }

    var matmul(var a, var b) {
        return push(num::matmul(value(a), value(b)), [this, a, b](const tensor& g) {
            const tensor& av = value(a);
            const tensor& bv = value(b);
            // dA = g * B^T, dB = A^T * g; a rank-2 operand that was broadcast
            // across batch axes gets its gradient summed over them.
            tensor da = num::matmul(g, transpose_last2(bv));
            if (da.shape() != av.shape()) da = sum_to_shape(da, av.shape());
            accumulate(a, da);
            tensor db = num::matmul(transpose_last2(av), g);
            if (db.shape() != bv.shape()) db = sum_to_shape(db, bv.shape());
            accumulate(b, db);
        });
    }

    var softmax(var a, int axis) {
        var out = push(num::softmax(value(a), axis), {});
        at(out).back = [this, a, out, axis](const tensor& g) {
            const tensor& y = value(out);
            const int ax = detail::normalize_axis(axis, y.rank(), "softmax");
            const auto sp = detail::split_at(y.shape(), ax);
            tensor dx(y.shape());
            for (std::size_t o = 0; o < sp.outer; ++o)
                for (std::size_t in = 0; in < sp.inner; ++in) {
                    const std::size_t base = o * sp.len * sp.inner + in;
                    T dot = T(0);
                    for (std::size_t j = 0; j < sp.len; ++j)
                        dot += g[base + j * sp.inner] * y[base + j * sp.inner];
                    for (std::size_t j = 0; j < sp.len; ++j)
                        dx[base + j * sp.inner] = y[base + j * sp.inner] * (g[base + j * sp.inner] - dot);
                }
            accumulate(a, dx);
        };
        return out;
    }

    var layer_norm(var a, T eps) {
        return push(num::layer_norm(value(a), eps), [this, a, eps](const tensor& g) {
            const tensor& x = value(a);
            const std::size_t f = x.shape().back();
            const std::size_t rows = x.numel() / f;
            tensor dx(x.shape());
            for (std::size_t r = 0; r < rows; ++r) {
                const T* xp = x.data() + r * f;
                const T* gp = g.data() + r * f;
                T* dp = dx.data() + r * f;
                T mean = T(0);
                for (std::size_t j = 0; j < f; ++j) mean += xp[j];
                mean /= T(f);
                T varr = T(0);
                for (std::size_t j = 0; j < f; ++j) varr += (xp[j] - mean) * (xp[j] - mean);
                varr /= T(f);
                const T inv = T(1) / std::sqrt(varr + eps);
                T gsum = T(0), gxsum = T(0);
                for (std::size_t j = 0; j < f; ++j) {
                    gsum += gp[j];
                    gxsum += gp[j] * (xp[j] - mean) * inv;
                }
                for (std::size_t j = 0; j < f; ++j) {
                    const T xn = (xp[j] - mean) * inv;
                    dp[j] = inv * (gp[j] - gsum / T(f) - xn * gxsum / T(f));
                }
            }
            accumulate(a, dx);
        });
    }

    var permute_axes(var a, std::vector<std::size_t> perm) {
        var out = push(num::permute_axes(value(a), perm), {});
        at(out).back = [this, a, perm](const tensor& g) {
            std::vector<std::size_t> inv(perm.size());
            for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = i;
            accumulate(a, num::permute_axes(g, inv));
        };
        return out;
    }

    var reshape(var a, std::vector<std::size_t> new_shape) {
        var out = push(num::reshape(value(a), std::move(new_shape)), {});
        at(out).back = [this, a](const tensor& g) { accumulate(a, num::reshape(g, value(a).shape())); };
        return out;
    }

    var broadcast_to(var a, std::vector<std::size_t> target) {
        var out = push(num::broadcast_to(value(a), target), {});
        at(out).back = [this, a](const tensor& g) { accumulate(a, sum_to_shape(g, value(a).shape())); };
        return out;
    }

    var concat(const std::vector<var>& xs, int axis) {
        std::vector<tensor> vals;
        vals.reserve(xs.size());
        for (var v : xs) vals.push_back(value(v));
        var out = push(num::concat(vals, axis), {});
        at(out).back = [this, xs, axis](const tensor& g) {
            const int ax = detail::normalize_axis(axis, g.rank(), "concat");
            const auto gsp = detail::split_at(g.shape(), ax);
            std::size_t off = 0;
            for (var v : xs) {
                const auto& xs_shape = value(v).shape();
                const auto sp = detail::split_at(xs_shape, ax);
                tensor part(xs_shape);
                for (std::size_t o = 0; o < sp.outer; ++o)
                    for (std::size_t j = 0; j < sp.len; ++j)
                        std::copy_n(g.data() + (o * gsp.len + off + j) * gsp.inner, sp.inner,
                                    part.data() + (o * sp.len + j) * sp.inner);
                off += sp.len;
                accumulate(v, part);
            }
        };
        return out;
    }

    var gather_rows(var a, std::vector<std::size_t> idx) {
        var out = push(num::gather_rows(value(a), idx), {});
        at(out).back = [this, a, idx](const tensor& g) {
            const tensor& x = value(a);
            const std::size_t row = x.numel() / x.shape()[0];
            tensor dx(x.shape());
            for (std::size_t i = 0; i < idx.size(); ++i)
                for (std::size_t j = 0; j < row; ++j) dx[idx[i] * row + j] += g[i * row + j];
            accumulate(a, dx);
        };
        return out;
    }

    var reduce_sum(var a, int axis) {
        var out = push(num::reduce_sum(value(a), axis), {});
        at(out).back = [this, a, axis](const tensor& g) { accumulate(a, spread(g, value(a).shape(), axis, T(1))); };
        return out;
    }

    var reduce_mean(var a, int axis) {
        var out = push(num::reduce_mean(value(a), axis), {});
        at(out).back = [this, a, axis](const tensor& g) {
            const int ax = detail::normalize_axis(axis, value(a).rank(), "reduce_mean");
            const T inv = T(1) / T(value(a).shape()[static_cast<std::size_t>(ax)]);
            accumulate(a, spread(g, value(a).shape(), axis, inv));
        };
        return out;
    }

    var reduce_sum_all(var a) {
        var out = push(num::reduce_sum_all(value(a)), {});
        at(out).back = [this, a](const tensor& g) {
            accumulate(a, tensor::full(value(a).shape(), g.item()));
        };
        return out;
    }

    var reduce_mean_all(var a) {
        var out = push(num::reduce_mean_all(value(a)), {});
        at(out).back = [this, a](const tensor& g) {
            accumulate(a, tensor::full(value(a).shape(), g.item() / T(value(a).numel())));
        };
        return out;
    }

    // -- backward ------------------------------------------------------------

    // Seeds d(loss)/d(loss) = 1 and sweeps the tape once in reverse order.
    // Nodes the loss does not depend on keep exactly-zero gradients.
    void backward(var loss) {
        if (!loss.valid() || static_cast<std::size_t>(loss.id) >= nodes_.size())
            throw invalid_argument("tape::backward: invalid loss handle");
        if (at(loss).value.numel() != 1) throw invalid_argument("tape::backward: loss must be scalar");
        for (auto& n : nodes_) n.grad = tensor(n.value.shape());
        at(loss).grad[0] = T(1);
        ran_backward_ = true;
        for (std::int32_t i = loss.id; i >= 0; --i) {
            auto& n = nodes_[static_cast<std::size_t>(i)];
            if (n.back) n.back(n.grad);
        }
    }

private:
    struct node {
        tensor value;
        tensor grad;
        std::function<void(const tensor&)> back;
    };

    std::vector<node> nodes_;
    bool ran_backward_ = false;

    node& at(var v) {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw invalid_argument("tape: invalid handle");
        return nodes_[static_cast<std::size_t>(v.id)];
    }
    const node& at(var v) const {
        if (!v.valid() || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw invalid_argument("tape: invalid handle");
        return nodes_[static_cast<std::size_t>(v.id)];
    }

    var push(tensor value, std::function<void(const tensor&)> back) {
        nodes_.push_back(node{std::move(value), tensor{}, std::move(back)});
        return var{static_cast<std::int32_t>(nodes_.size() - 1)};
    }

    void accumulate(var v, const tensor& g) {
        tensor& dst = at(v).grad;
        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += g[i];
    }

    void accumulate_scaled(var v, const tensor& g, T s) {
        tensor& dst = at(v).grad;
        for (std::size_t i = 0; i < g.numel(); ++i) dst[i] += s * g[i];
    }

    static tensor transpose_last2(const tensor& x) {
        std::vector<std::size_t> perm(x.rank());
        for (std::size_t i = 0; i < x.rank(); ++i) perm[i] = i;
        std::swap(perm[x.rank() - 1], perm[x.rank() - 2]);
        return num::permute_axes(x, perm);
    }

    // Sums g down to `shape` (for gradients of broadcast operands).
    static tensor sum_to_shape(const tensor& g, const std::vector<std::size_t>& shape) {
        tensor cur = g;
        while (cur.rank() > shape.size()) cur = num::reduce_sum(cur, 0);
        for (std::size_t d = 0; d < shape.size(); ++d) {
            if (cur.shape()[d] != shape[d]) {
                if (shape[d] != 1) throw invalid_argument("sum_to_shape: incompatible shapes");
                const auto sp = detail::split_at(cur.shape(), static_cast<int>(d));
                std::vector<std::size_t> ns = cur.shape();
                ns[d] = 1;
                tensor next(ns);
                for (std::size_t o = 0; o < sp.outer; ++o)
                    for (std::size_t in = 0; in < sp.inner; ++in) {
                        T s = T(0);
                        for (std::size_t j = 0; j < sp.len; ++j) s += cur[(o * sp.len + j) * sp.inner + in];
                        next[o * sp.inner + in] = s;
                    }
                cur = std::move(next);
            }
        }
        return cur;
    }

    // Broadcasts a reduced gradient back along `axis`, scaled by `w`.
    static tensor spread(const tensor& g, const std::vector<std::size_t>& shape, int axis, T w) {
        const int ax = detail::normalize_axis(axis, shape.size(), "spread");
        const auto sp = detail::split_at(shape, ax);
        tensor out(shape);
        for (std::size_t o = 0; o < sp.outer; ++o)
            for (std::size_t in = 0; in < sp.inner; ++in) {
                const T v = g[o * sp.inner + in] * w;
                for (std::size_t j = 0; j < sp.len; ++j) out[(o * sp.len + j) * sp.inner + in] = v;
            }
        return out;
    }
};

// ---------------------------------------------------------------------------
// op contexts: the denoiser forward is written once against this surface and
// runs either directly on tensors (sampling; no graph kept) or on a tape
// (training).
// ---------------------------------------------------------------------------

template <class T>
struct raw_ctx {
    using scalar = T;
    using handle = basic_tensor<T>;

    handle constant(basic_tensor<T> v) { return v; }
    const basic_tensor<T>& value(const handle& h) const { return h; }

    handle add(const handle& a, const handle& b) { return num::add(a, b); }
    handle sub(const handle& a, const handle& b) { return num::sub(a, b); }
    handle scale(const handle& a, T s) { return num::scale(a, s); }
    handle mul(const handle& a, const handle& b) { return num::mul(a, b); }
    handle relu(const handle& a) { return num::relu(a); }
    handle matmul(const handle& a, const handle& b) { return num::matmul(a, b); }
    handle softmax(const handle& a, int axis) { return num::softmax(a, axis); }
    handle layer_norm(const handle& a, T eps) { return num::layer_norm(a, eps); }
    handle permute_axes(const handle& a, std::vector<std::size_t> perm) { return num::permute_axes(a, perm); }
    handle reshape(const handle& a, std::vector<std::size_t> s) { return num::reshape(a, std::move(s)); }
    handle broadcast_to(const handle& a, std::vector<std::size_t> s) { return num::broadcast_to(a, s); }
    handle concat(const std::vector<handle>& xs, int axis) { return num::concat(xs, axis); }
    handle reduce_mean(const handle& a, int axis) { return num::reduce_mean(a, axis); }
    handle reduce_sum(const handle& a, int axis) { return num::reduce_sum(a, axis); }
    handle reduce_mean_all(const handle& a) { return num::reduce_mean_all(a); }
    handle reduce_sum_all(const handle& a) { return num::reduce_sum_all(a); }
};

template <class T>
struct tape_ctx {
    using scalar = T;
    using handle = var;

    tape<T>& tp;

    handle constant(basic_tensor<T> v) { return tp.constant(std::move(v)); }
    const basic_tensor<T>& value(const handle& h) const { return tp.value(h); }

    handle add(handle a, handle b) { return tp.add(a, b); }
    handle sub(handle a, handle b) { return tp.sub(a, b); }
    handle scale(handle a, T s) { return tp.scale(a, s); }
    handle mul(handle a, handle b) { return tp.mul(a, b); }
    handle relu(handle a) { return tp.relu(a); }
    handle matmul(handle a, handle b) { return tp.matmul(a, b); }
    handle softmax(handle a, int axis) { return tp.softmax(a, axis); }
    handle layer_norm(handle a, T eps) { return tp.layer_norm(a, eps); }
    handle permute_axes(handle a, std::vector<std::size_t> perm) { return tp.permute_axes(a, std::move(perm)); }
    handle reshape(handle a, std::vector<std::size_t> s) { return tp.reshape(a, std::move(s)); }
    handle broadcast_to(handle a, std::vector<std::size_t> s) { return tp.broadcast_to(a, std::move(s)); }
    handle concat(const std::vector<handle>& xs, int axis) { return tp.concat(xs, axis); }
    handle reduce_mean(handle a, int axis) { return tp.reduce_mean(a, axis); }
    handle reduce_sum(handle a, int axis) { return tp.reduce_sum(a, axis); }
    handle reduce_mean_all(handle a) { return tp.reduce_mean_all(a); }
    handle reduce_sum_all(handle a) { return tp.reduce_sum_all(a); }
};

}  // namespace nbp::num

#endif
