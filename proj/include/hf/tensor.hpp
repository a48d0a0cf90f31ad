#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "hf/common.hpp"
#include "hf/gemm.hpp"

namespace hf {

// Reverse-mode autodiff over dense row-major tensors. A Tensor is a cheap
// shared handle; ops record backward closures onto the thread-local active
// Tape. Gradients accumulate (+=) on repeated use and live next to the data
// so they survive until the optimizer consumes them.

namespace detail {

// std::vector storage that leaves value-initialization as default-init, so
// op outputs that get fully overwritten skip the zero-fill pass.
template <typename T>
struct uninit_alloc : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = uninit_alloc<U>;
    };
    template <typename U>
    void construct(U* p) noexcept {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

}  // namespace detail

template <typename R>
using TensorBuffer = std::vector<R, detail::uninit_alloc<R>>;

template <typename R>
struct TensorImpl {
    std::vector<int> shape;
    TensorBuffer<R> data;
    TensorBuffer<R> grad;  // empty unless allocated
    bool requires_grad = false;
};

template <typename R>
class Tensor {
public:
    Tensor() : p_(std::make_shared<TensorImpl<R>>()) {}

    explicit Tensor(std::vector<int> shape, R fill = R(0)) : p_(std::make_shared<TensorImpl<R>>()) {
        p_->shape = std::move(shape);
        p_->data.assign(numel_of(p_->shape), fill);
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, R v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(R v) { return Tensor({1}, v); }

    static Tensor from(const std::vector<R>& values, std::vector<int> shape) {
        Tensor t;
        if (values.size() != numel_of(shape))
            throw ShapeError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(shape));
        t.p_->shape = std::move(shape);
        t.p_->data.assign(values.begin(), values.end());
        return t;
    }

    // allocation without the zero-fill, for outputs that get fully written
    static Tensor uninitialized(std::vector<int> shape) {
        Tensor t;
        const size_t n = numel_of(shape);
        t.p_->shape = std::move(shape);
        t.p_->data.resize(n);
        return t;
    }

    static Tensor uniform(std::vector<int> shape, R lo, R hi, Pcg32& rng) {
        Tensor t(std::move(shape));
        for (auto& v : t.p_->data) v = static_cast<R>(rng.uniform(lo, hi));
        return t;
    }

    const std::vector<int>& shape() const { return p_->shape; }
    int rank() const { return static_cast<int>(p_->shape.size()); }
    int dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
    size_t numel() const { return p_->data.size(); }
    int rows() const { return rank() == 2 ? dim(0) : (rank() == 1 ? 1 : throw_rank()); }
    int cols() const { return rank() == 2 ? dim(1) : (rank() == 1 ? dim(0) : throw_rank()); }

    R* data() { return p_->data.data(); }
    const R* data() const { return p_->data.data(); }
    TensorBuffer<R>& vec() { return p_->data; }
    const TensorBuffer<R>& vec() const { return p_->data; }
    R item() const {
        if (numel() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
        return p_->data[0];
    }
    R at(int i) const { return p_->data[static_cast<size_t>(i)]; }
    R at(int i, int j) const { return p_->data[static_cast<size_t>(i) * dim(1) + j]; }
    R& at(int i) { return p_->data[static_cast<size_t>(i)]; }
    R& at(int i, int j) { return p_->data[static_cast<size_t>(i) * dim(1) + j]; }

    bool requires_grad() const { return p_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        p_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !p_->grad.empty(); }
    void ensure_grad() {
        if (p_->grad.size() != p_->data.size()) p_->grad.assign(p_->data.size(), R(0));
    }
    void zero_grad() {
        if (has_grad()) std::fill(p_->grad.begin(), p_->grad.end(), R(0));
    }
    TensorBuffer<R>& grad() { return p_->grad; }
    const TensorBuffer<R>& grad() const { return p_->grad; }

    // deep copy of values, detached
    Tensor clone_detached() const {
        Tensor t;
        t.p_->shape = p_->shape;
        t.p_->data = p_->data;
        return t;
    }

    bool same_impl(const Tensor& o) const { return p_ == o.p_; }

    static size_t numel_of(const std::vector<int>& shape) {
        size_t n = 1;
        for (int d : shape) {
            if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(shape));
            n *= static_cast<size_t>(d);
        }
        return n;
    }

private:
    [[noreturn]] static int throw_rank() { throw ShapeError("expected rank 1 or 2 tensor"); }
    std::shared_ptr<TensorImpl<R>> p_;
};

template <typename R>
class Tape {
public:
    void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }
    size_t size() const { return nodes_.size(); }
    bool empty() const { return nodes_.empty(); }
    void clear() { nodes_.clear(); }

    // Seeds d(loss)/d(loss)=1 and replays nodes newest-first, each exactly
    // once. The tape is freed afterwards.
    void backward(Tensor<R>& loss) {
        if (loss.numel() != 1)
            throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
        if (!loss.requires_grad())
            throw ShapeError("backward() on a detached loss (no grad path to any parameter)");
        loss.ensure_grad();
        loss.grad()[0] = R(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
        nodes_.clear();
    }

    static Tape*& active() {
        static thread_local Tape* t = nullptr;
        return t;
    }

private:
    std::vector<std::function<void()>> nodes_;
};

template <typename R>
struct TapeScope {
    explicit TapeScope(Tape<R>& t) : prev(Tape<R>::active()) { Tape<R>::active() = &t; }
    ~TapeScope() { Tape<R>::active() = prev; }
    Tape<R>* prev;
};

namespace detail {

template <typename R>
inline void check_finite(const Tensor<R>& t, const char* op) {
#ifndef NDEBUG
    for (size_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(t.data()[i]))
            throw std::runtime_error(std::string("non-finite value out of op ") + op);
    }
#else
    (void)t;
    (void)op;
#endif
}

template <typename R>
inline bool taping(const Tensor<R>& a) {
    return Tape<R>::active() != nullptr && a.requires_grad();
}
template <typename R>
inline bool taping(const Tensor<R>& a, const Tensor<R>& b) {
    return Tape<R>::active() != nullptr && (a.requires_grad() || b.requires_grad());
}

template <typename R>
inline void mark_output(Tensor<R>& out, bool rec) {
    if (rec) {
        out.set_requires_grad(true);
        out.ensure_grad();
    }
}

enum class BCast { Same, AScalar, BScalar, ARow, BRow };

template <typename R>
inline BCast bcast_kind(const Tensor<R>& a, const Tensor<R>& b, const char* op) {
    if (a.shape() == b.shape()) return BCast::Same;
    if (b.numel() == 1) return BCast::BScalar;
    if (a.numel() == 1) return BCast::AScalar;
    auto is_row_of = [](const Tensor<R>& row, const Tensor<R>& full) {
        if (full.rank() != 2) return false;
        int d = full.dim(1);
        if (row.rank() == 1 && row.dim(0) == d) return true;
        if (row.rank() == 2 && row.dim(0) == 1 && row.dim(1) == d) return true;
        return false;
    };
    if (is_row_of(b, a)) return BCast::BRow;
    if (is_row_of(a, b)) return BCast::ARow;
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()) + " (only scalar and row broadcasting supported)");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops

template <typename R, typename F, typename DFA, typename DFB>
Tensor<R> ewise_binary(const Tensor<R>& a, const Tensor<R>& b, const char* op, F f, DFA dfa,
                       DFB dfb) {
    using detail::BCast;
    const BCast kind = detail::bcast_kind(a, b, op);
    const Tensor<R>& big = (kind == BCast::AScalar || kind == BCast::ARow) ? b : a;
    const size_t n = big.numel();
    const size_t d = (kind == BCast::ARow || kind == BCast::BRow)
                         ? static_cast<size_t>(big.dim(1))
                         : 0;

    auto map_a = [kind, d](size_t i) -> size_t {
        switch (kind) {
            case BCast::AScalar: return 0;
            case BCast::ARow: return i % d;
            default: return i;
        }
    };
    auto map_b = [kind, d](size_t i) -> size_t {
        switch (kind) {
            case BCast::BScalar: return 0;
            case BCast::BRow: return i % d;
            default: return i;
        }
    };

    auto out = Tensor<R>::uninitialized(big.shape());
    const R* pa = a.data();
    const R* pb = b.data();
    R* po = out.data();
    for (size_t i = 0; i < n; ++i) po[i] = f(pa[map_a(i)], pb[map_b(i)]);
    detail::check_finite(out, op);

    if (detail::taping(a, b)) {
        Tensor<R> ac = a, bc = b;
        if (ac.requires_grad()) ac.ensure_grad();
        if (bc.requires_grad()) bc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([ac, bc, out, n, map_a, map_b, dfa, dfb]() mutable {
            const R* ga = ac.data();
            const R* gb = bc.data();
            const R* go = out.grad().data();
            if (ac.requires_grad()) {
                R* g = ac.grad().data();
                for (size_t i = 0; i < n; ++i) g[map_a(i)] += dfa(ga[map_a(i)], gb[map_b(i)], go[i]);
            }
            if (bc.requires_grad()) {
                R* g = bc.grad().data();
                for (size_t i = 0; i < n; ++i) g[map_b(i)] += dfb(ga[map_a(i)], gb[map_b(i)], go[i]);
            }
        });
    }
    return out;
}

template <typename R>
Tensor<R> add(const Tensor<R>& a, const Tensor<R>& b) {
    return ewise_binary(
        a, b, "add", [](R x, R y) { return x + y; }, [](R, R, R go) { return go; },
        [](R, R, R go) { return go; });
}

template <typename R>
Tensor<R> sub(const Tensor<R>& a, const Tensor<R>& b) {
    return ewise_binary(
        a, b, "sub", [](R x, R y) { return x - y; }, [](R, R, R go) { return go; },
        [](R, R, R go) { return -go; });
}

template <typename R>
Tensor<R> mul(const Tensor<R>& a, const Tensor<R>& b) {
    return ewise_binary(
        a, b, "mul", [](R x, R y) { return x * y; }, [](R, R y, R go) { return go * y; },
        [](R x, R, R go) { return go * x; });
}

template <typename R>
Tensor<R> div(const Tensor<R>& a, const Tensor<R>& b) {
    return ewise_binary(
        a, b, "div", [](R x, R y) { return x / y; }, [](R, R y, R go) { return go / y; },
        [](R x, R y, R go) { return -go * x / (y * y); });
}

template <typename R>
Tensor<R> operator+(const Tensor<R>& a, const Tensor<R>& b) { return add(a, b); }
template <typename R>
Tensor<R> operator-(const Tensor<R>& a, const Tensor<R>& b) { return sub(a, b); }
template <typename R>
Tensor<R> operator*(const Tensor<R>& a, const Tensor<R>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// elementwise unary ops

template <typename R, typename F, typename DF>
Tensor<R> ewise_unary(const Tensor<R>& t, const char* op, F f, DF df) {
    auto out = Tensor<R>::uninitialized(t.shape());
    const size_t n = t.numel();
    const R* pt = t.data();
    R* po = out.data();
    for (size_t i = 0; i < n; ++i) po[i] = f(pt[i]);
    detail::check_finite(out, op);

    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, out, n, df]() mutable {
            const R* x = tc.data();
            const R* y = out.data();
            const R* go = out.grad().data();
            R* g = tc.grad().data();
            for (size_t i = 0; i < n; ++i) g[i] += df(x[i], y[i], go[i]);
        });
    }
    return out;
}

template <typename R>
inline R sigmoid_val(R x) {
    if (x >= R(0)) {
        R e = std::exp(-x);
        return R(1) / (R(1) + e);
    }
    R e = std::exp(x);
    return e / (R(1) + e);
}

template <typename R>
inline R softplus_val(R x) {
    // max(x,0) + log1p(exp(-|x|))
    R ax = x < R(0) ? -x : x;
    R mx = x > R(0) ? x : R(0);
    return mx + std::log1p(std::exp(-ax));
}

template <typename R>
Tensor<R> relu(const Tensor<R>& t) {
    return ewise_unary(
        t, "relu", [](R x) { return x > R(0) ? x : R(0); },
        [](R x, R, R go) { return x > R(0) ? go : R(0); });
}

template <typename R>
Tensor<R> exp_(const Tensor<R>& t) {
    return ewise_unary(
        t, "exp", [](R x) { return std::exp(x); }, [](R, R y, R go) { return go * y; });
}

template <typename R>
Tensor<R> sigmoid(const Tensor<R>& t) {
    return ewise_unary(
        t, "sigmoid", [](R x) { return sigmoid_val(x); },
        [](R, R y, R go) { return go * y * (R(1) - y); });
}

template <typename R>
Tensor<R> softplus(const Tensor<R>& t) {
    return ewise_unary(
        t, "softplus", [](R x) { return softplus_val(x); },
        [](R x, R, R go) { return go * sigmoid_val(x); });
}

template <typename R>
Tensor<R> sin_(const Tensor<R>& t) {
    return ewise_unary(
        t, "sin", [](R x) { return std::sin(x); }, [](R x, R, R go) { return go * std::cos(x); });
}

template <typename R>
Tensor<R> cos_(const Tensor<R>& t) {
    return ewise_unary(
        t, "cos", [](R x) { return std::cos(x); }, [](R x, R, R go) { return -go * std::sin(x); });
}

template <typename R>
Tensor<R> sqrt_(const Tensor<R>& t) {
    return ewise_unary(
        t, "sqrt", [](R x) { return std::sqrt(x); },
        [](R, R y, R go) { return go * R(0.5) / y; });
}

template <typename R>
Tensor<R> scale(const Tensor<R>& t, R s) {
    return ewise_unary(
        t, "scale", [s](R x) { return s * x; }, [s](R, R, R go) { return s * go; });
}

template <typename R>
Tensor<R> add_scalar(const Tensor<R>& t, R s) {
    return ewise_unary(
        t, "add_scalar", [s](R x) { return x + s; }, [](R, R, R go) { return go; });
}

// ---------------------------------------------------------------------------
// matmul / transpose / reshape

template <typename R>
Tensor<R> matmul(const Tensor<R>& a, const Tensor<R>& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
    auto out = Tensor<R>::uninitialized({m, n});
    gemm_nn(m, k, n, a.data(), b.data(), out.data());
    detail::check_finite(out, "matmul");

    if (detail::taping(a, b)) {
        Tensor<R> ac = a, bc = b;
        if (ac.requires_grad()) ac.ensure_grad();
        if (bc.requires_grad()) bc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([ac, bc, out, m, k, n]() mutable {
            const R* go = out.grad().data();
            if (ac.requires_grad()) {
                // dA = dC * B^T
                std::vector<R> bt(static_cast<size_t>(k) * n);
                transpose_mat(k, n, bc.data(), bt.data());
                gemm_nn(m, n, k, go, bt.data(), ac.grad().data(), /*accumulate=*/true);
            }
            if (bc.requires_grad()) {
                // dB = A^T * dC
                gemm_tn(k, m, n, ac.data(), go, bc.grad().data(), /*accumulate=*/true);
            }
        });
    }
    return out;
}

template <typename R>
Tensor<R> transpose(const Tensor<R>& t) {
    if (t.rank() != 2) throw ShapeError("transpose: expected rank-2, got " + shape_str(t.shape()));
    const int m = t.dim(0), n = t.dim(1);
    auto out = Tensor<R>::uninitialized({n, m});
    transpose_mat(m, n, t.data(), out.data());
    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, out, m, n]() mutable {
            std::vector<R> gt(static_cast<size_t>(m) * n);
            transpose_mat(n, m, out.grad().data(), gt.data());
            R* g = tc.grad().data();
            for (size_t i = 0; i < gt.size(); ++i) g[i] += gt[i];
        });
    }
    return out;
}

template <typename R>
Tensor<R> reshape(const Tensor<R>& t, std::vector<int> new_shape) {
    if (Tensor<R>::numel_of(new_shape) != t.numel())
        throw ShapeError("reshape: " + shape_str(t.shape()) + " -> " + shape_str(new_shape) +
                         " changes element count");
    Tensor<R> out = Tensor<R>::uninitialized(std::move(new_shape));
    std::copy(t.data(), t.data() + t.numel(), out.data());
    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, out]() mutable {
            const R* go = out.grad().data();
            R* g = tc.grad().data();
            for (size_t i = 0; i < tc.numel(); ++i) g[i] += go[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions

namespace detail {

// Pairwise (tree) summation over rows of an n x d block. Besides the better
// error growth, it makes the mean of 2^k identical rows exact, which the
// minibatch-collapse identity leans on.
template <typename R>
void pairwise_row_sum(const R* src, int n, int d, R* out) {
    std::vector<R> buf(src, src + static_cast<size_t>(n) * d);
    int m = n;
    while (m > 1) {
        const int keep = (m + 1) / 2;
        for (int i = 0; i + keep < m; ++i) {
            R* dst = buf.data() + static_cast<size_t>(i) * d;
            const R* add_row = buf.data() + static_cast<size_t>(i + keep) * d;
            for (int j = 0; j < d; ++j) dst[j] += add_row[j];
        }
        m = keep;
    }
    std::copy(buf.begin(), buf.begin() + d, out);
}

template <typename R>
R pairwise_sum(const R* src, int n) {
    R out;
    pairwise_row_sum(src, n, 1, &out);
    return out;
}

}  // namespace detail

template <typename R>
Tensor<R> reduce_mean(const Tensor<R>& t, int axis) {
    if (t.rank() == 1) {
        if (axis != 0) throw ShapeError("reduce_mean: axis out of range for rank-1 tensor");
        const size_t n = t.numel();
        Tensor<R> out({1});
        out.data()[0] = detail::pairwise_sum(t.data(), static_cast<int>(n)) / static_cast<R>(n);
        if (detail::taping(t)) {
            Tensor<R> tc = t;
            tc.ensure_grad();
            detail::mark_output(out, true);
            Tape<R>::active()->record([tc, out, n]() mutable {
                const R go = out.grad()[0] / static_cast<R>(n);
                R* g = tc.grad().data();
                for (size_t i = 0; i < n; ++i) g[i] += go;
            });
        }
        return out;
    }
    if (t.rank() != 2 || axis < 0 || axis > 1)
        throw ShapeError("reduce_mean: axis " + std::to_string(axis) + " out of range for " +
                         shape_str(t.shape()));
    const int n = t.dim(0), d = t.dim(1);
    auto out = Tensor<R>::uninitialized(axis == 0 ? std::vector<int>{d} : std::vector<int>{n});
    if (axis == 0) {
        detail::pairwise_row_sum(t.data(), n, d, out.data());
        for (int j = 0; j < d; ++j) out.data()[j] /= static_cast<R>(n);
    } else {
        for (int i = 0; i < n; ++i)
            out.data()[i] =
                detail::pairwise_sum(t.data() + static_cast<size_t>(i) * d, d) / static_cast<R>(d);
    }
    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, out, n, d, axis]() mutable {
            const R* go = out.grad().data();
            R* g = tc.grad().data();
            if (axis == 0) {
                const R inv = R(1) / static_cast<R>(n);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) g[static_cast<size_t>(i) * d + j] += go[j] * inv;
            } else {
                const R inv = R(1) / static_cast<R>(d);
                for (int i = 0; i < n; ++i)
                    for (int j = 0; j < d; ++j) g[static_cast<size_t>(i) * d + j] += go[i] * inv;
            }
        });
    }
    return out;
}

template <typename R>
Tensor<R> reduce_mean_all(const Tensor<R>& t) {
    const size_t n = t.numel();
    if (n == 0) throw ShapeError("reduce_mean_all on empty tensor");
    Tensor<R> out({1});
    R s = R(0);
    for (size_t i = 0; i < n; ++i) s += t.data()[i];
    out.data()[0] = s / static_cast<R>(n);
    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, out, n]() mutable {
            const R go = out.grad()[0] / static_cast<R>(n);
            R* g = tc.grad().data();
            for (size_t i = 0; i < n; ++i) g[i] += go;
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// concat / slicing / gather

template <typename R>
Tensor<R> concat(const std::vector<Tensor<R>>& ts, int axis) {
    if (ts.empty()) throw ShapeError("concat: empty tensor list");
    const int rank = ts[0].rank();
    if (rank == 1) {
        if (axis != 0) throw ShapeError("concat: axis out of range for rank-1 tensors");
        int total = 0;
        for (const auto& t : ts) {
            if (t.rank() != 1) throw ShapeError("concat: mixed ranks");
            total += t.dim(0);
        }
        auto out = Tensor<R>::uninitialized({total});
        int off = 0;
        for (const auto& t : ts) {
            std::copy(t.data(), t.data() + t.numel(), out.data() + off);
            off += static_cast<int>(t.numel());
        }
        bool rec = false;
        for (const auto& t : ts) rec = rec || detail::taping(t);
        if (rec) {
            std::vector<Tensor<R>> tc = ts;
            for (auto& t : tc)
                if (t.requires_grad()) t.ensure_grad();
            detail::mark_output(out, true);
            Tape<R>::active()->record([tc, out]() mutable {
                const R* go = out.grad().data();
                size_t off2 = 0;
                for (auto& t : tc) {
                    if (t.requires_grad()) {
                        R* g = t.grad().data();
                        for (size_t i = 0; i < t.numel(); ++i) g[i] += go[off2 + i];
                    }
                    off2 += t.numel();
                }
            });
        }
        return out;
    }
    if (rank != 2 || axis < 0 || axis > 1) throw ShapeError("concat: expected rank-2 and axis 0/1");
    int n0 = ts[0].dim(0), d0 = ts[0].dim(1);
    int total = 0;
    for (const auto& t : ts) {
        if (t.rank() != 2) throw ShapeError("concat: mixed ranks");
        if (axis == 0 && t.dim(1) != d0)
            throw ShapeError("concat: column mismatch " + shape_str(t.shape()) + " vs " +
                             shape_str(ts[0].shape()));
        if (axis == 1 && t.dim(0) != n0)
            throw ShapeError("concat: row mismatch " + shape_str(t.shape()) + " vs " +
                             shape_str(ts[0].shape()));
        total += t.dim(axis);
    }
    auto out = Tensor<R>::uninitialized(axis == 0 ? std::vector<int>{total, d0}
                                        : std::vector<int>{n0, total});
    if (axis == 0) {
        size_t off = 0;
        for (const auto& t : ts) {
            std::copy(t.data(), t.data() + t.numel(), out.data() + off);
            off += t.numel();
        }
    } else {
        int coff = 0;
        for (const auto& t : ts) {
            const int d = t.dim(1);
            for (int i = 0; i < n0; ++i)
                std::copy(t.data() + static_cast<size_t>(i) * d,
                          t.data() + static_cast<size_t>(i) * d + d,
                          out.data() + static_cast<size_t>(i) * total + coff);
            coff += d;
        }
    }
    bool rec = false;
    for (const auto& t : ts) rec = rec || detail::taping(t);
    if (rec) {
        std::vector<Tensor<R>> tc = ts;
        for (auto& t : tc)
            if (t.requires_grad()) t.ensure_grad();
        detail::mark_output(out, true);
        const int total_c = total;
        Tape<R>::active()->record([tc, out, axis, n0, total_c]() mutable {
            const R* go = out.grad().data();
            if (axis == 0) {
                size_t off = 0;
                for (auto& t : tc) {
                    if (t.requires_grad()) {
                        R* g = t.grad().data();
                        for (size_t i = 0; i < t.numel(); ++i) g[i] += go[off + i];
                    }
                    off += t.numel();
                }
            } else {
                int coff = 0;
                for (auto& t : tc) {
                    const int d = t.dim(1);
                    if (t.requires_grad()) {
                        R* g = t.grad().data();
                        for (int i = 0; i < n0; ++i)
                            for (int j = 0; j < d; ++j)
                                g[static_cast<size_t>(i) * d + j] +=
                                    go[static_cast<size_t>(i) * total_c + coff + j];
                    }
                    coff += d;
                }
            }
        });
    }
    return out;
}

template <typename R>
Tensor<R> slice_cols(const Tensor<R>& t, int c0, int w) {
    if (t.rank() != 2 || c0 < 0 || w < 1 || c0 + w > t.dim(1))
        throw ShapeError("slice_cols: [" + std::to_string(c0) + "," + std::to_string(c0 + w) +
                         ") out of range for " + shape_str(t.shape()));
    const int n = t.dim(0), d = t.dim(1);
    auto out = Tensor<R>::uninitialized({n, w});
    for (int i = 0; i < n; ++i)
        std::copy(t.data() + static_cast<size_t>(i) * d + c0,
                  t.data() + static_cast<size_t>(i) * d + c0 + w,
                  out.data() + static_cast<size_t>(i) * w);
    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, out, n, d, c0, w]() mutable {
            const R* go = out.grad().data();
            R* g = tc.grad().data();
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < w; ++j)
                    g[static_cast<size_t>(i) * d + c0 + j] += go[static_cast<size_t>(i) * w + j];
        });
    }
    return out;
}

template <typename R>
Tensor<R> take_rows(const Tensor<R>& t, const std::vector<int>& idx) {
    if (t.rank() != 2) throw ShapeError("take_rows: expected rank-2, got " + shape_str(t.shape()));
    const int n = t.dim(0), d = t.dim(1);
    for (int i : idx)
        if (i < 0 || i >= n)
            throw ShapeError("take_rows: row " + std::to_string(i) + " out of range for " +
                             shape_str(t.shape()));
    auto out = Tensor<R>::uninitialized({static_cast<int>(idx.size()), d});
    for (size_t r = 0; r < idx.size(); ++r)
        std::copy(t.data() + static_cast<size_t>(idx[r]) * d,
                  t.data() + static_cast<size_t>(idx[r]) * d + d, out.data() + r * d);
    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        std::vector<int> ic = idx;
        Tape<R>::active()->record([tc, out, ic, d]() mutable {
            const R* go = out.grad().data();
            R* g = tc.grad().data();
            for (size_t r = 0; r < ic.size(); ++r)
                for (int j = 0; j < d; ++j)
                    g[static_cast<size_t>(ic[r]) * d + j] += go[r * static_cast<size_t>(d) + j];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// softmax / layer_norm / stop_gradient

template <typename R>
Tensor<R> softmax(const Tensor<R>& t, int axis) {
    const bool vec1d = t.rank() == 1;
    if (!(vec1d && axis == 0) && !(t.rank() == 2 && axis == 1))
        throw ShapeError("softmax: supported on rank-1 (axis 0) or rank-2 rows (axis 1), got " +
                         shape_str(t.shape()) + " axis " + std::to_string(axis));
    const int n = vec1d ? 1 : t.dim(0);
    const int d = vec1d ? t.dim(0) : t.dim(1);
    auto out = Tensor<R>::uninitialized(t.shape());
    for (int i = 0; i < n; ++i) {
        const R* x = t.data() + static_cast<size_t>(i) * d;
        R* y = out.data() + static_cast<size_t>(i) * d;
        R mx = x[0];
        for (int j = 1; j < d; ++j) mx = std::max(mx, x[j]);
        R s = R(0);
        for (int j = 0; j < d; ++j) {
            y[j] = std::exp(x[j] - mx);
            s += y[j];
        }
        const R inv = R(1) / s;
        for (int j = 0; j < d; ++j) y[j] *= inv;
    }
    if (detail::taping(t)) {
        Tensor<R> tc = t;
        tc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([tc, out, n, d]() mutable {
            const R* go = out.grad().data();
            const R* y = out.data();
            R* g = tc.grad().data();
            for (int i = 0; i < n; ++i) {
                const size_t off = static_cast<size_t>(i) * d;
                R dot = R(0);
                for (int j = 0; j < d; ++j) dot += go[off + j] * y[off + j];
                for (int j = 0; j < d; ++j) g[off + j] += (go[off + j] - dot) * y[off + j];
            }
        });
    }
    return out;
}

// y = (x - mean)/sqrt(var + eps) * gain + bias, per row
template <typename R>
Tensor<R> layer_norm(const Tensor<R>& x, const Tensor<R>& gain, const Tensor<R>& bias,
                     R eps = R(1e-5)) {
    if (x.rank() != 2) throw ShapeError("layer_norm: expected rank-2, got " + shape_str(x.shape()));
    const int n = x.dim(0), d = x.dim(1);
    if (static_cast<int>(gain.numel()) != d || static_cast<int>(bias.numel()) != d)
        throw ShapeError("layer_norm: gain/bias must have " + std::to_string(d) + " elements");
    auto out = Tensor<R>::uninitialized({n, d});
    auto xhat = std::make_shared<std::vector<R>>(static_cast<size_t>(n) * d);
    auto istd = std::make_shared<std::vector<R>>(n);
    for (int i = 0; i < n; ++i) {
        const R* xr = x.data() + static_cast<size_t>(i) * d;
        R mu = R(0);
        for (int j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<R>(d);
        R var = R(0);
        for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<R>(d);
        const R is = R(1) / std::sqrt(var + eps);
        (*istd)[i] = is;
        R* xh = xhat->data() + static_cast<size_t>(i) * d;
        R* yr = out.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            xh[j] = (xr[j] - mu) * is;
            yr[j] = xh[j] * gain.data()[j] + bias.data()[j];
        }
    }
    if (detail::taping(x, gain) || detail::taping(bias)) {
        Tensor<R> xc = x, gc = gain, bc = bias;
        if (xc.requires_grad()) xc.ensure_grad();
        if (gc.requires_grad()) gc.ensure_grad();
        if (bc.requires_grad()) bc.ensure_grad();
        detail::mark_output(out, true);
        Tape<R>::active()->record([xc, gc, bc, out, xhat, istd, n, d]() mutable {
            const R* go = out.grad().data();
            const R* xh = xhat->data();
            for (int i = 0; i < n; ++i) {
                const size_t off = static_cast<size_t>(i) * d;
                if (gc.requires_grad()) {
                    R* gg = gc.grad().data();
                    for (int j = 0; j < d; ++j) gg[j] += go[off + j] * xh[off + j];
                }
                if (bc.requires_grad()) {
                    R* gb = bc.grad().data();
                    for (int j = 0; j < d; ++j) gb[j] += go[off + j];
                }
                if (xc.requires_grad()) {
                    const R* gv = gc.data();
                    R m1 = R(0), m2 = R(0);
                    for (int j = 0; j < d; ++j) {
                        const R t = go[off + j] * gv[j];
                        m1 += t;
                        m2 += t * xh[off + j];
                    }
                    m1 /= static_cast<R>(d);
                    m2 /= static_cast<R>(d);
                    R* gx = xc.grad().data();
                    const R is = (*istd)[i];
                    for (int j = 0; j < d; ++j)
                        gx[off + j] += (go[off + j] * gv[j] - m1 - xh[off + j] * m2) * is;
                }
            }
        });
    }
    return out;
}

// Identity forward; no backward node, so no gradient ever flows into t.
template <typename R>
Tensor<R> stop_gradient(const Tensor<R>& t) {
    return t.clone_detached();
}

// reduce_mean(stop_gradient(t), 0) without the detached copy: reads t once,
// reduces rows pairwise in fixed-size chunks (chunk sums of 2^k identical
// rows stay exact), returns a detached [1 x d] row.
template <typename R>
Tensor<R> batch_mean_detached(const Tensor<R>& t) {
    if (t.rank() != 2) throw ShapeError("batch_mean_detached: expected rank-2 input");
    const int n = t.dim(0), d = t.dim(1);
    constexpr int kChunk = 256;
    const int n_chunks = (n + kChunk - 1) / kChunk;
    std::vector<R> partial(static_cast<size_t>(n_chunks) * d);
    for (int c = 0; c < n_chunks; ++c) {
        const int lo = c * kChunk;
        const int rows = std::min(kChunk, n - lo);
        detail::pairwise_row_sum(t.data() + static_cast<size_t>(lo) * d, rows, d,
                                 partial.data() + static_cast<size_t>(c) * d);
    }
    Tensor<R> out({1, d});
    detail::pairwise_row_sum(partial.data(), n_chunks, d, out.data());
    for (int j = 0; j < d; ++j) out.data()[j] /= static_cast<R>(n);
    return out;
}

// mean((a-b)^2) over all elements
template <typename R>
Tensor<R> mse(const Tensor<R>& a, const Tensor<R>& b) {
    Tensor<R> d = sub(a, b);
    return reduce_mean_all(mul(d, d));
}

// ---------------------------------------------------------------------------
// parameters & optimizer

template <typename R>
struct NamedParam {
    std::string name;
    Tensor<R> tensor;
};

template <typename R>
using NamedParams = std::vector<NamedParam<R>>;

// Standard Adam with bias correction. Parameters without a gradient buffer
// this step are treated as zero-gradient (moments still decay).
template <typename R>
struct Adam {
    R lr = R(1e-4);
    R beta1 = R(0.9);
    R beta2 = R(0.999);
    R eps = R(1e-8);
    int64_t step_count = 0;
    std::vector<std::vector<R>> m, v;

    void reset(const NamedParams<R>& params) {
        step_count = 0;
        m.assign(params.size(), {});
        v.assign(params.size(), {});
        for (size_t i = 0; i < params.size(); ++i) {
            m[i].assign(params[i].tensor.numel(), R(0));
            v[i].assign(params[i].tensor.numel(), R(0));
        }
    }

    void step(NamedParams<R>& params) {
        if (m.size() != params.size()) reset(params);
        ++step_count;
        const R bc1 = R(1) - std::pow(beta1, static_cast<R>(step_count));
        const R bc2 = R(1) - std::pow(beta2, static_cast<R>(step_count));
        for (size_t p = 0; p < params.size(); ++p) {
            Tensor<R>& t = params[p].tensor;
            const size_t n = t.numel();
            if (m[p].size() != n)
                throw ShapeError("adam state size mismatch for parameter " + params[p].name);
            const R* g = t.has_grad() ? t.grad().data() : nullptr;
            R* pm = m[p].data();
            R* pv = v[p].data();
            R* pd = t.data();
            for (size_t i = 0; i < n; ++i) {
                const R gi = g ? g[i] : R(0);
                pm[i] = beta1 * pm[i] + (R(1) - beta1) * gi;
                pv[i] = beta2 * pv[i] + (R(1) - beta2) * gi * gi;
                const R mhat = pm[i] / bc1;
                const R vhat = pv[i] / bc2;
                pd[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
};

template <typename R>
inline void zero_all_grads(NamedParams<R>& params) {
    for (auto& p : params) p.tensor.zero_grad();
}

}  // namespace hf
