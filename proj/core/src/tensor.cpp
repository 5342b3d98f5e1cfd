#include "stan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include <cblas.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

extern "C" void openblas_set_num_threads(int);

namespace stan {

namespace {
// Single-threaded BLAS keeps results bitwise reproducible and avoids thread
// churn on the tiny matrices this engine works with. Large activation buffers
// are allocated and freed once per training step; keeping them on the heap
// instead of mmap avoids a page-fault storm.
struct RuntimeSetup {
    RuntimeSetup() {
        openblas_set_num_threads(1);
#if defined(__GLIBC__)
        mallopt(M_MMAP_THRESHOLD, 512 * 1024 * 1024);
        mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
    }
};
const RuntimeSetup runtime_setup;
} // namespace

int numel(const Shape& s) {
    int n = 1;
    for (int d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

static void validate_shape(const Shape& s) {
    for (int d : s)
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
}

static void check_finite(const char* op, const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x))
            throw std::runtime_error(std::string("non-finite value produced by ") + op);
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
    validate_shape(shape);
    auto n = std::make_shared<TensorNode>();
    n->values.assign(numel(shape), v);
    n->shape = std::move(shape);
    return Tensor(n);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    validate_shape(shape);
    if (numel(shape) != static_cast<int>(values.size()))
        throw ShapeError("value count " + std::to_string(values.size()) +
                         " does not match shape " + shape_str(shape));
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    return Tensor(n);
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev) {
    validate_shape(shape);
    auto n = std::make_shared<TensorNode>();
    n->values.resize(numel(shape));
    for (double& x : n->values) x = stddev * rng.normal();
    n->shape = std::move(shape);
    return Tensor(n);
}

double Tensor::item() const {
    if (size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape()));
    return node_->values[0];
}

Tensor Tensor::detach() const {
    auto n = std::make_shared<TensorNode>();
    n->shape = node_->shape;
    n->values = node_->values;
    return Tensor(n);
}

void Tensor::backward() const {
    if (size() != 1) throw ShapeError("backward requires a scalar root, got " + shape_str(shape()));
    // Iterative post-order over parents; each node visited exactly once.
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    seen.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backprop) n->backprop(*n);
    }
}

// ---- op construction ----

namespace {
thread_local int no_grad_depth = 0;
} // namespace

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }

bool grad_enabled() { return no_grad_depth == 0; }

static Tensor make_op(const char* name, Shape shape, std::vector<double> values,
                      const std::vector<Tensor>& inputs,
                      std::function<void(TensorNode&)> backprop) {
    check_finite(name, values);
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    bool rg = false;
    if (grad_enabled())
        for (const auto& t : inputs) rg = rg || t.requires_grad();
    if (rg) {
        n->requires_grad = true;
        for (const auto& t : inputs) n->parents.push_back(t.node());
        n->backprop = std::move(backprop);
    }
    return Tensor(n);
}

static void accumulate(const std::shared_ptr<TensorNode>& p, int idx, double v) {
    p->grad[idx] += v;
}

// ---- elementwise with trailing-suffix broadcast ----

static bool is_suffix(const Shape& small, const Shape& big) {
    if (small.size() > big.size()) return false;
    for (size_t i = 0; i < small.size(); ++i)
        if (small[small.size() - 1 - i] != big[big.size() - 1 - i]) return false;
    return true;
}

template <typename Fwd, typename BwdA, typename BwdB>
static Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, Fwd fwd, BwdA bwd_a,
                        BwdB bwd_b) {
    if (b.size() != 1 && !is_suffix(b.shape(), a.shape()))
        throw ShapeError(std::string(name) + ": shape " + shape_str(b.shape()) +
                         " is not broadcastable to " + shape_str(a.shape()));
    const int nb = b.size();
    std::vector<double> out(a.size());
    for (int i = 0; i < a.size(); ++i) out[i] = fwd(a.values()[i], b.values()[i % nb]);
    auto an = a.node();
    auto bn = b.node();
    return make_op(name, a.shape(), std::move(out), {a, b}, [an, bn, nb, bwd_a, bwd_b](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < o.values.size(); ++i)
                accumulate(an, static_cast<int>(i),
                           o.grad[i] * bwd_a(an->values[i], bn->values[i % nb]));
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = 0; i < o.values.size(); ++i)
                accumulate(bn, static_cast<int>(i) % nb,
                           o.grad[i] * bwd_b(an->values[i], bn->values[i % nb]));
        }
    });
}

Tensor add(const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double c) {
    std::vector<double> out(a.size());
    for (int i = 0; i < a.size(); ++i) out[i] = c * a.values()[i];
    auto an = a.node();
    return make_op("scale", a.shape(), std::move(out), {a}, [an, c](TensorNode& o) {
        an->ensure_grad();
        for (size_t i = 0; i < o.values.size(); ++i) an->grad[i] += c * o.grad[i];
    });
}

// ---- matmul ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    const int ra = a.rank();
    const int rb = b.rank();
    auto fail = [&] {
        throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " x " + shape_str(sb));
    };
    if (ra < 2 || (rb != 2 && rb != ra)) fail();
    const int m = sa[ra - 2], k = sa[ra - 1];
    const bool shared_b = (rb == 2);
    const int kb = sb[rb - 2], n = sb[rb - 1];
    if (kb != k) fail();
    if (!shared_b)
        for (int i = 0; i < ra - 2; ++i)
            if (sa[i] != sb[i]) fail();
    int batch = 1;
    for (int i = 0; i < ra - 2; ++i) batch *= sa[i];

    Shape out_shape(sa.begin(), sa.end() - 2);
    out_shape.push_back(m);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<size_t>(batch) * m * n, 0.0);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    for (int bi = 0; bi < batch; ++bi) {
        const double* A = pa + static_cast<size_t>(bi) * m * k;
        const double* B = pb + (shared_b ? 0 : static_cast<size_t>(bi) * k * n);
        double* C = out.data() + static_cast<size_t>(bi) * m * n;
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0, A, k, B, n, 0.0, C,
                    n);
    }
    auto an = a.node();
    auto bn = b.node();
    return make_op("matmul", std::move(out_shape), std::move(out), {a, b},
                   [an, bn, batch, m, k, n, shared_b](TensorNode& o) {
                       const double* gO = o.grad.data();
                       if (an->requires_grad) {
                           an->ensure_grad();
                           for (int bi = 0; bi < batch; ++bi) {
                               const double* G = gO + static_cast<size_t>(bi) * m * n;
                               const double* B =
                                   bn->values.data() + (shared_b ? 0 : static_cast<size_t>(bi) * k * n);
                               double* dA = an->grad.data() + static_cast<size_t>(bi) * m * k;
                               // dA += G * B^T
                               cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, k, n, 1.0,
                                           G, n, B, n, 1.0, dA, k);
                           }
                       }
                       if (bn->requires_grad) {
                           bn->ensure_grad();
                           for (int bi = 0; bi < batch; ++bi) {
                               const double* G = gO + static_cast<size_t>(bi) * m * n;
                               const double* A = an->values.data() + static_cast<size_t>(bi) * m * k;
                               double* dB =
                                   bn->grad.data() + (shared_b ? 0 : static_cast<size_t>(bi) * k * n);
                               // dB += A^T * G
                               cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, n, m, 1.0,
                                           A, k, G, n, 1.0, dB, n);
                           }
                       }
                   });
}

// ---- layout ops ----

Tensor permute(const Tensor& x, const std::vector<int>& perm) {
    const int r = x.rank();
    if (static_cast<int>(perm.size()) != r) throw ShapeError("permute: rank mismatch");
    std::vector<bool> used(r, false);
    for (int p : perm) {
        if (p < 0 || p >= r || used[p]) throw ShapeError("permute: invalid permutation");
        used[p] = true;
    }
    const Shape& s = x.shape();
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = s[perm[i]];
    std::vector<int> in_strides(r, 1), out_strides(r, 1);
    for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * s[i + 1];
    for (int i = r - 2; i >= 0; --i) out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
    const int total = x.size();
    std::vector<int> mapping(total);
    std::vector<double> out(total);
    for (int oi = 0; oi < total; ++oi) {
        int rem = oi, ii = 0;
        for (int d = 0; d < r; ++d) {
            const int c = rem / out_strides[d];
            rem -= c * out_strides[d];
            ii += c * in_strides[perm[d]];
        }
        mapping[oi] = ii;
        out[oi] = x.values()[ii];
    }
    auto xn = x.node();
    return make_op("permute", std::move(out_shape), std::move(out), {x},
                   [xn, mapping = std::move(mapping)](TensorNode& o) {
                       xn->ensure_grad();
                       for (size_t oi = 0; oi < o.values.size(); ++oi)
                           xn->grad[mapping[oi]] += o.grad[oi];
                   });
}

Tensor reshape(const Tensor& x, Shape shape) {
    validate_shape(shape);
    if (numel(shape) != x.size())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    auto xn = x.node();
    return make_op("reshape", std::move(shape), x.values(), {x}, [xn](TensorNode& o) {
        xn->ensure_grad();
        for (size_t i = 0; i < o.values.size(); ++i) xn->grad[i] += o.grad[i];
    });
}

Tensor slice(const Tensor& x, int axis, int start, int len) {
    const Shape& s = x.shape();
    if (axis < 0 || axis >= x.rank()) throw ShapeError("slice: bad axis");
    if (start < 0 || len <= 0 || start + len > s[axis]) throw ShapeError("slice: out of range");
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < x.rank(); ++i) inner *= s[i];
    const int d = s[axis];
    Shape out_shape = s;
    out_shape[axis] = len;
    std::vector<double> out(static_cast<size_t>(outer) * len * inner);
    for (int o = 0; o < outer; ++o)
        for (int i = 0; i < len; ++i)
            for (int in = 0; in < inner; ++in)
                out[(static_cast<size_t>(o) * len + i) * inner + in] =
                    x.values()[(static_cast<size_t>(o) * d + start + i) * inner + in];
    auto xn = x.node();
    return make_op("slice", std::move(out_shape), std::move(out), {x},
                   [xn, outer, inner, d, start, len](TensorNode& ot) {
                       xn->ensure_grad();
                       for (int o = 0; o < outer; ++o)
                           for (int i = 0; i < len; ++i)
                               for (int in = 0; in < inner; ++in)
                                   xn->grad[(static_cast<size_t>(o) * d + start + i) * inner + in] +=
                                       ot.grad[(static_cast<size_t>(o) * len + i) * inner + in];
                   });
}

Tensor concat_axis0(const Tensor& a, const Tensor& b) {
    if (a.rank() != b.rank()) throw ShapeError("concat: rank mismatch");
    for (int i = 1; i < a.rank(); ++i)
        if (a.shape()[i] != b.shape()[i])
            throw ShapeError("concat: trailing dims differ: " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    Shape out_shape = a.shape();
    out_shape[0] += b.shape()[0];
    std::vector<double> out = a.values();
    out.insert(out.end(), b.values().begin(), b.values().end());
    auto an = a.node();
    auto bn = b.node();
    const size_t na = a.values().size();
    return make_op("concat", std::move(out_shape), std::move(out), {a, b}, [an, bn, na](TensorNode& o) {
        if (an->requires_grad) {
            an->ensure_grad();
            for (size_t i = 0; i < na; ++i) an->grad[i] += o.grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (size_t i = na; i < o.values.size(); ++i) bn->grad[i - na] += o.grad[i];
        }
    });
}

// ---- nonlinear ops ----

Tensor softmax(const Tensor& x, int axis) {
    if (axis < 0 || axis >= x.rank()) throw ShapeError("softmax: bad axis for " + shape_str(x.shape()));
    const Shape& s = x.shape();
    int outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    for (int i = axis + 1; i < x.rank(); ++i) inner *= s[i];
    const int d = s[axis];
    std::vector<double> out(x.size());
    for (int o = 0; o < outer; ++o)
        for (int in = 0; in < inner; ++in) {
            double mx = -1e308;
            for (int i = 0; i < d; ++i)
                mx = std::max(mx, x.values()[(static_cast<size_t>(o) * d + i) * inner + in]);
            double z = 0.0;
            for (int i = 0; i < d; ++i) {
                const size_t idx = (static_cast<size_t>(o) * d + i) * inner + in;
                out[idx] = std::exp(x.values()[idx] - mx);
                z += out[idx];
            }
            for (int i = 0; i < d; ++i) out[(static_cast<size_t>(o) * d + i) * inner + in] /= z;
        }
    auto xn = x.node();
    return make_op("softmax", s, std::move(out), {x}, [xn, outer, inner, d](TensorNode& o) {
        xn->ensure_grad();
        for (int ou = 0; ou < outer; ++ou)
            for (int in = 0; in < inner; ++in) {
                double dot = 0.0;
                for (int i = 0; i < d; ++i) {
                    const size_t idx = (static_cast<size_t>(ou) * d + i) * inner + in;
                    dot += o.grad[idx] * o.values[idx];
                }
                for (int i = 0; i < d; ++i) {
                    const size_t idx = (static_cast<size_t>(ou) * d + i) * inner + in;
                    xn->grad[idx] += o.values[idx] * (o.grad[idx] - dot);
                }
            }
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (eps <= 0) throw ParamError("layer_norm: eps must be positive");
    const int D = x.shape().back();
    if (gamma.size() != D || beta.size() != D)
        throw ShapeError("layer_norm: gamma/beta must match last dim " + std::to_string(D));
    const int rows = x.size() / D;
    std::vector<double> out(x.size()), xhat(x.size()), inv_std(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xv = x.values().data() + static_cast<size_t>(r) * D;
        double mu = 0.0;
        for (int i = 0; i < D; ++i) mu += xv[i];
        mu /= D;
        double var = 0.0;
        for (int i = 0; i < D; ++i) var += (xv[i] - mu) * (xv[i] - mu);
        var /= D;
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (int i = 0; i < D; ++i) {
            const size_t idx = static_cast<size_t>(r) * D + i;
            xhat[idx] = (xv[i] - mu) * is;
            out[idx] = gamma.values()[i] * xhat[idx] + beta.values()[i];
        }
    }
    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    return make_op("layer_norm", x.shape(), std::move(out), {x, gamma, beta},
                   [xn, gn, bn, rows, D, xhat = std::move(xhat),
                    inv_std = std::move(inv_std)](TensorNode& o) {
                       if (gn->requires_grad) gn->ensure_grad();
                       if (bn->requires_grad) bn->ensure_grad();
                       if (xn->requires_grad) xn->ensure_grad();
                       for (int r = 0; r < rows; ++r) {
                           const size_t base = static_cast<size_t>(r) * D;
                           if (gn->requires_grad || bn->requires_grad)
                               for (int i = 0; i < D; ++i) {
                                   if (gn->requires_grad) gn->grad[i] += o.grad[base + i] * xhat[base + i];
                                   if (bn->requires_grad) bn->grad[i] += o.grad[base + i];
                               }
                           if (!xn->requires_grad) continue;
                           double sum_g = 0.0, sum_gx = 0.0;
                           for (int i = 0; i < D; ++i) {
                               const double gh = o.grad[base + i] * gn->values[i];
                               sum_g += gh;
                               sum_gx += gh * xhat[base + i];
                           }
                           for (int i = 0; i < D; ++i) {
                               const double gh = o.grad[base + i] * gn->values[i];
                               xn->grad[base + i] +=
                                   inv_std[r] * (gh - sum_g / D - xhat[base + i] * sum_gx / D);
                           }
                       }
                   });
}

Tensor gelu(const Tensor& x) {
    static const double inv_sqrt2 = 0.7071067811865475244;
    static const double inv_sqrt2pi = 0.3989422804014326779;
    std::vector<double> out(x.size());
    for (int i = 0; i < x.size(); ++i) {
        const double v = x.values()[i];
        out[i] = 0.5 * v * (1.0 + std::erf(v * inv_sqrt2));
    }
    auto xn = x.node();
    return make_op("gelu", x.shape(), std::move(out), {x}, [xn](TensorNode& o) {
        xn->ensure_grad();
        for (size_t i = 0; i < o.values.size(); ++i) {
            const double v = xn->values[i];
            const double phi = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
            const double pdf = inv_sqrt2pi * std::exp(-0.5 * v * v);
            xn->grad[i] += o.grad[i] * (phi + v * pdf);
        }
    });
}

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
    if (p < 0.0 || p >= 1.0) throw ParamError("dropout: p must be in [0, 1), got " + std::to_string(p));
    if (!training || p == 0.0) return x;
    const double keep = 1.0 - p;
    std::vector<double> mask(x.size());
    for (double& m : mask) m = (rng.uniform() < p) ? 0.0 : 1.0 / keep;
    std::vector<double> out(x.size());
    for (int i = 0; i < x.size(); ++i) out[i] = x.values()[i] * mask[i];
    auto xn = x.node();
    return make_op("dropout", x.shape(), std::move(out), {x},
                   [xn, mask = std::move(mask)](TensorNode& o) {
                       xn->ensure_grad();
                       for (size_t i = 0; i < o.values.size(); ++i)
                           xn->grad[i] += o.grad[i] * mask[i];
                   });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
    double s = 0.0;
    for (double v : x.values()) s += v;
    auto xn = x.node();
    return make_op("sum", {1}, {s}, {x}, [xn](TensorNode& o) {
        xn->ensure_grad();
        for (double& g : xn->grad) g += o.grad[0];
    });
}

Tensor mean_axis0(const Tensor& x) {
    if (x.rank() < 2) throw ShapeError("mean_axis0 requires rank >= 2, got " + shape_str(x.shape()));
    const int T = x.shape()[0];
    const int inner = x.size() / T;
    Shape out_shape(x.shape().begin() + 1, x.shape().end());
    std::vector<double> out(inner, 0.0);
    for (int t = 0; t < T; ++t)
        for (int i = 0; i < inner; ++i) out[i] += x.values()[static_cast<size_t>(t) * inner + i];
    for (double& v : out) v /= T;
    auto xn = x.node();
    return make_op("mean_axis0", std::move(out_shape), std::move(out), {x},
                   [xn, T, inner](TensorNode& o) {
                       xn->ensure_grad();
                       for (int t = 0; t < T; ++t)
                           for (int i = 0; i < inner; ++i)
                               xn->grad[static_cast<size_t>(t) * inner + i] += o.grad[i] / T;
                   });
}

Tensor temporal_shift(const Tensor& x, int offset) {
    const int T = x.shape()[0];
    const int inner = x.size() / T;
    std::vector<double> out(x.size(), 0.0);
    for (int t = 0; t < T; ++t) {
        const int src = t + offset;
        if (src < 0 || src >= T) continue;
        for (int i = 0; i < inner; ++i)
            out[static_cast<size_t>(t) * inner + i] = x.values()[static_cast<size_t>(src) * inner + i];
    }
    auto xn = x.node();
    return make_op("temporal_shift", x.shape(), std::move(out), {x},
                   [xn, T, inner, offset](TensorNode& o) {
                       xn->ensure_grad();
                       for (int t = 0; t < T; ++t) {
                           const int src = t + offset;
                           if (src < 0 || src >= T) continue;
                           for (int i = 0; i < inner; ++i)
                               xn->grad[static_cast<size_t>(src) * inner + i] +=
                                   o.grad[static_cast<size_t>(t) * inner + i];
                       }
                   });
}

// ---- structured ops for the branch / heads ----

Tensor prepend_cls(const Tensor& cls, const Tensor& patches) {
    // Per-clip form: cls (D), patches (T,L,D). Batched: cls (B,D),
    // patches (B,T,L,D); each clip's cls heads every frame of that clip.
    const bool batched = patches.rank() == 4;
    if ((batched && cls.rank() != 2) || (!batched && (cls.rank() != 1 || patches.rank() != 3)) ||
        cls.shape().back() != patches.shape().back() ||
        (batched && cls.shape()[0] != patches.shape()[0]))
        throw ShapeError("prepend_cls: expected cls (D)/(B,D) and patches (T,L,D)/(B,T,L,D), got " +
                         shape_str(cls.shape()) + " and " + shape_str(patches.shape()));
    const int B = batched ? patches.shape()[0] : 1;
    const int T = patches.shape()[batched ? 1 : 0];
    const int L = patches.shape()[batched ? 2 : 1];
    const int D = patches.shape().back();
    Shape out_shape = batched ? Shape{B, T, L + 1, D} : Shape{T, L + 1, D};
    std::vector<double> out(static_cast<size_t>(B) * T * (L + 1) * D);
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t) {
            double* frame = out.data() + (static_cast<size_t>(b) * T + t) * (L + 1) * D;
            const double* c = cls.values().data() + static_cast<size_t>(b) * D;
            std::copy(c, c + D, frame);
            const double* src = patches.values().data() + (static_cast<size_t>(b) * T + t) * L * D;
            std::copy(src, src + static_cast<size_t>(L) * D, frame + D);
        }
    auto cn = cls.node();
    auto pn = patches.node();
    return make_op("prepend_cls", std::move(out_shape), std::move(out), {cls, patches},
                   [cn, pn, B, T, L, D](TensorNode& o) {
                       if (cn->requires_grad) cn->ensure_grad();
                       if (pn->requires_grad) pn->ensure_grad();
                       for (int b = 0; b < B; ++b)
                           for (int t = 0; t < T; ++t) {
                               const double* g =
                                   o.grad.data() + (static_cast<size_t>(b) * T + t) * (L + 1) * D;
                               if (cn->requires_grad)
                                   for (int i = 0; i < D; ++i)
                                       cn->grad[static_cast<size_t>(b) * D + i] += g[i];
                               if (pn->requires_grad) {
                                   double* dst =
                                       pn->grad.data() + (static_cast<size_t>(b) * T + t) * L * D;
                                   for (int i = 0; i < L * D; ++i) dst[i] += g[D + i];
                               }
                           }
                   });
}

Tensor add_positions(const Tensor& patches, const Tensor& pos_t, const Tensor& pos_s) {
    // patches (T,L,D) or batched (B,T,L,D); embeddings are shared across B.
    const bool batched = patches.rank() == 4;
    if (patches.rank() != 3 && patches.rank() != 4)
        throw ShapeError("add_positions: patches must be (T,L,D) or (B,T,L,D)");
    const int B = batched ? patches.shape()[0] : 1;
    const int T = patches.shape()[batched ? 1 : 0];
    const int L = patches.shape()[batched ? 2 : 1];
    const int D = patches.shape().back();
    if (pos_t.shape() != Shape{T, D} || pos_s.shape() != Shape{L, D})
        throw ShapeError("add_positions: pos_t " + shape_str(pos_t.shape()) + " / pos_s " +
                         shape_str(pos_s.shape()) + " do not match patches " +
                         shape_str(patches.shape()));
    std::vector<double> out(patches.size());
    for (int b = 0; b < B; ++b)
        for (int t = 0; t < T; ++t)
            for (int j = 0; j < L; ++j)
                for (int i = 0; i < D; ++i) {
                    const size_t at = ((static_cast<size_t>(b) * T + t) * L + j) * D + i;
                    out[at] = patches.values()[at] + pos_t.values()[static_cast<size_t>(t) * D + i] +
                              pos_s.values()[static_cast<size_t>(j) * D + i];
                }
    auto pn = patches.node();
    auto tn = pos_t.node();
    auto sn = pos_s.node();
    return make_op("add_positions", patches.shape(), std::move(out), {patches, pos_t, pos_s},
                   [pn, tn, sn, B, T, L, D](TensorNode& o) {
                       if (pn->requires_grad) pn->ensure_grad();
                       if (tn->requires_grad) tn->ensure_grad();
                       if (sn->requires_grad) sn->ensure_grad();
                       for (int b = 0; b < B; ++b)
                           for (int t = 0; t < T; ++t)
                               for (int j = 0; j < L; ++j)
                                   for (int i = 0; i < D; ++i) {
                                       const size_t at =
                                           ((static_cast<size_t>(b) * T + t) * L + j) * D + i;
                                       const double g = o.grad[at];
                                       if (pn->requires_grad) pn->grad[at] += g;
                                       if (tn->requires_grad)
                                           tn->grad[static_cast<size_t>(t) * D + i] += g;
                                       if (sn->requires_grad)
                                           sn->grad[static_cast<size_t>(j) * D + i] += g;
                                   }
                   });
}

Tensor rows_lookup(const Tensor& table, const std::vector<int>& ids) {
    if (table.rank() != 2) throw ShapeError("rows_lookup: table must be rank 2");
    const int V = table.shape()[0], D = table.shape()[1];
    for (int id : ids)
        if (id < 0 || id >= V)
            throw ParamError("rows_lookup: id " + std::to_string(id) + " out of vocab " +
                             std::to_string(V));
    const int n = static_cast<int>(ids.size());
    if (n == 0) throw ParamError("rows_lookup: empty id sequence");
    std::vector<double> out(static_cast<size_t>(n) * D);
    for (int r = 0; r < n; ++r)
        std::copy(table.values().begin() + static_cast<size_t>(ids[r]) * D,
                  table.values().begin() + static_cast<size_t>(ids[r] + 1) * D,
                  out.begin() + static_cast<size_t>(r) * D);
    auto tn = table.node();
    return make_op("rows_lookup", {n, D}, std::move(out), {table}, [tn, ids, D](TensorNode& o) {
        tn->ensure_grad();
        for (size_t r = 0; r < ids.size(); ++r)
            for (int i = 0; i < D; ++i)
                tn->grad[static_cast<size_t>(ids[r]) * D + i] += o.grad[r * D + i];
    });
}

Tensor row_normalize(const Tensor& x) {
    if (x.rank() != 2) throw ShapeError("row_normalize: expected rank 2, got " + shape_str(x.shape()));
    const int N = x.shape()[0], D = x.shape()[1];
    std::vector<double> out(x.size()), norms(N);
    for (int r = 0; r < N; ++r) {
        double s = 0.0;
        for (int i = 0; i < D; ++i) {
            const double v = x.values()[static_cast<size_t>(r) * D + i];
            s += v * v;
        }
        if (s == 0.0) throw ParamError("row_normalize: zero-norm row " + std::to_string(r));
        norms[r] = std::sqrt(s);
        for (int i = 0; i < D; ++i)
            out[static_cast<size_t>(r) * D + i] = x.values()[static_cast<size_t>(r) * D + i] / norms[r];
    }
    auto xn = x.node();
    return make_op("row_normalize", x.shape(), std::move(out), {x},
                   [xn, N, D, norms = std::move(norms)](TensorNode& o) {
                       xn->ensure_grad();
                       for (int r = 0; r < N; ++r) {
                           const size_t base = static_cast<size_t>(r) * D;
                           double dot = 0.0;
                           for (int i = 0; i < D; ++i) dot += o.grad[base + i] * o.values[base + i];
                           for (int i = 0; i < D; ++i)
                               xn->grad[base + i] +=
                                   (o.grad[base + i] - o.values[base + i] * dot) / norms[r];
                       }
                   });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const int D = rows[0].size();
    for (const auto& r : rows)
        if (r.rank() != 1 || r.size() != D) throw ShapeError("stack_rows: inconsistent row shapes");
    const int N = static_cast<int>(rows.size());
    std::vector<double> out;
    out.reserve(static_cast<size_t>(N) * D);
    for (const auto& r : rows) out.insert(out.end(), r.values().begin(), r.values().end());
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& r : rows) nodes.push_back(r.node());
    return make_op("stack_rows", {N, D}, std::move(out), rows,
                   [nodes = std::move(nodes), D](TensorNode& o) {
                       for (size_t r = 0; r < nodes.size(); ++r) {
                           if (!nodes[r]->requires_grad) continue;
                           nodes[r]->ensure_grad();
                           for (int i = 0; i < D; ++i) nodes[r]->grad[i] += o.grad[r * D + i];
                       }
                   });
}

Tensor stack0(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw ShapeError("stack0: no tensors");
    const Shape& s = xs[0].shape();
    for (const auto& x : xs)
        if (x.shape() != s) throw ShapeError("stack0: inconsistent shapes");
    const int B = static_cast<int>(xs.size());
    const int inner = xs[0].size();
    Shape out_shape{B};
    out_shape.insert(out_shape.end(), s.begin(), s.end());
    std::vector<double> out;
    out.reserve(static_cast<size_t>(B) * inner);
    for (const auto& x : xs) out.insert(out.end(), x.values().begin(), x.values().end());
    std::vector<std::shared_ptr<TensorNode>> nodes;
    for (const auto& x : xs) nodes.push_back(x.node());
    return make_op("stack0", std::move(out_shape), std::move(out), xs,
                   [nodes = std::move(nodes), inner](TensorNode& o) {
                       for (size_t b = 0; b < nodes.size(); ++b) {
                           if (!nodes[b]->requires_grad) continue;
                           nodes[b]->ensure_grad();
                           for (int i = 0; i < inner; ++i)
                               nodes[b]->grad[i] += o.grad[b * inner + i];
                       }
                   });
}

Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.rank() != 2) throw ShapeError("cross_entropy: logits must be (N,C)");
    const int N = logits.shape()[0], C = logits.shape()[1];
    if (static_cast<int>(labels.size()) != N) throw ShapeError("cross_entropy: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= C)
            throw ParamError("cross_entropy: label " + std::to_string(y) + " out of range " +
                             std::to_string(C));
    std::vector<double> probs(logits.size());
    double loss = 0.0;
    for (int r = 0; r < N; ++r) {
        const double* z = logits.values().data() + static_cast<size_t>(r) * C;
        double mx = z[0];
        for (int c = 1; c < C; ++c) mx = std::max(mx, z[c]);
        double sum = 0.0;
        for (int c = 0; c < C; ++c) {
            probs[static_cast<size_t>(r) * C + c] = std::exp(z[c] - mx);
            sum += probs[static_cast<size_t>(r) * C + c];
        }
        for (int c = 0; c < C; ++c) probs[static_cast<size_t>(r) * C + c] /= sum;
        loss += std::log(sum) + mx - z[labels[r]];
    }
    loss /= N;
    auto ln = logits.node();
    return make_op("cross_entropy", {1}, {loss}, {logits},
                   [ln, labels, N, C, probs = std::move(probs)](TensorNode& o) {
                       ln->ensure_grad();
                       const double g = o.grad[0] / N;
                       for (int r = 0; r < N; ++r)
                           for (int c = 0; c < C; ++c)
                               ln->grad[static_cast<size_t>(r) * C + c] +=
                                   g * (probs[static_cast<size_t>(r) * C + c] -
                                        (c == labels[r] ? 1.0 : 0.0));
                   });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

} // namespace stan
