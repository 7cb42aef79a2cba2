#include "tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>
#include <unordered_set>

namespace fe2e {

namespace {

thread_local bool g_grad_mode = true;

std::int64_t shape_numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw_numeric("tensor dimensions must be positive");
        n *= d;
    }
    return n;
}

std::shared_ptr<detail::TensorImpl> make_impl(const Shape& shape, std::vector<double> data,
                                              bool requires_grad) {
    auto impl = std::make_shared<detail::TensorImpl>();
    impl->shape = shape;
    impl->value = std::move(data);
    impl->requires_grad = requires_grad;
    if (static_cast<std::int64_t>(impl->value.size()) != shape_numel(shape)) {
        throw_numeric("tensor data length does not match shape");
    }
    return impl;
}

bool track(const std::initializer_list<Tensor>& inputs) {
    if (!g_grad_mode) return false;
    for (const auto& t : inputs) {
        if (t.requires_grad()) return true;
    }
    return false;
}

Tensor make_result(const Shape& shape, std::vector<double> value, bool tracked,
                   std::vector<std::shared_ptr<detail::TensorImpl>> parents,
                   std::function<void(detail::TensorImpl&)> backward_fn) {
    auto impl = make_impl(shape, std::move(value), tracked);
    if (tracked) {
        impl->parents = std::move(parents);
        impl->backward_fn = std::move(backward_fn);
    }
    return Tensor(impl);
}

// Splits [0, count) across the caller and one worker thread when the job is
// big enough to pay for the spawn.
template <typename Fn>
void parallel_batches(int count, std::int64_t flops_per_batch, Fn&& fn) {
    if (count >= 2 && flops_per_batch * count > 4194304) {
        int mid = count / 2;
        std::thread worker([&] {
            for (int i = 0; i < mid; ++i) fn(i);
        });
        for (int i = mid; i < count; ++i) fn(i);
        worker.join();
    } else {
        for (int i = 0; i < count; ++i) fn(i);
    }
}

// C[m,n] (+)= sum_k A[m,k] * B[k,n]
void mm(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* crow = c + static_cast<std::size_t>(i) * n;
        if (!accumulate) std::fill(crow, crow + n, 0.0);
        for (int p = 0; p < k; ++p) {
            double av = a[static_cast<std::size_t>(i) * k + p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,k] (+)= sum_n A[m,n] * B[k,n]   (i.e. C = A * B^T with B stored [k,n])
void mm_abt(const double* a, const double* b, double* c, int m, int n, int k, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * n;
        double* crow = c + static_cast<std::size_t>(i) * k;
        for (int j = 0; j < k; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * n;
            double acc = accumulate ? crow[j] : 0.0;
            for (int p = 0; p < n; ++p) acc += arow[p] * brow[p];
            crow[j] = acc;
        }
    }
}

// C[k,n] (+)= sum_m A[m,k] * B[m,n]   (i.e. C = A^T * B)
void mm_atb(const double* a, const double* b, double* c, int m, int k, int n, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(k) * n, 0.0);
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        const double* brow = b + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

bool grad_mode() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : prev_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev_; }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
    return Tensor(make_impl(shape, std::vector<double>(shape_numel(shape), 0.0), requires_grad));
}

Tensor Tensor::full(const Shape& shape, double fill, bool requires_grad) {
    return Tensor(make_impl(shape, std::vector<double>(shape_numel(shape), fill), requires_grad));
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data, bool requires_grad) {
    return Tensor(make_impl(shape, std::move(data), requires_grad));
}

Tensor Tensor::scalar(double v) { return from_data({1}, {v}); }

const Shape& Tensor::shape() const {
    if (!impl_) throw_numeric("operation on an undefined tensor");
    return impl_->shape;
}

int Tensor::dim(int i) const {
    const auto& s = shape();
    int n = static_cast<int>(s.size());
    if (i < 0) i += n;
    if (i < 0 || i >= n) throw_numeric("tensor dim index out of range");
    return s[i];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(values().size()); }

std::vector<double>& Tensor::values() {
    if (!impl_) throw_numeric("operation on an undefined tensor");
    return impl_->value;
}

const std::vector<double>& Tensor::values() const {
    if (!impl_) throw_numeric("operation on an undefined tensor");
    return impl_->value;
}

double Tensor::item() const {
    if (numel() != 1) throw_numeric("item() requires a scalar tensor");
    return values()[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

const std::vector<double>& Tensor::grad() const {
    if (!impl_) throw_numeric("grad of an undefined tensor");
    impl_->ensure_grad();
    return impl_->grad;
}

void Tensor::zero_grad() {
    if (!impl_) return;
    impl_->grad.assign(impl_->value.size(), 0.0);
}

void Tensor::backward() {
    if (!impl_) throw_numeric("backward on an undefined tensor");
    if (impl_->numel() != 1) throw_numeric("backward requires a scalar loss");
    if (!impl_->requires_grad) throw_numeric("backward on a graph-disconnected tensor");

    // Postorder DFS, then reverse: each node visited exactly once.
    std::vector<detail::TensorImpl*> order;
    std::unordered_set<detail::TensorImpl*> seen;
    struct Frame {
        detail::TensorImpl* node;
        std::size_t next_parent;
    };
    std::vector<Frame> stack;
    stack.push_back({impl_.get(), 0});
    seen.insert(impl_.get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.node->parents.size()) {
            detail::TensorImpl* p = f.node->parents[f.next_parent++].get();
            if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.node);
            stack.pop_back();
        }
    }

    for (auto* node : order) node->ensure_grad();
    impl_->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        if ((*it)->backward_fn) (*it)->backward_fn(**it);
    }
}

namespace {

// b broadcasts onto a when b.shape is a trailing suffix of a.shape.
bool trailing_broadcast(const Shape& a, const Shape& b) {
    if (b.size() > a.size()) return false;
    for (std::size_t i = 0; i < b.size(); ++i) {
        if (b[b.size() - 1 - i] != a[a.size() - 1 - i]) return false;
    }
    return true;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (!trailing_broadcast(sa, sb)) throw_numeric("add: incompatible shapes");
    std::size_t nb = b.values().size();
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.values()[i % nb];

    bool tracked = track({a, b});
    auto ia = a.impl(), ib = b.impl();
    return make_result(sa, std::move(out), tracked, {ia, ib}, [ia, ib, nb](detail::TensorImpl& self) {
        if (ia->requires_grad) {
            ia->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ia->grad[i] += self.grad[i];
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ib->grad[i % nb] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    if (sa != b.shape()) throw_numeric("sub: shape mismatch");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.values()[i];

    bool tracked = track({a, b});
    auto ia = a.impl(), ib = b.impl();
    return make_result(sa, std::move(out), tracked, {ia, ib}, [ia, ib](detail::TensorImpl& self) {
        if (ia->requires_grad) {
            ia->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ia->grad[i] += self.grad[i];
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ib->grad[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    if (sa != b.shape()) throw_numeric("mul: shape mismatch");
    std::vector<double> out(a.values());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.values()[i];

    bool tracked = track({a, b});
    auto ia = a.impl(), ib = b.impl();
    return make_result(sa, std::move(out), tracked, {ia, ib}, [ia, ib](detail::TensorImpl& self) {
        if (ia->requires_grad) {
            ia->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ia->grad[i] += self.grad[i] * ib->value[i];
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            for (std::size_t i = 0; i < self.grad.size(); ++i) ib->grad[i] += self.grad[i] * ia->value[i];
        }
    });
}

Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (double& v : out) v *= s;
    bool tracked = track({a});
    auto ia = a.impl();
    return make_result(a.shape(), std::move(out), tracked, {ia}, [ia, s](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ia->grad[i] += s * self.grad[i];
    });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values());
    for (double& v : out) v += s;
    bool tracked = track({a});
    auto ia = a.impl();
    return make_result(a.shape(), std::move(out), tracked, {ia}, [ia](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ia->grad[i] += self.grad[i];
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() < 2 || sb.size() < 2) throw_numeric("matmul: operands must have >= 2 dims");

    int m = sa[sa.size() - 2];
    int k = sa[sa.size() - 1];
    int batch = 1;
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

    bool b_batched;
    int n;
    if (sb.size() == 2) {
        b_batched = false;
        if (sb[0] != k) throw_numeric("matmul: inner dimensions disagree");
        n = sb[1];
    } else if (sb.size() == 3 && sa.size() == 3) {
        b_batched = true;
        if (sb[0] != sa[0] || sb[1] != k) throw_numeric("matmul: batched shapes disagree");
        n = sb[2];
    } else {
        throw_numeric("matmul: unsupported rank combination");
    }

    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    std::vector<double> out(static_cast<std::size_t>(batch) * m * n);
    const double* pa = a.values().data();
    const double* pb = b.values().data();
    std::int64_t flops = static_cast<std::int64_t>(m) * k * n;
    parallel_batches(batch, flops, [&](int bi) {
        mm(pa + static_cast<std::size_t>(bi) * m * k,
           b_batched ? pb + static_cast<std::size_t>(bi) * k * n : pb,
           out.data() + static_cast<std::size_t>(bi) * m * n, m, k, n, false);
    });

    bool tracked = track({a, b});
    auto ia = a.impl(), ib = b.impl();
    return make_result(out_shape, std::move(out), tracked, {ia, ib},
                       [ia, ib, m, k, n, batch, b_batched, flops](detail::TensorImpl& self) {
        if (ia->requires_grad) ia->ensure_grad();
        if (ib->requires_grad) ib->ensure_grad();
        if (ia->requires_grad) {
            parallel_batches(batch, flops, [&](int bi) {
                const double* dc = self.grad.data() + static_cast<std::size_t>(bi) * m * n;
                const double* bv = b_batched
                                       ? ib->value.data() + static_cast<std::size_t>(bi) * k * n
                                       : ib->value.data();
                mm_abt(dc, bv, ia->grad.data() + static_cast<std::size_t>(bi) * m * k, m, n, k,
                       true);
            });
        }
        if (ib->requires_grad) {
            if (b_batched) {
                parallel_batches(batch, flops, [&](int bi) {
                    const double* dc = self.grad.data() + static_cast<std::size_t>(bi) * m * n;
                    const double* av = ia->value.data() + static_cast<std::size_t>(bi) * m * k;
                    mm_atb(av, dc, ib->grad.data() + static_cast<std::size_t>(bi) * k * n, m, k, n,
                           true);
                });
            } else {
                // shared weight: accumulate sequentially into one buffer
                for (int bi = 0; bi < batch; ++bi) {
                    const double* dc = self.grad.data() + static_cast<std::size_t>(bi) * m * n;
                    const double* av = ia->value.data() + static_cast<std::size_t>(bi) * m * k;
                    mm_atb(av, dc, ib->grad.data(), m, k, n, true);
                }
            }
        }
    });
}

Tensor transpose_last2(const Tensor& a) {
    const Shape& sa = a.shape();
    if (sa.size() < 2) throw_numeric("transpose_last2: needs >= 2 dims");
    int m = sa[sa.size() - 2];
    int n = sa[sa.size() - 1];
    int batch = 1;
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];

    Shape out_shape = sa;
    std::swap(out_shape[out_shape.size() - 2], out_shape[out_shape.size() - 1]);
    std::vector<double> out(a.values().size());
    for (int bi = 0; bi < batch; ++bi) {
        const double* src = a.values().data() + static_cast<std::size_t>(bi) * m * n;
        double* dst = out.data() + static_cast<std::size_t>(bi) * m * n;
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) dst[static_cast<std::size_t>(j) * m + i] = src[static_cast<std::size_t>(i) * n + j];
        }
    }

    bool tracked = track({a});
    auto ia = a.impl();
    return make_result(out_shape, std::move(out), tracked, {ia},
                       [ia, m, n, batch](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (int bi = 0; bi < batch; ++bi) {
            const double* g = self.grad.data() + static_cast<std::size_t>(bi) * m * n;
            double* dst = ia->grad.data() + static_cast<std::size_t>(bi) * m * n;
            for (int j = 0; j < n; ++j) {
                for (int i = 0; i < m; ++i) dst[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
            }
        }
    });
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    bool tracked = track({a});
    auto ia = a.impl();
    return make_result({1}, {total}, tracked, {ia}, [ia](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (double& g : ia->grad) g += self.grad[0];
    });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& a) {
    std::vector<double> out(a.values().size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double x = a.values()[i];
        out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
    bool tracked = track({a});
    auto ia = a.impl();
    return make_result(a.shape(), std::move(out), tracked, {ia}, [ia](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            double x = ia->value[i];
            // cdf recovered from the stored forward value; erf only at x ~ 0
            double cdf = std::fabs(x) > 1e-8 ? self.value[i] / x
                                             : 0.5 * (1.0 + std::erf(x * kInvSqrt2));
            double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
            ia->grad[i] += self.grad[i] * (cdf + x * pdf);
        }
    });
}

Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    const Shape& s = a.shape();
    int dim = s.back();
    if (gain.numel() != dim || bias.numel() != dim) throw_numeric("layer_norm: gain/bias width mismatch");
    std::size_t rows = a.values().size() / static_cast<std::size_t>(dim);

    std::vector<double> out(a.values().size());
    std::vector<double> inv_sigma(rows);
    std::vector<double> x_hat(a.values().size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = a.values().data() + r * dim;
        double mean_v = 0.0;
        for (int j = 0; j < dim; ++j) mean_v += x[j];
        mean_v /= dim;
        double var = 0.0;
        for (int j = 0; j < dim; ++j) {
            double d = x[j] - mean_v;
            var += d * d;
        }
        var /= dim;
        double inv = 1.0 / std::sqrt(var + eps);
        inv_sigma[r] = inv;
        for (int j = 0; j < dim; ++j) {
            double h = (x[j] - mean_v) * inv;
            x_hat[r * dim + j] = h;
            out[r * dim + j] = h * gain.values()[static_cast<std::size_t>(j)] +
                               bias.values()[static_cast<std::size_t>(j)];
        }
    }

    bool tracked = track({a, gain, bias});
    auto ia = a.impl(), ig = gain.impl(), ib = bias.impl();
    return make_result(s, std::move(out), tracked, {ia, ig, ib},
                       [ia, ig, ib, dim, rows, inv_sigma = std::move(inv_sigma),
                        x_hat = std::move(x_hat)](detail::TensorImpl& self) {
        if (ia->requires_grad) ia->ensure_grad();
        if (ig->requires_grad) ig->ensure_grad();
        if (ib->requires_grad) ib->ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const double* dy = self.grad.data() + r * dim;
            const double* xh = x_hat.data() + r * dim;
            if (ig->requires_grad || ib->requires_grad) {
                for (int j = 0; j < dim; ++j) {
                    if (ig->requires_grad) ig->grad[static_cast<std::size_t>(j)] += dy[j] * xh[j];
                    if (ib->requires_grad) ib->grad[static_cast<std::size_t>(j)] += dy[j];
                }
            }
            if (ia->requires_grad) {
                // dx = inv_sigma * (g - mean(g) - x_hat * mean(g * x_hat)), g = dy * gain
                double mean_g = 0.0, mean_gx = 0.0;
                for (int j = 0; j < dim; ++j) {
                    double g = dy[j] * ig->value[static_cast<std::size_t>(j)];
                    mean_g += g;
                    mean_gx += g * xh[j];
                }
                mean_g /= dim;
                mean_gx /= dim;
                double* dx = ia->grad.data() + r * dim;
                for (int j = 0; j < dim; ++j) {
                    double g = dy[j] * ig->value[static_cast<std::size_t>(j)];
                    dx[j] += inv_sigma[r] * (g - mean_g - xh[j] * mean_gx);
                }
            }
        }
    });
}

Tensor masked_softmax(const Tensor& logits, const GridMask* allowed) {
    const Shape& s = logits.shape();
    if (s.size() < 1) throw_numeric("masked_softmax: rank must be >= 1");
    int cols = s.back();
    int rows_per_batch = s.size() >= 2 ? s[s.size() - 2] : 1;
    std::size_t total_rows = logits.values().size() / static_cast<std::size_t>(cols);
    if (allowed && (!allowed->same_shape(cols, rows_per_batch))) {
        throw_numeric("masked_softmax: mask shape must match the trailing [rows, cols]");
    }

    std::vector<double> out(logits.values().size(), 0.0);
    for (std::size_t r = 0; r < total_rows; ++r) {
        int mask_row = static_cast<int>(r % static_cast<std::size_t>(rows_per_batch));
        const double* x = logits.values().data() + r * cols;
        double* y = out.data() + r * cols;
        double max_v = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < cols; ++j) {
            if (allowed && !allowed->at(j, mask_row)) continue;
            max_v = std::max(max_v, x[j]);
        }
        if (max_v == -std::numeric_limits<double>::infinity()) {
            throw_numeric("masked_softmax: a row has no allowed entries");
        }
        double denom = 0.0;
        for (int j = 0; j < cols; ++j) {
            if (allowed && !allowed->at(j, mask_row)) continue;
            y[j] = std::exp(x[j] - max_v);
            denom += y[j];
        }
        for (int j = 0; j < cols; ++j) y[j] /= denom;
    }

    bool tracked = track({logits});
    auto ia = logits.impl();
    return make_result(s, std::move(out), tracked, {ia},
                       [ia, cols, total_rows](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (std::size_t r = 0; r < total_rows; ++r) {
            const double* y = self.value.data() + r * cols;
            const double* g = self.grad.data() + r * cols;
            double* dx = ia->grad.data() + r * cols;
            double dot = 0.0;
            for (int j = 0; j < cols; ++j) dot += g[j] * y[j];
            for (int j = 0; j < cols; ++j) dx[j] += y[j] * (g[j] - dot);
        }
    });
}

Tensor slice_seq(const Tensor& a, int start, int len) {
    const Shape& s = a.shape();
    if (s.size() != 3) throw_numeric("slice_seq: expects [batch, seq, dim]");
    int b = s[0], seq = s[1], d = s[2];
    if (start < 0 || len <= 0 || start + len > seq) throw_numeric("slice_seq: range out of bounds");

    std::vector<double> out(static_cast<std::size_t>(b) * len * d);
    for (int bi = 0; bi < b; ++bi) {
        const double* src = a.values().data() + (static_cast<std::size_t>(bi) * seq + start) * d;
        std::copy(src, src + static_cast<std::size_t>(len) * d,
                  out.data() + static_cast<std::size_t>(bi) * len * d);
    }

    bool tracked = track({a});
    auto ia = a.impl();
    return make_result({b, len, d}, std::move(out), tracked, {ia},
                       [ia, b, seq, d, start, len](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (int bi = 0; bi < b; ++bi) {
            const double* g = self.grad.data() + static_cast<std::size_t>(bi) * len * d;
            double* dst = ia->grad.data() + (static_cast<std::size_t>(bi) * seq + start) * d;
            for (std::size_t i = 0; i < static_cast<std::size_t>(len) * d; ++i) dst[i] += g[i];
        }
    });
}

Tensor concat_seq(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 3 || sb.size() != 3) throw_numeric("concat_seq: expects [batch, seq, dim]");
    if (sa[0] != sb[0] || sa[2] != sb[2]) throw_numeric("concat_seq: batch/dim mismatch");
    int batch = sa[0], la = sa[1], lb = sb[1], d = sa[2];

    std::vector<double> out(static_cast<std::size_t>(batch) * (la + lb) * d);
    for (int bi = 0; bi < batch; ++bi) {
        double* dst = out.data() + static_cast<std::size_t>(bi) * (la + lb) * d;
        const double* pa = a.values().data() + static_cast<std::size_t>(bi) * la * d;
        const double* pb = b.values().data() + static_cast<std::size_t>(bi) * lb * d;
        std::copy(pa, pa + static_cast<std::size_t>(la) * d, dst);
        std::copy(pb, pb + static_cast<std::size_t>(lb) * d, dst + static_cast<std::size_t>(la) * d);
    }

    bool tracked = track({a, b});
    auto ia = a.impl(), ib = b.impl();
    return make_result({batch, la + lb, d}, std::move(out), tracked, {ia, ib},
                       [ia, ib, batch, la, lb, d](detail::TensorImpl& self) {
        for (int bi = 0; bi < batch; ++bi) {
            const double* g = self.grad.data() + static_cast<std::size_t>(bi) * (la + lb) * d;
            if (ia->requires_grad) {
                ia->ensure_grad();
                double* dst = ia->grad.data() + static_cast<std::size_t>(bi) * la * d;
                for (std::size_t i = 0; i < static_cast<std::size_t>(la) * d; ++i) dst[i] += g[i];
            }
            if (ib->requires_grad) {
                ib->ensure_grad();
                double* dst = ib->grad.data() + static_cast<std::size_t>(bi) * lb * d;
                const double* gb = g + static_cast<std::size_t>(la) * d;
                for (std::size_t i = 0; i < static_cast<std::size_t>(lb) * d; ++i) dst[i] += gb[i];
            }
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw_numeric("concat_cols: no inputs");
    int rows = parts[0].dim(0);
    int total_cols = 0;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.dim(0) != rows) throw_numeric("concat_cols: expects 2D tensors sharing dim 0");
        total_cols += p.dim(1);
    }
    std::vector<double> out(static_cast<std::size_t>(rows) * total_cols);
    int off = 0;
    for (const auto& p : parts) {
        int c = p.dim(1);
        for (int r = 0; r < rows; ++r) {
            std::copy(p.values().data() + static_cast<std::size_t>(r) * c,
                      p.values().data() + static_cast<std::size_t>(r + 1) * c,
                      out.data() + static_cast<std::size_t>(r) * total_cols + off);
        }
        off += c;
    }

    bool tracked = g_grad_mode;
    if (tracked) {
        tracked = false;
        for (const auto& p : parts) tracked = tracked || p.requires_grad();
    }
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    return make_result({rows, total_cols}, std::move(out), tracked, impls,
                       [impls, rows, total_cols](detail::TensorImpl& self) {
        int off = 0;
        for (const auto& ip : impls) {
            int c = ip->shape[1];
            if (ip->requires_grad) {
                ip->ensure_grad();
                for (int r = 0; r < rows; ++r) {
                    const double* g = self.grad.data() + static_cast<std::size_t>(r) * total_cols + off;
                    double* dst = ip->grad.data() + static_cast<std::size_t>(r) * c;
                    for (int j = 0; j < c; ++j) dst[j] += g[j];
                }
            }
            off += c;
        }
    });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
    if (shape_numel(shape) != a.numel()) throw_numeric("reshape: numel mismatch");
    bool tracked = track({a});
    auto ia = a.impl();
    return make_result(shape, a.values(), tracked, {ia}, [ia](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) ia->grad[i] += self.grad[i];
    });
}

Tensor mean_squared_norm(const Tensor& pred, const Tensor& target) {
    if (pred.shape() != target.shape()) throw_numeric("mean_squared_norm: shape mismatch");
    Tensor diff = sub(pred, target);
    Tensor sq = mul(diff, diff);
    return scale(sum(sq), 1.0 / static_cast<double>(pred.dim(0)));
}

Tensor dispersion_loss(const Tensor& features, double tau, bool include_self) {
    const Shape& s = features.shape();
    if (s.size() != 2) throw_numeric("dispersion_loss: expects [batch, dim]");
    if (!(tau > 0.0)) throw_numeric("dispersion_loss: tau must be positive");
    int b = s[0], d = s[1];
    if (!include_self && b < 2) throw_numeric("dispersion_loss: exclusive pairs need batch >= 2");

    const auto& v = features.values();
    auto sqdist = [&](int i, int j) {
        double acc = 0.0;
        const double* vi = v.data() + static_cast<std::size_t>(i) * d;
        const double* vj = v.data() + static_cast<std::size_t>(j) * d;
        for (int k = 0; k < d; ++k) {
            double diff = vi[k] - vj[k];
            acc += diff * diff;
        }
        return acc;
    };

    double pair_count = 0.0;
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < b; ++j) {
            if (!include_self && i == j) continue;
            total += std::exp(-sqdist(i, j) / tau);
            pair_count += 1.0;
        }
    }
    double mean_w = total / pair_count;
    double loss = std::log(mean_w);

    bool tracked = track({features});
    auto ia = features.impl();
    return make_result({1}, {loss}, tracked, {ia},
                       [ia, tau, include_self, b, d, mean_w, pair_count](detail::TensorImpl& self) {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        double g = self.grad[0];
        const auto& v = ia->value;
        // dL/deta_i = -(2 / (tau * S * P)) * sum over ordered pairs touching i
        double coef = -2.0 * g / (tau * mean_w * pair_count);
        for (int i = 0; i < b; ++i) {
            for (int j = 0; j < b; ++j) {
                if (i == j) continue;  // identical rows contribute zero either way
                double d2 = 0.0;
                const double* vi = v.data() + static_cast<std::size_t>(i) * d;
                const double* vj = v.data() + static_cast<std::size_t>(j) * d;
                for (int k = 0; k < d; ++k) {
                    double diff = vi[k] - vj[k];
                    d2 += diff * diff;
                }
                double w = std::exp(-d2 / tau);
                double* gi = ia->grad.data() + static_cast<std::size_t>(i) * d;
                double* gj = ia->grad.data() + static_cast<std::size_t>(j) * d;
                for (int k = 0; k < d; ++k) {
                    double diff = vi[k] - vj[k];
                    gi[k] += coef * w * diff;
                    gj[k] -= coef * w * diff;
                }
            }
        }
    });
}

}  // namespace fe2e
