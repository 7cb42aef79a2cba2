#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "error.hpp"
#include "grid.hpp"

namespace fe2e {

using Shape = std::vector<int>;

namespace detail {

struct TensorImpl {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorImpl>> parents;
    std::function<void(TensorImpl&)> backward_fn;

    std::size_t numel() const { return value.size(); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

// When grad mode is off, ops do not record the backward graph (inference path).
bool grad_mode();

struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();

private:
    bool prev_;
};

// Dense multi-dimensional array of 64-bit scalars participating in a
// reverse-mode autodiff graph. Value semantics over a shared node.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(const Shape& shape, bool requires_grad = false);
    static Tensor full(const Shape& shape, double fill, bool requires_grad = false);
    static Tensor from_data(const Shape& shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const;
    int ndim() const { return static_cast<int>(shape().size()); }
    int dim(int i) const;
    std::int64_t numel() const;

    std::vector<double>& values();
    const std::vector<double>& values() const;
    double item() const;

    bool requires_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    // Reverse pass from a scalar; touches each reachable node exactly once.
    void backward();

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Elementwise; b may also be a trailing-shape broadcast (e.g. bias [N] onto [B,N]).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

// [.., M, K] x [K, N], or [B, M, K] x [B, K, N].
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose_last2(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor gelu(const Tensor& a);

// Normalizes over the last axis, then applies learned gain/bias [dim].
Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Softmax over the last axis. `allowed`, when given, is a [rows, cols] 0/1
// grid; disallowed entries get exactly zero weight and zero gradient.
Tensor masked_softmax(const Tensor& logits, const GridMask* allowed = nullptr);

// Sequence-axis surgery for [B, S, D] token tensors.
Tensor slice_seq(const Tensor& a, int start, int len);
Tensor concat_seq(const Tensor& a, const Tensor& b);

// Column-wise concatenation of 2D tensors sharing dim 0.
Tensor concat_cols(const std::vector<Tensor>& parts);

// Same data, new shape (numel preserved).
Tensor reshape(const Tensor& a, const Shape& shape);

// (1/B) * sum_b ||pred_b - target_b||^2 over all non-batch dims.
Tensor mean_squared_norm(const Tensor& pred, const Tensor& target);

// log E_{i,j}[exp(-||eta_i - eta_j||^2 / tau)] over ordered pairs of batch
// rows; include_self selects whether i == j pairs enter the expectation.
Tensor dispersion_loss(const Tensor& features, double tau, bool include_self = true);

}  // namespace fe2e
