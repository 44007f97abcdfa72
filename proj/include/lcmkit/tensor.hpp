#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "lcmkit/rng.hpp"

namespace lcmkit {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);
std::int64_t shape_numel(const Shape& s);

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TensorNode;

// Dense double-precision n-d array with an optional reverse-mode record.
// Values are immutable after construction; only gradient buffers and (for
// parameter leaves) explicit in-place optimizer updates mutate a node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor from(std::vector<double> values, Shape shape, bool requires_grad = false);
    static Tensor from(std::initializer_list<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::int64_t numel() const;
    std::int64_t dim(int i) const;
    int rank() const;

    const std::vector<double>& data() const;
    std::vector<double>& mutable_data();  // optimizer / EMA updates only

    bool requires_grad() const;
    Tensor& set_requires_grad(bool v);

    // Gradient of the last backward pass; zeros if this leaf was unreachable.
    std::vector<double> grad() const;
    bool has_grad() const;
    void zero_grad();

    double item() const;

    std::shared_ptr<TensorNode> node() const { return node_; }
    explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<TensorNode> node_;
};

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // sized lazily on first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Propagates this node's grad into parents' grads.
    std::function<void(TensorNode&)> backprop;

    void accum_grad(const std::vector<double>& g);
    std::vector<double>& grad_buffer();
};

// Graph recording is thread-local so inference on one thread never interferes
// with training on another.
bool grad_mode_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

// ---- operations ----------------------------------------------------------
// Binary elementwise ops accept exact-shape operands or a scalar (1-element)
// operand on either side; anything else is a ShapeError naming both shapes.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor square(const Tensor& a);
Tensor silu(const Tensor& a);

// Batched matrix product: (..., m, k) x (..., k, n) -> (..., m, n) with
// identical leading dims (or both rank 2).
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);

// Row lookup: table (rows, d), indices length n -> (n, d). Gradient
// scatter-adds into the selected rows only.
Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& indices);

// x (B, L, d) + v (B, d) broadcast over tokens.
Tensor add_token_bias(const Tensor& x, const Tensor& v);

// y = x / sqrt(mean(x^2, lastdim) + eps) * gain
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps = 1e-6);
// y = (x - mean) / sqrt(var + eps) * gain over the last dim
Tensor layernorm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

Tensor softmax_lastdim(const Tensor& x);

// Pairwise rotation of the last dim (even extent): pair i of the vector at
// leading position p is rotated by angle positions[p] * base^(-2i/d).
// `positions` has one entry per row, i.e. numel(x)/d entries cycling over the
// second-to-last axis.
Tensor rope_rotate(const Tensor& x, const std::vector<double>& positions, double base = 10000.0);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

Tensor mse(const Tensor& a, const Tensor& b);
// Mean over elements of the Huber penalty with threshold eta > 0.
Tensor huber(const Tensor& a, const Tensor& b, double eta);

// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
// trainable node reachable from `loss`.
void backward(const Tensor& loss);

// I.i.d. standard normal tensor; advances the stream by 2*ceil(numel/2).
Tensor gaussian(RngStream& stream, Shape shape);

}  // namespace lcmkit
