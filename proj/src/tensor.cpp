#include "lcmkit/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace lcmkit {

namespace {

thread_local bool g_grad_mode = true;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    return n;
}

bool record(std::initializer_list<const Tensor*> inputs) {
    if (!g_grad_mode) return false;
    for (const Tensor* t : inputs) {
        if (t->requires_grad()) return true;
    }
    return false;
}

void attach(const std::shared_ptr<TensorNode>& out,
            std::initializer_list<const Tensor*> inputs,
            std::function<void(TensorNode&)> fn) {
    out->requires_grad = true;
    for (const Tensor* t : inputs) out->parents.push_back(t->node());
    out->backprop = std::move(fn);
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
}

}  // namespace

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << "]";
    return os.str();
}

std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto e : s) n *= e;
    return n;
}

void TensorNode::accum_grad(const std::vector<double>& g) {
    auto& buf = grad_buffer();
    for (size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

std::vector<double>& TensorNode::grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0);
    return grad;
}

bool grad_mode_enabled() { return g_grad_mode; }

NoGradGuard::NoGradGuard() : prev_(g_grad_mode) { g_grad_mode = false; }
NoGradGuard::~NoGradGuard() { g_grad_mode = prev_; }

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    auto n = make_node(shape, std::vector<double>(shape_numel(shape), 0.0));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    auto n = make_node(shape, std::vector<double>(shape_numel(shape), value));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
    return full({1}, value, requires_grad);
}

Tensor Tensor::from(std::vector<double> values, Shape shape, bool requires_grad) {
    if (static_cast<std::int64_t>(values.size()) != shape_numel(shape)) {
        throw ShapeError("from: " + std::to_string(values.size()) + " values for shape " +
                         shape_str(shape));
    }
    auto n = make_node(std::move(shape), std::move(values));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
}

Tensor Tensor::from(std::initializer_list<double> values) {
    std::vector<double> v(values);
    Shape s{static_cast<std::int64_t>(v.size())};
    return from(std::move(v), std::move(s));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(node_->data.size()); }
std::int64_t Tensor::dim(int i) const { return node_->shape.at(i); }
int Tensor::rank() const { return static_cast<int>(node_->shape.size()); }

const std::vector<double>& Tensor::data() const { return node_->data; }
std::vector<double>& Tensor::mutable_data() { return node_->data; }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
    node_->requires_grad = v;
    return *this;
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.empty()) return std::vector<double>(node_->data.size(), 0.0);
    return node_->grad;
}

bool Tensor::has_grad() const { return !node_->grad.empty(); }

void Tensor::zero_grad() { node_->grad.clear(); }

double Tensor::item() const {
    if (numel() != 1) {
        throw ShapeError("item: tensor has shape " + shape_str(shape()));
    }
    return node_->data[0];
}

// ---- elementwise ----------------------------------------------------------

namespace {

enum class BinKind { Add, Sub, Mul };

Tensor binary_op(BinKind kind, const Tensor& a, const Tensor& b, const char* name) {
    const bool a_scalar = a.numel() == 1;
    const bool b_scalar = b.numel() == 1;
    if (a.shape() != b.shape() && !a_scalar && !b_scalar) shape_fail(name, a.shape(), b.shape());

    const Shape& out_shape = a_scalar && !b_scalar ? b.shape() : a.shape();
    const std::int64_t n = shape_numel(out_shape);
    const auto& ad = a.data();
    const auto& bd = b.data();
    std::vector<double> out(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = ad[a_scalar ? 0 : i];
        const double y = bd[b_scalar ? 0 : i];
        switch (kind) {
            case BinKind::Add: out[i] = x + y; break;
            case BinKind::Sub: out[i] = x - y; break;
            case BinKind::Mul: out[i] = x * y; break;
        }
    }
    auto node = make_node(out_shape, std::move(out));

    if (record({&a, &b})) {
        auto an = a.node();
        auto bn = b.node();
        attach(node, {&a, &b}, [kind, an, bn, a_scalar, b_scalar, n](TensorNode& self) {
            const auto& g = self.grad;
            if (an->requires_grad) {
                auto& ga = an->grad_buffer();
                for (std::int64_t i = 0; i < n; ++i) {
                    double d = g[i];
                    if (kind == BinKind::Mul) d *= bn->data[b_scalar ? 0 : i];
                    ga[a_scalar ? 0 : i] += d;
                }
            }
            if (bn->requires_grad) {
                auto& gb = bn->grad_buffer();
                for (std::int64_t i = 0; i < n; ++i) {
                    double d = g[i];
                    if (kind == BinKind::Sub) d = -d;
                    if (kind == BinKind::Mul) d = g[i] * an->data[a_scalar ? 0 : i];
                    gb[b_scalar ? 0 : i] += d;
                }
            }
        });
    }
    return Tensor(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Add, a, b, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Sub, a, b, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(BinKind::Mul, a, b, "mul"); }

Tensor add_scalar(const Tensor& a, double c) {
    const std::int64_t n = a.numel();
    std::vector<double> out(n);
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] + c;
    auto node = make_node(a.shape(), std::move(out));
    if (record({&a})) {
        auto an = a.node();
        attach(node, {&a}, [an](TensorNode& self) { an->accum_grad(self.grad); });
    }
    return Tensor(node);
}

Tensor mul_scalar(const Tensor& a, double c) {
    const std::int64_t n = a.numel();
    std::vector<double> out(n);
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[i] * c;
    auto node = make_node(a.shape(), std::move(out));
    if (record({&a})) {
        auto an = a.node();
        attach(node, {&a}, [an, c, n](TensorNode& self) {
            auto& ga = an->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) ga[i] += self.grad[i] * c;
        });
    }
    return Tensor(node);
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor silu(const Tensor& a) {
    const std::int64_t n = a.numel();
    std::vector<double> out(n);
    for (std::int64_t i = 0; i < n; ++i) {
        const double x = a.data()[i];
        out[i] = x / (1.0 + std::exp(-x));
    }
    auto node = make_node(a.shape(), std::move(out));
    if (record({&a})) {
        auto an = a.node();
        attach(node, {&a}, [an, n](TensorNode& self) {
            auto& ga = an->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) {
                const double x = an->data[i];
                const double s = 1.0 / (1.0 + std::exp(-x));
                ga[i] += self.grad[i] * s * (1.0 + x * (1.0 - s));
            }
        });
    }
    return Tensor(node);
}

// ---- matmul ---------------------------------------------------------------

namespace {

struct MatmulDims {
    std::int64_t batch, m, k, n;
};

MatmulDims matmul_dims(const Tensor& a, const Tensor& b) {
    if (a.rank() < 2 || b.rank() < 2) shape_fail("matmul", a.shape(), b.shape());
    if (a.rank() != b.rank()) shape_fail("matmul", a.shape(), b.shape());
    const int r = a.rank();
    std::int64_t batch = 1;
    for (int i = 0; i + 2 < r; ++i) {
        if (a.dim(i) != b.dim(i)) shape_fail("matmul", a.shape(), b.shape());
        batch *= a.dim(i);
    }
    const std::int64_t m = a.dim(r - 2), k = a.dim(r - 1);
    const std::int64_t k2 = b.dim(r - 2), n = b.dim(r - 1);
    if (k != k2) {
        throw ShapeError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    return {batch, m, k, n};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    const auto d = matmul_dims(a, b);
    Shape out_shape(a.shape().begin(), a.shape().end() - 2);
    out_shape.push_back(d.m);
    out_shape.push_back(d.n);

    std::vector<double> out(d.batch * d.m * d.n);
    for (std::int64_t s = 0; s < d.batch; ++s) {
        MapConstMat A(a.data().data() + s * d.m * d.k, d.m, d.k);
        MapConstMat B(b.data().data() + s * d.k * d.n, d.k, d.n);
        MapMat C(out.data() + s * d.m * d.n, d.m, d.n);
        C.noalias() = A * B;
    }
    auto node = make_node(std::move(out_shape), std::move(out));

    if (record({&a, &b})) {
        auto an = a.node();
        auto bn = b.node();
        attach(node, {&a, &b}, [an, bn, d](TensorNode& self) {
            for (std::int64_t s = 0; s < d.batch; ++s) {
                MapConstMat G(self.grad.data() + s * d.m * d.n, d.m, d.n);
                if (an->requires_grad) {
                    MapConstMat B(bn->data.data() + s * d.k * d.n, d.k, d.n);
                    MapMat GA(an->grad_buffer().data() + s * d.m * d.k, d.m, d.k);
                    GA.noalias() += G * B.transpose();
                }
                if (bn->requires_grad) {
                    MapConstMat A(an->data.data() + s * d.m * d.k, d.m, d.k);
                    MapMat GB(bn->grad_buffer().data() + s * d.k * d.n, d.k, d.n);
                    GB.noalias() += A.transpose() * G;
                }
            }
        });
    }
    return Tensor(node);
}

// ---- layout ---------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
    }
    auto node = make_node(std::move(shape), a.data());
    if (record({&a})) {
        auto an = a.node();
        attach(node, {&a}, [an](TensorNode& self) { an->accum_grad(self.grad); });
    }
    return Tensor(node);
}

namespace {

std::vector<std::int64_t> strides_of(const Shape& s) {
    std::vector<std::int64_t> st(s.size());
    std::int64_t acc = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
        st[i] = acc;
        acc *= s[i];
    }
    return st;
}

// out[i] = src index for flat output position i under the axis permutation
std::vector<std::int64_t> permute_map(const Shape& in_shape, const std::vector<int>& axes) {
    const int r = static_cast<int>(in_shape.size());
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = in_shape[axes[i]];
    const auto in_strides = strides_of(in_shape);
    const auto out_strides = strides_of(out_shape);
    const std::int64_t n = shape_numel(in_shape);
    std::vector<std::int64_t> map(n);
    for (std::int64_t i = 0; i < n; ++i) {
        std::int64_t rem = i, src = 0;
        for (int ax = 0; ax < r; ++ax) {
            const std::int64_t idx = rem / out_strides[ax];
            rem %= out_strides[ax];
            src += idx * in_strides[axes[ax]];
        }
        map[i] = src;
    }
    return map;
}

}  // namespace

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
    const int r = a.rank();
    if (static_cast<int>(axes.size()) != r) {
        throw ShapeError("permute: " + std::to_string(axes.size()) + " axes for rank " +
                         std::to_string(r));
    }
    Shape out_shape(r);
    for (int i = 0; i < r; ++i) out_shape[i] = a.dim(axes[i]);
    const auto map = permute_map(a.shape(), axes);
    const std::int64_t n = a.numel();
    std::vector<double> out(n);
    for (std::int64_t i = 0; i < n; ++i) out[i] = a.data()[map[i]];
    auto node = make_node(std::move(out_shape), std::move(out));
    if (record({&a})) {
        auto an = a.node();
        attach(node, {&a}, [an, map, n](TensorNode& self) {
            auto& ga = an->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) ga[map[i]] += self.grad[i];
        });
    }
    return Tensor(node);
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::int64_t>& indices) {
    if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_str(table.shape()));
    const std::int64_t rows = table.dim(0), d = table.dim(1);
    for (auto ix : indices) {
        if (ix < 0 || ix >= rows) {
            throw ShapeError("embedding: index " + std::to_string(ix) + " out of [0," +
                             std::to_string(rows - 1) + "]");
        }
    }
    const std::int64_t n = static_cast<std::int64_t>(indices.size());
    std::vector<double> out(n * d);
    for (std::int64_t i = 0; i < n; ++i) {
        std::copy_n(table.data().data() + indices[i] * d, d, out.data() + i * d);
    }
    auto node = make_node({n, d}, std::move(out));
    if (record({&table})) {
        auto tn = table.node();
        attach(node, {&table}, [tn, indices, d, n](TensorNode& self) {
            auto& gt = tn->grad_buffer();
            for (std::int64_t i = 0; i < n; ++i) {
                for (std::int64_t j = 0; j < d; ++j) gt[indices[i] * d + j] += self.grad[i * d + j];
            }
        });
    }
    return Tensor(node);
}

Tensor add_token_bias(const Tensor& x, const Tensor& v) {
    if (x.rank() != 3 || v.rank() != 2 || x.dim(0) != v.dim(0) || x.dim(2) != v.dim(1)) {
        shape_fail("add_token_bias", x.shape(), v.shape());
    }
    const std::int64_t B = x.dim(0), L = x.dim(1), d = x.dim(2);
    std::vector<double> out(x.numel());
    for (std::int64_t b = 0; b < B; ++b) {
        for (std::int64_t l = 0; l < L; ++l) {
            for (std::int64_t j = 0; j < d; ++j) {
                out[(b * L + l) * d + j] = x.data()[(b * L + l) * d + j] + v.data()[b * d + j];
            }
        }
    }
    auto node = make_node(x.shape(), std::move(out));
    if (record({&x, &v})) {
        auto xn = x.node();
        auto vn = v.node();
        attach(node, {&x, &v}, [xn, vn, B, L, d](TensorNode& self) {
            if (xn->requires_grad) xn->accum_grad(self.grad);
            if (vn->requires_grad) {
                auto& gv = vn->grad_buffer();
                for (std::int64_t b = 0; b < B; ++b) {
                    for (std::int64_t l = 0; l < L; ++l) {
                        for (std::int64_t j = 0; j < d; ++j) {
                            gv[b * d + j] += self.grad[(b * L + l) * d + j];
                        }
                    }
                }
            }
        });
    }
    return Tensor(node);
}

// ---- normalization --------------------------------------------------------

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
    const std::int64_t d = x.dim(x.rank() - 1);
    if (gain.rank() != 1 || gain.dim(0) != d) shape_fail("rmsnorm", x.shape(), gain.shape());
    const std::int64_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    std::vector<double> inv_rms(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xp = x.data().data() + r * d;
        double ms = 0.0;
        for (std::int64_t j = 0; j < d; ++j) ms += xp[j] * xp[j];
        ms = ms / static_cast<double>(d) + eps;
        const double inv = 1.0 / std::sqrt(ms);
        inv_rms[r] = inv;
        for (std::int64_t j = 0; j < d; ++j) out[r * d + j] = xp[j] * inv * gain.data()[j];
    }
    auto node = make_node(x.shape(), std::move(out));
    if (record({&x, &gain})) {
        auto xn = x.node();
        auto gn = gain.node();
        attach(node, {&x, &gain}, [xn, gn, rows, d, inv_rms](TensorNode& self) {
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* xp = xn->data.data() + r * d;
                const double* gp = self.grad.data() + r * d;
                const double inv = inv_rms[r];
                if (gn->requires_grad) {
                    auto& gg = gn->grad_buffer();
                    for (std::int64_t j = 0; j < d; ++j) gg[j] += gp[j] * xp[j] * inv;
                }
                if (xn->requires_grad) {
                    double dot = 0.0;
                    for (std::int64_t j = 0; j < d; ++j) dot += gp[j] * gn->data[j] * xp[j];
                    const double coef = dot * inv * inv * inv / static_cast<double>(d);
                    auto& gx = xn->grad_buffer();
                    for (std::int64_t j = 0; j < d; ++j) {
                        gx[r * d + j] += gp[j] * gn->data[j] * inv - coef * xp[j];
                    }
                }
            }
        });
    }
    return Tensor(node);
}

Tensor layernorm(const Tensor& x, const Tensor& gain, double eps) {
    const std::int64_t d = x.dim(x.rank() - 1);
    if (gain.rank() != 1 || gain.dim(0) != d) shape_fail("layernorm", x.shape(), gain.shape());
    const std::int64_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    std::vector<double> inv_std(rows), means(rows);
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xp = x.data().data() + r * d;
        double m = 0.0;
        for (std::int64_t j = 0; j < d; ++j) m += xp[j];
        m /= static_cast<double>(d);
        double v = 0.0;
        for (std::int64_t j = 0; j < d; ++j) v += (xp[j] - m) * (xp[j] - m);
        v /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(v + eps);
        means[r] = m;
        inv_std[r] = inv;
        for (std::int64_t j = 0; j < d; ++j) out[r * d + j] = (xp[j] - m) * inv * gain.data()[j];
    }
    auto node = make_node(x.shape(), std::move(out));
    if (record({&x, &gain})) {
        auto xn = x.node();
        auto gn = gain.node();
        attach(node, {&x, &gain}, [xn, gn, rows, d, inv_std, means](TensorNode& self) {
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* xp = xn->data.data() + r * d;
                const double* gp = self.grad.data() + r * d;
                const double inv = inv_std[r];
                const double m = means[r];
                if (gn->requires_grad) {
                    auto& gg = gn->grad_buffer();
                    for (std::int64_t j = 0; j < d; ++j) gg[j] += gp[j] * (xp[j] - m) * inv;
                }
                if (xn->requires_grad) {
                    double sum_gw = 0.0, sum_gwx = 0.0;
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double gw = gp[j] * gn->data[j];
                        sum_gw += gw;
                        sum_gwx += gw * (xp[j] - m) * inv;
                    }
                    auto& gx = xn->grad_buffer();
                    for (std::int64_t j = 0; j < d; ++j) {
                        const double gw = gp[j] * gn->data[j];
                        const double xhat = (xp[j] - m) * inv;
                        gx[r * d + j] += inv * (gw - sum_gw / static_cast<double>(d) -
                                                xhat * sum_gwx / static_cast<double>(d));
                    }
                }
            }
        });
    }
    return Tensor(node);
}

Tensor softmax_lastdim(const Tensor& x) {
    const std::int64_t d = x.dim(x.rank() - 1);
    const std::int64_t rows = x.numel() / d;
    std::vector<double> out(x.numel());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double* xp = x.data().data() + r * d;
        double mx = xp[0];
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, xp[j]);
        double sum = 0.0;
        for (std::int64_t j = 0; j < d; ++j) {
            out[r * d + j] = std::exp(xp[j] - mx);
            sum += out[r * d + j];
        }
        for (std::int64_t j = 0; j < d; ++j) out[r * d + j] /= sum;
    }
    auto node = make_node(x.shape(), std::move(out));
    if (record({&x})) {
        auto xn = x.node();
        attach(node, {&x}, [xn, rows, d](TensorNode& self) {
            auto& gx = xn->grad_buffer();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double* sp = self.data.data() + r * d;
                const double* gp = self.grad.data() + r * d;
                double dot = 0.0;
                for (std::int64_t j = 0; j < d; ++j) dot += gp[j] * sp[j];
                for (std::int64_t j = 0; j < d; ++j) gx[r * d + j] += sp[j] * (gp[j] - dot);
            }
        });
    }
    return Tensor(node);
}

// ---- rotary ---------------------------------------------------------------

Tensor rope_rotate(const Tensor& x, const std::vector<double>& positions, double base) {
    const std::int64_t d = x.dim(x.rank() - 1);
    if (d % 2 != 0) {
        throw ShapeError("rope: head dim must be even, got " + std::to_string(d));
    }
    const std::int64_t rows = x.numel() / d;
    if (rows % static_cast<std::int64_t>(positions.size()) != 0) {
        throw ShapeError("rope: " + std::to_string(positions.size()) + " positions for " +
                         std::to_string(rows) + " rows");
    }
    const std::int64_t np = static_cast<std::int64_t>(positions.size());
    std::vector<double> freqs(d / 2);
    for (std::int64_t i = 0; i < d / 2; ++i) {
        freqs[i] = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
    }
    std::vector<double> out(x.numel());
    for (std::int64_t r = 0; r < rows; ++r) {
        const double p = positions[r % np];
        const double* xp = x.data().data() + r * d;
        for (std::int64_t i = 0; i < d / 2; ++i) {
            const double a = p * freqs[i];
            const double c = std::cos(a), s = std::sin(a);
            out[r * d + 2 * i] = xp[2 * i] * c - xp[2 * i + 1] * s;
            out[r * d + 2 * i + 1] = xp[2 * i] * s + xp[2 * i + 1] * c;
        }
    }
    auto node = make_node(x.shape(), std::move(out));
    if (record({&x})) {
        auto xn = x.node();
        attach(node, {&x}, [xn, positions, freqs, rows, d, np](TensorNode& self) {
            auto& gx = xn->grad_buffer();
            for (std::int64_t r = 0; r < rows; ++r) {
                const double p = positions[r % np];
                const double* gp = self.grad.data() + r * d;
                for (std::int64_t i = 0; i < d / 2; ++i) {
                    const double a = p * freqs[i];
                    const double c = std::cos(a), s = std::sin(a);
                    // transpose of the rotation
                    gx[r * d + 2 * i] += gp[2 * i] * c + gp[2 * i + 1] * s;
                    gx[r * d + 2 * i + 1] += -gp[2 * i] * s + gp[2 * i + 1] * c;
                }
            }
        });
    }
    return Tensor(node);
}

// ---- reductions / losses --------------------------------------------------

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto node = make_node({1}, {s});
    if (record({&a})) {
        auto an = a.node();
        attach(node, {&a}, [an](TensorNode& self) {
            auto& ga = an->grad_buffer();
            for (auto& g : ga) g += self.grad[0];
        });
    }
    return Tensor(node);
}

Tensor mean_all(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    double s = 0.0;
    for (double v : a.data()) s += v;
    auto node = make_node({1}, {s * inv});
    if (record({&a})) {
        auto an = a.node();
        attach(node, {&a}, [an, inv](TensorNode& self) {
            auto& ga = an->grad_buffer();
            for (auto& g : ga) g += self.grad[0] * inv;
        });
    }
    return Tensor(node);
}

Tensor mse(const Tensor& a, const Tensor& b) { return mean_all(square(sub(a, b))); }

Tensor huber(const Tensor& a, const Tensor& b, double eta) {
    if (eta <= 0.0) throw std::invalid_argument("huber: eta must be > 0");
    if (a.shape() != b.shape()) shape_fail("huber", a.shape(), b.shape());
    const std::int64_t n = a.numel();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        const double r = a.data()[i] - b.data()[i];
        const double ar = std::abs(r);
        acc += ar <= eta ? 0.5 * r * r : eta * (ar - 0.5 * eta);
    }
    auto node = make_node({1}, {acc / static_cast<double>(n)});
    if (record({&a, &b})) {
        auto an = a.node();
        auto bn = b.node();
        attach(node, {&a, &b}, [an, bn, eta, n](TensorNode& self) {
            const double g0 = self.grad[0] / static_cast<double>(n);
            double* ga = an->requires_grad ? an->grad_buffer().data() : nullptr;
            double* gb = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
            for (std::int64_t i = 0; i < n; ++i) {
                const double r = an->data[i] - bn->data[i];
                const double d = g0 * std::clamp(r, -eta, eta);
                if (ga) ga[i] += d;
                if (gb) gb[i] -= d;
            }
        });
    }
    return Tensor(node);
}

// ---- backward -------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
    }
    // Iterative post-order topological sort.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* node = *it;
        if (node->backprop) node->backprop(*node);
    }
}

// ---- rng ------------------------------------------------------------------

Tensor gaussian(RngStream& stream, Shape shape) {
    const std::int64_t n = shape_numel(shape);
    std::vector<double> out(n);
    for (std::int64_t i = 0; i < n; i += 2) {
        double z0, z1;
        stream.normal_pair(z0, z1);
        out[i] = z0;
        if (i + 1 < n) out[i + 1] = z1;
    }
    return Tensor::from(std::move(out), std::move(shape));
}

}  // namespace lcmkit
