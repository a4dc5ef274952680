#include "flagdit/tensor.hpp"

#include "flagdit/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace flagdit {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {
thread_local bool t_grad_enabled = true;
} // namespace

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

namespace detail {

std::vector<real>& Node::ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), real(0));
    return grad;
}

namespace {

bool any_requires_grad(std::span<const Tensor> inputs) {
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor& t) { return t.requires_grad(); });
}

} // namespace

Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                   const std::vector<Tensor>& inputs,
                   std::function<void(Node& self)> backward_fn) {
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->data = std::move(data);
    node->op = op;
    if (t_grad_enabled && any_requires_grad(inputs)) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& t : inputs) node->inputs.push_back(t.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node& self)> backward_fn) {
    return make_result(std::move(shape), std::move(data), op, std::vector<Tensor>(inputs),
                       std::move(backward_fn));
}

} // namespace detail

using detail::Node;

// --- Tensor ----------------------------------------------------------------

Tensor::Tensor(Shape shape, bool requires_grad) : node_(std::make_shared<Node>()) {
    for (auto d : shape)
        if (d == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    node_->data.assign(shape_numel(shape), real(0));
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<real> values, bool requires_grad)
    : node_(std::make_shared<Node>()) {
    if (shape_numel(shape) != values.size())
        throw DimensionError("shape " + shape_str(shape) + " does not hold " +
                             std::to_string(values.size()) + " values");
    node_->shape = std::move(shape);
    node_->data = std::move(values);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::full(Shape shape, real value) {
    Tensor t(std::move(shape));
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= node_->shape.size())
        throw DimensionError("axis " + std::to_string(axis) + " out of range for " +
                             shape_str(node_->shape));
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }
std::span<const real> Tensor::data() const { return node_->data; }
std::span<real> Tensor::mutable_data() { return node_->data; }

real Tensor::item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool value) {
    if (!node_->is_leaf()) throw ContractError("requires_grad can only be set on leaves");
    node_->requires_grad = value;
    return *this;
}

bool Tensor::has_grad() const { return node_->grad.size() == node_->data.size(); }
std::span<const real> Tensor::grad() const { return node_->grad; }
std::span<real> Tensor::mutable_grad() { return node_->ensure_grad(); }

void Tensor::zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), real(0));
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->data, false); }
const char* Tensor::op_name() const { return node_->op; }

void Tensor::backward() const {
    if (numel() != 1)
        throw ContractError("backward() requires a scalar loss, got shape " + shape_str(shape()));
    if (!requires_grad()) throw ContractError("backward() on a tensor that does not require grad");
    ComputationTape::record(*this).backward();
}

// --- tape --------------------------------------------------------------------

ComputationTape ComputationTape::record(const Tensor& root) {
    ComputationTape tape;
    tape.root_ = root.node();
    std::unordered_set<const Node*> seen;
    // Iterative post-order DFS: a node is emitted after all of its inputs.
    std::vector<std::pair<Node*, std::size_t>> stack;
    if (root.requires_grad()) stack.emplace_back(root.node().get(), 0);
    seen.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            tape.nodes_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

std::vector<std::string> ComputationTape::op_names() const {
    std::vector<std::string> names;
    names.reserve(nodes_.size());
    for (auto* n : nodes_) names.emplace_back(n->op);
    return names;
}

void ComputationTape::backward() const {
    if (nodes_.empty()) return;
    for (auto* n : nodes_)
        if (!n->is_leaf()) n->grad.assign(n->data.size(), real(0));
    auto& root_grad = nodes_.back()->ensure_grad();
    root_grad[0] += real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node* n = *it;
        if (!n->is_leaf()) n->backward_fn(*n);
    }
    // Interior gradients are scratch; only leaves keep theirs.
    for (auto* n : nodes_)
        if (!n->is_leaf() && n != nodes_.back()) std::vector<real>().swap(n->grad);
}

// --- kernels -------------------------------------------------------------------

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                             ", got " + shape_str(t.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                             " vs " + shape_str(b.shape()));
}

// C[M,N] (+)= A[M,K] · B[K,N], 64-bit row accumulator.
void gemm_nn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    std::vector<accum> row(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(row.begin(), row.end(), accum(0));
        const real* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const accum aip = ai[p];
            if (aip == 0) continue;
            const real* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += aip * bp[j];
        }
        real* ci = c + i * n;
        if (accumulate)
            for (std::size_t j = 0; j < n; ++j) ci[j] = static_cast<real>(ci[j] + row[j]);
        else
            for (std::size_t j = 0; j < n; ++j) ci[j] = static_cast<real>(row[j]);
    }
}

// C[M,N] (+)= A[M,K] · B[N,K]ᵀ
void gemm_nt(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    // Row-axpy form vectorises where a per-element dot-product reduction cannot.
    std::vector<real> bt(k * n);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
    gemm_nn(a, bt.data(), c, m, k, n, accumulate);
}

// C[M,N] (+)= A[K,M]ᵀ · B[K,N]
void gemm_tn(const real* a, const real* b, real* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
    std::vector<accum> acc(m * n, accum(0));
    for (std::size_t p = 0; p < k; ++p) {
        const real* ap = a + p * m;
        const real* bp = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const accum api = ap[i];
            if (api == 0) continue;
            accum* row = acc.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) row[j] += api * bp[j];
        }
    }
    for (std::size_t idx = 0; idx < m * n; ++idx)
        c[idx] = static_cast<real>(accumulate ? c[idx] + acc[idx] : acc[idx]);
}

Node& in(Node& self, std::size_t i) { return *self.inputs[i]; }

} // namespace

// --- linear algebra --------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    std::vector<real> out(m * n);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    return detail::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        if (na.requires_grad)  // dA = dC · Bᵀ
            gemm_nt(self.grad.data(), nb.data.data(), na.ensure_grad().data(), m, n, k, true);
        if (nb.requires_grad)  // dB = Aᵀ · dC
            gemm_tn(na.data.data(), self.grad.data(), nb.ensure_grad().data(), k, m, n, true);
    });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_nt");
    require_rank(b, 2, "matmul_nt");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k)
        throw DimensionError("matmul_nt: inner dimensions differ, " + shape_str(a.shape()) +
                             " x " + shape_str(b.shape()) + "^T");
    std::vector<real> out(m * n);
    gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    return detail::make_result({m, n}, std::move(out), "matmul_nt", {a, b}, [m, k, n](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        if (na.requires_grad)  // dA = dC · B
            gemm_nn(self.grad.data(), nb.data.data(), na.ensure_grad().data(), m, n, k, true);
        if (nb.requires_grad)  // dB = dCᵀ · A
            gemm_tn(self.grad.data(), na.data.data(), nb.ensure_grad().data(), n, m, k, true);
    });
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<real> out(m * n);
    auto src = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = src[i * n + j];
    return detail::make_result({n, m}, std::move(out), "transpose", {a}, [m, n](Node& self) {
        auto& g = in(self, 0).ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    return add_row(matmul(x, weight), bias);
}

// --- elementwise -------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    std::vector<real> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return detail::make_result(a.shape(), std::move(out), "add", {a, b}, [](Node& self) {
        for (std::size_t k = 0; k < 2; ++k) {
            Node& n = in(self, k);
            if (!n.requires_grad) continue;
            auto& g = n.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    std::vector<real> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return detail::make_result(a.shape(), std::move(out), "sub", {a, b}, [](Node& self) {
        if (in(self, 0).requires_grad) {
            auto& g = in(self, 0).ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (in(self, 1).requires_grad) {
            auto& g = in(self, 1).ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
        }
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    std::vector<real> out(a.numel());
    auto x = a.data(), y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return detail::make_result(a.shape(), std::move(out), "mul", {a, b}, [](Node& self) {
        Node& na = in(self, 0);
        Node& nb = in(self, 1);
        if (na.requires_grad) {
            auto& g = na.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.data[i];
        }
        if (nb.requires_grad) {
            auto& g = nb.ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.data[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<real> out(x.numel());
    auto src = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<real>(src[i] * factor);
    return detail::make_result(x.shape(), std::move(out), "scale", {x}, [factor](Node& self) {
        auto& g = in(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += static_cast<real>(self.grad[i] * factor);
    });
}

Tensor scale_by(const Tensor& x, const Tensor& factor) {
    if (factor.numel() != 1)
        throw DimensionError("scale_by: factor must hold one value, got " +
                             shape_str(factor.shape()));
    const real f = factor.data()[0];
    std::vector<real> out(x.numel());
    auto src = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = src[i] * f;
    return detail::make_result(x.shape(), std::move(out), "scale_by", {x, factor}, [](Node& self) {
        Node& nx = in(self, 0);
        Node& nf = in(self, 1);
        if (nx.requires_grad) {
            auto& g = nx.ensure_grad();
            const real f = nf.data[0];
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * f;
        }
        if (nf.requires_grad) {
            accum s = 0;
            for (std::size_t i = 0; i < self.grad.size(); ++i) s += accum(self.grad[i]) * nx.data[i];
            nf.ensure_grad()[0] += static_cast<real>(s);
        }
    });
}

namespace {

void check_row_operand(const Tensor& x, const Tensor& row, const char* op) {
    require_rank(x, 2, op);
    if (row.numel() != x.dim(1))
        throw DimensionError(std::string(op) + ": row of shape " + shape_str(row.shape()) +
                             " does not match " + shape_str(x.shape()));
}

} // namespace

Tensor add_row(const Tensor& x, const Tensor& row) {
    check_row_operand(x, row, "add_row");
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<real> out(n * d);
    auto src = x.data(), r = row.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = src[i * d + j] + r[j];
    return detail::make_result(x.shape(), std::move(out), "add_row", {x, row}, [n, d](Node& self) {
        if (in(self, 0).requires_grad) {
            auto& g = in(self, 0).ensure_grad();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        }
        if (in(self, 1).requires_grad) {
            std::vector<accum> acc(d, 0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) acc[j] += self.grad[i * d + j];
            auto& g = in(self, 1).ensure_grad();
            for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<real>(acc[j]);
        }
    });
}

Tensor mul_row(const Tensor& x, const Tensor& row) {
    check_row_operand(x, row, "mul_row");
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<real> out(n * d);
    auto src = x.data(), r = row.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = src[i * d + j] * r[j];
    return detail::make_result(x.shape(), std::move(out), "mul_row", {x, row}, [n, d](Node& self) {
        Node& nx = in(self, 0);
        Node& nr = in(self, 1);
        if (nx.requires_grad) {
            auto& g = nx.ensure_grad();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j) g[i * d + j] += self.grad[i * d + j] * nr.data[j];
        }
        if (nr.requires_grad) {
            std::vector<accum> acc(d, 0);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < d; ++j)
                    acc[j] += accum(self.grad[i * d + j]) * nx.data[i * d + j];
            auto& g = nr.ensure_grad();
            for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<real>(acc[j]);
        }
    });
}

namespace {

// Elementwise unary op whose derivative is a function of (input, output).
template <typename F, typename DF>
Tensor unary(const Tensor& x, const char* op, F f, DF df) {
    std::vector<real> out(x.numel());
    auto src = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(src[i]);
    return detail::make_result(x.shape(), std::move(out), op, {x}, [df](Node& self) {
        Node& nx = in(self, 0);
        auto& g = nx.ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            g[i] += self.grad[i] * df(nx.data[i], self.data[i]);
    });
}

} // namespace

Tensor square(const Tensor& x) {
    return unary(
        x, "square", [](real v) { return v * v; }, [](real v, real) { return 2 * v; });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, "tanh", [](real v) { return std::tanh(v); }, [](real, real y) { return 1 - y * y; });
}

Tensor silu(const Tensor& x) {
    return unary(
        x, "silu",
        [](real v) { return v / (1 + std::exp(-v)); },
        [](real v, real) {
            const real s = 1 / (1 + std::exp(-v));
            return s * (1 + v * (1 - s));
        });
}

// --- reductions -----------------------------------------------------------------------

Tensor sum(const Tensor& x) {
    accum s = 0;
    for (real v : x.data()) s += v;
    return detail::make_result({1}, {static_cast<real>(s)}, "sum", {x}, [](Node& self) {
        auto& g = in(self, 0).ensure_grad();
        for (auto& gi : g) gi += self.grad[0];
    });
}

Tensor mean(const Tensor& x) {
    accum s = 0;
    for (real v : x.data()) s += v;
    const double n = static_cast<double>(x.numel());
    return detail::make_result({1}, {static_cast<real>(s / n)}, "mean", {x}, [n](Node& self) {
        auto& g = in(self, 0).ensure_grad();
        const real share = static_cast<real>(self.grad[0] / n);
        for (auto& gi : g) gi += share;
    });
}

Tensor mean_rows(const Tensor& x) {
    require_rank(x, 2, "mean_rows");
    const std::size_t n = x.dim(0), d = x.dim(1);
    std::vector<accum> acc(d, 0);
    auto src = x.data();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) acc[j] += src[i * d + j];
    std::vector<real> out(d);
    for (std::size_t j = 0; j < d; ++j) out[j] = static_cast<real>(acc[j] / double(n));
    return detail::make_result({1, d}, std::move(out), "mean_rows", {x}, [n, d](Node& self) {
        auto& g = in(self, 0).ensure_grad();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                g[i * d + j] += static_cast<real>(self.grad[j] / double(n));
    });
}

// --- structural --------------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    std::vector<real> out(x.data().begin(), x.data().end());
    return detail::make_result(std::move(shape), std::move(out), "reshape", {x}, [](Node& self) {
        auto& g = in(self, 0).ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_rows: no inputs");
    const std::size_t d = parts.front().dim(1);
    std::size_t rows = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_rows");
        if (p.dim(1) != d)
            throw DimensionError("concat_rows: width mismatch " + shape_str(parts.front().shape()) +
                                 " vs " + shape_str(p.shape()));
        rows += p.dim(0);
    }
    std::vector<real> out;
    out.reserve(rows * d);
    for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
    return detail::make_result({rows, d}, std::move(out), "concat_rows", parts, [](Node& self) {
        std::size_t offset = 0;
        for (auto& input : self.inputs) {
            const std::size_t count = input->data.size();
            if (input->requires_grad) {
                auto& g = input->ensure_grad();
                for (std::size_t i = 0; i < count; ++i) g[i] += self.grad[offset + i];
            }
            offset += count;
        }
    });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ContractError("concat_cols: no inputs");
    const std::size_t n = parts.front().dim(0);
    std::size_t width = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_cols");
        if (p.dim(0) != n)
            throw DimensionError("concat_cols: row count mismatch " +
                                 shape_str(parts.front().shape()) + " vs " + shape_str(p.shape()));
        width += p.dim(1);
    }
    std::vector<real> out(n * width);
    std::size_t col = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        auto src = p.data();
        for (std::size_t i = 0; i < n; ++i)
            std::copy_n(src.begin() + i * w, w, out.begin() + i * width + col);
        col += w;
    }
    return detail::make_result({n, width}, std::move(out), "concat_cols", parts,
                               [n, width](Node& self) {
                                   std::size_t col = 0;
                                   for (auto& input : self.inputs) {
                                       const std::size_t w = input->shape[1];
                                       if (input->requires_grad) {
                                           auto& g = input->ensure_grad();
                                           for (std::size_t i = 0; i < n; ++i)
                                               for (std::size_t j = 0; j < w; ++j)
                                                   g[i * w + j] += self.grad[i * width + col + j];
                                       }
                                       col += w;
                                   }
                               });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
    require_rank(x, 2, "slice_rows");
    if (begin >= end || end > x.dim(0))
        throw DimensionError("slice_rows: [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of range for " + shape_str(x.shape()));
    const std::size_t d = x.dim(1);
    std::vector<real> out(x.data().begin() + begin * d, x.data().begin() + end * d);
    return detail::make_result({end - begin, d}, std::move(out), "slice_rows", {x},
                               [begin, d](Node& self) {
                                   auto& g = in(self, 0).ensure_grad();
                                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                                       g[begin * d + i] += self.grad[i];
                               });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
    require_rank(x, 2, "slice_cols");
    if (begin >= end || end > x.dim(1))
        throw DimensionError("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") out of range for " + shape_str(x.shape()));
    const std::size_t n = x.dim(0), d = x.dim(1), w = end - begin;
    std::vector<real> out(n * w);
    auto src = x.data();
    for (std::size_t i = 0; i < n; ++i)
        std::copy_n(src.begin() + i * d + begin, w, out.begin() + i * w);
    return detail::make_result({n, w}, std::move(out), "slice_cols", {x},
                               [n, d, w, begin](Node& self) {
                                   auto& g = in(self, 0).ensure_grad();
                                   for (std::size_t i = 0; i < n; ++i)
                                       for (std::size_t j = 0; j < w; ++j)
                                           g[i * d + begin + j] += self.grad[i * w + j];
                               });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
    require_rank(table, 2, "gather_rows");
    if (ids.empty()) throw ContractError("gather_rows: empty index list");
    const std::size_t v = table.dim(0), d = table.dim(1);
    std::vector<real> out(ids.size() * d);
    auto src = table.data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= v)
            throw DimensionError("gather_rows: index " + std::to_string(ids[i]) +
                                 " out of range for " + shape_str(table.shape()));
        std::copy_n(src.begin() + ids[i] * d, d, out.begin() + i * d);
    }
    std::vector<std::size_t> index(ids.begin(), ids.end());
    return detail::make_result({ids.size(), d}, std::move(out), "gather_rows", {table},
                               [index = std::move(index), d](Node& self) {
                                   auto& g = in(self, 0).ensure_grad();
                                   for (std::size_t i = 0; i < index.size(); ++i)
                                       for (std::size_t j = 0; j < d; ++j)
                                           g[index[i] * d + j] += self.grad[i * d + j];
                               });
}

// --- normalisation ---------------------------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x) {
    if (x.rank() == 0) throw DimensionError("softmax_lastdim: scalar input");
    const std::size_t d = x.shape().back();
    const std::size_t rows = x.numel() / d;
    std::vector<real> out(x.numel());
    auto src = x.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const real* xi = src.data() + r * d;
        real* yi = out.data() + r * d;
        const real mx = *std::max_element(xi, xi + d);
        accum total = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const accum e = std::exp(accum(xi[j]) - accum(mx));
            total += e;
            yi[j] = static_cast<real>(e);
        }
        for (std::size_t j = 0; j < d; ++j) yi[j] = static_cast<real>(yi[j] / total);
    }
    return detail::make_result(x.shape(), std::move(out), "softmax", {x}, [rows, d](Node& self) {
        auto& g = in(self, 0).ensure_grad();
        for (std::size_t r = 0; r < rows; ++r) {
            const real* y = self.data.data() + r * d;
            const real* gy = self.grad.data() + r * d;
            accum dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += accum(y[j]) * gy[j];
            for (std::size_t j = 0; j < d; ++j)
                g[r * d + j] += static_cast<real>(y[j] * (gy[j] - dot));
        }
    });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
    if (x.rank() == 0) throw DimensionError("rms_norm: scalar input");
    const std::size_t d = x.shape().back();
    if (gain.numel() != d)
        throw DimensionError("rms_norm: gain " + shape_str(gain.shape()) + " does not match " +
                             shape_str(x.shape()));
    const std::size_t rows = x.numel() / d;
    std::vector<real> out(x.numel());
    std::vector<accum> inv_rms(rows);
    auto src = x.data(), gn = gain.data();
    for (std::size_t r = 0; r < rows; ++r) {
        const real* xi = src.data() + r * d;
        accum ss = 0;
        for (std::size_t j = 0; j < d; ++j) ss += accum(xi[j]) * xi[j];
        inv_rms[r] = 1.0 / std::sqrt(ss / double(d) + eps);
        for (std::size_t j = 0; j < d; ++j)
            out[r * d + j] = static_cast<real>(xi[j] * inv_rms[r] * gn[j]);
    }
    return detail::make_result(
        x.shape(), std::move(out), "rms_norm", {x, gain},
        [rows, d, inv_rms = std::move(inv_rms)](Node& self) {
            Node& nx = in(self, 0);
            Node& ng = in(self, 1);
            std::vector<accum> gain_acc(ng.requires_grad ? d : 0, 0);
            for (std::size_t r = 0; r < rows; ++r) {
                const real* xi = nx.data.data() + r * d;
                const real* gy = self.grad.data() + r * d;
                const accum s = inv_rms[r];
                if (nx.requires_grad) {
                    // y_j = g_j x_j s, ds/dx_k = -s^3 x_k / d
                    accum dot = 0;
                    for (std::size_t j = 0; j < d; ++j) dot += accum(gy[j]) * ng.data[j] * xi[j];
                    auto& g = nx.ensure_grad();
                    for (std::size_t j = 0; j < d; ++j)
                        g[r * d + j] += static_cast<real>(gy[j] * ng.data[j] * s -
                                                          xi[j] * s * s * s * dot / double(d));
                }
                if (ng.requires_grad)
                    for (std::size_t j = 0; j < d; ++j) gain_acc[j] += accum(gy[j]) * xi[j] * s;
            }
            if (ng.requires_grad) {
                auto& g = ng.ensure_grad();
                for (std::size_t j = 0; j < d; ++j) g[j] += static_cast<real>(gain_acc[j]);
            }
        });
}

// --- verification ------------------------------------------------------------------------------

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    Tensor probe = x.detach();
    return finite_diff_grad_inplace([&] { return f(probe); }, probe, h);
}

Tensor finite_diff_grad_inplace(const std::function<double()>& f, Tensor param, double h) {
    Tensor out(param.shape());
    auto values = param.mutable_data();
    auto grad = out.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
        const real saved = values[i];
        values[i] = static_cast<real>(saved + h);
        const double up = f();
        values[i] = static_cast<real>(saved - h);
        const double down = f();
        values[i] = saved;
        // Use the perturbation actually stored, not the nominal h.
        const double span = double(real(saved + h)) - double(real(saved - h));
        grad[i] = static_cast<real>((up - down) / span);
    }
    return out;
}

} // namespace flagdit
