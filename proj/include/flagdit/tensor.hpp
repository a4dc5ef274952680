#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace flagdit {

// Storage scalar. The float build is the product; a double build of the same
// sources exists for gradient checking.
#ifdef FLAGDIT_REAL_DOUBLE
using real = double;
#else
using real = float;
#endif

// Accumulator for dot products and reductions.
using accum = double;

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

namespace detail {

struct Node {
    Shape shape;
    std::vector<real> data;
    std::vector<real> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node& self)> backward_fn;

    bool is_leaf() const { return !backward_fn; }
    std::vector<real>& ensure_grad();
};

} // namespace detail

/// Dense row-major N-d array with an optional gradient slot.
///
/// A `Tensor` is a shared handle: copies alias the same storage. Operations
/// build a define-by-run graph when any input requires a gradient; calling
/// `backward()` on a scalar result replays that graph in reverse.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, bool requires_grad = false);
    Tensor(Shape shape, std::vector<real> values, bool requires_grad = false);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, real value);
    static Tensor scalar(real value) { return full({1}, value); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const real> data() const;
    // Direct writes bypass the graph; intended for parameters and buffers.
    std::span<real> mutable_data();
    real item() const;

    bool requires_grad() const;
    Tensor& set_requires_grad(bool value);
    bool has_grad() const;
    std::span<const real> grad() const;
    std::span<real> mutable_grad();
    void zero_grad();

    // Fresh leaf holding a copy of the values.
    Tensor detach() const;
    const char* op_name() const;

    void backward() const;

    const std::shared_ptr<detail::Node>& node() const { return node_; }
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<detail::Node> node_;
};

/// Topologically ordered record of the operations reachable from a root.
class ComputationTape {
public:
    static ComputationTape record(const Tensor& root);

    std::size_t size() const { return nodes_.size(); }
    const std::vector<detail::Node*>& nodes() const { return nodes_; }
    std::vector<std::string> op_names() const;

    // Seeds d(root)/d(root) = 1 and runs every recorded backward function once.
    void backward() const;

private:
    std::vector<detail::Node*> nodes_;
    std::shared_ptr<detail::Node> root_;
};

namespace detail {

// Builds a result tensor; the backward closure is attached only when some
// input requires a gradient.
Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                   std::initializer_list<Tensor> inputs,
                   std::function<void(Node& self)> backward_fn);
Tensor make_result(Shape shape, std::vector<real> data, const char* op,
                   const std::vector<Tensor>& inputs,
                   std::function<void(Node& self)> backward_fn);

} // namespace detail

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// a · bᵀ for a[M,K], b[N,K].
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
// x times a one-element tensor.
Tensor scale_by(const Tensor& x, const Tensor& factor);
Tensor add_row(const Tensor& x, const Tensor& row);
Tensor mul_row(const Tensor& x, const Tensor& row);
Tensor square(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor silu(const Tensor& x);

// --- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// [N,D] -> [1,D]
Tensor mean_rows(const Tensor& x);

// --- structural -----------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
// Embedding lookup / row selection: out[i] = table[ids[i]].
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids);

// --- normalisation --------------------------------------------------------

Tensor softmax_lastdim(const Tensor& x);
Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps = 1e-6);

// --- verification ---------------------------------------------------------

/// Central differences of a scalar function, one coordinate at a time.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                        double h = 1e-3);

/// Same, but perturbs `param` in place (e.g. a model weight) and restores it.
Tensor finite_diff_grad_inplace(const std::function<double()>& f, Tensor param,
                                double h = 1e-3);

} // namespace flagdit
