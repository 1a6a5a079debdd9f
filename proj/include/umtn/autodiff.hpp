#pragma once

#include "umtn/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

/// Tape-free reverse-mode differentiation over dense row-major tensors.
///
/// A Tensor is a handle to a node holding its value and, when it takes part
/// in a differentiable computation, the parents and a closure that pushes
/// the node's gradient into them. Tensors of any rank are stored as a matrix
/// whose column count is the last dimension and whose row count is the
/// product of the leading dimensions; every primitive works on that view.
namespace umtn::ad {

using Array = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Shape = std::vector<Eigen::Index>;

namespace detail {

inline thread_local bool grad_enabled = true;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

inline Eigen::Index leading(const Shape& s) {
    return std::accumulate(s.begin(), s.end() - 1, Eigen::Index{1}, std::multiplies<>());
}

struct Node {
    Shape shape;
    Array value;
    Array grad;  // empty until touched by backward
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Array& g) {
        if (grad.size() == 0) grad = g;
        else grad += g;
    }
};

}  // namespace detail

/// Disables graph recording for its lifetime (forward values are unchanged).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled; }

class Tensor {
public:
    Tensor() = default;

    /// Leaf tensor; `shape` must have at least one dimension and its
    /// product must match the number of values.
    Tensor(Shape shape, Array values, bool requires_grad = false)
        : node_(std::make_shared<detail::Node>()) {
        if (shape.empty()) throw ArgumentError("tensor shape must have at least one dimension");
        for (auto d : shape)
            if (d <= 0) throw ArgumentError("tensor dimensions must be positive, got " + detail::shape_str(shape));
        const Eigen::Index rows = detail::leading(shape);
        if (values.rows() * values.cols() != rows * shape.back())
            throw ArgumentError("tensor values do not match shape " + detail::shape_str(shape));
        if (values.rows() != rows) values = Eigen::Map<const Array>(values.data(), rows, shape.back()).eval();
        node_->shape = std::move(shape);
        node_->value = std::move(values);
        node_->requires_grad = requires_grad;
    }

    static Tensor matrix(const Array& m, bool requires_grad = false) {
        return Tensor({m.rows(), m.cols()}, m, requires_grad);
    }
    static Tensor constant(const Eigen::MatrixXd& m) { return matrix(Array(m), false); }
    static Tensor scalar(double v, bool requires_grad = false) {
        Array a(1, 1);
        a(0, 0) = v;
        return Tensor({1}, a, requires_grad);
    }
    static Tensor zeros(Shape shape, bool requires_grad = false) {
        const auto rows = detail::leading(shape);
        const auto cols = shape.back();
        return Tensor(std::move(shape), Array::Zero(rows, cols), requires_grad);
    }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    Eigen::Index numel() const { return node_->value.size(); }
    const Array& value() const { return node_->value; }
    /// Direct write access for optimizers and finite-difference probes.
    Array& mutable_value() { return node_->value; }
    double item() const {
        if (numel() != 1) throw ArgumentError("item() on a non-scalar tensor of shape " + detail::shape_str(shape()));
        return node_->value(0, 0);
    }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }
    bool has_grad() const { return node_->grad.size() != 0; }
    /// Accumulated gradient (zeros if none has reached this tensor).
    Array grad() const {
        return has_grad() ? node_->grad : Array::Zero(node_->value.rows(), node_->value.cols());
    }
    void zero_grad() { node_->grad = Array::Zero(node_->value.rows(), node_->value.cols()); }
    void clear_grad() { node_->grad.resize(0, 0); }

    /// New leaf holding a copy of the value, with no history.
    Tensor detach() const { return Tensor(shape(), value(), false); }

    const std::shared_ptr<detail::Node>& node() const { return node_; }

    /// Builds an interior node. `backward` receives the node (its grad is
    /// populated) and must accumulate into the parents that require grad.
    static Tensor make_result(Shape shape, Array value, std::vector<Tensor> inputs,
                              std::function<void(detail::Node&)> backward) {
        Tensor out;
        out.node_ = std::make_shared<detail::Node>();
        out.node_->shape = std::move(shape);
        out.node_->value = std::move(value);
        bool any = false;
        for (const auto& t : inputs) any = any || t.requires_grad();
        if (any && grad_enabled()) {
            out.node_->requires_grad = true;
            out.node_->is_leaf = false;
            for (auto& t : inputs) out.node_->parents.push_back(t.node_);
            out.node_->backward = std::move(backward);
        }
        return out;
    }

private:
    std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline void require(bool ok, const char* op, const std::string& msg) {
    if (!ok) throw ArgumentError(std::string(op) + ": " + msg);
}

inline std::string shapes(const Tensor& a, const Tensor& b) {
    return shape_str(a.shape()) + " vs " + shape_str(b.shape());
}

inline Node& parent(Node& n, std::size_t i) { return *n.parents[i]; }

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitives
// ---------------------------------------------------------------------------

/// (r x k) @ (k x c), operating on the matrix views.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    detail::require(a.cols() == b.rows(), "matmul", "inner dimensions differ " + detail::shapes(a, b));
    Array v = a.value() * b.value();
    return Tensor::make_result({a.rows(), b.cols()}, std::move(v), {a, b}, [](detail::Node& n) {
        auto& pa = detail::parent(n, 0);
        auto& pb = detail::parent(n, 1);
        if (pa.requires_grad) pa.accumulate(n.grad * pb.value.transpose());
        if (pb.requires_grad) pb.accumulate(pa.value.transpose() * n.grad);
    });
}

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::require(a.shape() == b.shape(), "add", "shape mismatch " + detail::shapes(a, b));
    return Tensor::make_result(a.shape(), a.value() + b.value(), {a, b}, [](detail::Node& n) {
        for (auto& p : n.parents)
            if (p->requires_grad) p->accumulate(n.grad);
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::require(a.shape() == b.shape(), "sub", "shape mismatch " + detail::shapes(a, b));
    return Tensor::make_result(a.shape(), a.value() - b.value(), {a, b}, [](detail::Node& n) {
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(n.grad);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-n.grad);
    });
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::require(a.shape() == b.shape(), "multiply", "shape mismatch " + detail::shapes(a, b));
    return Tensor::make_result(a.shape(), a.value().cwiseProduct(b.value()), {a, b}, [](detail::Node& n) {
        auto& pa = detail::parent(n, 0);
        auto& pb = detail::parent(n, 1);
        if (pa.requires_grad) pa.accumulate(n.grad.cwiseProduct(pb.value));
        if (pb.requires_grad) pb.accumulate(n.grad.cwiseProduct(pa.value));
    });
}

inline Tensor scale(const Tensor& a, double s) {
    return Tensor::make_result(a.shape(), a.value() * s, {a}, [s](detail::Node& n) {
        n.parents[0]->accumulate(n.grad * s);
    });
}

/// a (r x c) + bias (1 x c) broadcast over rows.
inline Tensor add_row(const Tensor& a, const Tensor& bias) {
    detail::require(bias.rows() == 1 && bias.cols() == a.cols(), "add_row",
                    "bias must be 1 x cols, got " + detail::shapes(a, bias));
    Array v = a.value().rowwise() + bias.value().row(0);
    return Tensor::make_result(a.shape(), std::move(v), {a, bias}, [](detail::Node& n) {
        auto& pa = detail::parent(n, 0);
        auto& pb = detail::parent(n, 1);
        if (pa.requires_grad) pa.accumulate(n.grad);
        if (pb.requires_grad) pb.accumulate(n.grad.colwise().sum());
    });
}

/// Concatenation along the last axis; all leading dimensions must agree.
inline Tensor concat(const std::vector<Tensor>& parts) {
    detail::require(!parts.empty(), "concat", "no operands");
    Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
    Eigen::Index total = 0;
    std::vector<Eigen::Index> widths;
    for (const auto& p : parts) {
        Shape l(p.shape().begin(), p.shape().end() - 1);
        detail::require(l == lead, "concat", "leading dimensions differ " + detail::shapes(parts[0], p));
        widths.push_back(p.cols());
        total += p.cols();
    }
    Array v(parts[0].rows(), total);
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        off += p.cols();
    }
    Shape shape = lead;
    shape.push_back(total);
    return Tensor::make_result(std::move(shape), std::move(v), parts, [widths](detail::Node& n) {
        Eigen::Index o = 0;
        for (std::size_t i = 0; i < n.parents.size(); ++i) {
            if (n.parents[i]->requires_grad) n.parents[i]->accumulate(n.grad.middleCols(o, widths[i]));
            o += widths[i];
        }
    });
}

/// Columns [start, start + count) of the last axis.
inline Tensor slice(const Tensor& a, Eigen::Index start, Eigen::Index count) {
    detail::require(start >= 0 && count > 0 && start + count <= a.cols(), "slice",
                    "range [" + std::to_string(start) + "," + std::to_string(start + count) +
                        ") out of bounds for " + detail::shape_str(a.shape()));
    Shape shape = a.shape();
    shape.back() = count;
    const Eigen::Index rows = a.rows(), cols = a.cols();
    return Tensor::make_result(std::move(shape), a.value().middleCols(start, count), {a},
                               [start, count, rows, cols](detail::Node& n) {
                                   Array g = Array::Zero(rows, cols);
                                   g.middleCols(start, count) = n.grad;
                                   n.parents[0]->accumulate(g);
                               });
}

/// Row-major reshape (the element order is unchanged).
inline Tensor reshape(const Tensor& a, Shape shape) {
    const auto lead = detail::leading(shape);
    detail::require(lead * shape.back() == a.numel(), "reshape",
                    detail::shape_str(a.shape()) + " -> " + detail::shape_str(shape));
    Array v = Eigen::Map<const Array>(a.value().data(), lead, shape.back());
    const Eigen::Index r = a.rows(), c = a.cols();
    return Tensor::make_result(std::move(shape), std::move(v), {a}, [r, c](detail::Node& n) {
        n.parents[0]->accumulate(Eigen::Map<const Array>(n.grad.data(), r, c));
    });
}

inline Tensor transpose(const Tensor& a) {
    return Tensor::make_result({a.cols(), a.rows()}, a.value().transpose(), {a}, [](detail::Node& n) {
        n.parents[0]->accumulate(n.grad.transpose());
    });
}

inline Tensor relu(const Tensor& a) {
    return Tensor::make_result(a.shape(), a.value().cwiseMax(0.0), {a}, [](detail::Node& n) {
        const auto& x = n.parents[0]->value;
        n.parents[0]->accumulate((x.array() > 0.0).select(n.grad, 0.0));
    });
}

inline Tensor sigmoid(const Tensor& a) {
    Array y = a.value().unaryExpr([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    return Tensor::make_result(a.shape(), y, {a}, [y](detail::Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
    });
}

inline Tensor tanh(const Tensor& a) {
    Array y = a.value().unaryExpr([](double x) { return std::tanh(x); });
    return Tensor::make_result(a.shape(), y, {a}, [y](detail::Node& n) {
        n.parents[0]->accumulate(n.grad.cwiseProduct((1.0 - y.array().square()).matrix()));
    });
}

/// Sum of all entries, as a scalar tensor.
inline Tensor sum(const Tensor& a) {
    Array v(1, 1);
    v(0, 0) = a.value().sum();
    const Eigen::Index r = a.rows(), c = a.cols();
    return Tensor::make_result({1}, std::move(v), {a}, [r, c](detail::Node& n) {
        n.parents[0]->accumulate(Array::Constant(r, c, n.grad(0, 0)));
    });
}

/// Sum of squared differences, sum (a - b)^2.
inline Tensor squared_error(const Tensor& a, const Tensor& b) {
    detail::require(a.shape() == b.shape(), "squared_error", "shape mismatch " + detail::shapes(a, b));
    Array diff = a.value() - b.value();
    Array v(1, 1);
    v(0, 0) = diff.squaredNorm();
    return Tensor::make_result({1}, std::move(v), {a, b}, [diff](detail::Node& n) {
        const double g = n.grad(0, 0);
        if (n.parents[0]->requires_grad) n.parents[0]->accumulate(2.0 * g * diff);
        if (n.parents[1]->requires_grad) n.parents[1]->accumulate(-2.0 * g * diff);
    });
}

/// Mean of squared differences.
inline Tensor mse(const Tensor& a, const Tensor& b) {
    detail::require(a.shape() == b.shape(), "mse", "shape mismatch " + detail::shapes(a, b));
    return scale(squared_error(a, b), 1.0 / static_cast<double>(a.numel()));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// Backward pass
// ---------------------------------------------------------------------------

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires grad.
inline void backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ArgumentError("backward: loss must be a scalar tensor");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<detail::Node*> order;
    std::unordered_set<detail::Node*> done, on_stack;
    std::vector<std::pair<detail::Node*, std::size_t>> stack{{loss.node().get(), 0}};
    on_stack.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::Node* p = node->parents[next++].get();
            if (!p->requires_grad || done.count(p)) continue;
            if (on_stack.count(p)) throw InternalError("backward: cycle in computation graph");
            on_stack.insert(p);
            stack.emplace_back(p, 0);
        } else {
            done.insert(node);
            on_stack.erase(node);
            order.push_back(node);
            stack.pop_back();
        }
    }
    // Interior gradients are transient; leaves accumulate.
    for (auto* n : order)
        if (!n->is_leaf) n->grad.resize(0, 0);
    auto* root = loss.node().get();
    root->accumulate(Array::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node* n = *it;
        if (n->is_leaf || n->grad.size() == 0) continue;
        n->backward(*n);
        n->grad.resize(0, 0);
    }
}

// ---------------------------------------------------------------------------
// Parameters and optimization
// ---------------------------------------------------------------------------

/// Named trainable tensors plus Adam moments, in registration order.
class ParameterStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        Array m, v;
        long step = 0;
    };

    Tensor& add(const std::string& name, Tensor t) {
        if (contains(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
        if (!t.is_leaf() || !t.requires_grad())
            throw ArgumentError("parameter '" + name + "' must be a leaf requiring grad");
        const Eigen::Index r = t.rows(), c = t.cols();
        entries_.push_back({name, std::move(t), Array::Zero(r, c), Array::Zero(r, c), 0});
        return entries_.back().tensor;
    }

    /// Glorot-uniform weight (fan_in x fan_out).
    template <class Rng>
    Tensor& add_weight(const std::string& name, Eigen::Index fan_in, Eigen::Index fan_out, Rng& rng) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Array w(fan_in, fan_out);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
        return add(name, Tensor({fan_in, fan_out}, w, true));
    }
    Tensor& add_bias(const std::string& name, Eigen::Index width) {
        return add(name, Tensor({1, width}, Array::Zero(1, width), true));
    }

    bool contains(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return true;
        return false;
    }
    const Tensor& get(const std::string& name) const { return find(name).tensor; }
    Tensor& get(const std::string& name) { return find(name).tensor; }

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += static_cast<std::size_t>(e.tensor.numel());
        return n;
    }
    /// Number of scalars in parameters whose name starts with `prefix`.
    std::size_t parameter_count(const std::string& prefix) const {
        std::size_t n = 0;
        for (const auto& e : entries_)
            if (e.name.rfind(prefix, 0) == 0) n += static_cast<std::size_t>(e.tensor.numel());
        return n;
    }

    /// Sets every gradient to zero (marks gradients as populated).
    void zero_grad() {
        for (auto& e : entries_) e.tensor.zero_grad();
    }
    void clear_grad() {
        for (auto& e : entries_) e.tensor.clear_grad();
    }

    /// Deep copy of values (and optimizer state); gradients are not copied.
    ParameterStore clone() const {
        ParameterStore out;
        for (const auto& e : entries_) {
            out.entries_.push_back({e.name, Tensor(e.tensor.shape(), e.tensor.value(), true), e.m, e.v, e.step});
        }
        return out;
    }

    /// Copies values from a store with identical names and shapes.
    void assign_values(const ParameterStore& other) {
        if (other.size() != size()) throw ArgumentError("assign_values: parameter count mismatch");
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& src = other.entries_[i];
            if (src.name != entries_[i].name || src.tensor.shape() != entries_[i].tensor.shape())
                throw ArgumentError("assign_values: parameter '" + src.name + "' does not match");
            entries_[i].tensor.mutable_value() = src.tensor.value();
        }
    }

private:
    Entry& find(const std::string& name) {
        for (auto& e : entries_)
            if (e.name == name) return e;
        throw ArgumentError("no parameter named '" + name + "'");
    }
    const Entry& find(const std::string& name) const {
        for (const auto& e : entries_)
            if (e.name == name) return e;
        throw ArgumentError("no parameter named '" + name + "'");
    }

    std::vector<Entry> entries_;
};

/// Zeros the store's gradients, then back-propagates `loss` into them.
/// Parameters unreachable from the loss end up with zero gradient.
inline void backward(const Tensor& loss, ParameterStore& store) {
    store.zero_grad();
    backward(loss);
}

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam update applied in place; clears gradients afterwards.
inline void adam_step(ParameterStore& store, const AdamConfig& cfg = {}) {
    if (!(cfg.lr > 0.0)) throw ArgumentError("adam: learning rate must be positive");
    for (const auto& e : store.entries())
        if (!e.tensor.has_grad()) throw StateError("adam: parameter '" + e.name + "' has no gradient");
    for (auto& e : store.entries()) {
        const Array g = e.tensor.grad();
        ++e.step;
        e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
        e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(e.step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(e.step));
        Array& w = e.tensor.mutable_value();
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double mh = e.m.data()[i] / bc1;
            const double vh = e.v.data()[i] / bc2;
            w.data()[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
        }
        e.tensor.clear_grad();
    }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

struct GradientCheckReport {
    bool passed = false;
    double max_relative_error = 0.0;
    std::string worst_parameter;
    Eigen::Index worst_index = -1;
    double analytic = 0.0;
    double numeric = 0.0;
};

/// Compares reverse-mode gradients of `fn` with central differences,
/// elementwise, using |a - f| / max(|a|, |f|, floor).
inline GradientCheckReport gradient_check(const std::function<Tensor(ParameterStore&)>& fn,
                                          ParameterStore& params, double tol, double step = 1e-6,
                                          double floor = 1e-8) {
    if (!(tol > 0.0)) throw ArgumentError("gradient_check: tol must be positive");
    const Tensor loss = fn(params);
    if (!std::isfinite(loss.item())) throw EvaluationError("gradient_check: non-finite function value");
    backward(loss, params);
    GradientCheckReport rep;
    for (auto& e : params.entries()) {
        const Array analytic = e.tensor.grad();
        Array& w = e.tensor.mutable_value();
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double orig = w.data()[i];
            double fp = 0.0, fm = 0.0;
            {
                NoGradGuard ng;
                w.data()[i] = orig + step;
                fp = fn(params).item();
                w.data()[i] = orig - step;
                fm = fn(params).item();
                w.data()[i] = orig;
            }
            if (!std::isfinite(fp) || !std::isfinite(fm))
                throw EvaluationError("gradient_check: non-finite function value while probing " + e.name);
            const double num = (fp - fm) / (2.0 * step);
            const double a = analytic.data()[i];
            const double rel = std::abs(a - num) / std::max({std::abs(a), std::abs(num), floor});
            if (rep.worst_index < 0 || rel > rep.max_relative_error) {
                rep.max_relative_error = rel;
                rep.worst_parameter = e.name;
                rep.worst_index = i;
                rep.analytic = a;
                rep.numeric = num;
            }
        }
    }
    params.clear_grad();
    rep.passed = rep.max_relative_error < tol;
    return rep;
}

}  // namespace umtn::ad
