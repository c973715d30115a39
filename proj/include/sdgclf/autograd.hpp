#pragma once
// Minimal reverse-mode automatic differentiation over dense Eigen matrices.
//
// A Var is a handle to a graph node. Ops build new nodes that keep their
// parents alive and carry a closure that pushes the node's gradient back into
// them. backward() topologically sorts the graph reachable from a scalar root
// and runs the closures in reverse order. Leaf parameters persist across
// steps; intermediate nodes die with the last Var referencing the root.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sdgclf/error.hpp"

namespace sdgclf::ad {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
    Matrix value;
    Matrix grad; // empty until something flows in
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g) {
        if (grad.size() == 0)
            grad = g;
        else
            grad += g;
    }
    Matrix& grad_buffer() {
        if (grad.size() == 0) grad = Matrix::Zero(value.rows(), value.cols());
        return grad;
    }
};

namespace detail {
inline thread_local bool grad_enabled = true;
}

// Disables graph construction in the current thread for its lifetime.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
    ~NoGradGuard() { detail::grad_enabled = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false) : node_(std::make_shared<Node>()) {
        node_->value = std::move(value);
        node_->requires_grad = requires_grad;
    }

    static Var parameter(Matrix value) { return Var(std::move(value), true); }
    static Var constant(Matrix value) { return Var(std::move(value), false); }
    static Var row(const RowVector& v) { return Var(Matrix(v), false); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double scalar() const { return node_->value(0, 0); }
    void zero_grad() { node_->grad.resize(0, 0); }

    // Same values, no history.
    Var detach() const { return Var(node_->value, false); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

namespace detail {

template <typename Fn>
Var make(Matrix value, std::initializer_list<Var> parents, Fn&& fn) {
    Var out(std::move(value), false);
    if (!grad_enabled) return out;
    bool any = false;
    for (const auto& p : parents) any = any || p.requires_grad();
    if (!any) return out;
    Node* n = out.node();
    n->requires_grad = true;
    for (const auto& p : parents) n->parents.push_back(p.node_ptr());
    n->backward = std::forward<Fn>(fn);
    return out;
}

inline void check_same_shape(const Var& a, const Var& b, const char* op) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorKind::Shape,
            std::string(op) + ": " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) + " vs " +
                std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
}

inline Matrix softmax_rows(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        y.row(i) = (x.row(i).array() - m).exp().matrix();
        y.row(i) /= y.row(i).sum();
    }
    return y;
}

} // namespace detail

// Runs reverse accumulation from a 1x1 root.
inline void backward(const Var& root) {
    require(root.rows() == 1 && root.cols() == 1, ErrorKind::Shape, "backward() needs a scalar root");
    if (!root.requires_grad()) return;
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            Node* p = n->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    root.node()->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) n->backward(*n);
    }
}

// ---- linear algebra ------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
    require(a.cols() == b.rows(), ErrorKind::Shape, "matmul inner dimensions differ");
    return detail::make(a.value() * b.value(), {a, b}, [pa = a.node(), pb = b.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad * pb->value.transpose());
        if (pb->requires_grad) pb->accumulate(pa->value.transpose() * self.grad);
    });
}

// a * b^T
inline Var matmul_nt(const Var& a, const Var& b) {
    require(a.cols() == b.cols(), ErrorKind::Shape, "matmul_nt inner dimensions differ");
    return detail::make(a.value() * b.value().transpose(), {a, b}, [pa = a.node(), pb = b.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad * pb->value);
        if (pb->requires_grad) pb->accumulate(self.grad.transpose() * pa->value);
    });
}

inline Var transpose(const Var& a) {
    return detail::make(a.value().transpose(), {a},
                        [pa = a.node()](Node& self) { pa->accumulate(self.grad.transpose()); });
}

// ---- elementwise ---------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "add");
    return detail::make(a.value() + b.value(), {a, b}, [pa = a.node(), pb = b.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad);
        if (pb->requires_grad) pb->accumulate(self.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "sub");
    return detail::make(a.value() - b.value(), {a, b}, [pa = a.node(), pb = b.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad);
        if (pb->requires_grad) pb->accumulate(-self.grad);
    });
}

inline Var cmul(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "cmul");
    return detail::make(a.value().cwiseProduct(b.value()), {a, b}, [pa = a.node(), pb = b.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad.cwiseProduct(pb->value));
        if (pb->requires_grad) pb->accumulate(self.grad.cwiseProduct(pa->value));
    });
}

inline Var scale(const Var& a, double s) {
    return detail::make(a.value() * s, {a}, [pa = a.node(), s](Node& self) { pa->accumulate(self.grad * s); });
}

// a + c for a constant c of the same shape.
inline Var add_const(const Var& a, const Matrix& c) {
    require(a.rows() == c.rows() && a.cols() == c.cols(), ErrorKind::Shape, "add_const shape mismatch");
    return detail::make(a.value() + c, {a}, [pa = a.node()](Node& self) { pa->accumulate(self.grad); });
}

// Adds a 1 x d row to every row of a.
inline Var add_row(const Var& a, const Var& r) {
    require(r.rows() == 1 && r.cols() == a.cols(), ErrorKind::Shape, "add_row width mismatch");
    Matrix v = a.value().rowwise() + r.value().row(0);
    return detail::make(std::move(v), {a, r}, [pa = a.node(), pr = r.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad);
        if (pr->requires_grad) pr->accumulate(self.grad.colwise().sum());
    });
}

// Row i of a (n x d) multiplied by w(i) (w is n x 1).
inline Var scale_rows(const Var& a, const Var& w) {
    require(w.cols() == 1 && w.rows() == a.rows(), ErrorKind::Shape, "scale_rows weight shape mismatch");
    Matrix v = a.value().array().colwise() * w.value().col(0).array();
    return detail::make(std::move(v), {a, w}, [pa = a.node(), pw = w.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad.array().colwise() * pw->value.col(0).array());
        if (pw->requires_grad) pw->accumulate(self.grad.cwiseProduct(pa->value).rowwise().sum());
    });
}

// a * s for a 1x1 variable s.
inline Var mul_scalar(const Var& a, const Var& s) {
    require(s.rows() == 1 && s.cols() == 1, ErrorKind::Shape, "mul_scalar needs a 1x1 scale");
    return detail::make(a.value() * s.scalar(), {a, s}, [pa = a.node(), ps = s.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad * ps->value(0, 0));
        if (ps->requires_grad) ps->accumulate(Matrix::Constant(1, 1, self.grad.cwiseProduct(pa->value).sum()));
    });
}

inline Var relu(const Var& a) {
    return detail::make(a.value().cwiseMax(0.0), {a}, [pa = a.node()](Node& self) {
        pa->accumulate((pa->value.array() > 0.0).select(self.grad, 0.0));
    });
}

inline Var sigmoid(const Var& a) {
    Matrix y = a.value().unaryExpr([](double x) {
        return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    });
    return detail::make(y, {a}, [pa = a.node(), y](Node& self) {
        pa->accumulate(self.grad.cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix())));
    });
}

// ---- reductions and reshaping ----------------------------------------------

inline Var sum(const Var& a) {
    return detail::make(Matrix::Constant(1, 1, a.value().sum()), {a}, [pa = a.node()](Node& self) {
        pa->accumulate(Matrix::Constant(pa->value.rows(), pa->value.cols(), self.grad(0, 0)));
    });
}

inline Var mean(const Var& a) {
    const double n = static_cast<double>(a.value().size());
    return scale(sum(a), 1.0 / n);
}

// Row-wise softmax.
inline Var softmax_rows(const Var& a) {
    Matrix y = detail::softmax_rows(a.value());
    return detail::make(y, {a}, [pa = a.node(), y](Node& self) {
        Matrix gy = self.grad.cwiseProduct(y);
        Vector s = gy.rowwise().sum();
        pa->accumulate(gy - (y.array().colwise() * s.array()).matrix());
    });
}

// n x 1 column of log(sum(exp(row))).
inline Var logsumexp_rows(const Var& a) {
    const Matrix& x = a.value();
    Matrix out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double m = x.row(i).maxCoeff();
        out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
    }
    return detail::make(out, {a}, [pa = a.node()](Node& self) {
        Matrix p = detail::softmax_rows(pa->value);
        pa->accumulate(p.array().colwise() * self.grad.col(0).array());
    });
}

inline Var select_col(const Var& a, Eigen::Index j) {
    require(j >= 0 && j < a.cols(), ErrorKind::Shape, "select_col index out of range");
    return detail::make(a.value().col(j), {a}, [pa = a.node(), j](Node& self) {
        pa->grad_buffer().col(j) += self.grad.col(0);
    });
}

inline Var row(const Var& a, Eigen::Index i) {
    require(i >= 0 && i < a.rows(), ErrorKind::Shape, "row index out of range");
    return detail::make(a.value().row(i), {a}, [pa = a.node(), i](Node& self) {
        pa->grad_buffer().row(i) += self.grad.row(0);
    });
}

inline Var concat_cols(const Var& a, const Var& b) {
    require(a.rows() == b.rows(), ErrorKind::Shape, "concat_cols row count mismatch");
    Matrix v(a.rows(), a.cols() + b.cols());
    v << a.value(), b.value();
    const Eigen::Index ac = a.cols();
    return detail::make(std::move(v), {a, b}, [pa = a.node(), pb = b.node(), ac](Node& self) {
        if (pa->requires_grad) pa->accumulate(self.grad.leftCols(ac));
        if (pb->requires_grad) pb->accumulate(self.grad.rightCols(self.grad.cols() - ac));
    });
}

// Vertically stacks equally wide blocks.
inline Var stack_rows(std::span<const Var> parts) {
    require(!parts.empty(), ErrorKind::Shape, "stack_rows of nothing");
    const Eigen::Index d = parts[0].cols();
    Eigen::Index n = 0;
    for (const auto& p : parts) {
        require(p.cols() == d, ErrorKind::Shape, "stack_rows width mismatch");
        n += p.rows();
    }
    Matrix v(n, d);
    Eigen::Index r = 0;
    bool any = false;
    for (const auto& p : parts) {
        v.middleRows(r, p.rows()) = p.value();
        r += p.rows();
        any = any || p.requires_grad();
    }
    Var out(std::move(v), false);
    if (!detail::grad_enabled || !any) return out;
    Node* node = out.node();
    node->requires_grad = true;
    std::vector<std::pair<Node*, Eigen::Index>> spans;
    for (const auto& p : parts) {
        node->parents.push_back(p.node_ptr());
        spans.emplace_back(p.node(), p.rows());
    }
    node->backward = [spans](Node& self) {
        Eigen::Index off = 0;
        for (auto [p, rows] : spans) {
            if (p->requires_grad) p->accumulate(self.grad.middleRows(off, rows));
            off += rows;
        }
    };
    return out;
}

// Rows of table selected by ids (embedding lookup). Backward scatters.
inline Var gather_rows(const Var& table, std::span<const int> ids) {
    Matrix v(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        require(ids[i] >= 0 && ids[i] < table.rows(), ErrorKind::Shape, "gather_rows id out of range");
        v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
    }
    return detail::make(std::move(v), {table}, [pt = table.node(), idx = std::vector<int>(ids.begin(), ids.end())](Node& self) {
        Matrix& g = pt->grad_buffer();
        for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
    });
}

// 1 x d mean of the rows where mask is true.
inline Var mean_rows_masked(const Var& a, const std::vector<bool>& mask) {
    require(static_cast<Eigen::Index>(mask.size()) == a.rows(), ErrorKind::Shape, "mask length mismatch");
    Matrix v = Matrix::Zero(1, a.cols());
    int count = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (mask[static_cast<std::size_t>(i)]) {
            v += a.value().row(i);
            ++count;
        }
    }
    require(count > 0, ErrorKind::EmptyInput, "no unmasked rows to pool");
    v /= count;
    return detail::make(std::move(v), {a}, [pa = a.node(), mask, count](Node& self) {
        Matrix& g = pa->grad_buffer();
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            if (mask[static_cast<std::size_t>(i)]) g.row(i) += self.grad.row(0) / count;
    });
}

// Per-row standardisation (no affine part).
inline Var layer_norm_rows(const Var& a, double eps = 1e-5) {
    const Matrix& x = a.value();
    const Eigen::Index d = x.cols();
    Matrix y(x.rows(), d);
    Vector inv_std(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mu = x.row(i).mean();
        const double var = (x.row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        y.row(i) = (x.row(i).array() - mu) * inv_std(i);
    }
    return detail::make(y, {a}, [pa = a.node(), y, inv_std](Node& self) {
        const Matrix& g = self.grad;
        Matrix dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const double gm = g.row(i).mean();
            const double gym = g.row(i).cwiseProduct(y.row(i)).mean();
            dx.row(i) = inv_std(i) * (g.row(i).array() - gm - y.row(i).array() * gym);
        }
        pa->accumulate(dx);
    });
}

// Each row divided by its Euclidean norm (floored at eps).
inline Var normalize_rows(const Var& a, double eps = 1e-12) {
    const Matrix& x = a.value();
    Vector norms = x.rowwise().norm().cwiseMax(eps);
    Matrix y = x.array().colwise() / norms.array();
    return detail::make(y, {a}, [pa = a.node(), y, norms](Node& self) {
        Vector proj = self.grad.cwiseProduct(y).rowwise().sum();
        Matrix dx = self.grad - (y.array().colwise() * proj.array()).matrix();
        pa->accumulate(dx.array().colwise() / norms.array());
    });
}

// n x 1 column of row-wise dot products.
inline Var rowwise_dot(const Var& a, const Var& b) {
    detail::check_same_shape(a, b, "rowwise_dot");
    Matrix v = a.value().cwiseProduct(b.value()).rowwise().sum();
    return detail::make(std::move(v), {a, b}, [pa = a.node(), pb = b.node()](Node& self) {
        if (pa->requires_grad) pa->accumulate(pb->value.array().colwise() * self.grad.col(0).array());
        if (pb->requires_grad) pb->accumulate(pa->value.array().colwise() * self.grad.col(0).array());
    });
}

// Mean binary cross-entropy between sigmoid(logits) and constant targets,
// computed in the numerically stable logit form.
inline Var bce_with_logits(const Var& logits, const Matrix& targets) {
    require(logits.rows() == targets.rows() && logits.cols() == targets.cols(), ErrorKind::Shape,
            "bce target shape mismatch");
    const Matrix& z = logits.value();
    const double n = static_cast<double>(z.size());
    double total = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
        const double zi = z(i), ti = targets(i);
        total += std::max(zi, 0.0) - zi * ti + std::log1p(std::exp(-std::abs(zi)));
    }
    return detail::make(Matrix::Constant(1, 1, total / n), {logits}, [pz = logits.node(), targets, n](Node& self) {
        Matrix p = pz->value.unaryExpr([](double x) {
            return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        });
        pz->accumulate((p - targets) * (self.grad(0, 0) / n));
    });
}

// ---- parameters --------------------------------------------------------------

struct NamedParameter {
    std::string name;
    Var var;
    bool trainable = true; // frozen tensors are serialised but not optimised
};
using ParameterList = std::vector<NamedParameter>;

inline void zero_grad(ParameterList& params) {
    for (auto& p : params) p.var.zero_grad();
}

inline bool all_finite(const ParameterList& params) {
    for (const auto& p : params)
        if (!p.var.value().allFinite()) return false;
    return true;
}

} // namespace sdgclf::ad
