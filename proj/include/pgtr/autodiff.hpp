#pragma once

// A small reverse-mode differentiation tape over dense matrices. It records
// only the operations the model needs; each call appends a node holding the
// forward value and a closure that pushes the node's gradient to its inputs.
// A tape is built and replayed by a single thread.

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pgtr/dense.hpp"
#include "pgtr/sparse.hpp"

namespace pgtr {

using Index = std::uint32_t;

struct Parameter {
    std::string name;
    DenseMatrix value;
    DenseMatrix grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, DenseMatrix v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(value.rows(), value.cols()), trainable(train) {}
    void zero_grad() { grad = DenseMatrix(value.rows(), value.cols()); }
    std::size_t size() const { return value.size(); }
};

struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Sparse operand of `spmm`. `transpose` may be null when the matrix is symmetric.
struct SparseOperand {
    std::shared_ptr<const CsrMatrix> matrix;
    std::shared_ptr<const CsrMatrix> transpose;
};

class Tape {
public:
    Var constant(DenseMatrix value, std::string name = "constant");
    /// Leaf bound to a parameter; backward accumulates into `p.grad` when trainable.
    Var parameter(Parameter& p);

    const DenseMatrix& value(Var v) const { return nodes_[v.id].value; }
    double scalar(Var v) const;
    std::size_t size() const { return nodes_.size(); }

    /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable parameter.
    void backward(Var loss);

    Var matmul(Var a, Var b);     // A B
    Var matmul_nt(Var a, Var b);  // A B^T
    Var matmul_tn(Var a, Var b);  // A^T B
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double s);
    Var exp(Var a);
    Var leaky_relu(Var a, double slope);
    Var sum(Var a);  // 1 x 1
    /// Elementwise mean of equally shaped inputs.
    Var mean(const std::vector<Var>& xs);

    Var spmm(const SparseOperand& a, Var x);
    Var gather_rows(Var table, std::vector<Index> rows);
    Var slice_rows(Var a, std::size_t begin, std::size_t end);
    Var concat_rows(const std::vector<Var>& parts);

    /// Rows divided by their sums.
    Var row_normalize(Var a);
    /// Rows scaled to unit Euclidean norm; throws on a zero row.
    Var row_l2_normalize(Var a);
    /// Per-row log(sum(exp(x))) as an n x 1 column.
    Var row_log_sum_exp(Var a);

    /// phi(x)_f = exp(w_f . (s x) - ||s x||^2 / 2) / sqrt(m) for each row x.
    Var random_features(Var x, const DenseMatrix& directions, double input_scale);
    /// Row i = phi_q(i)^T [sum_j phi_k(j) v(j)^T] / phi_q(i)^T [sum_j phi_k(j)].
    Var linear_attention(Var phi_q, Var phi_k, Var v);
    /// Row i = sum_j softmax_j(q_i . k_j) v_j, quadratic cost.
    Var softmax_attention(Var q, Var k, Var v);

    /// Mean over rows r with include[r] of
    ///   log sum_{c : allowed(r, c)} exp(logits(r, c)) - logits(r, r),
    /// where allowed always contains the diagonal. Scalar result.
    Var masked_softmax_loss(Var logits, const std::vector<std::vector<char>>& allowed, const std::vector<char>& include);

private:
    struct Node {
        DenseMatrix value;
        DenseMatrix grad;
        bool requires_grad = false;
        Parameter* param = nullptr;
        std::string op;
        std::function<void(Tape&, const DenseMatrix& grad)> backward;
    };

    Var push(DenseMatrix value, std::string op, std::vector<Var> inputs,
             std::function<void(Tape&, const DenseMatrix& grad)> backward);
    bool needs(Var v) const { return nodes_[v.id].requires_grad; }
    /// Adds `g` into the gradient of `v` if it requires one.
    void accumulate(Var v, const DenseMatrix& g);

    std::vector<Node> nodes_;
};

}  // namespace pgtr
