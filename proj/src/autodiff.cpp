#include "pgtr/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "pgtr/error.hpp"
#include "pgtr/kernels.hpp"

namespace pgtr {

namespace {

void add_into(DenseMatrix& dst, const DenseMatrix& src) {
    assert(dst.same_shape(src));
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t k = 0; k < dst.size(); ++k) d[k] += s[k];
}

DenseMatrix elementwise(const DenseMatrix& a, auto&& f) {
    DenseMatrix out(a.rows(), a.cols());
    for (std::size_t k = 0; k < a.size(); ++k) out.data()[k] = f(a.data()[k], k);
    return out;
}

void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
    if (!a.same_shape(b)) throw Error(std::string(op) + ": shape mismatch");
}

}  // namespace

Var Tape::push(DenseMatrix value, std::string op, std::vector<Var> inputs,
               std::function<void(Tape&, const DenseMatrix&)> backward) {
    if (!all_finite(value)) throw NumericError("non-finite value produced by '" + op + "'");
    Node n;
    n.value = std::move(value);
    n.op = std::move(op);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](Var v) { return needs(v); });
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

Var Tape::constant(DenseMatrix value, std::string name) {
    return push(std::move(value), std::move(name), {}, nullptr);
}

Var Tape::parameter(Parameter& p) {
    Node n;
    n.value = p.value;
    n.op = "parameter:" + p.name;
    n.requires_grad = p.trainable;
    n.param = p.trainable ? &p : nullptr;
    nodes_.push_back(std::move(n));
    return Var{nodes_.size() - 1};
}

double Tape::scalar(Var v) const {
    const auto& m = value(v);
    if (m.size() != 1) throw Error("tape value is not a scalar");
    return m.data()[0];
}

void Tape::accumulate(Var v, const DenseMatrix& g) {
    Node& n = nodes_[v.id];
    if (!n.requires_grad) return;
    if (n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
    add_into(n.grad, g);
}

void Tape::backward(Var loss) {
    if (value(loss).size() != 1) throw Error("backward: loss must be a scalar");
    if (!needs(loss)) return;
    nodes_[loss.id].grad = DenseMatrix(1, 1, 1.0);
    for (std::size_t id = loss.id + 1; id-- > 0;) {
        Node& n = nodes_[id];
        if (!n.requires_grad || n.grad.empty()) continue;
        if (!all_finite(n.grad)) throw NumericError("non-finite gradient at '" + n.op + "'");
        if (n.param) {
            add_into(n.param->grad, n.grad);
        } else if (n.backward) {
            DenseMatrix g = std::move(n.grad);
            n.backward(*this, g);
        }
    }
}

Var Tape::matmul(Var a, Var b) {
    return push(kernels::matmul(value(a), value(b)), "matmul", {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
        if (t.needs(a)) t.accumulate(a, kernels::matmul_nt(g, t.value(b)));
        if (t.needs(b)) t.accumulate(b, kernels::matmul_tn(t.value(a), g));
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    return push(kernels::matmul_nt(value(a), value(b)), "matmul_nt", {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
        if (t.needs(a)) t.accumulate(a, kernels::matmul(g, t.value(b)));
        if (t.needs(b)) t.accumulate(b, kernels::matmul_tn(g, t.value(a)));
    });
}

Var Tape::matmul_tn(Var a, Var b) {
    return push(kernels::matmul_tn(value(a), value(b)), "matmul_tn", {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
        if (t.needs(a)) t.accumulate(a, kernels::matmul_nt(t.value(b), g));
        if (t.needs(b)) t.accumulate(b, kernels::matmul(t.value(a), g));
    });
}

Var Tape::add(Var a, Var b) {
    require_same_shape(value(a), value(b), "add");
    const DenseMatrix& bv = value(b);
    DenseMatrix out = elementwise(value(a), [&](double x, std::size_t k) { return x + bv.data()[k]; });
    return push(std::move(out), "add", {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
        t.accumulate(a, g);
        t.accumulate(b, g);
    });
}

Var Tape::sub(Var a, Var b) {
    require_same_shape(value(a), value(b), "sub");
    const DenseMatrix& bv = value(b);
    DenseMatrix out = elementwise(value(a), [&](double x, std::size_t k) { return x - bv.data()[k]; });
    return push(std::move(out), "sub", {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
        t.accumulate(a, g);
        if (t.needs(b)) t.accumulate(b, elementwise(g, [](double x, std::size_t) { return -x; }));
    });
}

Var Tape::mul(Var a, Var b) {
    require_same_shape(value(a), value(b), "mul");
    const DenseMatrix& bv = value(b);
    DenseMatrix out = elementwise(value(a), [&](double x, std::size_t k) { return x * bv.data()[k]; });
    return push(std::move(out), "mul", {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& av = t.value(a);
        const DenseMatrix& bv = t.value(b);
        if (t.needs(a)) t.accumulate(a, elementwise(g, [&](double x, std::size_t k) { return x * bv.data()[k]; }));
        if (t.needs(b)) t.accumulate(b, elementwise(g, [&](double x, std::size_t k) { return x * av.data()[k]; }));
    });
}

Var Tape::scale(Var a, double s) {
    DenseMatrix out = elementwise(value(a), [s](double x, std::size_t) { return s * x; });
    return push(std::move(out), "scale", {a}, [a, s](Tape& t, const DenseMatrix& g) {
        t.accumulate(a, elementwise(g, [s](double x, std::size_t) { return s * x; }));
    });
}

Var Tape::exp(Var a) {
    DenseMatrix out = elementwise(value(a), [](double x, std::size_t) { return std::exp(x); });
    const std::size_t self = nodes_.size();
    return push(std::move(out), "exp", {a}, [a, self](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& y = t.nodes_[self].value;
        t.accumulate(a, elementwise(g, [&](double x, std::size_t k) { return x * y.data()[k]; }));
    });
}

Var Tape::leaky_relu(Var a, double slope) {
    DenseMatrix out = elementwise(value(a), [slope](double x, std::size_t) { return x > 0.0 ? x : slope * x; });
    return push(std::move(out), "leaky_relu", {a}, [a, slope](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& x = t.value(a);
        t.accumulate(a, elementwise(g, [&](double v, std::size_t k) { return x.data()[k] > 0.0 ? v : slope * v; }));
    });
}

Var Tape::sum(Var a) {
    double s = 0.0;
    for (double v : value(a).values()) s += v;
    return push(DenseMatrix(1, 1, s), "sum", {a}, [a](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& x = t.value(a);
        t.accumulate(a, DenseMatrix(x.rows(), x.cols(), g.data()[0]));
    });
}

Var Tape::mean(const std::vector<Var>& xs) {
    if (xs.empty()) throw Error("mean: no inputs");
    DenseMatrix out = value(xs[0]);
    for (std::size_t k = 1; k < xs.size(); ++k) {
        require_same_shape(out, value(xs[k]), "mean");
        add_into(out, value(xs[k]));
    }
    const double w = 1.0 / static_cast<double>(xs.size());
    for (double& v : out.values()) v *= w;
    return push(std::move(out), "mean", xs, [xs, w](Tape& t, const DenseMatrix& g) {
        DenseMatrix scaled = elementwise(g, [w](double x, std::size_t) { return w * x; });
        for (Var x : xs) t.accumulate(x, scaled);
    });
}

Var Tape::spmm(const SparseOperand& a, Var x) {
    if (a.matrix->cols != value(x).rows()) throw Error("spmm: shape mismatch");
    return push(kernels::spmm(*a.matrix, value(x)), "spmm", {x}, [a, x](Tape& t, const DenseMatrix& g) {
        const CsrMatrix& at = a.transpose ? *a.transpose : *a.matrix;
        t.accumulate(x, kernels::spmm(at, g));
    });
}

Var Tape::gather_rows(Var table, std::vector<Index> rows) {
    const DenseMatrix& src = value(table);
    DenseMatrix out(rows.size(), src.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= src.rows()) throw Error("gather_rows: row index out of range");
        std::copy_n(src.row(rows[r]).data(), src.cols(), out.row(r).data());
    }
    return push(std::move(out), "gather_rows", {table},
                [table, rows = std::move(rows)](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& src = t.value(table);
                    DenseMatrix acc(src.rows(), src.cols());
                    for (std::size_t r = 0; r < rows.size(); ++r) {
                        auto dst = acc.row(rows[r]);
                        auto gr = g.row(r);
                        for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += gr[c];
                    }
                    t.accumulate(table, acc);
                });
}

Var Tape::slice_rows(Var a, std::size_t begin, std::size_t end) {
    const DenseMatrix& src = value(a);
    if (begin > end || end > src.rows()) throw Error("slice_rows: bad range");
    DenseMatrix out(end - begin, src.cols());
    std::copy(src.data() + begin * src.cols(), src.data() + end * src.cols(), out.data());
    return push(std::move(out), "slice_rows", {a}, [a, begin](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& src = t.value(a);
        DenseMatrix acc(src.rows(), src.cols());
        std::copy(g.data(), g.data() + g.size(), acc.data() + begin * src.cols());
        t.accumulate(a, acc);
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error("concat_rows: no inputs");
    const std::size_t cols = value(parts[0]).cols();
    std::size_t rows = 0;
    for (Var p : parts) {
        if (value(p).cols() != cols) throw Error("concat_rows: column mismatch");
        rows += value(p).rows();
    }
    DenseMatrix out(rows, cols);
    std::size_t at = 0;
    for (Var p : parts) {
        std::copy(value(p).data(), value(p).data() + value(p).size(), out.data() + at);
        at += value(p).size();
    }
    return push(std::move(out), "concat_rows", parts, [parts](Tape& t, const DenseMatrix& g) {
        std::size_t at = 0;
        for (Var p : parts) {
            const DenseMatrix& v = t.value(p);
            if (t.needs(p)) {
                DenseMatrix piece(v.rows(), v.cols());
                std::copy(g.data() + at, g.data() + at + v.size(), piece.data());
                t.accumulate(p, piece);
            }
            at += v.size();
        }
    });
}

Var Tape::row_normalize(Var a) {
    const DenseMatrix& x = value(a);
    DenseMatrix out(x.rows(), x.cols());
    std::vector<double> sums(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row(r)) s += v;
        if (s == 0.0) throw NumericError("row_normalize: zero row sum at row " + std::to_string(r));
        sums[r] = s;
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) / s;
    }
    const std::size_t self = nodes_.size();
    return push(std::move(out), "row_normalize", {a}, [a, self, sums](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& y = t.nodes_[self].value;
        DenseMatrix d(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double gy = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) gy += g(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) d(r, c) = (g(r, c) - gy) / sums[r];
        }
        t.accumulate(a, d);
    });
}

Var Tape::row_l2_normalize(Var a) {
    const DenseMatrix& x = value(a);
    DenseMatrix out(x.rows(), x.cols());
    std::vector<double> norms(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double s = 0.0;
        for (double v : x.row(r)) s += v * v;
        if (s == 0.0) throw NumericError("row_l2_normalize: zero-norm row " + std::to_string(r));
        norms[r] = std::sqrt(s);
        for (std::size_t c = 0; c < x.cols(); ++c) out(r, c) = x(r, c) / norms[r];
    }
    const std::size_t self = nodes_.size();
    return push(std::move(out), "row_l2_normalize", {a}, [a, self, norms](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& y = t.nodes_[self].value;
        DenseMatrix d(y.rows(), y.cols());
        for (std::size_t r = 0; r < y.rows(); ++r) {
            double gy = 0.0;
            for (std::size_t c = 0; c < y.cols(); ++c) gy += g(r, c) * y(r, c);
            for (std::size_t c = 0; c < y.cols(); ++c) d(r, c) = (g(r, c) - gy * y(r, c)) / norms[r];
        }
        t.accumulate(a, d);
    });
}

Var Tape::row_log_sum_exp(Var a) {
    const DenseMatrix& x = value(a);
    DenseMatrix out(x.rows(), 1);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        const double peak = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double v : row) s += std::exp(v - peak);
        out(r, 0) = peak + std::log(s);
    }
    const std::size_t self = nodes_.size();
    return push(std::move(out), "row_log_sum_exp", {a}, [a, self](Tape& t, const DenseMatrix& g) {
        const DenseMatrix& x = t.value(a);
        const DenseMatrix& lse = t.nodes_[self].value;
        DenseMatrix d(x.rows(), x.cols());
        for (std::size_t r = 0; r < x.rows(); ++r)
            for (std::size_t c = 0; c < x.cols(); ++c) d(r, c) = g(r, 0) * std::exp(x(r, c) - lse(r, 0));
        t.accumulate(a, d);
    });
}

Var Tape::random_features(Var x, const DenseMatrix& directions, double input_scale) {
    if (value(x).cols() != directions.cols()) throw Error("random_features: dimension mismatch");
    auto dirs = std::make_shared<const DenseMatrix>(directions);
    const std::size_t self = nodes_.size();
    return push(kernels::random_features(value(x), directions, input_scale), "random_features", {x},
                [x, dirs, input_scale, self](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& phi = t.nodes_[self].value;
                    const DenseMatrix& xv = t.value(x);
                    DenseMatrix gp(phi.rows(), phi.cols());
                    for (std::size_t k = 0; k < gp.size(); ++k) gp.data()[k] = g.data()[k] * phi.data()[k];
                    DenseMatrix d = kernels::matmul(gp, *dirs);
                    for (std::size_t r = 0; r < d.rows(); ++r) {
                        double row_sum = 0.0;
                        for (double v : gp.row(r)) row_sum += v;
                        for (std::size_t c = 0; c < d.cols(); ++c)
                            d(r, c) = input_scale * (d(r, c) - row_sum * input_scale * xv(r, c));
                    }
                    t.accumulate(x, d);
                });
}

Var Tape::linear_attention(Var phi_q, Var phi_k, Var v) {
    auto summary = std::make_shared<kernels::AttentionSummary>(kernels::attention_summary(value(phi_k), value(v)));
    auto den = std::make_shared<std::vector<double>>();
    DenseMatrix out = kernels::attention_apply(value(phi_q), *summary, *den);
    const std::size_t self = nodes_.size();
    return push(std::move(out), "linear_attention", {phi_q, phi_k, v},
                [phi_q, phi_k, v, summary, den, self](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& out = t.nodes_[self].value;
                    const DenseMatrix& pq = t.value(phi_q);
                    const DenseMatrix& pk = t.value(phi_k);
                    const DenseMatrix& vv = t.value(v);
                    const std::size_t n = out.rows();
                    DenseMatrix ga(g.rows(), g.cols());  // dL/d(numerator)
                    DenseMatrix gc(n, 1);                // dL/d(denominator)
                    for (std::size_t i = 0; i < n; ++i) {
                        const double c = (*den)[i];
                        double go = 0.0;
                        for (std::size_t k = 0; k < g.cols(); ++k) {
                            ga(i, k) = g(i, k) / c;
                            go += g(i, k) * out(i, k);
                        }
                        gc(i, 0) = -go / c;
                    }
                    DenseMatrix d_kv = kernels::matmul_tn(pq, ga);  // m x d
                    DenseMatrix d_k = kernels::matmul_tn(pq, gc);   // m x 1
                    if (t.needs(phi_q)) {
                        DenseMatrix d = kernels::matmul_nt(ga, summary->kv);
                        for (std::size_t i = 0; i < n; ++i)
                            for (std::size_t f = 0; f < d.cols(); ++f) d(i, f) += gc(i, 0) * summary->k[f];
                        t.accumulate(phi_q, d);
                    }
                    if (t.needs(phi_k)) {
                        DenseMatrix d = kernels::matmul_nt(vv, d_kv);
                        for (std::size_t j = 0; j < d.rows(); ++j)
                            for (std::size_t f = 0; f < d.cols(); ++f) d(j, f) += d_k(f, 0);
                        t.accumulate(phi_k, d);
                    }
                    if (t.needs(v)) t.accumulate(v, kernels::matmul(pk, d_kv));
                });
}

Var Tape::softmax_attention(Var q, Var k, Var v) {
    DenseMatrix weights = kernels::matmul_nt(value(q), value(k));
    for (std::size_t r = 0; r < weights.rows(); ++r) {
        auto row = weights.row(r);
        const double peak = *std::max_element(row.begin(), row.end());
        double s = 0.0;
        for (double& x : row) {
            x = std::exp(x - peak);
            s += x;
        }
        for (double& x : row) x /= s;
    }
    auto attn = std::make_shared<const DenseMatrix>(std::move(weights));
    return push(kernels::matmul(*attn, value(v)), "softmax_attention", {q, k, v},
                [q, k, v, attn](Tape& t, const DenseMatrix& g) {
                    const DenseMatrix& a = *attn;
                    if (t.needs(v)) t.accumulate(v, kernels::matmul_tn(a, g));
                    if (!t.needs(q) && !t.needs(k)) return;
                    DenseMatrix da = kernels::matmul_nt(g, t.value(v));
                    for (std::size_t r = 0; r < a.rows(); ++r) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < a.cols(); ++c) dot += da(r, c) * a(r, c);
                        for (std::size_t c = 0; c < a.cols(); ++c) da(r, c) = a(r, c) * (da(r, c) - dot);
                    }
                    if (t.needs(q)) t.accumulate(q, kernels::matmul(da, t.value(k)));
                    if (t.needs(k)) t.accumulate(k, kernels::matmul_tn(da, t.value(q)));
                });
}

Var Tape::masked_softmax_loss(Var logits, const std::vector<std::vector<char>>& allowed,
                              const std::vector<char>& include) {
    const DenseMatrix& x = value(logits);
    const std::size_t n = x.rows();
    if (x.cols() != n || allowed.size() != n || include.size() != n)
        throw Error("masked_softmax_loss: expects a square logit matrix with matching masks");
    auto probs = std::make_shared<DenseMatrix>(n, n);
    double total = 0.0;
    std::size_t counted = 0;
    for (std::size_t r = 0; r < n; ++r) {
        if (!include[r]) continue;
        double peak = x(r, r);
        for (std::size_t c = 0; c < n; ++c)
            if (allowed[r][c]) peak = std::max(peak, x(r, c));
        double s = 0.0;
        for (std::size_t c = 0; c < n; ++c)
            if (c == r || allowed[r][c]) s += std::exp(x(r, c) - peak);
        const double lse = peak + std::log(s);
        for (std::size_t c = 0; c < n; ++c)
            if (c == r || allowed[r][c]) (*probs)(r, c) = std::exp(x(r, c) - lse);
        total += lse - x(r, r);
        ++counted;
    }
    const double inv = counted ? 1.0 / static_cast<double>(counted) : 0.0;
    return push(DenseMatrix(1, 1, total * inv), "masked_softmax_loss", {logits},
                [logits, probs, include, inv](Tape& t, const DenseMatrix& g) {
                    const std::size_t n = probs->rows();
                    DenseMatrix d(n, n);
                    const double w = g.data()[0] * inv;
                    for (std::size_t r = 0; r < n; ++r) {
                        if (!include[r]) continue;
                        for (std::size_t c = 0; c < n; ++c) d(r, c) = w * (*probs)(r, c);
                        d(r, r) -= w;
                    }
                    t.accumulate(logits, d);
                });
}

}  // namespace pgtr
