#include <doctest.h>

#include "oracles.hpp"
#include "pgtr/adam.hpp"
#include "pgtr/autodiff.hpp"
#include "pgtr/eigensolver.hpp"
#include "pgtr/error.hpp"
#include "pgtr/kernels.hpp"
#include "pgtr/pagerank.hpp"

using namespace pgtr;

namespace {

CsrMatrix dense_to_csr(const DenseMatrix& d) {
    std::vector<CsrMatrix::Triplet> t;
    for (std::uint32_t r = 0; r < d.rows(); ++r)
        for (std::uint32_t c = 0; c < d.cols(); ++c)
            if (d(r, c) != 0.0) t.push_back({r, c, d(r, c)});
    return CsrMatrix::from_triplets(d.rows(), d.cols(), std::move(t));
}

CsrMatrix random_sparse(std::size_t r, std::size_t c, double p, std::mt19937_64& rng) {
    std::bernoulli_distribution coin(p);
    std::normal_distribution<double> val;
    DenseMatrix d(r, c);
    for (double& x : d.values())
        if (coin(rng)) x = val(rng);
    return dense_to_csr(d);
}

}  // namespace

TEST_CASE("csr from triplets sums duplicates and converts to dense") {
    auto m = CsrMatrix::from_triplets(2, 3, {{0, 2, 1.0}, {0, 2, 2.0}, {1, 0, -1.0}});
    CHECK(m.nnz() == 2);
    auto d = m.to_dense();
    CHECK(d(0, 2) == 3.0);
    CHECK(d(1, 0) == -1.0);
    CHECK(m.inf_norm() == 3.0);
}

TEST_CASE("serial and OpenMP kernels agree bitwise") {
    std::mt19937_64 rng(11);
    auto a = oracle::random_matrix(37, 19, rng);
    auto b = oracle::random_matrix(19, 23, rng);
    auto bt = transpose(b);
    auto a2 = oracle::random_matrix(37, 23, rng);
    CHECK(kernels::omp::matmul(a, b) == kernels::serial::matmul(a, b));
    CHECK(kernels::omp::matmul_nt(a, bt) == kernels::serial::matmul_nt(a, bt));
    CHECK(kernels::omp::matmul_tn(a, a2) == kernels::serial::matmul_tn(a, a2));
    CHECK(max_abs_diff(kernels::serial::matmul(a, b), oracle::dense_matmul(a, b)) < 1e-12);

    auto s = random_sparse(300, 37, 0.1, rng);
    CHECK(kernels::omp::spmm(s, a) == kernels::serial::spmm(s, a));
    CHECK(max_abs_diff(kernels::serial::spmm(s, a), oracle::dense_matmul(s.to_dense(), a)) < 1e-12);

    auto x = oracle::random_matrix(300, 8, rng, 0.3);
    auto dirs = oracle::random_matrix(64, 8, rng);
    auto phi = kernels::serial::random_features(x, dirs, 0.5);
    CHECK(kernels::omp::random_features(x, dirs, 0.5) == phi);
    auto ss = kernels::serial::attention_summary(phi, x);
    auto so = kernels::omp::attention_summary(phi, x);
    // The OpenMP summary adds fixed-size row chunks, so it matches the plain
    // running sum only to rounding; applying one summary is row-parallel and exact.
    CHECK(max_abs_diff(ss.kv, so.kv) <= 1e-12 * frobenius_norm(ss.kv));
    for (std::size_t f = 0; f < ss.k.size(); ++f) CHECK(std::abs(ss.k[f] - so.k[f]) <= 1e-12 * ss.k[f]);
    std::vector<double> d1, d2;
    CHECK(kernels::serial::attention_apply(phi, ss, d1) == kernels::omp::attention_apply(phi, ss, d2));
    CHECK(d1 == d2);
    auto so_again = kernels::omp::attention_summary(phi, x);
    CHECK(so_again.kv == so.kv);
}

TEST_CASE("random features overflow is reported") {
    DenseMatrix x(1, 1, 100.0);
    DenseMatrix dirs(1, 1, 100.0);
    CHECK_THROWS_AS(kernels::random_features(x, dirs, 1.0), NumericError);
}

TEST_CASE("eigensolver on the single-edge Laplacian") {
    auto m = dense_to_csr(DenseMatrix(2, 2, {1.0, -1.0, -1.0, 1.0}));
    auto e = symmetric_eigs_smallest(m, 2);
    CHECK(e.values[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.values[1] == doctest::Approx(2.0));
    CHECK(e.vectors(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));
    CHECK(e.vectors(1, 1) == doctest::Approx(-1.0 / std::sqrt(2.0)));
}

TEST_CASE("normalized Laplacian of K22 has spectrum 0 1 1 2") {
    InteractionDataset k22(2, 2, {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    auto lap = normalized_laplacian(BipartiteGraph(k22).adjacency());
    auto [ref, _] = oracle::jacobi_eigen(lap.to_dense());
    for (auto strategy : {EigenStrategy::dense, EigenStrategy::lanczos}) {
        EigenOptions o;
        o.strategy = strategy;
        auto e = symmetric_eigs_smallest(lap, 4, o);
        const std::vector<double> want{0.0, 1.0, 1.0, 2.0};
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(std::abs(e.values[j] - want[j]) < 1e-10);
            CHECK(std::abs(e.values[j] - ref[j]) < 1e-10);
        }
    }
}

TEST_CASE("eigensolver contracts on random graph Laplacians, both strategies") {
    std::mt19937_64 rng(21);
    for (int trial = 0; trial < 6; ++trial) {
        auto ds = oracle::random_dataset(30 + trial * 5, 40, 0.06, rng);
        auto lap = normalized_laplacian(BipartiteGraph(ds).adjacency());
        const auto dense = lap.to_dense();
        auto [ref, _] = oracle::jacobi_eigen(dense);
        const std::size_t k = 8;
        for (auto strategy : {EigenStrategy::dense, EigenStrategy::lanczos}) {
            EigenOptions o;
            o.strategy = strategy;
            auto e = symmetric_eigs_smallest(lap, k, o);
            CHECK(e.max_residual <= 1e-10 * std::min(e.norm_estimate, 1.0));
            CHECK(e.values[0] == doctest::Approx(0.0).epsilon(1e-9));
            for (std::size_t j = 0; j < k; ++j) {
                CHECK(std::abs(e.values[j] - ref[j]) < 1e-8);
                if (j) CHECK(e.values[j] >= e.values[j - 1]);
            }
            auto gram = kernels::matmul_tn(e.vectors, e.vectors);
            for (std::size_t a = 0; a < k; ++a)
                for (std::size_t b = 0; b < k; ++b) CHECK(std::abs(gram(a, b) - (a == b ? 1.0 : 0.0)) <= 1e-8);
            for (std::size_t c = 0; c < k; ++c) {
                std::size_t arg = 0;
                for (std::size_t r = 1; r < e.vectors.rows(); ++r)
                    if (std::abs(e.vectors(r, c)) > std::abs(e.vectors(arg, c)) * (1 + 1e-9)) arg = r;
                CHECK(e.vectors(arg, c) > 0.0);
            }
        }
    }
}

TEST_CASE("sign fix prefers the lowest index among ties") {
    DenseMatrix v(2, 1, {-0.5, 0.5});
    fix_signs(v);
    CHECK(v(0, 0) == 0.5);
    CHECK(v(1, 0) == -0.5);
}

TEST_CASE("pagerank small cases") {
    auto one = pagerank(BipartiteGraph(InteractionDataset(1, 1, {{0, 0}})));
    CHECK(one[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(one[1] == doctest::Approx(0.5).epsilon(1e-12));

    auto k33 = pagerank(BipartiteGraph(InteractionDataset(
        3, 3, {{0, 0}, {0, 1}, {0, 2}, {1, 0}, {1, 1}, {1, 2}, {2, 0}, {2, 1}, {2, 2}})));
    for (double s : k33) CHECK(std::abs(s - 1.0 / 6.0) < 1e-12);

    InteractionDataset star(4, 1, {{0, 0}, {1, 0}, {2, 0}, {3, 0}});
    auto got = pagerank(BipartiteGraph(star));
    auto want = oracle::dense_pagerank(oracle::dense_adjacency(star));
    double l1 = 0.0;
    for (std::size_t i = 0; i < got.size(); ++i) l1 += std::abs(got[i] - want[i]);
    CHECK(l1 <= 1e-10);
}

TEST_CASE("pagerank is a probability vector and handles isolated nodes") {
    std::mt19937_64 rng(8);
    auto ds = oracle::random_dataset(40, 60, 0.03, rng);  // some items stay isolated
    auto pr = pagerank(BipartiteGraph(ds));
    double total = 0.0;
    for (double s : pr) {
        CHECK(s >= 0.0);
        total += s;
    }
    CHECK(std::abs(total - 1.0) <= 1e-10);
    auto want = oracle::dense_pagerank(oracle::dense_adjacency(ds));
    double l1 = 0.0;
    for (std::size_t i = 0; i < pr.size(); ++i) l1 += std::abs(pr[i] - want[i]);
    CHECK(l1 <= 1e-10);
}

TEST_CASE("autodiff basics") {
    Parameter x("x", DenseMatrix(1, 2, {1.0, 2.0}));
    Tape t;
    Var v = t.parameter(x);
    t.backward(t.sum(t.mul(v, v)));
    CHECK(x.grad(0, 0) == 2.0);
    CHECK(x.grad(0, 1) == 4.0);

    Parameter y("y", DenseMatrix(2, 2, 1.0));
    Tape t2;
    t2.parameter(y);
    Var c = t2.sum(t2.constant(DenseMatrix(1, 1, 3.0)));
    t2.backward(c);
    CHECK(y.grad == DenseMatrix(2, 2));
}

TEST_CASE("autodiff reports the failing operation on non-finite values") {
    Parameter x("x", DenseMatrix(1, 1, 800.0));
    Tape t;
    try {
        t.exp(t.parameter(x));
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("exp") != std::string::npos);
    }
}

namespace {

/// Checks d(sum(op(inputs) * weights))/d(inputs) against central differences.
void check_gradients(std::vector<Parameter>& inputs, const std::function<Var(Tape&, std::vector<Var>&)>& op,
                     std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    DenseMatrix weights;
    auto loss_of = [&](bool with_backward) {
        Tape t;
        std::vector<Var> vs;
        for (auto& p : inputs) vs.push_back(t.parameter(p));
        Var out = op(t, vs);
        if (weights.empty()) weights = oracle::random_matrix(t.value(out).rows(), t.value(out).cols(), rng);
        Var loss = t.sum(t.mul(out, t.constant(weights)));
        if (with_backward) t.backward(loss);
        return t.scalar(loss);
    };
    for (auto& p : inputs) p.zero_grad();
    loss_of(true);
    for (auto& p : inputs) {
        for (std::size_t k = 0; k < p.value.size(); ++k) {
            const double fd = oracle::central_difference([&] { return loss_of(false); }, p.value.values()[k]);
            const double an = p.grad.values()[k];
            CHECK(std::abs(fd - an) <= 1e-4 * std::max(1.0, std::abs(fd)));
        }
    }
}

std::vector<Parameter> params(std::mt19937_64& rng, std::vector<std::pair<std::size_t, std::size_t>> shapes,
                              double sd = 0.5) {
    std::vector<Parameter> out;
    for (auto [r, c] : shapes) out.emplace_back("p", oracle::random_matrix(r, c, rng, sd));
    return out;
}

}  // namespace

TEST_CASE("autodiff primitives match finite differences") {
    std::mt19937_64 rng(99);
    {
        auto p = params(rng, {{3, 4}, {4, 2}});
        check_gradients(p, [](Tape& t, auto& v) { return t.matmul(v[0], v[1]); }, 1);
    }
    {
        auto p = params(rng, {{3, 4}, {5, 4}});
        check_gradients(p, [](Tape& t, auto& v) { return t.matmul_nt(v[0], v[1]); }, 2);
    }
    {
        auto p = params(rng, {{5, 3}, {5, 2}});
        check_gradients(p, [](Tape& t, auto& v) { return t.matmul_tn(v[0], v[1]); }, 3);
    }
    {
        auto p = params(rng, {{3, 3}, {3, 3}});
        check_gradients(p, [](Tape& t, auto& v) { return t.sub(t.add(v[0], v[1]), t.mul(v[0], v[1])); }, 4);
    }
    {
        auto p = params(rng, {{3, 3}});
        check_gradients(p, [](Tape& t, auto& v) { return t.scale(t.exp(v[0]), -1.5); }, 5);
        check_gradients(p, [](Tape& t, auto& v) { return t.leaky_relu(v[0], 0.2); }, 6);
        check_gradients(p, [](Tape& t, auto& v) { return t.row_log_sum_exp(v[0]); }, 7);
        check_gradients(p, [](Tape& t, auto& v) { return t.row_l2_normalize(v[0]); }, 8);
        check_gradients(p, [](Tape& t, auto& v) { return t.mean({v[0], t.exp(v[0])}); }, 9);
        check_gradients(p, [](Tape& t, auto& v) { return t.gather_rows(v[0], {2, 0, 2}); }, 10);
        check_gradients(p, [](Tape& t, auto& v) { return t.concat_rows({t.slice_rows(v[0], 1, 3), v[0]}); }, 11);
        check_gradients(p, [](Tape& t, auto& v) { return t.row_normalize(t.exp(v[0])); }, 12);
    }
    {
        auto s = std::make_shared<CsrMatrix>(random_sparse(5, 4, 0.5, rng));
        auto st = std::make_shared<CsrMatrix>(dense_to_csr(transpose(s->to_dense())));
        auto p = params(rng, {{4, 3}});
        check_gradients(p, [&](Tape& t, auto& v) { return t.spmm(SparseOperand{s, st}, v[0]); }, 13);
    }
    {
        auto dirs = oracle::random_matrix(16, 3, rng);
        auto p = params(rng, {{6, 3}, {6, 3}, {6, 3}}, 0.4);
        check_gradients(p, [&](Tape& t, auto& v) { return t.random_features(v[0], dirs, 0.7); }, 14);
        check_gradients(
            p,
            [&](Tape& t, auto& v) {
                return t.linear_attention(t.random_features(v[0], dirs, 0.7), t.random_features(v[1], dirs, 0.7),
                                          v[2]);
            },
            15);
        check_gradients(p, [&](Tape& t, auto& v) { return t.softmax_attention(v[0], v[1], v[2]); }, 16);
    }
    {
        auto p = params(rng, {{4, 4}});
        std::vector<std::vector<char>> allowed{{0, 1, 1, 0}, {1, 0, 0, 1}, {0, 0, 0, 1}, {1, 1, 1, 0}};
        std::vector<char> include{1, 1, 1, 0};
        check_gradients(p, [&](Tape& t, auto& v) { return t.masked_softmax_loss(v[0], allowed, include); }, 17);
    }
}

TEST_CASE("adam first step and zero gradient") {
    Parameter p("p", DenseMatrix(1, 3, {1.0, 1.0, 1.0}));
    p.grad = DenseMatrix(1, 3, {5.0, -0.3, 0.0});
    Adam adam({&p}, AdamConfig{0.01});
    adam.step();
    CHECK(p.value(0, 0) == doctest::Approx(0.99).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(1.01).epsilon(1e-6));
    CHECK(p.value(0, 2) == 1.0);
    CHECK(p.grad == DenseMatrix(1, 3));
    CHECK(adam.steps() == 1);
}

TEST_CASE("adam on x squared matches a scalar simulation and shrinks |x|") {
    Parameter p("x", DenseMatrix(1, 1, 1.0));
    Adam adam({&p}, AdamConfig{0.1});
    double x = 1.0, m = 0.0, v = 0.0;
    double prev = 1.0;
    for (int t = 1; t <= 100; ++t) {
        p.grad(0, 0) = 2.0 * p.value(0, 0);
        adam.step();
        const double g = 2.0 * x;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
        CHECK(p.value(0, 0) == doctest::Approx(x).epsilon(1e-12));
        if (t > 1 && t <= 8) CHECK(std::abs(p.value(0, 0)) < prev);
        prev = std::abs(p.value(0, 0));
    }
    CHECK(std::abs(p.value(0, 0)) < 0.5);
}

TEST_CASE("adam skips frozen parameters") {
    Parameter p("p", DenseMatrix(1, 1, 2.0), false);
    p.grad(0, 0) = 1.0;
    Adam adam({&p});
    adam.step();
    CHECK(p.value(0, 0) == 2.0);
}
