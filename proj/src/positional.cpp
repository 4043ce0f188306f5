#include "pgtr/positional.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pgtr/error.hpp"
#include "pgtr/pagerank.hpp"

namespace pgtr {

namespace {

constexpr double kTrivialEigenvalue = 1e-8;

DenseMatrix xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) v = u(rng);
    return m;
}

}  // namespace

DenseMatrix laplacian_encoding(const CsrMatrix& adjacency, std::size_t count, const EigenOptions& opts) {
    const std::size_t n = adjacency.rows;
    const auto cc = count_components(adjacency);
    const std::size_t trivial = cc.components - cc.isolated;
    const std::size_t request = count + trivial;
    if (request > n)
        throw Error("spectral encoding needs " + std::to_string(count) + " non-trivial eigenpairs but the " +
                    std::to_string(n) + "-node graph has at most " + std::to_string(n - trivial) +
                    " (deficit " + std::to_string(request - n) + ")");
    const EigenPairs pairs = symmetric_eigs_smallest(normalized_laplacian(adjacency), request, opts);
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < pairs.values.size() && keep.size() < count; ++j)
        if (pairs.values[j] >= kTrivialEigenvalue) keep.push_back(j);
    if (keep.size() < count)
        throw Error("spectral encoding: only " + std::to_string(keep.size()) + " non-trivial eigenpairs of " +
                    std::to_string(count) + " requested");
    DenseMatrix out(n, count);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < count; ++c) out(r, c) = pairs.vectors(r, keep[c]);
    return out;
}

SpectralEncoding spectral_encoding(const BipartiteGraph& g, std::size_t hc, double lambda_c, const EigenOptions& opts) {
    if (hc == 0) throw Error("spectral encoding dimension must be positive");
    if (g.n_edges() == 0) throw Error("spectral encoding: graph has no edges");
    if (!(lambda_c >= 0.0 && lambda_c <= 1.0)) throw Error("lambda_c must lie in [0, 1]");

    DenseMatrix full;
    if (lambda_c < 1.0) full = laplacian_encoding(g.adjacency(), hc, opts);
    if (lambda_c == 0.0) return {std::move(full)};

    const CsrMatrix user_side = one_sided_adjacency(g, Side::user);
    const CsrMatrix item_side = one_sided_adjacency(g, Side::item);
    if (user_side.nnz() == 0 || item_side.nnz() == 0)
        throw Error("spectral encoding: one-sided graph has no edges but lambda_c > 0");
    const DenseMatrix users = laplacian_encoding(user_side, hc, opts);
    const DenseMatrix items = laplacian_encoding(item_side, hc, opts);
    DenseMatrix sided(g.n_nodes(), hc);
    std::copy(users.data(), users.data() + users.size(), sided.data());
    std::copy(items.data(), items.data() + items.size(), sided.data() + users.size());
    if (lambda_c == 1.0) return {std::move(sided)};

    for (std::size_t k = 0; k < sided.size(); ++k)
        sided.data()[k] = (1.0 - lambda_c) * full.data()[k] + lambda_c * sided.data()[k];
    return {std::move(sided)};
}

GroupAssignment group_by_rank(const std::vector<double>& values, std::size_t n_groups, Side side) {
    const std::size_t n = values.size();
    if (n_groups == 0 || n_groups > n)
        throw Error("group_by_rank: need 1 <= n_groups <= " + std::to_string(n) + ", got " + std::to_string(n_groups));
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return values[a] < values[b]; });

    GroupAssignment out{side, n_groups, std::vector<Index>(n)};
    const std::size_t base = n / n_groups;
    const std::size_t extra = n % n_groups;
    std::size_t pos = 0;
    for (std::size_t grp = 0; grp < n_groups; ++grp) {
        const std::size_t size = base + (grp < extra ? 1 : 0);
        for (std::size_t k = 0; k < size; ++k) out.group_of[order[pos++]] = static_cast<Index>(grp);
    }
    return out;
}

DenseMatrix init_group_table(std::size_t rows, std::size_t h, std::mt19937_64& rng) {
    const double a = 0.1 / std::sqrt(static_cast<double>(h));
    std::uniform_real_distribution<double> u(-a, a);
    DenseMatrix m(rows, h);
    for (double& v : m.values()) v = u(rng);
    return m;
}

GroupEncoding degree_encoding(const BipartiteGraph& g, std::size_t nd, std::size_t hd, std::mt19937_64& rng) {
    GroupEncoding e;
    e.users = group_by_rank(g.degrees(Side::user), nd, Side::user);
    e.items = group_by_rank(g.degrees(Side::item), nd, Side::item);
    e.user_table = Parameter("degree_user", init_group_table(nd, hd, rng));
    e.item_table = Parameter("degree_item", init_group_table(nd, hd, rng));
    return e;
}

GroupEncoding pagerank_encoding(const BipartiteGraph& g, std::size_t nr, std::size_t hr, std::mt19937_64& rng) {
    const std::vector<double> scores = pagerank(g);
    const auto split = scores.begin() + static_cast<std::ptrdiff_t>(g.n_users());
    GroupEncoding e;
    e.users = group_by_rank(std::vector<double>(scores.begin(), split), nr, Side::user);
    e.items = group_by_rank(std::vector<double>(split, scores.end()), nr, Side::item);
    e.user_table = Parameter("pagerank_user", init_group_table(nr, hr, rng));
    e.item_table = Parameter("pagerank_item", init_group_table(nr, hr, rng));
    return e;
}

PositionalEncodingSet PositionalEncodingSet::build(const BipartiteGraph& g, const EncodingDims& dims,
                                                   const EncodingSwitches& on, std::uint64_t seed,
                                                   const EigenOptions& eig) {
    if (dims.d == 0 || dims.hc == 0 || dims.hd == 0 || dims.hr == 0 || dims.hy == 0)
        throw Error("encoding dimensions must be positive");
    PositionalEncodingSet s;
    s.n_users_ = g.n_users();
    s.n_items_ = g.n_items();
    s.dims_ = dims;
    s.on_ = on;

    // Every table is initialized whether or not its term is enabled, so
    // ablation variants share one random stream.
    std::mt19937_64 rng(seed);
    s.degree = degree_encoding(g, dims.nd, dims.hd, rng);
    s.pagerank = pagerank_encoding(g, dims.nr, dims.hr, rng);
    s.type_table = Parameter("type", init_group_table(2, dims.hy, rng));
    s.projection.w_item = Parameter("w_item", xavier(dims.d, dims.d, rng));
    s.projection.w_user = Parameter("w_user", xavier(dims.d, dims.d, rng));
    s.projection.w_spectral = Parameter("w_spectral", xavier(dims.d, dims.hc, rng));
    s.projection.w_degree = Parameter("w_degree", xavier(dims.d, dims.hd, rng));
    s.projection.w_pagerank = Parameter("w_pagerank", xavier(dims.d, dims.hr, rng));
    s.projection.w_type = Parameter("w_type", xavier(dims.d, dims.hy, rng));

    if (on.spectral) s.spectral = spectral_encoding(g, dims.hc, dims.lambda_c, eig);
    else s.spectral.by_node = DenseMatrix(g.n_nodes(), dims.hc);
    return s;
}

Var PositionalEncodingSet::record(Tape& tape) {
    const std::size_t n_nodes = n_users_ + n_items_;
    if (!on_.any()) return tape.constant(DenseMatrix(n_nodes, dims_.d), "positions:off");

    auto side_inner = [&](Side side) {
        const bool users = side == Side::user;
        const std::size_t begin = users ? 0 : n_users_;
        const std::size_t count = users ? n_users_ : n_items_;
        std::vector<Var> terms;
        if (on_.spectral) {
            DenseMatrix block(count, dims_.hc);
            std::copy(spectral.by_node.row(begin).data(), spectral.by_node.row(begin).data() + block.size(),
                      block.data());
            terms.push_back(tape.matmul_nt(tape.constant(std::move(block), "spectral"),
                                           tape.parameter(projection.w_spectral)));
        }
        auto grouped = [&](GroupEncoding& enc, Parameter& w) {
            Parameter& table = users ? enc.user_table : enc.item_table;
            const auto& groups = users ? enc.users.group_of : enc.items.group_of;
            terms.push_back(tape.matmul_nt(tape.gather_rows(tape.parameter(table), groups), tape.parameter(w)));
        };
        if (on_.degree) grouped(degree, projection.w_degree);
        if (on_.pagerank) grouped(pagerank, projection.w_pagerank);
        if (on_.type) {
            std::vector<Index> rows(count, users ? 1 : 0);
            terms.push_back(
                tape.matmul_nt(tape.gather_rows(tape.parameter(type_table), std::move(rows)), tape.parameter(projection.w_type)));
        }
        Var inner = terms[0];
        for (std::size_t k = 1; k < terms.size(); ++k) inner = tape.add(inner, terms[k]);
        return tape.matmul_nt(inner, tape.parameter(users ? projection.w_user : projection.w_item));
    };
    return tape.concat_rows({side_inner(Side::user), side_inner(Side::item)});
}

DenseMatrix PositionalEncodingSet::positions() {
    Tape tape;
    return tape.value(record(tape));
}

std::vector<double> PositionalEncodingSet::node_position(Index node) const {
    if (node >= n_users_ + n_items_) throw Error("node_position: node out of range");
    const std::size_t d = dims_.d;
    std::vector<double> inner(d, 0.0), out(d, 0.0);
    if (!on_.any()) return out;
    const bool user = node < n_users_;
    const Index local = user ? node : node - static_cast<Index>(n_users_);
    auto add_term = [&](const DenseMatrix& w, std::span<const double> enc) {
        for (std::size_t r = 0; r < d; ++r)
            for (std::size_t c = 0; c < enc.size(); ++c) inner[r] += w(r, c) * enc[c];
    };
    if (on_.spectral) add_term(projection.w_spectral.value, spectral.by_node.row(node));
    if (on_.degree) {
        const auto& t = user ? degree.user_table.value : degree.item_table.value;
        add_term(projection.w_degree.value, t.row(user ? degree.users.group_of[local] : degree.items.group_of[local]));
    }
    if (on_.pagerank) {
        const auto& t = user ? pagerank.user_table.value : pagerank.item_table.value;
        add_term(projection.w_pagerank.value,
                 t.row(user ? pagerank.users.group_of[local] : pagerank.items.group_of[local]));
    }
    if (on_.type) add_term(projection.w_type.value, type_table.value.row(user ? 1 : 0));
    const DenseMatrix& ws = user ? projection.w_user.value : projection.w_item.value;
    for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) out[r] += ws(r, c) * inner[c];
    return out;
}

std::vector<Parameter*> PositionalEncodingSet::trainable_parameters() {
    std::vector<Parameter*> out;
    if (!on_.any()) return out;
    out.push_back(&projection.w_item);
    out.push_back(&projection.w_user);
    if (on_.spectral) out.push_back(&projection.w_spectral);
    if (on_.degree) {
        out.push_back(&degree.user_table);
        out.push_back(&degree.item_table);
        out.push_back(&projection.w_degree);
    }
    if (on_.pagerank) {
        out.push_back(&pagerank.user_table);
        out.push_back(&pagerank.item_table);
        out.push_back(&projection.w_pagerank);
    }
    if (on_.type) {
        out.push_back(&type_table);
        out.push_back(&projection.w_type);
    }
    return out;
}

std::vector<Parameter*> PositionalEncodingSet::all_parameters() {
    return {&degree.user_table,     &degree.item_table,      &pagerank.user_table,     &pagerank.item_table,
            &type_table,            &projection.w_item,      &projection.w_user,       &projection.w_spectral,
            &projection.w_degree,   &projection.w_pagerank,  &projection.w_type};
}

}  // namespace pgtr
