#include "pgtr/model.hpp"

#include <cmath>
#include <random>

#include "pgtr/error.hpp"

namespace pgtr {

void PGTRConfig::validate() const {
    auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
    if (!in_unit(lambda1)) throw Error("lambda1 must lie in [0, 1]");
    if (!in_unit(lambda2)) throw Error("lambda2 must lie in [0, 1]");
    if (!in_unit(lambda3)) throw Error("lambda3 must lie in [0, 1]");
    if (!in_unit(dims.lambda_c)) throw Error("lambda_c must lie in [0, 1]");
    if (!(tau > 0.0)) throw Error("tau must be positive");
    if (layers == 0) throw Error("layers must be at least 1");
    if (features == 0) throw Error("feature count must be at least 1");
    if (dims.d == 0 || dims.hc == 0 || dims.hd == 0 || dims.hr == 0 || dims.hy == 0 || dims.nd == 0 || dims.nr == 0)
        throw Error("encoding dimensions and group counts must be positive");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    // splitmix64 finalizer
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

DenseMatrix xavier(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    DenseMatrix m(rows, cols);
    for (double& v : m.values()) v = u(rng);
    return m;
}

}  // namespace

PGTRModel::PGTRModel(const BipartiteGraph& graph, PGTRConfig cfg, const EigenOptions& eig)
    : cfg_(std::move(cfg)), n_users_(graph.n_users()), n_items_(graph.n_items()),
      adj_(NormalizedAdjacency::from_graph(graph)) {
    cfg_.validate();
    const std::size_t d = cfg_.dims.d;

    std::mt19937_64 rng(derive_seed(cfg_.seed, 0));
    std::normal_distribution<double> init(0.0, 0.1);
    DenseMatrix e(n_nodes(), d);
    for (double& v : e.values()) v = init(rng);
    embedding = Parameter("embedding", std::move(e));

    encodings = PositionalEncodingSet::build(graph, cfg_.dims, cfg_.encodings, derive_seed(cfg_.seed, 1), eig);
    spectral_block_ = Parameter("spectral", encodings.spectral.by_node, false);

    for (std::size_t l = 0; l < cfg_.layers; ++l)
        feature_maps.push_back(RandomFeatureMap::sample(d, cfg_.features, derive_seed(cfg_.seed, 100 + l)));

    std::mt19937_64 wrng(derive_seed(cfg_.seed, 2));
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        if (cfg_.backbone == BackboneVariant::transform_gcn)
            transforms.emplace_back("transform_" + std::to_string(l), xavier(d, d, wrng));
        if (cfg_.use_projections) {
            query.emplace_back("query_" + std::to_string(l), xavier(d, d, wrng));
            key.emplace_back("key_" + std::to_string(l), xavier(d, d, wrng));
            value.emplace_back("value_" + std::to_string(l), xavier(d, d, wrng));
        }
    }
}

Var PGTRModel::attend(Tape& tape, Var input, std::size_t layer) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.dims.d));
    Var q = input, k = input, v = input;
    if (cfg_.use_projections) {
        q = tape.matmul_nt(input, tape.parameter(query[layer]));
        k = tape.matmul_nt(input, tape.parameter(key[layer]));
        v = tape.matmul_nt(input, tape.parameter(value[layer]));
    }
    if (cfg_.attention == AttentionKind::exact) {
        Var qs = tape.scale(q, scale);
        Var ks = cfg_.use_projections ? tape.scale(k, scale) : qs;
        return tape.softmax_attention(qs, ks, v);
    }
    const DenseMatrix& dirs = feature_maps[layer].directions;
    Var phi_q = tape.random_features(q, dirs, scale);
    Var phi_k = cfg_.use_projections ? tape.random_features(k, dirs, scale) : phi_q;
    return tape.linear_attention(phi_q, phi_k, v);
}

Var PGTRModel::forward(Tape& tape) {
    const bool need_positions = cfg_.encodings.any() && (cfg_.lambda1 != 0.0 || cfg_.lambda2 != 0.0);
    Var positions = need_positions ? encodings.record(tape) : Var{};

    Var h = tape.parameter(embedding);
    if (need_positions && cfg_.lambda1 != 0.0) h = tape.add(h, tape.scale(positions, cfg_.lambda1));

    std::vector<Var> layers{h};
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
        Parameter* transform = cfg_.backbone == BackboneVariant::transform_gcn ? &transforms[l] : nullptr;
        Var local = propagate_layer(tape, layers.back(), adj_, cfg_.backbone, transform);
        if (cfg_.lambda3 == 0.0) {
            layers.push_back(local);
            continue;
        }
        Var input = local;
        if (need_positions && cfg_.lambda2 != 0.0) input = tape.add(local, tape.scale(positions, cfg_.lambda2));
        Var global = attend(tape, input, l);
        if (cfg_.lambda3 == 1.0) {
            layers.push_back(global);
            continue;
        }
        layers.push_back(tape.add(tape.scale(local, 1.0 - cfg_.lambda3), tape.scale(global, cfg_.lambda3)));
    }
    return readout(tape, layers);
}

DenseMatrix PGTRModel::forward() {
    Tape tape;
    return tape.value(forward(tape));
}

std::vector<Parameter*> PGTRModel::trainable_parameters() {
    std::vector<Parameter*> out{&embedding};
    for (Parameter* p : encodings.trainable_parameters()) out.push_back(p);
    for (auto& p : transforms) out.push_back(&p);
    for (auto* group : {&query, &key, &value})
        for (auto& p : *group) out.push_back(&p);
    return out;
}

std::vector<Parameter*> PGTRModel::checkpoint_parameters() {
    std::vector<Parameter*> out{&embedding, &spectral_block_};
    for (Parameter* p : encodings.all_parameters()) out.push_back(p);
    for (auto& p : transforms) out.push_back(&p);
    for (auto* group : {&query, &key, &value})
        for (auto& p : *group) out.push_back(&p);
    return out;
}

std::size_t PGTRModel::count_added_parameters() const {
    const auto& on = cfg_.encodings;
    const auto& dm = cfg_.dims;
    std::size_t n = 0;
    if (on.any()) n += 2 * dm.d * dm.d;
    if (on.spectral) n += dm.d * dm.hc;
    if (on.degree) n += 2 * dm.nd * dm.hd + dm.d * dm.hd;
    if (on.pagerank) n += 2 * dm.nr * dm.hr + dm.d * dm.hr;
    if (on.type) n += 2 * dm.hy + dm.d * dm.hy;
    if (cfg_.use_projections) n += 3 * cfg_.layers * dm.d * dm.d;
    return n;
}

std::size_t added_parameter_formula(const EncodingDims& m) {
    return 2 * (m.nd * m.hd + m.nr * m.hr + m.hy) + m.d * (m.hc + m.hd + m.hr + m.hy + 2 * m.d);
}

DenseMatrix l2_normalize_rows(const DenseMatrix& table) {
    DenseMatrix out = table;
    for (std::size_t r = 0; r < out.rows(); ++r) {
        double s = 0.0;
        for (double v : out.row(r)) s += v * v;
        if (s == 0.0) throw NumericError("zero-norm representation for node " + std::to_string(r));
        const double inv = 1.0 / std::sqrt(s);
        for (double& v : out.row(r)) v *= inv;
    }
    return out;
}

double score(const DenseMatrix& final_table, std::size_t n_users, Index user, Index item, double tau) {
    const std::size_t ur = user;
    const std::size_t ir = n_users + item;
    if (ur >= n_users || ir >= final_table.rows()) throw Error("score: node out of range");
    double uu = 0.0, ii = 0.0, ui = 0.0;
    for (std::size_t c = 0; c < final_table.cols(); ++c) {
        uu += final_table(ur, c) * final_table(ur, c);
        ii += final_table(ir, c) * final_table(ir, c);
        ui += final_table(ur, c) * final_table(ir, c);
    }
    if (uu == 0.0) throw NumericError("zero-norm representation for user " + std::to_string(user));
    if (ii == 0.0) throw NumericError("zero-norm representation for item " + std::to_string(item));
    return ui / (std::sqrt(uu) * std::sqrt(ii)) / tau;
}

}  // namespace pgtr
