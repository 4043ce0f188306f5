#include "pgtr/backbone.hpp"

#include "pgtr/error.hpp"
#include "pgtr/kernels.hpp"

namespace pgtr {

std::string to_string(BackboneVariant v) { return v == BackboneVariant::lightgcn ? "lightgcn" : "transform-gcn"; }

BackboneVariant backbone_from_string(const std::string& s) {
    if (s == "lightgcn") return BackboneVariant::lightgcn;
    if (s == "transform-gcn") return BackboneVariant::transform_gcn;
    throw Error("unknown backbone '" + s + "' (expected lightgcn or transform-gcn)");
}

NormalizedAdjacency NormalizedAdjacency::from_graph(const BipartiteGraph& g) {
    NormalizedAdjacency n;
    CsrMatrix a = g.adjacency();
    for (std::size_t r = 0; r < a.rows; ++r)
        if (a.row_length(r) == 0) ++n.isolated;
    n.matrix = std::make_shared<const CsrMatrix>(normalized_adjacency(a));
    return n;
}

Var propagate_layer(Tape& tape, Var h, const NormalizedAdjacency& adj, BackboneVariant variant, Parameter* transform) {
    Var agg = tape.spmm(adj.operand(), h);
    if (variant == BackboneVariant::lightgcn) return agg;
    if (!transform) throw Error("transform-gcn propagation needs a layer transform");
    return tape.leaky_relu(tape.matmul(agg, tape.parameter(*transform)), kLeakySlope);
}

DenseMatrix propagate_layer(const DenseMatrix& h, const NormalizedAdjacency& adj, BackboneVariant variant,
                            const DenseMatrix* transform) {
    DenseMatrix agg = kernels::spmm(*adj.matrix, h);
    if (variant == BackboneVariant::lightgcn) return agg;
    if (!transform) throw Error("transform-gcn propagation needs a layer transform");
    DenseMatrix out = kernels::matmul(agg, *transform);
    for (double& v : out.values()) v = v > 0.0 ? v : kLeakySlope * v;
    return out;
}

Var readout(Tape& tape, const std::vector<Var>& layers) { return tape.mean(layers); }

DenseMatrix readout(const std::vector<DenseMatrix>& layers) {
    if (layers.empty()) throw Error("readout: no layers");
    DenseMatrix out = layers[0];
    for (std::size_t l = 1; l < layers.size(); ++l) {
        if (!layers[l].same_shape(out)) throw Error("readout: layer shapes differ");
        for (std::size_t k = 0; k < out.size(); ++k) out.data()[k] += layers[l].data()[k];
    }
    const double w = 1.0 / static_cast<double>(layers.size());
    for (double& v : out.values()) v *= w;
    return out;
}

DenseMatrix backbone_forward(const DenseMatrix& embeddings, const NormalizedAdjacency& adj, BackboneVariant variant,
                             std::size_t layers, const std::vector<const DenseMatrix*>& transforms) {
    std::vector<DenseMatrix> outs{embeddings};
    for (std::size_t l = 0; l < layers; ++l)
        outs.push_back(propagate_layer(outs.back(), adj, variant, l < transforms.size() ? transforms[l] : nullptr));
    return readout(outs);
}

}  // namespace pgtr
