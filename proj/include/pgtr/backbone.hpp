#pragma once

// Local GCN propagation over the symmetric-normalized bipartite adjacency and
// the mean readout over layer outputs.

#include <memory>
#include <string>
#include <vector>

#include "pgtr/autodiff.hpp"
#include "pgtr/data.hpp"

namespace pgtr {

enum class BackboneVariant { lightgcn, transform_gcn };

std::string to_string(BackboneVariant v);
BackboneVariant backbone_from_string(const std::string& s);

inline constexpr double kLeakySlope = 0.2;

/// D^{-1/2} A D^{-1/2} over the N + M nodes, without self loops.
struct NormalizedAdjacency {
    std::shared_ptr<const CsrMatrix> matrix;
    std::size_t isolated = 0;  // nodes whose rows propagate to zero

    static NormalizedAdjacency from_graph(const BipartiteGraph& g);
    SparseOperand operand() const { return {matrix, nullptr}; }
};

/// lightgcn: adj * h. transform_gcn: leaky_relu(adj * h * W, 0.2).
Var propagate_layer(Tape& tape, Var h, const NormalizedAdjacency& adj, BackboneVariant variant,
                    Parameter* transform = nullptr);
DenseMatrix propagate_layer(const DenseMatrix& h, const NormalizedAdjacency& adj, BackboneVariant variant,
                            const DenseMatrix* transform = nullptr);

/// Mean over layers 0..L.
Var readout(Tape& tape, const std::vector<Var>& layers);
DenseMatrix readout(const std::vector<DenseMatrix>& layers);

/// The bare backbone on an embedding table: L propagations and a mean readout.
DenseMatrix backbone_forward(const DenseMatrix& embeddings, const NormalizedAdjacency& adj, BackboneVariant variant,
                             std::size_t layers, const std::vector<const DenseMatrix*>& transforms = {});

}  // namespace pgtr
