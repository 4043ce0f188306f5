#pragma once

#include <cstdint>
#include <vector>

#include "pgtr/attention.hpp"
#include "pgtr/autodiff.hpp"
#include "pgtr/backbone.hpp"
#include "pgtr/positional.hpp"

namespace pgtr {

enum class AttentionKind { kernelized, exact };

struct PGTRConfig {
    EncodingDims dims;
    std::size_t layers = 2;
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    double lambda3 = 0.5;
    double tau = 0.2;
    std::size_t features = 256;
    EncodingSwitches encodings;
    BackboneVariant backbone = BackboneVariant::lightgcn;
    bool use_projections = false;
    /// `exact` swaps in quadratic softmax attention; meant for tiny graphs and tests.
    AttentionKind attention = AttentionKind::kernelized;
    std::uint64_t seed = 0;

    /// Throws pgtr::Error naming the first out-of-range field.
    void validate() const;
};

/// Independent seeds for the model's random streams.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

/// Forward pass:
///   h0 = E + lambda1 P
///   per layer: local = GCN(h), global = attention(local + lambda2 P),
///              h' = (1 - lambda3) local + lambda3 global
///   output = mean(h0 .. hL)
class PGTRModel {
public:
    PGTRModel(const BipartiteGraph& graph, PGTRConfig cfg, const EigenOptions& eig = {});

    const PGTRConfig& config() const { return cfg_; }
    std::size_t n_users() const { return n_users_; }
    std::size_t n_items() const { return n_items_; }
    std::size_t n_nodes() const { return n_users_ + n_items_; }
    const NormalizedAdjacency& adjacency() const { return adj_; }

    /// Final node table recorded on `tape`.
    Var forward(Tape& tape);
    /// Final node table without gradients.
    DenseMatrix forward();

    std::vector<Parameter*> trainable_parameters();
    /// All named parameter blocks, including the frozen spectral encoding.
    std::vector<Parameter*> checkpoint_parameters();

    /// Trainable scalars beyond the embedding table and backbone transforms.
    std::size_t count_added_parameters() const;

    Parameter embedding;  // (N + M) x d, users first
    PositionalEncodingSet encodings;
    std::vector<RandomFeatureMap> feature_maps;  // one per layer
    std::vector<Parameter> transforms;           // transform-gcn layer maps
    std::vector<Parameter> query, key, value;    // per-layer projections when enabled

private:
    PGTRConfig cfg_;
    std::size_t n_users_;
    std::size_t n_items_;
    NormalizedAdjacency adj_;
    Parameter spectral_block_;  // frozen copy of the spectral encoding for checkpoints

    Var attend(Tape& tape, Var input, std::size_t layer);
};

/// Closed form of the added-parameter count for all encodings on, projections off:
/// 2(N_d H_D + N_r H_R + H_Y) + d(H_C + H_D + H_R + H_Y + 2d).
std::size_t added_parameter_formula(const EncodingDims& dims);

/// Cosine similarity of rows u and n_users + i divided by tau.
double score(const DenseMatrix& final_table, std::size_t n_users, Index user, Index item, double tau);

/// Rows scaled to unit norm; throws NumericError naming a zero row.
DenseMatrix l2_normalize_rows(const DenseMatrix& table);

}  // namespace pgtr
