#pragma once

// Node positional encodings on the user-item graph: spectral (Laplacian
// eigenvectors of the bipartite graph and of the one-sided user/item graphs),
// degree groups, PageRank groups and node type, projected into the embedding
// space per node side.

#include <cstdint>
#include <random>
#include <vector>

#include "pgtr/autodiff.hpp"
#include "pgtr/data.hpp"
#include "pgtr/eigensolver.hpp"

namespace pgtr {

struct EncodingDims {
    std::size_t d = 32;
    std::size_t hc = 50;
    std::size_t hd = 4;
    std::size_t hr = 4;
    std::size_t hy = 4;
    std::size_t nd = 10;
    std::size_t nr = 10;
    double lambda_c = 0.0;
};

/// Which encoding terms contribute to a node's position.
struct EncodingSwitches {
    bool spectral = true;
    bool degree = true;
    bool pagerank = true;
    bool type = true;
    bool any() const { return spectral || degree || pagerank || type; }
    friend bool operator==(const EncodingSwitches&, const EncodingSwitches&) = default;
};

/// Untrainable Laplacian encoding. Stored node-major: row j is node j's
/// H_C-vector (users first), i.e. the transpose of the H_C x (N+M) layout.
struct SpectralEncoding {
    DenseMatrix by_node;
    std::size_t dims() const { return by_node.cols(); }
};

/// Eigenvectors of the `count` smallest eigenvalues >= 1e-8 of the normalized
/// Laplacian of `adjacency`, as an n x count matrix.
DenseMatrix laplacian_encoding(const CsrMatrix& adjacency, std::size_t count, const EigenOptions& opts = {});

/// (1 - lambda_c) * P^{C0} + lambda_c * P^{C1}, where P^{C0} comes from the full
/// bipartite graph and P^{C1} stacks the user-side and item-side encodings.
SpectralEncoding spectral_encoding(const BipartiteGraph& g, std::size_t hc, double lambda_c,
                                   const EigenOptions& opts = {});

struct GroupAssignment {
    Side side = Side::user;
    std::size_t n_groups = 1;
    std::vector<Index> group_of;
};

/// Stable sort by (value, index) ascending, then cut into n_groups contiguous
/// blocks; the first (count mod n_groups) blocks are one larger.
GroupAssignment group_by_rank(const std::vector<double>& values, std::size_t n_groups, Side side = Side::user);

struct GroupEncoding {
    GroupAssignment users;
    GroupAssignment items;
    Parameter user_table;  // n_groups x H
    Parameter item_table;
};

/// Uniform in [-0.1/sqrt(H), 0.1/sqrt(H)].
DenseMatrix init_group_table(std::size_t rows, std::size_t h, std::mt19937_64& rng);

GroupEncoding degree_encoding(const BipartiteGraph& g, std::size_t nd, std::size_t hd, std::mt19937_64& rng);
GroupEncoding pagerank_encoding(const BipartiteGraph& g, std::size_t nr, std::size_t hr, std::mt19937_64& rng);

struct PositionalProjection {
    Parameter w_item;  // d x d
    Parameter w_user;  // d x d
    Parameter w_spectral;  // d x H_C
    Parameter w_degree;    // d x H_D
    Parameter w_pagerank;  // d x H_R
    Parameter w_type;      // d x H_Y
};

class PositionalEncodingSet {
public:
    PositionalEncodingSet() = default;
    static PositionalEncodingSet build(const BipartiteGraph& g, const EncodingDims& dims,
                                       const EncodingSwitches& on, std::uint64_t seed,
                                       const EigenOptions& eig = {});

    std::size_t n_users() const { return n_users_; }
    std::size_t n_items() const { return n_items_; }
    const EncodingDims& dims() const { return dims_; }
    const EncodingSwitches& switches() const { return on_; }

    /// The (N+M) x d matrix of P_j rows recorded on `tape`.
    Var record(Tape& tape);
    /// P without recording gradients.
    DenseMatrix positions();
    /// P_j for one node.
    std::vector<double> node_position(Index node) const;

    /// Trainable tables and projections of the enabled terms.
    std::vector<Parameter*> trainable_parameters();
    /// Every table and projection, enabled or not, for checkpoints.
    std::vector<Parameter*> all_parameters();

    SpectralEncoding spectral;
    GroupEncoding degree;
    GroupEncoding pagerank;
    Parameter type_table;  // 2 x H_Y; row 0 items, row 1 users
    PositionalProjection projection;

private:
    std::size_t n_users_ = 0;
    std::size_t n_items_ = 0;
    EncodingDims dims_;
    EncodingSwitches on_;
};

}  // namespace pgtr
