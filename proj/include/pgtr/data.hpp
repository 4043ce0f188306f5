#pragma once

// Interaction data: ingestion, the user-item bipartite graph, ratio splits and
// synthetic noise injection. Users and items live in separate index spaces
// [0, n_users) and [0, n_items); in node-indexed tables users come first and
// item i is node n_users + i.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "pgtr/sparse.hpp"

namespace pgtr {

using Index = std::uint32_t;

struct InteractionRecord {
    Index user = 0;
    Index item = 0;
    friend auto operator<=>(const InteractionRecord&, const InteractionRecord&) = default;
};

/// First-seen mapping between raw ids in an input file and contiguous indices.
struct IdRemap {
    std::vector<std::int64_t> raw_of_index;
    std::unordered_map<std::int64_t, Index> index_of_raw;

    Index intern(std::int64_t raw);
    std::size_t size() const { return raw_of_index.size(); }
};

class InteractionDataset {
public:
    InteractionDataset() = default;
    /// Validates ranges and collapses duplicate pairs, keeping first occurrences in order.
    InteractionDataset(std::size_t n_users, std::size_t n_items, std::vector<InteractionRecord> records);

    std::size_t n_users() const { return n_users_; }
    std::size_t n_items() const { return n_items_; }
    std::size_t n_nodes() const { return n_users_ + n_items_; }
    const std::vector<InteractionRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    /// Remap tables when loaded from a file; null for generated data.
    const std::shared_ptr<const IdRemap>& user_ids() const { return user_ids_; }
    const std::shared_ptr<const IdRemap>& item_ids() const { return item_ids_; }
    void set_remaps(std::shared_ptr<const IdRemap> users, std::shared_ptr<const IdRemap> items);

    /// Per-user sorted item lists.
    std::vector<std::vector<Index>> items_by_user() const;

private:
    std::size_t n_users_ = 0;
    std::size_t n_items_ = 0;
    std::vector<InteractionRecord> records_;
    std::shared_ptr<const IdRemap> user_ids_;
    std::shared_ptr<const IdRemap> item_ids_;
};

/// Parses one interaction per line: two integer tokens separated by whitespace
/// and/or commas. Blank lines and lines starting with '#' are skipped.
InteractionDataset load_interactions(const std::filesystem::path& path);
InteractionDataset parse_interactions(std::string_view text);

/// Writes records as "user item" index pairs.
void write_interactions(const std::filesystem::path& path, const InteractionDataset& ds);
/// Writes "raw_id index" pairs, one per line.
void write_remap(const std::filesystem::path& path, const IdRemap& remap);

enum class Side { user, item };

class BipartiteGraph {
public:
    explicit BipartiteGraph(const InteractionDataset& ds);

    std::size_t n_users() const { return n_users_; }
    std::size_t n_items() const { return n_items_; }
    std::size_t n_nodes() const { return n_users_ + n_items_; }
    std::size_t n_edges() const { return user_nbrs_.size(); }

    std::span<const Index> items_of(Index user) const {
        return {user_nbrs_.data() + user_ptr_[user], user_ptr_[user + 1] - user_ptr_[user]};
    }
    std::span<const Index> users_of(Index item) const {
        return {item_nbrs_.data() + item_ptr_[item], item_ptr_[item + 1] - item_ptr_[item]};
    }
    std::size_t user_degree(Index u) const { return user_ptr_[u + 1] - user_ptr_[u]; }
    std::size_t item_degree(Index i) const { return item_ptr_[i + 1] - item_ptr_[i]; }
    std::vector<double> degrees(Side side) const;
    bool has_edge(Index user, Index item) const;

    /// Binary symmetric (N+M) x (N+M) adjacency with users first.
    CsrMatrix adjacency() const;

private:
    std::size_t n_users_;
    std::size_t n_items_;
    std::vector<std::size_t> user_ptr_;
    std::vector<Index> user_nbrs_;
    std::vector<std::size_t> item_ptr_;
    std::vector<Index> item_nbrs_;
};

inline BipartiteGraph build_graph(const InteractionDataset& ds) { return BipartiteGraph(ds); }

/// Binary adjacency among the nodes of one side: (a, b) = 1 iff a != b and they share a neighbor.
CsrMatrix one_sided_adjacency(const BipartiteGraph& g, Side side);

/// Number of connected components of a square symmetric pattern, and how many have no edges.
struct ComponentCount {
    std::size_t components = 0;
    std::size_t isolated = 0;
};
ComponentCount count_components(const CsrMatrix& adjacency);

struct SplitSpec {
    double train_fraction = 0.2;
    double val_fraction_within_train = 0.2;
    std::uint64_t seed = 0;
};

struct DataSplit {
    InteractionDataset fit;
    InteractionDataset validation;
    InteractionDataset test;
};

/// Per-user split. Each user's records are shuffled; round(train_fraction * k)
/// (at least 1) go to the training pool, the rest to test. Within the pool,
/// round(val_fraction * pool) go to validation while keeping at least one fit record.
DataSplit split_by_ratio(const InteractionDataset& ds, const SplitSpec& spec);

struct NoiseSpec {
    double proportion = 0.1;
    std::uint64_t seed = 0;
};

struct NoiseResult {
    InteractionDataset dataset;
    std::size_t injected = 0;
    /// Users that received fewer noisy items than requested for lack of candidates.
    std::size_t short_users = 0;
};

/// Adds round(proportion * k) uniformly sampled items to each user with k
/// training records, drawn from items the user never interacted with in `full`.
NoiseResult inject_noise(const InteractionDataset& train, const InteractionDataset& full, const NoiseSpec& spec);

/// Clustered synthetic interactions. Users and items are assigned round-robin to
/// `clusters`; each user draws `per_user` distinct items, each from its own
/// cluster with probability `in_cluster`, else from all items. Item draws are
/// weighted by (rank + 1)^-popularity_skew with a random rank per item.
struct SyntheticSpec {
    std::size_t n_users = 200;
    std::size_t n_items = 300;
    std::size_t clusters = 4;
    std::size_t per_user = 20;
    double in_cluster = 0.8;
    double popularity_skew = 0.5;
    std::uint64_t seed = 0;
};
InteractionDataset generate_clustered(const SyntheticSpec& spec);

}  // namespace pgtr
