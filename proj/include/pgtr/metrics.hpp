#pragma once

#include <span>
#include <vector>

#include "pgtr/data.hpp"

namespace pgtr {

struct RankingMetrics {
    std::size_t k = 20;
    double recall = 0.0;
    double ndcg = 0.0;
    std::vector<Index> users;  // evaluated users (non-empty test sets)
    std::vector<double> per_user_recall;
    std::vector<double> per_user_ndcg;
};

/// Indices of the k highest scores among unmasked entries, ordered by score
/// descending with ascending index breaking ties. `masked` may be empty.
std::vector<Index> top_k(std::span<const double> scores, std::span<const char> masked, std::size_t k);

/// |ranked ∩ relevant| / |relevant|. `relevant` must be sorted.
double recall_at_k(std::span<const Index> ranked, std::span<const Index> relevant);
/// DCG of binary gains with 1/log2(rank + 1) discounts, over IDCG of
/// min(k, |relevant|) ideal hits. `relevant` must be sorted.
double ndcg_at_k(std::span<const Index> ranked, std::span<const Index> relevant, std::size_t k);

/// Ranks all items for every user with test items. `scores` is row-major
/// n_users x n_items. Items of each user in any `exclude` dataset are masked.
RankingMetrics evaluate_scores(std::span<const double> scores, std::size_t n_users, std::size_t n_items,
                               const std::vector<const InteractionDataset*>& exclude,
                               const InteractionDataset& test, std::size_t k = 20);

}  // namespace pgtr
