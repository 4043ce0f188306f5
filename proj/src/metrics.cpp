#include "pgtr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pgtr/error.hpp"

namespace pgtr {

std::vector<Index> top_k(std::span<const double> scores, std::span<const char> masked, std::size_t k) {
    std::vector<Index> cand;
    cand.reserve(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i)
        if (masked.empty() || !masked[i]) cand.push_back(static_cast<Index>(i));
    const std::size_t take = std::min(k, cand.size());
    auto better = [&](Index a, Index b) { return scores[a] != scores[b] ? scores[a] > scores[b] : a < b; };
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end(), better);
    cand.resize(take);
    return cand;
}

double recall_at_k(std::span<const Index> ranked, std::span<const Index> relevant) {
    if (relevant.empty()) return 0.0;
    std::size_t hits = 0;
    for (Index i : ranked) hits += std::binary_search(relevant.begin(), relevant.end(), i) ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

double ndcg_at_k(std::span<const Index> ranked, std::span<const Index> relevant, std::size_t k) {
    if (relevant.empty()) return 0.0;
    double dcg = 0.0;
    for (std::size_t r = 0; r < ranked.size() && r < k; ++r)
        if (std::binary_search(relevant.begin(), relevant.end(), ranked[r])) dcg += 1.0 / std::log2(double(r) + 2.0);
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) idcg += 1.0 / std::log2(double(r) + 2.0);
    return dcg / idcg;
}

RankingMetrics evaluate_scores(std::span<const double> scores, std::size_t n_users, std::size_t n_items,
                               const std::vector<const InteractionDataset*>& exclude,
                               const InteractionDataset& test, std::size_t k) {
    if (scores.size() != n_users * n_items) throw Error("evaluate_scores: score matrix has the wrong size");
    const auto test_items = test.items_by_user();
    std::vector<std::vector<Index>> seen(n_users);
    for (const InteractionDataset* ds : exclude)
        for (const auto& r : ds->records()) seen[r.user].push_back(r.item);

    RankingMetrics m;
    m.k = k;
    for (Index u = 0; u < n_users; ++u)
        if (!test_items[u].empty()) m.users.push_back(u);
    m.per_user_recall.resize(m.users.size());
    m.per_user_ndcg.resize(m.users.size());

#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t e = 0; e < m.users.size(); ++e) {
        const Index u = m.users[e];
        std::vector<char> mask(n_items, 0);
        for (Index i : seen[u]) mask[i] = 1;
        const auto ranked = top_k(scores.subspan(std::size_t(u) * n_items, n_items), mask, k);
        m.per_user_recall[e] = recall_at_k(ranked, test_items[u]);
        m.per_user_ndcg[e] = ndcg_at_k(ranked, test_items[u], k);
    }
    if (!m.users.empty()) {
        const double n = static_cast<double>(m.users.size());
        m.recall = std::accumulate(m.per_user_recall.begin(), m.per_user_recall.end(), 0.0) / n;
        m.ndcg = std::accumulate(m.per_user_ndcg.begin(), m.per_user_ndcg.end(), 0.0) / n;
    }
    return m;
}

}  // namespace pgtr
