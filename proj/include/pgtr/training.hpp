#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "pgtr/data.hpp"
#include "pgtr/metrics.hpp"
#include "pgtr/model.hpp"

namespace pgtr {

struct TrainConfig {
    std::size_t batch_size = 2048;
    double lr = 1e-3;
    std::size_t max_epochs = 200;
    std::size_t patience = 20;
    std::size_t k = 20;
    std::uint64_t seed = 0;

    void validate() const;
};

/// The temperature grid searched for the softmax loss.
std::vector<double> tau_grid();

/// -log(exp(pos) / (exp(pos) + sum exp(neg))) via log-sum-exp.
double ssm_loss(double positive, std::span<const double> negatives);

struct BatchNegatives {
    /// Per pair, distinct negative items in order of first appearance.
    std::vector<std::vector<Index>> items;
    /// Per pair, batch columns whose items form the negative set (one column per item).
    std::vector<std::vector<std::size_t>> columns;
    std::vector<char> skipped;
    std::size_t skipped_count = 0;
};

/// Negatives of pair p are the positive items of the other pairs, minus items
/// the pair's user has in `train_items` (sorted per-user lists).
BatchNegatives in_batch_negatives(std::span<const InteractionRecord> batch,
                                  const std::vector<std::vector<Index>>& train_items);

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_recall = 0.0;
    double val_ndcg = 0.0;
    double seconds = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_val_recall = -1.0;
    std::size_t skipped_pairs = 0;
    bool diverged = false;
};

/// One batch: full forward and in-batch softmax loss; with `backward`, the
/// gradients are accumulated into the model's parameters. Returns the loss and
/// the number of pairs skipped.
std::pair<double, std::size_t> batch_loss_and_gradients(PGTRModel& model, std::span<const InteractionRecord> batch,
                                                        const std::vector<std::vector<Index>>& train_items,
                                                        bool backward = true);

/// Mini-batch training on `split.fit` with early stopping on validation
/// Recall@k. The model is left holding the best-validation parameters.
TrainResult train(PGTRModel& model, const DataSplit& split, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Scores every item for every user (cosine / tau) and ranks with the
/// `exclude` datasets masked.
RankingMetrics evaluate(PGTRModel& model, const std::vector<const InteractionDataset*>& exclude,
                        const InteractionDataset& test, std::size_t k = 20);
RankingMetrics evaluate_table(const DenseMatrix& final_table, std::size_t n_users, double tau,
                              const std::vector<const InteractionDataset*>& exclude, const InteractionDataset& test,
                              std::size_t k = 20);

}  // namespace pgtr
