#include "pgtr/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "pgtr/adam.hpp"
#include "pgtr/error.hpp"
#include "pgtr/kernels.hpp"

namespace pgtr {

void TrainConfig::validate() const {
    if (batch_size < 2) throw Error("batch_size must be at least 2");
    if (patience < 1) throw Error("patience must be at least 1");
    if (!(lr >= 0.0)) throw Error("learning rate must be non-negative");
    if (k == 0) throw Error("k must be positive");
}

std::vector<double> tau_grid() { return {0.02, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2}; }

double ssm_loss(double positive, std::span<const double> negatives) {
    if (negatives.empty()) throw Error("ssm_loss: at least one negative is required");
    if (!std::isfinite(positive)) throw NumericError("ssm_loss: non-finite positive score");
    double peak = positive;
    for (double s : negatives) {
        if (!std::isfinite(s)) throw NumericError("ssm_loss: non-finite negative score");
        peak = std::max(peak, s);
    }
    double total = std::exp(positive - peak);
    for (double s : negatives) total += std::exp(s - peak);
    return peak + std::log(total) - positive;
}

BatchNegatives in_batch_negatives(std::span<const InteractionRecord> batch,
                                  const std::vector<std::vector<Index>>& train_items) {
    if (batch.size() < 2) throw Error("in_batch_negatives: batch needs at least two pairs");
    BatchNegatives out;
    out.items.resize(batch.size());
    out.columns.resize(batch.size());
    out.skipped.assign(batch.size(), 0);
    for (std::size_t p = 0; p < batch.size(); ++p) {
        const auto& seen = train_items[batch[p].user];
        auto& items = out.items[p];
        for (std::size_t q = 0; q < batch.size(); ++q) {
            if (q == p) continue;
            const Index item = batch[q].item;
            if (std::binary_search(seen.begin(), seen.end(), item)) continue;
            if (std::find(items.begin(), items.end(), item) != items.end()) continue;
            items.push_back(item);
            out.columns[p].push_back(q);
        }
        if (items.empty()) {
            out.skipped[p] = 1;
            ++out.skipped_count;
        }
    }
    return out;
}

std::pair<double, std::size_t> batch_loss_and_gradients(PGTRModel& model, std::span<const InteractionRecord> batch,
                                                        const std::vector<std::vector<Index>>& train_items,
                                                        bool backward) {
    const BatchNegatives neg = in_batch_negatives(batch, train_items);
    const std::size_t b = batch.size();
    if (neg.skipped_count == b) return {0.0, b};

    std::vector<std::vector<char>> allowed(b, std::vector<char>(b, 0));
    std::vector<char> include(b, 0);
    for (std::size_t p = 0; p < b; ++p) {
        include[p] = neg.skipped[p] ? 0 : 1;
        for (std::size_t q : neg.columns[p]) allowed[p][q] = 1;
    }
    std::vector<Index> user_rows(b), item_rows(b);
    for (std::size_t p = 0; p < b; ++p) {
        user_rows[p] = batch[p].user;
        item_rows[p] = static_cast<Index>(model.n_users() + batch[p].item);
    }

    Tape tape;
    Var h = model.forward(tape);
    Var su = tape.row_l2_normalize(tape.gather_rows(h, std::move(user_rows)));
    Var si = tape.row_l2_normalize(tape.gather_rows(h, std::move(item_rows)));
    Var logits = tape.scale(tape.matmul_nt(su, si), 1.0 / model.config().tau);
    Var loss = tape.masked_softmax_loss(logits, allowed, include);
    if (backward) tape.backward(loss);
    return {tape.scalar(loss), neg.skipped_count};
}

RankingMetrics evaluate_table(const DenseMatrix& final_table, std::size_t n_users, double tau,
                              const std::vector<const InteractionDataset*>& exclude, const InteractionDataset& test,
                              std::size_t k) {
    const std::size_t n_items = final_table.rows() - n_users;
    const DenseMatrix s = l2_normalize_rows(final_table);
    DenseMatrix users(n_users, s.cols()), items(n_items, s.cols());
    std::copy(s.data(), s.data() + users.size(), users.data());
    std::copy(s.data() + users.size(), s.data() + s.size(), items.data());
    DenseMatrix scores = kernels::matmul_nt(users, items);
    for (double& v : scores.values()) v /= tau;
    return evaluate_scores(scores.values(), n_users, n_items, exclude, test, k);
}

RankingMetrics evaluate(PGTRModel& model, const std::vector<const InteractionDataset*>& exclude,
                        const InteractionDataset& test, std::size_t k) {
    return evaluate_table(model.forward(), model.n_users(), model.config().tau, exclude, test, k);
}

TrainResult train(PGTRModel& model, const DataSplit& split, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    if (split.fit.size() < 2) throw Error("train: need at least two training interactions");
    const auto train_items = split.fit.items_by_user();

    auto params = model.trainable_parameters();
    for (Parameter* p : params) p->zero_grad();
    Adam adam(params, AdamConfig{cfg.lr});

    auto snapshot = [&params] {
        std::vector<DenseMatrix> s;
        for (Parameter* p : params) s.push_back(p->value);
        return s;
    };
    auto restore = [&params](const std::vector<DenseMatrix>& s) {
        for (std::size_t k = 0; k < params.size(); ++k) params[k]->value = s[k];
    };

    TrainResult result;
    std::vector<DenseMatrix> best = snapshot();
    std::size_t stale = 0;
    std::vector<InteractionRecord> order = split.fit.records();
    std::mt19937_64 rng(derive_seed(cfg.seed, 7));

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t batches = 0;
        try {
            for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
                const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
                if (end - begin < 2) break;
                auto [loss, skipped] = batch_loss_and_gradients(
                    model, std::span<const InteractionRecord>(order).subspan(begin, end - begin), train_items);
                if (!std::isfinite(loss)) throw NumericError("training loss is not finite");
                result.skipped_pairs += skipped;
                loss_sum += loss;
                ++batches;
                adam.step();
            }
        } catch (const NumericError&) {
            result.diverged = true;
            break;
        }
        const RankingMetrics val = evaluate(model, {&split.fit}, split.validation, cfg.k);
        EpochRecord rec{epoch, batches ? loss_sum / double(batches) : 0.0, val.recall, val.ndcg,
                        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()};
        result.history.push_back(rec);
        if (on_epoch) on_epoch(rec);
        if (val.recall > result.best_val_recall) {
            result.best_val_recall = val.recall;
            result.best_epoch = epoch;
            best = snapshot();
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    restore(best);
    for (Parameter* p : params) p->zero_grad();
    return result;
}

}  // namespace pgtr
