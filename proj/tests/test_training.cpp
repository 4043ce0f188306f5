#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "pgtr/checkpoint.hpp"
#include "pgtr/error.hpp"
#include "pgtr/experiments.hpp"
#include "pgtr/metrics.hpp"
#include "pgtr/training.hpp"

using namespace pgtr;
namespace fs = std::filesystem;

namespace {

PGTRConfig small_model(std::uint64_t seed = 0) {
    PGTRConfig c;
    c.dims.d = 8;
    c.dims.hc = 4;
    c.dims.nd = 4;
    c.dims.nr = 4;
    c.features = 32;
    c.seed = seed;
    return c;
}

SyntheticSpec small_data(std::uint64_t seed = 0) {
    SyntheticSpec s;
    s.n_users = 40;
    s.n_items = 50;
    s.clusters = 3;
    s.per_user = 10;
    s.seed = seed;
    return s;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("pgtr_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("ssm loss examples") {
    const std::vector<double> negs{0.0, 0.5};
    CHECK(ssm_loss(1.0, negs) == doctest::Approx(std::log(1 + std::exp(-1.0) + std::exp(-0.5))).epsilon(1e-12));
    CHECK(ssm_loss(1.0, negs) == doctest::Approx(0.6802).epsilon(1e-4));
    for (std::size_t b : {2u, 7u, 64u}) {
        std::vector<double> same(b - 1, 0.37);
        CHECK(std::abs(ssm_loss(0.37, same) - std::log(double(b))) <= 1e-12);
    }
    CHECK(ssm_loss(800.0, std::vector<double>{-800.0}) < 1e-300);
    CHECK(ssm_loss(1.0, negs) > 0.0);
    CHECK_THROWS_AS(ssm_loss(NAN, negs), NumericError);
    CHECK_THROWS_AS(ssm_loss(0.0, std::vector<double>{INFINITY}), NumericError);
    CHECK_THROWS_AS(ssm_loss(0.0, std::vector<double>{}), Error);
}

TEST_CASE("masked softmax loss agrees with ssm_loss") {
    Tape t;
    DenseMatrix logits(3, 3, {1.0, 0.0, 0.5, 2.0, -1.0, 0.3, 0.1, 0.2, 0.3});
    std::vector<std::vector<char>> allowed{{0, 1, 1}, {1, 0, 0}, {0, 0, 0}};
    Var l = t.masked_softmax_loss(t.constant(logits), allowed, {1, 1, 0});
    const double want = (ssm_loss(1.0, std::vector<double>{0.0, 0.5}) + ssm_loss(-1.0, std::vector<double>{2.0})) / 2;
    CHECK(t.scalar(l) == doctest::Approx(want).epsilon(1e-14));
}

TEST_CASE("in-batch negatives") {
    std::vector<std::vector<Index>> train{{0}, {1}};
    std::vector<InteractionRecord> batch{{0, 0}, {1, 1}};
    auto n = in_batch_negatives(batch, train);
    CHECK(n.items[0] == std::vector<Index>{1});
    CHECK(n.items[1] == std::vector<Index>{0});
    CHECK(n.skipped_count == 0);

    std::vector<std::vector<Index>> cross{{0, 1}, {1}};
    auto m = in_batch_negatives(batch, cross);
    CHECK(m.items[0].empty());
    CHECK(m.skipped[0] == 1);
    CHECK(m.skipped_count == 1);

    CHECK_THROWS_AS(in_batch_negatives(std::vector<InteractionRecord>{{0, 0}}, train), Error);
}

TEST_CASE("in-batch negatives on random data are drawn from the batch and avoid training items") {
    auto ds = generate_clustered(small_data(3));
    auto items = ds.items_by_user();
    std::vector<InteractionRecord> batch(ds.records().begin(), ds.records().begin() + 64);
    std::mt19937_64 rng(1);
    std::shuffle(batch.begin(), batch.end(), rng);
    auto n = in_batch_negatives(batch, items);
    for (std::size_t p = 0; p < batch.size(); ++p) {
        const auto& seen = items[batch[p].user];
        std::set<Index> uniq(n.items[p].begin(), n.items[p].end());
        CHECK(uniq.size() == n.items[p].size());
        for (Index i : n.items[p]) {
            CHECK_FALSE(std::binary_search(seen.begin(), seen.end(), i));
            bool in_batch = false;
            for (std::size_t q = 0; q < batch.size(); ++q) in_batch |= (q != p && batch[q].item == i);
            CHECK(in_batch);
        }
    }
}

TEST_CASE("ranking metric examples") {
    std::vector<Index> ranked{4, 2, 9};
    CHECK(recall_at_k(ranked, std::vector<Index>{2, 7}) == 0.5);
    CHECK(ndcg_at_k(std::vector<Index>{3}, std::vector<Index>{3}, 20) == 1.0);
    CHECK(ndcg_at_k(std::vector<Index>{1, 3}, std::vector<Index>{3}, 20) == doctest::Approx(0.6309).epsilon(1e-4));
    std::vector<double> scores{0.5, 0.9, 0.9, 0.1};
    CHECK(top_k(scores, std::vector<char>{}, 3) == std::vector<Index>{1, 2, 0});
    CHECK(top_k(scores, std::vector<char>{0, 1, 0, 0}, 2) == std::vector<Index>{2, 0});
}

TEST_CASE("evaluation matches an exhaustive-sort oracle and masks seen items") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n_users = 5, n_items = 20 + trial;
        std::uniform_int_distribution<int> coarse(0, 4);  // coarse scores force ties
        std::vector<double> scores(n_users * n_items);
        for (double& s : scores) s = coarse(rng);
        auto train = oracle::random_dataset(n_users, n_items, 0.2, rng);
        auto test_all = oracle::random_dataset(n_users, n_items, 0.2, rng);
        std::vector<InteractionRecord> test_recs;
        auto train_items = train.items_by_user();
        for (auto r : test_all.records())
            if (!std::binary_search(train_items[r.user].begin(), train_items[r.user].end(), r.item))
                test_recs.push_back(r);
        InteractionDataset test(n_users, n_items, test_recs);
        auto got = evaluate_scores(scores, n_users, n_items, {&train}, test, 5);

        auto test_items = test.items_by_user();
        double rs = 0.0, ns = 0.0;
        std::size_t users = 0;
        for (Index u = 0; u < n_users; ++u) {
            if (test_items[u].empty()) continue;
            std::vector<char> masked(n_items, 0);
            for (Index i : train_items[u]) masked[i] = 1;
            std::vector<double> row(scores.begin() + u * n_items, scores.begin() + (u + 1) * n_items);
            auto b = oracle::brute_force_metrics(row, masked, test_items[u], 5);
            CHECK(got.per_user_recall[users] == b.recall);
            CHECK(got.per_user_ndcg[users] == b.ndcg);
            rs += b.recall;
            ns += b.ndcg;
            ++users;

            auto top = top_k(row, masked, 5);
            for (Index i : top) CHECK(masked[i] == 0);
        }
        CHECK(got.users.size() == users);
        CHECK(got.recall == doctest::Approx(rs / double(users)).epsilon(1e-15));
        CHECK(got.ndcg == doctest::Approx(ns / double(users)).epsilon(1e-15));
    }
}

TEST_CASE("adding a hit never lowers recall or ndcg") {
    std::vector<Index> rel{1, 5, 8};
    std::vector<Index> ranked{0, 2, 5, 3};
    const double r0 = recall_at_k(ranked, rel), n0 = ndcg_at_k(ranked, rel, 4);
    ranked[1] = 8;
    CHECK(recall_at_k(ranked, rel) >= r0);
    CHECK(ndcg_at_k(ranked, rel, 4) >= n0);
}

TEST_CASE("training with lr 0 keeps parameters and metric constant") {
    auto ds = generate_clustered(small_data(1));
    auto split = split_by_ratio(ds, {0.5, 0.2, 1});
    PGTRModel model(build_graph(split.fit), small_model());
    const auto before = model.embedding.value;
    TrainConfig tc;
    tc.lr = 0.0;
    tc.max_epochs = 3;
    tc.batch_size = 32;
    auto r = train(model, split, tc);
    CHECK(model.embedding.value == before);
    REQUIRE(r.history.size() == 3);
    CHECK(r.history[0].val_recall == r.history[2].val_recall);
}

TEST_CASE("training is deterministic and lowers the loss below the uniform baseline") {
    auto ds = generate_clustered(small_data(2));
    auto split = split_by_ratio(ds, {0.6, 0.2, 2});
    TrainConfig tc;
    tc.lr = 0.01;
    tc.max_epochs = 50;
    tc.patience = 50;
    tc.batch_size = 32;
    auto run = [&] {
        PGTRModel model(build_graph(split.fit), small_model(3));
        return train(model, split, tc);
    };
    auto a = run(), b = run();
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) CHECK(a.history[e].train_loss == b.history[e].train_loss);
    CHECK(a.history.back().train_loss < std::log(32.0));
    CHECK(a.history.back().train_loss < a.history.front().train_loss);
}

TEST_CASE("early stopping restores the best validation checkpoint") {
    auto ds = generate_clustered(small_data(4));
    auto split = split_by_ratio(ds, {0.6, 0.2, 4});
    PGTRModel model(build_graph(split.fit), small_model(4));
    TrainConfig tc;
    tc.lr = 0.05;
    tc.max_epochs = 30;
    tc.patience = 3;
    tc.batch_size = 32;
    auto r = train(model, split, tc);
    double best = -1.0;
    std::size_t best_epoch = 0;
    for (const auto& e : r.history)
        if (e.val_recall > best) {
            best = e.val_recall;
            best_epoch = e.epoch;
        }
    CHECK(r.best_epoch == best_epoch);
    CHECK(r.best_val_recall == best);
    CHECK(r.history.size() <= best_epoch + 3);
    auto again = evaluate(model, {&split.fit}, split.validation, tc.k);
    CHECK(again.recall == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("train config validation") {
    TrainConfig tc;
    tc.batch_size = 1;
    CHECK_THROWS_AS(tc.validate(), Error);
    tc = {};
    tc.patience = 0;
    CHECK_THROWS_AS(tc.validate(), Error);
    CHECK(tau_grid().front() == 0.02);
    CHECK(tau_grid().back() == 1.2);
}

TEST_CASE("checkpoint round trip restores the exact forward") {
    auto ds = generate_clustered(small_data(5));
    auto split = split_by_ratio(ds, {0.5, 0.2, 5});
    auto g = build_graph(split.fit);
    PGTRModel model(g, small_model(5));
    for (double& v : model.encodings.type_table.value.values()) v += 0.25;
    const auto dir = scratch("ckpt");
    write_checkpoint(dir / "m.ckpt", Checkpoint::capture(model));
    auto ck = read_checkpoint(dir / "m.ckpt");
    PGTRModel other(g, ck.config);
    CHECK(other.forward() != model.forward());
    restore_checkpoint(other, ck);
    CHECK(other.forward() == model.forward());

    auto wrong = small_model(6);
    PGTRModel mismatch(g, wrong);
    CHECK_THROWS_AS(restore_checkpoint(mismatch, ck), Error);

    std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
    CHECK_THROWS_AS(read_checkpoint(dir / "bad.ckpt"), Error);
    fs::remove_all(dir);
}

TEST_CASE("experiment spec json round trip rejects unknown fields") {
    ExperimentSpec s;
    s.command = Command::noise;
    s.model.lambda3 = 0.3;
    s.model.encodings.pagerank = false;
    s.model.backbone = BackboneVariant::transform_gcn;
    s.set_seed(17);
    s.out_dir = "x";
    const Json j = s;
    auto back = j.get<ExperimentSpec>();
    CHECK(back == s);
    CHECK(Json(back).dump() == j.dump());

    Json bad = j;
    bad["model"]["lamda3"] = 0.2;
    CHECK_THROWS_AS(bad.get<ExperimentSpec>(), Error);
    CHECK_THROWS_AS(command_from_string("fit"), Error);
}

TEST_CASE("sweep points carry the right labels") {
    ExperimentSpec s;
    s.command = Command::ablate;
    auto labels = [&] {
        std::vector<std::string> out;
        for (auto& [l, p] : sweep_points(s)) {
            out.push_back(l);
            CHECK(p.command == Command::train);
        }
        return out;
    };
    CHECK(labels() == std::vector<std::string>{"full", "-PL", "-DG", "-PR", "-TP", "-All"});
    auto pts = sweep_points(s);
    CHECK_FALSE(pts.back().second.model.encodings.any());
    s.command = Command::sparsity;
    CHECK(labels() == std::vector<std::string>{"0.2", "0.4", "0.6", "0.8"});
    s.command = Command::noise;
    CHECK(labels() == std::vector<std::string>{"0.0", "0.1", "0.2", "0.3"});
    s.command = Command::lambda3;
    CHECK(labels().size() == 11);
    CHECK(sweep_points(s)[10].second.model.lambda3 == 1.0);
}

namespace {

ExperimentSpec quick_spec(Command c, const fs::path& out) {
    ExperimentSpec s;
    s.command = c;
    s.synthetic = small_data();
    s.model = small_model();
    s.train.max_epochs = 2;
    s.train.batch_size = 64;
    s.set_seed(9);
    s.out_dir = out.string();
    return s;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream in(p);
    std::vector<std::string> out;
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

}  // namespace

TEST_CASE("sweeps emit one row per setting and reproduce exactly") {
    const auto dir = scratch("sweeps");
    auto noise = quick_spec(Command::noise, dir / "noise");
    auto rec = run_experiment(noise);
    REQUIRE(rec.rows.size() == 4);
    CHECK(*rec.rows[0].recall_drop_pct == 0.0);
    CHECK(*rec.rows[0].ndcg_drop_pct == 0.0);
    auto csv = lines_of(dir / "noise" / "metrics.csv");
    REQUIRE(csv.size() == 5);
    CHECK(csv[0].rfind("setting,recall@20,ndcg@20", 0) == 0);

    auto rec2 = run_experiment(noise);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(rec2.rows[k].recall == rec.rows[k].recall);
        CHECK(rec2.rows[k].ndcg == rec.rows[k].ndcg);
    }

    std::ifstream cfg(dir / "noise" / "config.json");
    CHECK(Json::parse(cfg).get<ExperimentSpec>() == noise);

    auto lam = quick_spec(Command::lambda3, dir / "lambda3");
    auto lrec = run_experiment(lam);
    REQUIRE(lrec.rows.size() == 11);
    auto plain = lam;
    plain.command = Command::train;
    plain.model.lambda3 = 0.0;
    plain.out_dir.clear();
    auto single = run_experiment(plain);
    CHECK(single.rows[0].recall == lrec.rows[0].recall);
    CHECK(single.rows[0].ndcg == lrec.rows[0].ndcg);

    auto sp = quick_spec(Command::sparsity, dir / "sparsity");
    CHECK(run_experiment(sp).rows.size() == 4);
    auto ab = quick_spec(Command::ablate, dir / "ablate");
    CHECK(run_experiment(ab).rows.size() == 6);
    fs::remove_all(dir);
}

TEST_CASE("train then evaluate from a checkpoint gives the same metrics") {
    const auto dir = scratch("train_eval");
    auto spec = quick_spec(Command::train, dir / "train");
    spec.checkpoint = (dir / "model.ckpt").string();
    auto trained = run_experiment(spec);
    CHECK(fs::exists(dir / "train" / "history.csv"));
    spec.command = Command::evaluate;
    spec.out_dir = (dir / "eval").string();
    auto evaluated = run_experiment(spec);
    CHECK(evaluated.rows[0].recall == trained.rows[0].recall);
    CHECK(evaluated.rows[0].ndcg == trained.rows[0].ndcg);
    fs::remove_all(dir);
}

TEST_CASE("encode writes matrices with headers and group pairs") {
    const auto dir = scratch("encode");
    auto spec = quick_spec(Command::encode, dir);
    export_encodings(spec);
    auto spectral = lines_of(dir / "spectral.txt");
    REQUIRE_FALSE(spectral.empty());
    CHECK(spectral[0] == "4 90 spectral");
    CHECK(spectral.size() == 5);
    auto groups = lines_of(dir / "degree_groups.txt");
    CHECK(groups.size() == 90);
    CHECK(lines_of(dir / "type_table.txt")[0] == "2 4 type_table");
    fs::remove_all(dir);
}
