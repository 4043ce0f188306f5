#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "oracles.hpp"
#include "pgtr/error.hpp"

using namespace pgtr;

TEST_CASE("parse collapses duplicates and remaps raw ids in first-seen order") {
    auto ds = parse_interactions("10 5\n10 5\n11 5\n");
    CHECK(ds.n_users() == 2);
    CHECK(ds.n_items() == 1);
    CHECK(ds.size() == 2);

    auto shuffled = parse_interactions("7 1\n3 1\n");
    REQUIRE(shuffled.user_ids());
    CHECK(shuffled.user_ids()->raw_of_index == std::vector<std::int64_t>{7, 3});
    CHECK(shuffled.records()[0].user == 0);
    CHECK(shuffled.records()[1].user == 1);
}

TEST_CASE("parse accepts commas, comments and blank lines") {
    auto ds = parse_interactions("# header\n\n1,2\n1, 3\n2\t2\n");
    CHECK(ds.n_users() == 2);
    CHECK(ds.n_items() == 2);
    CHECK(ds.size() == 3);
}

TEST_CASE("malformed lines report their line number") {
    try {
        parse_interactions("1 2\n1 2 3\n");
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_interactions("1 x\n"), ParseError);
    CHECK_THROWS_AS(parse_interactions("# nothing\n\n"), Error);
}

TEST_CASE("dataset rejects out-of-range indices") {
    CHECK_THROWS_AS(InteractionDataset(2, 2, {{2, 0}}), Error);
    CHECK_THROWS_AS(InteractionDataset(2, 2, {{0, 5}}), Error);
}

TEST_CASE("load and write round trip through files") {
    const auto dir = std::filesystem::temp_directory_path() / "pgtr_data_test";
    std::filesystem::create_directories(dir);
    {
        std::ofstream(dir / "in.txt") << "100 7\n200 7\n100 9\n";
    }
    auto ds = load_interactions(dir / "in.txt");
    write_interactions(dir / "out.txt", ds);
    write_remap(dir / "users.txt", *ds.user_ids());
    auto again = load_interactions(dir / "out.txt");
    CHECK(again.records() == ds.records());
    std::ifstream remap(dir / "users.txt");
    std::int64_t raw = 0;
    Index idx = 0;
    remap >> raw >> idx;
    CHECK(raw == 100);
    CHECK(idx == 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("graph degrees on small graphs") {
    BipartiteGraph one(InteractionDataset(1, 1, {{0, 0}}));
    CHECK(one.user_degree(0) == 1);
    CHECK(one.item_degree(0) == 1);

    BipartiteGraph k22(InteractionDataset(2, 2, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
    for (Index v : {0u, 1u}) {
        CHECK(k22.user_degree(v) == 2);
        CHECK(k22.item_degree(v) == 2);
    }
}

TEST_CASE("graph adjacency matches a dense oracle and is transpose consistent") {
    std::mt19937_64 rng(3);
    auto ds = oracle::random_dataset(50, 80, 0.05, rng);
    BipartiteGraph g(ds);
    CHECK(max_abs_diff(g.adjacency().to_dense(), oracle::dense_adjacency(ds)) == 0.0);
    for (Index u = 0; u < 50; ++u) {
        auto items = g.items_of(u);
        CHECK(std::is_sorted(items.begin(), items.end()));
        CHECK(std::adjacent_find(items.begin(), items.end()) == items.end());
        for (Index i : items) {
            auto users = g.users_of(i);
            CHECK(std::binary_search(users.begin(), users.end(), u));
        }
    }
    std::size_t back = 0;
    for (Index i = 0; i < 80; ++i) back += g.users_of(i).size();
    CHECK(back == g.n_edges());
}

TEST_CASE("one-sided adjacency") {
    BipartiteGraph single(InteractionDataset(1, 1, {{0, 0}}));
    CHECK(one_sided_adjacency(single, Side::user).nnz() == 0);

    BipartiteGraph shared(InteractionDataset(2, 1, {{0, 0}, {1, 0}}));
    auto us = one_sided_adjacency(shared, Side::user).to_dense();
    CHECK(us(0, 1) == 1.0);
    CHECK(us(1, 0) == 1.0);
    CHECK(us(0, 0) == 0.0);

    std::mt19937_64 rng(5);
    auto ds = oracle::random_dataset(30, 30, 0.08, rng);
    BipartiteGraph g(ds);
    DenseMatrix r(30, 30);
    for (const auto& rec : ds.records()) r(rec.user, rec.item) = 1.0;
    for (Side side : {Side::user, Side::item}) {
        DenseMatrix rr = side == Side::user ? r : transpose(r);
        DenseMatrix prod = oracle::dense_matmul(rr, transpose(rr));
        for (std::size_t a = 0; a < 30; ++a)
            for (std::size_t b = 0; b < 30; ++b) prod(a, b) = (a != b && prod(a, b) > 0) ? 1.0 : 0.0;
        auto got = one_sided_adjacency(g, side);
        CHECK(got.is_symmetric(0.0));
        CHECK(max_abs_diff(got.to_dense(), prod) == 0.0);
    }
}

TEST_CASE("component counting") {
    auto adj = BipartiteGraph(InteractionDataset(3, 3, {{0, 0}, {1, 1}})).adjacency();
    auto c = count_components(adj);
    CHECK(c.components == 4);
    CHECK(c.isolated == 2);
}

TEST_CASE("split by ratio follows the per-user rounding rule") {
    std::vector<InteractionRecord> recs;
    for (Index i = 0; i < 10; ++i) recs.push_back({0, i});
    InteractionDataset ds(1, 10, recs);
    auto s = split_by_ratio(ds, {0.2, 0.2, 1});
    CHECK(s.fit.size() == 2);
    CHECK(s.validation.size() == 0);
    CHECK(s.test.size() == 8);

    InteractionDataset single(1, 3, {{0, 1}});
    auto t = split_by_ratio(single, {0.2, 0.2, 1});
    CHECK(t.fit.size() == 1);
    CHECK(t.test.size() == 0);
}

TEST_CASE("split is a deterministic partition") {
    auto ds = generate_clustered({});
    auto a = split_by_ratio(ds, {0.2, 0.2, 42});
    auto b = split_by_ratio(ds, {0.2, 0.2, 42});
    CHECK(a.fit.records() == b.fit.records());
    CHECK(a.test.records() == b.test.records());

    std::multiset<InteractionRecord> all;
    for (auto* part : {&a.fit, &a.validation, &a.test}) all.insert(part->records().begin(), part->records().end());
    std::multiset<InteractionRecord> orig(ds.records().begin(), ds.records().end());
    CHECK(all == orig);
    CHECK(std::set<InteractionRecord>(all.begin(), all.end()).size() == all.size());

    const double n = double(ds.size());
    CHECK(double(a.fit.size()) / n == doctest::Approx(0.16).epsilon(0.05));
    CHECK(double(a.validation.size()) / n == doctest::Approx(0.04).epsilon(0.05));

    auto users_in_fit = a.fit.items_by_user();
    for (Index u = 0; u < ds.n_users(); ++u) CHECK_FALSE(users_in_fit[u].empty());
}

TEST_CASE("noise injection counts and purity") {
    std::vector<InteractionRecord> recs;
    for (Index i = 0; i < 10; ++i) recs.push_back({0, i});
    recs.push_back({1, 0});
    InteractionDataset full(2, 40, recs);
    auto r = inject_noise(full, full, {0.1, 9});
    CHECK(r.injected == 1);
    CHECK(r.dataset.size() == full.size() + 1);

    auto r3 = inject_noise(InteractionDataset(2, 40, {{1, 0}}), full, {0.3, 9});
    CHECK(r3.injected == 0);

    auto ds = generate_clustered({});
    auto split = split_by_ratio(ds, {0.8, 0.2, 4});
    auto noisy = inject_noise(split.fit, ds, {0.3, 4});
    std::set<InteractionRecord> orig(ds.records().begin(), ds.records().end());
    std::size_t added = 0;
    for (std::size_t k = split.fit.size(); k < noisy.dataset.size(); ++k) {
        CHECK(orig.count(noisy.dataset.records()[k]) == 0);
        ++added;
    }
    CHECK(added == noisy.injected);
    auto again = inject_noise(split.fit, ds, {0.3, 4});
    CHECK(again.dataset.records() == noisy.dataset.records());
}

TEST_CASE("noise skips users adjacent to every item") {
    InteractionDataset full(1, 2, {{0, 0}, {0, 1}});
    auto r = inject_noise(full, full, {0.5, 1});
    CHECK(r.injected == 0);
    CHECK(r.short_users == 1);
}
