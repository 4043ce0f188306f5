#include "pgtr/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "pgtr/error.hpp"

namespace pgtr {

Index IdRemap::intern(std::int64_t raw) {
    auto [it, inserted] = index_of_raw.try_emplace(raw, static_cast<Index>(raw_of_index.size()));
    if (inserted) raw_of_index.push_back(raw);
    return it->second;
}

InteractionDataset::InteractionDataset(std::size_t n_users, std::size_t n_items,
                                       std::vector<InteractionRecord> records)
    : n_users_(n_users), n_items_(n_items) {
    std::set<std::pair<Index, Index>> seen;
    records_.reserve(records.size());
    for (const auto& r : records) {
        if (r.user >= n_users || r.item >= n_items)
            throw Error("interaction (" + std::to_string(r.user) + ", " + std::to_string(r.item) +
                        ") out of range");
        if (seen.emplace(r.user, r.item).second) records_.push_back(r);
    }
}

void InteractionDataset::set_remaps(std::shared_ptr<const IdRemap> users, std::shared_ptr<const IdRemap> items) {
    user_ids_ = std::move(users);
    item_ids_ = std::move(items);
}

std::vector<std::vector<Index>> InteractionDataset::items_by_user() const {
    std::vector<std::vector<Index>> out(n_users_);
    for (const auto& r : records_) out[r.user].push_back(r.item);
    for (auto& v : out) std::sort(v.begin(), v.end());
    return out;
}

namespace {

std::int64_t parse_token(std::string_view tok, std::size_t line) {
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw ParseError(line, "expected an integer id, got '" + std::string(tok) + "'");
    return v;
}

std::vector<std::string_view> split_fields(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    auto is_sep = [](char c) { return c == ',' || c == ' ' || c == '\t' || c == '\r'; };
    while (i < s.size()) {
        while (i < s.size() && is_sep(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_sep(s[j])) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace

InteractionDataset parse_interactions(std::string_view text) {
    auto users = std::make_shared<IdRemap>();
    auto items = std::make_shared<IdRemap>();
    std::vector<InteractionRecord> records;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t end = text.find('\n', pos);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;
        auto first = line.find_first_not_of(" \t\r");
        if (first == std::string_view::npos || line[first] == '#') continue;
        auto fields = split_fields(line);
        if (fields.size() != 2)
            throw ParseError(line_no, "expected 2 fields, got " + std::to_string(fields.size()));
        const auto raw_user = parse_token(fields[0], line_no);
        const auto raw_item = parse_token(fields[1], line_no);
        records.push_back({users->intern(raw_user), items->intern(raw_item)});
    }
    if (records.empty()) throw Error("dataset is empty");
    InteractionDataset ds(users->size(), items->size(), std::move(records));
    ds.set_remaps(std::move(users), std::move(items));
    return ds;
}

InteractionDataset load_interactions(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_interactions(buf.str());
}

void write_interactions(const std::filesystem::path& path, const InteractionDataset& ds) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : ds.records()) out << r.user << ' ' << r.item << '\n';
}

void write_remap(const std::filesystem::path& path, const IdRemap& remap) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (std::size_t i = 0; i < remap.size(); ++i) out << remap.raw_of_index[i] << ' ' << i << '\n';
}

BipartiteGraph::BipartiteGraph(const InteractionDataset& ds)
    : n_users_(ds.n_users()), n_items_(ds.n_items()) {
    user_ptr_.assign(n_users_ + 1, 0);
    item_ptr_.assign(n_items_ + 1, 0);
    for (const auto& r : ds.records()) {
        ++user_ptr_[r.user + 1];
        ++item_ptr_[r.item + 1];
    }
    std::partial_sum(user_ptr_.begin(), user_ptr_.end(), user_ptr_.begin());
    std::partial_sum(item_ptr_.begin(), item_ptr_.end(), item_ptr_.begin());
    user_nbrs_.resize(ds.size());
    item_nbrs_.resize(ds.size());
    auto ufill = user_ptr_;
    auto ifill = item_ptr_;
    for (const auto& r : ds.records()) {
        user_nbrs_[ufill[r.user]++] = r.item;
        item_nbrs_[ifill[r.item]++] = r.user;
    }
    for (std::size_t u = 0; u < n_users_; ++u)
        std::sort(user_nbrs_.begin() + static_cast<std::ptrdiff_t>(user_ptr_[u]),
                  user_nbrs_.begin() + static_cast<std::ptrdiff_t>(user_ptr_[u + 1]));
    for (std::size_t i = 0; i < n_items_; ++i)
        std::sort(item_nbrs_.begin() + static_cast<std::ptrdiff_t>(item_ptr_[i]),
                  item_nbrs_.begin() + static_cast<std::ptrdiff_t>(item_ptr_[i + 1]));
}

std::vector<double> BipartiteGraph::degrees(Side side) const {
    std::vector<double> d(side == Side::user ? n_users_ : n_items_);
    for (std::size_t k = 0; k < d.size(); ++k)
        d[k] = static_cast<double>(side == Side::user ? user_degree(static_cast<Index>(k))
                                                      : item_degree(static_cast<Index>(k)));
    return d;
}

bool BipartiteGraph::has_edge(Index user, Index item) const {
    auto nb = items_of(user);
    return std::binary_search(nb.begin(), nb.end(), item);
}

CsrMatrix BipartiteGraph::adjacency() const {
    CsrMatrix a;
    a.rows = a.cols = n_nodes();
    a.row_ptr.assign(n_nodes() + 1, 0);
    a.col_idx.reserve(2 * n_edges());
    for (std::size_t u = 0; u < n_users_; ++u) {
        for (Index i : items_of(static_cast<Index>(u))) a.col_idx.push_back(static_cast<std::uint32_t>(n_users_ + i));
        a.row_ptr[u + 1] = a.col_idx.size();
    }
    for (std::size_t i = 0; i < n_items_; ++i) {
        for (Index u : users_of(static_cast<Index>(i))) a.col_idx.push_back(u);
        a.row_ptr[n_users_ + i + 1] = a.col_idx.size();
    }
    a.values.assign(a.col_idx.size(), 1.0);
    return a;
}

CsrMatrix one_sided_adjacency(const BipartiteGraph& g, Side side) {
    const bool users = side == Side::user;
    const std::size_t n = users ? g.n_users() : g.n_items();
    CsrMatrix a;
    a.rows = a.cols = n;
    a.row_ptr.assign(n + 1, 0);
    std::vector<char> mark(n, 0);
    std::vector<std::uint32_t> row;
    for (std::size_t x = 0; x < n; ++x) {
        row.clear();
        auto mids = users ? g.items_of(static_cast<Index>(x)) : g.users_of(static_cast<Index>(x));
        for (Index mid : mids) {
            auto others = users ? g.users_of(mid) : g.items_of(mid);
            for (Index y : others) {
                if (y == x || mark[y]) continue;
                mark[y] = 1;
                row.push_back(y);
            }
        }
        for (auto y : row) mark[y] = 0;
        std::sort(row.begin(), row.end());
        a.col_idx.insert(a.col_idx.end(), row.begin(), row.end());
        a.row_ptr[x + 1] = a.col_idx.size();
    }
    a.values.assign(a.col_idx.size(), 1.0);
    return a;
}

ComponentCount count_components(const CsrMatrix& adjacency) {
    const std::size_t n = adjacency.rows;
    std::vector<char> seen(n, 0);
    std::vector<std::size_t> stack;
    ComponentCount cc;
    for (std::size_t s = 0; s < n; ++s) {
        if (seen[s]) continue;
        ++cc.components;
        if (adjacency.row_length(s) == 0) ++cc.isolated;
        seen[s] = 1;
        stack.push_back(s);
        while (!stack.empty()) {
            auto v = stack.back();
            stack.pop_back();
            for (std::size_t k = adjacency.row_ptr[v]; k < adjacency.row_ptr[v + 1]; ++k) {
                auto w = adjacency.col_idx[k];
                if (!seen[w]) {
                    seen[w] = 1;
                    stack.push_back(w);
                }
            }
        }
    }
    return cc;
}

namespace {

std::size_t round_count(double x) { return static_cast<std::size_t>(std::llround(x)); }

void check_fraction(double f, const char* name) {
    if (!(f > 0.0 && f < 1.0)) throw Error(std::string(name) + " must lie in (0, 1)");
}

}  // namespace

DataSplit split_by_ratio(const InteractionDataset& ds, const SplitSpec& spec) {
    check_fraction(spec.train_fraction, "train_fraction");
    if (!(spec.val_fraction_within_train >= 0.0 && spec.val_fraction_within_train < 1.0))
        throw Error("val_fraction_within_train must lie in [0, 1)");

    std::vector<std::vector<InteractionRecord>> per_user(ds.n_users());
    for (const auto& r : ds.records()) per_user[r.user].push_back(r);

    std::mt19937_64 rng(spec.seed);
    std::vector<InteractionRecord> fit, val, test;
    for (auto& recs : per_user) {
        if (recs.empty()) continue;
        std::shuffle(recs.begin(), recs.end(), rng);
        const std::size_t k = recs.size();
        const std::size_t pool = std::clamp<std::size_t>(round_count(spec.train_fraction * double(k)), 1, k);
        const std::size_t n_val =
            std::min(round_count(spec.val_fraction_within_train * double(pool)), pool - 1);
        const std::size_t n_fit = pool - n_val;
        fit.insert(fit.end(), recs.begin(), recs.begin() + static_cast<std::ptrdiff_t>(n_fit));
        val.insert(val.end(), recs.begin() + static_cast<std::ptrdiff_t>(n_fit),
                   recs.begin() + static_cast<std::ptrdiff_t>(pool));
        test.insert(test.end(), recs.begin() + static_cast<std::ptrdiff_t>(pool), recs.end());
    }
    DataSplit s{InteractionDataset(ds.n_users(), ds.n_items(), std::move(fit)),
                InteractionDataset(ds.n_users(), ds.n_items(), std::move(val)),
                InteractionDataset(ds.n_users(), ds.n_items(), std::move(test))};
    for (auto* part : {&s.fit, &s.validation, &s.test}) part->set_remaps(ds.user_ids(), ds.item_ids());
    return s;
}

NoiseResult inject_noise(const InteractionDataset& train, const InteractionDataset& full, const NoiseSpec& spec) {
    check_fraction(spec.proportion, "noise proportion");
    if (train.n_users() != full.n_users() || train.n_items() != full.n_items())
        throw Error("inject_noise: train and full datasets disagree on the index space");

    const auto full_items = full.items_by_user();
    std::vector<std::size_t> train_count(train.n_users(), 0);
    for (const auto& r : train.records()) ++train_count[r.user];

    std::mt19937_64 rng(spec.seed);
    NoiseResult result;
    std::vector<InteractionRecord> records = train.records();
    std::vector<Index> candidates;
    for (std::size_t u = 0; u < train.n_users(); ++u) {
        const std::size_t want = round_count(spec.proportion * double(train_count[u]));
        if (want == 0) continue;
        candidates.clear();
        const auto& seen = full_items[u];
        for (Index i = 0; i < train.n_items(); ++i)
            if (!std::binary_search(seen.begin(), seen.end(), i)) candidates.push_back(i);
        const std::size_t take = std::min(want, candidates.size());
        if (take < want) ++result.short_users;
        // partial Fisher-Yates
        for (std::size_t k = 0; k < take; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, candidates.size() - 1);
            std::swap(candidates[k], candidates[pick(rng)]);
            records.push_back({static_cast<Index>(u), candidates[k]});
        }
        result.injected += take;
    }
    result.dataset = InteractionDataset(train.n_users(), train.n_items(), std::move(records));
    result.dataset.set_remaps(train.user_ids(), train.item_ids());
    return result;
}

InteractionDataset generate_clustered(const SyntheticSpec& spec) {
    if (spec.clusters == 0 || spec.n_users == 0 || spec.n_items < spec.clusters)
        throw Error("generate_clustered: invalid sizes");
    std::mt19937_64 rng(spec.seed);

    std::vector<Index> rank(spec.n_items);
    std::iota(rank.begin(), rank.end(), 0);
    std::shuffle(rank.begin(), rank.end(), rng);
    std::vector<double> weight(spec.n_items);
    for (std::size_t i = 0; i < spec.n_items; ++i) weight[i] = std::pow(double(rank[i]) + 1.0, -spec.popularity_skew);

    std::vector<std::vector<Index>> cluster_items(spec.clusters);
    for (Index i = 0; i < spec.n_items; ++i) cluster_items[i % spec.clusters].push_back(i);
    std::vector<std::discrete_distribution<std::size_t>> in_cluster;
    for (const auto& items : cluster_items) {
        std::vector<double> w;
        for (Index i : items) w.push_back(weight[i]);
        in_cluster.emplace_back(w.begin(), w.end());
    }
    std::discrete_distribution<std::size_t> any_item(weight.begin(), weight.end());
    std::bernoulli_distribution stay(spec.in_cluster);

    const std::size_t per_user = std::min(spec.per_user, spec.n_items);
    std::vector<InteractionRecord> records;
    std::vector<char> taken(spec.n_items, 0);
    for (Index u = 0; u < spec.n_users; ++u) {
        const std::size_t c = u % spec.clusters;
        std::vector<Index> mine;
        std::size_t guard = 0;
        while (mine.size() < per_user && guard++ < 100 * per_user) {
            Index item = stay(rng) ? cluster_items[c][in_cluster[c](rng)] : static_cast<Index>(any_item(rng));
            if (taken[item]) continue;
            taken[item] = 1;
            mine.push_back(item);
        }
        for (Index i : mine) {
            taken[i] = 0;
            records.push_back({u, i});
        }
    }
    return InteractionDataset(spec.n_users, spec.n_items, std::move(records));
}

}  // namespace pgtr
