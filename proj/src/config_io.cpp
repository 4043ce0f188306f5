#include "pgtr/config_io.hpp"

#include <algorithm>
#include <cstring>

#include "pgtr/error.hpp"

namespace pgtr {

namespace {

template <class T>
void get_if(const Json& j, const char* key, T& out) {
    auto it = j.find(key);
    if (it == j.end()) return;
    try {
        out = it->get<T>();
    } catch (const Json::exception& e) {
        throw Error(std::string("config field '") + key + "': " + e.what());
    }
}

const char* attention_name(AttentionKind k) { return k == AttentionKind::exact ? "exact" : "kernelized"; }

AttentionKind attention_from_name(const std::string& s) {
    if (s == "exact") return AttentionKind::exact;
    if (s == "kernelized") return AttentionKind::kernelized;
    throw Error("unknown attention kind '" + s + "'");
}

}  // namespace

void require_known_keys(const Json& j, std::initializer_list<const char*> known, const char* what) {
    if (!j.is_object()) throw Error(std::string(what) + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        const bool ok = std::any_of(known.begin(), known.end(), [&](const char* k) { return key == k; });
        if (!ok) throw Error(std::string(what) + ": unknown field '" + key + "'");
    }
}

void to_json(Json& j, const EncodingDims& v) {
    j = Json{{"emb_dim", v.d}, {"hc", v.hc}, {"hd", v.hd}, {"hr", v.hr}, {"hy", v.hy},
             {"nd", v.nd},     {"nr", v.nr}, {"lambda_c", v.lambda_c}};
}

void from_json(const Json& j, EncodingDims& v) {
    require_known_keys(j, {"emb_dim", "hc", "hd", "hr", "hy", "nd", "nr", "lambda_c"}, "dims");
    get_if(j, "emb_dim", v.d);
    get_if(j, "hc", v.hc);
    get_if(j, "hd", v.hd);
    get_if(j, "hr", v.hr);
    get_if(j, "hy", v.hy);
    get_if(j, "nd", v.nd);
    get_if(j, "nr", v.nr);
    get_if(j, "lambda_c", v.lambda_c);
}

void to_json(Json& j, const EncodingSwitches& v) {
    j = Json{{"pl", v.spectral}, {"dg", v.degree}, {"pr", v.pagerank}, {"tp", v.type}};
}

void from_json(const Json& j, EncodingSwitches& v) {
    require_known_keys(j, {"pl", "dg", "pr", "tp"}, "encodings");
    get_if(j, "pl", v.spectral);
    get_if(j, "dg", v.degree);
    get_if(j, "pr", v.pagerank);
    get_if(j, "tp", v.type);
}

void to_json(Json& j, const PGTRConfig& v) {
    j = Json{{"dims", v.dims},
             {"layers", v.layers},
             {"lambda1", v.lambda1},
             {"lambda2", v.lambda2},
             {"lambda3", v.lambda3},
             {"tau", v.tau},
             {"m_features", v.features},
             {"encodings", v.encodings},
             {"backbone", to_string(v.backbone)},
             {"projections", v.use_projections},
             {"attention", attention_name(v.attention)},
             {"seed", v.seed}};
}

void from_json(const Json& j, PGTRConfig& v) {
    require_known_keys(j,
                       {"dims", "layers", "lambda1", "lambda2", "lambda3", "tau", "m_features", "encodings",
                        "backbone", "projections", "attention", "seed"},
                       "model");
    get_if(j, "dims", v.dims);
    get_if(j, "layers", v.layers);
    get_if(j, "lambda1", v.lambda1);
    get_if(j, "lambda2", v.lambda2);
    get_if(j, "lambda3", v.lambda3);
    get_if(j, "tau", v.tau);
    get_if(j, "m_features", v.features);
    get_if(j, "encodings", v.encodings);
    if (j.contains("backbone")) v.backbone = backbone_from_string(j.at("backbone").get<std::string>());
    get_if(j, "projections", v.use_projections);
    if (j.contains("attention")) v.attention = attention_from_name(j.at("attention").get<std::string>());
    get_if(j, "seed", v.seed);
}

void to_json(Json& j, const TrainConfig& v) {
    j = Json{{"batch_size", v.batch_size}, {"lr", v.lr},  {"epochs", v.max_epochs},
             {"patience", v.patience},     {"k", v.k},    {"seed", v.seed}};
}

void from_json(const Json& j, TrainConfig& v) {
    require_known_keys(j, {"batch_size", "lr", "epochs", "patience", "k", "seed"}, "train");
    get_if(j, "batch_size", v.batch_size);
    get_if(j, "lr", v.lr);
    get_if(j, "epochs", v.max_epochs);
    get_if(j, "patience", v.patience);
    get_if(j, "k", v.k);
    get_if(j, "seed", v.seed);
}

void to_json(Json& j, const SplitSpec& v) {
    j = Json{{"train_fraction", v.train_fraction}, {"val_fraction", v.val_fraction_within_train}, {"seed", v.seed}};
}

void from_json(const Json& j, SplitSpec& v) {
    require_known_keys(j, {"train_fraction", "val_fraction", "seed"}, "split");
    get_if(j, "train_fraction", v.train_fraction);
    get_if(j, "val_fraction", v.val_fraction_within_train);
    get_if(j, "seed", v.seed);
}

void to_json(Json& j, const NoiseSpec& v) { j = Json{{"proportion", v.proportion}, {"seed", v.seed}}; }

void from_json(const Json& j, NoiseSpec& v) {
    require_known_keys(j, {"proportion", "seed"}, "noise");
    get_if(j, "proportion", v.proportion);
    get_if(j, "seed", v.seed);
}

void to_json(Json& j, const SyntheticSpec& v) {
    j = Json{{"users", v.n_users},       {"items", v.n_items},
             {"clusters", v.clusters},   {"per_user", v.per_user},
             {"in_cluster", v.in_cluster}, {"popularity_skew", v.popularity_skew},
             {"seed", v.seed}};
}

void from_json(const Json& j, SyntheticSpec& v) {
    require_known_keys(j, {"users", "items", "clusters", "per_user", "in_cluster", "popularity_skew", "seed"},
                       "synthetic");
    get_if(j, "users", v.n_users);
    get_if(j, "items", v.n_items);
    get_if(j, "clusters", v.clusters);
    get_if(j, "per_user", v.per_user);
    get_if(j, "in_cluster", v.in_cluster);
    get_if(j, "popularity_skew", v.popularity_skew);
    get_if(j, "seed", v.seed);
}

}  // namespace pgtr
