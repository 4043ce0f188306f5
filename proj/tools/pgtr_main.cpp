// Command-line front end: train, evaluate, sweeps, encoding export and the
// parameter census. Results go to stdout and, with --out, to files.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "pgtr/error.hpp"
#include "pgtr/experiments.hpp"
#include "pgtr/kernels.hpp"

namespace {

template <class T>
void override_field(const std::optional<T>& v, T& field) {
    if (v) field = *v;
}

std::string self_executable(const char* argv0) {
    std::error_code ec;
    auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
    return ec ? std::string(argv0) : p.string();
}

void print_table(const pgtr::OutputRecord& rec) {
    std::printf("%-12s %12s %12s %12s\n", "setting", ("recall@" + std::to_string(rec.k)).c_str(),
                ("ndcg@" + std::to_string(rec.k)).c_str(), "drop%");
    for (const auto& r : rec.rows) {
        std::printf("%-12s %12.6f %12.6f", r.label.c_str(), r.recall, r.ndcg);
        if (r.recall_drop_pct) std::printf(" %12.2f", *r.recall_drop_pct);
        std::printf("\n");
    }
    std::printf("elapsed %.1fs\n", rec.seconds);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Position-aware graph transformer recommender"};
    app.option_defaults()->always_capture_default();

    std::string config_path, command;
    std::optional<std::string> data, out, checkpoint, backbone;
    std::optional<double> train_fraction, val_fraction, noise, lambda1, lambda2, lambda3, lambda_c, tau, lr;
    std::optional<std::size_t> layers, emb_dim, hc, hd, hr, hy, nd, nr, m_features, epochs, batch_size, patience, k,
        jobs, users, items, clusters;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> disabled;
    bool exact = false, projections = false, quiet = false;

    app.add_option("--config", config_path, "Experiment spec JSON; flags override its fields");
    app.add_option("--command", command, "train|evaluate|ablate|sparsity|noise|lambda3|encode|params");
    app.add_option("--data", data, "Interaction file (user item per line); omit for synthetic data");
    app.add_option("--out", out, "Output directory");
    app.add_option("--checkpoint", checkpoint, "Checkpoint written by train, read by evaluate");
    app.add_option("--seed", seed, "Seed for every random stream");
    app.add_option("--train-fraction", train_fraction, "Share of each user's interactions used for training");
    app.add_option("--val-fraction", val_fraction, "Share of the training pool held out for validation");
    app.add_option("--noise", noise, "Proportion of noisy interactions added to training");
    app.add_option("--lambda1", lambda1);
    app.add_option("--lambda2", lambda2);
    app.add_option("--lambda3", lambda3, "Local/global mixing weight");
    app.add_option("--lambda-c", lambda_c, "0: bipartite spectral encoding, 1: one-sided");
    app.add_option("--tau", tau, "Softmax temperature");
    app.add_option("--layers", layers);
    app.add_option("--emb-dim", emb_dim);
    app.add_option("--hc", hc);
    app.add_option("--hd", hd);
    app.add_option("--hr", hr);
    app.add_option("--hy", hy);
    app.add_option("--nd", nd);
    app.add_option("--nr", nr);
    app.add_option("--m-features", m_features, "Random features per attention layer");
    app.add_option("--disable-encoding", disabled, "Any of pl, dg, pr, tp")
        ->check(CLI::IsMember({"pl", "dg", "pr", "tp"}));
    app.add_option("--backbone", backbone, "lightgcn|transform-gcn");
    app.add_flag("--exact-attention", exact, "Quadratic softmax attention instead of random features");
    app.add_flag("--projections", projections, "Learned query/key/value maps");
    app.add_option("--epochs", epochs);
    app.add_option("--batch-size", batch_size);
    app.add_option("--lr", lr);
    app.add_option("--patience", patience);
    app.add_option("--k", k, "Ranking cutoff");
    app.add_option("--jobs", jobs, "Parallel worker processes for sweeps");
    app.add_option("--users", users, "Synthetic users");
    app.add_option("--items", items, "Synthetic items");
    app.add_option("--clusters", clusters, "Synthetic clusters");
    app.add_flag("--quiet", quiet);

    CLI11_PARSE(app, argc, argv);

    try {
        pgtr::kernels::configure_threads_from_env();
        pgtr::ExperimentSpec spec;
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw pgtr::Error("cannot open " + config_path);
            spec = pgtr::Json::parse(in).get<pgtr::ExperimentSpec>();
        }
        if (!command.empty()) spec.command = pgtr::command_from_string(command);
        if (seed) spec.set_seed(*seed);
        override_field(data, spec.data);
        override_field(out, spec.out_dir);
        override_field(checkpoint, spec.checkpoint);
        override_field(train_fraction, spec.split.train_fraction);
        override_field(val_fraction, spec.split.val_fraction_within_train);
        override_field(noise, spec.noise.proportion);
        auto& m = spec.model;
        override_field(lambda1, m.lambda1);
        override_field(lambda2, m.lambda2);
        override_field(lambda3, m.lambda3);
        override_field(lambda_c, m.dims.lambda_c);
        override_field(tau, m.tau);
        override_field(layers, m.layers);
        override_field(emb_dim, m.dims.d);
        override_field(hc, m.dims.hc);
        override_field(hd, m.dims.hd);
        override_field(hr, m.dims.hr);
        override_field(hy, m.dims.hy);
        override_field(nd, m.dims.nd);
        override_field(nr, m.dims.nr);
        override_field(m_features, m.features);
        for (const auto& e : disabled) {
            if (e == "pl") m.encodings.spectral = false;
            if (e == "dg") m.encodings.degree = false;
            if (e == "pr") m.encodings.pagerank = false;
            if (e == "tp") m.encodings.type = false;
        }
        if (backbone) m.backbone = pgtr::backbone_from_string(*backbone);
        if (exact) m.attention = pgtr::AttentionKind::exact;
        if (projections) m.use_projections = true;
        override_field(epochs, spec.train.max_epochs);
        override_field(batch_size, spec.train.batch_size);
        override_field(lr, spec.train.lr);
        override_field(patience, spec.train.patience);
        override_field(k, spec.train.k);
        override_field(jobs, spec.jobs);
        override_field(users, spec.synthetic.n_users);
        override_field(items, spec.synthetic.n_items);
        override_field(clusters, spec.synthetic.clusters);
        m.validate();
        spec.train.validate();

        if (spec.command == pgtr::Command::params) {
            const auto data_set = pgtr::load_dataset(spec);
            pgtr::PGTRModel model(pgtr::build_graph(data_set), m);
            std::printf("added_parameters %zu\n", model.count_added_parameters());
            std::printf("closed_form %zu\n", pgtr::added_parameter_formula(m.dims));
            std::printf("embedding_parameters %zu\n", model.embedding.size());
            return 0;
        }
        const auto rec = pgtr::run_experiment(spec, self_executable(argv[0]));
        if (spec.command == pgtr::Command::encode) {
            if (!quiet) std::printf("encodings written to %s\n", spec.out_dir.c_str());
        } else if (!quiet) {
            print_table(rec);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
