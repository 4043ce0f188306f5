#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pgtr/config_io.hpp"
#include "pgtr/data.hpp"
#include "pgtr/model.hpp"
#include "pgtr/training.hpp"

namespace pgtr {

enum class Command { train, evaluate, ablate, sparsity, noise, lambda3, encode, params };

std::string to_string(Command c);
Command command_from_string(const std::string& s);

struct ExperimentSpec {
    Command command = Command::train;
    std::string id = "run";
    /// Interaction file; empty means the synthetic generator.
    std::string data;
    SyntheticSpec synthetic;
    PGTRConfig model;
    TrainConfig train;
    SplitSpec split;
    /// Applied to the training portion when proportion > 0 (train/evaluate only).
    NoiseSpec noise{0.0, 0};
    std::string out_dir;
    std::string checkpoint;
    /// Worker processes for sweeps; 1 runs points in-process, in order.
    std::size_t jobs = 1;

    /// Pins every random stream (model, split, training, noise, generator) to `seed`.
    void set_seed(std::uint64_t seed);
    friend bool operator==(const ExperimentSpec& a, const ExperimentSpec& b);
};

void to_json(Json& j, const ExperimentSpec& v);
void from_json(const Json& j, ExperimentSpec& v);

struct MetricRow {
    std::string label;
    double recall = 0.0;
    double ndcg = 0.0;
    /// Percent decrease against the first row; noise sweeps only.
    std::optional<double> recall_drop_pct;
    std::optional<double> ndcg_drop_pct;
    double val_recall = 0.0;
    std::size_t best_epoch = 0;
    double seconds = 0.0;
};

void to_json(Json& j, const MetricRow& r);
void from_json(const Json& j, MetricRow& r);

struct OutputRecord {
    std::string id;
    Json config;
    std::size_t k = 20;
    std::vector<MetricRow> rows;
    double seconds = 0.0;
};

/// Interactions named by `spec.data`, or the synthetic generator's output.
InteractionDataset load_dataset(const ExperimentSpec& spec);

struct RunOutcome {
    MetricRow row;
    TrainResult training;
    RankingMetrics test;
};

/// Split, optional noise, graph, model, training and test evaluation for one
/// configuration. Test ranking masks training and validation items. When
/// `spec.checkpoint` is set the best model is written there.
RunOutcome run_single(const ExperimentSpec& spec, const InteractionDataset& data, const std::string& label);

OutputRecord run_train(const ExperimentSpec& spec);
/// Restores `spec.checkpoint` and reports test metrics on the spec's split.
OutputRecord run_evaluate(const ExperimentSpec& spec);
/// Rows: full, -PL, -DG, -PR, -TP, -All.
OutputRecord run_ablation(const ExperimentSpec& spec, const std::string& executable = {});
/// Rows for train fractions 0.2, 0.4, 0.6, 0.8.
OutputRecord run_sparsity(const ExperimentSpec& spec, const std::string& executable = {});
/// Rows for noise 0, 0.1, 0.2, 0.3 with percent decrease against 0.
OutputRecord run_noise(const ExperimentSpec& spec, const std::string& executable = {});
/// Rows for lambda3 = 0, 0.1, ..., 1.0.
OutputRecord run_lambda3(const ExperimentSpec& spec, const std::string& executable = {});

/// The sweep points behind an ablate/sparsity/noise/lambda3 spec, as
/// (label, train spec) pairs.
std::vector<std::pair<std::string, ExperimentSpec>> sweep_points(const ExperimentSpec& spec);

/// Writes each encoding of the spec's training graph into `spec.out_dir`.
/// Matrices: a "rows cols name" header line, then one text line per row.
/// Group assignments: one "node group" pair per line.
void export_encodings(const ExperimentSpec& spec);

/// Runs the spec's command; writes metrics.csv and config.json into out_dir
/// when it is set. `executable` enables parallel sweep workers.
OutputRecord run_experiment(const ExperimentSpec& spec, const std::string& executable = {});

void write_metrics_csv(const std::filesystem::path& path, const OutputRecord& rec);
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);
void write_matrix_text(std::ostream& out, const DenseMatrix& m, const std::string& name);

}  // namespace pgtr
