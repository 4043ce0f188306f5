#include "pgtr/experiments.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "pgtr/checkpoint.hpp"
#include "pgtr/error.hpp"

extern char** environ;

namespace pgtr {

namespace fs = std::filesystem;

void to_json(Json& j, const MetricRow& r) {
    j = Json{{"label", r.label},         {"recall", r.recall},         {"ndcg", r.ndcg},
             {"val_recall", r.val_recall}, {"best_epoch", r.best_epoch}, {"seconds", r.seconds}};
    if (r.recall_drop_pct) j["recall_drop_pct"] = *r.recall_drop_pct;
    if (r.ndcg_drop_pct) j["ndcg_drop_pct"] = *r.ndcg_drop_pct;
}

void from_json(const Json& j, MetricRow& r) {
    r.label = j.at("label").get<std::string>();
    r.recall = j.at("recall").get<double>();
    r.ndcg = j.at("ndcg").get<double>();
    r.val_recall = j.at("val_recall").get<double>();
    r.best_epoch = j.at("best_epoch").get<std::size_t>();
    r.seconds = j.at("seconds").get<double>();
    if (j.contains("recall_drop_pct")) r.recall_drop_pct = j.at("recall_drop_pct").get<double>();
    if (j.contains("ndcg_drop_pct")) r.ndcg_drop_pct = j.at("ndcg_drop_pct").get<double>();
}

namespace {

constexpr const char* kCommandNames[] = {"train", "evaluate", "ablate", "sparsity", "noise", "lambda3", "encode", "params"};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string decimal_label(int tenths) {
    std::ostringstream s;
    s << tenths / 10 << '.' << tenths % 10;
    return s.str();
}

Json record_json(const OutputRecord& rec) {
    return Json{{"id", rec.id}, {"config", rec.config}, {"k", rec.k}, {"rows", rec.rows}, {"seconds", rec.seconds}};
}

std::size_t job_cap(std::size_t requested) {
    if (const char* env = std::getenv("PGTR_THREADS")) {
        const long cap = std::strtol(env, nullptr, 10);
        if (cap > 0) return std::min<std::size_t>(requested, static_cast<std::size_t>(cap));
    }
    return requested;
}

void write_outputs(const ExperimentSpec& spec, const OutputRecord& rec) {
    if (spec.out_dir.empty()) return;
    const fs::path dir(spec.out_dir);
    fs::create_directories(dir);
    write_metrics_csv(dir / "metrics.csv", rec);
    std::ofstream(dir / "config.json") << Json(spec).dump(2) << '\n';
    std::ofstream(dir / "result.json") << record_json(rec).dump(2) << '\n';
}

std::vector<MetricRow> run_points_in_process(const ExperimentSpec& spec,
                                             const std::vector<std::pair<std::string, ExperimentSpec>>& points) {
    const InteractionDataset data = load_dataset(spec);
    std::vector<MetricRow> rows;
    for (const auto& [label, point] : points) {
        RunOutcome r = run_single(point, data, label);
        if (!point.out_dir.empty()) {
            fs::create_directories(point.out_dir);
            write_history_csv(fs::path(point.out_dir) / "history.csv", r.training.history);
        }
        rows.push_back(r.row);
    }
    return rows;
}

std::vector<MetricRow> run_points_in_workers(const std::vector<std::pair<std::string, ExperimentSpec>>& points,
                                             const std::string& executable, std::size_t jobs) {
    std::vector<pid_t> running;
    auto reap_one = [&running] {
        int status = 0;
        const pid_t pid = ::waitpid(-1, &status, 0);
        if (pid < 0) throw Error("waitpid failed");
        std::erase(running, pid);
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) throw Error("sweep worker failed");
    };
    for (const auto& [label, point] : points) {
        fs::create_directories(point.out_dir);
        const std::string spec_path = (fs::path(point.out_dir) / "spec.json").string();
        std::ofstream(spec_path) << Json(point).dump(2) << '\n';
        while (running.size() >= jobs) reap_one();
        std::vector<std::string> args{executable, "--config", spec_path, "--quiet"};
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        argv.push_back(nullptr);
        pid_t pid = 0;
        if (::posix_spawn(&pid, executable.c_str(), nullptr, nullptr, argv.data(), environ) != 0)
            throw Error("cannot start worker " + executable);
        running.push_back(pid);
    }
    while (!running.empty()) reap_one();

    std::vector<MetricRow> rows;
    for (const auto& [label, point] : points) {
        std::ifstream in(fs::path(point.out_dir) / "result.json");
        if (!in) throw Error("worker for '" + label + "' left no result");
        const Json j = Json::parse(in);
        MetricRow row = j.at("rows").at(0).get<MetricRow>();
        row.label = label;
        rows.push_back(row);
    }
    return rows;
}

OutputRecord run_sweep(const ExperimentSpec& spec, const std::string& executable) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto points = sweep_points(spec);
    const std::size_t jobs = job_cap(spec.jobs);
    OutputRecord rec;
    rec.id = spec.id;
    rec.config = spec;
    rec.k = spec.train.k;
    if (jobs > 1 && !executable.empty() && !spec.out_dir.empty())
        rec.rows = run_points_in_workers(points, executable, jobs);
    else
        rec.rows = run_points_in_process(spec, points);
    rec.seconds = seconds_since(t0);
    return rec;
}

}  // namespace

std::string to_string(Command c) { return kCommandNames[static_cast<int>(c)]; }

Command command_from_string(const std::string& s) {
    for (int i = 0; i < 8; ++i)
        if (s == kCommandNames[i]) return static_cast<Command>(i);
    throw Error("unknown command '" + s + "'");
}

void ExperimentSpec::set_seed(std::uint64_t seed) {
    model.seed = seed;
    train.seed = seed;
    split.seed = derive_seed(seed, 1001);
    noise.seed = derive_seed(seed, 1002);
    synthetic.seed = derive_seed(seed, 1003);
}

bool operator==(const ExperimentSpec& a, const ExperimentSpec& b) { return Json(a) == Json(b); }

void to_json(Json& j, const ExperimentSpec& v) {
    j = Json{{"command", to_string(v.command)},
             {"id", v.id},
             {"data", v.data},
             {"synthetic", v.synthetic},
             {"model", v.model},
             {"train", v.train},
             {"split", v.split},
             {"noise", v.noise},
             {"out", v.out_dir},
             {"checkpoint", v.checkpoint},
             {"jobs", v.jobs}};
}

void from_json(const Json& j, ExperimentSpec& v) {
    require_known_keys(j, {"command", "id", "data", "synthetic", "model", "train", "split", "noise", "out",
                           "checkpoint", "jobs"},
                       "experiment");
    if (j.contains("command")) v.command = command_from_string(j.at("command").get<std::string>());
    if (j.contains("id")) v.id = j.at("id").get<std::string>();
    if (j.contains("data")) v.data = j.at("data").get<std::string>();
    if (j.contains("synthetic")) v.synthetic = j.at("synthetic").get<SyntheticSpec>();
    if (j.contains("model")) v.model = j.at("model").get<PGTRConfig>();
    if (j.contains("train")) v.train = j.at("train").get<TrainConfig>();
    if (j.contains("split")) v.split = j.at("split").get<SplitSpec>();
    if (j.contains("noise")) v.noise = j.at("noise").get<NoiseSpec>();
    if (j.contains("out")) v.out_dir = j.at("out").get<std::string>();
    if (j.contains("checkpoint")) v.checkpoint = j.at("checkpoint").get<std::string>();
    if (j.contains("jobs")) v.jobs = j.at("jobs").get<std::size_t>();
}

InteractionDataset load_dataset(const ExperimentSpec& spec) {
    return spec.data.empty() ? generate_clustered(spec.synthetic) : load_interactions(spec.data);
}

namespace {


DataSplit prepare_split(const ExperimentSpec& spec, const InteractionDataset& data) {
    DataSplit split = split_by_ratio(data, spec.split);
    if (spec.noise.proportion > 0.0) split.fit = inject_noise(split.fit, data, spec.noise).dataset;
    return split;
}

}  // namespace

RunOutcome run_single(const ExperimentSpec& spec, const InteractionDataset& data, const std::string& label) {
    const auto t0 = std::chrono::steady_clock::now();
    const DataSplit split = prepare_split(spec, data);
    PGTRModel model(build_graph(split.fit), spec.model);

    RunOutcome out;
    out.training = train(model, split, spec.train);
    if (!spec.checkpoint.empty()) write_checkpoint(spec.checkpoint, Checkpoint::capture(model));
    out.test = evaluate(model, {&split.fit, &split.validation}, split.test, spec.train.k);
    out.row.label = label;
    out.row.recall = out.test.recall;
    out.row.ndcg = out.test.ndcg;
    out.row.val_recall = out.training.best_val_recall;
    out.row.best_epoch = out.training.best_epoch;
    out.row.seconds = seconds_since(t0);
    return out;
}

OutputRecord run_train(const ExperimentSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    RunOutcome r = run_single(spec, load_dataset(spec), "pgtr");
    OutputRecord rec;
    rec.id = spec.id;
    rec.config = spec;
    rec.k = spec.train.k;
    rec.rows.push_back(r.row);
    rec.seconds = seconds_since(t0);
    if (!spec.out_dir.empty()) {
        fs::create_directories(spec.out_dir);
        write_history_csv(fs::path(spec.out_dir) / "history.csv", r.training.history);
    }
    return rec;
}

OutputRecord run_evaluate(const ExperimentSpec& spec) {
    if (spec.checkpoint.empty()) throw Error("evaluate needs a checkpoint");
    const auto t0 = std::chrono::steady_clock::now();
    const Checkpoint ckpt = read_checkpoint(spec.checkpoint);
    const InteractionDataset data = load_dataset(spec);
    const DataSplit split = prepare_split(spec, data);
    PGTRModel model(build_graph(split.fit), ckpt.config);
    restore_checkpoint(model, ckpt);
    const RankingMetrics m = evaluate(model, {&split.fit, &split.validation}, split.test, spec.train.k);

    OutputRecord rec;
    rec.id = spec.id;
    rec.config = spec;
    rec.k = spec.train.k;
    MetricRow row;
    row.label = "checkpoint";
    row.recall = m.recall;
    row.ndcg = m.ndcg;
    row.seconds = seconds_since(t0);
    rec.rows.push_back(row);
    rec.seconds = row.seconds;
    return rec;
}

std::vector<std::pair<std::string, ExperimentSpec>> sweep_points(const ExperimentSpec& spec) {
    std::vector<std::pair<std::string, ExperimentSpec>> points;
    auto add = [&](const std::string& label, auto&& edit) {
        ExperimentSpec p = spec;
        p.command = Command::train;
        p.id = spec.id + "/" + label;
        p.checkpoint.clear();
        p.jobs = 1;
        if (!spec.out_dir.empty()) p.out_dir = (fs::path(spec.out_dir) / "points" / label).string();
        edit(p);
        points.emplace_back(label, std::move(p));
    };
    switch (spec.command) {
        case Command::ablate:
            add("full", [](ExperimentSpec&) {});
            add("-PL", [](ExperimentSpec& p) { p.model.encodings.spectral = false; });
            add("-DG", [](ExperimentSpec& p) { p.model.encodings.degree = false; });
            add("-PR", [](ExperimentSpec& p) { p.model.encodings.pagerank = false; });
            add("-TP", [](ExperimentSpec& p) { p.model.encodings.type = false; });
            add("-All", [](ExperimentSpec& p) { p.model.encodings = {false, false, false, false}; });
            break;
        case Command::sparsity:
            for (int t : {2, 4, 6, 8})
                add(decimal_label(t), [t](ExperimentSpec& p) { p.split.train_fraction = t / 10.0; });
            break;
        case Command::noise:
            for (int t : {0, 1, 2, 3})
                add(decimal_label(t), [t](ExperimentSpec& p) { p.noise.proportion = t / 10.0; });
            break;
        case Command::lambda3:
            for (int t = 0; t <= 10; ++t)
                add(decimal_label(t), [t](ExperimentSpec& p) { p.model.lambda3 = t / 10.0; });
            break;
        default:
            throw Error(to_string(spec.command) + " is not a sweep");
    }
    return points;
}

OutputRecord run_ablation(const ExperimentSpec& spec, const std::string& executable) {
    ExperimentSpec s = spec;
    s.command = Command::ablate;
    return run_sweep(s, executable);
}

OutputRecord run_sparsity(const ExperimentSpec& spec, const std::string& executable) {
    ExperimentSpec s = spec;
    s.command = Command::sparsity;
    return run_sweep(s, executable);
}

OutputRecord run_lambda3(const ExperimentSpec& spec, const std::string& executable) {
    ExperimentSpec s = spec;
    s.command = Command::lambda3;
    return run_sweep(s, executable);
}

OutputRecord run_noise(const ExperimentSpec& spec, const std::string& executable) {
    ExperimentSpec s = spec;
    s.command = Command::noise;
    OutputRecord rec = run_sweep(s, executable);
    const MetricRow base = rec.rows.front();
    auto drop = [](double b, double x) { return b > 0.0 ? 100.0 * (b - x) / b : 0.0; };
    for (MetricRow& r : rec.rows) {
        r.recall_drop_pct = drop(base.recall, r.recall);
        r.ndcg_drop_pct = drop(base.ndcg, r.ndcg);
    }
    rec.rows.front().recall_drop_pct = 0.0;
    rec.rows.front().ndcg_drop_pct = 0.0;
    return rec;
}

void write_matrix_text(std::ostream& out, const DenseMatrix& m, const std::string& name) {
    out << m.rows() << ' ' << m.cols() << ' ' << name << '\n';
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? " " : "") << m(r, c);
        out << '\n';
    }
}

void export_encodings(const ExperimentSpec& spec) {
    if (spec.out_dir.empty()) throw Error("encode needs an output directory");
    const fs::path dir(spec.out_dir);
    fs::create_directories(dir);
    const InteractionDataset data = load_dataset(spec);
    const DataSplit split = prepare_split(spec, data);
    PGTRModel model(build_graph(split.fit), spec.model);
    auto& enc = model.encodings;

    auto matrix = [&dir](const std::string& name, const DenseMatrix& m) {
        std::ofstream out(dir / (name + ".txt"));
        write_matrix_text(out, m, name);
    };
    auto groups = [&dir, &model](const std::string& name, const GroupEncoding& g) {
        std::ofstream out(dir / (name + "_groups.txt"));
        for (std::size_t u = 0; u < g.users.group_of.size(); ++u) out << u << ' ' << g.users.group_of[u] << '\n';
        for (std::size_t i = 0; i < g.items.group_of.size(); ++i)
            out << model.n_users() + i << ' ' << g.items.group_of[i] << '\n';
    };

    matrix("spectral", transpose(enc.spectral.by_node));
    matrix("degree_user_table", enc.degree.user_table.value);
    matrix("degree_item_table", enc.degree.item_table.value);
    matrix("pagerank_user_table", enc.pagerank.user_table.value);
    matrix("pagerank_item_table", enc.pagerank.item_table.value);
    matrix("type_table", enc.type_table.value);
    matrix("positions", enc.positions());
    groups("degree", enc.degree);
    groups("pagerank", enc.pagerank);
    std::ofstream(dir / "config.json") << Json(spec).dump(2) << '\n';
}

OutputRecord run_experiment(const ExperimentSpec& spec, const std::string& executable) {
    OutputRecord rec;
    switch (spec.command) {
        case Command::train: rec = run_train(spec); break;
        case Command::evaluate: rec = run_evaluate(spec); break;
        case Command::ablate: rec = run_ablation(spec, executable); break;
        case Command::sparsity: rec = run_sparsity(spec, executable); break;
        case Command::noise: rec = run_noise(spec, executable); break;
        case Command::lambda3: rec = run_lambda3(spec, executable); break;
        case Command::encode: export_encodings(spec); return rec;
        case Command::params: throw Error("params is answered by the command-line tool");
    }
    write_outputs(spec, rec);
    return rec;
}

void write_metrics_csv(const fs::path& path, const OutputRecord& rec) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    const std::string k = std::to_string(rec.k);
    out << "setting,recall@" << k << ",ndcg@" << k << ",recall_drop_pct,ndcg_drop_pct,val_recall@" << k
        << ",best_epoch,seconds\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const MetricRow& r : rec.rows) {
        out << r.label << ',' << r.recall << ',' << r.ndcg << ',';
        if (r.recall_drop_pct) out << *r.recall_drop_pct;
        out << ',';
        if (r.ndcg_drop_pct) out << *r.ndcg_drop_pct;
        out << ',' << r.val_recall << ',' << r.best_epoch << ',' << r.seconds << '\n';
    }
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "epoch,train_loss,val_recall,val_ndcg,seconds\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const EpochRecord& e : history)
        out << e.epoch << ',' << e.train_loss << ',' << e.val_recall << ',' << e.val_ndcg << ',' << e.seconds << '\n';
}

}  // namespace pgtr
