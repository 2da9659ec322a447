// Command-line entry point: dataset preparation, K-NN graph building,
// training, evaluation, recommendation, ablation, and report emission.
// Every artifact embeds the effective configuration fingerprint so runs
// reproduce byte-identically from (config, seed, inputs).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "htn/config.hpp"
#include "htn/dataset.hpp"
#include "htn/knn.hpp"
#include "htn/metrics.hpp"
#include "htn/model.hpp"
#include "htn/synth.hpp"
#include "htn/trainer.hpp"

namespace fs = std::filesystem;
using namespace htn;

namespace {

int g_verbosity = 1;  // HTN_LOG_LEVEL environment overrides

void log_line(const std::string& msg) {
    if (g_verbosity > 0) std::cerr << msg << "\n";
}

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) log_line("warning: " + w);
}

// Artifacts are written to a temp file and renamed into place.
void write_atomic(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << content;
    }
    fs::rename(tmp, path);
}

// (corpus, seed, parameters) cache key for the K-NN graph files
std::string knn_cache_key(const SplitCorpus& split, const RunConfig& cfg) {
    std::ostringstream os;
    for (const auto& items : split.index.items_of_list) {
        for (int it : items) os << it << ",";
        os << ";";
    }
    os << "|k=" << cfg.knn.k << "|walks=" << cfg.knn.walks_per_node << "x" << cfg.knn.walk_length
       << "|sg=" << cfg.knn.skipgram.dim << "," << cfg.knn.skipgram.window << ","
       << cfg.knn.skipgram.negatives << "," << cfg.knn.skipgram.epochs << ","
       << cfg.knn.skipgram.lr << "|seed=" << cfg.split_seed;
    std::ostringstream key;
    key << std::hex << fnv1a(os.str());
    return key.str();
}

KnnGraphs load_graphs(const std::string& dir, const SplitCorpus& split, const RunConfig& cfg) {
    const std::string key = knn_cache_key(split, cfg);
    KnnGraphs graphs;
    struct Entry {
        const char* name;
        KnnAdjacency* slot;
    };
    const Entry entries[] = {{"knn_user.txt", &graphs.user},
                             {"knn_item.txt", &graphs.item},
                             {"knn_list.txt", &graphs.list}};
    for (const auto& e : entries) {
        auto loaded = load_knn((fs::path(dir) / e.name).string(), key);
        if (!loaded)
            throw IoError("K-NN cache " + (fs::path(dir) / e.name).string() +
                          " is missing or stale; run `build-graphs` first");
        *e.slot = std::move(*loaded);
    }
    return graphs;
}

RunConfig run_config_of(const std::string& run_dir) {
    const auto path = fs::path(run_dir) / "config.json";
    if (!fs::exists(path))
        throw IoError("missing " + path.string() + "; run `train` first");
    return RunConfig::load(path.string(), {});
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

int cmd_prepare(const RunConfig& cfg, bool synth, const std::string& out_dir) {
    std::vector<std::string> warnings;
    std::vector<InteractionRecord> records;
    fs::create_directories(out_dir);
    if (synth) {
        const auto data = generate_synthetic(cfg.synth);
        records = data.records;
        write_interactions_csv(records, (fs::path(out_dir) / "synthetic.csv").string());
        log_line("generated synthetic corpus: " + std::to_string(records.size()) + " interactions");
    } else {
        if (cfg.input_path.empty())
            throw ConfigError("prepare: provide data.input or use --synth");
        records = load_interactions(cfg.input_path,
                                    cfg.format == "tsv" ? FileFormat::Tsv : FileFormat::Csv,
                                    &warnings);
    }
    const auto index = build_index(records, cfg.min_list_len, &warnings);
    print_warnings(warnings);
    const auto split = split_leave_one_out(index, cfg.split_seed, cfg.num_negatives);
    write_split(split, out_dir, cfg.fingerprint());
    log_line("split written to " + out_dir + ": " + std::to_string(index.n_users) + " users, " +
             std::to_string(index.n_items) + " items, " + std::to_string(index.n_lists) +
             " lists");
    return 0;
}

int cmd_build_graphs(const RunConfig& cfg, const std::string& split_dir,
                     const std::string& out_dir) {
    const auto split = read_split(split_dir);
    const std::string key = knn_cache_key(split, cfg);
    fs::create_directories(out_dir);

    bool all_cached = true;
    for (const char* name : {"knn_user.txt", "knn_item.txt", "knn_list.txt"})
        all_cached = all_cached && load_knn((fs::path(out_dir) / name).string(), key).has_value();
    if (all_cached) {
        log_line("K-NN caches are current (key " + key + ")");
        return 0;
    }

    std::vector<std::string> warnings;
    const auto graphs = build_knn_graphs(split.index, cfg.knn, cfg.split_seed, &warnings);
    print_warnings(warnings);
    save_knn(graphs.user, (fs::path(out_dir) / "knn_user.txt").string(), key);
    save_knn(graphs.item, (fs::path(out_dir) / "knn_item.txt").string(), key);
    save_knn(graphs.list, (fs::path(out_dir) / "knn_list.txt").string(), key);
    log_line("K-NN graphs written to " + out_dir + " (key " + key + ")");
    return 0;
}

template <class S>
int run_train(const RunConfig& cfg, const SplitCorpus& split, const KnnGraphs& graphs,
              const std::string& out_dir, const std::string& resume) {
    HyperTeNet<S> model(split.index.n_users, split.index.n_items, split.index.n_lists, &graphs,
                        cfg.train.model_config());
    if (!resume.empty()) {
        model.params().load(resume);
        log_line("resumed parameters from " + resume);
    }
    const auto result = train(model, split, cfg.train, g_verbosity > 1 ? &std::cerr : nullptr);
    fs::create_directories(out_dir);
    model.params().save((fs::path(out_dir) / "checkpoint.txt").string(), cfg.fingerprint());
    write_atomic(fs::path(out_dir) / "trainlog.jsonl", result.log.to_jsonl());
    write_atomic(fs::path(out_dir) / "config.json", cfg.to_json());
    log_line("best epoch " + std::to_string(result.log.best_epoch) + " with validation NDCG@" +
             std::to_string(cfg.top_n) + " = " + std::to_string(result.log.best_ndcg));
    log_line("checkpoint written to " + out_dir);
    return 0;
}

template <class S>
HyperTeNet<S> restore_model(const RunConfig& cfg, const SplitCorpus& split,
                            const KnnGraphs& graphs, const std::string& run_dir) {
    HyperTeNet<S> model(split.index.n_users, split.index.n_items, split.index.n_lists, &graphs,
                        cfg.train.model_config());
    const auto ckpt = fs::path(run_dir) / "checkpoint.txt";
    if (!fs::exists(ckpt)) throw IoError("missing " + ckpt.string() + "; run `train` first");
    model.params().load(ckpt.string());
    return model;
}

template <class S>
int run_evaluate(const RunConfig& cfg, const SplitCorpus& split, const KnnGraphs& graphs,
                 const std::string& run_dir, const std::string& phase, const std::string& out) {
    auto model = restore_model<S>(cfg, split, graphs, run_dir);
    const bool test_phase = phase == "test";
    auto report = evaluate(model, split, test_phase, cfg.top_n);
    report.fingerprint = cfg.fingerprint();
    report.seed = cfg.train.seed;
    write_atomic(out, report.to_json() + "\n");
    std::cout << report.table(phase) << "\n";
    return 0;
}

template <class S>
int run_recommend(const RunConfig& cfg, const SplitCorpus& split, const KnnGraphs& graphs,
                  const std::string& run_dir, int top_n, const std::string& out) {
    auto model = restore_model<S>(cfg, split, graphs, run_dir);
    NoGradGuard ng;
    auto ectx = model.make_eval_context();
    const auto& idx = split.index;

    std::ostringstream os;
    os.precision(6);
    os << "user_id\tlist_id\trank\titem_id\tscore\n";
    std::vector<std::string> rows(static_cast<std::size_t>(idx.n_lists));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int l = 0; l < idx.n_lists; ++l) {
        const int u = idx.user_of_list[static_cast<std::size_t>(l)];
        const auto& in_list = idx.items_of_list[static_cast<std::size_t>(l)];
        std::vector<int> candidates;
        candidates.reserve(static_cast<std::size_t>(idx.n_items));
        for (int i = 0; i < idx.n_items; ++i)
            if (std::find(in_list.begin(), in_list.end(), i) == in_list.end())
                candidates.push_back(i);
        // recommend continuations of the full known list
        const auto scores = model.predict_scores(ectx, u, l, in_list, candidates);
        std::vector<std::size_t> order(candidates.size());
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (scores[a] != scores[b]) return scores[a] > scores[b];
            return candidates[a] < candidates[b];
        });
        std::ostringstream row;
        row.precision(6);
        const int n_out = std::min<int>(top_n, static_cast<int>(candidates.size()));
        for (int r = 0; r < n_out; ++r) {
            row << idx.user_keys[static_cast<std::size_t>(u)] << "\t"
                << idx.list_keys[static_cast<std::size_t>(l)] << "\t" << (r + 1) << "\t"
                << idx.item_keys[static_cast<std::size_t>(candidates[order[static_cast<std::size_t>(r)]])]
                << "\t" << scores[order[static_cast<std::size_t>(r)]] << "\n";
        }
        rows[static_cast<std::size_t>(l)] = row.str();
    }
    for (const auto& r : rows) os << r;
    write_atomic(out, os.str());
    log_line("recommendations written to " + out);
    return 0;
}

template <class S>
int run_ablate(const RunConfig& cfg, const SplitCorpus& split, const KnnGraphs& graphs,
               const std::string& out_dir) {
    const auto outcomes =
        ablation_suite<S>(split, graphs, cfg.train, g_verbosity > 0 ? &std::cerr : nullptr);
    fs::create_directories(out_dir);
    nlohmann::json summary = nlohmann::json::array();
    std::ostringstream table;
    table << "variant      HR@" << cfg.top_n << "   NDCG@" << cfg.top_n << "  MAP@" << cfg.top_n
          << "\n";
    table.precision(4);
    table << std::fixed;
    for (const auto& o : outcomes) {
        const auto dir = fs::path(out_dir) / o.name;
        fs::create_directories(dir);
        auto report = o.test_report;
        report.fingerprint = cfg.fingerprint();
        report.seed = cfg.train.seed;
        write_atomic(dir / "metrics.json", report.to_json() + "\n");
        write_atomic(dir / "trainlog.jsonl", o.log.to_jsonl());
        summary.push_back({{"variant", o.name},
                           {"hr", report.hr},
                           {"ndcg", report.ndcg},
                           {"map", report.map},
                           {"best_epoch", o.log.best_epoch}});
        table << o.name << std::string(o.name.size() < 12 ? 12 - o.name.size() : 1, ' ')
              << report.hr << "   " << report.ndcg << "  " << report.map << "\n";
    }
    write_atomic(fs::path(out_dir) / "summary.json", summary.dump(2) + "\n");
    write_atomic(fs::path(out_dir) / "summary.txt", table.str());
    std::cout << table.str();
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_prefix) {
    if (inputs.empty()) throw ConfigError("report: no input metric files");
    nlohmann::json j = nlohmann::json::array();
    std::ostringstream table;
    table << "label                     HR@N    NDCG@N  MAP@N   pairs\n";
    table.precision(4);
    table << std::fixed;
    for (const auto& path : inputs) {
        const auto report = MetricsReport::from_json_file(path);
        std::string label = fs::path(path).stem().string();
        if (label == "metrics" && fs::path(path).has_parent_path() &&
            !fs::path(path).parent_path().filename().empty())
            label = fs::path(path).parent_path().filename().string();
        j.push_back({{"label", label},
                     {"hr", report.hr},
                     {"ndcg", report.ndcg},
                     {"map", report.map},
                     {"top_n", report.top_n},
                     {"pairs", report.pair_count},
                     {"fingerprint", report.fingerprint}});
        table << label << std::string(label.size() < 25 ? 25 - label.size() : 1, ' ') << report.hr
              << "  " << report.ndcg << "  " << report.map << "  " << report.pair_count << "\n";
    }
    write_atomic(out_prefix + ".json", j.dump(2) + "\n");
    write_atomic(out_prefix + ".txt", table.str());
    std::cout << table.str();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* lvl = std::getenv("HTN_LOG_LEVEL")) g_verbosity = std::atoi(lvl);

    CLI::App app{"HyperTeNet: personalized list continuation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    std::string backend = "openmp";
    app.add_option("--config", config_path, "JSON configuration file");
    app.add_option("--set", overrides, "override a config key (section.key=value)")
        ->take_all()
        ->expected(-1);
    app.add_option("--backend", backend, "kernel backend: openmp or serial")
        ->check(CLI::IsMember({"openmp", "serial"}));
    app.add_flag_callback("-v,--verbose", []() { ++g_verbosity; }, "more progress output");

    // every config key doubles as a dotted long option, e.g. --knn.k 25;
    // repeated occurrences keep the last value
    for (const auto& [key, desc] : RunConfig::schema()) {
        app.add_option_function<std::string>(
               "--" + key, [&overrides, key = key](const std::string& v) {
                   overrides.push_back(key + "=" + v);
               },
               desc)
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast)
            ->group("Config overrides");
    }

    std::string split_dir, graphs_dir, run_dir, out_path, resume_path, phase = "test";
    bool synth = false;
    int rec_n = 5;
    std::vector<std::string> report_inputs;

    auto* prepare = app.add_subcommand("prepare", "ingest interactions and write the split");
    prepare->fallthrough();
    prepare->add_flag("--synth", synth, "generate the bundled synthetic corpus");
    prepare->add_option("--out", out_path, "split output directory")->required();

    auto* build = app.add_subcommand("build-graphs", "build the user/item/list K-NN graphs");
    build->fallthrough();
    build->add_option("--split", split_dir, "split directory")->required();
    build->add_option("--out", out_path, "graph cache directory")->required();

    auto* train_cmd = app.add_subcommand("train", "train the model");
    train_cmd->fallthrough();
    train_cmd->add_option("--split", split_dir, "split directory")->required();
    train_cmd->add_option("--graphs", graphs_dir, "graph cache directory")->required();
    train_cmd->add_option("--out", out_path, "run output directory")->required();
    train_cmd->add_option("--resume", resume_path, "checkpoint to resume from");

    auto* eval_cmd = app.add_subcommand("evaluate", "compute ranking metrics");
    eval_cmd->fallthrough();
    eval_cmd->add_option("--split", split_dir, "split directory")->required();
    eval_cmd->add_option("--graphs", graphs_dir, "graph cache directory")->required();
    eval_cmd->add_option("--run", run_dir, "trained run directory")->required();
    eval_cmd->add_option("--phase", phase, "validation or test")
        ->check(CLI::IsMember({"validation", "test"}));
    eval_cmd->add_option("--out", out_path, "metrics JSON path")->required();

    auto* rec_cmd = app.add_subcommand("recommend", "emit top-N continuations per (user, list)");
    rec_cmd->fallthrough();
    rec_cmd->add_option("--split", split_dir, "split directory")->required();
    rec_cmd->add_option("--graphs", graphs_dir, "graph cache directory")->required();
    rec_cmd->add_option("--run", run_dir, "trained run directory")->required();
    rec_cmd->add_option("--n", rec_n, "recommendations per list");
    rec_cmd->add_option("--out", out_path, "output TSV path")->required();

    auto* abl_cmd = app.add_subcommand("ablate", "train and evaluate the ablation variants");
    abl_cmd->fallthrough();
    abl_cmd->add_option("--split", split_dir, "split directory")->required();
    abl_cmd->add_option("--graphs", graphs_dir, "graph cache directory")->required();
    abl_cmd->add_option("--out", out_path, "ablation output directory")->required();

    auto* rep_cmd = app.add_subcommand("report", "aggregate metric reports into a table");
    rep_cmd->fallthrough();
    rep_cmd->add_option("--inputs", report_inputs, "metrics JSON files")->required()->expected(-1);
    rep_cmd->add_option("--out", out_path, "output path prefix")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        kern::set_backend(backend == "serial" ? kern::Backend::Serial : kern::Backend::Parallel);
        const RunConfig cfg = RunConfig::load(config_path, overrides);

        if (prepare->parsed()) return cmd_prepare(cfg, synth, out_path);
        if (build->parsed()) return cmd_build_graphs(cfg, split_dir, out_path);

        if (rep_cmd->parsed()) return cmd_report(report_inputs, out_path);

        const auto split = read_split(split_dir);

        if (train_cmd->parsed()) {
            const auto graphs = load_graphs(graphs_dir, split, cfg);
            return cfg.precision == "f64"
                       ? run_train<double>(cfg, split, graphs, out_path, resume_path)
                       : run_train<float>(cfg, split, graphs, out_path, resume_path);
        }
        if (abl_cmd->parsed()) {
            const auto graphs = load_graphs(graphs_dir, split, cfg);
            return cfg.precision == "f64" ? run_ablate<double>(cfg, split, graphs, out_path)
                                          : run_ablate<float>(cfg, split, graphs, out_path);
        }
        // downstream commands reuse the run's own effective configuration,
        // including its K-NN cache key
        RunConfig run_cfg = run_config_of(run_dir);
        const auto graphs = load_graphs(graphs_dir, split, run_cfg);
        if (eval_cmd->parsed()) {
            return run_cfg.precision == "f64"
                       ? run_evaluate<double>(run_cfg, split, graphs, run_dir, phase, out_path)
                       : run_evaluate<float>(run_cfg, split, graphs, run_dir, phase, out_path);
        }
        if (rec_cmd->parsed()) {
            return run_cfg.precision == "f64"
                       ? run_recommend<double>(run_cfg, split, graphs, run_dir, rec_n, out_path)
                       : run_recommend<float>(run_cfg, split, graphs, run_dir, rec_n, out_path);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
