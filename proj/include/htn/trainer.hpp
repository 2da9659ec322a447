#pragma once

// Alternating optimization: each epoch runs a full pass of graph batches
// minimizing L_P, then a full pass of sequence batches minimizing L_SSN,
// over the shared embedding tables. Early stopping tracks validation NDCG@5
// and restores the best checkpoint. Negatives are resampled fresh per epoch,
// seeded by (seed, epoch); two runs with the same config and seed produce
// identical logs and parameters.

#include <chrono>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "htn/adam.hpp"
#include "htn/dataset.hpp"
#include "htn/metrics.hpp"
#include "htn/model.hpp"

namespace htn {

struct TrainConfig {
    int dbar = 64;
    double lr = 0.001;
    int graph_batch = 2048;
    int ssn_batch = 256;
    int neg_ratio = 5;       // graph-side negatives per positive (paper-tuned 3..7)
    int ssn_negatives = 1;   // per-position sequence negatives
    int max_epochs = 300;
    int patience = 20;
    int maxlen = 300;
    int gcn_layers = 2;
    int d_hidden = 64;
    int heads = 8;
    int blocks = 2;
    int ssn_heads = 1;
    double dropout = 0.2;
    std::uint64_t seed = 1;
    bool disable_uhgnn = false;
    bool disable_mgnn_feed = false;
    bool ssn_only = false;
    bool freeze_graph_in_ssn = false;
    bool uhgnn_exclude_self_softmax = false;

    void validate() const {
        if (dbar < 1 || lr <= 0.0 || graph_batch < 1 || ssn_batch < 1 || max_epochs < 1 ||
            patience < 1 || maxlen < 1 || neg_ratio < 1 || ssn_negatives < 1)
            throw ConfigError("train config: all sizes and rates must be positive");
        if (ssn_only && !(disable_uhgnn && disable_mgnn_feed))
            throw ConfigError("train config: ssn_only implies disable_uhgnn and disable_mgnn_feed");
    }

    ModelConfig model_config() const {
        ModelConfig m;
        m.dbar = dbar;
        m.gcn_layers = gcn_layers;
        m.d_hidden = d_hidden;
        m.heads = heads;
        m.blocks = blocks;
        m.ssn_heads = ssn_heads;
        m.maxlen = maxlen;
        m.dropout = dropout;
        m.disable_uhgnn = disable_uhgnn;
        m.disable_mgnn_feed = disable_mgnn_feed;
        m.ssn_only = ssn_only;
        m.uhgnn_exclude_self_softmax = uhgnn_exclude_self_softmax;
        m.seed = seed;
        return m;
    }
};

struct EpochRecord {
    int epoch = 0;
    double loss_p = 0.0;
    double loss_ssn = 0.0;
    double hr = 0.0;
    double ndcg = 0.0;
    double map = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;
    double best_ndcg = -1.0;

    std::string to_jsonl() const {
        std::ostringstream os;
        os.precision(10);
        for (const auto& e : epochs)
            os << "{\"epoch\":" << e.epoch << ",\"loss_p\":" << e.loss_p
               << ",\"loss_ssn\":" << e.loss_ssn << ",\"hr\":" << e.hr << ",\"ndcg\":" << e.ndcg
               << ",\"map\":" << e.map << ",\"seconds\":" << e.seconds << "}\n";
        os << "{\"best_epoch\":" << best_epoch << ",\"best_ndcg\":" << best_ndcg << "}\n";
        return os.str();
    }
};

template <class S>
struct TrainResult {
    TrainLog log;
    std::map<std::string, std::vector<S>> best_params;
};

template <class S>
MetricsReport evaluate(HyperTeNet<S>& model, const SplitCorpus& split, bool test_phase,
                       int top_n = 5) {
    NoGradGuard ng;
    auto ectx = model.make_eval_context();
    const CandidateScorer scorer = [&](int u, int l, const std::vector<int>& cands, bool phase) {
        return model.predict_scores(ectx, u, l, split.context_items(l, phase), cands);
    };
    return evaluate_model(scorer, split, test_phase, top_n);
}

template <class S>
TrainResult<S> train(HyperTeNet<S>& model, const SplitCorpus& split, const TrainConfig& cfg,
                     std::ostream* progress = nullptr) {
    cfg.validate();
    auto& store = model.params();
    const auto positives = positive_triples(split);

    AdamConfig adam_cfg;
    adam_cfg.lr = cfg.lr;
    std::optional<Adam<S>> opt_graph;
    if (!cfg.ssn_only) opt_graph.emplace(store, model.graph_phase_params(), adam_cfg);
    Adam<S> opt_ssn(store, model.ssn_phase_params(cfg.freeze_graph_in_ssn), adam_cfg);

    TrainResult<S> result;
    result.best_params = store.snapshot();
    int last_good_epoch = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochRecord rec;
        rec.epoch = epoch;
        try {
            // phase A: graph networks on D_G = D+ u D-
            if (!cfg.ssn_only) {
                auto negatives = sample_negative_triples(
                    split.index, positives, cfg.neg_ratio,
                    derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xA));
                std::vector<std::pair<Triple, double>> pool;
                pool.reserve(positives.size() + negatives.size());
                for (const auto& t : positives) pool.push_back({t, 1.0});
                for (const auto& t : negatives) pool.push_back({t, 0.0});
                Rng shuffle_rng =
                    make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xB));
                std::shuffle(pool.begin(), pool.end(), shuffle_rng);

                double total = 0.0;
                std::size_t examples = 0;
                for (std::size_t start = 0; start < pool.size();
                     start += static_cast<std::size_t>(cfg.graph_batch)) {
                    const std::size_t stop =
                        std::min(pool.size(), start + static_cast<std::size_t>(cfg.graph_batch));
                    TripleBatch batch;
                    for (std::size_t i = start; i < stop; ++i) {
                        batch.triples.push_back(pool[i].first);
                        batch.labels.push_back(pool[i].second);
                    }
                    auto loss = model.graph_loss(batch);
                    total += static_cast<double>(loss.item());
                    examples += batch.triples.size();
                    loss.backward();
                    opt_graph->step();
                    store.zero_grads();
                }
                rec.loss_p = examples > 0 ? total / static_cast<double>(examples) : 0.0;
            }

            // phase B: sequence network on D_SSN
            {
                const auto batches = make_sequence_batches(
                    split, cfg.maxlen, cfg.ssn_batch, cfg.ssn_negatives,
                    derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xC));
                Rng dropout_rng =
                    make_rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xD));
                double total = 0.0;
                std::size_t positions = 0;
                for (const auto& batch : batches) {
                    auto loss = model.ssn_loss(batch, true, dropout_rng);
                    total += static_cast<double>(loss.item());
                    for (auto v : batch.has_target) positions += v ? 1 : 0;
                    loss.backward();
                    opt_ssn.step();
                    store.zero_grads();
                }
                rec.loss_ssn = positions > 0 ? total / static_cast<double>(positions) : 0.0;
            }
        } catch (const NumericError& e) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               " (last good epoch " + std::to_string(last_good_epoch) +
                               "): " + e.what());
        }
        last_good_epoch = epoch;

        const auto val = evaluate(model, split, false);
        rec.hr = val.hr;
        rec.ndcg = val.ndcg;
        rec.map = val.map;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.epochs.push_back(rec);

        if (rec.ndcg > result.log.best_ndcg) {
            result.log.best_ndcg = rec.ndcg;
            result.log.best_epoch = epoch;
            result.best_params = store.snapshot();
        }
        if (progress) {
            (*progress) << "epoch " << epoch << "  L_P " << rec.loss_p << "  L_SSN " << rec.loss_ssn
                        << "  val NDCG@5 " << rec.ndcg << "\n";
        }
        if (epoch - result.log.best_epoch >= cfg.patience) break;
    }

    store.restore(result.best_params);
    return result;
}

struct AblationOutcome {
    std::string name;
    TrainLog log;
    MetricsReport test_report;
};

// Runs {SSN only, MGNN+SSN, full, plain-embedding-feed} under a shared seed.
template <class S>
std::vector<AblationOutcome> ablation_suite(const SplitCorpus& split, const KnnGraphs& graphs,
                                            const TrainConfig& base,
                                            std::ostream* progress = nullptr) {
    struct Variant {
        const char* name;
        bool ssn_only, disable_uhgnn, disable_mgnn_feed;
    };
    const Variant variants[] = {
        {"ssn-only", true, true, true},
        {"mgnn-ssn", false, true, false},
        {"full", false, false, false},
        {"plain-feed", false, false, true},
    };
    std::vector<AblationOutcome> out;
    for (const auto& v : variants) {
        TrainConfig cfg = base;
        cfg.ssn_only = v.ssn_only;
        cfg.disable_uhgnn = v.disable_uhgnn;
        cfg.disable_mgnn_feed = v.disable_mgnn_feed;
        if (progress) (*progress) << "[ablation] training variant '" << v.name << "'\n";
        HyperTeNet<S> model(split.index.n_users, split.index.n_items, split.index.n_lists, &graphs,
                            cfg.model_config());
        auto result = train(model, split, cfg, nullptr);
        AblationOutcome o;
        o.name = v.name;
        o.log = std::move(result.log);
        o.test_report = evaluate(model, split, true);
        if (progress)
            (*progress) << "[ablation] " << v.name << ": " << o.test_report.table("test") << "\n";
        out.push_back(std::move(o));
    }
    return out;
}

}  // namespace htn
