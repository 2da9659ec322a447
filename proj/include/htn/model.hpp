#pragma once

// HyperTeNet: shared embedding tables, the two graph networks, and the
// sequence network, wired per the ablation flags. Training losses record
// gradients into the shared ParameterStore; evaluation snapshots the feed
// tables once (frozen, no-grad) and scores candidate sets in parallel.

#include <cmath>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "htn/dataset.hpp"
#include "htn/knn.hpp"
#include "htn/mgnn.hpp"
#include "htn/params.hpp"
#include "htn/ssn.hpp"
#include "htn/tensor.hpp"
#include "htn/uhgnn.hpp"

namespace htn {

struct ModelConfig {
    int dbar = 64;
    int gcn_layers = 2;
    int d_hidden = 64;   // hypergraph representation size
    int heads = 8;       // UHGNN attention heads
    int blocks = 2;      // SSN Transformer blocks
    int ssn_heads = 1;
    int maxlen = 300;
    double dropout = 0.2;
    bool disable_uhgnn = false;     // graph loss scores with MGNN alone
    bool disable_mgnn_feed = false; // UHGNN/SSN consume plain embeddings
    bool ssn_only = false;          // no graph phase at all
    bool uhgnn_exclude_self_softmax = false;
    std::uint64_t seed = 1;

    void validate() const {
        if (dbar < 1 || gcn_layers < 1 || d_hidden < 1 || heads < 1 || blocks < 1 || maxlen < 1)
            throw ConfigError("model config: dimensions must be positive");
        if (ssn_only && !(disable_uhgnn && disable_mgnn_feed))
            throw ConfigError("model config: ssn_only implies disable_uhgnn and disable_mgnn_feed");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model config: dropout out of range");
    }
};

template <class S>
class HyperTeNet {
  public:
    HyperTeNet(int n_users, int n_items, int n_lists, const KnnGraphs* graphs, ModelConfig cfg)
        : cfg_(cfg), graphs_(graphs), n_users_(n_users), n_items_(n_items), n_lists_(n_lists) {
        cfg_.validate();
        if (!cfg_.ssn_only || !cfg_.disable_mgnn_feed) {
            if (graphs_ == nullptr) throw ContractError("model: K-NN graphs required");
        }
        const double limit = 1.0 / std::sqrt(static_cast<double>(cfg_.dbar));
        store_.add_uniform("embed.P", {n_users, cfg_.dbar}, limit, cfg_.seed);
        store_.add_uniform("embed.Q", {n_items, cfg_.dbar}, limit, cfg_.seed);
        store_.add_uniform("embed.T", {n_lists, cfg_.dbar}, limit, cfg_.seed);
        GcnStack<S>::register_params(store_, "user", cfg_.dbar, cfg_.gcn_layers, limit, cfg_.seed);
        GcnStack<S>::register_params(store_, "item", cfg_.dbar, cfg_.gcn_layers, limit, cfg_.seed);
        GcnStack<S>::register_params(store_, "list", cfg_.dbar, cfg_.gcn_layers, limit, cfg_.seed);
        uhgnn_.dbar = cfg_.dbar;
        uhgnn_.d_hidden = cfg_.d_hidden;
        uhgnn_.heads = cfg_.heads;
        uhgnn_.exclude_self_softmax = cfg_.uhgnn_exclude_self_softmax;
        uhgnn_.register_params(store_, limit, cfg_.seed);
        ssn_.dbar = cfg_.dbar;
        ssn_.blocks = cfg_.blocks;
        ssn_.maxlen = cfg_.maxlen;
        ssn_.heads = cfg_.ssn_heads;
        ssn_.dropout_rate = cfg_.dropout;
        ssn_.register_params(store_, limit, cfg_.seed);
    }

    ParameterStore<S>& params() { return store_; }
    const ModelConfig& config() const { return cfg_; }
    const UhgnnNet<S>& uhgnn() const { return uhgnn_; }
    const SsnNet<S>& ssn() const { return ssn_; }
    int n_items() const { return n_items_; }

    struct Tables {
        TensorT<S> users, items, lists;
    };

    // GCN-updated full tables (graph recorded when grads are enabled).
    Tables gcn_tables() {
        return {GcnStack<S>::forward(store_, "user", graphs_->user, store_.get("embed.P"), cfg_.gcn_layers),
                GcnStack<S>::forward(store_, "item", graphs_->item, store_.get("embed.Q"), cfg_.gcn_layers),
                GcnStack<S>::forward(store_, "list", graphs_->list, store_.get("embed.T"), cfg_.gcn_layers)};
    }

    Tables plain_tables() {
        return {store_.get("embed.P"), store_.get("embed.Q"), store_.get("embed.T")};
    }

    // What UHGNN and SSN consume (Fig.-4 style wiring switch).
    Tables feed_tables() { return cfg_.disable_mgnn_feed ? plain_tables() : gcn_tables(); }

    // L_P over a labeled triple batch.
    TensorT<S> graph_loss(const TripleBatch& batch) {
        if (cfg_.ssn_only) throw ContractError("graph_loss: disabled by ssn_only");
        if (batch.triples.empty()) throw ContractError("graph_loss: empty batch");
        const int m = static_cast<int>(batch.triples.size());
        std::vector<int> u_idx(batch.triples.size()), i_idx(batch.triples.size()),
            l_idx(batch.triples.size());
        for (std::size_t t = 0; t < batch.triples.size(); ++t) {
            u_idx[t] = batch.triples[t].user;
            i_idx[t] = batch.triples[t].item;
            l_idx[t] = batch.triples[t].list;
        }

        Tables gcn = gcn_tables();
        auto pu = lookup(gcn.users, u_idx);
        auto qi = lookup(gcn.items, i_idx);
        auto tl = lookup(gcn.lists, l_idx);
        auto y_mgnn = mgnn_score(pu, qi, tl);

        TensorT<S> y;
        if (cfg_.disable_uhgnn) {
            y = y_mgnn;
        } else {
            TensorT<S> fu = pu, fi = qi, fl = tl;
            if (cfg_.disable_mgnn_feed) {
                Tables plain = plain_tables();
                fu = lookup(plain.users, u_idx);
                fi = lookup(plain.items, i_idx);
                fl = lookup(plain.lists, l_idx);
            }
            auto v = concat<S>({reshape(fu, {m, 1, cfg_.dbar}), reshape(fi, {m, 1, cfg_.dbar}),
                                reshape(fl, {m, 1, cfg_.dbar})},
                               1);
            auto y_hgnn = uhgnn_.hyperlink_score(store_, v);
            y = combined_score(y_mgnn, y_hgnn);
        }

        std::vector<S> lbl(batch.labels.size());
        for (std::size_t t = 0; t < batch.labels.size(); ++t) lbl[t] = static_cast<S>(batch.labels[t]);
        auto labels = TensorT<S>::from_data({m}, std::move(lbl));
        return binary_cross_entropy_sum(y, labels);
    }

    // L_SSN over a padded sequence batch.
    TensorT<S> ssn_loss(const SequenceBatch& batch, bool train, Rng& rng) {
        Tables feed = feed_tables();
        auto c = combine_representations(feed.items, feed.users, feed.lists, store_.get("ssn.pos"),
                                         batch);
        const Mask mask = sequence_attention_mask(batch);
        auto out = ssn_.forward(store_, c, mask, train, rng);
        return ssn_sequence_loss(out, feed.items, batch);
    }

    // Frozen snapshot for evaluation; call with grads enabled elsewhere off.
    struct EvalContext {
        Tables feed;
    };
    EvalContext make_eval_context() {
        NoGradGuard ng;
        return {feed_tables()};
    }

    // Scores candidates for one (user, list) pair given the visible context
    // items; pure w.r.t. shared state, safe to call in parallel under an
    // enclosing no-grad scope.
    std::vector<double> predict_scores(const EvalContext& ctx, int user, int list,
                                       const std::vector<int>& context_items,
                                       const std::vector<int>& candidates) {
        if (context_items.empty()) throw ContractError("predict: empty list (cold start unsupported)");
        if (candidates.empty()) throw ContractError("predict: empty candidate set");
#ifdef _OPENMP
        if (omp_in_parallel()) {
            if (grad_enabled())
                throw ContractError("predict: enable a NoGradGuard before parallel evaluation");
            return predict_impl(ctx, user, list, context_items, candidates);
        }
#endif
        NoGradGuard ng;
        return predict_impl(ctx, user, list, context_items, candidates);
    }

    // Parameter partitions for the alternating phases.
    std::vector<std::string> graph_phase_params() const {
        std::vector<std::string> out{"embed.P", "embed.Q", "embed.T"};
        append_mgnn_names(out);
        if (!cfg_.disable_uhgnn)
            for (const auto& n : uhgnn_.param_names()) out.push_back(n);
        return out;
    }
    std::vector<std::string> ssn_phase_params(bool freeze_graph) const {
        std::vector<std::string> out = ssn_.param_names();
        if (freeze_graph) return out;
        out.push_back("embed.P");
        out.push_back("embed.Q");
        out.push_back("embed.T");
        if (!cfg_.disable_mgnn_feed) append_mgnn_names(out);
        return out;
    }

  private:
    void append_mgnn_names(std::vector<std::string>& out) const {
        for (const char* cls : {"user", "item", "list"})
            for (int k = 0; k < cfg_.gcn_layers; ++k) {
                out.push_back("mgnn." + std::string(cls) + ".layer" + std::to_string(k) + ".weight");
                out.push_back("mgnn." + std::string(cls) + ".layer" + std::to_string(k) + ".bias");
            }
    }

    std::vector<double> predict_impl(const EvalContext& ctx, int user, int list,
                                     const std::vector<int>& context_items,
                                     const std::vector<int>& candidates) {
        // visible window: the most recent maxlen items
        const int n = std::min<int>(cfg_.maxlen, static_cast<int>(context_items.size()));
        SequenceBatch b;
        b.rows = 1;
        b.width = n;
        b.negatives_per_position = 0;
        b.users = {user};
        b.lists = {list};
        b.items.assign(static_cast<std::size_t>(n), 0);
        b.positions.assign(static_cast<std::size_t>(n), 0);
        b.targets.assign(static_cast<std::size_t>(n), -1);
        b.has_item.assign(static_cast<std::size_t>(n), 1);
        b.has_target.assign(static_cast<std::size_t>(n), 0);
        const std::size_t off = context_items.size() - static_cast<std::size_t>(n);
        for (int t = 0; t < n; ++t) {
            b.items[static_cast<std::size_t>(t)] = context_items[off + static_cast<std::size_t>(t)];
            b.positions[static_cast<std::size_t>(t)] = t;
        }
        auto c = combine_representations(ctx.feed.items, ctx.feed.users, ctx.feed.lists,
                                         store_.get("ssn.pos"), b);
        const Mask mask = sequence_attention_mask(b);
        Rng rng = make_rng(0);  // dropout off in eval; rng unused
        auto out = ssn_.forward(store_, c, mask, false, rng);
        // next-item embedding = output at the last valid position
        const int d = cfg_.dbar;
        std::vector<S> pred(static_cast<std::size_t>(d));
        const S* last = out.data() + static_cast<std::int64_t>(n - 1) * d;
        std::copy(last, last + d, pred.begin());
        return relevance_scores(pred, ctx.feed.items, candidates);
    }

    ModelConfig cfg_;
    ParameterStore<S> store_;
    const KnnGraphs* graphs_;
    UhgnnNet<S> uhgnn_;
    SsnNet<S> ssn_;
    int n_users_, n_items_, n_lists_;
};

}  // namespace htn
