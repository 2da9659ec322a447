#pragma once

// Uniform hypergraph network over (user, item, list) candidate hyperedges.
// Static embeddings see one node at a time; dynamic embeddings attend over
// the other two nodes of the triple (the self term participates in the
// softmax normalizer but is excluded from the weighted sum). A node's
// hyperlink probability comes from the squared static-dynamic gap, and the
// edge probability is the plain average over the three nodes.

#include <string>
#include <vector>

#include "htn/params.hpp"
#include "htn/tensor.hpp"

namespace htn {

template <class S>
struct UhgnnNet {
    int dbar = 64;
    int d_hidden = 64;
    int heads = 8;
    // Sensitivity knob: drop e_jj from the softmax normalizer as well.
    bool exclude_self_softmax = false;

    void register_params(ParameterStore<S>& ps, double limit, std::uint64_t seed) const {
        if (heads < 1 || d_hidden % heads != 0)
            throw ConfigError("uhgnn: heads must divide d_hidden (" + std::to_string(heads) + " vs " +
                              std::to_string(d_hidden) + ")");
        ps.add_uniform("uhgnn.static.weight", {dbar, d_hidden}, limit, seed);
        ps.add_constant("uhgnn.static.bias", {d_hidden}, S(0));
        const int dk = d_hidden / heads;
        for (int h = 0; h < heads; ++h) {
            const std::string prefix = "uhgnn.head" + std::to_string(h) + ".";
            for (const char* part : {"q", "k", "v"}) {
                ps.add_uniform(prefix + part + ".weight", {dbar, dk}, limit, seed);
                ps.add_constant(prefix + part + ".bias", {dk}, S(0));
            }
        }
        ps.add_uniform("uhgnn.combine.weight", {d_hidden, d_hidden}, limit, seed);
        ps.add_constant("uhgnn.combine.bias", {d_hidden}, S(0));
        ps.add_uniform("uhgnn.score.weight", {d_hidden, 1}, limit, seed);
        ps.add_constant("uhgnn.score.bias", {1}, S(0));
    }

    std::vector<std::string> param_names() const {
        std::vector<std::string> out{"uhgnn.static.weight", "uhgnn.static.bias",
                                     "uhgnn.combine.weight", "uhgnn.combine.bias",
                                     "uhgnn.score.weight", "uhgnn.score.bias"};
        for (int h = 0; h < heads; ++h)
            for (const char* part : {"q", "k", "v"}) {
                out.push_back("uhgnn.head" + std::to_string(h) + "." + part + ".weight");
                out.push_back("uhgnn.head" + std::to_string(h) + "." + part + ".bias");
            }
        return out;
    }

    // V: (M, 3, dbar) node features -> (M, 3, d_hidden), per-node only.
    TensorT<S> static_embed(ParameterStore<S>& ps, const TensorT<S>& V) const {
        return tanh(add(matmul(V, ps.get("uhgnn.static.weight")), ps.get("uhgnn.static.bias")));
    }

    // V: (M, 3, dbar) -> dynamic embeddings (M, 3, d_hidden). Per-head q/k/v
    // projections are fused into one matmul per role and sliced back out.
    TensorT<S> dynamic_embed(ParameterStore<S>& ps, const TensorT<S>& V) const {
        const int dk = d_hidden / heads;
        auto fused = [&](const char* part) {
            std::vector<TensorT<S>> ws, bs;
            for (int h = 0; h < heads; ++h) {
                const std::string prefix = "uhgnn.head" + std::to_string(h) + ".";
                ws.push_back(ps.get(prefix + part + ".weight"));
                bs.push_back(ps.get(prefix + part + ".bias"));
            }
            return add(matmul(V, heads == 1 ? ws[0] : concat(ws, -1)),
                       heads == 1 ? bs[0] : concat(bs, -1));
        };
        auto q_all = fused("q");
        auto k_all = fused("k");
        auto v_all = fused("v");

        // off-diagonal mask keeps alpha_jj out of the weighted sum
        auto offdiag = TensorT<S>::full({3, 3}, S(1));
        for (int j = 0; j < 3; ++j) offdiag.data()[j * 3 + j] = S(0);
        Mask eye = Mask::zeros({3, 3});
        for (int j = 0; j < 3; ++j) eye.at(j * 3 + j) = 1;

        std::vector<TensorT<S>> head_ctx;
        head_ctx.reserve(static_cast<std::size_t>(heads));
        for (int h = 0; h < heads; ++h) {
            auto q = heads == 1 ? q_all : slice_last(q_all, h * dk, dk);
            auto k = heads == 1 ? k_all : slice_last(k_all, h * dk, dk);
            auto v = heads == 1 ? v_all : slice_last(v_all, h * dk, dk);
            auto energy = matmul(q, k, false, true);  // (M, 3, 3), no scaling
            if (exclude_self_softmax) energy = masked_fill(energy, eye, S(-1e30));
            auto alpha = softmax(energy, -1);
            head_ctx.push_back(matmul(mul(alpha, offdiag), v));
        }
        auto ctx = heads == 1 ? head_ctx[0] : concat(head_ctx, -1);  // (M, 3, d_hidden)
        return tanh(add(matmul(ctx, ps.get("uhgnn.combine.weight")), ps.get("uhgnn.combine.bias")));
    }

    // o_j = sigmoid(W0 . (d_j - s_j)^o2) -> (M, 3).
    TensorT<S> node_probs(ParameterStore<S>& ps, const TensorT<S>& dynamic,
                          const TensorT<S>& statics) const {
        auto gap = square(sub(dynamic, statics));
        auto logits = add(matmul(gap, ps.get("uhgnn.score.weight")), ps.get("uhgnn.score.bias"));
        const int m = logits.dim(0);
        return sigmoid(reshape(logits, {m, 3}));
    }

    // y_hgnn = mean over the three node probabilities -> (M).
    TensorT<S> hyperlink_score(ParameterStore<S>& ps, const TensorT<S>& V) const {
        auto statics = static_embed(ps, V);
        auto dynamic = dynamic_embed(ps, V);
        return mean(node_probs(ps, dynamic, statics), 1);
    }
};

// y = (y_mgnn + y_hgnn) / 2
template <class S>
TensorT<S> combined_score(const TensorT<S>& y_mgnn, const TensorT<S>& y_hgnn) {
    return scale(add(y_mgnn, y_hgnn), S(0.5));
}

// Cross entropy over D_G = D+ union D-; probabilities clamped before log.
template <class S>
TensorT<S> binary_cross_entropy_sum(const TensorT<S>& y, const TensorT<S>& labels) {
    const S eps = S(1e-7);
    auto pos = mul(log(clamp(y, eps, S(1) - eps)), labels);
    auto neg = mul(log(clamp(affine(y, S(-1), S(1)), eps, S(1) - eps)), affine(labels, S(-1), S(1)));
    return scale(sum_all(add(pos, neg)), S(-1));
}

}  // namespace htn
