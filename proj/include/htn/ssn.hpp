#pragma once

// Self-attention sequence network. Combined inputs are q'_t + p'_u + t'_l +
// rho_t per position (Eq.-style additive fusion); blocks are pre-norm
// residual sublayers g'(x) = x + Dropout(g(LayerNorm(x))) with scaled
// dot-product attention under an autoregressive mask, and a terminating
// layer norm feeds the relevance dot products.

#include <string>
#include <vector>

#include "htn/dataset.hpp"
#include "htn/params.hpp"
#include "htn/tensor.hpp"

namespace htn {

template <class S>
struct SsnNet {
    int dbar = 64;
    int blocks = 2;
    int maxlen = 300;
    int heads = 1;  // the equations use a single head; more behind config
    double dropout_rate = 0.2;

    void register_params(ParameterStore<S>& ps, double limit, std::uint64_t seed) const {
        if (heads < 1 || dbar % heads != 0)
            throw ConfigError("ssn: heads must divide the embedding size");
        ps.add_uniform("ssn.pos", {maxlen, dbar}, limit, seed);
        for (int b = 0; b < blocks; ++b) {
            const std::string prefix = "ssn.block" + std::to_string(b) + ".";
            for (const char* part : {"attn.q", "attn.k", "attn.v"}) {
                ps.add_uniform(prefix + part + ".weight", {dbar, dbar}, limit, seed);
                ps.add_constant(prefix + part + ".bias", {dbar}, S(0));
            }
            for (const char* part : {"ff1", "ff2"}) {
                ps.add_uniform(prefix + std::string(part) + ".weight", {dbar, dbar}, limit, seed);
                ps.add_constant(prefix + std::string(part) + ".bias", {dbar}, S(0));
            }
            for (const char* part : {"ln1", "ln2"}) {
                ps.add_constant(prefix + std::string(part) + ".gain", {dbar}, S(1));
                ps.add_constant(prefix + std::string(part) + ".bias", {dbar}, S(0));
            }
        }
        ps.add_constant("ssn.ln_final.gain", {dbar}, S(1));
        ps.add_constant("ssn.ln_final.bias", {dbar}, S(0));
    }

    std::vector<std::string> param_names() const {
        std::vector<std::string> out{"ssn.pos", "ssn.ln_final.gain", "ssn.ln_final.bias"};
        for (int b = 0; b < blocks; ++b) {
            const std::string prefix = "ssn.block" + std::to_string(b) + ".";
            for (const char* part : {"attn.q.weight", "attn.q.bias", "attn.k.weight", "attn.k.bias",
                                     "attn.v.weight", "attn.v.bias", "ff1.weight", "ff1.bias",
                                     "ff2.weight", "ff2.bias", "ln1.gain", "ln1.bias", "ln2.gain",
                                     "ln2.bias"})
                out.push_back(prefix + part);
        }
        return out;
    }

    TensorT<S> layer_norm_affine(ParameterStore<S>& ps, const TensorT<S>& x,
                                 const std::string& prefix) const {
        return add(mul(layer_norm(x, -1), ps.get(prefix + ".gain")), ps.get(prefix + ".bias"));
    }

    // One pre-norm Transformer block; attn_mask marks (query, key) pairs to
    // block (causal plus key padding), shaped like the trailing (n, n) or the
    // full (B, n, n).
    TensorT<S> transformer_block(ParameterStore<S>& ps, const TensorT<S>& x, const Mask& attn_mask,
                                 int block, bool train, Rng& rng) const {
        const std::string prefix = "ssn.block" + std::to_string(block) + ".";
        const int d = dbar / heads;

        auto x1 = layer_norm_affine(ps, x, prefix + "ln1");
        auto q = add(matmul(x1, ps.get(prefix + "attn.q.weight")), ps.get(prefix + "attn.q.bias"));
        auto k = add(matmul(x1, ps.get(prefix + "attn.k.weight")), ps.get(prefix + "attn.k.bias"));
        auto v = add(matmul(x1, ps.get(prefix + "attn.v.weight")), ps.get(prefix + "attn.v.bias"));

        TensorT<S> attn_out;
        if (heads == 1) {
            auto energy = scale(matmul(q, k, false, true), S(1.0 / std::sqrt(double(dbar))));
            auto alpha = softmax(masked_fill(energy, attn_mask, S(-1e30)), -1);
            attn_out = matmul(alpha, v);
        } else {
            // slice the projections per head along the feature axis
            std::vector<TensorT<S>> outs;
            for (int h = 0; h < heads; ++h) {
                auto qh = slice_last(q, h * d, d);
                auto kh = slice_last(k, h * d, d);
                auto vh = slice_last(v, h * d, d);
                auto energy = scale(matmul(qh, kh, false, true), S(1.0 / std::sqrt(double(d))));
                auto alpha = softmax(masked_fill(energy, attn_mask, S(-1e30)), -1);
                outs.push_back(matmul(alpha, vh));
            }
            attn_out = concat(outs, -1);
        }
        auto x2 = add(x, dropout(attn_out, dropout_rate, train, rng));

        auto x3 = layer_norm_affine(ps, x2, prefix + "ln2");
        auto ff = add(matmul(relu(add(matmul(x3, ps.get(prefix + "ff1.weight")),
                                      ps.get(prefix + "ff1.bias"))),
                             ps.get(prefix + "ff2.weight")),
                      ps.get(prefix + "ff2.bias"));
        return add(x2, dropout(ff, dropout_rate, train, rng));
    }

    // Full stack; X is (B, n, dbar) or (n, dbar).
    TensorT<S> forward(ParameterStore<S>& ps, const TensorT<S>& x, const Mask& attn_mask,
                       bool train, Rng& rng) const {
        TensorT<S> h = x;
        for (int b = 0; b < blocks; ++b) h = transformer_block(ps, h, attn_mask, b, train, rng);
        return layer_norm_affine(ps, h, "ssn.ln_final");
    }

};

// Eq.-style combined representation rows for a padded batch: item, user,
// list, and positional lookups summed, padding slots zeroed.
template <class S>
TensorT<S> combine_representations(const TensorT<S>& item_table, const TensorT<S>& user_table,
                                   const TensorT<S>& list_table, const TensorT<S>& pos_table,
                                   const SequenceBatch& batch) {
    const int rows = batch.rows, width = batch.width;
    const Shape idx_shape{rows, width};
    std::vector<int> user_idx(batch.items.size()), list_idx(batch.items.size());
    for (int r = 0; r < rows; ++r)
        for (int t = 0; t < width; ++t) {
            user_idx[static_cast<std::size_t>(batch.slot(r, t))] = batch.users[static_cast<std::size_t>(r)];
            list_idx[static_cast<std::size_t>(batch.slot(r, t))] = batch.lists[static_cast<std::size_t>(r)];
        }
    auto c = add(add(lookup(item_table, batch.items, idx_shape),
                     lookup(user_table, user_idx, idx_shape)),
                 add(lookup(list_table, list_idx, idx_shape),
                     lookup(pos_table, batch.positions, idx_shape)));
    // zero the padding rows
    const int d = item_table.dim(1);
    Mask pad = Mask::zeros({rows, width, d});
    for (std::int64_t s = 0; s < static_cast<std::int64_t>(batch.items.size()); ++s)
        if (!batch.has_item[static_cast<std::size_t>(s)])
            for (int cdim = 0; cdim < d; ++cdim) pad.at(s * d + cdim) = 1;
    return masked_fill(c, pad, S(0));
}

// Causal + key-padding attention mask for a batch.
inline Mask sequence_attention_mask(const SequenceBatch& batch) {
    Mask m = Mask::zeros({batch.rows, batch.width, batch.width});
    for (int r = 0; r < batch.rows; ++r)
        for (int i = 0; i < batch.width; ++i)
            for (int j = 0; j < batch.width; ++j) {
                const bool blocked =
                    j > i || !batch.has_item[static_cast<std::size_t>(batch.slot(r, j))];
                if (blocked)
                    m.at((static_cast<std::int64_t>(r) * batch.width + i) * batch.width + j) = 1;
            }
    return m;
}

// r_i = sigmoid(q'_i . pred) for each candidate, reading frozen data.
template <class S>
std::vector<double> relevance_scores(const std::vector<S>& pred, const TensorT<S>& item_table,
                                     const std::vector<int>& candidates) {
    const int d = item_table.dim(1);
    if (static_cast<int>(pred.size()) != d)
        throw DimensionError("relevance_scores: prediction length mismatch");
    std::vector<double> out(candidates.size());
    for (std::size_t c = 0; c < candidates.size(); ++c) {
        if (candidates[c] < 0 || candidates[c] >= item_table.dim(0))
            throw ContractError("relevance_scores: unknown item index " +
                                std::to_string(candidates[c]));
        const S* row = item_table.data() + static_cast<std::int64_t>(candidates[c]) * d;
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += static_cast<double>(row[i]) * static_cast<double>(pred[static_cast<std::size_t>(i)]);
        out[c] = 1.0 / (1.0 + std::exp(-dot));
    }
    return out;
}

// L_SSN: per valid position, -ln r(next item) - sum_neg ln(1 - r(negative)).
template <class S>
TensorT<S> ssn_sequence_loss(const TensorT<S>& outputs, const TensorT<S>& item_table,
                             const SequenceBatch& batch) {
    const S eps = S(1e-7);
    const int rows = batch.rows, width = batch.width;
    bool any_valid = false;
    for (auto v : batch.has_target) any_valid = any_valid || v != 0;
    if (!any_valid) throw ContractError("ssn loss: batch has no supervised positions");

    auto valid = TensorT<S>::zeros({rows, width});
    std::vector<int> pos_idx(batch.targets.size(), 0);
    for (std::size_t s = 0; s < batch.targets.size(); ++s) {
        if (batch.has_target[s]) {
            valid.data()[s] = S(1);
            pos_idx[s] = batch.targets[s];
        }
    }
    const Shape idx_shape{rows, width};
    auto r_pos = sigmoid(rowdot(outputs, lookup(item_table, pos_idx, idx_shape)));
    auto total = sum_all(mul(log(clamp(r_pos, eps, S(1) - eps)), valid));
    for (int j = 0; j < batch.negatives_per_position; ++j) {
        std::vector<int> neg_idx(batch.targets.size(), 0);
        for (std::size_t s = 0; s < batch.targets.size(); ++s)
            if (batch.has_target[s])
                neg_idx[s] = batch.negatives[s * static_cast<std::size_t>(batch.negatives_per_position) +
                                             static_cast<std::size_t>(j)];
        auto r_neg = sigmoid(rowdot(outputs, lookup(item_table, neg_idx, idx_shape)));
        auto one_minus = clamp(affine(r_neg, S(-1), S(1)), eps, S(1) - eps);
        total = add(total, sum_all(mul(log(one_minus), valid)));
    }
    return scale(total, S(-1));
}

}  // namespace htn
