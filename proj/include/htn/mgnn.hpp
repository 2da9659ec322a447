#pragma once

// Multi-view GNN: per-class GCN stacks over the K-NN adjacencies plus the
// pairwise dot-product link score. A layer transforms every embedding with
// the layer weight, then takes the adjacency-weighted sum over each node's
// neighborhood (self included); ReLU between layers, none after the last.

#include <string>

#include "htn/knn.hpp"
#include "htn/params.hpp"
#include "htn/tensor.hpp"

namespace htn {

// out[i,:] = sum_j w_ij x[nbr_ij,:] over the adjacency rows. The adjacency
// must outlive the backward pass of any graph recorded through this op.
template <class S>
TensorT<S> knn_aggregate(const KnnAdjacency& adj, const TensorT<S>& x) {
    if (x.rank() != 2) throw DimensionError("knn_aggregate: input must be 2D, got " + shape_str(x.shape()));
    if (adj.n_nodes() != x.dim(0))
        throw DimensionError("knn_aggregate: adjacency has " + std::to_string(adj.n_nodes()) +
                             " rows, input " + shape_str(x.shape()));
    if (adj.row_off.empty()) throw ContractError("knn_aggregate: adjacency CSR not built");
    const int n = x.dim(0), d = x.dim(1);
    auto out = TensorT<S>::raw({n, d});
    kern::weighted_gather_sum(adj.flat_nbr.data(), adj.flat_w.data(), adj.row_off.data(), x.data(),
                              out.data(), n, d);
    detail::check_finite(out, "knn_aggregate");
    if (detail::track<S>({&x})) {
        const KnnAdjacency* a = &adj;
        detail::attach<S>(out, "knn_aggregate", {x}, [a, n, d](Node<S>& self) {
            auto& p = *self.parents[0];
            if (!p.requires_grad) return;
            p.ensure_grad();
            for (int i = 0; i < n; ++i) {
                const S* g = self.grad.data() + static_cast<std::int64_t>(i) * d;
                for (std::int64_t e = a->row_off[static_cast<std::size_t>(i)];
                     e < a->row_off[static_cast<std::size_t>(i) + 1]; ++e) {
                    const S w = static_cast<S>(a->flat_w[static_cast<std::size_t>(e)]);
                    S* dst = p.grad.data() +
                             static_cast<std::int64_t>(a->flat_nbr[static_cast<std::size_t>(e)]) * d;
                    for (int c = 0; c < d; ++c) dst[c] += w * g[c];
                }
            }
        });
    }
    return out;
}

template <class S>
struct GcnStack {
    static void register_params(ParameterStore<S>& ps, const std::string& cls, int dbar,
                                int layers, double limit, std::uint64_t seed) {
        for (int k = 0; k < layers; ++k) {
            const std::string prefix = "mgnn." + cls + ".layer" + std::to_string(k) + ".";
            ps.add_uniform(prefix + "weight", {dbar, dbar}, limit, seed);
            ps.add_constant(prefix + "bias", {dbar}, S(0));
        }
    }

    // table is (n, dbar); returns the updated full table.
    static TensorT<S> forward(ParameterStore<S>& ps, const std::string& cls,
                              const KnnAdjacency& adj, const TensorT<S>& table, int layers) {
        TensorT<S> x = table;
        for (int k = 0; k < layers; ++k) {
            const std::string prefix = "mgnn." + cls + ".layer" + std::to_string(k) + ".";
            auto transformed = add(matmul(x, ps.get(prefix + "weight")), ps.get(prefix + "bias"));
            x = knn_aggregate(adj, transformed);
            if (k + 1 < layers) x = relu(x);
        }
        return x;
    }
};

// sigmoid(p'.q' + q'.t' + t'.p') over batch rows (M, d) -> (M).
template <class S>
TensorT<S> mgnn_score(const TensorT<S>& pu, const TensorT<S>& qi, const TensorT<S>& tl) {
    auto s = add(add(rowdot(pu, qi), rowdot(qi, tl)), rowdot(tl, pu));
    return sigmoid(s);
}

}  // namespace htn
