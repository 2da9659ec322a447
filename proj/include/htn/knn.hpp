#pragma once

// K-NN graph pipeline: interaction bipartite graphs, random-walk corpora,
// skip-gram node embeddings, and the cosine K-nearest-neighbor adjacencies
// consumed by the graph convolutions. Everything is deterministic under a
// fixed seed; walk generation parallelizes over start nodes with per-walk
// derived seeds.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "htn/common.hpp"
#include "htn/dataset.hpp"

namespace htn {

enum class BipartiteKind { UserItem, ListItem };

// Left nodes are users or lists; right nodes are items. Token space for
// walks: left tokens are [0, n_left), right tokens [n_left, n_left+n_right).
struct BipartiteGraph {
    BipartiteKind kind = BipartiteKind::ListItem;
    int n_left = 0;
    int n_right = 0;
    std::vector<std::vector<int>> left_nbrs;   // sorted, duplicate-free
    std::vector<std::vector<int>> right_nbrs;  // sorted, duplicate-free

    int n_tokens() const { return n_left + n_right; }
};

struct WalkCorpus {
    int n_tokens = 0;
    int walks_per_node = 0;
    int walk_length = 0;
    std::vector<std::vector<int>> walks;
};

struct KnnAdjacency {
    std::string entity_class;
    int k = 0;
    std::vector<std::vector<int>> neighbors;   // self first, then the top-K
    std::vector<std::vector<double>> weights;  // nonnegative, row sums to 1

    int n_nodes() const { return static_cast<int>(neighbors.size()); }

    // CSR view for the aggregation kernel.
    std::vector<int> flat_nbr;
    std::vector<double> flat_w;
    std::vector<std::int64_t> row_off;
    void build_csr();
};

struct SkipgramConfig {
    int dim = 64;
    int window = 5;
    int negatives = 5;
    int epochs = 3;
    double lr = 0.025;
};

struct KnnPipelineConfig {
    int k = 50;
    int walks_per_node = 10;
    int walk_length = 80;
    SkipgramConfig skipgram;
};

BipartiteGraph build_bipartite(const CorpusIndex& index, BipartiteKind kind);

WalkCorpus random_walks(const BipartiteGraph& graph, int walks_per_node, int walk_length,
                        std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Skip-gram with negative sampling (unigram^0.75 noise) over the walk
// corpus; returns one dim-vector per token.
std::vector<std::vector<double>> train_skipgram(const WalkCorpus& corpus, const SkipgramConfig& cfg,
                                                std::uint64_t seed);

// Per node: self plus the top-K others by cosine similarity (ties broken by
// lower index); neighbor weights are cosines clamped at zero, self weight 1,
// rows normalized to sum 1.
KnnAdjacency build_knn_adjacency(const std::vector<std::vector<double>>& embeddings,
                                 const std::string& entity_class, int k,
                                 std::vector<std::string>* warnings = nullptr);

// Full pipeline for the three entity classes. User neighbors come from
// user-item walks; item and list neighbors from list-item walks.
struct KnnGraphs {
    KnnAdjacency user, item, list;
};
KnnGraphs build_knn_graphs(const CorpusIndex& index, const KnnPipelineConfig& cfg,
                           std::uint64_t seed, std::vector<std::string>* warnings = nullptr);

// Text cache keyed by (corpus hash, seed, parameters); load returns nothing
// on a key mismatch so callers rebuild.
void save_knn(const KnnAdjacency& adj, const std::string& path, const std::string& key);
std::optional<KnnAdjacency> load_knn(const std::string& path, const std::string& expected_key);

}  // namespace htn
