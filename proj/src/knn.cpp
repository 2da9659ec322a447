#include "htn/knn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace htn {

namespace {

void warn(std::vector<std::string>* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

}  // namespace

void KnnAdjacency::build_csr() {
    flat_nbr.clear();
    flat_w.clear();
    row_off.assign(neighbors.size() + 1, 0);
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
        for (std::size_t j = 0; j < neighbors[i].size(); ++j) {
            flat_nbr.push_back(neighbors[i][j]);
            flat_w.push_back(weights[i][j]);
        }
        row_off[i + 1] = static_cast<std::int64_t>(flat_nbr.size());
    }
}

BipartiteGraph build_bipartite(const CorpusIndex& index, BipartiteKind kind) {
    if (index.n_lists == 0) throw ContractError("build_bipartite: empty corpus");
    BipartiteGraph g;
    g.kind = kind;
    g.n_right = index.n_items;
    g.n_left = kind == BipartiteKind::UserItem ? index.n_users : index.n_lists;
    std::vector<std::set<int>> left(static_cast<std::size_t>(g.n_left));
    std::vector<std::set<int>> right(static_cast<std::size_t>(g.n_right));
    for (int l = 0; l < index.n_lists; ++l) {
        const int left_node = kind == BipartiteKind::UserItem
                                  ? index.user_of_list[static_cast<std::size_t>(l)]
                                  : l;
        for (int item : index.items_of_list[static_cast<std::size_t>(l)]) {
            left[static_cast<std::size_t>(left_node)].insert(item);
            right[static_cast<std::size_t>(item)].insert(left_node);
        }
    }
    g.left_nbrs.reserve(left.size());
    for (auto& s : left) g.left_nbrs.emplace_back(s.begin(), s.end());
    g.right_nbrs.reserve(right.size());
    for (auto& s : right) g.right_nbrs.emplace_back(s.begin(), s.end());
    return g;
}

WalkCorpus random_walks(const BipartiteGraph& graph, int walks_per_node, int walk_length,
                        std::uint64_t seed, std::vector<std::string>* warnings) {
    if (walk_length < 2) throw ContractError("random_walks: walk_length must be >= 2");
    if (walks_per_node < 1) throw ContractError("random_walks: walks_per_node must be >= 1");
    WalkCorpus corpus;
    corpus.n_tokens = graph.n_tokens();
    corpus.walks_per_node = walks_per_node;
    corpus.walk_length = walk_length;
    const int n = corpus.n_tokens;
    corpus.walks.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(walks_per_node), {});

    bool any_isolated = false;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) reduction(|| : any_isolated)
#endif
    for (int start = 0; start < n; ++start) {
        for (int w = 0; w < walks_per_node; ++w) {
            Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(start),
                                           static_cast<std::uint64_t>(w)));
            auto& walk = corpus.walks[static_cast<std::size_t>(start) * walks_per_node +
                                      static_cast<std::size_t>(w)];
            walk.push_back(start);
            int cur = start;
            for (int step = 1; step < walk_length; ++step) {
                const bool is_left = cur < graph.n_left;
                const auto& nbrs = is_left ? graph.left_nbrs[static_cast<std::size_t>(cur)]
                                           : graph.right_nbrs[static_cast<std::size_t>(cur - graph.n_left)];
                if (nbrs.empty()) {
                    any_isolated = true;
                    break;
                }
                std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 1);
                const int next = nbrs[pick(rng)];
                // neighbor lists store opposite-side indices; re-encode as token
                cur = is_left ? graph.n_left + next : next;
                walk.push_back(cur);
            }
        }
    }
    if (any_isolated) warn(warnings, "isolated node produced truncated walks");
    return corpus;
}

std::vector<std::vector<double>> train_skipgram(const WalkCorpus& corpus, const SkipgramConfig& cfg,
                                                std::uint64_t seed) {
    if (corpus.walks.empty()) throw ContractError("train_skipgram: empty walk corpus");
    const int n = corpus.n_tokens;
    const int dim = cfg.dim;

    std::vector<std::vector<double>> in_vec(static_cast<std::size_t>(n));
    std::vector<std::vector<double>> out_vec(static_cast<std::size_t>(n),
                                             std::vector<double>(static_cast<std::size_t>(dim), 0.0));
    Rng init_rng = make_rng(derive_seed(seed, 0x53474e49ULL));  // "SGNI"
    std::uniform_real_distribution<double> init(-0.5 / dim, 0.5 / dim);
    for (auto& v : in_vec) {
        v.resize(static_cast<std::size_t>(dim));
        for (auto& x : v) x = init(init_rng);
    }
    if (cfg.epochs == 0) return in_vec;

    // unigram^0.75 noise distribution over tokens
    std::vector<double> cum(static_cast<std::size_t>(n), 0.0);
    {
        std::vector<double> freq(static_cast<std::size_t>(n), 0.0);
        for (const auto& walk : corpus.walks)
            for (int tok : walk) freq[static_cast<std::size_t>(tok)] += 1.0;
        double total = 0.0;
        for (int t = 0; t < n; ++t) {
            total += std::pow(freq[static_cast<std::size_t>(t)], 0.75);
            cum[static_cast<std::size_t>(t)] = total;
        }
        for (auto& c : cum) c /= total;
    }
    Rng rng = make_rng(derive_seed(seed, 0x53474e54ULL));  // "SGNT"
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto draw_noise = [&]() {
        const double r = unit(rng);
        return static_cast<int>(std::lower_bound(cum.begin(), cum.end(), r) - cum.begin());
    };

    std::vector<double> grad_center(static_cast<std::size_t>(dim));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (const auto& walk : corpus.walks) {
            const int len = static_cast<int>(walk.size());
            for (int c = 0; c < len; ++c) {
                const int center = walk[static_cast<std::size_t>(c)];
                auto& vc = in_vec[static_cast<std::size_t>(center)];
                const int lo = std::max(0, c - cfg.window);
                const int hi = std::min(len - 1, c + cfg.window);
                for (int t = lo; t <= hi; ++t) {
                    if (t == c) continue;
                    const int context = walk[static_cast<std::size_t>(t)];
                    std::fill(grad_center.begin(), grad_center.end(), 0.0);
                    for (int s = 0; s <= cfg.negatives; ++s) {
                        const bool positive = s == 0;
                        const int target = positive ? context : draw_noise();
                        auto& vo = out_vec[static_cast<std::size_t>(target)];
                        double dot = 0.0;
                        for (int d = 0; d < dim; ++d) dot += vc[static_cast<std::size_t>(d)] * vo[static_cast<std::size_t>(d)];
                        const double sig = 1.0 / (1.0 + std::exp(-dot));
                        const double g = cfg.lr * ((positive ? 1.0 : 0.0) - sig);
                        for (int d = 0; d < dim; ++d) {
                            grad_center[static_cast<std::size_t>(d)] += g * vo[static_cast<std::size_t>(d)];
                            vo[static_cast<std::size_t>(d)] += g * vc[static_cast<std::size_t>(d)];
                        }
                    }
                    for (int d = 0; d < dim; ++d) vc[static_cast<std::size_t>(d)] += grad_center[static_cast<std::size_t>(d)];
                }
            }
        }
    }
    return in_vec;
}

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na <= 0.0 || nb <= 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

KnnAdjacency build_knn_adjacency(const std::vector<std::vector<double>>& embeddings,
                                 const std::string& entity_class, int k,
                                 std::vector<std::string>* warnings) {
    if (k < 1) throw ContractError("build_knn_adjacency: K must be >= 1");
    const int n = static_cast<int>(embeddings.size());
    if (n == 0) throw ContractError("build_knn_adjacency: no embeddings");
    int eff_k = k;
    if (k >= n) {
        eff_k = n - 1;
        warn(warnings, "K=" + std::to_string(k) + " >= " + std::to_string(n) + " nodes in class '" +
                           entity_class + "'; using all others");
    }

    KnnAdjacency adj;
    adj.entity_class = entity_class;
    adj.k = eff_k;
    adj.neighbors.assign(static_cast<std::size_t>(n), {});
    adj.weights.assign(static_cast<std::size_t>(n), {});

#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> sims;
        sims.reserve(static_cast<std::size_t>(n - 1));
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            sims.emplace_back(cosine(embeddings[static_cast<std::size_t>(i)],
                                     embeddings[static_cast<std::size_t>(j)]),
                              j);
        }
        const auto cmp = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;  // cosine ties break by lower index
        };
        std::partial_sort(sims.begin(), sims.begin() + eff_k, sims.end(), cmp);

        auto& nbr = adj.neighbors[static_cast<std::size_t>(i)];
        auto& w = adj.weights[static_cast<std::size_t>(i)];
        nbr.push_back(i);  // self always included
        w.push_back(1.0);
        for (int t = 0; t < eff_k; ++t) {
            nbr.push_back(sims[static_cast<std::size_t>(t)].second);
            w.push_back(std::max(0.0, sims[static_cast<std::size_t>(t)].first));
        }
        double sum = 0.0;
        for (double x : w) sum += x;
        for (double& x : w) x /= sum;
    }
    adj.build_csr();
    return adj;
}

KnnGraphs build_knn_graphs(const CorpusIndex& index, const KnnPipelineConfig& cfg,
                           std::uint64_t seed, std::vector<std::string>* warnings) {
    const auto ui = build_bipartite(index, BipartiteKind::UserItem);
    const auto li = build_bipartite(index, BipartiteKind::ListItem);
    const auto ui_walks = random_walks(ui, cfg.walks_per_node, cfg.walk_length,
                                       derive_seed(seed, 1), warnings);
    const auto li_walks = random_walks(li, cfg.walks_per_node, cfg.walk_length,
                                       derive_seed(seed, 2), warnings);
    const auto ui_emb = train_skipgram(ui_walks, cfg.skipgram, derive_seed(seed, 3));
    const auto li_emb = train_skipgram(li_walks, cfg.skipgram, derive_seed(seed, 4));

    // user tokens: [0, n_users) of the user-item graph; list tokens:
    // [0, n_lists) of the list-item graph; item tokens: right side of the
    // list-item graph (items' primary context is list membership).
    std::vector<std::vector<double>> user_emb(ui_emb.begin(), ui_emb.begin() + index.n_users);
    std::vector<std::vector<double>> list_emb(li_emb.begin(), li_emb.begin() + index.n_lists);
    std::vector<std::vector<double>> item_emb(li_emb.begin() + index.n_lists, li_emb.end());

    KnnGraphs graphs;
    graphs.user = build_knn_adjacency(user_emb, "user", cfg.k, warnings);
    graphs.item = build_knn_adjacency(item_emb, "item", cfg.k, warnings);
    graphs.list = build_knn_adjacency(list_emb, "list", cfg.k, warnings);
    return graphs;
}

void save_knn(const KnnAdjacency& adj, const std::string& path, const std::string& key) {
    const std::string tmp = path + ".tmp";
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write knn cache: " + path);
    f << "htn-knn v1\n";
    f << "key " << key << "\n";
    f << "class " << adj.entity_class << "\n";
    f << "k " << adj.k << "\n";
    f << "nodes " << adj.n_nodes() << "\n";
    f.precision(17);
    for (int i = 0; i < adj.n_nodes(); ++i) {
        f << i;
        const auto& nbr = adj.neighbors[static_cast<std::size_t>(i)];
        const auto& w = adj.weights[static_cast<std::size_t>(i)];
        for (std::size_t j = 0; j < nbr.size(); ++j) f << " " << nbr[j] << ":" << w[j];
        f << "\n";
    }
    f.close();
    std::filesystem::rename(tmp, path);
}

std::optional<KnnAdjacency> load_knn(const std::string& path, const std::string& expected_key) {
    std::ifstream f(path);
    if (!f) return std::nullopt;
    std::string word, version, key;
    f >> word >> version;
    if (word != "htn-knn" || version != "v1") return std::nullopt;
    f >> word >> key;
    if (word != "key" || key != expected_key) return std::nullopt;

    KnnAdjacency adj;
    int nodes = 0;
    f >> word >> adj.entity_class;
    f >> word >> adj.k;
    f >> word >> nodes;
    adj.neighbors.assign(static_cast<std::size_t>(nodes), {});
    adj.weights.assign(static_cast<std::size_t>(nodes), {});
    std::string line;
    std::getline(f, line);
    for (int i = 0; i < nodes; ++i) {
        if (!std::getline(f, line)) throw ParseError("truncated knn cache: " + path);
        std::istringstream ss(line);
        int node;
        ss >> node;
        std::string pair;
        while (ss >> pair) {
            const auto colon = pair.find(':');
            if (colon == std::string::npos) throw ParseError("malformed knn cache row in " + path);
            adj.neighbors[static_cast<std::size_t>(node)].push_back(std::stoi(pair.substr(0, colon)));
            adj.weights[static_cast<std::size_t>(node)].push_back(std::stod(pair.substr(colon + 1)));
        }
    }
    adj.build_csr();
    return adj;
}

}  // namespace htn
