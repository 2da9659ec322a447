#include "htn/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <json.hpp>

namespace htn {

namespace {

using nlohmann::json;

// One registry drives parsing, overrides, serialization, and --help.
struct Field {
    std::string key;  // dotted path
    std::string desc;
    std::function<void(RunConfig&, const json&)> set;
    std::function<json(const RunConfig&)> get;
};

std::vector<Field> registry() {
    std::vector<Field> f;
    auto add = [&](const std::string& key, const std::string& desc, auto setter, auto getter) {
        f.push_back({key, desc, setter, getter});
    };
#define HTN_FIELD(KEY, DESC, EXPR, TYPE)                                             \
    add(KEY, DESC, [](RunConfig& c, const json& v) { c.EXPR = v.get<TYPE>(); },      \
        [](const RunConfig& c) { return json(c.EXPR); })

    HTN_FIELD("data.input", "interactions file path", input_path, std::string);
    HTN_FIELD("data.format", "csv or tsv", format, std::string);
    HTN_FIELD("split.seed", "split and candidate-sampling seed", split_seed, std::uint64_t);
    HTN_FIELD("split.negatives", "sampled negatives per candidate set", num_negatives, int);
    HTN_FIELD("split.min_list_len", "drop lists shorter than this", min_list_len, int);
    HTN_FIELD("knn.k", "nearest neighbors per node", knn.k, int);
    HTN_FIELD("knn.walks_per_node", "random walks started per node", knn.walks_per_node, int);
    HTN_FIELD("knn.walk_length", "tokens per walk", knn.walk_length, int);
    HTN_FIELD("knn.window", "skip-gram context window", knn.skipgram.window, int);
    HTN_FIELD("knn.negatives", "skip-gram negative samples", knn.skipgram.negatives, int);
    HTN_FIELD("knn.dim", "skip-gram embedding size", knn.skipgram.dim, int);
    HTN_FIELD("knn.epochs", "skip-gram training epochs", knn.skipgram.epochs, int);
    HTN_FIELD("knn.lr", "skip-gram learning rate", knn.skipgram.lr, double);
    HTN_FIELD("model.dbar", "entity embedding size", train.dbar, int);
    HTN_FIELD("model.gcn_layers", "graph convolution layers", train.gcn_layers, int);
    HTN_FIELD("model.d_hidden", "hypergraph representation size", train.d_hidden, int);
    HTN_FIELD("model.heads", "hypergraph attention heads", train.heads, int);
    HTN_FIELD("model.blocks", "transformer blocks", train.blocks, int);
    HTN_FIELD("model.ssn_heads", "sequence attention heads", train.ssn_heads, int);
    HTN_FIELD("model.maxlen", "maximum sequence length", train.maxlen, int);
    HTN_FIELD("model.dropout", "dropout rate", train.dropout, double);
    HTN_FIELD("model.uhgnn_exclude_self_softmax",
              "drop the self energy from the attention normalizer",
              train.uhgnn_exclude_self_softmax, bool);
    HTN_FIELD("train.lr", "Adam learning rate", train.lr, double);
    HTN_FIELD("train.graph_batch", "graph-phase batch size", train.graph_batch, int);
    HTN_FIELD("train.ssn_batch", "sequence-phase batch size", train.ssn_batch, int);
    HTN_FIELD("train.neg_ratio", "graph negatives per positive", train.neg_ratio, int);
    HTN_FIELD("train.ssn_negatives", "sequence negatives per position", train.ssn_negatives, int);
    HTN_FIELD("train.max_epochs", "maximum training epochs", train.max_epochs, int);
    HTN_FIELD("train.patience", "early-stopping patience", train.patience, int);
    HTN_FIELD("train.seed", "training seed", train.seed, std::uint64_t);
    HTN_FIELD("train.disable_uhgnn", "graph loss scores with MGNN alone", train.disable_uhgnn, bool);
    HTN_FIELD("train.disable_mgnn_feed", "feed plain embeddings to UHGNN/SSN",
              train.disable_mgnn_feed, bool);
    HTN_FIELD("train.ssn_only", "skip the graph phase entirely", train.ssn_only, bool);
    HTN_FIELD("train.freeze_graph_in_ssn", "phase B updates SSN parameters only",
              train.freeze_graph_in_ssn, bool);
    HTN_FIELD("train.precision", "f32 or f64", precision, std::string);
    HTN_FIELD("eval.top_n", "ranking cutoff N", top_n, int);
    HTN_FIELD("synth.users", "synthetic corpus users", synth.n_users, int);
    HTN_FIELD("synth.items", "synthetic corpus items", synth.n_items, int);
    HTN_FIELD("synth.lists", "synthetic corpus lists", synth.n_lists, int);
    HTN_FIELD("synth.genres", "synthetic genres", synth.n_genres, int);
    HTN_FIELD("synth.min_len", "synthetic minimum list length", synth.min_len, int);
    HTN_FIELD("synth.max_len", "synthetic maximum list length", synth.max_len, int);
    HTN_FIELD("synth.genres_per_user", "preferred genres per user", synth.genres_per_user, int);
    HTN_FIELD("synth.anchors_per_genre", "ring entry points per genre", synth.anchors_per_genre,
              int);
    HTN_FIELD("synth.p_long", "probability of a long list", synth.p_long, double);
    HTN_FIELD("synth.p_two_genre", "probability a list mixes two genres", synth.p_two_genre,
              double);
    HTN_FIELD("synth.p_ring", "probability the next item is the ring successor", synth.p_ring,
              double);
    HTN_FIELD("synth.seed", "synthetic generator seed", synth.seed, std::uint64_t);
#undef HTN_FIELD
    return f;
}

const std::vector<Field>& fields() {
    static const std::vector<Field> f = registry();
    return f;
}

const Field& find_field(const std::string& key) {
    for (const auto& f : fields())
        if (f.key == key) return f;
    throw ConfigError("unknown configuration key '" + key + "'");
}

json parse_scalar(const std::string& text) {
    // bare words become strings; numbers and booleans parse as JSON
    try {
        return json::parse(text);
    } catch (const json::parse_error&) {
        return json(text);
    }
}

}  // namespace

void RunConfig::validate() const {
    if (format != "csv" && format != "tsv")
        throw ConfigError("data.format must be csv or tsv, got '" + format + "'");
    if (precision != "f32" && precision != "f64")
        throw ConfigError("train.precision must be f32 or f64, got '" + precision + "'");
    if (num_negatives < 0) throw ConfigError("split.negatives must be nonnegative");
    if (min_list_len < 3) throw ConfigError("split.min_list_len must be at least 3");
    if (knn.k < 1) throw ConfigError("knn.k must be positive");
    if (knn.walks_per_node < 1 || knn.walk_length < 2)
        throw ConfigError("knn walk parameters out of range");
    if (knn.skipgram.dim < 1 || knn.skipgram.epochs < 0 || knn.skipgram.lr <= 0.0)
        throw ConfigError("knn skip-gram parameters out of range");
    if (top_n < 1) throw ConfigError("eval.top_n must be positive");
    train.validate();
    train.model_config().validate();
}

std::string RunConfig::to_json() const {
    json j;
    for (const auto& f : fields()) {
        // dotted path -> nested objects
        json* cur = &j;
        std::string rest = f.key;
        std::size_t dot;
        while ((dot = rest.find('.')) != std::string::npos) {
            cur = &((*cur)[rest.substr(0, dot)]);
            rest = rest.substr(dot + 1);
        }
        (*cur)[rest] = f.get(*this);
    }
    return j.dump(2);  // nlohmann sorts object keys: canonical
}

std::string RunConfig::fingerprint() const {
    std::ostringstream os;
    os << std::hex << fnv1a(to_json());
    return os.str();
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
    RunConfig cfg;
    if (!path.empty()) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot open config file: " + path);
        json j;
        try {
            f >> j;
        } catch (const json::parse_error& e) {
            throw ParseError("config " + path + ": " + e.what());
        }
        // flatten and apply; reject unknown keys
        std::function<void(const json&, const std::string&)> walk = [&](const json& node,
                                                                        const std::string& prefix) {
            if (node.is_object()) {
                for (const auto& [k, v] : node.items())
                    walk(v, prefix.empty() ? k : prefix + "." + k);
                return;
            }
            const auto& f2 = find_field(prefix);
            try {
                f2.set(cfg, node);
            } catch (const json::exception& e) {
                throw ConfigError("config key '" + prefix + "': " + e.what());
            }
        };
        walk(j, "");
    }
    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ConfigError("override must look like section.key=value, got '" + ov + "'");
        const auto& f2 = find_field(ov.substr(0, eq));
        try {
            f2.set(cfg, parse_scalar(ov.substr(eq + 1)));
        } catch (const json::exception& e) {
            throw ConfigError("override '" + ov + "': " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

std::vector<std::pair<std::string, std::string>> RunConfig::schema() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& f : fields()) out.emplace_back(f.key, f.desc);
    return out;
}

}  // namespace htn
