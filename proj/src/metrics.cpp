#include "htn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace htn {

RankedCandidates rank_candidates(const std::vector<double>& scores, const std::vector<int>& items,
                                 int ground_truth) {
    if (scores.size() != items.size())
        throw ContractError("rank_candidates: score/item count mismatch");
    if (std::find(items.begin(), items.end(), ground_truth) == items.end())
        throw ContractError("rank_candidates: ground truth missing from candidate set");

    std::vector<std::size_t> order(items.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return items[a] < items[b];
    });

    RankedCandidates out;
    out.ground_truth = ground_truth;
    out.ordered_items.reserve(items.size());
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const int item = items[order[pos]];
        out.ordered_items.push_back(item);
        if (item == ground_truth) out.rank = static_cast<int>(pos) + 1;
    }
    return out;
}

MetricsAtK metrics_at_k(const RankedCandidates& ranked, int n) {
    if (ranked.rank < 1) throw ContractError("metrics_at_k: rank not computed");
    MetricsAtK m;
    if (ranked.rank <= n) {
        m.hr = 1.0;
        m.ndcg = 1.0 / std::log2(static_cast<double>(ranked.rank) + 1.0);
        m.map = 1.0 / static_cast<double>(ranked.rank);
    }
    return m;
}

MetricsReport evaluate_model(const CandidateScorer& scorer, const SplitCorpus& split,
                             bool test_phase, int top_n) {
    const auto& candidates = test_phase ? split.test_candidates : split.valid_candidates;
    const int n_lists = split.index.n_lists;

    MetricsReport report;
    report.top_n = top_n;
    report.seed = split.seed;
    report.pairs.resize(static_cast<std::size_t>(n_lists));

    for (int l = 0; l < n_lists; ++l)
        if (candidates[static_cast<std::size_t>(l)].items.empty())
            throw ContractError("evaluate_model: missing candidate set for list " + std::to_string(l));

    // Exceptions cannot cross the parallel region; capture and rethrow.
    std::string error;
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int l = 0; l < n_lists; ++l) {
        try {
            const auto& cs = candidates[static_cast<std::size_t>(l)];
            const int user = split.index.user_of_list[static_cast<std::size_t>(l)];
            const auto scores = scorer(user, l, cs.items, test_phase);
            const auto ranked = rank_candidates(scores, cs.items, cs.ground_truth);
            PairMetrics pm;
            pm.user = user;
            pm.list = l;
            pm.rank = ranked.rank;
            pm.m = metrics_at_k(ranked, top_n);
            report.pairs[static_cast<std::size_t>(l)] = pm;
        } catch (const std::exception& e) {
#ifdef _OPENMP
#pragma omp critical
#endif
            if (error.empty()) error = e.what();
        }
    }
    if (!error.empty()) throw ContractError("evaluate_model: " + error);

    report.pair_count = report.pairs.size();
    for (const auto& pm : report.pairs) {
        report.hr += pm.m.hr;
        report.ndcg += pm.m.ndcg;
        report.map += pm.m.map;
    }
    if (!report.pairs.empty()) {
        report.hr /= static_cast<double>(report.pairs.size());
        report.ndcg /= static_cast<double>(report.pairs.size());
        report.map /= static_cast<double>(report.pairs.size());
    }
    return report;
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["top_n"] = top_n;
    j["pair_count"] = pair_count;
    j["hr"] = hr;
    j["ndcg"] = ndcg;
    j["map"] = map;
    j["seed"] = seed;
    j["fingerprint"] = fingerprint;
    auto arr = nlohmann::json::array();
    for (const auto& pm : pairs) {
        arr.push_back({{"user", pm.user},
                       {"list", pm.list},
                       {"rank", pm.rank},
                       {"hr", pm.m.hr},
                       {"ndcg", pm.m.ndcg},
                       {"map", pm.m.map}});
    }
    j["pairs"] = std::move(arr);
    return j.dump(2);
}

MetricsReport MetricsReport::from_json_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot read metrics report: " + path);
    nlohmann::json j;
    f >> j;
    MetricsReport r;
    r.top_n = j.at("top_n").get<int>();
    r.pair_count = j.at("pair_count").get<std::size_t>();
    r.hr = j.at("hr").get<double>();
    r.ndcg = j.at("ndcg").get<double>();
    r.map = j.at("map").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.fingerprint = j.value("fingerprint", "");
    for (const auto& p : j.at("pairs")) {
        PairMetrics pm;
        pm.user = p.at("user").get<int>();
        pm.list = p.at("list").get<int>();
        pm.rank = p.at("rank").get<int>();
        pm.m.hr = p.at("hr").get<double>();
        pm.m.ndcg = p.at("ndcg").get<double>();
        pm.m.map = p.at("map").get<double>();
        r.pairs.push_back(pm);
    }
    return r;
}

void MetricsReport::write_json(const std::string& path) const {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write metrics report: " + path);
    f << to_json() << "\n";
}

std::string MetricsReport::table(const std::string& label) const {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    os << label << "  pairs=" << pair_count << "  HR@" << top_n << "=" << hr << "  NDCG@" << top_n
       << "=" << ndcg << "  MAP@" << top_n << "=" << map;
    return os.str();
}

}  // namespace htn
