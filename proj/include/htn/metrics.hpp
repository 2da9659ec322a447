#pragma once

// Candidate ranking and the leave-one-out top-N metrics. Single-relevant-item
// closed forms: HR@N is presence, NDCG@N is 1/log2(rank+1), MAP@N is 1/rank,
// all zero past rank N. Pure functions; evaluation parallelizes across
// (user, list) pairs.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "htn/common.hpp"
#include "htn/dataset.hpp"

namespace htn {

struct RankedCandidates {
    int user = -1;
    int list = -1;
    std::vector<int> ordered_items;  // descending score, ties by ascending item index
    int ground_truth = -1;
    int rank = 0;  // 1-based position of the ground truth
};

struct MetricsAtK {
    double hr = 0.0;
    double ndcg = 0.0;
    double map = 0.0;
};

struct PairMetrics {
    int user = -1;
    int list = -1;
    int rank = 0;
    MetricsAtK m;
};

struct MetricsReport {
    int top_n = 5;
    std::size_t pair_count = 0;
    double hr = 0.0;
    double ndcg = 0.0;
    double map = 0.0;
    std::vector<PairMetrics> pairs;
    std::uint64_t seed = 0;
    std::string fingerprint;

    std::string to_json() const;
    static MetricsReport from_json_file(const std::string& path);
    void write_json(const std::string& path) const;
    std::string table(const std::string& label) const;
};

RankedCandidates rank_candidates(const std::vector<double>& scores, const std::vector<int>& items,
                                 int ground_truth);

MetricsAtK metrics_at_k(const RankedCandidates& ranked, int n = 5);

// Scores one candidate set; must be pure and thread-safe.
using CandidateScorer =
    std::function<std::vector<double>(int user, int list, const std::vector<int>& candidates,
                                      bool test_phase)>;

MetricsReport evaluate_model(const CandidateScorer& scorer, const SplitCorpus& split,
                             bool test_phase, int top_n = 5);

}  // namespace htn
