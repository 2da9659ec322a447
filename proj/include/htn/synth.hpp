#pragma once

// Bundled synthetic corpus with planted structure, so end-to-end runs need no
// external data. Items are partitioned into genres and arranged on a ring
// within each genre; each list draws from one or two of its owner's preferred
// genres; the next item is the ring successor of the last item with
// probability `p_ring`, otherwise a uniform unused item from the list's
// genres. The matching Bayes-optimal scorer puts a ceiling on every ranking
// metric and calibrates the acceptance thresholds.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "htn/common.hpp"
#include "htn/dataset.hpp"

namespace htn {

struct SynthConfig {
    int n_users = 50;
    int n_items = 200;
    int n_lists = 150;
    int n_genres = 10;
    int min_len = 8;
    int max_len = 16;
    int genres_per_user = 3;
    int anchors_per_genre = 3;  // arcs start at a few ring positions, so deep
                                // positions stay rare in training data
    double p_long = 0.3;        // long lists reach the rare deep positions
    double p_two_genre = 0.4;
    double p_ring = 0.97;
    std::uint64_t seed = 1;
};

struct SynthData {
    SynthConfig cfg;
    std::vector<InteractionRecord> records;
    std::vector<int> genre_of_item;                // by item number
    std::vector<std::vector<int>> items_of_genre;  // ring order
    std::unordered_map<std::string, std::vector<int>> genres_of_list;  // by list key

    static std::string user_key(int u);
    static std::string item_key(int i);
    static std::string list_key(int l);
    static int item_number(const std::string& key);
};

SynthData generate_synthetic(const SynthConfig& cfg);

void write_interactions_csv(const std::vector<InteractionRecord>& records,
                            const std::string& path);

// P(next = candidate | context) under the generative process; knows the
// genre partition, the rings, and the list's genre set.
double bayes_score(const SynthData& data, const std::string& list_key,
                   const std::vector<int>& context_item_numbers, int candidate_item_number);

}  // namespace htn
