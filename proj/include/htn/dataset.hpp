#pragma once

// Corpus ingestion, leave-one-out splitting, negative sampling, and batch
// assembly. CorpusIndex and SplitCorpus are immutable once built; batch
// streams draw from their own seeded RNGs.

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "htn/common.hpp"

namespace htn {

enum class FileFormat { Csv, Tsv };

struct InteractionRecord {
    std::string user_key;
    std::string list_key;
    std::string item_key;
    long long timestamp = 0;
    std::size_t file_order = 0;  // breaks timestamp ties
};

// Contiguous internal ID spaces. Internal IDs are assigned by sorting the
// surviving external keys, so the index is independent of input row order.
struct CorpusIndex {
    int n_users = 0;
    int n_items = 0;
    int n_lists = 0;
    std::vector<int> user_of_list;                // list -> owner
    std::vector<std::vector<int>> items_of_list;  // chronological order
    std::vector<std::vector<int>> lists_of_user;
    std::vector<std::string> user_keys, item_keys, list_keys;  // internal -> external
    std::unordered_map<std::string, int> user_id_of, item_id_of, list_id_of;

    int list_count_of_user(int u) const { return static_cast<int>(lists_of_user[u].size()); }
};

// 1 ground truth + sampled negatives, frozen at split time.
struct CandidateSet {
    int list = -1;
    int ground_truth = -1;
    std::vector<int> items;  // ground truth included
};

struct SplitCorpus {
    CorpusIndex index;
    std::vector<std::vector<int>> train_items;  // per list; full list minus last two
    std::vector<int> valid_target;              // per list
    std::vector<int> test_target;               // per list
    std::vector<CandidateSet> valid_candidates, test_candidates;  // indexed by list
    int candidate_size = 101;
    std::uint64_t seed = 0;

    // Items visible to the model when predicting the phase target.
    std::vector<int> context_items(int list, bool test_phase) const {
        std::vector<int> ctx = train_items[static_cast<std::size_t>(list)];
        if (test_phase) ctx.push_back(valid_target[static_cast<std::size_t>(list)]);
        return ctx;
    }
};

struct Triple {
    int user = -1;
    int item = -1;
    int list = -1;
};

// Labeled (u,i,l) batch for the graph-side loss.
struct TripleBatch {
    std::vector<Triple> triples;
    std::vector<double> labels;  // 1 positive, 0 negative
};

// Fixed-width, left-padded sequence batch for the sequence-side loss.
struct SequenceBatch {
    int rows = 0;
    int width = 0;
    int negatives_per_position = 0;
    std::vector<int> users, lists;        // per row
    std::vector<int> items;               // rows*width, 0 at padding
    std::vector<int> positions;           // rows*width, position within visible window
    std::vector<int> targets;             // rows*width, -1 where no target
    std::vector<int> negatives;           // rows*width*negatives_per_position, -1 padding
    std::vector<std::uint8_t> has_item;   // source slot occupied
    std::vector<std::uint8_t> has_target; // slot contributes to the loss

    std::int64_t slot(int r, int t) const { return static_cast<std::int64_t>(r) * width + t; }
};

std::vector<InteractionRecord> load_interactions(const std::string& path, FileFormat format,
                                                 std::vector<std::string>* warnings = nullptr);

CorpusIndex build_index(const std::vector<InteractionRecord>& records, int min_list_len = 3,
                        std::vector<std::string>* warnings = nullptr);

SplitCorpus split_leave_one_out(const CorpusIndex& index, std::uint64_t seed,
                                int num_negatives = 100);

// All (u, i, l) with i in the train part of l.
std::vector<Triple> positive_triples(const SplitCorpus& split);

// `ratio` negatives (u, i', l) per positive with i' uniform over items not in
// the full list l.
std::vector<Triple> sample_negative_triples(const CorpusIndex& index,
                                            const std::vector<Triple>& positives, int ratio,
                                            std::uint64_t seed,
                                            std::vector<std::string>* warnings = nullptr);

std::vector<SequenceBatch> make_sequence_batches(const SplitCorpus& split, int max_len,
                                                 int batch_size, int negatives_per_position,
                                                 std::uint64_t seed);

// Split artifact directory: plain-text files regenerated bit-identically
// from (input, seed).
void write_split(const SplitCorpus& split, const std::string& dir, const std::string& fingerprint);
SplitCorpus read_split(const std::string& dir);

}  // namespace htn
