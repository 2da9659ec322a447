#include "htn/dataset.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_set>

namespace fs = std::filesystem;

namespace htn {

namespace {

std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == delim) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

void warn(std::vector<std::string>* warnings, std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
}

// Uniform draw over [0, n_items) \ exclude via rejection; exact uniformity
// over the eligible set.
int draw_excluding(int n_items, const std::unordered_set<int>& exclude, Rng& rng) {
    std::uniform_int_distribution<int> dist(0, n_items - 1);
    while (true) {
        const int c = dist(rng);
        if (!exclude.count(c)) return c;
    }
}

}  // namespace

std::vector<InteractionRecord> load_interactions(const std::string& path, FileFormat format,
                                                 std::vector<std::string>* warnings) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open interactions file: " + path);
    const char delim = format == FileFormat::Csv ? ',' : '\t';

    std::string line;
    if (!std::getline(f, line)) throw ParseError("empty interactions file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_line(line, delim);
    const std::vector<std::string> expected{"user_id", "list_id", "item_id", "timestamp"};
    if (std::vector<std::string>(header.begin(), header.end()) != expected)
        throw ParseError("bad header in " + path + ": expected user_id,list_id,item_id,timestamp");

    std::vector<InteractionRecord> records;
    std::set<std::pair<std::string, std::string>> seen_pairs;
    std::size_t line_no = 1;
    std::size_t duplicates = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_line(line, delim);
        if (fields.size() != 4)
            throw ParseError(path + ":" + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        InteractionRecord r;
        r.user_key = fields[0];
        r.list_key = fields[1];
        r.item_key = fields[2];
        try {
            std::size_t pos = 0;
            r.timestamp = std::stoll(fields[3], &pos);
            if (pos != fields[3].size()) throw std::invalid_argument("");
        } catch (const std::exception&) {
            throw ParseError(path + ":" + std::to_string(line_no) + ": non-numeric timestamp '" +
                             fields[3] + "'");
        }
        if (r.user_key.empty() || r.list_key.empty() || r.item_key.empty())
            throw ParseError(path + ":" + std::to_string(line_no) + ": empty key field");
        if (!seen_pairs.insert({r.list_key, r.item_key}).second) {
            ++duplicates;
            continue;  // keep first occurrence
        }
        r.file_order = records.size();
        records.push_back(std::move(r));
    }
    if (records.empty()) throw ParseError("no interaction rows in " + path);
    if (duplicates > 0)
        warn(warnings, "dropped " + std::to_string(duplicates) + " duplicate (list,item) rows");
    return records;
}

CorpusIndex build_index(const std::vector<InteractionRecord>& records, int min_list_len,
                        std::vector<std::string>* warnings) {
    if (records.empty()) throw ContractError("build_index: no records");

    struct ListAcc {
        std::string user_key;
        std::vector<const InteractionRecord*> rows;
    };
    std::map<std::string, ListAcc> lists;  // ordered: determinism
    for (const auto& r : records) {
        auto& acc = lists[r.list_key];
        if (acc.rows.empty()) {
            acc.user_key = r.user_key;
        } else if (acc.user_key != r.user_key) {
            throw ParseError("list '" + r.list_key + "' appears under two users ('" + acc.user_key +
                             "', '" + r.user_key + "')");
        }
        acc.rows.push_back(&r);
    }

    std::size_t dropped = 0;
    for (auto it = lists.begin(); it != lists.end();) {
        if (static_cast<int>(it->second.rows.size()) < min_list_len) {
            ++dropped;
            it = lists.erase(it);
        } else {
            ++it;
        }
    }
    if (lists.empty()) throw ContractError("build_index: all lists shorter than min_list_len=" +
                                           std::to_string(min_list_len));
    if (dropped > 0)
        warn(warnings, "dropped " + std::to_string(dropped) + " lists shorter than " +
                           std::to_string(min_list_len));

    // Surviving key sets, sorted for order-independent internal IDs.
    std::set<std::string> user_set, item_set;
    for (const auto& [lk, acc] : lists) {
        user_set.insert(acc.user_key);
        for (const auto* r : acc.rows) item_set.insert(r->item_key);
    }

    CorpusIndex idx;
    for (const auto& k : user_set) {
        idx.user_id_of[k] = static_cast<int>(idx.user_keys.size());
        idx.user_keys.push_back(k);
    }
    for (const auto& k : item_set) {
        idx.item_id_of[k] = static_cast<int>(idx.item_keys.size());
        idx.item_keys.push_back(k);
    }
    for (const auto& [lk, acc] : lists) {
        idx.list_id_of[lk] = static_cast<int>(idx.list_keys.size());
        idx.list_keys.push_back(lk);
    }
    idx.n_users = static_cast<int>(idx.user_keys.size());
    idx.n_items = static_cast<int>(idx.item_keys.size());
    idx.n_lists = static_cast<int>(idx.list_keys.size());

    idx.user_of_list.resize(static_cast<std::size_t>(idx.n_lists));
    idx.items_of_list.resize(static_cast<std::size_t>(idx.n_lists));
    idx.lists_of_user.resize(static_cast<std::size_t>(idx.n_users));
    for (const auto& [lk, acc] : lists) {
        const int l = idx.list_id_of.at(lk);
        const int u = idx.user_id_of.at(acc.user_key);
        idx.user_of_list[static_cast<std::size_t>(l)] = u;
        idx.lists_of_user[static_cast<std::size_t>(u)].push_back(l);
        auto rows = acc.rows;
        std::sort(rows.begin(), rows.end(), [](const InteractionRecord* a, const InteractionRecord* b) {
            if (a->timestamp != b->timestamp) return a->timestamp < b->timestamp;
            return a->file_order < b->file_order;
        });
        auto& seq = idx.items_of_list[static_cast<std::size_t>(l)];
        seq.reserve(rows.size());
        for (const auto* r : rows) seq.push_back(idx.item_id_of.at(r->item_key));
    }
    return idx;
}

SplitCorpus split_leave_one_out(const CorpusIndex& index, std::uint64_t seed, int num_negatives) {
    SplitCorpus split;
    split.index = index;
    split.seed = seed;
    split.candidate_size = num_negatives + 1;
    const int n_lists = index.n_lists;
    split.train_items.resize(static_cast<std::size_t>(n_lists));
    split.valid_target.resize(static_cast<std::size_t>(n_lists));
    split.test_target.resize(static_cast<std::size_t>(n_lists));
    split.valid_candidates.resize(static_cast<std::size_t>(n_lists));
    split.test_candidates.resize(static_cast<std::size_t>(n_lists));

    for (int l = 0; l < n_lists; ++l) {
        const auto& items = index.items_of_list[static_cast<std::size_t>(l)];
        if (items.size() < 3)
            throw ContractError("split: list " + std::to_string(l) + " shorter than 3");
        const std::size_t n = items.size();
        split.test_target[static_cast<std::size_t>(l)] = items[n - 1];
        split.valid_target[static_cast<std::size_t>(l)] = items[n - 2];
        split.train_items[static_cast<std::size_t>(l)].assign(items.begin(), items.end() - 2);

        const std::unordered_set<int> in_list(items.begin(), items.end());
        const int eligible = index.n_items - static_cast<int>(in_list.size());
        if (eligible < num_negatives)
            throw ConfigError("split: only " + std::to_string(eligible) +
                              " eligible negatives for list " + std::to_string(l) +
                              "; use a candidate size of at most " + std::to_string(eligible + 1));

        for (const bool test_phase : {false, true}) {
            CandidateSet cs;
            cs.list = l;
            cs.ground_truth = test_phase ? split.test_target[static_cast<std::size_t>(l)]
                                         : split.valid_target[static_cast<std::size_t>(l)];
            cs.items.push_back(cs.ground_truth);
            Rng rng = make_rng(derive_seed(seed, static_cast<std::uint64_t>(l),
                                           test_phase ? 0xBEEFULL : 0xFACEULL));
            std::unordered_set<int> taken = in_list;  // negatives disjoint from the list
            while (static_cast<int>(cs.items.size()) < num_negatives + 1) {
                const int c = draw_excluding(index.n_items, taken, rng);
                taken.insert(c);
                cs.items.push_back(c);
            }
            (test_phase ? split.test_candidates : split.valid_candidates)[static_cast<std::size_t>(l)] =
                std::move(cs);
        }
    }
    return split;
}

std::vector<Triple> positive_triples(const SplitCorpus& split) {
    std::vector<Triple> out;
    for (int l = 0; l < split.index.n_lists; ++l) {
        const int u = split.index.user_of_list[static_cast<std::size_t>(l)];
        for (int item : split.train_items[static_cast<std::size_t>(l)]) out.push_back({u, item, l});
    }
    return out;
}

std::vector<Triple> sample_negative_triples(const CorpusIndex& index,
                                            const std::vector<Triple>& positives, int ratio,
                                            std::uint64_t seed,
                                            std::vector<std::string>* warnings) {
    if (ratio < 1) throw ContractError("sample_negative_triples: ratio must be >= 1");
    std::vector<Triple> out;
    out.reserve(positives.size() * static_cast<std::size_t>(ratio));
    // Per-list exclusion sets built once.
    std::vector<std::unordered_set<int>> excl(static_cast<std::size_t>(index.n_lists));
    for (int l = 0; l < index.n_lists; ++l)
        excl[static_cast<std::size_t>(l)] = std::unordered_set<int>(
            index.items_of_list[static_cast<std::size_t>(l)].begin(),
            index.items_of_list[static_cast<std::size_t>(l)].end());

    Rng rng = make_rng(derive_seed(seed, 0x4e454753ULL));  // "NEGS"
    for (const auto& p : positives) {
        const auto& ex = excl[static_cast<std::size_t>(p.list)];
        if (static_cast<int>(ex.size()) >= index.n_items) {
            warn(warnings, "list " + std::to_string(p.list) + " contains every item; skipped");
            continue;
        }
        for (int k = 0; k < ratio; ++k)
            out.push_back({p.user, draw_excluding(index.n_items, ex, rng), p.list});
    }
    return out;
}

std::vector<SequenceBatch> make_sequence_batches(const SplitCorpus& split, int max_len,
                                                 int batch_size, int negatives_per_position,
                                                 std::uint64_t seed) {
    if (max_len < 1 || batch_size < 1 || negatives_per_position < 0)
        throw ContractError("make_sequence_batches: bad configuration");
    const CorpusIndex& index = split.index;

    int width = 1;
    for (const auto& seq : split.train_items)
        width = std::max(width, std::min<int>(max_len, static_cast<int>(seq.size())));

    std::vector<int> order(static_cast<std::size_t>(index.n_lists));
    for (int l = 0; l < index.n_lists; ++l) order[static_cast<std::size_t>(l)] = l;
    Rng shuffle_rng = make_rng(derive_seed(seed, 0x53485546ULL));  // "SHUF"
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    Rng neg_rng = make_rng(derive_seed(seed, 0x5351454eULL));  // "SQEN"
    std::vector<SequenceBatch> batches;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
        const int rows = static_cast<int>(
            std::min<std::size_t>(static_cast<std::size_t>(batch_size), order.size() - start));
        SequenceBatch b;
        b.rows = rows;
        b.width = width;
        b.negatives_per_position = negatives_per_position;
        b.users.resize(static_cast<std::size_t>(rows));
        b.lists.resize(static_cast<std::size_t>(rows));
        const std::size_t cells = static_cast<std::size_t>(rows) * static_cast<std::size_t>(width);
        b.items.assign(cells, 0);
        b.positions.assign(cells, 0);
        b.targets.assign(cells, -1);
        b.negatives.assign(cells * static_cast<std::size_t>(negatives_per_position), -1);
        b.has_item.assign(cells, 0);
        b.has_target.assign(cells, 0);

        for (int r = 0; r < rows; ++r) {
            const int l = order[start + static_cast<std::size_t>(r)];
            const auto& full_seq = split.train_items[static_cast<std::size_t>(l)];
            // Keep the most recent max_len items.
            const int n = std::min<int>(max_len, static_cast<int>(full_seq.size()));
            const int src_off = static_cast<int>(full_seq.size()) - n;
            const int pad = width - n;
            b.users[static_cast<std::size_t>(r)] = index.user_of_list[static_cast<std::size_t>(l)];
            b.lists[static_cast<std::size_t>(r)] = l;
            const auto& full_list = index.items_of_list[static_cast<std::size_t>(l)];
            const std::unordered_set<int> ex(full_list.begin(), full_list.end());
            for (int k = 0; k < n; ++k) {
                const int t = pad + k;
                const auto s = b.slot(r, t);
                b.items[static_cast<std::size_t>(s)] = full_seq[static_cast<std::size_t>(src_off + k)];
                b.positions[static_cast<std::size_t>(s)] = k;
                b.has_item[static_cast<std::size_t>(s)] = 1;
                if (k + 1 < n) {
                    b.targets[static_cast<std::size_t>(s)] =
                        full_seq[static_cast<std::size_t>(src_off + k + 1)];
                    b.has_target[static_cast<std::size_t>(s)] = 1;
                    for (int j = 0; j < negatives_per_position; ++j)
                        b.negatives[static_cast<std::size_t>(s) * negatives_per_position +
                                    static_cast<std::size_t>(j)] =
                            draw_excluding(index.n_items, ex, neg_rng);
                }
            }
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

// ---------------------------------------------------------------------------
// split artifact io
// ---------------------------------------------------------------------------

namespace {

void write_lines(const fs::path& p, const std::string& content) {
    const fs::path tmp = p.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw IoError("cannot write " + tmp.string());
        f << content;
    }
    fs::rename(tmp, p);  // atomic replace
}

}  // namespace

void write_split(const SplitCorpus& split, const std::string& dir, const std::string& fingerprint) {
    const CorpusIndex& idx = split.index;
    fs::create_directories(dir);
    const fs::path base(dir);

    std::ostringstream users, items, lists, train, valid, test, cands, meta;
    for (int u = 0; u < idx.n_users; ++u) users << u << "\t" << idx.user_keys[static_cast<std::size_t>(u)] << "\n";
    for (int i = 0; i < idx.n_items; ++i) items << i << "\t" << idx.item_keys[static_cast<std::size_t>(i)] << "\n";
    for (int l = 0; l < idx.n_lists; ++l)
        lists << l << "\t" << idx.list_keys[static_cast<std::size_t>(l)] << "\t"
              << idx.user_of_list[static_cast<std::size_t>(l)] << "\n";
    for (int l = 0; l < idx.n_lists; ++l) {
        train << l;
        for (int it : split.train_items[static_cast<std::size_t>(l)]) train << " " << it;
        train << "\n";
        valid << l << " " << split.valid_target[static_cast<std::size_t>(l)] << "\n";
        test << l << " " << split.test_target[static_cast<std::size_t>(l)] << "\n";
        for (const bool test_phase : {false, true}) {
            const auto& cs = (test_phase ? split.test_candidates : split.valid_candidates)[static_cast<std::size_t>(l)];
            cands << l << " " << (test_phase ? "test" : "valid");
            for (int it : cs.items) cands << " " << it;
            cands << "\n";
        }
    }
    meta << "seed " << split.seed << "\n"
         << "candidate_size " << split.candidate_size << "\n"
         << "n_users " << idx.n_users << "\n"
         << "n_items " << idx.n_items << "\n"
         << "n_lists " << idx.n_lists << "\n"
         << "fingerprint " << fingerprint << "\n";

    write_lines(base / "users.tsv", users.str());
    write_lines(base / "items.tsv", items.str());
    write_lines(base / "lists.tsv", lists.str());
    write_lines(base / "train.txt", train.str());
    write_lines(base / "valid.txt", valid.str());
    write_lines(base / "test.txt", test.str());
    write_lines(base / "candidates.txt", cands.str());
    write_lines(base / "meta.txt", meta.str());
}

SplitCorpus read_split(const std::string& dir) {
    const fs::path base(dir);
    auto open = [&](const char* name) {
        std::ifstream f(base / name);
        if (!f) throw IoError("split artifact missing file: " + (base / name).string());
        return f;
    };

    SplitCorpus split;
    CorpusIndex& idx = split.index;
    {
        auto f = open("meta.txt");
        std::string key;
        while (f >> key) {
            if (key == "seed") f >> split.seed;
            else if (key == "candidate_size") f >> split.candidate_size;
            else if (key == "n_users") f >> idx.n_users;
            else if (key == "n_items") f >> idx.n_items;
            else if (key == "n_lists") f >> idx.n_lists;
            else {
                std::string skip;
                std::getline(f, skip);
            }
        }
    }
    {
        auto f = open("users.tsv");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto fields = split_line(line, '\t');
            idx.user_keys.push_back(fields.at(1));
            idx.user_id_of[fields.at(1)] = std::stoi(fields.at(0));
        }
    }
    {
        auto f = open("items.tsv");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto fields = split_line(line, '\t');
            idx.item_keys.push_back(fields.at(1));
            idx.item_id_of[fields.at(1)] = std::stoi(fields.at(0));
        }
    }
    idx.lists_of_user.resize(static_cast<std::size_t>(idx.n_users));
    idx.user_of_list.resize(static_cast<std::size_t>(idx.n_lists));
    {
        auto f = open("lists.tsv");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            const auto fields = split_line(line, '\t');
            const int l = std::stoi(fields.at(0));
            idx.list_keys.push_back(fields.at(1));
            idx.list_id_of[fields.at(1)] = l;
            const int u = std::stoi(fields.at(2));
            idx.user_of_list[static_cast<std::size_t>(l)] = u;
            idx.lists_of_user[static_cast<std::size_t>(u)].push_back(l);
        }
    }
    split.train_items.resize(static_cast<std::size_t>(idx.n_lists));
    split.valid_target.assign(static_cast<std::size_t>(idx.n_lists), -1);
    split.test_target.assign(static_cast<std::size_t>(idx.n_lists), -1);
    split.valid_candidates.resize(static_cast<std::size_t>(idx.n_lists));
    split.test_candidates.resize(static_cast<std::size_t>(idx.n_lists));
    {
        auto f = open("train.txt");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            int l, it;
            ss >> l;
            while (ss >> it) split.train_items[static_cast<std::size_t>(l)].push_back(it);
        }
    }
    for (const bool test_phase : {false, true}) {
        auto f = open(test_phase ? "test.txt" : "valid.txt");
        int l, t;
        while (f >> l >> t)
            (test_phase ? split.test_target : split.valid_target)[static_cast<std::size_t>(l)] = t;
    }
    {
        auto f = open("candidates.txt");
        std::string line;
        while (std::getline(f, line)) {
            if (line.empty()) continue;
            std::istringstream ss(line);
            int l;
            std::string phase;
            ss >> l >> phase;
            CandidateSet cs;
            cs.list = l;
            int it;
            while (ss >> it) cs.items.push_back(it);
            if (cs.items.empty()) throw ParseError("empty candidate set for list " + std::to_string(l));
            cs.ground_truth = cs.items.front();
            (phase == "test" ? split.test_candidates : split.valid_candidates)[static_cast<std::size_t>(l)] =
                std::move(cs);
        }
    }
    // Rebuild the full chronological lists.
    idx.items_of_list.resize(static_cast<std::size_t>(idx.n_lists));
    for (int l = 0; l < idx.n_lists; ++l) {
        auto& full = idx.items_of_list[static_cast<std::size_t>(l)];
        full = split.train_items[static_cast<std::size_t>(l)];
        full.push_back(split.valid_target[static_cast<std::size_t>(l)]);
        full.push_back(split.test_target[static_cast<std::size_t>(l)]);
    }
    return split;
}

}  // namespace htn
