#include "htn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_set>

namespace htn {

namespace {

std::string padded(const char* prefix, int n, int width) {
    std::string s = std::to_string(n);
    while (static_cast<int>(s.size()) < width) s = "0" + s;
    return prefix + s;
}

}  // namespace

std::string SynthData::user_key(int u) { return padded("u", u, 3); }
std::string SynthData::item_key(int i) { return padded("i", i, 4); }
std::string SynthData::list_key(int l) { return padded("l", l, 4); }

int SynthData::item_number(const std::string& key) {
    if (key.empty() || key[0] != 'i') throw ContractError("not a synthetic item key: " + key);
    return std::stoi(key.substr(1));
}

SynthData generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_items % cfg.n_genres != 0)
        throw ConfigError("synthetic corpus: n_items must be divisible by n_genres");
    const int genre_size = cfg.n_items / cfg.n_genres;
    if (cfg.max_len > 2 * genre_size)
        throw ConfigError("synthetic corpus: max_len exceeds a two-genre item pool");

    SynthData data;
    data.cfg = cfg;
    data.genre_of_item.resize(static_cast<std::size_t>(cfg.n_items));
    data.items_of_genre.assign(static_cast<std::size_t>(cfg.n_genres), {});
    for (int i = 0; i < cfg.n_items; ++i) {
        const int g = i / genre_size;
        data.genre_of_item[static_cast<std::size_t>(i)] = g;
        data.items_of_genre[static_cast<std::size_t>(g)].push_back(i);
    }

    Rng rng = make_rng(derive_seed(cfg.seed, 0x53594e54ULL));  // "SYNT"
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // preferred genres per user
    std::vector<std::vector<int>> user_genres(static_cast<std::size_t>(cfg.n_users));
    {
        std::vector<int> all(static_cast<std::size_t>(cfg.n_genres));
        for (int g = 0; g < cfg.n_genres; ++g) all[static_cast<std::size_t>(g)] = g;
        for (int u = 0; u < cfg.n_users; ++u) {
            auto pool = all;
            std::shuffle(pool.begin(), pool.end(), rng);
            pool.resize(static_cast<std::size_t>(cfg.genres_per_user));
            std::sort(pool.begin(), pool.end());
            user_genres[static_cast<std::size_t>(u)] = pool;
        }
    }

    for (int l = 0; l < cfg.n_lists; ++l) {
        const int u = l % cfg.n_users;  // every user owns at least one list
        const auto& prefs = user_genres[static_cast<std::size_t>(u)];
        std::vector<int> genres;
        {
            std::uniform_int_distribution<std::size_t> pick(0, prefs.size() - 1);
            genres.push_back(prefs[pick(rng)]);
            if (unit(rng) < cfg.p_two_genre) {
                int second = genres[0];
                while (second == genres[0]) second = prefs[pick(rng)];
                genres.push_back(second);
            }
            std::sort(genres.begin(), genres.end());
        }
        data.genres_of_list[SynthData::list_key(l)] = genres;

        std::vector<int> pool;
        for (int g : genres)
            pool.insert(pool.end(), data.items_of_genre[static_cast<std::size_t>(g)].begin(),
                        data.items_of_genre[static_cast<std::size_t>(g)].end());

        // short/long mixture keeps average length moderate while only the
        // long tail reaches deep ring positions
        int target_len;
        if (unit(rng) < cfg.p_long) {
            std::uniform_int_distribution<int> len_dist(cfg.max_len - 2, cfg.max_len);
            target_len = len_dist(rng);
        } else {
            std::uniform_int_distribution<int> len_dist(cfg.min_len, cfg.min_len + 2);
            target_len = len_dist(rng);
        }
        target_len = std::min<int>(target_len, static_cast<int>(pool.size()));

        std::unordered_set<int> used;
        std::vector<int> seq;
        // arcs start at one of a few anchor positions of the first genre's ring
        {
            const auto& ring0 = data.items_of_genre[static_cast<std::size_t>(genres[0])];
            const int stride = static_cast<int>(ring0.size()) / cfg.anchors_per_genre;
            std::uniform_int_distribution<int> pick_anchor(0, cfg.anchors_per_genre - 1);
            seq.push_back(ring0[static_cast<std::size_t>(pick_anchor(rng) * stride)]);
        }
        used.insert(seq.back());
        while (static_cast<int>(seq.size()) < target_len) {
            int next = -1;
            if (unit(rng) < cfg.p_ring) {
                // ring successor of the last item, skipping items already used
                const int last = seq.back();
                const int g = data.genre_of_item[static_cast<std::size_t>(last)];
                const auto& ring = data.items_of_genre[static_cast<std::size_t>(g)];
                const auto it = std::find(ring.begin(), ring.end(), last);
                const std::size_t pos = static_cast<std::size_t>(it - ring.begin());
                for (std::size_t step = 1; step <= ring.size(); ++step) {
                    const int cand = ring[(pos + step) % ring.size()];
                    if (!used.count(cand)) {
                        next = cand;
                        break;
                    }
                }
            }
            if (next < 0) {
                std::vector<int> unused;
                for (int c : pool)
                    if (!used.count(c)) unused.push_back(c);
                if (unused.empty()) break;
                std::uniform_int_distribution<std::size_t> pick(0, unused.size() - 1);
                next = unused[pick(rng)];
            }
            seq.push_back(next);
            used.insert(next);
        }

        for (std::size_t t = 0; t < seq.size(); ++t) {
            InteractionRecord r;
            r.user_key = SynthData::user_key(u);
            r.list_key = SynthData::list_key(l);
            r.item_key = SynthData::item_key(seq[t]);
            r.timestamp = static_cast<long long>(t + 1);
            r.file_order = data.records.size();
            data.records.push_back(std::move(r));
        }
    }
    return data;
}

void write_interactions_csv(const std::vector<InteractionRecord>& records,
                            const std::string& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f << "user_id,list_id,item_id,timestamp\n";
    for (const auto& r : records)
        f << r.user_key << "," << r.list_key << "," << r.item_key << "," << r.timestamp << "\n";
}

double bayes_score(const SynthData& data, const std::string& list_key,
                   const std::vector<int>& context_item_numbers, int candidate_item_number) {
    const auto it = data.genres_of_list.find(list_key);
    if (it == data.genres_of_list.end()) throw ContractError("unknown synthetic list: " + list_key);
    const auto& genres = it->second;
    const std::unordered_set<int> used(context_item_numbers.begin(), context_item_numbers.end());

    int ring_next = -1;
    if (!context_item_numbers.empty()) {
        const int last = context_item_numbers.back();
        const int g = data.genre_of_item[static_cast<std::size_t>(last)];
        const auto& ring = data.items_of_genre[static_cast<std::size_t>(g)];
        const auto pos_it = std::find(ring.begin(), ring.end(), last);
        const std::size_t pos = static_cast<std::size_t>(pos_it - ring.begin());
        for (std::size_t step = 1; step <= ring.size(); ++step) {
            const int cand = ring[(pos + step) % ring.size()];
            if (!used.count(cand)) {
                ring_next = cand;
                break;
            }
        }
    }

    int unused_pool = 0;
    bool in_pool = false;
    for (int g : genres) {
        for (int item : data.items_of_genre[static_cast<std::size_t>(g)]) {
            if (used.count(item)) continue;
            ++unused_pool;
            if (item == candidate_item_number) in_pool = true;
        }
    }

    double p = 0.0;
    if (candidate_item_number == ring_next) p += data.cfg.p_ring;
    if (in_pool && unused_pool > 0) p += (1.0 - data.cfg.p_ring) / unused_pool;
    return p;
}

}  // namespace htn
