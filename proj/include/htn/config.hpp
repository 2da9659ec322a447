#pragma once

// Run configuration: JSON file with documented schema, strict validation
// (unknown keys rejected), dotted-path overrides from the command line, and
// a canonical fingerprint embedded in every artifact.

#include <cstdint>
#include <string>
#include <vector>

#include "htn/common.hpp"
#include "htn/knn.hpp"
#include "htn/synth.hpp"
#include "htn/trainer.hpp"

namespace htn {

struct RunConfig {
    // data
    std::string input_path;
    std::string format = "csv";  // csv | tsv
    // split
    std::uint64_t split_seed = 1;
    int num_negatives = 100;
    int min_list_len = 3;
    // knn pipeline
    KnnPipelineConfig knn;
    // training (includes model dims and ablation flags)
    TrainConfig train;
    std::string precision = "f32";  // f32 | f64
    // evaluation
    int top_n = 5;
    // bundled synthetic corpus
    SynthConfig synth;

    void validate() const;
    std::string to_json() const;          // canonical, key-sorted
    std::string fingerprint() const;      // hash of the canonical form

    // Parses a JSON config file (empty path = all defaults), then applies
    // "section.key=value" overrides.
    static RunConfig load(const std::string& path, const std::vector<std::string>& overrides);

    // All recognized dotted keys with a short description, for --help and
    // the schema documentation.
    static std::vector<std::pair<std::string, std::string>> schema();
};

}  // namespace htn
