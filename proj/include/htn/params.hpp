#pragma once

// Named trainable tensors plus the checkpoint container. The file format is
// a versioned text layout (name, shape, row-major values) so checkpoints stay
// stable across runs and diff cleanly; values round-trip exactly via
// max_digits10 printing.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "htn/common.hpp"
#include "htn/tensor.hpp"

namespace htn {

template <class S>
class ParameterStore {
  public:
    // Weights and embeddings draw from U[-limit, limit]; the per-name seed
    // makes initialization independent of registration order.
    TensorT<S>& add_uniform(const std::string& name, const Shape& shape, double limit,
                            std::uint64_t seed) {
        auto t = TensorT<S>::raw(shape);
        Rng rng = make_rng(derive_seed(seed, fnv1a(name)));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = static_cast<S>(dist(rng));
        t.set_requires_grad(true);
        return insert(name, std::move(t));
    }

    TensorT<S>& add_constant(const std::string& name, const Shape& shape, S value) {
        auto t = TensorT<S>::full(shape, value);
        t.set_requires_grad(true);
        return insert(name, std::move(t));
    }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    TensorT<S>& get(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("no parameter named '" + name + "'");
        return it->second;
    }
    const TensorT<S>& get(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ContractError("no parameter named '" + name + "'");
        return it->second;
    }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(params_.size());
        for (const auto& [k, v] : params_) out.push_back(k);
        return out;
    }

    std::size_t size() const { return params_.size(); }

    void zero_grads() {
        for (auto& [k, v] : params_) v.zero_grad();
    }

    // Deep copy of values (used for best-epoch snapshots).
    std::map<std::string, std::vector<S>> snapshot() const {
        std::map<std::string, std::vector<S>> out;
        for (const auto& [k, v] : params_) out.emplace(k, v.vec());
        return out;
    }
    void restore(const std::map<std::string, std::vector<S>>& snap) {
        for (const auto& [k, vals] : snap) {
            auto& t = get(k);
            if (vals.size() != t.vec().size())
                throw ContractError("snapshot size mismatch for '" + k + "'");
            t.vec() = vals;
        }
    }

    void save(const std::string& path, const std::string& fingerprint) const {
        std::ostringstream os;
        os << "htn-checkpoint v1\n";
        os << "scalar " << (sizeof(S) == 4 ? "f32" : "f64") << "\n";
        os << "fingerprint " << fingerprint << "\n";
        os << "count " << params_.size() << "\n";
        os.precision(std::numeric_limits<S>::max_digits10);
        for (const auto& [name, t] : params_) {
            os << "tensor " << name << " " << t.rank();
            for (int i = 0; i < t.rank(); ++i) os << " " << t.dim(i);
            os << "\n";
            for (std::int64_t i = 0; i < t.numel(); ++i) {
                os << t.data()[i];
                os << (((i + 1) % 8 == 0 || i + 1 == t.numel()) ? "\n" : " ");
            }
        }
        os << "end\n";
        const std::string tmp = path + ".tmp";
        {
            std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
            if (!f) throw IoError("cannot write checkpoint: " + path);
            f << os.str();
        }
        std::filesystem::rename(tmp, path);
    }

    // Loads values into already-registered parameters; shapes must agree.
    // Returns the stored fingerprint.
    std::string load(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw IoError("cannot read checkpoint: " + path);
        std::string word;
        f >> word;
        if (word != "htn-checkpoint") throw ParseError("not a checkpoint file: " + path);
        f >> word;
        if (word != "v1") throw ParseError("unsupported checkpoint version: " + word);
        f >> word >> word;  // "scalar" kind (precision may differ; values convert)
        std::string fingerprint;
        f >> word >> fingerprint;
        if (word != "fingerprint") throw ParseError("malformed checkpoint header");
        std::size_t count = 0;
        f >> word >> count;
        if (word != "count") throw ParseError("malformed checkpoint header");
        for (std::size_t k = 0; k < count; ++k) {
            std::string name;
            int rank = 0;
            f >> word >> name >> rank;
            if (word != "tensor" || !f) throw ParseError("malformed tensor record in " + path);
            Shape shape(static_cast<std::size_t>(rank));
            for (auto& d : shape) f >> d;
            auto& t = get(name);
            if (t.shape() != shape)
                throw ContractError("checkpoint shape mismatch for '" + name + "': file " +
                                    shape_str(shape) + " vs model " + shape_str(t.shape()));
            for (std::int64_t i = 0; i < t.numel(); ++i) {
                double v;
                f >> v;
                t.data()[i] = static_cast<S>(v);
            }
            if (!f) throw ParseError("truncated tensor values for '" + name + "'");
        }
        f >> word;
        if (word != "end") throw ParseError("missing checkpoint trailer");
        return fingerprint;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

  private:
    TensorT<S>& insert(const std::string& name, TensorT<S> t) {
        auto [it, fresh] = params_.emplace(name, std::move(t));
        if (!fresh) throw ContractError("duplicate parameter name '" + name + "'");
        return it->second;
    }

    std::map<std::string, TensorT<S>> params_;  // ordered: deterministic iteration
};

}  // namespace htn
