#pragma once

#include <map>
#include <string>
#include <vector>

#include "ladle/tensor.hpp"

namespace ladle {

// Named model parameter. hard_frozen tensors (the multimodal reference
// branch) can never be made trainable by any policy.
struct Param {
    std::string name;
    Tensor value;
    bool trainable = true;
    bool hard_frozen = false;
};

// Ordered map name -> Param; insertion order is the canonical tensor order
// used by checkpoints and hashing.
class ParamStore {
public:
    size_t add(std::string name, Tensor value, bool hard_frozen = false);

    size_t index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    Param& operator[](size_t i) { return params_[i]; }
    const Param& operator[](size_t i) const { return params_[i]; }
    Param& at(const std::string& name) { return params_[index_of(name)]; }
    const Param& at(const std::string& name) const { return params_[index_of(name)]; }

    size_t size() const { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    uint64_t content_hash() const;

private:
    std::vector<Param> params_;
    std::map<std::string, size_t> index_;
};

// `*` matches any run of characters (including '.'), `?` a single one.
bool glob_match(std::string_view pattern, std::string_view name);

// First matching rule wins; unmatched names get default_trainable.
struct FreezePolicy {
    struct Rule {
        std::string pattern;
        bool trainable;
    };
    std::string name;
    std::vector<Rule> rules;
    bool default_trainable = false;
};

// Applies the policy to every tensor and returns the trainability mask
// (1 = trainable) in store order. Rules that match nothing produce a
// warning. Marking a hard-frozen tensor trainable is a configuration error.
std::vector<uint8_t> apply_freeze_policy(ParamStore& store, const FreezePolicy& policy);

struct ParamCounts {
    size_t trainable = 0;
    size_t frozen = 0;
    size_t total = 0;
};
ParamCounts count_parameters(const ParamStore& store);
ParamCounts count_parameters(const ParamStore& store, const std::vector<uint8_t>& mask);

}  // namespace ladle
