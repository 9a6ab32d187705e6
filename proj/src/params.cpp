#include "ladle/params.hpp"

namespace ladle {

size_t ParamStore::add(std::string name, Tensor value, bool hard_frozen) {
    if (index_.count(name)) throw input_error("duplicate parameter name: " + name);
    Param p;
    p.name = std::move(name);
    p.value = std::move(value);
    p.hard_frozen = hard_frozen;
    p.trainable = !hard_frozen;
    index_[p.name] = params_.size();
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

size_t ParamStore::index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw input_error("unknown parameter: " + name);
    return it->second;
}

uint64_t ParamStore::content_hash() const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params_) {
        h = fnv1a64(p.name, h);
        h = hash_tensor(p.value, h);
    }
    return h;
}

bool glob_match(std::string_view pattern, std::string_view name) {
    size_t pi = 0, ni = 0, star = std::string_view::npos, mark = 0;
    while (ni < name.size()) {
        if (pi < pattern.size() && (pattern[pi] == '?' || pattern[pi] == name[ni])) {
            ++pi;
            ++ni;
        } else if (pi < pattern.size() && pattern[pi] == '*') {
            star = pi++;
            mark = ni;
        } else if (star != std::string_view::npos) {
            pi = star + 1;
            ni = ++mark;
        } else {
            return false;
        }
    }
    while (pi < pattern.size() && pattern[pi] == '*') ++pi;
    return pi == pattern.size();
}

std::vector<uint8_t> apply_freeze_policy(ParamStore& store, const FreezePolicy& policy) {
    std::vector<uint8_t> mask(store.size(), 0);
    std::vector<uint8_t> rule_hit(policy.rules.size(), 0);
    for (size_t i = 0; i < store.size(); ++i) {
        Param& p = store[i];
        bool trainable = policy.default_trainable;
        for (size_t r = 0; r < policy.rules.size(); ++r) {
            if (glob_match(policy.rules[r].pattern, p.name)) {
                trainable = policy.rules[r].trainable;
                rule_hit[r] = 1;
                break;
            }
        }
        if (trainable && p.hard_frozen)
            throw config_error("policy '" + policy.name + "' marks frozen-for-life tensor '" +
                               p.name + "' trainable");
        p.trainable = trainable;
        mask[i] = trainable ? 1 : 0;
    }
    for (size_t r = 0; r < policy.rules.size(); ++r)
        if (!rule_hit[r])
            log_warn("freeze policy '" + policy.name + "': pattern '" +
                     policy.rules[r].pattern + "' matched no tensor");
    return mask;
}

ParamCounts count_parameters(const ParamStore& store) {
    ParamCounts c;
    for (const auto& p : store) {
        c.total += p.value.numel();
        (p.trainable ? c.trainable : c.frozen) += p.value.numel();
    }
    return c;
}

ParamCounts count_parameters(const ParamStore& store, const std::vector<uint8_t>& mask) {
    if (mask.size() != store.size()) throw input_error("count_parameters: mask size mismatch");
    ParamCounts c;
    for (size_t i = 0; i < store.size(); ++i) {
        const size_t n = store[i].value.numel();
        c.total += n;
        (mask[i] ? c.trainable : c.frozen) += n;
    }
    return c;
}

}  // namespace ladle
