#pragma once

#include "ladle/alignment.hpp"
#include "ladle/fusion.hpp"
#include "ladle/heads.hpp"

namespace ladle {

// Full detector: two trainable unimodal encoders, a frozen multimodal
// reference encoder, the dual-path fusion stack and both heads.
struct Model {
    ModelConfig cfg;
    ParamStore params;

    static Model init(const ModelConfig& cfg, uint64_t seed);

    FreezePolicy pretrain_policy() const;
    FreezePolicy finetune_policy() const;
    FreezePolicy policy_by_name(const std::string& name) const;
};

// Per-batch contrastive inputs; snapshots stay constant over the batch.
struct AlignContext {
    Tensor img_queue;
    Tensor txt_queue;
    double temperature = 0.07;
    double lambda_cos = 0.3;
};

struct SampleView {
    const PatchGrid* image = nullptr;
    const TokenSequence* text = nullptr;
    LabelVector labels;
    const PatchGrid* orig_image = nullptr;  // pristine counterpart
    const TokenSequence* orig_text = nullptr;
    bool is_pristine = true;
};

struct ForwardResult {
    int bin_logit = -1;
    int multi_logits = -1;
    int fused = -1;
    int fused_cls = -1;
    int mac = -1;
    int cosal = -1;
    int align = -1;
    int cls_loss = -1;
    int total = -1;
    Tensor mom_img_key;  // momentum embeddings of this sample, queue fodder
    Tensor mom_txt_key;
    std::vector<std::pair<size_t, int>> bound;  // trainable (param idx, node id)
    FusionStash stash;
};

struct ForwardOpts {
    bool with_grad = true;
    const AlignContext* align = nullptr;      // null: no alignment losses
    const MomentumState* momentum = nullptr;  // required when align is set
    bool compute_cls_loss = true;
    bool stash_attention = false;
    double w_align = 1.0;
    double w_cls = 1.0;
};

ForwardResult forward_sample(Graph& g, const Model& model, const SampleView& sample,
                             const ForwardOpts& opts);

}  // namespace ladle
