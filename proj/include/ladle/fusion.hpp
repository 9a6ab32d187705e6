#pragma once

#include "ladle/encoders.hpp"

namespace ladle {

// Dual-path fusion: per block, self-attended text queries two
// cross-attention branches (text-image, text-reference); branch outputs and
// the block's text input sum under a final layer norm. Block i+1 consumes
// block i's output as its text stream; image and reference features are
// re-supplied unchanged to every block.

void init_fusion(ParamStore& store, const ModelConfig& cfg, uint64_t seed);

struct FusionStash {
    // per block: the text-image cross-attention node (probs live in aux,
    // their gradients land in attn_grad when stash is requested)
    std::vector<int> ti_attn_nodes;
};

int fusion_block_graph(BuildCtx& ctx, int z_txt, int z_img, int z_multi, size_t block,
                       const std::vector<uint8_t>* txt_mask,
                       const std::vector<uint8_t>* multi_mask, FusionStash* stash = nullptr);

// returns the final fused sequence node; CLS row is index 0
int fusion_stack_graph(BuildCtx& ctx, int z_txt, int z_img, int z_multi,
                       const std::vector<uint8_t>* txt_mask,
                       const std::vector<uint8_t>* multi_mask, FusionStash* stash = nullptr);

// Value-level wrappers for the block-level contracts.
EmbeddingSequence self_attend(const EmbeddingSequence& z_txt, const ParamStore& params,
                              const ModelConfig& cfg, size_t block);
EmbeddingSequence cross_branch(const EmbeddingSequence& z_q, const EmbeddingSequence& z_kv,
                               const ParamStore& params, const ModelConfig& cfg, size_t block,
                               bool image_branch);
EmbeddingSequence fusion_block(const EmbeddingSequence& z_txt, const EmbeddingSequence& z_img,
                               const EmbeddingSequence& z_multi, const ParamStore& params,
                               const ModelConfig& cfg, size_t block);
EmbeddingSequence fusion_stack(const EmbeddingSequence& z_txt, const EmbeddingSequence& z_img,
                               const EmbeddingSequence& z_multi, const ParamStore& params,
                               const ModelConfig& cfg);

}  // namespace ladle
