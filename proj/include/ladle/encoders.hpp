#pragma once

#include <string>
#include <vector>

#include "ladle/graph.hpp"
#include "ladle/params.hpp"
#include "ladle/sequence.hpp"

namespace ladle {

// Shared model geometry. Defaults are the desk-scale configuration; the
// whole struct is driven by the run config file.
struct ModelConfig {
    size_t dim = 128;
    size_t heads = 4;
    size_t encoder_layers = 6;
    size_t reference_layers = 2;
    size_t vocab = 96;
    size_t max_text_len = 12;
    size_t patch_grid = 4;
    size_t patch_dim = 32;
    size_t fusion_blocks = 6;
    size_t layer_avg_k = 3;
    size_t mlp_ratio = 4;
    double ln_eps = 1e-6;
    bool final_residual_from_input = true;  // block residual uses the block input
    bool use_reference_branch = true;

    size_t head_hidden() const { return dim / 2; }
    size_t image_len() const { return patch_grid * patch_grid + 1; }
    size_t multi_len() const { return 1 + patch_grid * patch_grid + max_text_len; }
    void validate() const;
};

// Leafs parameters into a graph, recording trainable bindings so the
// optimizer can harvest gradients after backward.
struct BuildCtx {
    Graph& g;
    const ParamStore& params;
    const ModelConfig& cfg;
    bool with_grad = true;
    std::vector<std::pair<size_t, int>>* bound = nullptr;  // (param idx, node id)

    int use(const std::string& name) {
        const size_t idx = params.index_of(name);
        const Param& p = params[idx];
        const bool ng = with_grad && p.trainable;
        const int id = g.leaf(p.value, ng);
        if (ng && bound) bound->emplace_back(idx, id);
        return id;
    }
};

// Graph-level encoder output.
struct EncodeOut {
    std::vector<int> layer_ids;  // all layer outputs, embedding not included
    int avg_id = -1;             // mean of the last k layer outputs
    int cls_id = -1;             // 1 x d row at the CLS/ENCODE position
    int proj_cls_id = -1;        // contrastive projection (unimodal only)
    const std::vector<uint8_t>* mask = nullptr;  // graph-owned key mask
};

// Parameter construction. Names are hierarchical ("txt_enc.layer3.attn.wq");
// the soup and freeze modules key on them.
void init_unimodal_encoder(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                           bool is_text, uint64_t seed);
void init_reference_encoder(ParamStore& store, const ModelConfig& cfg, uint64_t seed,
                            bool hard_frozen = true);
void init_attention_params(ParamStore& store, const std::string& prefix, size_t dim,
                           uint64_t seed, bool hard_frozen = false);
void init_layer_norm_params(ParamStore& store, const std::string& prefix, size_t dim,
                            bool hard_frozen = false);
void init_mlp_params(ParamStore& store, const std::string& prefix, size_t dim, size_t hidden,
                     uint64_t seed, bool hard_frozen = false);

// Shared sub-block builders (also used by the fusion and head modules).
int attention_graph(BuildCtx& ctx, int xq, int xkv, const std::string& prefix,
                    const std::vector<uint8_t>* key_mask, bool stash_attn = false,
                    int* mha_node = nullptr);
int mlp_graph(BuildCtx& ctx, int x, const std::string& prefix);
int layer_norm_graph(BuildCtx& ctx, int x, const std::string& prefix);

// Transformer stacks as graph builders. Inputs are validated; a non-finite
// activation raises numeric_error naming the offending layer.
EncodeOut encode_text_graph(BuildCtx& ctx, const TokenSequence& tokens,
                            const std::string& prefix = "txt_enc");
EncodeOut encode_image_graph(BuildCtx& ctx, const PatchGrid& patches,
                             const std::string& prefix = "img_enc");
EncodeOut encode_multimodal_graph(BuildCtx& ctx, const PatchGrid& patches,
                                  const TokenSequence& tokens,
                                  const std::string& prefix = "ref_enc");

// Value-level contract wrappers used by tools and tests.
std::vector<EmbeddingSequence> encode_text(const TokenSequence& tokens, const ParamStore& params,
                                           const ModelConfig& cfg);
std::vector<EmbeddingSequence> encode_image(const PatchGrid& patches, const ParamStore& params,
                                            const ModelConfig& cfg);
EmbeddingSequence encode_multimodal(const PatchGrid& patches, const TokenSequence& tokens,
                                    const ParamStore& params, const ModelConfig& cfg);

// Elementwise mean of the last k layer outputs.
EmbeddingSequence layer_average(const std::vector<EmbeddingSequence>& layers, size_t k);

// EMA shadow of the unimodal encoders (projections included).
struct MomentumState {
    ParamStore shadow;
    double momentum = 0.995;
};
MomentumState make_momentum(const ParamStore& base, double momentum);
void ema_update(const ParamStore& base, MomentumState& state);

}  // namespace ladle
