#include "ladle/fusion.hpp"

namespace ladle {

namespace {

std::string block_prefix(size_t block) { return "fusion.block" + std::to_string(block); }

void check_finite(const Graph& g, int id, size_t block, const char* what) {
    if (!g.val(id).all_finite())
        throw numeric_error(std::string("non-finite activation in fusion block ") +
                            std::to_string(block) + " (" + what + ")");
}

int branch_graph(BuildCtx& ctx, const std::string& prefix, int z_t, int z_kv,
                 const std::vector<uint8_t>* kv_mask, bool stash, int* attn_node) {
    Graph& g = ctx.g;
    const int ca = attention_graph(ctx, z_t, z_kv, prefix + ".attn", kv_mask, stash, attn_node);
    const int z1 = layer_norm_graph(ctx, g.add(z_t, ca), prefix + ".ln1");
    const int m = mlp_graph(ctx, z1, prefix + ".mlp");
    return layer_norm_graph(ctx, g.add(z1, m), prefix + ".ln2");
}

}  // namespace

void init_fusion(ParamStore& store, const ModelConfig& cfg, uint64_t seed) {
    for (size_t i = 0; i < cfg.fusion_blocks; ++i) {
        const std::string p = block_prefix(i);
        init_attention_params(store, p + ".sa", cfg.dim, seed);
        init_layer_norm_params(store, p + ".ln_sa", cfg.dim);
        init_attention_params(store, p + ".ti.attn", cfg.dim, seed);
        init_layer_norm_params(store, p + ".ti.ln1", cfg.dim);
        init_mlp_params(store, p + ".ti.mlp", cfg.dim, cfg.dim * cfg.mlp_ratio, seed);
        init_layer_norm_params(store, p + ".ti.ln2", cfg.dim);
        if (cfg.use_reference_branch) {
            init_attention_params(store, p + ".tm.attn", cfg.dim, seed);
            init_layer_norm_params(store, p + ".tm.ln1", cfg.dim);
            init_mlp_params(store, p + ".tm.mlp", cfg.dim, cfg.dim * cfg.mlp_ratio, seed);
            init_layer_norm_params(store, p + ".tm.ln2", cfg.dim);
        }
        init_layer_norm_params(store, p + ".ln_out", cfg.dim);
    }
}

int fusion_block_graph(BuildCtx& ctx, int z_txt, int z_img, int z_multi, size_t block,
                       const std::vector<uint8_t>* txt_mask,
                       const std::vector<uint8_t>* multi_mask, FusionStash* stash) {
    Graph& g = ctx.g;
    const std::string p = block_prefix(block);
    if (g.val(z_txt).cols != ctx.cfg.dim || g.val(z_img).cols != ctx.cfg.dim)
        throw input_error("fusion: embedding dimension mismatch");

    const int sa = attention_graph(ctx, z_txt, z_txt, p + ".sa", txt_mask);
    const int z_t = layer_norm_graph(ctx, g.add(z_txt, sa), p + ".ln_sa");

    int ti_attn = -1;
    const int b_img = branch_graph(ctx, p + ".ti", z_t, z_img, nullptr,
                                   stash != nullptr, &ti_attn);
    if (stash) stash->ti_attn_nodes.push_back(ti_attn);

    const int residual = ctx.cfg.final_residual_from_input ? z_txt : z_t;
    int sum = g.add(residual, b_img);
    if (ctx.cfg.use_reference_branch) {
        if (z_multi < 0) throw input_error("fusion: reference branch enabled but no features");
        if (g.val(z_multi).cols != ctx.cfg.dim)
            throw input_error("fusion: embedding dimension mismatch");
        const int b_multi = branch_graph(ctx, p + ".tm", z_t, z_multi, multi_mask, false, nullptr);
        sum = g.add(sum, b_multi);
    }
    const int out = layer_norm_graph(ctx, sum, p + ".ln_out");
    check_finite(g, out, block, "output");
    return out;
}

int fusion_stack_graph(BuildCtx& ctx, int z_txt, int z_img, int z_multi,
                       const std::vector<uint8_t>* txt_mask,
                       const std::vector<uint8_t>* multi_mask, FusionStash* stash) {
    int x = z_txt;
    for (size_t i = 0; i < ctx.cfg.fusion_blocks; ++i)
        x = fusion_block_graph(ctx, x, z_img, z_multi, i, txt_mask, multi_mask, stash);
    return x;
}

namespace {

int leaf_seq(Graph& g, const EmbeddingSequence& s) { return g.leaf(s.vectors); }

EmbeddingSequence result_seq(const Graph& g, int id, const EmbeddingSequence& like) {
    EmbeddingSequence out;
    out.vectors = g.val(id);
    out.cls_index = like.cls_index;
    out.valid = like.valid;
    return out;
}

}  // namespace

EmbeddingSequence self_attend(const EmbeddingSequence& z_txt, const ParamStore& params,
                              const ModelConfig& cfg, size_t block) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    const std::string p = block_prefix(block);
    const auto* mask = g.intern_mask(z_txt.valid);
    const int x = leaf_seq(g, z_txt);
    const int sa = attention_graph(ctx, x, x, p + ".sa", mask);
    const int z_t = layer_norm_graph(ctx, g.add(x, sa), p + ".ln_sa");
    check_finite(g, z_t, block, "self attention");
    return result_seq(g, z_t, z_txt);
}

EmbeddingSequence cross_branch(const EmbeddingSequence& z_q, const EmbeddingSequence& z_kv,
                               const ParamStore& params, const ModelConfig& cfg, size_t block,
                               bool image_branch) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    const std::string p = block_prefix(block) + (image_branch ? ".ti" : ".tm");
    const auto* kv_mask = g.intern_mask(z_kv.valid);
    const int q = leaf_seq(g, z_q);
    const int kv = leaf_seq(g, z_kv);
    const int out = branch_graph(ctx, p, q, kv, kv_mask, false, nullptr);
    check_finite(g, out, block, image_branch ? "text-image branch" : "text-reference branch");
    return result_seq(g, out, z_q);
}

EmbeddingSequence fusion_block(const EmbeddingSequence& z_txt, const EmbeddingSequence& z_img,
                               const EmbeddingSequence& z_multi, const ParamStore& params,
                               const ModelConfig& cfg, size_t block) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    const auto* tmask = g.intern_mask(z_txt.valid);
    const auto* mmask = g.intern_mask(z_multi.valid);
    const int out = fusion_block_graph(ctx, leaf_seq(g, z_txt), leaf_seq(g, z_img),
                                       cfg.use_reference_branch ? leaf_seq(g, z_multi) : -1,
                                       block, tmask, mmask, nullptr);
    return result_seq(g, out, z_txt);
}

EmbeddingSequence fusion_stack(const EmbeddingSequence& z_txt, const EmbeddingSequence& z_img,
                               const EmbeddingSequence& z_multi, const ParamStore& params,
                               const ModelConfig& cfg) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    const auto* tmask = g.intern_mask(z_txt.valid);
    const auto* mmask = g.intern_mask(z_multi.valid);
    const int out = fusion_stack_graph(ctx, leaf_seq(g, z_txt), leaf_seq(g, z_img),
                                       cfg.use_reference_branch ? leaf_seq(g, z_multi) : -1,
                                       tmask, mmask, nullptr);
    return result_seq(g, out, z_txt);
}

}  // namespace ladle
