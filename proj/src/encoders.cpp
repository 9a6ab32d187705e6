#include "ladle/encoders.hpp"

#include <numeric>

namespace ladle {

void ModelConfig::validate() const {
    if (dim == 0 || heads == 0 || dim % heads != 0)
        throw config_error("model: heads must divide dim");
    if (dim % 2 != 0) throw config_error("model: dim must be even for the heads");
    if (encoder_layers == 0 || reference_layers == 0 || fusion_blocks == 0)
        throw config_error("model: layer counts must be positive");
    if (layer_avg_k == 0 || layer_avg_k > encoder_layers)
        throw config_error("model: layer_avg_k must be in [1, encoder_layers]");
    if (vocab <= kFirstContentToken) throw config_error("model: vocabulary too small");
    if (max_text_len < 2) throw config_error("model: max_text_len too small");
    if (patch_grid == 0 || patch_dim == 0) throw config_error("model: empty patch geometry");
    if (mlp_ratio == 0) throw config_error("model: mlp_ratio must be positive");
}

namespace {

constexpr double kInitStd = 0.02;

Tensor init_weight(size_t r, size_t c, uint64_t seed, const std::string& name) {
    Rng rng = Rng::derive(seed, "init/" + name);
    return Tensor::randn(r, c, rng, kInitStd);
}

void add_weight(ParamStore& s, const std::string& name, size_t r, size_t c, uint64_t seed,
                bool hard_frozen) {
    s.add(name, init_weight(r, c, seed, name), hard_frozen);
}

void add_zeros(ParamStore& s, const std::string& name, size_t r, size_t c, bool hard_frozen) {
    s.add(name, Tensor::zeros(r, c), hard_frozen);
}

void add_encoder_layer(ParamStore& s, const std::string& prefix, const ModelConfig& cfg,
                       uint64_t seed, bool hf) {
    init_attention_params(s, prefix + ".attn", cfg.dim, seed, hf);
    init_layer_norm_params(s, prefix + ".ln1", cfg.dim, hf);
    init_mlp_params(s, prefix + ".mlp", cfg.dim, cfg.dim * cfg.mlp_ratio, seed, hf);
    init_layer_norm_params(s, prefix + ".ln2", cfg.dim, hf);
}

int encoder_layer_graph(BuildCtx& ctx, int x, const std::string& prefix,
                        const std::vector<uint8_t>* key_mask) {
    Graph& g = ctx.g;
    const int att = attention_graph(ctx, x, x, prefix + ".attn", key_mask);
    const int h = layer_norm_graph(ctx, g.add(x, att), prefix + ".ln1");
    const int m = mlp_graph(ctx, h, prefix + ".mlp");
    return layer_norm_graph(ctx, g.add(h, m), prefix + ".ln2");
}

void check_finite(const Graph& g, int id, const std::string& what) {
    if (!g.val(id).all_finite()) throw numeric_error("non-finite activation in " + what);
}

EncodeOut run_encoder_stack(BuildCtx& ctx, int embedded, const std::string& prefix,
                            size_t n_layers, const std::vector<uint8_t>* mask, size_t avg_k,
                            bool with_projection) {
    Graph& g = ctx.g;
    EncodeOut out;
    out.mask = mask;
    int x = embedded;
    for (size_t i = 0; i < n_layers; ++i) {
        x = encoder_layer_graph(ctx, x, prefix + ".layer" + std::to_string(i), mask);
        check_finite(g, x, prefix + " layer " + std::to_string(i));
        out.layer_ids.push_back(x);
    }
    int acc = out.layer_ids[n_layers - avg_k];
    for (size_t i = n_layers - avg_k + 1; i < n_layers; ++i) acc = g.add(acc, out.layer_ids[i]);
    out.avg_id = g.scale(acc, 1.0 / static_cast<double>(avg_k));
    out.cls_id = g.select_row(out.avg_id, 0);
    if (with_projection)
        out.proj_cls_id = g.add_rowvec(g.matmul(out.cls_id, ctx.use(prefix + ".cproj.w")),
                                       ctx.use(prefix + ".cproj.b"));
    return out;
}

std::vector<size_t> iota_ids(size_t n) {
    std::vector<size_t> v(n);
    std::iota(v.begin(), v.end(), size_t{0});
    return v;
}

}  // namespace

void init_attention_params(ParamStore& s, const std::string& prefix, size_t d, uint64_t seed,
                           bool hf) {
    for (const char* w : {"wq", "wk", "wv", "wo"}) add_weight(s, prefix + "." + w, d, d, seed, hf);
    for (const char* b : {"bq", "bk", "bv", "bo"}) add_zeros(s, prefix + "." + b, 1, d, hf);
}

void init_layer_norm_params(ParamStore& s, const std::string& prefix, size_t d, bool hf) {
    s.add(prefix + ".g", Tensor::full(1, d, 1.0), hf);
    s.add(prefix + ".b", Tensor::zeros(1, d), hf);
}

void init_mlp_params(ParamStore& s, const std::string& prefix, size_t d, size_t hidden,
                     uint64_t seed, bool hf) {
    add_weight(s, prefix + ".w1", d, hidden, seed, hf);
    add_zeros(s, prefix + ".b1", 1, hidden, hf);
    add_weight(s, prefix + ".w2", hidden, d, seed, hf);
    add_zeros(s, prefix + ".b2", 1, d, hf);
}

int attention_graph(BuildCtx& ctx, int xq, int xkv, const std::string& prefix,
                    const std::vector<uint8_t>* key_mask, bool stash_attn, int* mha_node) {
    Graph& g = ctx.g;
    const int q = g.add_rowvec(g.matmul(xq, ctx.use(prefix + ".wq")), ctx.use(prefix + ".bq"));
    const int k = g.add_rowvec(g.matmul(xkv, ctx.use(prefix + ".wk")), ctx.use(prefix + ".bk"));
    const int v = g.add_rowvec(g.matmul(xkv, ctx.use(prefix + ".wv")), ctx.use(prefix + ".bv"));
    const int att = g.mha(q, k, v, static_cast<int>(ctx.cfg.heads), key_mask, stash_attn);
    if (mha_node) *mha_node = att;
    return g.add_rowvec(g.matmul(att, ctx.use(prefix + ".wo")), ctx.use(prefix + ".bo"));
}

int mlp_graph(BuildCtx& ctx, int x, const std::string& prefix) {
    Graph& g = ctx.g;
    int h = g.add_rowvec(g.matmul(x, ctx.use(prefix + ".w1")), ctx.use(prefix + ".b1"));
    h = g.gelu(h);
    return g.add_rowvec(g.matmul(h, ctx.use(prefix + ".w2")), ctx.use(prefix + ".b2"));
}

int layer_norm_graph(BuildCtx& ctx, int x, const std::string& prefix) {
    return ctx.g.layer_norm(x, ctx.use(prefix + ".g"), ctx.use(prefix + ".b"), ctx.cfg.ln_eps);
}

void init_unimodal_encoder(ParamStore& store, const std::string& prefix, const ModelConfig& cfg,
                           bool is_text, uint64_t seed) {
    if (is_text) {
        add_weight(store, prefix + ".tok_emb", cfg.vocab, cfg.dim, seed, false);
        add_weight(store, prefix + ".pos", cfg.max_text_len, cfg.dim, seed, false);
    } else {
        add_weight(store, prefix + ".patch.w", cfg.patch_dim, cfg.dim, seed, false);
        add_zeros(store, prefix + ".patch.b", 1, cfg.dim, false);
        add_weight(store, prefix + ".cls", 1, cfg.dim, seed, false);
        add_weight(store, prefix + ".pos", cfg.image_len(), cfg.dim, seed, false);
    }
    for (size_t i = 0; i < cfg.encoder_layers; ++i)
        add_encoder_layer(store, prefix + ".layer" + std::to_string(i), cfg, seed, false);
    add_weight(store, prefix + ".cproj.w", cfg.dim, cfg.dim, seed, false);
    add_zeros(store, prefix + ".cproj.b", 1, cfg.dim, false);
}

void init_reference_encoder(ParamStore& store, const ModelConfig& cfg, uint64_t seed,
                            bool hard_frozen) {
    const std::string prefix = "ref_enc";
    add_weight(store, prefix + ".enc_tok", 1, cfg.dim, seed, hard_frozen);
    add_weight(store, prefix + ".patch.w", cfg.patch_dim, cfg.dim, seed, hard_frozen);
    add_zeros(store, prefix + ".patch.b", 1, cfg.dim, hard_frozen);
    add_weight(store, prefix + ".tok_emb", cfg.vocab, cfg.dim, seed, hard_frozen);
    add_weight(store, prefix + ".pos", cfg.multi_len(), cfg.dim, seed, hard_frozen);
    for (size_t i = 0; i < cfg.reference_layers; ++i)
        add_encoder_layer(store, prefix + ".layer" + std::to_string(i), cfg, seed, hard_frozen);
}

EncodeOut encode_text_graph(BuildCtx& ctx, const TokenSequence& tokens,
                            const std::string& prefix) {
    tokens.validate(ctx.cfg.vocab, ctx.cfg.max_text_len);
    Graph& g = ctx.g;
    const int tok = g.gather_rows(ctx.use(prefix + ".tok_emb"), tokens.ids);
    const int pos = g.gather_rows(ctx.use(prefix + ".pos"), iota_ids(tokens.ids.size()));
    const int emb = g.add(tok, pos);
    const auto* mask = g.intern_mask(tokens.mask);
    return run_encoder_stack(ctx, emb, prefix, ctx.cfg.encoder_layers, mask, ctx.cfg.layer_avg_k,
                             true);
}

EncodeOut encode_image_graph(BuildCtx& ctx, const PatchGrid& patches, const std::string& prefix) {
    patches.validate();
    if (patches.grid != ctx.cfg.patch_grid || patches.patch_dim != ctx.cfg.patch_dim)
        throw input_error("patch grid does not match the configured geometry");
    Graph& g = ctx.g;
    const int raw = g.constant(patches.patches);
    const int proj =
        g.add_rowvec(g.matmul(raw, ctx.use(prefix + ".patch.w")), ctx.use(prefix + ".patch.b"));
    const int seq = g.concat_rows({ctx.use(prefix + ".cls"), proj});
    const int emb = g.add(seq, ctx.use(prefix + ".pos"));
    const auto* mask = g.intern_mask(std::vector<uint8_t>(ctx.cfg.image_len(), 1));
    return run_encoder_stack(ctx, emb, prefix, ctx.cfg.encoder_layers, mask, ctx.cfg.layer_avg_k,
                             true);
}

EncodeOut encode_multimodal_graph(BuildCtx& ctx, const PatchGrid& patches,
                                  const TokenSequence& tokens, const std::string& prefix) {
    patches.validate();
    tokens.validate(ctx.cfg.vocab, ctx.cfg.max_text_len);
    if (patches.grid != ctx.cfg.patch_grid || patches.patch_dim != ctx.cfg.patch_dim)
        throw input_error("patch grid does not match the configured geometry");
    Graph& g = ctx.g;
    const int raw = g.constant(patches.patches);
    const int proj =
        g.add_rowvec(g.matmul(raw, ctx.use(prefix + ".patch.w")), ctx.use(prefix + ".patch.b"));
    const int tok = g.gather_rows(ctx.use(prefix + ".tok_emb"), tokens.ids);
    const int seq = g.concat_rows({ctx.use(prefix + ".enc_tok"), proj, tok});
    const size_t joint_len = 1 + patches.patches.rows + tokens.ids.size();
    const int pos = g.gather_rows(ctx.use(prefix + ".pos"), iota_ids(joint_len));
    const int emb = g.add(seq, pos);
    std::vector<uint8_t> m(joint_len, 1);
    for (size_t i = 0; i < tokens.mask.size(); ++i)
        m[1 + patches.patches.rows + i] = tokens.mask[i];
    const auto* mask = g.intern_mask(std::move(m));
    // reference branch: no layer averaging, no contrastive projection
    return run_encoder_stack(ctx, emb, prefix, ctx.cfg.reference_layers, mask, 1, false);
}

namespace {

std::vector<EmbeddingSequence> extract_layers(const Graph& g, const EncodeOut& out) {
    std::vector<EmbeddingSequence> seqs;
    for (int id : out.layer_ids) {
        EmbeddingSequence s;
        s.vectors = g.val(id);
        s.cls_index = 0;
        s.valid = *out.mask;
        seqs.push_back(std::move(s));
    }
    return seqs;
}

}  // namespace

std::vector<EmbeddingSequence> encode_text(const TokenSequence& tokens, const ParamStore& params,
                                           const ModelConfig& cfg) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    EncodeOut out = encode_text_graph(ctx, tokens);
    return extract_layers(g, out);
}

std::vector<EmbeddingSequence> encode_image(const PatchGrid& patches, const ParamStore& params,
                                            const ModelConfig& cfg) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    EncodeOut out = encode_image_graph(ctx, patches);
    return extract_layers(g, out);
}

EmbeddingSequence encode_multimodal(const PatchGrid& patches, const TokenSequence& tokens,
                                    const ParamStore& params, const ModelConfig& cfg) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    EncodeOut out = encode_multimodal_graph(ctx, patches, tokens);
    EmbeddingSequence s;
    s.vectors = g.val(out.layer_ids.back());
    s.cls_index = 0;
    s.valid = *out.mask;
    return s;
}

EmbeddingSequence layer_average(const std::vector<EmbeddingSequence>& layers, size_t k) {
    if (k == 0) throw input_error("layer_average: k must be positive");
    if (k > layers.size()) throw input_error("layer_average: k exceeds layer count");
    const EmbeddingSequence& last = layers.back();
    EmbeddingSequence out;
    out.vectors = Tensor::zeros(last.vectors.rows, last.vectors.cols);
    out.cls_index = last.cls_index;
    out.valid = last.valid;
    for (size_t i = layers.size() - k; i < layers.size(); ++i) {
        if (!layers[i].vectors.same_shape(last.vectors))
            throw input_error("layer_average: layer shape mismatch");
        for (size_t e = 0; e < out.vectors.numel(); ++e)
            out.vectors.d[e] += layers[i].vectors.d[e];
    }
    for (auto& v : out.vectors.d) v /= static_cast<double>(k);
    return out;
}

MomentumState make_momentum(const ParamStore& base, double momentum) {
    if (momentum < 0.0 || momentum > 1.0)
        throw config_error("ema momentum must lie in [0, 1]");
    MomentumState st;
    st.momentum = momentum;
    for (const auto& p : base)
        if (glob_match("txt_enc.*", p.name) || glob_match("img_enc.*", p.name))
            st.shadow.add(p.name, p.value);
    return st;
}

void ema_update(const ParamStore& base, MomentumState& state) {
    if (state.momentum < 0.0 || state.momentum > 1.0)
        throw config_error("ema momentum must lie in [0, 1]");
    const double m = state.momentum;
    for (auto& sp : state.shadow) {
        const Tensor& b = base.at(sp.name).value;
        if (!b.same_shape(sp.value)) throw input_error("ema: shape mismatch for " + sp.name);
        for (size_t i = 0; i < b.numel(); ++i)
            sp.value.d[i] = m * sp.value.d[i] + (1.0 - m) * b.d[i];
    }
}

}  // namespace ladle
