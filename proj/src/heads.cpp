#include "ladle/heads.hpp"

#include <cmath>

namespace ladle {

double sigmoid(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

namespace {

void add_head(ParamStore& s, const std::string& prefix, size_t d, size_t hidden, size_t out,
              uint64_t seed) {
    Rng r1 = Rng::derive(seed, "init/" + prefix + ".w1");
    Rng r2 = Rng::derive(seed, "init/" + prefix + ".w2");
    s.add(prefix + ".w1", Tensor::randn(d, hidden, r1, 0.02));
    s.add(prefix + ".b1", Tensor::zeros(1, hidden));
    s.add(prefix + ".w2", Tensor::randn(hidden, out, r2, 0.02));
    s.add(prefix + ".b2", Tensor::zeros(1, out));
}

int head_graph(BuildCtx& ctx, int cls, const std::string& prefix) {
    Graph& g = ctx.g;
    int h = g.add_rowvec(g.matmul(cls, ctx.use(prefix + ".w1")), ctx.use(prefix + ".b1"));
    h = g.gelu(h);
    return g.add_rowvec(g.matmul(h, ctx.use(prefix + ".w2")), ctx.use(prefix + ".b2"));
}

}  // namespace

void init_heads(ParamStore& store, const ModelConfig& cfg, uint64_t seed) {
    add_head(store, "heads.bin", cfg.dim, cfg.head_hidden(), 1, seed);
    add_head(store, "heads.multi", cfg.dim, cfg.head_hidden(), 4, seed);
}

int binary_head_graph(BuildCtx& ctx, int cls) { return head_graph(ctx, cls, "heads.bin"); }

int multilabel_head_graph(BuildCtx& ctx, int cls) { return head_graph(ctx, cls, "heads.multi"); }

int classification_loss_graph(Graph& g, int bin_logit, int multi_logits,
                              const LabelVector& labels) {
    labels.validate();
    const int bce_bin =
        g.bce_logits_mean(bin_logit, Tensor::row({labels.tampered ? 1.0 : 0.0}));
    Tensor targets(1, 4);
    for (size_t i = 0; i < 4; ++i) targets.d[i] = labels.manip[i] ? 1.0 : 0.0;
    const int bce_multi = g.bce_logits_mean(multi_logits, std::move(targets));
    return g.add(bce_bin, bce_multi);
}

int total_loss_graph(Graph& g, int align, int cls, double w_align, double w_cls) {
    return g.add(g.scale(align, w_align), g.scale(cls, w_cls));
}

double binary_head(const Tensor& z_cls, const ParamStore& params, const ModelConfig& cfg) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    return g.scalar(binary_head_graph(ctx, g.leaf(z_cls)));
}

Tensor multilabel_head(const Tensor& z_cls, const ParamStore& params, const ModelConfig& cfg) {
    Graph g;
    BuildCtx ctx{g, params, cfg, false, nullptr};
    return g.val(multilabel_head_graph(ctx, g.leaf(z_cls)));
}

double classification_loss(double bin_logit, const Tensor& multi_logits,
                           const LabelVector& labels) {
    Graph g;
    const int b = g.constant(Tensor::row({bin_logit}));
    const int m = g.constant(multi_logits);
    return g.scalar(classification_loss_graph(g, b, m, labels));
}

double total_loss(double align, double cls, double w_align, double w_cls) {
    return w_align * align + w_cls * cls;
}

}  // namespace ladle
