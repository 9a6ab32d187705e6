#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ladle/fusion.hpp"
#include "ladle/model.hpp"
#include "support/gradcheck.hpp"
#include "support/reference_math.hpp"

using namespace ladle;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig c;
    c.dim = 16;
    c.heads = 4;
    c.encoder_layers = 1;
    c.reference_layers = 1;
    c.vocab = 8;
    c.max_text_len = 6;
    c.patch_grid = 2;
    c.patch_dim = 4;
    c.fusion_blocks = 2;
    c.layer_avg_k = 1;
    return c;
}

EmbeddingSequence rand_seq(size_t rows, size_t cols, Rng& rng) {
    EmbeddingSequence s;
    s.vectors = Tensor::randn(rows, cols, rng);
    s.valid.assign(rows, 1);
    return s;
}

refm::ParamMap to_map(const ParamStore& s) {
    refm::ParamMap m;
    for (const auto& p : s) m[p.name] = p.value;
    return m;
}

}  // namespace

TEST_CASE("self_attend normalizes rows and preserves shape") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 0);
    Rng rng(1);
    EmbeddingSequence z = rand_seq(3, cfg.dim, rng);

    EmbeddingSequence out = self_attend(z, m.params, cfg, 0);
    CHECK(out.vectors.rows == 3);
    CHECK(out.vectors.cols == cfg.dim);

    // identity affine: rows have zero mean, unit variance
    m.params.at("fusion.block0.ln_sa.g").value.fill(1.0);
    m.params.at("fusion.block0.ln_sa.b").value.fill(0.0);
    out = self_attend(z, m.params, cfg, 0);
    for (size_t r = 0; r < out.vectors.rows; ++r) {
        double mean = 0.0, var = 0.0;
        for (size_t j = 0; j < cfg.dim; ++j) mean += out.vectors.at(r, j);
        mean /= cfg.dim;
        for (size_t j = 0; j < cfg.dim; ++j) {
            const double c = out.vectors.at(r, j) - mean;
            var += c * c;
        }
        var /= cfg.dim;
        CHECK(std::fabs(mean) < 1e-9);
        CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
    }
}

TEST_CASE("self_attend matches the straight-line oracle") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 0);
    Rng rng(2);
    EmbeddingSequence z = rand_seq(3, cfg.dim, rng);
    EmbeddingSequence out = self_attend(z, m.params, cfg, 0);

    const auto pm = to_map(m.params);
    const Tensor sa = refm::mha(pm, "fusion.block0.sa", z.vectors, z.vectors, cfg.heads, nullptr);
    const Tensor ref = refm::layer_norm(refm::add(z.vectors, sa), pm.at("fusion.block0.ln_sa.g"),
                                        pm.at("fusion.block0.ln_sa.b"), cfg.ln_eps);
    for (size_t i = 0; i < ref.numel(); ++i)
        CHECK(out.vectors.d[i] == doctest::Approx(ref.d[i]).epsilon(1e-10));
}

TEST_CASE("cross_branch attends degenerately to a single key") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 3);
    Rng rng(4);
    EmbeddingSequence q = rand_seq(4, cfg.dim, rng);
    EmbeddingSequence kv1 = rand_seq(1, cfg.dim, rng);

    // single key: softmax over one element puts weight 1 on it, so
    // duplicating that key twice changes nothing
    EmbeddingSequence kv2;
    kv2.vectors = Tensor(2, cfg.dim);
    for (size_t j = 0; j < cfg.dim; ++j)
        kv2.vectors.at(0, j) = kv2.vectors.at(1, j) = kv1.vectors.at(0, j);
    kv2.valid = {1, 1};

    EmbeddingSequence a = cross_branch(q, kv1, m.params, cfg, 0, true);
    EmbeddingSequence b = cross_branch(q, kv2, m.params, cfg, 0, true);
    CHECK(a.vectors.rows == q.vectors.rows);
    for (size_t i = 0; i < a.vectors.numel(); ++i)
        CHECK(a.vectors.d[i] == doctest::Approx(b.vectors.d[i]).epsilon(1e-10));
}

TEST_CASE("cross_branch duplication invariance on random inputs") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 5);
    Rng rng(6);
    for (int t = 0; t < 20; ++t) {
        EmbeddingSequence q = rand_seq(3, cfg.dim, rng);
        EmbeddingSequence kv = rand_seq(4, cfg.dim, rng);
        EmbeddingSequence kv2;
        kv2.vectors = Tensor(8, cfg.dim);
        for (size_t r = 0; r < 8; ++r)
            for (size_t j = 0; j < cfg.dim; ++j) kv2.vectors.at(r, j) = kv.vectors.at(r % 4, j);
        kv2.valid.assign(8, 1);
        EmbeddingSequence a = cross_branch(q, kv, m.params, cfg, 1, false);
        EmbeddingSequence b = cross_branch(q, kv2, m.params, cfg, 1, false);
        for (size_t i = 0; i < a.vectors.numel(); ++i)
            CHECK(a.vectors.d[i] == doctest::Approx(b.vectors.d[i]).epsilon(1e-9));
    }
}

TEST_CASE("cross_branch matches the straight-line oracle") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 0);
    Rng rng(7);
    EmbeddingSequence q = rand_seq(2, cfg.dim, rng);
    EmbeddingSequence kv = rand_seq(3, cfg.dim, rng);
    EmbeddingSequence out = cross_branch(q, kv, m.params, cfg, 0, true);

    const auto pm = to_map(m.params);
    const std::string p = "fusion.block0.ti";
    const Tensor ca = refm::mha(pm, p + ".attn", q.vectors, kv.vectors, cfg.heads, nullptr);
    const Tensor z1 = refm::layer_norm(refm::add(q.vectors, ca), pm.at(p + ".ln1.g"),
                                       pm.at(p + ".ln1.b"), cfg.ln_eps);
    Tensor mm = refm::add_bias(refm::matmul(z1, pm.at(p + ".mlp.w1")), pm.at(p + ".mlp.b1"));
    mm = refm::gelu(mm);
    mm = refm::add_bias(refm::matmul(mm, pm.at(p + ".mlp.w2")), pm.at(p + ".mlp.b2"));
    const Tensor ref =
        refm::layer_norm(refm::add(z1, mm), pm.at(p + ".ln2.g"), pm.at(p + ".ln2.b"), cfg.ln_eps);
    for (size_t i = 0; i < ref.numel(); ++i)
        CHECK(out.vectors.d[i] == doctest::Approx(ref.d[i]).epsilon(1e-10));
}

TEST_CASE("fusion_block: zeroed branch norms reduce to LN of the input") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 8);
    Rng rng(9);
    EmbeddingSequence zt = rand_seq(3, cfg.dim, rng);
    EmbeddingSequence zi = rand_seq(5, cfg.dim, rng);
    EmbeddingSequence zm = rand_seq(4, cfg.dim, rng);

    for (const char* b : {"ti", "tm"}) {
        m.params.at("fusion.block0." + std::string(b) + ".ln2.g").value.fill(0.0);
        m.params.at("fusion.block0." + std::string(b) + ".ln2.b").value.fill(0.0);
    }
    EmbeddingSequence out = fusion_block(zt, zi, zm, m.params, cfg, 0);
    const auto pm = to_map(m.params);
    const Tensor ref = refm::layer_norm(zt.vectors, pm.at("fusion.block0.ln_out.g"),
                                        pm.at("fusion.block0.ln_out.b"), cfg.ln_eps);
    for (size_t i = 0; i < ref.numel(); ++i)
        CHECK(out.vectors.d[i] == doctest::Approx(ref.d[i]).epsilon(1e-10));
}

TEST_CASE("fusion_block structural symmetry between branches") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 10);
    Rng rng(11);
    EmbeddingSequence zt = rand_seq(3, cfg.dim, rng);
    EmbeddingSequence za = rand_seq(4, cfg.dim, rng);
    EmbeddingSequence zb = rand_seq(4, cfg.dim, rng);

    EmbeddingSequence out1 = fusion_block(zt, za, zb, m.params, cfg, 0);

    // swap the two branches' parameter sets and their kv inputs
    Model m2 = Model::init(cfg, 10);
    for (const auto& p : m.params) {
        const std::string& n = p.name;
        const auto ti = n.find(".ti.");
        const auto tm = n.find(".tm.");
        if (ti != std::string::npos) {
            std::string swapped = n;
            swapped.replace(ti, 4, ".tm.");
            m2.params.at(swapped).value = p.value;
        } else if (tm != std::string::npos) {
            std::string swapped = n;
            swapped.replace(tm, 4, ".ti.");
            m2.params.at(swapped).value = p.value;
        }
    }
    EmbeddingSequence out2 = fusion_block(zt, zb, za, m2.params, cfg, 0);
    for (size_t i = 0; i < out1.vectors.numel(); ++i)
        CHECK(out1.vectors.d[i] == doctest::Approx(out2.vectors.d[i]).epsilon(1e-10));
}

TEST_CASE("fusion_block matches the straight-line oracle") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 0);
    Rng rng(12);
    EmbeddingSequence zt = rand_seq(3, cfg.dim, rng);
    EmbeddingSequence zi = rand_seq(5, cfg.dim, rng);
    EmbeddingSequence zm = rand_seq(6, cfg.dim, rng);
    EmbeddingSequence out = fusion_block(zt, zi, zm, m.params, cfg, 1);

    const auto pm = to_map(m.params);
    const Tensor ref = refm::fusion_block(pm, "fusion.block1", zt.vectors, zi.vectors, zm.vectors,
                                          cfg.heads, cfg.ln_eps, true, nullptr, nullptr, true);
    for (size_t i = 0; i < ref.numel(); ++i)
        CHECK(out.vectors.d[i] == doctest::Approx(ref.d[i]).epsilon(1e-10));
}

TEST_CASE("final residual toggle switches between block input and self-attended text") {
    ModelConfig cfg = tiny_cfg();
    Rng rng(13);
    EmbeddingSequence zt = rand_seq(3, cfg.dim, rng);
    EmbeddingSequence zi = rand_seq(5, cfg.dim, rng);
    EmbeddingSequence zm = rand_seq(4, cfg.dim, rng);

    Model m = Model::init(cfg, 14);
    EmbeddingSequence a = fusion_block(zt, zi, zm, m.params, cfg, 0);

    ModelConfig cfg2 = cfg;
    cfg2.final_residual_from_input = false;
    EmbeddingSequence b = fusion_block(zt, zi, zm, m.params, cfg2, 0);

    double diff = 0.0;
    for (size_t i = 0; i < a.vectors.numel(); ++i)
        diff = std::max(diff, std::fabs(a.vectors.d[i] - b.vectors.d[i]));
    CHECK(diff > 1e-6);

    const auto pm = to_map(m.params);
    const Tensor ref = refm::fusion_block(pm, "fusion.block0", zt.vectors, zi.vectors, zm.vectors,
                                          cfg.heads, cfg.ln_eps, false, nullptr, nullptr, true);
    for (size_t i = 0; i < ref.numel(); ++i)
        CHECK(b.vectors.d[i] == doctest::Approx(ref.d[i]).epsilon(1e-10));
}

TEST_CASE("one-block stack equals fusion_block and depth changes the output") {
    ModelConfig cfg = tiny_cfg();
    cfg.fusion_blocks = 1;
    Model m1 = Model::init(cfg, 15);
    Rng rng(16);
    EmbeddingSequence zt = rand_seq(3, cfg.dim, rng);
    EmbeddingSequence zi = rand_seq(5, cfg.dim, rng);
    EmbeddingSequence zm = rand_seq(4, cfg.dim, rng);

    EmbeddingSequence once = fusion_block(zt, zi, zm, m1.params, cfg, 0);
    EmbeddingSequence stack = fusion_stack(zt, zi, zm, m1.params, cfg);
    for (size_t i = 0; i < once.vectors.numel(); ++i)
        CHECK(once.vectors.d[i] == doctest::Approx(stack.vectors.d[i]).epsilon(1e-12));

    // a deeper stack with the same leading blocks diverges (depth matters)
    ModelConfig cfg2 = cfg;
    cfg2.fusion_blocks = 3;
    Model m3 = Model::init(cfg2, 15);
    for (const auto& p : m1.params)
        if (p.name.rfind("fusion.block0.", 0) == 0) m3.params.at(p.name).value = p.value;
    EmbeddingSequence deeper = fusion_stack(zt, zi, zm, m3.params, cfg2);
    double diff = 0.0;
    for (size_t i = 0; i < once.vectors.numel(); ++i)
        diff = std::max(diff, std::fabs(once.vectors.d[i] - deeper.vectors.d[i]));
    CHECK(diff > 1e-6);
    CHECK(deeper.vectors.rows == zt.vectors.rows);
    CHECK(deeper.vectors.cols == cfg.dim);
}

TEST_CASE("gradients flow from the fused CLS to all three input sequences") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 17);
    Rng rng(18);
    Tensor zt = Tensor::randn(3, cfg.dim, rng);
    Tensor zi = Tensor::randn(5, cfg.dim, rng);
    Tensor zm = Tensor::randn(4, cfg.dim, rng);
    Tensor probe = Tensor::randn(1, cfg.dim, rng);

    Graph g;
    BuildCtx ctx{g, m.params, cfg, true, nullptr};
    const int it = g.leaf(zt, true);
    const int ii = g.leaf(zi, true);
    const int im = g.leaf(zm, true);
    const int fused = fusion_stack_graph(ctx, it, ii, im, nullptr, nullptr, nullptr);
    const int cls = g.select_row(fused, 0);
    g.backward(g.matmul_nt(cls, g.constant(probe)));

    // no dead path: both kv sources and the text stream receive gradient
    for (int id : {it, ii, im}) {
        REQUIRE(g.has_grad(id));
        CHECK(g.grad(id).norm() > 1e-8);
    }
}

TEST_CASE("full stack gradients match finite differences") {
    const ModelConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 19);
    Rng rng(20);
    Tensor zt = Tensor::randn(2, cfg.dim, rng);
    Tensor zi = Tensor::randn(3, cfg.dim, rng);
    Tensor zm = Tensor::randn(3, cfg.dim, rng);
    Tensor probe = Tensor::randn(1, cfg.dim, rng);

    auto value = [&]() {
        Graph g;
        BuildCtx ctx{g, m.params, cfg, true, nullptr};
        const int fused = fusion_stack_graph(ctx, g.leaf(zt), g.leaf(zi), g.leaf(zm), nullptr,
                                             nullptr, nullptr);
        const int cls = g.select_row(fused, 0);
        return g.scalar(g.matmul_nt(cls, g.constant(probe)));
    };

    Graph g;
    std::vector<std::pair<size_t, int>> bound;
    BuildCtx ctx{g, m.params, cfg, true, &bound};
    const int fused =
        fusion_stack_graph(ctx, g.leaf(zt), g.leaf(zi), g.leaf(zm), nullptr, nullptr, nullptr);
    const int cls = g.select_row(fused, 0);
    g.backward(g.matmul_nt(cls, g.constant(probe)));

    Rng pick(21);
    int checked = 0;
    for (const auto& [idx, node] : bound) {
        if (!g.has_grad(node)) continue;
        if (pick.uniform() > 0.5) continue;
        Tensor& value_t = m.params[idx].value;
        const size_t e = pick.index(value_t.numel());
        CHECK(gradcheck::probe_element(value_t, e, value, g.grad(node).d[e]));
        if (++checked >= 40) break;
    }
    CHECK(checked >= 20);
}
