#include "support/reference_math.hpp"

#include <cassert>
#include <cmath>

namespace refm {

namespace {
const Tensor& get(const ParamMap& p, const std::string& name) {
    auto it = p.find(name);
    if (it == p.end()) throw std::runtime_error("reference_math: missing tensor " + name);
    return it->second;
}
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    assert(a.cols == b.rows);
    Tensor c(a.rows, b.cols);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < b.cols; ++j) {
            double s = 0.0;
            for (size_t l = 0; l < a.cols; ++l) s += a.at(i, l) * b.at(l, j);
            c.at(i, j) = s;
        }
    return c;
}

Tensor add(const Tensor& a, const Tensor& b) {
    assert(a.same_shape(b));
    Tensor c(a.rows, a.cols);
    for (size_t i = 0; i < a.numel(); ++i) c.d[i] = a.d[i] + b.d[i];
    return c;
}

Tensor add_bias(const Tensor& a, const Tensor& bias) {
    Tensor c(a.rows, a.cols);
    for (size_t i = 0; i < a.rows; ++i)
        for (size_t j = 0; j < a.cols; ++j) c.at(i, j) = a.at(i, j) + bias.at(0, j);
    return c;
}

Tensor layer_norm(const Tensor& x, const Tensor& g, const Tensor& b, double eps) {
    Tensor y(x.rows, x.cols);
    const double n = static_cast<double>(x.cols);
    for (size_t i = 0; i < x.rows; ++i) {
        double mu = 0.0;
        for (size_t j = 0; j < x.cols; ++j) mu += x.at(i, j);
        mu /= n;
        double var = 0.0;
        for (size_t j = 0; j < x.cols; ++j) var += (x.at(i, j) - mu) * (x.at(i, j) - mu);
        var /= n;
        const double rstd = 1.0 / std::sqrt(var + eps);
        for (size_t j = 0; j < x.cols; ++j)
            y.at(i, j) = (x.at(i, j) - mu) * rstd * g.at(0, j) + b.at(0, j);
    }
    return y;
}

Tensor gelu(const Tensor& x) {
    Tensor y(x.rows, x.cols);
    for (size_t i = 0; i < x.numel(); ++i)
        y.d[i] = 0.5 * x.d[i] * (1.0 + std::erf(x.d[i] / std::sqrt(2.0)));
    return y;
}

std::vector<double> softmax(const std::vector<double>& x) {
    double mx = x[0];
    for (double v : x) mx = std::max(mx, v);
    std::vector<double> y(x.size());
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) {
        y[i] = std::exp(x[i] - mx);
        s += y[i];
    }
    for (auto& v : y) v /= s;
    return y;
}

Tensor mha(const ParamMap& p, const std::string& prefix, const Tensor& xq, const Tensor& xkv,
           int heads, const std::vector<uint8_t>* key_mask) {
    const Tensor q = add_bias(matmul(xq, get(p, prefix + ".wq")), get(p, prefix + ".bq"));
    const Tensor kk = add_bias(matmul(xkv, get(p, prefix + ".wk")), get(p, prefix + ".bk"));
    const Tensor v = add_bias(matmul(xkv, get(p, prefix + ".wv")), get(p, prefix + ".bv"));
    const size_t d = q.cols;
    const size_t H = static_cast<size_t>(heads);
    const size_t dh = d / H;
    const double alpha = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor concat(q.rows, d);
    for (size_t h = 0; h < H; ++h) {
        for (size_t i = 0; i < q.rows; ++i) {
            std::vector<double> scores(kk.rows, -1e300);
            for (size_t j = 0; j < kk.rows; ++j) {
                if (key_mask && !(*key_mask)[j]) continue;
                double s = 0.0;
                for (size_t l = 0; l < dh; ++l) s += q.at(i, h * dh + l) * kk.at(j, h * dh + l);
                scores[j] = s * alpha;
            }
            std::vector<double> probs = softmax(scores);
            if (key_mask)
                for (size_t j = 0; j < kk.rows; ++j)
                    if (!(*key_mask)[j]) probs[j] = 0.0;
            double denom = 0.0;
            for (double pr : probs) denom += pr;
            for (auto& pr : probs) pr /= denom;
            for (size_t l = 0; l < dh; ++l) {
                double s = 0.0;
                for (size_t j = 0; j < kk.rows; ++j) s += probs[j] * v.at(j, h * dh + l);
                concat.at(i, h * dh + l) = s;
            }
        }
    }
    return add_bias(matmul(concat, get(p, prefix + ".wo")), get(p, prefix + ".bo"));
}

Tensor encoder_layer(const ParamMap& p, const std::string& prefix, const Tensor& x, int heads,
                     double eps, const std::vector<uint8_t>* key_mask) {
    const Tensor att = mha(p, prefix + ".attn", x, x, heads, key_mask);
    const Tensor h = layer_norm(add(x, att), get(p, prefix + ".ln1.g"), get(p, prefix + ".ln1.b"),
                                eps);
    Tensor m = add_bias(matmul(h, get(p, prefix + ".mlp.w1")), get(p, prefix + ".mlp.b1"));
    m = gelu(m);
    m = add_bias(matmul(m, get(p, prefix + ".mlp.w2")), get(p, prefix + ".mlp.b2"));
    return layer_norm(add(h, m), get(p, prefix + ".ln2.g"), get(p, prefix + ".ln2.b"), eps);
}

std::vector<Tensor> encoder_layers(const ParamMap& p, const std::string& prefix,
                                   const Tensor& embedded, int n_layers, int heads, double eps,
                                   const std::vector<uint8_t>* key_mask) {
    std::vector<Tensor> outs;
    Tensor x = embedded;
    for (int i = 0; i < n_layers; ++i) {
        x = encoder_layer(p, prefix + ".layer" + std::to_string(i), x, heads, eps, key_mask);
        outs.push_back(x);
    }
    return outs;
}

Tensor average_last(const std::vector<Tensor>& layers, int k) {
    assert(k >= 1 && k <= static_cast<int>(layers.size()));
    Tensor acc(layers[0].rows, layers[0].cols);
    for (size_t i = layers.size() - static_cast<size_t>(k); i < layers.size(); ++i)
        for (size_t j = 0; j < acc.numel(); ++j) acc.d[j] += layers[i].d[j];
    for (auto& v : acc.d) v /= static_cast<double>(k);
    return acc;
}

Tensor embed_text(const ParamMap& p, const std::string& prefix, const std::vector<size_t>& ids) {
    const Tensor& tok = get(p, prefix + ".tok_emb");
    const Tensor& pos = get(p, prefix + ".pos");
    Tensor e(ids.size(), tok.cols);
    for (size_t i = 0; i < ids.size(); ++i)
        for (size_t j = 0; j < tok.cols; ++j) e.at(i, j) = tok.at(ids[i], j) + pos.at(i, j);
    return e;
}

Tensor embed_image(const ParamMap& p, const std::string& prefix, const Tensor& patches) {
    const Tensor proj = add_bias(matmul(patches, get(p, prefix + ".patch.w")),
                                 get(p, prefix + ".patch.b"));
    const Tensor& cls = get(p, prefix + ".cls");
    const Tensor& pos = get(p, prefix + ".pos");
    Tensor e(proj.rows + 1, proj.cols);
    for (size_t j = 0; j < proj.cols; ++j) e.at(0, j) = cls.at(0, j) + pos.at(0, j);
    for (size_t i = 0; i < proj.rows; ++i)
        for (size_t j = 0; j < proj.cols; ++j) e.at(i + 1, j) = proj.at(i, j) + pos.at(i + 1, j);
    return e;
}

Tensor fusion_block(const ParamMap& p, const std::string& prefix, const Tensor& z_txt,
                    const Tensor& z_img, const Tensor& z_multi, int heads, double eps,
                    bool residual_from_input, const std::vector<uint8_t>* txt_mask,
                    const std::vector<uint8_t>* multi_mask, bool use_multi_branch) {
    const Tensor sa = mha(p, prefix + ".sa", z_txt, z_txt, heads, txt_mask);
    const Tensor z_t = layer_norm(add(z_txt, sa), get(p, prefix + ".ln_sa.g"),
                                  get(p, prefix + ".ln_sa.b"), eps);

    auto branch = [&](const std::string& bp, const Tensor& kv,
                      const std::vector<uint8_t>* kv_mask) {
        const Tensor ca = mha(p, bp + ".attn", z_t, kv, heads, kv_mask);
        const Tensor z1 =
            layer_norm(add(z_t, ca), get(p, bp + ".ln1.g"), get(p, bp + ".ln1.b"), eps);
        Tensor m = add_bias(matmul(z1, get(p, bp + ".mlp.w1")), get(p, bp + ".mlp.b1"));
        m = gelu(m);
        m = add_bias(matmul(m, get(p, bp + ".mlp.w2")), get(p, bp + ".mlp.b2"));
        return layer_norm(add(z1, m), get(p, bp + ".ln2.g"), get(p, bp + ".ln2.b"), eps);
    };

    const Tensor b_img = branch(prefix + ".ti", z_img, nullptr);
    Tensor sum = add(residual_from_input ? z_txt : z_t, b_img);
    if (use_multi_branch) {
        const Tensor b_multi = branch(prefix + ".tm", z_multi, multi_mask);
        sum = add(sum, b_multi);
    }
    return layer_norm(sum, get(p, prefix + ".ln_out.g"), get(p, prefix + ".ln_out.b"), eps);
}

Tensor mlp_head(const ParamMap& p, const std::string& prefix, const Tensor& x) {
    Tensor h = add_bias(matmul(x, get(p, prefix + ".w1")), get(p, prefix + ".b1"));
    h = gelu(h);
    return add_bias(matmul(h, get(p, prefix + ".w2")), get(p, prefix + ".b2"));
}

}  // namespace refm
