#include "ladle/alignment.hpp"

#include <cmath>
#include <cstring>

namespace ladle {

namespace {
constexpr double kMinNorm = 1e-12;
}

NegativeQueue::NegativeQueue(size_t capacity, size_t dim)
    : cap_(capacity), dim_(dim), store_(capacity, dim) {
    if (capacity == 0 || dim == 0) throw config_error("negative queue: empty geometry");
}

void NegativeQueue::push(const Tensor& batch) {
    if (batch.numel() == 0) return;
    if (batch.cols != dim_) throw input_error("negative queue: vector dimension mismatch");
    for (size_t r = 0; r < batch.rows; ++r) {
        double n2 = 0.0;
        for (size_t j = 0; j < dim_; ++j) n2 += batch.at(r, j) * batch.at(r, j);
        const double n = std::sqrt(n2);
        if (n < kMinNorm) throw numeric_error("negative queue: cannot normalize zero vector");
        double* dst = store_.ptr(cursor_);
        for (size_t j = 0; j < dim_; ++j) dst[j] = batch.at(r, j) / n;
        cursor_ = (cursor_ + 1) % cap_;
        if (size_ < cap_) ++size_;
    }
}

void NegativeQueue::prefill_random(Rng& rng) {
    Tensor batch = Tensor::randn(cap_, dim_, rng);
    push(batch);
}

Tensor NegativeQueue::snapshot() const {
    Tensor out(size_, dim_);
    for (size_t i = 0; i < size_; ++i) {
        const size_t idx = (cursor_ + cap_ - size_ + i) % cap_;
        std::memcpy(out.ptr(i), store_.ptr(idx), dim_ * sizeof(double));
    }
    return out;
}

uint64_t NegativeQueue::state_hash() const {
    Tensor s = snapshot();
    return hash_tensor(s);
}

double cosine_sim(const Tensor& a, const Tensor& b) {
    if (a.numel() != b.numel()) throw input_error("cosine: dimension mismatch");
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (size_t i = 0; i < a.numel(); ++i) {
        ab += a.d[i] * b.d[i];
        aa += a.d[i] * a.d[i];
        bb += b.d[i] * b.d[i];
    }
    if (aa < kMinNorm * kMinNorm || bb < kMinNorm * kMinNorm)
        throw numeric_error("cosine: zero vector");
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

int cosine_graph(Graph& g, int a, int b) {
    const int naa = g.matmul_nt(a, a);
    const int nbb = g.matmul_nt(b, b);
    if (g.scalar(naa) < kMinNorm * kMinNorm || g.scalar(nbb) < kMinNorm * kMinNorm)
        throw numeric_error("cosine: zero vector");
    const int inv_a = g.powc(naa, -0.5);
    const int inv_b = g.powc(nbb, -0.5);
    return g.mul_scalar(g.mul_scalar(g.matmul_nt(a, b), inv_a), inv_b);
}

int info_nce_graph(Graph& g, int z, const Tensor& z_pos, const Tensor& queue_snapshot,
                   double temperature) {
    if (temperature <= 0.0) throw config_error("info_nce: temperature must be positive");
    if (z_pos.numel() == 0) throw input_error("info_nce: empty positive");
    const Tensor& zq = g.val(z);
    if (zq.rows != 1 || z_pos.rows != 1 || zq.cols != z_pos.cols)
        throw input_error("info_nce: query/positive dimension mismatch");

    const double pn = z_pos.norm();
    if (pn < kMinNorm) throw numeric_error("info_nce: zero positive vector");
    Tensor pos_unit(1, z_pos.cols);
    for (size_t i = 0; i < z_pos.cols; ++i) pos_unit.d[i] = z_pos.d[i] / pn;

    const int zz = g.matmul_nt(z, z);
    if (g.scalar(zz) < kMinNorm * kMinNorm) throw numeric_error("info_nce: zero query vector");
    const int inv_norm = g.powc(zz, -0.5);
    const double inv_tau = 1.0 / temperature;

    const int s_pos =
        g.scale(g.mul_scalar(g.matmul_nt(z, g.constant(std::move(pos_unit))), inv_norm), inv_tau);
    int all = s_pos;
    if (queue_snapshot.rows > 0) {
        if (queue_snapshot.cols != zq.cols)
            throw input_error("info_nce: queue dimension mismatch");
        const int sims = g.scale(
            g.mul_scalar(g.matmul_nt(z, g.constant(queue_snapshot)), inv_norm), inv_tau);
        all = g.concat_cols({s_pos, sims});
    }
    return g.add_scaled(g.logsumexp_row(all), s_pos, -1.0);
}

int mac_loss_graph(Graph& g, int img_cls, int txt_cls, const Tensor& img_pos,
                   const Tensor& txt_pos, const Tensor& img_queue, const Tensor& txt_queue,
                   double temperature) {
    const int i2t = info_nce_graph(g, img_cls, txt_pos, txt_queue, temperature);
    const int t2i = info_nce_graph(g, txt_cls, img_pos, img_queue, temperature);
    const int i2i = info_nce_graph(g, img_cls, img_pos, img_queue, temperature);
    const int t2t = info_nce_graph(g, txt_cls, txt_pos, txt_queue, temperature);
    return g.scale(g.add(g.add(i2t, t2i), g.add(i2i, t2t)), 0.25);
}

int cos_align_loss_graph(Graph& g, int img_cls, int txt_cls, int multi_enc) {
    const int ci = cosine_graph(g, img_cls, multi_enc);
    const int ct = cosine_graph(g, txt_cls, multi_enc);
    return g.add_const(g.scale(g.add(ci, ct), -0.5), 1.0);
}

int align_loss_graph(Graph& g, int mac, int cos, double lambda_cos) {
    if (lambda_cos < 0.0) throw config_error("align_loss: lambda must be nonnegative");
    return g.add_scaled(mac, cos, lambda_cos);
}

double info_nce(const Tensor& z, const Tensor& z_pos, const NegativeQueue& q,
                double temperature) {
    Graph g;
    return g.scalar(info_nce_graph(g, g.leaf(z), z_pos, q.snapshot(), temperature));
}

double mac_loss(const Tensor& img_cls, const Tensor& txt_cls, const Tensor& img_pos,
                const Tensor& txt_pos, const NegativeQueue& iq, const NegativeQueue& tq,
                double temperature) {
    Graph g;
    return g.scalar(mac_loss_graph(g, g.leaf(img_cls), g.leaf(txt_cls), img_pos, txt_pos,
                                   iq.snapshot(), tq.snapshot(), temperature));
}

double cos_align_loss(const Tensor& img_cls, const Tensor& txt_cls, const Tensor& multi_enc) {
    Graph g;
    return g.scalar(cos_align_loss_graph(g, g.leaf(img_cls), g.leaf(txt_cls), g.leaf(multi_enc)));
}

double align_loss(double mac, double cos, double lambda_cos) {
    if (lambda_cos < 0.0) throw config_error("align_loss: lambda must be nonnegative");
    return mac + lambda_cos * cos;
}

}  // namespace ladle
