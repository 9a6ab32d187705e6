#pragma once

#include "ladle/graph.hpp"
#include "ladle/tensor.hpp"

namespace ladle {

struct ContrastiveConfig {
    double temperature = 0.07;
    double lambda_cos = 0.3;
    size_t queue_capacity = 256;
    bool prefill_random = true;  // else the queue grows from empty
};

// Fixed-capacity FIFO of unit-norm vectors. push() normalizes; the oldest
// entries are evicted once capacity is reached.
class NegativeQueue {
public:
    NegativeQueue(size_t capacity, size_t dim);

    size_t size() const { return size_; }
    size_t capacity() const { return cap_; }
    size_t dim() const { return dim_; }

    void push(const Tensor& batch);  // rows appended in order
    void prefill_random(Rng& rng);

    // entries oldest to newest, size() x dim
    Tensor snapshot() const;
    uint64_t state_hash() const;

private:
    size_t cap_, dim_, size_ = 0, cursor_ = 0;
    Tensor store_;
};

// cosine similarity; zero vectors are a numeric error, never silently 0
double cosine_sim(const Tensor& a, const Tensor& b);

// Graph builders. Queue snapshots and positives enter as constants: no
// gradient flows into stored keys or momentum targets.
int cosine_graph(Graph& g, int a, int b);
int info_nce_graph(Graph& g, int z, const Tensor& z_pos, const Tensor& queue_snapshot,
                   double temperature);
int mac_loss_graph(Graph& g, int img_cls, int txt_cls, const Tensor& img_pos,
                   const Tensor& txt_pos, const Tensor& img_queue, const Tensor& txt_queue,
                   double temperature);
int cos_align_loss_graph(Graph& g, int img_cls, int txt_cls, int multi_enc);
int align_loss_graph(Graph& g, int mac, int cos, double lambda_cos);

// Value-level wrappers.
double info_nce(const Tensor& z, const Tensor& z_pos, const NegativeQueue& q, double temperature);
double mac_loss(const Tensor& img_cls, const Tensor& txt_cls, const Tensor& img_pos,
                const Tensor& txt_pos, const NegativeQueue& iq, const NegativeQueue& tq,
                double temperature);
double cos_align_loss(const Tensor& img_cls, const Tensor& txt_cls, const Tensor& multi_enc);
double align_loss(double mac, double cos, double lambda_cos);

}  // namespace ladle
