#pragma once

#include <deque>
#include <vector>

#include "ladle/tensor.hpp"

namespace ladle {

// Reverse-mode tape over Tensor. A forward pass appends nodes; backward()
// sweeps the tape once, pushing gradients only along paths that reach a
// tensor flagged needs_grad, so frozen subgraphs cost nothing on the way
// back. One Graph per thread; cleared and reused between samples.
class Graph {
public:
    enum class Op : uint8_t {
        Leaf,
        MatMul,         // A (m,k) * B (k,n)
        MatMulNT,       // A (m,k) * B (n,k)^T
        Add,            // A + B
        AddScaled,      // A + alpha * B
        AddConst,       // A + alpha
        Scale,          // alpha * A
        MulScalar,      // A * s, s a 1x1 node
        PowConst,       // A^alpha elementwise, A > 0
        AddRowVec,      // A (r,c) + v (1,c) broadcast
        GatherRows,     // rows of A selected by index list
        SelectRow,      // single row of A
        ConcatRows,
        ConcatCols,
        LayerNorm,      // rowwise, affine; alpha = eps
        Gelu,
        MhaCore,        // multi-head attention over projected Q,K,V
        LogSumExpRow,   // 1xn -> 1x1, max-shifted
        BceLogitsMean,  // mean binary cross-entropy vs stored targets
    };

    struct Node {
        Op op = Op::Leaf;
        const Tensor* ext = nullptr;  // external leaf storage
        Tensor val;                   // owned storage otherwise
        Tensor grad;
        bool needs_grad = false;
        int a = -1, b = -1, c = -1;
        double alpha = 0.0;
        int iarg = 0;
        std::vector<int> many;
        std::vector<size_t> ids;
        Tensor aux;                    // op scratch saved for backward
        std::vector<double> auxv;      // layer norm mean/rstd
        const std::vector<uint8_t>* key_mask = nullptr;
        bool stash_attn_grad = false;
        Tensor attn_grad;              // d(root)/d(attention probs), when stashed
    };

    int leaf(const Tensor& t, bool needs_grad = false);
    int constant(Tensor t);

    int matmul(int a, int b);
    int matmul_nt(int a, int b);
    int add(int a, int b);
    int add_scaled(int a, int b, double alpha);
    int add_const(int a, double c);
    int scale(int a, double s);
    int mul_scalar(int a, int s);
    int powc(int a, double p);
    int add_rowvec(int a, int v);
    int gather_rows(int table, std::vector<size_t> ids);
    int select_row(int a, size_t r);
    int concat_rows(const std::vector<int>& parts);
    int concat_cols(const std::vector<int>& parts);
    int layer_norm(int x, int gamma, int beta, double eps);
    int gelu(int a);
    // q: (Lq,d), k/v: (Lk,d). key_mask, when given, must outlive the graph.
    int mha(int q, int k, int v, int heads, const std::vector<uint8_t>* key_mask,
            bool stash_attn_grad = false);
    int logsumexp_row(int a);
    int bce_logits_mean(int logits, Tensor targets);

    // root must be 1x1
    void backward(int root);

    const Tensor& val(int id) const {
        const Node& n = nodes_[id];
        return n.ext ? *n.ext : n.val;
    }
    double scalar(int id) const { return val(id).d[0]; }
    bool has_grad(int id) const { return !nodes_[id].grad.empty(); }
    const Tensor& grad(int id) const { return nodes_[id].grad; }
    Node& node(int id) { return nodes_[id]; }

    // explain mode: gradients flow everywhere regardless of trainability
    void set_force_grad(bool f) { force_grad_ = f; }

    // graph-owned copy with a stable address for mha key masks
    const std::vector<uint8_t>* intern_mask(std::vector<uint8_t> m) {
        masks_.push_back(std::move(m));
        return &masks_.back();
    }

    void clear() {
        nodes_.clear();
        masks_.clear();
    }
    size_t size() const { return nodes_.size(); }

private:
    int push(Node n);
    Tensor& ensure_grad(int id);
    void backward_node(int id);

    std::vector<Node> nodes_;
    std::deque<std::vector<uint8_t>> masks_;
    bool force_grad_ = false;
};

}  // namespace ladle
