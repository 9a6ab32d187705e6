#include "ladle/graph.hpp"

#include <cmath>
#include <cstring>

#include "ladle/kernels.hpp"

namespace ladle {

namespace k = kernels;

namespace {

void check(bool ok, const char* msg) {
    if (!ok) throw input_error(msg);
}

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

// numerically stable single-logit BCE
double bce_one(double x, double y) {
    return std::max(x, 0.0) - x * y + std::log1p(std::exp(-std::fabs(x)));
}

}  // namespace

int Graph::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Graph::ensure_grad(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) {
        const Tensor& v = n.ext ? *n.ext : n.val;
        n.grad = Tensor::zeros(v.rows, v.cols);
    }
    return n.grad;
}

int Graph::leaf(const Tensor& t, bool needs_grad) {
    Node n;
    n.ext = &t;
    n.needs_grad = needs_grad || force_grad_;
    return push(std::move(n));
}

int Graph::constant(Tensor t) {
    Node n;
    n.val = std::move(t);
    n.needs_grad = force_grad_;
    return push(std::move(n));
}

int Graph::matmul(int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    check(A.cols == B.rows, "matmul: inner dimension mismatch");
    Node n;
    n.op = Op::MatMul;
    n.a = a;
    n.b = b;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.val = Tensor(A.rows, B.cols);
    k::gemm_nn(A.rows, B.cols, A.cols, A.ptr(), A.cols, B.ptr(), B.cols, 0.0, n.val.ptr(), B.cols);
    return push(std::move(n));
}

int Graph::matmul_nt(int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    check(A.cols == B.cols, "matmul_nt: inner dimension mismatch");
    Node n;
    n.op = Op::MatMulNT;
    n.a = a;
    n.b = b;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.val = Tensor(A.rows, B.rows);
    k::gemm_nt(A.rows, B.rows, A.cols, A.ptr(), A.cols, B.ptr(), B.cols, 0.0, n.val.ptr(), B.rows);
    return push(std::move(n));
}

int Graph::add(int a, int b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    check(A.same_shape(B), "add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a;
    n.b = b;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.val = Tensor(A.rows, A.cols);
    k::add(A.numel(), A.ptr(), B.ptr(), n.val.ptr());
    return push(std::move(n));
}

int Graph::add_scaled(int a, int b, double alpha) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    check(A.same_shape(B), "add_scaled: shape mismatch");
    Node n;
    n.op = Op::AddScaled;
    n.a = a;
    n.b = b;
    n.alpha = alpha;
    n.needs_grad = nodes_[a].needs_grad || nodes_[b].needs_grad;
    n.val = A;
    k::axpy(A.numel(), alpha, B.ptr(), n.val.ptr());
    return push(std::move(n));
}

int Graph::add_const(int a, double c) {
    const Tensor& A = val(a);
    Node n;
    n.op = Op::AddConst;
    n.a = a;
    n.alpha = c;
    n.needs_grad = nodes_[a].needs_grad;
    n.val = Tensor(A.rows, A.cols);
    for (size_t i = 0; i < A.numel(); ++i) n.val.d[i] = A.d[i] + c;
    return push(std::move(n));
}

int Graph::scale(int a, double s) {
    const Tensor& A = val(a);
    Node n;
    n.op = Op::Scale;
    n.a = a;
    n.alpha = s;
    n.needs_grad = nodes_[a].needs_grad;
    n.val = Tensor(A.rows, A.cols);
    k::scale(A.numel(), s, A.ptr(), n.val.ptr());
    return push(std::move(n));
}

int Graph::mul_scalar(int a, int s) {
    const Tensor& A = val(a);
    const Tensor& S = val(s);
    check(S.numel() == 1, "mul_scalar: scalar operand must be 1x1");
    Node n;
    n.op = Op::MulScalar;
    n.a = a;
    n.b = s;
    n.needs_grad = nodes_[a].needs_grad || nodes_[s].needs_grad;
    n.val = Tensor(A.rows, A.cols);
    k::scale(A.numel(), S.d[0], A.ptr(), n.val.ptr());
    return push(std::move(n));
}

int Graph::powc(int a, double p) {
    const Tensor& A = val(a);
    Node n;
    n.op = Op::PowConst;
    n.a = a;
    n.alpha = p;
    n.needs_grad = nodes_[a].needs_grad;
    n.val = Tensor(A.rows, A.cols);
    for (size_t i = 0; i < A.numel(); ++i) {
        if (A.d[i] <= 0.0) throw numeric_error("powc: non-positive base");
        n.val.d[i] = std::pow(A.d[i], p);
    }
    return push(std::move(n));
}

int Graph::add_rowvec(int a, int v) {
    const Tensor& A = val(a);
    const Tensor& V = val(v);
    check(V.rows == 1 && V.cols == A.cols, "add_rowvec: vector shape mismatch");
    Node n;
    n.op = Op::AddRowVec;
    n.a = a;
    n.b = v;
    n.needs_grad = nodes_[a].needs_grad || nodes_[v].needs_grad;
    n.val = Tensor(A.rows, A.cols);
    k::add_rowvec(A.rows, A.cols, A.ptr(), V.ptr(), n.val.ptr());
    return push(std::move(n));
}

int Graph::gather_rows(int table, std::vector<size_t> ids) {
    const Tensor& T = val(table);
    Node n;
    n.op = Op::GatherRows;
    n.a = table;
    n.needs_grad = nodes_[table].needs_grad;
    n.val = Tensor(ids.size(), T.cols);
    for (size_t i = 0; i < ids.size(); ++i) {
        check(ids[i] < T.rows, "gather_rows: index out of range");
        std::memcpy(n.val.ptr(i), T.ptr(ids[i]), T.cols * sizeof(double));
    }
    n.ids = std::move(ids);
    return push(std::move(n));
}

int Graph::select_row(int a, size_t r) {
    const Tensor& A = val(a);
    check(r < A.rows, "select_row: row out of range");
    Node n;
    n.op = Op::SelectRow;
    n.a = a;
    n.iarg = static_cast<int>(r);
    n.needs_grad = nodes_[a].needs_grad;
    n.val = Tensor(1, A.cols);
    std::memcpy(n.val.ptr(), A.ptr(r), A.cols * sizeof(double));
    return push(std::move(n));
}

int Graph::concat_rows(const std::vector<int>& parts) {
    check(!parts.empty(), "concat_rows: empty");
    size_t rows = 0;
    size_t cols = val(parts[0]).cols;
    bool ng = false;
    for (int p : parts) {
        check(val(p).cols == cols, "concat_rows: column mismatch");
        rows += val(p).rows;
        ng = ng || nodes_[p].needs_grad;
    }
    Node n;
    n.op = Op::ConcatRows;
    n.many = parts;
    n.needs_grad = ng;
    n.val = Tensor(rows, cols);
    size_t r = 0;
    for (int p : parts) {
        const Tensor& P = val(p);
        std::memcpy(n.val.ptr(r), P.ptr(), P.numel() * sizeof(double));
        r += P.rows;
    }
    return push(std::move(n));
}

int Graph::concat_cols(const std::vector<int>& parts) {
    check(!parts.empty(), "concat_cols: empty");
    size_t rows = val(parts[0]).rows;
    size_t cols = 0;
    bool ng = false;
    for (int p : parts) {
        check(val(p).rows == rows, "concat_cols: row mismatch");
        cols += val(p).cols;
        ng = ng || nodes_[p].needs_grad;
    }
    Node n;
    n.op = Op::ConcatCols;
    n.many = parts;
    n.needs_grad = ng;
    n.val = Tensor(rows, cols);
    size_t off = 0;
    for (int p : parts) {
        const Tensor& P = val(p);
        for (size_t i = 0; i < rows; ++i)
            std::memcpy(n.val.ptr(i) + off, P.ptr(i), P.cols * sizeof(double));
        off += P.cols;
    }
    return push(std::move(n));
}

int Graph::layer_norm(int x, int gamma, int beta, double eps) {
    const Tensor& X = val(x);
    const Tensor& G = val(gamma);
    const Tensor& B = val(beta);
    check(G.rows == 1 && G.cols == X.cols && B.rows == 1 && B.cols == X.cols,
          "layer_norm: affine shape mismatch");
    Node n;
    n.op = Op::LayerNorm;
    n.a = x;
    n.b = gamma;
    n.c = beta;
    n.alpha = eps;
    n.needs_grad = nodes_[x].needs_grad || nodes_[gamma].needs_grad || nodes_[beta].needs_grad;
    n.val = Tensor(X.rows, X.cols);
    n.auxv.resize(2 * X.rows);
    k::layer_norm(X.rows, X.cols, X.ptr(), G.ptr(), B.ptr(), eps, n.val.ptr(), n.auxv.data(),
                  n.auxv.data() + X.rows);
    return push(std::move(n));
}

int Graph::gelu(int a) {
    const Tensor& A = val(a);
    Node n;
    n.op = Op::Gelu;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    n.val = Tensor(A.rows, A.cols);
    k::gelu(A.numel(), A.ptr(), n.val.ptr());
    return push(std::move(n));
}

int Graph::mha(int q, int kk, int v, int heads, const std::vector<uint8_t>* key_mask,
               bool stash_attn_grad) {
    const Tensor& Q = val(q);
    const Tensor& K = val(kk);
    const Tensor& V = val(v);
    check(Q.cols == K.cols && K.rows == V.rows && K.cols == V.cols,
          "mha: query/key/value dimension mismatch");
    check(heads > 0 && Q.cols % static_cast<size_t>(heads) == 0, "mha: heads must divide dim");
    if (key_mask) check(key_mask->size() == K.rows, "mha: mask length mismatch");
    const size_t Lq = Q.rows, Lk = K.rows, d = Q.cols;
    const size_t H = static_cast<size_t>(heads), dh = d / H;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Node n;
    n.op = Op::MhaCore;
    n.a = q;
    n.b = kk;
    n.c = v;
    n.iarg = heads;
    n.alpha = scale;
    n.key_mask = key_mask;
    n.stash_attn_grad = stash_attn_grad;
    n.needs_grad =
        nodes_[q].needs_grad || nodes_[kk].needs_grad || nodes_[v].needs_grad || force_grad_;
    n.val = Tensor(Lq, d);
    n.aux = Tensor(H * Lq, Lk);  // attention probs, heads stacked along rows
    const uint8_t* m = key_mask ? key_mask->data() : nullptr;
    for (size_t h = 0; h < H; ++h) {
        double* Ah = n.aux.ptr(h * Lq);
        k::gemm_nt(Lq, Lk, dh, Q.ptr() + h * dh, d, K.ptr() + h * dh, d, 0.0, Ah, Lk);
        k::scale(Lq * Lk, scale, Ah, Ah);
        k::softmax_rows(Lq, Lk, Ah, Lk, m, Ah, Lk);
        k::gemm_nn(Lq, dh, Lk, Ah, Lk, V.ptr() + h * dh, d, 0.0, n.val.ptr() + h * dh, d);
    }
    return push(std::move(n));
}

int Graph::logsumexp_row(int a) {
    const Tensor& A = val(a);
    check(A.rows == 1 && A.cols >= 1, "logsumexp_row: expects a 1xn row");
    Node n;
    n.op = Op::LogSumExpRow;
    n.a = a;
    n.needs_grad = nodes_[a].needs_grad;
    double mx = A.d[0];
    for (double x : A.d) mx = std::max(mx, x);
    double sum = 0.0;
    n.aux = Tensor(1, A.cols);
    for (size_t i = 0; i < A.cols; ++i) {
        n.aux.d[i] = std::exp(A.d[i] - mx);
        sum += n.aux.d[i];
    }
    const double inv = 1.0 / sum;
    for (size_t i = 0; i < A.cols; ++i) n.aux.d[i] *= inv;  // softmax, kept for backward
    n.val = Tensor(1, 1);
    n.val.d[0] = mx + std::log(sum);
    return push(std::move(n));
}

int Graph::bce_logits_mean(int logits, Tensor targets) {
    const Tensor& X = val(logits);
    check(X.same_shape(targets), "bce_logits_mean: target shape mismatch");
    Node n;
    n.op = Op::BceLogitsMean;
    n.a = logits;
    n.needs_grad = nodes_[logits].needs_grad;
    double s = 0.0;
    for (size_t i = 0; i < X.numel(); ++i) s += bce_one(X.d[i], targets.d[i]);
    n.val = Tensor(1, 1);
    n.val.d[0] = s / static_cast<double>(X.numel());
    n.aux = std::move(targets);
    return push(std::move(n));
}

void Graph::backward(int root) {
    check(root >= 0 && root < static_cast<int>(nodes_.size()), "backward: bad root");
    check(val(root).numel() == 1, "backward: root must be scalar");
    if (!nodes_[root].needs_grad) return;
    ensure_grad(root).d[0] = 1.0;
    for (int id = root; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty() || n.op == Op::Leaf) continue;
        backward_node(id);
    }
}

void Graph::backward_node(int id) {
    Node& n = nodes_[id];
    const Tensor& dY = n.grad;
    auto wants = [&](int p) { return p >= 0 && nodes_[p].needs_grad; };

    switch (n.op) {
        case Op::Leaf:
            break;
        case Op::MatMul: {
            const Tensor& A = val(n.a);
            const Tensor& B = val(n.b);
            if (wants(n.a)) {
                Tensor& dA = ensure_grad(n.a);
                k::gemm_nt(A.rows, A.cols, B.cols, dY.ptr(), B.cols, B.ptr(), B.cols, 1.0,
                           dA.ptr(), A.cols);
            }
            if (wants(n.b)) {
                Tensor& dB = ensure_grad(n.b);
                k::gemm_tn(B.rows, B.cols, A.rows, A.ptr(), A.cols, dY.ptr(), B.cols, 1.0,
                           dB.ptr(), B.cols);
            }
            break;
        }
        case Op::MatMulNT: {
            const Tensor& A = val(n.a);
            const Tensor& B = val(n.b);
            if (wants(n.a)) {
                Tensor& dA = ensure_grad(n.a);
                k::gemm_nn(A.rows, A.cols, B.rows, dY.ptr(), B.rows, B.ptr(), B.cols, 1.0,
                           dA.ptr(), A.cols);
            }
            if (wants(n.b)) {
                Tensor& dB = ensure_grad(n.b);
                k::gemm_tn(B.rows, B.cols, A.rows, dY.ptr(), B.rows, A.ptr(), A.cols, 1.0,
                           dB.ptr(), B.cols);
            }
            break;
        }
        case Op::Add: {
            if (wants(n.a)) k::axpy(dY.numel(), 1.0, dY.ptr(), ensure_grad(n.a).ptr());
            if (wants(n.b)) k::axpy(dY.numel(), 1.0, dY.ptr(), ensure_grad(n.b).ptr());
            break;
        }
        case Op::AddScaled: {
            if (wants(n.a)) k::axpy(dY.numel(), 1.0, dY.ptr(), ensure_grad(n.a).ptr());
            if (wants(n.b)) k::axpy(dY.numel(), n.alpha, dY.ptr(), ensure_grad(n.b).ptr());
            break;
        }
        case Op::AddConst: {
            if (wants(n.a)) k::axpy(dY.numel(), 1.0, dY.ptr(), ensure_grad(n.a).ptr());
            break;
        }
        case Op::Scale: {
            if (wants(n.a)) k::axpy(dY.numel(), n.alpha, dY.ptr(), ensure_grad(n.a).ptr());
            break;
        }
        case Op::MulScalar: {
            const Tensor& A = val(n.a);
            const double s = val(n.b).d[0];
            if (wants(n.a)) k::axpy(dY.numel(), s, dY.ptr(), ensure_grad(n.a).ptr());
            if (wants(n.b)) {
                double acc = 0.0;
                for (size_t i = 0; i < dY.numel(); ++i) acc += dY.d[i] * A.d[i];
                ensure_grad(n.b).d[0] += acc;
            }
            break;
        }
        case Op::PowConst: {
            if (wants(n.a)) {
                const Tensor& A = val(n.a);
                Tensor& dA = ensure_grad(n.a);
                for (size_t i = 0; i < A.numel(); ++i)
                    dA.d[i] += dY.d[i] * n.alpha * std::pow(A.d[i], n.alpha - 1.0);
            }
            break;
        }
        case Op::AddRowVec: {
            if (wants(n.a)) k::axpy(dY.numel(), 1.0, dY.ptr(), ensure_grad(n.a).ptr());
            if (wants(n.b))
                k::colsum_acc(dY.rows, dY.cols, dY.ptr(), ensure_grad(n.b).ptr());
            break;
        }
        case Op::GatherRows: {
            if (wants(n.a)) {
                Tensor& dT = ensure_grad(n.a);
                for (size_t i = 0; i < n.ids.size(); ++i)
                    k::serial::axpy(dY.cols, 1.0, dY.ptr(i), dT.ptr(n.ids[i]));
            }
            break;
        }
        case Op::SelectRow: {
            if (wants(n.a)) {
                Tensor& dA = ensure_grad(n.a);
                k::serial::axpy(dY.cols, 1.0, dY.ptr(), dA.ptr(static_cast<size_t>(n.iarg)));
            }
            break;
        }
        case Op::ConcatRows: {
            size_t r = 0;
            for (int p : n.many) {
                const Tensor& P = val(p);
                if (wants(p)) k::axpy(P.numel(), 1.0, dY.ptr(r), ensure_grad(p).ptr());
                r += P.rows;
            }
            break;
        }
        case Op::ConcatCols: {
            size_t off = 0;
            for (int p : n.many) {
                const Tensor& P = val(p);
                if (wants(p)) {
                    Tensor& dP = ensure_grad(p);
                    for (size_t i = 0; i < P.rows; ++i)
                        k::serial::axpy(P.cols, 1.0, dY.ptr(i) + off, dP.ptr(i));
                }
                off += P.cols;
            }
            break;
        }
        case Op::LayerNorm: {
            const Tensor& X = val(n.a);
            const Tensor& G = val(n.b);
            const double* mean = n.auxv.data();
            const double* rstd = n.auxv.data() + X.rows;
            // dgamma/dbeta go through scratch so a frozen affine costs nothing
            if (wants(n.a) || wants(n.b) || wants(n.c)) {
                Tensor dX(X.rows, X.cols), dG(1, X.cols), dB(1, X.cols);
                k::layer_norm_bwd(X.rows, X.cols, X.ptr(), G.ptr(), mean, rstd, dY.ptr(),
                                  dX.ptr(), dG.ptr(), dB.ptr());
                if (wants(n.a)) k::axpy(dX.numel(), 1.0, dX.ptr(), ensure_grad(n.a).ptr());
                if (wants(n.b)) k::axpy(dG.numel(), 1.0, dG.ptr(), ensure_grad(n.b).ptr());
                if (wants(n.c)) k::axpy(dB.numel(), 1.0, dB.ptr(), ensure_grad(n.c).ptr());
            }
            break;
        }
        case Op::Gelu: {
            if (wants(n.a)) {
                const Tensor& A = val(n.a);
                k::gelu_bwd(A.numel(), A.ptr(), dY.ptr(), ensure_grad(n.a).ptr());
            }
            break;
        }
        case Op::MhaCore: {
            const Tensor& Q = val(n.a);
            const Tensor& K = val(n.b);
            const Tensor& V = val(n.c);
            const size_t Lq = Q.rows, Lk = K.rows, d = Q.cols;
            const size_t H = static_cast<size_t>(n.iarg), dh = d / H;
            const bool wq = wants(n.a), wk = wants(n.b), wv = wants(n.c);
            if (!(wq || wk || wv) && !n.stash_attn_grad) break;
            Tensor* dQ = wq ? &ensure_grad(n.a) : nullptr;
            Tensor* dK = wk ? &ensure_grad(n.b) : nullptr;
            Tensor* dV = wv ? &ensure_grad(n.c) : nullptr;
            if (n.stash_attn_grad && n.attn_grad.empty()) n.attn_grad = Tensor(H * Lq, Lk);
            Tensor dA(Lq, Lk), dS(Lq, Lk);
            for (size_t h = 0; h < H; ++h) {
                const double* Ah = n.aux.ptr(h * Lq);
                k::gemm_nt(Lq, Lk, dh, dY.ptr() + h * dh, d, V.ptr() + h * dh, d, 0.0, dA.ptr(),
                           Lk);
                if (n.stash_attn_grad)
                    std::memcpy(n.attn_grad.ptr(h * Lq), dA.ptr(), Lq * Lk * sizeof(double));
                if (dV)
                    k::gemm_tn(Lk, dh, Lq, Ah, Lk, dY.ptr() + h * dh, d, 1.0, dV->ptr() + h * dh,
                               d);
                if (dQ || dK) {
                    dS.fill(0.0);
                    k::softmax_rows_bwd(Lq, Lk, Ah, Lk, dA.ptr(), Lk, dS.ptr(), Lk);
                    k::scale(Lq * Lk, n.alpha, dS.ptr(), dS.ptr());
                    if (dQ)
                        k::gemm_nn(Lq, dh, Lk, dS.ptr(), Lk, K.ptr() + h * dh, d, 1.0,
                                   dQ->ptr() + h * dh, d);
                    if (dK)
                        k::gemm_tn(Lk, dh, Lq, dS.ptr(), Lk, Q.ptr() + h * dh, d, 1.0,
                                   dK->ptr() + h * dh, d);
                }
            }
            break;
        }
        case Op::LogSumExpRow: {
            if (wants(n.a)) {
                Tensor& dA = ensure_grad(n.a);
                const double g = dY.d[0];
                for (size_t i = 0; i < dA.numel(); ++i) dA.d[i] += g * n.aux.d[i];
            }
            break;
        }
        case Op::BceLogitsMean: {
            if (wants(n.a)) {
                const Tensor& X = val(n.a);
                Tensor& dA = ensure_grad(n.a);
                const double g = dY.d[0] / static_cast<double>(X.numel());
                for (size_t i = 0; i < X.numel(); ++i)
                    dA.d[i] += g * (sigmoid(X.d[i]) - n.aux.d[i]);
            }
            break;
        }
    }
}

}  // namespace ladle
