#include "presspose/layers.hpp"

#include <cmath>

#include "presspose/common.hpp"
#include "presspose/kernels.hpp"

namespace presspose {

namespace {
constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
    double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
    double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
    return cdf + x * pdf;
}

void softmax_rows(double* m, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        double* row = m + size_t(r) * cols;
        double mx = row[0];
        for (int c = 1; c < cols; ++c) mx = std::max(mx, row[c]);
        double sum = 0;
        for (int c = 0; c < cols; ++c) {
            row[c] = std::exp(row[c] - mx);
            sum += row[c];
        }
        double inv = 1.0 / sum;
        for (int c = 0; c < cols; ++c) row[c] *= inv;
    }
}

void fail_nonfinite(const std::string& where) {
    fail(ErrorKind::NonFinite, "non-finite activation in " + where);
}

void check_finite(const double* p, size_t n, const std::string& where) {
    for (size_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) fail_nonfinite(where);
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

void LinearLayer::init(ParamStore& ps, const std::string& name, int in_dim, int out_dim) {
    in = in_dim;
    out = out_dim;
    w_off = ps.add(name + ".w", size_t(in) * out, Init::TruncNormal);
    b_off = ps.add(name + ".b", size_t(out), Init::Zero);
}

void LinearLayer::forward(const ParamStore& ps, const double* x, int n, double* y) const {
    const double* w = ps.at(w_off);
    const double* b = ps.at(b_off);
    kern::gemm_nt(size_t(n), size_t(in), size_t(out), x, w, y, false);
    for (int i = 0; i < n; ++i) {
        double* row = y + size_t(i) * out;
        for (int o = 0; o < out; ++o) row[o] += b[o];
    }
}

void LinearLayer::backward(const ParamStore& ps, const double* x, int n, const double* gy,
                           GradBuffer& grads, double* gx) const {
    const double* w = ps.at(w_off);
    double* gw = grads.at(w_off);
    double* gb = grads.at(b_off);
    // dW[out][in] += gy^T[out][n] * x[n][in]
    kern::gemm_tn(size_t(out), size_t(n), size_t(in), gy, x, gw, true);
    for (int i = 0; i < n; ++i) {
        const double* row = gy + size_t(i) * out;
        for (int o = 0; o < out; ++o) gb[o] += row[o];
    }
    // dx[n][in] += gy[n][out] * W[out][in]
    if (gx) kern::gemm_nn(size_t(n), size_t(out), size_t(in), gy, w, gx, true);
}

// ---------------------------------------------------------------------------
// LayerNorm
// ---------------------------------------------------------------------------

void LayerNormLayer::init(ParamStore& ps, const std::string& name, int d) {
    dim = d;
    g_off = ps.add(name + ".g", size_t(d), Init::One);
    b_off = ps.add(name + ".b", size_t(d), Init::Zero);
}

void LayerNormLayer::forward(const ParamStore& ps, const double* x, int n, double* y,
                             Cache& c) const {
    const double* g = ps.at(g_off);
    const double* b = ps.at(b_off);
    c.mean.resize(n);
    c.invstd.resize(n);
    for (int i = 0; i < n; ++i) {
        const double* xr = x + size_t(i) * dim;
        double* yr = y + size_t(i) * dim;
        double mean = 0;
        for (int k = 0; k < dim; ++k) mean += xr[k];
        mean /= dim;
        double var = 0;
        for (int k = 0; k < dim; ++k) {
            double d0 = xr[k] - mean;
            var += d0 * d0;
        }
        var /= dim;
        double inv = 1.0 / std::sqrt(var + kEps);
        c.mean[i] = mean;
        c.invstd[i] = inv;
        for (int k = 0; k < dim; ++k) yr[k] = (xr[k] - mean) * inv * g[k] + b[k];
    }
}

void LayerNormLayer::backward(const ParamStore& ps, const double* x, int n, const Cache& c,
                              const double* gy, GradBuffer& grads, double* gx) const {
    const double* g = ps.at(g_off);
    double* gg = grads.at(g_off);
    double* gb = grads.at(b_off);
    for (int i = 0; i < n; ++i) {
        const double* xr = x + size_t(i) * dim;
        const double* gyr = gy + size_t(i) * dim;
        double* gxr = gx + size_t(i) * dim;
        double mean = c.mean[i], inv = c.invstd[i];

        // dxhat = gy*g; reduce the two row sums the closed form needs.
        double sum_dxhat = 0, sum_dxhat_xhat = 0;
        for (int k = 0; k < dim; ++k) {
            double xhat = (xr[k] - mean) * inv;
            double dxhat = gyr[k] * g[k];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
            gg[k] += gyr[k] * xhat;
            gb[k] += gyr[k];
        }
        double inv_dim = 1.0 / dim;
        for (int k = 0; k < dim; ++k) {
            double xhat = (xr[k] - mean) * inv;
            double dxhat = gyr[k] * g[k];
            gxr[k] += inv * (dxhat - inv_dim * (sum_dxhat + xhat * sum_dxhat_xhat));
        }
    }
}

// ---------------------------------------------------------------------------
// Multi-head self-attention
// ---------------------------------------------------------------------------

void AttentionLayer::init(ParamStore& ps, const std::string& name, int d, int num_heads) {
    dim = d;
    heads = num_heads;
    head_dim = d / num_heads;
    wq.init(ps, name + ".wq", d, d);
    wk.init(ps, name + ".wk", d, d);
    wv.init(ps, name + ".wv", d, d);
    wo.init(ps, name + ".wo", d, d);
}

void AttentionLayer::forward(const ParamStore& ps, const double* x, int n, double* y,
                             Cache& c) const {
    c.n = n;
    c.q.resize(size_t(n) * dim);
    c.k.resize(size_t(n) * dim);
    c.v.resize(size_t(n) * dim);
    c.attn.assign(size_t(heads) * n * n, 0.0);
    c.ctx.assign(size_t(n) * dim, 0.0);
    wq.forward(ps, x, n, c.q.data());
    wk.forward(ps, x, n, c.k.data());
    wv.forward(ps, x, n, c.v.data());

    const double scale = 1.0 / std::sqrt(double(head_dim));
    // Heads are column slices of q/k/v; strided copies keep the gemms dense.
    std::vector<double> qh(size_t(n) * head_dim), kh(qh.size()), vh(qh.size()),
        ch(qh.size());
    for (int h = 0; h < heads; ++h) {
        for (int i = 0; i < n; ++i)
            for (int d0 = 0; d0 < head_dim; ++d0) {
                qh[size_t(i) * head_dim + d0] = c.q[size_t(i) * dim + h * head_dim + d0] * scale;
                kh[size_t(i) * head_dim + d0] = c.k[size_t(i) * dim + h * head_dim + d0];
                vh[size_t(i) * head_dim + d0] = c.v[size_t(i) * dim + h * head_dim + d0];
            }
        double* a = c.attn.data() + size_t(h) * n * n;
        kern::gemm_nt(size_t(n), size_t(head_dim), size_t(n), qh.data(), kh.data(), a, false);
        softmax_rows(a, n, n);
        kern::gemm_nn(size_t(n), size_t(n), size_t(head_dim), a, vh.data(), ch.data(), false);
        for (int i = 0; i < n; ++i)
            for (int d0 = 0; d0 < head_dim; ++d0)
                c.ctx[size_t(i) * dim + h * head_dim + d0] = ch[size_t(i) * head_dim + d0];
    }
    wo.forward(ps, c.ctx.data(), n, y);
}

void AttentionLayer::backward(const ParamStore& ps, const double* x, int n, const Cache& c,
                              const double* gy, GradBuffer& grads, double* gx) const {
    const double scale = 1.0 / std::sqrt(double(head_dim));
    std::vector<double> g_ctx(size_t(n) * dim, 0.0);
    wo.backward(ps, c.ctx.data(), n, gy, grads, g_ctx.data());

    std::vector<double> gq(size_t(n) * dim, 0.0), gk(gq.size(), 0.0), gv(gq.size(), 0.0);
    std::vector<double> qh(size_t(n) * head_dim), kh(qh.size()), vh(qh.size()),
        gch(qh.size()), ga(size_t(n) * n), gs(size_t(n) * n), gqh(qh.size()),
        gkh(qh.size()), gvh(qh.size());

    for (int h = 0; h < heads; ++h) {
        const double* a = c.attn.data() + size_t(h) * n * n;
        for (int i = 0; i < n; ++i)
            for (int d0 = 0; d0 < head_dim; ++d0) {
                qh[size_t(i) * head_dim + d0] = c.q[size_t(i) * dim + h * head_dim + d0];
                kh[size_t(i) * head_dim + d0] = c.k[size_t(i) * dim + h * head_dim + d0];
                vh[size_t(i) * head_dim + d0] = c.v[size_t(i) * dim + h * head_dim + d0];
                gch[size_t(i) * head_dim + d0] = g_ctx[size_t(i) * dim + h * head_dim + d0];
            }
        // ctx_h = attn * v_h
        kern::gemm_nt(size_t(n), size_t(head_dim), size_t(n), gch.data(), vh.data(),
                      ga.data(), false);
        kern::gemm_tn(size_t(n), size_t(n), size_t(head_dim), a, gch.data(), gvh.data(),
                      false);
        // softmax backward, row-wise: gs = (ga - <ga, a>) * a
        for (int i = 0; i < n; ++i) {
            const double* ar = a + size_t(i) * n;
            const double* gar = ga.data() + size_t(i) * n;
            double* gsr = gs.data() + size_t(i) * n;
            double dot = kern::dot(size_t(n), gar, ar);
            for (int j = 0; j < n; ++j) gsr[j] = (gar[j] - dot) * ar[j];
        }
        // scores = scale * q_h k_h^T
        kern::gemm_nn(size_t(n), size_t(n), size_t(head_dim), gs.data(), kh.data(),
                      gqh.data(), false);
        kern::gemm_tn(size_t(n), size_t(n), size_t(head_dim), gs.data(), qh.data(),
                      gkh.data(), false);
        for (int i = 0; i < n; ++i)
            for (int d0 = 0; d0 < head_dim; ++d0) {
                gq[size_t(i) * dim + h * head_dim + d0] = gqh[size_t(i) * head_dim + d0] * scale;
                gk[size_t(i) * dim + h * head_dim + d0] = gkh[size_t(i) * head_dim + d0] * scale;
                gv[size_t(i) * dim + h * head_dim + d0] = gvh[size_t(i) * head_dim + d0];
            }
    }
    wq.backward(ps, x, n, gq.data(), grads, gx);
    wk.backward(ps, x, n, gk.data(), grads, gx);
    wv.backward(ps, x, n, gv.data(), grads, gx);
}

// ---------------------------------------------------------------------------
// Transformer block and stack
// ---------------------------------------------------------------------------

void TransformerBlock::init(ParamStore& ps, const std::string& name, int d, int num_heads,
                            int ratio) {
    dim = d;
    hidden = d * ratio;
    ln1.init(ps, name + ".ln1", d);
    attn.init(ps, name + ".attn", d, num_heads);
    ln2.init(ps, name + ".ln2", d);
    fc1.init(ps, name + ".fc1", d, hidden);
    fc2.init(ps, name + ".fc2", hidden, d);
}

void TransformerBlock::forward(const ParamStore& ps, const double* x, int n, double* y,
                               Cache& c) const {
    size_t nd = size_t(n) * dim, nh = size_t(n) * hidden;
    c.xn1.resize(nd);
    c.attn_out.resize(nd);
    c.x1.resize(nd);
    c.xn2.resize(nd);
    c.h_pre.resize(nh);
    c.h_act.resize(nh);
    c.ffn_out.resize(nd);

    ln1.forward(ps, x, n, c.xn1.data(), c.ln1c);
    attn.forward(ps, c.xn1.data(), n, c.attn_out.data(), c.attnc);
    for (size_t i = 0; i < nd; ++i) c.x1[i] = x[i] + c.attn_out[i];

    ln2.forward(ps, c.x1.data(), n, c.xn2.data(), c.ln2c);
    fc1.forward(ps, c.xn2.data(), n, c.h_pre.data());
    for (size_t i = 0; i < nh; ++i) c.h_act[i] = gelu(c.h_pre[i]);
    fc2.forward(ps, c.h_act.data(), n, c.ffn_out.data());
    for (size_t i = 0; i < nd; ++i) y[i] = c.x1[i] + c.ffn_out[i];
}

void TransformerBlock::backward(const ParamStore& ps, const double* x, int n,
                                const Cache& c, const double* gy, GradBuffer& grads,
                                double* gx) const {
    size_t nd = size_t(n) * dim, nh = size_t(n) * hidden;
    // FFN path: gy -> fc2 -> gelu -> fc1 -> ln2, plus the residual into x1.
    std::vector<double> g_hact(nh, 0.0), g_hpre(nh), g_xn2(nd, 0.0), g_x1(nd);
    fc2.backward(ps, c.h_act.data(), n, gy, grads, g_hact.data());
    for (size_t i = 0; i < nh; ++i) g_hpre[i] = g_hact[i] * gelu_grad(c.h_pre[i]);
    fc1.backward(ps, c.xn2.data(), n, g_hpre.data(), grads, g_xn2.data());
    for (size_t i = 0; i < nd; ++i) g_x1[i] = gy[i];
    ln2.backward(ps, c.x1.data(), n, c.ln2c, g_xn2.data(), grads, g_x1.data());

    // Attention path: g_x1 -> attn -> ln1, plus the residual into x.
    std::vector<double> g_xn1(nd, 0.0);
    attn.backward(ps, c.xn1.data(), n, c.attnc, g_x1.data(), grads, g_xn1.data());
    for (size_t i = 0; i < nd; ++i) gx[i] += g_x1[i];
    ln1.backward(ps, x, n, c.ln1c, g_xn1.data(), grads, gx);
}

void TransformerStack::init(ParamStore& ps, const std::string& name, int d, int depth,
                            int num_heads, int ratio) {
    dim = d;
    blocks.resize(depth);
    for (int b = 0; b < depth; ++b)
        blocks[b].init(ps, name + ".b" + std::to_string(b), d, num_heads, ratio);
}

void TransformerStack::forward(const ParamStore& ps, const double* x, int n, double* y,
                               Cache& c) const {
    size_t nd = size_t(n) * dim;
    int depth = int(blocks.size());
    c.states.resize(depth + 1);
    c.block_caches.resize(depth);
    c.states[0].assign(x, x + nd);
    for (int b = 0; b < depth; ++b) {
        c.states[b + 1].resize(nd);
        blocks[b].forward(ps, c.states[b].data(), n, c.states[b + 1].data(),
                          c.block_caches[b]);
        check_finite(c.states[b + 1].data(), nd, "block " + std::to_string(b));
    }
    std::copy(c.states[depth].begin(), c.states[depth].end(), y);
}

void TransformerStack::backward(const ParamStore& ps, int n, const Cache& c,
                                const double* gy, GradBuffer& grads, double* gx) const {
    size_t nd = size_t(n) * dim;
    int depth = int(blocks.size());
    std::vector<double> g_cur(gy, gy + nd), g_prev(nd);
    for (int b = depth - 1; b >= 0; --b) {
        std::fill(g_prev.begin(), g_prev.end(), 0.0);
        blocks[b].backward(ps, c.states[b].data(), n, c.block_caches[b], g_cur.data(),
                           grads, g_prev.data());
        std::swap(g_cur, g_prev);
    }
    for (size_t i = 0; i < nd; ++i) gx[i] += g_cur[i];
}

std::vector<double> TransformerStack::attention_weights(const ParamStore& ps,
                                                        const double* x, int n,
                                                        int block_index) const {
    if (block_index < 0 || block_index >= int(blocks.size()))
        fail(ErrorKind::BadArgument,
             "attention_weights: block index " + std::to_string(block_index) +
                 " out of range (depth " + std::to_string(blocks.size()) + ")");
    Cache c;
    std::vector<double> y(size_t(n) * dim);
    // Run only as far as needed.
    size_t nd = size_t(n) * dim;
    c.states.resize(block_index + 2);
    c.block_caches.resize(block_index + 1);
    c.states[0].assign(x, x + nd);
    for (int b = 0; b <= block_index; ++b) {
        c.states[b + 1].resize(nd);
        blocks[b].forward(ps, c.states[b].data(), n, c.states[b + 1].data(),
                          c.block_caches[b]);
    }
    return c.block_caches[block_index].attnc.attn;
}

}  // namespace presspose
