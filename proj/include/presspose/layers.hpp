#pragma once

#include <string>
#include <vector>

#include "presspose/params.hpp"

// Dense layers with hand-written backward passes. Every layer holds only
// offsets into a ParamStore plus its dimensions; activations needed by the
// backward pass live in per-call cache structs, so forward is pure and one
// layer object serves any number of concurrent batch items.

namespace presspose {

// Exact GELU (erf form) and its derivative.
double gelu(double x);
double gelu_grad(double x);

// In-place row softmax with max subtraction.
void softmax_rows(double* m, int rows, int cols);

[[noreturn]] void fail_nonfinite(const std::string& where);
void check_finite(const double* p, size_t n, const std::string& where);

// y = x W^T + b with W stored [out][in] row-major.
struct LinearLayer {
    size_t w_off = 0, b_off = 0;
    int in = 0, out = 0;

    void init(ParamStore& ps, const std::string& name, int in_dim, int out_dim);
    void forward(const ParamStore& ps, const double* x, int n, double* y) const;
    // Accumulates into grads; gx (may be null) is accumulated into as well.
    void backward(const ParamStore& ps, const double* x, int n, const double* gy,
                  GradBuffer& grads, double* gx) const;
};

// LayerNorm over the last dimension, eps 1e-6.
struct LayerNormLayer {
    static constexpr double kEps = 1e-6;
    size_t g_off = 0, b_off = 0;
    int dim = 0;

    struct Cache {
        std::vector<double> mean, invstd;
    };

    void init(ParamStore& ps, const std::string& name, int d);
    void forward(const ParamStore& ps, const double* x, int n, double* y, Cache& c) const;
    void backward(const ParamStore& ps, const double* x, int n, const Cache& c,
                  const double* gy, GradBuffer& grads, double* gx) const;
};

// Multi-head self-attention over n tokens of width dim.
struct AttentionLayer {
    LinearLayer wq, wk, wv, wo;
    int dim = 0, heads = 0, head_dim = 0;

    struct Cache {
        int n = 0;
        std::vector<double> q, k, v;    // [n][dim]
        std::vector<double> attn;       // [heads][n][n], post-softmax
        std::vector<double> ctx;        // [n][dim], pre-output-projection
    };

    void init(ParamStore& ps, const std::string& name, int d, int num_heads);
    void forward(const ParamStore& ps, const double* x, int n, double* y, Cache& c) const;
    void backward(const ParamStore& ps, const double* x, int n, const Cache& c,
                  const double* gy, GradBuffer& grads, double* gx) const;
};

// Pre-norm block: x + MHSA(LN1(x)), then + FFN(LN2(x)); FFN hidden = ratio*dim.
struct TransformerBlock {
    LayerNormLayer ln1, ln2;
    AttentionLayer attn;
    LinearLayer fc1, fc2;
    int dim = 0, hidden = 0;

    struct Cache {
        std::vector<double> xn1, attn_out, x1, xn2, h_pre, h_act, ffn_out;
        LayerNormLayer::Cache ln1c, ln2c;
        AttentionLayer::Cache attnc;
    };

    void init(ParamStore& ps, const std::string& name, int d, int num_heads, int ratio);
    void forward(const ParamStore& ps, const double* x, int n, double* y, Cache& c) const;
    void backward(const ParamStore& ps, const double* x, int n, const Cache& c,
                  const double* gy, GradBuffer& grads, double* gx) const;
};

// A stack of blocks sharing one token width. Depth 0 is the identity.
struct TransformerStack {
    std::vector<TransformerBlock> blocks;
    int dim = 0;

    struct Cache {
        // states[b] is the input to block b; states[depth] is the output.
        std::vector<std::vector<double>> states;
        std::vector<TransformerBlock::Cache> block_caches;
    };

    void init(ParamStore& ps, const std::string& name, int d, int depth, int num_heads,
              int ratio);
    // Verifies finiteness after every block; failures name the block.
    void forward(const ParamStore& ps, const double* x, int n, double* y, Cache& c) const;
    void backward(const ParamStore& ps, int n, const Cache& c, const double* gy,
                  GradBuffer& grads, double* gx) const;

    // Post-softmax attention matrix of one block, [heads][n][n].
    std::vector<double> attention_weights(const ParamStore& ps, const double* x, int n,
                                          int block_index) const;
};

}  // namespace presspose
