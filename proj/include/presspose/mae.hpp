#pragma once

#include <cstdint>
#include <vector>

#include "presspose/config.hpp"
#include "presspose/layers.hpp"
#include "presspose/params.hpp"

namespace presspose {

// Which encoder output tokens are hidden from the reconstruction decoder.
struct MaskSpec {
    std::vector<uint8_t> masked;  // per token, 1 = masked
    double ratio = 0.0;
    uint64_t seed = 0;

    int count() const {
        int n = 0;
        for (uint8_t m : masked) n += m;
        return n;
    }
};

// Uniform subset without replacement of exactly round(ratio * token_count)
// indices, deterministic per seed.
MaskSpec sample_mask(int token_count, double ratio, uint64_t seed);

// Shallow reconstruction decoder: masked latents are replaced by a learned
// mask token at decoder width, unmasked latents are linearly embedded, and
// all pass with positional embeddings through a small transformer to predict
// each token's raw pressure cube.
struct MaeDecoder {
    int tokens = 0, c = 0, dim = 0, cube = 0;
    LinearLayer embed;          // C -> dim, applied to unmasked rows only
    size_t mask_token_off = 0;  // [dim]
    size_t pos_off = 0;         // [tokens][dim]
    TransformerStack stack;
    LinearLayer out;            // dim -> cube

    struct Cache {
        MaskSpec mask;
        std::vector<double> f_o;      // [tokens][c] encoder outputs
        std::vector<double> latent;   // [tokens][dim], post substitution + pos
        std::vector<double> decoded;  // [tokens][dim]
        TransformerStack::Cache stackc;
        bool valid = false;
    };

    void init(ParamStore& ps, const std::string& name, const ModelConfig& m);
    // f_o: [tokens][c]; pred: [tokens][cube]
    void forward(const ParamStore& ps, const double* f_o, const MaskSpec& mask,
                 double* pred, Cache& cache) const;
    // Accumulates into grads; g_fo (may be null) receives d/d f_o. Unmasked
    // rows are the only ones that reach the embed projection, so the mask
    // token and the embedding see disjoint gradient paths.
    void backward(const ParamStore& ps, const Cache& cache, const double* g_pred,
                  GradBuffer& grads, double* g_fo) const;
};

// Mean squared error over (masked tokens x cube elements) only.
double masked_recon_loss(const double* pred, const double* target, int tokens,
                         int cube, const MaskSpec& mask);

// Same value; writes d(loss)/d(pred) into g_pred (zero at unmasked tokens).
double masked_recon_loss_grad(const double* pred, const double* target, int tokens,
                              int cube, const MaskSpec& mask, double* g_pred);

}  // namespace presspose
