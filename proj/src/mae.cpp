#include "presspose/mae.hpp"

#include <cmath>
#include <numeric>

#include "presspose/common.hpp"

namespace presspose {

MaskSpec sample_mask(int token_count, double ratio, uint64_t seed) {
    if (token_count < 1) fail(ErrorKind::BadArgument, "mask needs at least one token");
    if (!(ratio > 0.0 && ratio < 1.0))
        fail(ErrorKind::BadArgument, "mask ratio must lie strictly between 0 and 1");
    const int k = int(std::llround(ratio * token_count));

    // partial Fisher-Yates: after k swaps the first k entries are a uniform
    // subset without replacement
    std::vector<int> idx(static_cast<size_t>(token_count), 0);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(seed);
    for (int i = 0; i < k; ++i) {
        int j = i + int(rng.below(uint64_t(token_count - i)));
        std::swap(idx[size_t(i)], idx[size_t(j)]);
    }

    MaskSpec spec;
    spec.ratio = ratio;
    spec.seed = seed;
    spec.masked.assign(size_t(token_count), 0);
    for (int i = 0; i < k; ++i) spec.masked[size_t(idx[size_t(i)])] = 1;
    return spec;
}

// ============================================================
// decoder
// ============================================================

void MaeDecoder::init(ParamStore& ps, const std::string& name, const ModelConfig& m) {
    tokens = m.token_count();
    c = m.embed_dim;
    dim = m.decoder_dim;
    cube = m.cube_size();
    embed.init(ps, name + ".embed", c, dim);
    mask_token_off = ps.add(name + ".mask_token", size_t(dim), Init::TruncNormal);
    pos_off = ps.add(name + ".pos", size_t(tokens) * dim, Init::TruncNormal);
    stack.init(ps, name + ".stack", dim, m.decoder_depth, m.decoder_heads, m.ffn_ratio);
    out.init(ps, name + ".out", dim, cube);
}

void MaeDecoder::forward(const ParamStore& ps, const double* f_o, const MaskSpec& mask,
                         double* pred, Cache& cache) const {
    if (int(mask.masked.size()) != tokens)
        fail(ErrorKind::DimMismatch, "mask length differs from token count");
    cache.mask = mask;
    cache.f_o.assign(f_o, f_o + size_t(tokens) * c);
    cache.latent.assign(size_t(tokens) * dim, 0.0);

    // unmasked rows go through the embedding as one dense batch
    std::vector<double> gathered;
    std::vector<int> rows;
    for (int i = 0; i < tokens; ++i)
        if (!mask.masked[size_t(i)]) rows.push_back(i);
    gathered.resize(rows.size() * size_t(c));
    for (size_t r = 0; r < rows.size(); ++r)
        std::copy_n(f_o + size_t(rows[r]) * c, c, gathered.data() + r * size_t(c));
    std::vector<double> embedded(rows.size() * size_t(dim));
    if (!rows.empty())
        embed.forward(ps, gathered.data(), int(rows.size()), embedded.data());

    const double* tok = ps.data() + mask_token_off;
    const double* pos = ps.data() + pos_off;
    size_t r = 0;
    for (int i = 0; i < tokens; ++i) {
        double* li = cache.latent.data() + size_t(i) * dim;
        const double* src = mask.masked[size_t(i)] ? tok : embedded.data() + (r++) * dim;
        for (int d = 0; d < dim; ++d) li[d] = src[d] + pos[size_t(i) * dim + d];
    }

    cache.decoded.assign(size_t(tokens) * dim, 0.0);
    stack.forward(ps, cache.latent.data(), tokens, cache.decoded.data(), cache.stackc);
    out.forward(ps, cache.decoded.data(), tokens, pred);
    check_finite(pred, size_t(tokens) * cube, "reconstruction output");
    cache.valid = true;
}

void MaeDecoder::backward(const ParamStore& ps, const Cache& cache,
                          const double* g_pred, GradBuffer& grads, double* g_fo) const {
    if (!cache.valid) fail(ErrorKind::BadArgument, "backward without a forward cache");

    std::vector<double> g_decoded(size_t(tokens) * dim, 0.0);
    out.backward(ps, cache.decoded.data(), tokens, g_pred, grads, g_decoded.data());

    std::vector<double> g_latent(size_t(tokens) * dim, 0.0);
    stack.backward(ps, tokens, cache.stackc, g_decoded.data(), grads, g_latent.data());

    double* gpos = grads.at(pos_off);
    for (size_t i = 0; i < g_latent.size(); ++i) gpos[i] += g_latent[i];

    double* gtok = grads.at(mask_token_off);
    std::vector<int> rows;
    for (int i = 0; i < tokens; ++i) {
        if (cache.mask.masked[size_t(i)]) {
            const double* gl = g_latent.data() + size_t(i) * dim;
            for (int d = 0; d < dim; ++d) gtok[d] += gl[d];
        } else {
            rows.push_back(i);
        }
    }
    if (rows.empty()) return;

    std::vector<double> gathered_x(rows.size() * size_t(c));
    std::vector<double> gathered_gy(rows.size() * size_t(dim));
    for (size_t r = 0; r < rows.size(); ++r) {
        std::copy_n(cache.f_o.data() + size_t(rows[r]) * c, c,
                    gathered_x.data() + r * size_t(c));
        std::copy_n(g_latent.data() + size_t(rows[r]) * dim, dim,
                    gathered_gy.data() + r * size_t(dim));
    }
    std::vector<double> g_gathered(rows.size() * size_t(c), 0.0);
    embed.backward(ps, gathered_x.data(), int(rows.size()), gathered_gy.data(), grads,
                   g_fo ? g_gathered.data() : nullptr);
    if (g_fo)
        for (size_t r = 0; r < rows.size(); ++r) {
            double* dst = g_fo + size_t(rows[r]) * c;
            const double* src = g_gathered.data() + r * size_t(c);
            for (int d = 0; d < c; ++d) dst[d] += src[d];
        }
}

// ============================================================
// masked reconstruction loss
// ============================================================

namespace {

double recon_impl(const double* pred, const double* target, int tokens, int cube,
                  const MaskSpec& mask, double* g_pred) {
    if (int(mask.masked.size()) != tokens)
        fail(ErrorKind::DimMismatch, "mask length differs from token count");
    const int k = mask.count();
    if (k == 0) fail(ErrorKind::BadArgument, "no masked tokens: loss undefined");

    if (g_pred) std::fill_n(g_pred, size_t(tokens) * cube, 0.0);
    const double inv = 1.0 / (double(k) * cube);
    double s = 0.0;
    for (int i = 0; i < tokens; ++i) {
        if (!mask.masked[size_t(i)]) continue;
        const size_t base = size_t(i) * cube;
        for (int e = 0; e < cube; ++e) {
            double d = pred[base + e] - target[base + e];
            s += d * d * inv;
            if (g_pred) g_pred[base + e] = 2.0 * d * inv;
        }
    }
    return s;
}

}  // namespace

double masked_recon_loss(const double* pred, const double* target, int tokens,
                         int cube, const MaskSpec& mask) {
    return recon_impl(pred, target, tokens, cube, mask, nullptr);
}

double masked_recon_loss_grad(const double* pred, const double* target, int tokens,
                              int cube, const MaskSpec& mask, double* g_pred) {
    return recon_impl(pred, target, tokens, cube, mask, g_pred);
}

}  // namespace presspose
