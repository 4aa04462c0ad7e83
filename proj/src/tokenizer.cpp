#include "presspose/tokenizer.hpp"

#include <cmath>

#include "presspose/common.hpp"
#include "presspose/kernels.hpp"

namespace presspose {

void Tokenizer::init(ParamStore& ps, const std::string& name, const ModelConfig& m) {
    grid_w = m.grid_w;
    grid_h = m.grid_h;
    frames_t = m.frames_t;
    d = m.spatial_crop;
    dt = m.temporal_crop;
    c = m.embed_dim;
    rows = grid_h / d;
    cols = grid_w / d;
    slots_t = frames_t / dt;

    sw_off = ps.add(name + ".spatial.w", size_t(c) * d * d, Init::TruncNormal);
    sb_off = ps.add(name + ".spatial.b", size_t(c), Init::Zero);
    tw_off = ps.add(name + ".temporal.w", size_t(c) * dt * c, Init::TruncNormal);
    tb_off = ps.add(name + ".temporal.b", size_t(c), Init::Zero);
    proj.init(ps, name + ".proj", c, c);
    pos_off = ps.add(name + ".pos", size_t(token_count()) * c, Init::TruncNormal);
}

void Tokenizer::forward(const ParamStore& ps, const double* x, double* out, Cache& cache,
                        bool with_pos) const {
    const int P = rows * cols, N = token_count(), patch = d * d;
    check_finite(x, size_t(frames_t) * grid_h * grid_w, "tokenizer input");

    cache.input.assign(x, x + size_t(frames_t) * grid_h * grid_w);
    cache.spatial.resize(size_t(frames_t) * P * c);
    cache.temporal.resize(size_t(N) * c);
    cache.valid = true;

    // Spatial stage: per frame, im2col then one gemm against [C][d*d].
    const double* sw = ps.at(sw_off);
    const double* sb = ps.at(sb_off);
    std::vector<double> im2col(size_t(P) * patch);
    for (int f = 0; f < frames_t; ++f) {
        const double* frame = x + size_t(f) * grid_h * grid_w;
        for (int r = 0; r < rows; ++r)
            for (int cc = 0; cc < cols; ++cc) {
                double* cell = &im2col[(size_t(r) * cols + cc) * patch];
                for (int yy = 0; yy < d; ++yy)
                    for (int xx = 0; xx < d; ++xx)
                        cell[yy * d + xx] = frame[size_t(r * d + yy) * grid_w + cc * d + xx];
            }
        double* sout = &cache.spatial[size_t(f) * P * c];
        kern::gemm_nt(size_t(P), size_t(patch), size_t(c), im2col.data(), sw, sout, false);
        for (int p = 0; p < P; ++p)
            for (int ch = 0; ch < c; ++ch) sout[size_t(p) * c + ch] += sb[ch];
    }

    // Temporal stage: gather dt consecutive frames per cell, gemm against
    // [C][dt*C].
    const double* tw = ps.at(tw_off);
    const double* tb = ps.at(tb_off);
    std::vector<double> gathered(size_t(N) * dt * c);
    for (int s = 0; s < slots_t; ++s)
        for (int p = 0; p < P; ++p) {
            double* row = &gathered[(size_t(s) * P + p) * dt * c];
            for (int k = 0; k < dt; ++k)
                std::copy_n(&cache.spatial[(size_t(s * dt + k) * P + p) * c], c,
                            row + size_t(k) * c);
        }
    kern::gemm_nt(size_t(N), size_t(dt) * c, size_t(c), gathered.data(), tw,
                  cache.temporal.data(), false);
    for (int i = 0; i < N; ++i)
        for (int ch = 0; ch < c; ++ch) cache.temporal[size_t(i) * c + ch] += tb[ch];

    proj.forward(ps, cache.temporal.data(), N, out);

    if (with_pos) {
        const double* pos = ps.at(pos_off);
        for (size_t i = 0; i < size_t(N) * c; ++i) out[i] += pos[i];
    }
}

void Tokenizer::backward(const ParamStore& ps, const Cache& cache, const double* gy,
                         GradBuffer& grads, double* gx) const {
    if (!cache.valid)
        fail(ErrorKind::BadArgument, "tokenizer backward called without a cached forward");
    const int P = rows * cols, N = token_count(), patch = d * d;

    // Positional embeddings receive the upstream gradient unchanged.
    double* gpos = grads.at(pos_off);
    for (size_t i = 0; i < size_t(N) * c; ++i) gpos[i] += gy[i];

    std::vector<double> g_temporal(size_t(N) * c, 0.0);
    proj.backward(ps, cache.temporal.data(), N, gy, grads, g_temporal.data());

    // Temporal conv backward; the gather matrix is rebuilt from the cache.
    std::vector<double> gathered(size_t(N) * dt * c);
    for (int s = 0; s < slots_t; ++s)
        for (int p = 0; p < P; ++p) {
            double* row = &gathered[(size_t(s) * P + p) * dt * c];
            for (int k = 0; k < dt; ++k)
                std::copy_n(&cache.spatial[(size_t(s * dt + k) * P + p) * c], c,
                            row + size_t(k) * c);
        }
    double* gtw = grads.at(tw_off);
    double* gtb = grads.at(tb_off);
    kern::gemm_tn(size_t(c), size_t(N), size_t(dt) * c, g_temporal.data(), gathered.data(),
                  gtw, true);
    for (int i = 0; i < N; ++i)
        for (int ch = 0; ch < c; ++ch) gtb[ch] += g_temporal[size_t(i) * c + ch];

    const double* tw = ps.at(tw_off);
    std::vector<double> g_gathered(size_t(N) * dt * c, 0.0);
    kern::gemm_nn(size_t(N), size_t(c), size_t(dt) * c, g_temporal.data(), tw,
                  g_gathered.data(), false);
    std::vector<double> g_spatial(size_t(frames_t) * P * c, 0.0);
    for (int s = 0; s < slots_t; ++s)
        for (int p = 0; p < P; ++p) {
            const double* row = &g_gathered[(size_t(s) * P + p) * dt * c];
            for (int k = 0; k < dt; ++k) {
                double* dst = &g_spatial[(size_t(s * dt + k) * P + p) * c];
                for (int ch = 0; ch < c; ++ch) dst[ch] += row[size_t(k) * c + ch];
            }
        }

    // Spatial conv backward per frame.
    const double* sw = ps.at(sw_off);
    double* gsw = grads.at(sw_off);
    double* gsb = grads.at(sb_off);
    std::vector<double> im2col(size_t(P) * patch), g_im2col(size_t(P) * patch);
    for (int f = 0; f < frames_t; ++f) {
        const double* frame = &cache.input[size_t(f) * grid_h * grid_w];
        for (int r = 0; r < rows; ++r)
            for (int cc = 0; cc < cols; ++cc) {
                double* cell = &im2col[(size_t(r) * cols + cc) * patch];
                for (int yy = 0; yy < d; ++yy)
                    for (int xx = 0; xx < d; ++xx)
                        cell[yy * d + xx] = frame[size_t(r * d + yy) * grid_w + cc * d + xx];
            }
        const double* gs = &g_spatial[size_t(f) * P * c];
        kern::gemm_tn(size_t(c), size_t(P), size_t(patch), gs, im2col.data(), gsw, true);
        for (int p = 0; p < P; ++p)
            for (int ch = 0; ch < c; ++ch) gsb[ch] += gs[size_t(p) * c + ch];

        if (gx) {
            std::fill(g_im2col.begin(), g_im2col.end(), 0.0);
            kern::gemm_nn(size_t(P), size_t(c), size_t(patch), gs, sw, g_im2col.data(),
                          false);
            double* gframe = gx + size_t(f) * grid_h * grid_w;
            for (int r = 0; r < rows; ++r)
                for (int cc = 0; cc < cols; ++cc) {
                    const double* cell = &g_im2col[(size_t(r) * cols + cc) * patch];
                    for (int yy = 0; yy < d; ++yy)
                        for (int xx = 0; xx < d; ++xx)
                            gframe[size_t(r * d + yy) * grid_w + cc * d + xx] +=
                                cell[yy * d + xx];
                }
        }
    }
}

void Tokenizer::extract_cube_targets(const double* x, double* out) const {
    const int P = rows * cols, cube = dt * d * d;
    for (int s = 0; s < slots_t; ++s)
        for (int r = 0; r < rows; ++r)
            for (int cc = 0; cc < cols; ++cc) {
                double* dst = out + (size_t(s) * P + size_t(r) * cols + cc) * cube;
                for (int k = 0; k < dt; ++k)
                    for (int yy = 0; yy < d; ++yy)
                        for (int xx = 0; xx < d; ++xx)
                            dst[k * d * d + yy * d + xx] =
                                x[size_t(s * dt + k) * grid_h * grid_w +
                                  size_t(r * d + yy) * grid_w + cc * d + xx];
            }
}

void Tokenizer::reassemble_cubes(const double* cubes, double* x) const {
    const int P = rows * cols, cube = dt * d * d;
    for (int s = 0; s < slots_t; ++s)
        for (int r = 0; r < rows; ++r)
            for (int cc = 0; cc < cols; ++cc) {
                const double* src = cubes + (size_t(s) * P + size_t(r) * cols + cc) * cube;
                for (int k = 0; k < dt; ++k)
                    for (int yy = 0; yy < d; ++yy)
                        for (int xx = 0; xx < d; ++xx)
                            x[size_t(s * dt + k) * grid_h * grid_w +
                              size_t(r * d + yy) * grid_w + cc * d + xx] =
                                src[k * d * d + yy * d + xx];
            }
}

}  // namespace presspose
