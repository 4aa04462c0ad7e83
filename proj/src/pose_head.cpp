#include "presspose/pose_head.hpp"

#include <cmath>

#include "presspose/common.hpp"
#include "presspose/kernels.hpp"

namespace presspose {

// ---------------------------------------------------------------------------
// Transposed convolution (k=4, s=2, p=1)
// ---------------------------------------------------------------------------

void DeconvLayer::init(ParamStore& ps, const std::string& name, int cin_, int cout_) {
    cin = cin_;
    cout = cout_;
    w_off = ps.add(name + ".w", size_t(16) * cin * cout, Init::TruncNormal);
    b_off = ps.add(name + ".b", size_t(cout), Init::Zero);
}

void DeconvLayer::forward(const ParamStore& ps, const double* x, int ih, int iw,
                          double* y) const {
    const int oh = ih * 2, ow = iw * 2, pin = ih * iw;
    const double* w = ps.at(w_off);
    const double* b = ps.at(b_off);
    for (int p = 0; p < oh * ow; ++p)
        for (int co = 0; co < cout; ++co) y[size_t(p) * cout + co] = b[co];

    std::vector<double> contrib(size_t(pin) * cout);
    for (int ky = 0; ky < 4; ++ky)
        for (int kx = 0; kx < 4; ++kx) {
            const double* slice = w + (size_t(ky) * 4 + kx) * cin * cout;
            kern::gemm_nn(size_t(pin), size_t(cin), size_t(cout), x, slice,
                          contrib.data(), false);
            for (int iy = 0; iy < ih; ++iy) {
                int oy = 2 * iy + ky - 1;
                if (oy < 0 || oy >= oh) continue;
                for (int ix = 0; ix < iw; ++ix) {
                    int ox = 2 * ix + kx - 1;
                    if (ox < 0 || ox >= ow) continue;
                    const double* src = &contrib[(size_t(iy) * iw + ix) * cout];
                    double* dst = &y[(size_t(oy) * ow + ox) * cout];
                    for (int co = 0; co < cout; ++co) dst[co] += src[co];
                }
            }
        }
}

void DeconvLayer::backward(const ParamStore& ps, const double* x, int ih, int iw,
                           const double* gy, GradBuffer& grads, double* gx) const {
    const int oh = ih * 2, ow = iw * 2, pin = ih * iw;
    const double* w = ps.at(w_off);
    double* gw = grads.at(w_off);
    double* gb = grads.at(b_off);
    for (int p = 0; p < oh * ow; ++p)
        for (int co = 0; co < cout; ++co) gb[co] += gy[size_t(p) * cout + co];

    std::vector<double> gathered(size_t(pin) * cout);
    for (int ky = 0; ky < 4; ++ky)
        for (int kx = 0; kx < 4; ++kx) {
            const double* slice = w + (size_t(ky) * 4 + kx) * cin * cout;
            double* gslice = gw + (size_t(ky) * 4 + kx) * cin * cout;
            std::fill(gathered.begin(), gathered.end(), 0.0);
            for (int iy = 0; iy < ih; ++iy) {
                int oy = 2 * iy + ky - 1;
                if (oy < 0 || oy >= oh) continue;
                for (int ix = 0; ix < iw; ++ix) {
                    int ox = 2 * ix + kx - 1;
                    if (ox < 0 || ox >= ow) continue;
                    std::copy_n(&gy[(size_t(oy) * ow + ox) * cout], cout,
                                &gathered[(size_t(iy) * iw + ix) * cout]);
                }
            }
            kern::gemm_tn(size_t(cin), size_t(pin), size_t(cout), x, gathered.data(),
                          gslice, true);
            if (gx)
                kern::gemm_nt(size_t(pin), size_t(cout), size_t(cin), gathered.data(),
                              slice, gx, true);
        }
}

// ---------------------------------------------------------------------------
// PoseHead
// ---------------------------------------------------------------------------

void PoseHead::init(ParamStore& ps, const std::string& name, const ModelConfig& m) {
    slots_t = m.tokens_t();
    rows = m.tokens_rows();
    cols = m.tokens_cols();
    dt = m.temporal_crop;
    joints = m.num_joints;
    c = m.embed_dim;
    hc = m.head_channels;
    map_h = rows * 4;
    map_w = cols * 4;
    dc1.init(ps, name + ".dc1", c, hc);
    ln1.init(ps, name + ".ln1", hc);
    dc2.init(ps, name + ".dc2", hc, hc);
    ln2.init(ps, name + ".ln2", hc);
    out1x1.init(ps, name + ".out", hc, 2 * dt * joints);
}

void PoseHead::forward(const ParamStore& ps, const double* tokens, HeatmapStack& out,
                       Cache& cache) const {
    const int p0 = rows * cols, p1 = p0 * 4, p2 = p0 * 16, och = 2 * dt * joints;
    out.resize(slots_t * dt, joints, map_h, map_w);
    cache.in_tokens.assign(tokens, tokens + size_t(slots_t) * p0 * c);
    cache.a1.resize(size_t(slots_t) * p1 * hc);
    cache.n1.resize(size_t(slots_t) * p1 * hc);
    cache.g1.resize(size_t(slots_t) * p1 * hc);
    cache.a2.resize(size_t(slots_t) * p2 * hc);
    cache.n2.resize(size_t(slots_t) * p2 * hc);
    cache.g2.resize(size_t(slots_t) * p2 * hc);
    cache.ln1c.resize(slots_t);
    cache.ln2c.resize(slots_t);
    cache.valid = true;

    std::vector<double> o(size_t(p2) * och);
    for (int s = 0; s < slots_t; ++s) {
        const double* in = tokens + size_t(s) * p0 * c;
        double* a1 = &cache.a1[size_t(s) * p1 * hc];
        double* n1 = &cache.n1[size_t(s) * p1 * hc];
        double* g1 = &cache.g1[size_t(s) * p1 * hc];
        double* a2 = &cache.a2[size_t(s) * p2 * hc];
        double* n2 = &cache.n2[size_t(s) * p2 * hc];
        double* g2 = &cache.g2[size_t(s) * p2 * hc];

        dc1.forward(ps, in, rows, cols, a1);
        ln1.forward(ps, a1, p1, n1, cache.ln1c[s]);
        for (int i = 0; i < p1 * hc; ++i) g1[i] = gelu(n1[i]);
        dc2.forward(ps, g1, rows * 2, cols * 2, a2);
        ln2.forward(ps, a2, p2, n2, cache.ln2c[s]);
        for (int i = 0; i < p2 * hc; ++i) g2[i] = gelu(n2[i]);
        out1x1.forward(ps, g2, p2, o.data());

        for (int k = 0; k < dt; ++k) {
            int frame = s * dt + k;
            for (int j = 0; j < joints; ++j) {
                double* hmap = out.heat_at(frame, j);
                double* dmap = out.depth_at(frame, j);
                for (int p = 0; p < p2; ++p) {
                    hmap[p] = o[size_t(p) * och + k * joints + j];
                    dmap[p] = o[size_t(p) * och + dt * joints + k * joints + j];
                }
            }
        }
    }
    check_finite(out.heat.data(), out.heat.size(), "pose head heatmaps");
    check_finite(out.depth.data(), out.depth.size(), "pose head depth maps");
}

void PoseHead::backward(const ParamStore& ps, const Cache& cache, const HeatmapStack& gout,
                        GradBuffer& grads, double* g_tokens) const {
    if (!cache.valid)
        fail(ErrorKind::BadArgument, "pose head backward called without a cached forward");
    const int p0 = rows * cols, p1 = p0 * 4, p2 = p0 * 16, och = 2 * dt * joints;

    std::vector<double> g_o(size_t(p2) * och), g_g2(size_t(p2) * hc),
        g_n2(size_t(p2) * hc), g_a2(size_t(p2) * hc), g_g1(size_t(p1) * hc),
        g_n1(size_t(p1) * hc), g_a1(size_t(p1) * hc);

    for (int s = 0; s < slots_t; ++s) {
        std::fill(g_o.begin(), g_o.end(), 0.0);
        for (int k = 0; k < dt; ++k) {
            int frame = s * dt + k;
            for (int j = 0; j < joints; ++j) {
                const double* ghm = gout.heat_at(frame, j);
                const double* gdm = gout.depth_at(frame, j);
                for (int p = 0; p < p2; ++p) {
                    g_o[size_t(p) * och + k * joints + j] = ghm[p];
                    g_o[size_t(p) * och + dt * joints + k * joints + j] = gdm[p];
                }
            }
        }

        const double* g2 = &cache.g2[size_t(s) * p2 * hc];
        const double* n2 = &cache.n2[size_t(s) * p2 * hc];
        const double* a2 = &cache.a2[size_t(s) * p2 * hc];
        const double* g1 = &cache.g1[size_t(s) * p1 * hc];
        const double* n1 = &cache.n1[size_t(s) * p1 * hc];
        const double* a1 = &cache.a1[size_t(s) * p1 * hc];
        const double* in = &cache.in_tokens[size_t(s) * p0 * c];

        std::fill(g_g2.begin(), g_g2.end(), 0.0);
        out1x1.backward(ps, g2, p2, g_o.data(), grads, g_g2.data());
        for (int i = 0; i < p2 * hc; ++i) g_n2[i] = g_g2[i] * gelu_grad(n2[i]);
        std::fill(g_a2.begin(), g_a2.end(), 0.0);
        ln2.backward(ps, a2, p2, cache.ln2c[s], g_n2.data(), grads, g_a2.data());
        std::fill(g_g1.begin(), g_g1.end(), 0.0);
        dc2.backward(ps, g1, rows * 2, cols * 2, g_a2.data(), grads, g_g1.data());
        for (int i = 0; i < p1 * hc; ++i) g_n1[i] = g_g1[i] * gelu_grad(n1[i]);
        std::fill(g_a1.begin(), g_a1.end(), 0.0);
        ln1.backward(ps, a1, p1, cache.ln1c[s], g_n1.data(), grads, g_a1.data());
        dc1.backward(ps, in, rows, cols, g_a1.data(), grads,
                     g_tokens ? g_tokens + size_t(s) * p0 * c : nullptr);
    }
}

// ---------------------------------------------------------------------------
// Soft-argmax decode
// ---------------------------------------------------------------------------

void soft_argmax(const double* logits, int h, int w, double beta, double* weights_out,
                 double& mx, double& my) {
    const int n = h * w;
    std::vector<double> local;
    double* wts = weights_out;
    if (!wts) {
        local.resize(n);
        wts = local.data();
    }
    for (int i = 0; i < n; ++i) wts[i] = beta * logits[i];
    softmax_rows(wts, 1, n);
    mx = 0;
    my = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double wv = wts[y * w + x];
            mx += wv * x;
            my += wv * y;
        }
}

Keypoints decode_keypoints(const HeatmapStack& maps, double beta, int stride,
                           DecodeCache* cache) {
    Keypoints kp;
    kp.resize(maps.t, maps.j);
    const size_t ms = maps.map_size();
    if (cache) {
        cache->weights.resize(size_t(maps.t) * maps.j * ms);
        cache->map_xy.resize(size_t(maps.t) * maps.j * 2);
    }
    std::vector<double> wbuf(ms);
    for (int f = 0; f < maps.t; ++f)
        for (int j = 0; j < maps.j; ++j) {
            double* wts = cache ? &cache->weights[(size_t(f) * maps.j + j) * ms] : wbuf.data();
            double mx, my;
            soft_argmax(maps.heat_at(f, j), maps.h, maps.w, beta, wts, mx, my);
            double z = kern::dot(ms, wts, maps.depth_at(f, j));
            double* out = kp.at(f, j);
            out[0] = map_to_full(mx, stride);
            out[1] = map_to_full(my, stride);
            out[2] = z;
            if (cache) {
                cache->map_xy[(size_t(f) * maps.j + j) * 2 + 0] = mx;
                cache->map_xy[(size_t(f) * maps.j + j) * 2 + 1] = my;
            }
        }
    if (cache) cache->kp = kp;
    return kp;
}

void decode_backward(const HeatmapStack& maps, const DecodeCache& cache, double beta,
                     int stride, const Keypoints& g_kp, HeatmapStack& g_maps) {
    const size_t ms = maps.map_size();
    for (int f = 0; f < maps.t; ++f)
        for (int j = 0; j < maps.j; ++j) {
            const double* gk = g_kp.at(f, j);
            if (gk[0] == 0.0 && gk[1] == 0.0 && gk[2] == 0.0) continue;
            const double* wts = &cache.weights[(size_t(f) * maps.j + j) * ms];
            const double* dmap = maps.depth_at(f, j);
            double mx = cache.map_xy[(size_t(f) * maps.j + j) * 2 + 0];
            double my = cache.map_xy[(size_t(f) * maps.j + j) * 2 + 1];
            double z = cache.kp.at(f, j)[2];
            double* gh = g_maps.heat_at(f, j);
            double* gd = g_maps.depth_at(f, j);
            for (int y = 0; y < maps.h; ++y)
                for (int x = 0; x < maps.w; ++x) {
                    size_t i = size_t(y) * maps.w + x;
                    // d(x_full)/d(logit_i) = beta * w_i * stride * (x - mx), etc.;
                    // d(z)/d(logit_i) = beta * w_i * (depth_i - z).
                    gh[i] += beta * wts[i] *
                             (gk[0] * stride * (x - mx) + gk[1] * stride * (y - my) +
                              gk[2] * (dmap[i] - z));
                    gd[i] += gk[2] * wts[i];
                }
        }
}

// ---------------------------------------------------------------------------
// Target rendering
// ---------------------------------------------------------------------------

RenderResult render_target_heatmaps(const PoseSequence& pose, int frame_begin, int frames,
                                    const ModelConfig& cfg) {
    const int stride = cfg.heatmap_stride();
    const int mh = cfg.map_h(), mw = cfg.map_w();
    const double half = (stride - 1) * 0.5;
    const double inv2s2 = 1.0 / (2.0 * cfg.heatmap_sigma * cfg.heatmap_sigma);

    RenderResult res;
    res.maps.resize(frames, pose.j, mh, mw);
    for (int f = 0; f < frames; ++f)
        for (int j = 0; j < pose.j; ++j) {
            double qx = (double(pose.at(frame_begin + f, j, 0)) - half) / stride;
            double qy = (double(pose.at(frame_begin + f, j, 1)) - half) / stride;
            double z = pose.at(frame_begin + f, j, 2);
            bool clip = qx < 0 || qx > mw - 1 || qy < 0 || qy > mh - 1;
            if (clip) {
                ++res.clamped;
                qx = std::clamp(qx, 0.0, double(mw - 1));
                qy = std::clamp(qy, 0.0, double(mh - 1));
            }
            double* hmap = res.maps.heat_at(f, j);
            double* dmap = res.maps.depth_at(f, j);
            for (int y = 0; y < mh; ++y)
                for (int x = 0; x < mw; ++x) {
                    double dx = x - qx, dy = y - qy;
                    hmap[size_t(y) * mw + x] = std::exp(-(dx * dx + dy * dy) * inv2s2);
                    dmap[size_t(y) * mw + x] = z;
                }
        }
    return res;
}

}  // namespace presspose
