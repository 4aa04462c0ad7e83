#pragma once

#include <vector>

#include "presspose/config.hpp"
#include "presspose/dataio.hpp"
#include "presspose/layers.hpp"
#include "presspose/params.hpp"

namespace presspose {

// Per-frame joint heatmap logits and depth maps at quarter resolution
// (grid/(d/4) cells in relaxed geometry).
struct HeatmapStack {
    int t = 0, j = 0, h = 0, w = 0;
    std::vector<double> heat;   // [t][j][h][w]
    std::vector<double> depth;  // [t][j][h][w]

    size_t map_size() const { return size_t(h) * w; }
    double* heat_at(int f, int joint) { return heat.data() + (size_t(f) * j + joint) * map_size(); }
    const double* heat_at(int f, int joint) const { return heat.data() + (size_t(f) * j + joint) * map_size(); }
    double* depth_at(int f, int joint) { return depth.data() + (size_t(f) * j + joint) * map_size(); }
    const double* depth_at(int f, int joint) const { return depth.data() + (size_t(f) * j + joint) * map_size(); }
    void resize(int t_, int j_, int h_, int w_) {
        t = t_; j = j_; h = h_; w = w_;
        heat.assign(size_t(t) * j * h * w, 0.0);
        depth.assign(size_t(t) * j * h * w, 0.0);
    }
};

// Decoded 3D keypoints in full-resolution sensor cells.
struct Keypoints {
    int t = 0, j = 0;
    std::vector<double> xyz;  // [t][j][3]

    double* at(int f, int joint) { return xyz.data() + (size_t(f) * j + joint) * 3; }
    const double* at(int f, int joint) const { return xyz.data() + (size_t(f) * j + joint) * 3; }
    void resize(int t_, int j_) {
        t = t_; j = j_;
        xyz.assign(size_t(t) * j * 3, 0.0);
    }
};

// Transposed convolution, kernel 4, stride 2, pad 1 (doubles both sides).
// Activations are channel-last [y*w + x][ch]; weights are [ky][kx][cin][cout]
// so each kernel tap is one dense gemm.
struct DeconvLayer {
    int cin = 0, cout = 0;
    size_t w_off = 0, b_off = 0;

    void init(ParamStore& ps, const std::string& name, int cin_, int cout_);
    void forward(const ParamStore& ps, const double* x, int ih, int iw, double* y) const;
    void backward(const ParamStore& ps, const double* x, int ih, int iw, const double* gy,
                  GradBuffer& grads, double* gx) const;
};

// Regression head: reshape tokens to the (T/d_t) x rows x cols x C lattice,
// two x2 deconvolutions (each with per-position channel LayerNorm + GELU),
// then a 1x1 convolution emitting d_t*J heatmap channels and d_t*J depth
// channels per temporal slot.
struct PoseHead {
    int slots_t = 0, rows = 0, cols = 0, dt = 0, joints = 0, c = 0, hc = 0;
    int map_h = 0, map_w = 0;
    DeconvLayer dc1, dc2;
    LayerNormLayer ln1, ln2;
    LinearLayer out1x1;

    struct Cache {
        // per-slot activations, concatenated over slots
        std::vector<double> in_tokens;              // [slots][rows*cols][C]
        std::vector<double> a1, n1, g1;             // [slots][P1][hc]
        std::vector<double> a2, n2, g2;             // [slots][P2][hc]
        std::vector<LayerNormLayer::Cache> ln1c, ln2c;
        bool valid = false;
    };

    void init(ParamStore& ps, const std::string& name, const ModelConfig& m);
    void forward(const ParamStore& ps, const double* tokens, HeatmapStack& out,
                 Cache& cache) const;
    void backward(const ParamStore& ps, const Cache& cache, const HeatmapStack& gout,
                  GradBuffer& grads, double* g_tokens) const;
};

// Softmax readout of one joint map: weights = softmax(beta * logits) over all
// cells; (mx, my) = weighted mean of cell indices (map coordinates).
// weights_out (size h*w) may be null.
void soft_argmax(const double* logits, int h, int w, double beta, double* weights_out,
                 double& mx, double& my);

// Map coordinate -> full-resolution sensor cells for a given stride.
inline double map_to_full(double m, int stride) { return m * stride + (stride - 1) * 0.5; }

// Soft-argmax decode of a whole stack plus depth readout under the same
// weights. Caches weights and decoded values for the backward pass.
struct DecodeCache {
    std::vector<double> weights;  // [t][j][h*w]
    Keypoints kp;                 // decoded, full-resolution cells
    std::vector<double> map_xy;   // [t][j][2], pre-rescale map coordinates
};

Keypoints decode_keypoints(const HeatmapStack& maps, double beta, int stride,
                           DecodeCache* cache = nullptr);

// d(loss)/d(keypoints) -> gradients into heatmap logits and depth maps.
void decode_backward(const HeatmapStack& maps, const DecodeCache& cache, double beta,
                     int stride, const Keypoints& g_kp, HeatmapStack& g_maps);

// Gaussian targets: peak 1 at each joint's map-space location, std
// heatmap_sigma; depth target is the constant z of the joint. Joints whose
// map-space peak falls outside the map are clamped and counted.
struct RenderResult {
    HeatmapStack maps;
    int clamped = 0;
};
RenderResult render_target_heatmaps(const PoseSequence& pose, int frame_begin, int frames,
                                    const ModelConfig& cfg);

}  // namespace presspose
