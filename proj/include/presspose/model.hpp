#pragma once

#include <vector>

#include "presspose/config.hpp"
#include "presspose/layers.hpp"
#include "presspose/mae.hpp"
#include "presspose/params.hpp"
#include "presspose/pose_head.hpp"
#include "presspose/tokenizer.hpp"

namespace presspose {

// Full network on one parameter store. Name prefixes partition the store for
// stage freezing: "tok." (patching block), "enc." (transformer trunk),
// "head." (regression head), "dec." (reconstruction decoder). The trunk is
// shared by both pipelines; masking happens only after encoding, so encoder
// outputs for a window never depend on any mask.
struct PoseModel {
    ModelConfig cfg;
    ParamStore ps;
    Tokenizer tok;
    TransformerStack enc;
    PoseHead head;
    MaeDecoder dec;

    // Registers all parameters; call ps.initialize(seed) afterwards (or
    // restore from a checkpoint).
    void build(const ModelConfig& m);

    struct TrunkCache {
        Tokenizer::Cache tokc;
        TransformerStack::Cache encc;
        std::vector<double> x;        // [T][H][W] input, widened to double
        std::vector<double> tokens;   // [N][C]
        std::vector<double> encoded;  // [N][C]
    };
    // window: [frames_t][grid_h][grid_w] float32 pressure.
    void encode_window(const float* window, TrunkCache& tc) const;
    void trunk_backward(const TrunkCache& tc, const double* g_encoded,
                        GradBuffer& grads) const;

    struct SupCache {
        TrunkCache trunk;
        PoseHead::Cache headc;
    };
    void sup_forward(const float* window, HeatmapStack& maps, SupCache& cache) const;
    void sup_backward(const SupCache& cache, const HeatmapStack& g_maps,
                      GradBuffer& grads) const;

    struct MaeCache {
        TrunkCache trunk;
        MaeDecoder::Cache decc;
        std::vector<double> pred, targets;  // [N][cube]
        MaskSpec mask;
    };
    // Returns the masked reconstruction loss for this window and mask.
    double mae_forward(const float* window, const MaskSpec& mask, MaeCache& cache) const;
    void mae_backward(const MaeCache& cache, GradBuffer& grads) const;
};

}  // namespace presspose
