#pragma once

#include <vector>

#include "presspose/config.hpp"
#include "presspose/layers.hpp"
#include "presspose/params.hpp"

namespace presspose {

// Space-time cube tokenization: a d x d / stride-d spatial convolution per
// frame (1 -> C channels), a length-d_t / stride-d_t temporal convolution
// over the token lattice (C -> C), a C -> C projection, then learned
// positional embeddings. Token i covers the cube at
//   t  = i / (rows*cols) * d_t,  row = (i / cols) % rows * d,  col = i % cols * d
// and every stage before the positional add is linear in the input.
struct Tokenizer {
    int grid_w = 0, grid_h = 0, frames_t = 0;
    int d = 0, dt = 0, c = 0;
    int rows = 0, cols = 0, slots_t = 0;

    size_t sw_off = 0, sb_off = 0;  // spatial conv: [C][d*d] weights, [C] bias
    size_t tw_off = 0, tb_off = 0;  // temporal conv: [C][dt*C] weights, [C] bias
    LinearLayer proj;               // C -> C
    size_t pos_off = 0;             // [tokens][C]

    struct Cache {
        std::vector<double> input;    // [T][H][W], copied for backward
        std::vector<double> spatial;  // [T][rows*cols][C]
        std::vector<double> temporal; // [tokens][C]
        bool valid = false;
    };

    void init(ParamStore& ps, const std::string& name, const ModelConfig& m);

    int token_count() const { return slots_t * rows * cols; }

    // x is [T][H][W] row-major, already converted to double. out is
    // [tokens][C]. with_pos=false is used by the linearity tests.
    void forward(const ParamStore& ps, const double* x, double* out, Cache& cache,
                 bool with_pos = true) const;
    void backward(const ParamStore& ps, const Cache& cache, const double* gy,
                  GradBuffer& grads, double* gx) const;

    // Raw-pixel targets: token i -> flattened d_t*d*d cube, frame-major then
    // row-major, matching the reconstruction decoder's output layout.
    void extract_cube_targets(const double* x, double* out) const;
    // Inverse of extract_cube_targets (scatter cubes back into a sequence).
    void reassemble_cubes(const double* cubes, double* x) const;
};

}  // namespace presspose
