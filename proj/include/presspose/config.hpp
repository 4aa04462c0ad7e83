#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace presspose {

// Joint topology. Limbs are (parent, child) joint-index pairs; the head limb
// sets the PCKh normalization length.
struct SkeletonSpec {
    std::vector<std::string> joint_names;
    std::vector<std::pair<int, int>> limbs;
    int head_limb_index = 0;

    int num_joints() const { return static_cast<int>(joint_names.size()); }
    int num_limbs() const { return static_cast<int>(limbs.size()); }
};

// 14 joints, 13 limbs, head limb = neck->head.
SkeletonSpec default_skeleton();

struct ModelConfig {
    int grid_w = 96;
    int grid_h = 96;
    int frames_t = 32;
    int spatial_crop = 16;   // d: cells per patch side
    int temporal_crop = 4;   // d_t: frames per cube
    int embed_dim = 768;     // C
    int encoder_depth = 12;
    int num_heads = 12;
    int ffn_ratio = 4;
    int decoder_depth = 4;
    int decoder_dim = 256;
    int decoder_heads = 8;
    int num_joints = 14;
    int head_channels = 256;       // deconv width of the regression head
    double heatmap_sigma = 2.0;    // target blob stddev, heatmap cells
    double softargmax_beta = 40.0; // logit scale of the coordinate readout
    double cell_pitch_cm = 1.0;
    // Strict geometry pins d=16 (and the 4x256 reconstruction decoder) so the
    // head's two x2 deconvolutions land on grid/4. Relaxed mode allows any d
    // divisible by 4; maps then come out at grid/(d/4).
    bool strict_geometry = true;

    int tokens_t() const { return frames_t / temporal_crop; }
    int tokens_rows() const { return grid_h / spatial_crop; }
    int tokens_cols() const { return grid_w / spatial_crop; }
    int token_count() const { return tokens_t() * tokens_rows() * tokens_cols(); }
    int heatmap_stride() const { return spatial_crop / 4; }
    int map_h() const { return tokens_rows() * 4; }
    int map_w() const { return tokens_cols() * 4; }
    int cube_size() const { return temporal_crop * spatial_crop * spatial_crop; }
};

struct TrainConfig {
    double mask_ratio = 0.75;
    double pretrain_lr = 1e-3;
    int pretrain_epochs = 200;
    double pretrain_weight_decay = 0.1;
    double warmup_lr = 1e-3;
    int warmup_epochs = 2;
    double finetune_lr = 2e-4;
    int finetune_epochs = 150;
    double supervised_weight_decay = 0.01;
    double limb_loss_weight = 0.1;
    double depth_loss_weight = 1.0;
    int batch_size = 4;
    uint64_t rng_seed = 0;
};

struct ValidationIssue {
    std::string field;
    std::string message;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
    std::string to_string() const;
};

// Pure; never throws. Every violated invariant becomes one issue.
ValidationReport validate_config(const ModelConfig& model, const TrainConfig& train,
                                 const SkeletonSpec& skel);

// Trainable scalars in tokenizer + encoder + regression head, as a closed
// form over layer shapes. Must equal the allocated parameter count exactly.
uint64_t param_count(const ModelConfig& model);
// The reconstruction decoder, counted separately.
uint64_t param_count_decoder(const ModelConfig& model);

// Synthetic dataset request (see dataio).
struct SynthSpec {
    int num_sequences = 20;
    int frames = 64;
    int grid_w = 16;
    int grid_h = 16;
    uint64_t seed = 1;
    double noise_std = 0.1;
    std::vector<int> contact_joints;  // empty = ankles + hips of the skeleton
};

// The whole run configuration as read from one JSON document.
struct FullConfig {
    ModelConfig model;
    TrainConfig train;
    SkeletonSpec skeleton = default_skeleton();
    SynthSpec synth;
};

// Parses the config document. Unknown keys anywhere are an error
// (ErrorKind::BadArgument); missing keys keep their defaults.
FullConfig load_config_json(const std::string& text);
FullConfig load_config_file(const std::string& path);
std::string config_to_json(const FullConfig& cfg);

}  // namespace presspose
