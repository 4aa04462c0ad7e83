#pragma once

#include "presspose/config.hpp"
#include "presspose/dataio.hpp"
#include "presspose/pose_head.hpp"

namespace presspose {

struct LossBreakdown {
    double heatmap_mse = 0.0;
    double limb_loss = 0.0;
    double depth_loss = 0.0;
    double total = 0.0;
};

// Mean squared error over all heatmap (resp. depth map) elements.
double heatmap_mse(const HeatmapStack& pred, const HeatmapStack& target);
double depth_map_mse(const HeatmapStack& pred, const HeatmapStack& target);

// Per frame and limb, the 3D limb length is penalized by how far it falls
// outside [lower, upper]; lengths on or inside the bounds cost 0. Mean over
// frames x limbs.
double limb_length_loss(const Keypoints& kp, const LimbStats& stats,
                        const SkeletonSpec& skel);

// Same value, and accumulates d(loss)/d(kp) into g_kp (must be presized).
// Subgradient at the hinge kinks is 0.
double limb_length_loss_grad(const Keypoints& kp, const LimbStats& stats,
                             const SkeletonSpec& skel, Keypoints& g_kp);

// Mean 3D joint error in cm. pred frame f corresponds to gt frame
// frame_begin + f.
double mpjpe(const Keypoints& pred, const PoseSequence& gt, int frame_begin,
             double cell_pitch_cm);

// Percentage of joints whose 2D error is within alpha x the ground-truth head
// limb 2D length of their frame. Ties count as correct.
double pckh(const Keypoints& pred, const PoseSequence& gt, int frame_begin,
            const SkeletonSpec& skel, double alpha = 0.5);

// total = heatmap_mse + limb_w * limb_loss + depth_w * depth_loss, where the
// depth term is the MSE between predicted and target depth maps and the limb
// term reads kp decoded from pred.
LossBreakdown total_loss(const HeatmapStack& pred, const HeatmapStack& target,
                         const Keypoints& kp, const LimbStats& stats,
                         const SkeletonSpec& skel, double limb_w, double depth_w);

// total_loss plus its gradient w.r.t. the predicted maps, routed through the
// soft-argmax decode (kp and cache must come from decode_keypoints on pred
// with the same beta/stride). Accumulates into g_maps.
LossBreakdown total_loss_with_grad(const HeatmapStack& pred,
                                   const HeatmapStack& target, const Keypoints& kp,
                                   const DecodeCache& cache, const LimbStats& stats,
                                   const SkeletonSpec& skel, double limb_w,
                                   double depth_w, double beta, int stride,
                                   HeatmapStack& g_maps);

}  // namespace presspose
