#include "presspose/metrics.hpp"

#include <cmath>

#include "presspose/common.hpp"

namespace presspose {

namespace {

void check_same_shape(const HeatmapStack& a, const HeatmapStack& b) {
    if (a.t != b.t || a.j != b.j || a.h != b.h || a.w != b.w)
        fail(ErrorKind::DimMismatch, "heatmap stacks differ in shape");
}

double mse(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s / double(a.size());
}

void check_gt_range(const Keypoints& pred, const PoseSequence& gt, int frame_begin) {
    if (pred.j != gt.j) fail(ErrorKind::DimMismatch, "joint count differs from ground truth");
    if (frame_begin < 0 || frame_begin + pred.t > gt.t)
        fail(ErrorKind::DimMismatch, "frame window outside ground-truth sequence");
}

}  // namespace

double heatmap_mse(const HeatmapStack& pred, const HeatmapStack& target) {
    check_same_shape(pred, target);
    return mse(pred.heat, target.heat);
}

double depth_map_mse(const HeatmapStack& pred, const HeatmapStack& target) {
    check_same_shape(pred, target);
    return mse(pred.depth, target.depth);
}

// ============================================================
// limb-length hinge
// ============================================================

namespace {

// Shared core: returns the mean penalty; when g_kp is non-null also
// accumulates the subgradient (0 on the flat side of each kink).
double limb_loss_impl(const Keypoints& kp, const LimbStats& stats,
                      const SkeletonSpec& skel, Keypoints* g_kp) {
    const size_t limbs = skel.limbs.size();
    if (stats.lower.size() != limbs || stats.upper.size() != limbs)
        fail(ErrorKind::MissingStats, "limb stats do not cover the skeleton");
    if (kp.j != skel.num_joints())
        fail(ErrorKind::DimMismatch, "keypoints do not match the skeleton");
    if (kp.t == 0 || limbs == 0) fail(ErrorKind::BadArgument, "empty limb loss");

    const double inv = 1.0 / (double(kp.t) * double(limbs));
    double total = 0.0;
    for (int f = 0; f < kp.t; ++f) {
        for (size_t l = 0; l < limbs; ++l) {
            auto [a, b] = skel.limbs[l];
            const double* pa = kp.at(f, a);
            const double* pb = kp.at(f, b);
            double dx = pa[0] - pb[0], dy = pa[1] - pb[1], dz = pa[2] - pb[2];
            double len = std::sqrt(dx * dx + dy * dy + dz * dz);
            double sign = 0.0;
            if (len > stats.upper[l]) {
                total += (len - stats.upper[l]) * inv;
                sign = 1.0;
            } else if (len < stats.lower[l]) {
                total += (stats.lower[l] - len) * inv;
                sign = -1.0;
            }
            if (g_kp && sign != 0.0 && len > 1e-12) {
                double s = sign * inv / len;
                double* ga = g_kp->at(f, a);
                double* gb = g_kp->at(f, b);
                ga[0] += s * dx; ga[1] += s * dy; ga[2] += s * dz;
                gb[0] -= s * dx; gb[1] -= s * dy; gb[2] -= s * dz;
            }
        }
    }
    return total;
}

}  // namespace

double limb_length_loss(const Keypoints& kp, const LimbStats& stats,
                        const SkeletonSpec& skel) {
    return limb_loss_impl(kp, stats, skel, nullptr);
}

double limb_length_loss_grad(const Keypoints& kp, const LimbStats& stats,
                             const SkeletonSpec& skel, Keypoints& g_kp) {
    if (g_kp.t != kp.t || g_kp.j != kp.j)
        fail(ErrorKind::DimMismatch, "gradient buffer does not match keypoints");
    return limb_loss_impl(kp, stats, skel, &g_kp);
}

// ============================================================
// evaluation metrics
// ============================================================

double mpjpe(const Keypoints& pred, const PoseSequence& gt, int frame_begin,
             double cell_pitch_cm) {
    check_gt_range(pred, gt, frame_begin);
    double s = 0.0;
    for (int f = 0; f < pred.t; ++f)
        for (int j = 0; j < pred.j; ++j) {
            const double* p = pred.at(f, j);
            double dx = p[0] - gt.at(frame_begin + f, j, 0);
            double dy = p[1] - gt.at(frame_begin + f, j, 1);
            double dz = p[2] - gt.at(frame_begin + f, j, 2);
            s += std::sqrt(dx * dx + dy * dy + dz * dz);
        }
    return s / (double(pred.t) * pred.j) * cell_pitch_cm;
}

double pckh(const Keypoints& pred, const PoseSequence& gt, int frame_begin,
            const SkeletonSpec& skel, double alpha) {
    check_gt_range(pred, gt, frame_begin);
    if (skel.head_limb_index < 0 || skel.head_limb_index >= skel.num_limbs())
        fail(ErrorKind::BadArgument, "skeleton has no head limb");
    auto [ha, hb] = skel.limbs[size_t(skel.head_limb_index)];
    int correct = 0;
    for (int f = 0; f < pred.t; ++f) {
        const int gf = frame_begin + f;
        double head = std::hypot(double(gt.at(gf, ha, 0)) - gt.at(gf, hb, 0),
                                 double(gt.at(gf, ha, 1)) - gt.at(gf, hb, 1));
        if (head <= 0.0)
            fail(ErrorKind::BadArgument, "zero head limb length in ground truth");
        double thr = alpha * head;
        for (int j = 0; j < pred.j; ++j) {
            const double* p = pred.at(f, j);
            double err = std::hypot(p[0] - gt.at(gf, j, 0), p[1] - gt.at(gf, j, 1));
            if (err <= thr) ++correct;
        }
    }
    return 100.0 * double(correct) / (double(pred.t) * pred.j);
}

// ============================================================
// combined supervised objective
// ============================================================

LossBreakdown total_loss(const HeatmapStack& pred, const HeatmapStack& target,
                         const Keypoints& kp, const LimbStats& stats,
                         const SkeletonSpec& skel, double limb_w, double depth_w) {
    LossBreakdown out;
    out.heatmap_mse = heatmap_mse(pred, target);
    out.depth_loss = depth_map_mse(pred, target);
    out.limb_loss = limb_length_loss(kp, stats, skel);
    out.total = out.heatmap_mse + limb_w * out.limb_loss + depth_w * out.depth_loss;
    return out;
}

LossBreakdown total_loss_with_grad(const HeatmapStack& pred,
                                   const HeatmapStack& target, const Keypoints& kp,
                                   const DecodeCache& cache, const LimbStats& stats,
                                   const SkeletonSpec& skel, double limb_w,
                                   double depth_w, double beta, int stride,
                                   HeatmapStack& g_maps) {
    check_same_shape(pred, target);
    check_same_shape(pred, g_maps);
    LossBreakdown out;

    out.heatmap_mse = mse(pred.heat, target.heat);
    const double ch = 2.0 / double(pred.heat.size());
    for (size_t i = 0; i < pred.heat.size(); ++i)
        g_maps.heat[i] += ch * (pred.heat[i] - target.heat[i]);

    out.depth_loss = mse(pred.depth, target.depth);
    const double cd = depth_w * 2.0 / double(pred.depth.size());
    for (size_t i = 0; i < pred.depth.size(); ++i)
        g_maps.depth[i] += cd * (pred.depth[i] - target.depth[i]);

    Keypoints g_kp;
    g_kp.resize(kp.t, kp.j);
    out.limb_loss = limb_length_loss_grad(kp, stats, skel, g_kp);
    for (double& v : g_kp.xyz) v *= limb_w;
    decode_backward(pred, cache, beta, stride, g_kp, g_maps);

    out.total = out.heatmap_mse + limb_w * out.limb_loss + depth_w * out.depth_loss;
    return out;
}

}  // namespace presspose
