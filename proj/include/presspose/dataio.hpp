#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "presspose/config.hpp"

namespace presspose {

// T frames of W x H pressure, frame-major, row-major within a frame.
struct PressureSequence {
    int t = 0, w = 0, h = 0;
    std::vector<float> data;  // t*w*h values, index [f*(w*h) + y*w + x]

    float& at(int f, int y, int x) { return data[size_t(f) * w * h + size_t(y) * w + x]; }
    float at(int f, int y, int x) const { return data[size_t(f) * w * h + size_t(y) * w + x]; }
};

// T frames of J joints, (x, y) in sensor cells, z in cells above the surface.
struct PoseSequence {
    int t = 0, j = 0;
    std::vector<float> data;  // t*j*3 values, index [(f*j + joint)*3 + axis]

    float& at(int f, int joint, int axis) { return data[(size_t(f) * j + joint) * 3 + axis]; }
    float at(int f, int joint, int axis) const { return data[(size_t(f) * j + joint) * 3 + axis]; }
};

// Per-limb 5th/95th percentile lengths in cells, aligned with SkeletonSpec.limbs.
struct LimbStats {
    std::vector<double> lower;
    std::vector<double> upper;
};

struct SequenceEntry {
    std::string id;
    std::string file;  // relative to the manifest's directory
    int frames = 0;
    std::string split;  // "train" | "test"
};

struct DatasetManifest {
    int format_version = 1;
    int grid_w = 0, grid_h = 0, num_joints = 0;
    SkeletonSpec skeleton;
    std::vector<SequenceEntry> sequences;
};

struct LoadedSequence {
    std::string id;
    std::string split;
    PressureSequence pressure;
    PoseSequence pose;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<LoadedSequence> sequences;  // manifest order
    std::string dir;

    std::vector<const LoadedSequence*> split(const std::string& tag) const;
};

// Binary sequence file: "PMT1", u32le T,W,H,J, then T*W*H f32le pressure,
// then T*J*3 f32le pose. Writing validates the sequence invariants; reading
// re-checks them so a corrupt file never enters the pipeline.
void write_sequence(const std::string& path, const PressureSequence& pressure,
                    const PoseSequence& pose);
std::pair<PressureSequence, PoseSequence> read_sequence(const std::string& path);

// manifest.json in/out. read checks id uniqueness only; load_dataset also
// opens every file and cross-checks its header against the manifest.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const DatasetManifest& m);
Dataset load_dataset(const std::string& manifest_path);

// Nearest-rank percentiles (k = ceil(p*n), 1-indexed) of 3D limb lengths
// pooled over every frame of every sequence.
LimbStats compute_limb_stats(const std::vector<const PoseSequence*>& split,
                             const SkeletonSpec& skel);
LimbStats compute_limb_stats(const std::vector<PoseSequence>& split,
                             const SkeletonSpec& skel);

std::string limb_stats_to_json(const LimbStats& s);
LimbStats limb_stats_from_json(const std::string& text);

// One pressure frame as a sum of Gaussian blobs, exposed for tests.
struct Blob {
    double x, y, amp;
};
void render_pressure_frame(int w, int h, const std::vector<Blob>& blobs, double sigma,
                           float* out);

// Deterministic walking-figure dataset: writes seq_*.pmt plus manifest.json
// into out_dir and returns the manifest. ~80/20 train/test split by sequence.
DatasetManifest generate_synthetic(const SynthSpec& spec, const SkeletonSpec& skel,
                                   const std::string& out_dir);

}  // namespace presspose
