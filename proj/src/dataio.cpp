#include "presspose/dataio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "presspose/common.hpp"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace presspose {

namespace {

constexpr char kMagic[4] = {'P', 'M', 'T', '1'};

void put_u32le(std::string& out, uint32_t v) {
    out.push_back(char(v & 0xff));
    out.push_back(char((v >> 8) & 0xff));
    out.push_back(char((v >> 16) & 0xff));
    out.push_back(char((v >> 24) & 0xff));
}

void put_f32le(std::string& out, float f) { put_u32le(out, std::bit_cast<uint32_t>(f)); }

uint32_t get_u32le(const unsigned char* p) {
    return uint32_t(p[0]) | uint32_t(p[1]) << 8 | uint32_t(p[2]) << 16 |
           uint32_t(p[3]) << 24;
}

float get_f32le(const unsigned char* p) { return std::bit_cast<float>(get_u32le(p)); }

void check_invariants(const PressureSequence& pr, const PoseSequence& po,
                      const std::string& where) {
    if (pr.t <= 0 || pr.w <= 0 || pr.h <= 0 || po.j <= 0)
        fail(ErrorKind::DimMismatch, where + ": non-positive dimension");
    if (pr.t != po.t)
        fail(ErrorKind::DimMismatch, where + ": pressure frames " + std::to_string(pr.t) +
                                         " != pose frames " + std::to_string(po.t));
    if (pr.data.size() != size_t(pr.t) * pr.w * pr.h)
        fail(ErrorKind::DimMismatch, where + ": pressure payload size mismatch");
    if (po.data.size() != size_t(po.t) * po.j * 3)
        fail(ErrorKind::DimMismatch, where + ": pose payload size mismatch");
    for (float v : pr.data) {
        if (!std::isfinite(v)) fail(ErrorKind::NonFinite, where + ": non-finite pressure value");
        if (v < 0.0f)
            fail(ErrorKind::NegativePressure,
                 where + ": negative pressure value " + std::to_string(v));
    }
    for (int f = 0; f < po.t; ++f)
        for (int j = 0; j < po.j; ++j) {
            float x = po.at(f, j, 0), y = po.at(f, j, 1), z = po.at(f, j, 2);
            if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z))
                fail(ErrorKind::NonFinite, where + ": non-finite joint coordinate");
            if (x < 0.0f || x >= float(pr.w) || y < 0.0f || y >= float(pr.h))
                fail(ErrorKind::DimMismatch,
                     where + ": joint outside the sensor grid (frame " +
                         std::to_string(f) + ", joint " + std::to_string(j) + ")");
        }
}

}  // namespace

void write_sequence(const std::string& path, const PressureSequence& pressure,
                    const PoseSequence& pose) {
    check_invariants(pressure, pose, "write_sequence");
    std::string buf;
    buf.reserve(20 + 4 * (pressure.data.size() + pose.data.size()));
    buf.append(kMagic, 4);
    put_u32le(buf, uint32_t(pressure.t));
    put_u32le(buf, uint32_t(pressure.w));
    put_u32le(buf, uint32_t(pressure.h));
    put_u32le(buf, uint32_t(pose.j));
    for (float v : pressure.data) put_f32le(buf, v);
    for (float v : pose.data) put_f32le(buf, v);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path);
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) fail(ErrorKind::Io, "short write: " + path);
}

std::pair<PressureSequence, PoseSequence> read_sequence(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingFile, "cannot open sequence file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());

    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0)
        fail(ErrorKind::BadMagic, "not a PMT1 file: " + path);
    if (buf.size() < 20) fail(ErrorKind::Truncated, "header truncated: " + path);

    uint32_t t = get_u32le(p + 4), w = get_u32le(p + 8), h = get_u32le(p + 12),
             j = get_u32le(p + 16);
    if (t == 0 || w == 0 || h == 0 || j == 0 || t > (1u << 24) || w > (1u << 16) ||
        h > (1u << 16) || j > (1u << 16))
        fail(ErrorKind::DimMismatch, "implausible header dimensions: " + path);

    size_t n_press = size_t(t) * w * h, n_pose = size_t(t) * j * 3;
    size_t want = 20 + 4 * (n_press + n_pose);
    if (buf.size() < want)
        fail(ErrorKind::Truncated, "payload truncated: " + path + " (" +
                                       std::to_string(buf.size()) + " of " +
                                       std::to_string(want) + " bytes)");
    if (buf.size() > want)
        fail(ErrorKind::Truncated, "trailing bytes after payload: " + path);

    PressureSequence pr;
    pr.t = int(t);
    pr.w = int(w);
    pr.h = int(h);
    pr.data.resize(n_press);
    const unsigned char* q = p + 20;
    for (size_t i = 0; i < n_press; ++i, q += 4) pr.data[i] = get_f32le(q);
    PoseSequence po;
    po.t = int(t);
    po.j = int(j);
    po.data.resize(n_pose);
    for (size_t i = 0; i < n_pose; ++i, q += 4) po.data[i] = get_f32le(q);

    check_invariants(pr, po, path);
    return {std::move(pr), std::move(po)};
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

json skeleton_to_json(const SkeletonSpec& s) {
    json limbs = json::array();
    for (const auto& [a, b] : s.limbs) limbs.push_back({a, b});
    return {{"joint_names", s.joint_names},
            {"limbs", limbs},
            {"head_limb_index", s.head_limb_index}};
}

SkeletonSpec skeleton_from_json(const json& j) {
    SkeletonSpec s;
    j.at("joint_names").get_to(s.joint_names);
    for (const auto& pair : j.at("limbs"))
        s.limbs.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    j.at("head_limb_index").get_to(s.head_limb_index);
    return s;
}

}  // namespace

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingFile, "cannot open manifest: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        fail(ErrorKind::BadArgument, "manifest is not valid JSON: " + std::string(e.what()));
    }
    DatasetManifest m;
    try {
        j.at("format_version").get_to(m.format_version);
        j.at("grid_w").get_to(m.grid_w);
        j.at("grid_h").get_to(m.grid_h);
        j.at("num_joints").get_to(m.num_joints);
        m.skeleton = skeleton_from_json(j.at("skeleton"));
        for (const auto& e : j.at("sequences")) {
            SequenceEntry s;
            e.at("id").get_to(s.id);
            e.at("file").get_to(s.file);
            e.at("frames").get_to(s.frames);
            e.at("split").get_to(s.split);
            if (s.split != "train" && s.split != "test")
                fail(ErrorKind::BadArgument, "manifest split must be train|test: " + s.id);
            m.sequences.push_back(std::move(s));
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::BadArgument, "manifest schema error: " + std::string(e.what()));
    }
    if (m.format_version != 1)
        fail(ErrorKind::BadArgument,
             "unsupported manifest format_version " + std::to_string(m.format_version));
    std::set<std::string> ids;
    for (const auto& s : m.sequences)
        if (!ids.insert(s.id).second)
            fail(ErrorKind::BadArgument, "duplicate sequence id in manifest: " + s.id);
    return m;
}

void write_manifest(const std::string& path, const DatasetManifest& m) {
    json seqs = json::array();
    for (const auto& s : m.sequences)
        seqs.push_back({{"id", s.id}, {"file", s.file}, {"frames", s.frames}, {"split", s.split}});
    json j = {{"format_version", m.format_version},
              {"grid_w", m.grid_w},
              {"grid_h", m.grid_h},
              {"num_joints", m.num_joints},
              {"skeleton", skeleton_to_json(m.skeleton)},
              {"sequences", seqs}};
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot open for writing: " + path);
    out << j.dump(2) << "\n";
    if (!out) fail(ErrorKind::Io, "short write: " + path);
}

Dataset load_dataset(const std::string& manifest_path) {
    Dataset ds;
    ds.manifest = read_manifest(manifest_path);
    ds.dir = fs::path(manifest_path).parent_path().string();
    for (const auto& e : ds.manifest.sequences) {
        fs::path file = fs::path(ds.dir) / e.file;
        auto [pr, po] = read_sequence(file.string());
        if (pr.w != ds.manifest.grid_w || pr.h != ds.manifest.grid_h)
            fail(ErrorKind::DimMismatch, e.id + ": grid " + std::to_string(pr.w) + "x" +
                                             std::to_string(pr.h) + " does not match manifest");
        if (po.j != ds.manifest.num_joints)
            fail(ErrorKind::DimMismatch, e.id + ": joint count does not match manifest");
        if (pr.t != e.frames)
            fail(ErrorKind::DimMismatch, e.id + ": frame count does not match manifest");
        ds.sequences.push_back({e.id, e.split, std::move(pr), std::move(po)});
    }
    return ds;
}

std::vector<const LoadedSequence*> Dataset::split(const std::string& tag) const {
    std::vector<const LoadedSequence*> out;
    for (const auto& s : sequences)
        if (s.split == tag) out.push_back(&s);
    return out;
}

// ---------------------------------------------------------------------------
// Limb statistics
// ---------------------------------------------------------------------------

namespace {

double nearest_rank(std::vector<double>& sorted_values, double p) {
    // k = ceil(p*n), 1-indexed into ascending order.
    size_t n = sorted_values.size();
    size_t k = size_t(std::ceil(p * double(n)));
    if (k < 1) k = 1;
    if (k > n) k = n;
    return sorted_values[k - 1];
}

}  // namespace

LimbStats compute_limb_stats(const std::vector<const PoseSequence*>& split,
                             const SkeletonSpec& skel) {
    size_t total_frames = 0;
    for (const auto* po : split) {
        if (po->j != skel.num_joints())
            fail(ErrorKind::DimMismatch, "compute_limb_stats: pose has " +
                                             std::to_string(po->j) + " joints, skeleton has " +
                                             std::to_string(skel.num_joints()));
        total_frames += size_t(po->t);
    }
    if (total_frames == 0)
        fail(ErrorKind::BadArgument, "compute_limb_stats: no frames in split");

    LimbStats stats;
    std::vector<double> lengths;
    lengths.reserve(total_frames);
    for (const auto& [a, b] : skel.limbs) {
        lengths.clear();
        for (const auto* po : split)
            for (int f = 0; f < po->t; ++f) {
                double dx = double(po->at(f, a, 0)) - po->at(f, b, 0);
                double dy = double(po->at(f, a, 1)) - po->at(f, b, 1);
                double dz = double(po->at(f, a, 2)) - po->at(f, b, 2);
                lengths.push_back(std::sqrt(dx * dx + dy * dy + dz * dz));
            }
        std::sort(lengths.begin(), lengths.end());
        stats.lower.push_back(nearest_rank(lengths, 0.05));
        stats.upper.push_back(nearest_rank(lengths, 0.95));
    }
    return stats;
}

LimbStats compute_limb_stats(const std::vector<PoseSequence>& split,
                             const SkeletonSpec& skel) {
    std::vector<const PoseSequence*> ptrs;
    for (const auto& p : split) ptrs.push_back(&p);
    return compute_limb_stats(ptrs, skel);
}

std::string limb_stats_to_json(const LimbStats& s) {
    json j = {{"lower", s.lower}, {"upper", s.upper}};
    return j.dump(2);
}

LimbStats limb_stats_from_json(const std::string& text) {
    LimbStats s;
    try {
        json j = json::parse(text);
        j.at("lower").get_to(s.lower);
        j.at("upper").get_to(s.upper);
    } catch (const json::exception& e) {
        fail(ErrorKind::BadArgument, "limb stats schema error: " + std::string(e.what()));
    }
    if (s.lower.size() != s.upper.size())
        fail(ErrorKind::BadArgument, "limb stats lower/upper length mismatch");
    return s;
}

// ---------------------------------------------------------------------------
// Synthetic generator
// ---------------------------------------------------------------------------

void render_pressure_frame(int w, int h, const std::vector<Blob>& blobs, double sigma,
                           float* out) {
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double v = 0;
            for (const auto& b : blobs) {
                double dx = x - b.x, dy = y - b.y;
                v += b.amp * std::exp(-(dx * dx + dy * dy) * inv2s2);
            }
            out[size_t(y) * w + x] = float(v);
        }
}

namespace {

// One walking figure: smooth wandering path, swinging limbs, fixed body
// proportions scaled to the grid. Everything derives from one Rng stream so
// the whole sequence is a pure function of (seed, sequence index).
struct Walker {
    double cx0, cy0, ax, ay, wx, wy, px, py;  // center path
    double gait_w, gait_p;                    // leg/arm swing
    double scale;                             // body size, cells

    static Walker make(Rng& rng, int w, int h, int frames, double margin) {
        Walker k;
        double usable_w = (w - 1) - 2 * margin, usable_h = (h - 1) - 2 * margin;
        k.scale = 0.8 * std::min(usable_w, usable_h);
        // Widest plan-view excursion from the center (stride + half pelvis).
        double reach = 0.35 * k.scale;
        k.cx0 = (w - 1) / 2.0;
        k.cy0 = (h - 1) / 2.0;
        k.ax = std::max(0.0, usable_w / 2.0 - reach) * rng.uniform(0.5, 1.0);
        k.ay = std::max(0.0, usable_h / 2.0 - reach) * rng.uniform(0.5, 1.0);
        double two_pi = 2.0 * std::acos(-1.0);
        k.wx = two_pi * rng.uniform(0.5, 1.5) / frames;
        k.wy = two_pi * rng.uniform(0.5, 1.5) / frames;
        k.px = rng.uniform(0.0, two_pi);
        k.py = rng.uniform(0.0, two_pi);
        k.gait_w = two_pi * rng.uniform(2.0, 4.0) / frames;
        k.gait_p = rng.uniform(0.0, two_pi);
        return k;
    }

    // Joint order matches default_skeleton().
    void pose_at(int frame, float* out14x3) const {
        double t = frame;
        double cx = cx0 + ax * std::sin(wx * t + px);
        double cy = cy0 + ay * std::sin(wy * t + py);
        double vx = ax * wx * std::cos(wx * t + px);
        double vy = ay * wy * std::cos(wy * t + py);
        double theta = std::atan2(vy, vx);
        double fx = std::cos(theta), fy = std::sin(theta);   // forward
        double lx = -std::sin(theta), ly = std::cos(theta);  // lateral
        double g = gait_w * t + gait_p;

        const double S = scale;
        const double hip_w = 0.14 * S, sho_w = 0.18 * S;
        const double stride = 0.20 * S, arm = 0.14 * S;
        const double z_ank = 0.02 * S, z_kne = 0.25 * S, z_hip = 0.50 * S;
        const double z_sho = 0.80 * S, z_nck = 0.85 * S, z_hed = 0.95 * S;
        const double z_elb = 0.62 * S, z_wri = 0.45 * S;
        const double lift = 0.06 * S;

        auto set = [&](int j, double x, double y, double z) {
            out14x3[j * 3 + 0] = float(x);
            out14x3[j * 3 + 1] = float(y);
            out14x3[j * 3 + 2] = float(z);
        };

        double swing_r = std::sin(g), swing_l = std::sin(g + std::acos(-1.0));
        double hip_rx = cx - lx * hip_w / 2, hip_ry = cy - ly * hip_w / 2;
        double hip_lx = cx + lx * hip_w / 2, hip_ly = cy + ly * hip_w / 2;
        double sho_rx = cx - lx * sho_w / 2 + fx * 0.02 * S;
        double sho_ry = cy - ly * sho_w / 2 + fy * 0.02 * S;
        double sho_lx = cx + lx * sho_w / 2 + fx * 0.02 * S;
        double sho_ly = cy + ly * sho_w / 2 + fy * 0.02 * S;

        set(0, cx + fx * 0.10 * S, cy + fy * 0.10 * S, z_hed);  // head, nodded forward
        set(1, cx + fx * 0.02 * S, cy + fy * 0.02 * S, z_nck);  // neck
        set(2, sho_rx, sho_ry, z_sho);
        set(3, sho_rx + fx * arm * 0.5 * -swing_r, sho_ry + fy * arm * 0.5 * -swing_r, z_elb);
        set(4, sho_rx + fx * arm * -swing_r, sho_ry + fy * arm * -swing_r, z_wri);
        set(5, sho_lx, sho_ly, z_sho);
        set(6, sho_lx + fx * arm * 0.5 * -swing_l, sho_ly + fy * arm * 0.5 * -swing_l, z_elb);
        set(7, sho_lx + fx * arm * -swing_l, sho_ly + fy * arm * -swing_l, z_wri);
        set(8, hip_rx, hip_ry, z_hip);
        set(9, hip_rx + fx * stride * 0.5 * swing_r, hip_ry + fy * stride * 0.5 * swing_r,
            z_kne);
        set(10, hip_rx + fx * stride * swing_r, hip_ry + fy * stride * swing_r,
            z_ank + lift * std::max(0.0, swing_r));
        set(11, hip_lx, hip_ly, z_hip);
        set(12, hip_lx + fx * stride * 0.5 * swing_l, hip_ly + fy * stride * 0.5 * swing_l,
            z_kne);
        set(13, hip_lx + fx * stride * swing_l, hip_ly + fy * stride * swing_l,
            z_ank + lift * std::max(0.0, swing_l));
    }
};

std::vector<int> resolve_contacts(const SynthSpec& spec, const SkeletonSpec& skel) {
    if (!spec.contact_joints.empty()) {
        for (int j : spec.contact_joints)
            if (j < 0 || j >= skel.num_joints())
                fail(ErrorKind::BadArgument, "contact joint index out of range");
        return spec.contact_joints;
    }
    std::vector<int> out;
    for (const char* name : {"r_ankle", "l_ankle", "r_hip", "l_hip"})
        for (int j = 0; j < skel.num_joints(); ++j)
            if (skel.joint_names[j] == name) out.push_back(j);
    if (out.empty())
        for (int j = 0; j < skel.num_joints(); ++j) out.push_back(j);
    return out;
}

}  // namespace

DatasetManifest generate_synthetic(const SynthSpec& spec, const SkeletonSpec& skel,
                                   const std::string& out_dir) {
    if (spec.num_sequences <= 0)
        fail(ErrorKind::BadArgument, "generate_synthetic: zero sequences requested");
    if (spec.frames <= 0) fail(ErrorKind::BadArgument, "generate_synthetic: zero frames");
    if (std::min(spec.grid_w, spec.grid_h) < 12)
        fail(ErrorKind::BadArgument,
             "generate_synthetic: grid too small for the skeleton extent (min side 12)");
    if (skel.num_joints() != 14)
        fail(ErrorKind::BadArgument,
             "generate_synthetic: the walking-figure generator needs the 14-joint skeleton");
    if (spec.noise_std < 0) fail(ErrorKind::BadArgument, "noise_std must be non-negative");

    std::vector<int> contacts = resolve_contacts(spec, skel);
    const int w = spec.grid_w, h = spec.grid_h;
    const double margin = std::max(3.0, std::min(w, h) / 16.0);
    const double blob_sigma = 1.5;

    fs::create_directories(out_dir);
    DatasetManifest m;
    m.grid_w = w;
    m.grid_h = h;
    m.num_joints = skel.num_joints();
    m.skeleton = skel;

    for (int s = 0; s < spec.num_sequences; ++s) {
        Rng rng(mix_seed(spec.seed, uint64_t(s)));
        Walker walker = Walker::make(rng, w, h, spec.frames, margin);

        PoseSequence pose;
        pose.t = spec.frames;
        pose.j = skel.num_joints();
        pose.data.resize(size_t(pose.t) * pose.j * 3);
        PressureSequence press;
        press.t = spec.frames;
        press.w = w;
        press.h = h;
        press.data.resize(size_t(press.t) * w * h);

        std::vector<Blob> blobs(contacts.size());
        for (int f = 0; f < spec.frames; ++f) {
            walker.pose_at(f, &pose.data[size_t(f) * pose.j * 3]);
            for (size_t c = 0; c < contacts.size(); ++c) {
                int j = contacts[c];
                double z = pose.at(f, j, 2);
                blobs[c] = {pose.at(f, j, 0), pose.at(f, j, 1), 1.0 / (1.0 + std::max(0.0, z))};
            }
            float* frame = &press.data[size_t(f) * w * h];
            render_pressure_frame(w, h, blobs, blob_sigma, frame);
            if (spec.noise_std > 0)
                for (int i = 0; i < w * h; ++i)
                    frame[i] = std::max(0.0f, frame[i] + float(spec.noise_std * rng.normal()));
        }

        char id[32];
        std::snprintf(id, sizeof id, "seq_%03d", s);
        std::string file = std::string(id) + ".pmt";
        write_sequence((fs::path(out_dir) / file).string(), press, pose);
        // Every 5th sequence goes to test; exact 80/20 when count % 5 == 0.
        m.sequences.push_back({id, file, spec.frames, (s % 5 == 4) ? "test" : "train"});
    }

    write_manifest((fs::path(out_dir) / "manifest.json").string(), m);
    return m;
}

}  // namespace presspose
