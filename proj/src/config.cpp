#include "presspose/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "presspose/common.hpp"
#include "json.hpp"

using nlohmann::json;

namespace presspose {

SkeletonSpec default_skeleton() {
    SkeletonSpec s;
    s.joint_names = {"head",    "neck",    "r_shoulder", "r_elbow", "r_wrist",
                     "l_shoulder", "l_elbow", "l_wrist",    "r_hip",   "r_knee",
                     "r_ankle", "l_hip",   "l_knee",     "l_ankle"};
    s.limbs = {
        {1, 0},    // neck -> head (PCKh reference)
        {1, 2},  {2, 3},  {3, 4},    // right arm
        {1, 5},  {5, 6},  {6, 7},    // left arm
        {1, 8},  {8, 9},  {9, 10},   // right leg
        {1, 11}, {11, 12}, {12, 13}, // left leg
    };
    s.head_limb_index = 0;
    return s;
}

std::string ValidationReport::to_string() const {
    if (ok()) return "ok";
    std::ostringstream os;
    for (size_t i = 0; i < issues.size(); ++i) {
        if (i) os << "; ";
        os << issues[i].field << ": " << issues[i].message;
    }
    return os.str();
}

namespace {

void issue(ValidationReport& r, const std::string& field, const std::string& msg) {
    r.issues.push_back({field, msg});
}

}  // namespace

ValidationReport validate_config(const ModelConfig& m, const TrainConfig& t,
                                 const SkeletonSpec& skel) {
    ValidationReport r;

    if (m.grid_w <= 0) issue(r, "grid_w", "must be positive");
    if (m.grid_h <= 0) issue(r, "grid_h", "must be positive");
    if (m.frames_t <= 0) issue(r, "frames_t", "must be positive");
    if (m.spatial_crop <= 0) issue(r, "spatial_crop", "must be positive");
    if (m.temporal_crop <= 0) issue(r, "temporal_crop", "must be positive");
    if (m.embed_dim <= 0) issue(r, "embed_dim", "must be positive");
    if (m.num_heads <= 0) issue(r, "num_heads", "must be positive");
    if (m.ffn_ratio <= 0) issue(r, "ffn_ratio", "must be positive");
    if (m.encoder_depth < 0) issue(r, "encoder_depth", "must be non-negative");
    if (m.decoder_depth < 0) issue(r, "decoder_depth", "must be non-negative");
    if (m.decoder_dim <= 0) issue(r, "decoder_dim", "must be positive");
    if (m.decoder_heads <= 0) issue(r, "decoder_heads", "must be positive");
    if (m.num_joints <= 0) issue(r, "num_joints", "must be positive");
    if (m.head_channels <= 0) issue(r, "head_channels", "must be positive");
    if (!(m.heatmap_sigma > 0)) issue(r, "heatmap_sigma", "must be positive");
    if (!(m.softargmax_beta > 0)) issue(r, "softargmax_beta", "must be positive");
    if (!(m.cell_pitch_cm > 0)) issue(r, "cell_pitch_cm", "must be positive");

    if (m.spatial_crop > 0) {
        if (m.grid_w % m.spatial_crop != 0)
            issue(r, "grid_w", "not divisible by spatial_crop");
        if (m.grid_h % m.spatial_crop != 0)
            issue(r, "grid_h", "not divisible by spatial_crop");
    }
    if (m.temporal_crop > 0 && m.frames_t % m.temporal_crop != 0)
        issue(r, "frames_t", "not divisible by temporal_crop");
    if (m.num_heads > 0 && m.embed_dim % m.num_heads != 0)
        issue(r, "embed_dim", "not divisible by num_heads");
    if (m.decoder_heads > 0 && m.decoder_dim % m.decoder_heads != 0)
        issue(r, "decoder_dim", "not divisible by decoder_heads");

    if (m.strict_geometry) {
        // Two x2 deconvolutions must map grid/d onto grid/4.
        if (m.spatial_crop != 16)
            issue(r, "spatial_crop", "strict geometry requires spatial_crop == 16");
        if (m.decoder_depth != 4)
            issue(r, "decoder_depth", "strict geometry requires decoder_depth == 4");
        if (m.decoder_dim != 256)
            issue(r, "decoder_dim", "strict geometry requires decoder_dim == 256");
    } else if (m.spatial_crop > 0 && m.spatial_crop % 4 != 0) {
        issue(r, "spatial_crop", "must be divisible by 4 (two x2 up-samplings)");
    }

    const int J = skel.num_joints();
    if (J <= 0) issue(r, "skeleton.joint_names", "must not be empty");
    if (m.num_joints != J)
        issue(r, "num_joints", "does not match skeleton joint count");
    std::set<std::pair<int, int>> seen;
    for (size_t i = 0; i < skel.limbs.size(); ++i) {
        const auto& [a, b] = skel.limbs[i];
        const std::string field = "skeleton.limbs[" + std::to_string(i) + "]";
        if (a < 0 || a >= J || b < 0 || b >= J)
            issue(r, field, "endpoint out of range");
        if (a == b) issue(r, field, "connects a joint to itself");
        auto key = std::minmax(a, b);
        if (!seen.insert({key.first, key.second}).second)
            issue(r, field, "duplicate limb pair");
    }
    if (skel.head_limb_index < 0 || skel.head_limb_index >= skel.num_limbs())
        issue(r, "skeleton.head_limb_index", "out of range");

    if (!(t.mask_ratio > 0.0 && t.mask_ratio < 1.0))
        issue(r, "mask_ratio", "must be in (0, 1)");
    if (!(t.pretrain_lr > 0)) issue(r, "pretrain_lr", "must be positive");
    if (!(t.warmup_lr > 0)) issue(r, "warmup_lr", "must be positive");
    if (!(t.finetune_lr > 0)) issue(r, "finetune_lr", "must be positive");
    if (t.pretrain_epochs < 0) issue(r, "pretrain_epochs", "must be non-negative");
    if (t.warmup_epochs < 0) issue(r, "warmup_epochs", "must be non-negative");
    if (t.finetune_epochs < 0) issue(r, "finetune_epochs", "must be non-negative");
    if (t.pretrain_weight_decay < 0)
        issue(r, "pretrain_weight_decay", "must be non-negative");
    if (t.supervised_weight_decay < 0)
        issue(r, "supervised_weight_decay", "must be non-negative");
    if (t.limb_loss_weight < 0) issue(r, "limb_loss_weight", "must be non-negative");
    if (t.depth_loss_weight < 0) issue(r, "depth_loss_weight", "must be non-negative");
    if (t.batch_size <= 0) issue(r, "batch_size", "must be positive");

    return r;
}

namespace {

uint64_t linear_params(uint64_t in, uint64_t out) { return in * out + out; }

uint64_t block_params(uint64_t c, uint64_t r) {
    // LN1 + QKV + attn-out + LN2 + FFN(in)/FFN(out): (4+2r)C^2 + (9+r)C.
    return 2 * c + 3 * linear_params(c, c) + linear_params(c, c) + 2 * c +
           linear_params(c, r * c) + linear_params(r * c, c);
}

}  // namespace

uint64_t param_count(const ModelConfig& m) {
    auto rep = validate_config(m, TrainConfig{}, default_skeleton());
    // Only geometry matters here; joint-count mismatches with the default
    // skeleton are fine.
    for (const auto& is : rep.issues)
        if (is.field.rfind("skeleton", 0) != 0 && is.field != "num_joints")
            fail(ErrorKind::BadArgument, "param_count: invalid config: " + rep.to_string());

    const uint64_t C = m.embed_dim, d = m.spatial_crop, dt = m.temporal_crop;
    const uint64_t N = m.token_count(), hc = m.head_channels, J = m.num_joints;

    uint64_t tok = C * d * d + C            // spatial conv
                   + dt * C * C + C        // temporal conv
                   + linear_params(C, C)   // projection
                   + N * C;                // positional embeddings
    uint64_t enc = uint64_t(m.encoder_depth) * block_params(C, m.ffn_ratio);
    uint64_t maps = 2 * dt * J;            // heatmap + depth channels
    uint64_t head = 16 * C * hc + hc + 2 * hc     // deconv1 + LN
                    + 16 * hc * hc + hc + 2 * hc  // deconv2 + LN
                    + linear_params(hc, maps);    // 1x1 conv
    return tok + enc + head;
}

uint64_t param_count_decoder(const ModelConfig& m) {
    const uint64_t C = m.embed_dim, D = m.decoder_dim;
    const uint64_t N = m.token_count(), cube = m.cube_size();
    return linear_params(C, D)                                    // latent projection
           + D                                                    // mask token
           + N * D                                                // decoder pos embeds
           + uint64_t(m.decoder_depth) * block_params(D, m.ffn_ratio)
           + linear_params(D, cube);                              // pixel head
}

// ---------------------------------------------------------------------------
// JSON round-trip
// ---------------------------------------------------------------------------

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!known.count(it.key()))
            fail(ErrorKind::BadArgument,
                 "unknown config key \"" + it.key() + "\" in " + where);
}

template <typename T>
void get_to(const json& obj, const char* key, T& out) {
    if (auto it = obj.find(key); it != obj.end()) it->get_to(out);
}

void parse_model(const json& j, ModelConfig& m) {
    static const std::set<std::string> known = {
        "grid_w", "grid_h", "frames_t", "spatial_crop", "temporal_crop",
        "embed_dim", "encoder_depth", "num_heads", "ffn_ratio", "decoder_depth",
        "decoder_dim", "decoder_heads", "num_joints", "head_channels",
        "heatmap_sigma", "softargmax_beta", "cell_pitch_cm", "strict_geometry"};
    reject_unknown(j, known, "model");
    get_to(j, "grid_w", m.grid_w);
    get_to(j, "grid_h", m.grid_h);
    get_to(j, "frames_t", m.frames_t);
    get_to(j, "spatial_crop", m.spatial_crop);
    get_to(j, "temporal_crop", m.temporal_crop);
    get_to(j, "embed_dim", m.embed_dim);
    get_to(j, "encoder_depth", m.encoder_depth);
    get_to(j, "num_heads", m.num_heads);
    get_to(j, "ffn_ratio", m.ffn_ratio);
    get_to(j, "decoder_depth", m.decoder_depth);
    get_to(j, "decoder_dim", m.decoder_dim);
    get_to(j, "decoder_heads", m.decoder_heads);
    get_to(j, "num_joints", m.num_joints);
    get_to(j, "head_channels", m.head_channels);
    get_to(j, "heatmap_sigma", m.heatmap_sigma);
    get_to(j, "softargmax_beta", m.softargmax_beta);
    get_to(j, "cell_pitch_cm", m.cell_pitch_cm);
    get_to(j, "strict_geometry", m.strict_geometry);
}

void parse_train(const json& j, TrainConfig& t) {
    static const std::set<std::string> known = {
        "mask_ratio", "pretrain_lr", "pretrain_epochs", "pretrain_weight_decay",
        "warmup_lr", "warmup_epochs", "finetune_lr", "finetune_epochs",
        "supervised_weight_decay", "limb_loss_weight", "depth_loss_weight",
        "batch_size", "rng_seed"};
    reject_unknown(j, known, "train");
    get_to(j, "mask_ratio", t.mask_ratio);
    get_to(j, "pretrain_lr", t.pretrain_lr);
    get_to(j, "pretrain_epochs", t.pretrain_epochs);
    get_to(j, "pretrain_weight_decay", t.pretrain_weight_decay);
    get_to(j, "warmup_lr", t.warmup_lr);
    get_to(j, "warmup_epochs", t.warmup_epochs);
    get_to(j, "finetune_lr", t.finetune_lr);
    get_to(j, "finetune_epochs", t.finetune_epochs);
    get_to(j, "supervised_weight_decay", t.supervised_weight_decay);
    get_to(j, "limb_loss_weight", t.limb_loss_weight);
    get_to(j, "depth_loss_weight", t.depth_loss_weight);
    get_to(j, "batch_size", t.batch_size);
    get_to(j, "rng_seed", t.rng_seed);
}

void parse_skeleton(const json& j, SkeletonSpec& s) {
    static const std::set<std::string> known = {"joint_names", "limbs",
                                                "head_limb_index"};
    reject_unknown(j, known, "skeleton");
    get_to(j, "joint_names", s.joint_names);
    if (auto it = j.find("limbs"); it != j.end()) {
        s.limbs.clear();
        for (const auto& pair : *it) {
            if (!pair.is_array() || pair.size() != 2)
                fail(ErrorKind::BadArgument, "skeleton.limbs entries must be [parent, child]");
            s.limbs.emplace_back(pair[0].get<int>(), pair[1].get<int>());
        }
    }
    get_to(j, "head_limb_index", s.head_limb_index);
}

void parse_synth(const json& j, SynthSpec& s) {
    static const std::set<std::string> known = {"num_sequences", "frames", "grid_w",
                                                "grid_h", "seed", "noise_std",
                                                "contact_joints"};
    reject_unknown(j, known, "synth");
    get_to(j, "num_sequences", s.num_sequences);
    get_to(j, "frames", s.frames);
    get_to(j, "grid_w", s.grid_w);
    get_to(j, "grid_h", s.grid_h);
    get_to(j, "seed", s.seed);
    get_to(j, "noise_std", s.noise_std);
    get_to(j, "contact_joints", s.contact_joints);
}

}  // namespace

FullConfig load_config_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::BadArgument, std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) fail(ErrorKind::BadArgument, "config root must be an object");
    static const std::set<std::string> known = {"model", "train", "skeleton", "synth"};
    reject_unknown(j, known, "config root");

    FullConfig cfg;
    try {
        if (j.contains("model")) parse_model(j["model"], cfg.model);
        if (j.contains("train")) parse_train(j["train"], cfg.train);
        if (j.contains("skeleton")) parse_skeleton(j["skeleton"], cfg.skeleton);
        if (j.contains("synth")) parse_synth(j["synth"], cfg.synth);
    } catch (const json::exception& e) {
        fail(ErrorKind::BadArgument, std::string("config field has wrong type: ") + e.what());
    }
    return cfg;
}

FullConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::MissingFile, "cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return load_config_json(ss.str());
}

std::string config_to_json(const FullConfig& cfg) {
    json m = {{"grid_w", cfg.model.grid_w},
              {"grid_h", cfg.model.grid_h},
              {"frames_t", cfg.model.frames_t},
              {"spatial_crop", cfg.model.spatial_crop},
              {"temporal_crop", cfg.model.temporal_crop},
              {"embed_dim", cfg.model.embed_dim},
              {"encoder_depth", cfg.model.encoder_depth},
              {"num_heads", cfg.model.num_heads},
              {"ffn_ratio", cfg.model.ffn_ratio},
              {"decoder_depth", cfg.model.decoder_depth},
              {"decoder_dim", cfg.model.decoder_dim},
              {"decoder_heads", cfg.model.decoder_heads},
              {"num_joints", cfg.model.num_joints},
              {"head_channels", cfg.model.head_channels},
              {"heatmap_sigma", cfg.model.heatmap_sigma},
              {"softargmax_beta", cfg.model.softargmax_beta},
              {"cell_pitch_cm", cfg.model.cell_pitch_cm},
              {"strict_geometry", cfg.model.strict_geometry}};
    json t = {{"mask_ratio", cfg.train.mask_ratio},
              {"pretrain_lr", cfg.train.pretrain_lr},
              {"pretrain_epochs", cfg.train.pretrain_epochs},
              {"pretrain_weight_decay", cfg.train.pretrain_weight_decay},
              {"warmup_lr", cfg.train.warmup_lr},
              {"warmup_epochs", cfg.train.warmup_epochs},
              {"finetune_lr", cfg.train.finetune_lr},
              {"finetune_epochs", cfg.train.finetune_epochs},
              {"supervised_weight_decay", cfg.train.supervised_weight_decay},
              {"limb_loss_weight", cfg.train.limb_loss_weight},
              {"depth_loss_weight", cfg.train.depth_loss_weight},
              {"batch_size", cfg.train.batch_size},
              {"rng_seed", cfg.train.rng_seed}};
    json limbs = json::array();
    for (const auto& [a, b] : cfg.skeleton.limbs) limbs.push_back({a, b});
    json s = {{"joint_names", cfg.skeleton.joint_names},
              {"limbs", limbs},
              {"head_limb_index", cfg.skeleton.head_limb_index}};
    json sy = {{"num_sequences", cfg.synth.num_sequences},
               {"frames", cfg.synth.frames},
               {"grid_w", cfg.synth.grid_w},
               {"grid_h", cfg.synth.grid_h},
               {"seed", cfg.synth.seed},
               {"noise_std", cfg.synth.noise_std},
               {"contact_joints", cfg.synth.contact_joints}};
    json root = {{"model", m}, {"train", t}, {"skeleton", s}, {"synth", sy}};
    return root.dump(2);
}

}  // namespace presspose
