#include "presspose/trainer.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "presspose/common.hpp"

namespace fs = std::filesystem;

namespace presspose {

// ============================================================
// optimizer
// ============================================================

void AdamW::update(ParamStore& ps, const GradBuffer& grads,
                   const std::vector<uint8_t>& trainable) {
    if (grads.size() != ps.size() || trainable.size() != ps.size())
        fail(ErrorKind::DimMismatch, "optimizer buffers do not match the store");
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, double(step));
    const double bc2 = 1.0 - std::pow(beta2, double(step));
    double* p = ps.data();
    for (size_t i = 0; i < ps.size(); ++i) {
        if (!trainable[i]) continue;
        const double g = grads.g[i];
        if (!std::isfinite(g))
            fail(ErrorKind::NonFinite, "non-finite gradient for " + ps.name_of(i));
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        p[i] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[i]);
    }
}

// ============================================================
// stages
// ============================================================

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::Pretrain: return "pretrain";
        case Stage::Warmup: return "warmup";
        case Stage::Finetune: return "finetune";
    }
    fail(ErrorKind::BadArgument, "unknown stage");
}

std::vector<uint8_t> trainable_mask(const ParamStore& ps, Stage stage) {
    auto in_stage = [&](const std::string& name) {
        const bool is_dec = name.starts_with("dec.");
        const bool is_head = name.starts_with("head.");
        const bool is_enc = name.starts_with("enc.");
        switch (stage) {
            case Stage::Pretrain: return !is_head;
            case Stage::Warmup: return !is_dec && !is_enc;
            case Stage::Finetune: return !is_dec;
        }
        return false;
    };
    std::vector<uint8_t> mask(ps.size(), 0);
    for (const ParamEntry& e : ps.entries())
        if (in_stage(e.name))
            std::fill_n(mask.begin() + long(e.offset), e.size, uint8_t(1));
    return mask;
}

// ============================================================
// evaluation
// ============================================================

EvalReport evaluate(const std::vector<const LoadedSequence*>& split,
                    const ModelConfig& cfg, const SkeletonSpec& skel,
                    const MapProducer& produce) {
    EvalReport rep;
    const int T = cfg.frames_t;
    double sum_mpjpe = 0.0, sum_pckh = 0.0;
    for (const LoadedSequence* s : split) {
        if (s->pressure.w != cfg.grid_w || s->pressure.h != cfg.grid_h)
            fail(ErrorKind::DimMismatch, "sequence " + s->id + " grid differs from model");
        if (s->pressure.t < T) {
            ++rep.skipped;
            continue;
        }
        SequenceEval se;
        se.id = s->id;
        for (int start = 0; start + T <= s->pressure.t; start += T) {
            HeatmapStack maps;
            produce(*s, start, maps);
            Keypoints kp = decode_keypoints(maps, cfg.softargmax_beta, cfg.heatmap_stride());
            se.mpjpe_cm += mpjpe(kp, s->pose, start, cfg.cell_pitch_cm);
            se.pckh += pckh(kp, s->pose, start, skel);
            ++se.windows;
        }
        sum_mpjpe += se.mpjpe_cm;
        sum_pckh += se.pckh;
        rep.windows += se.windows;
        se.mpjpe_cm /= se.windows;
        se.pckh /= se.windows;
        rep.rows.push_back(std::move(se));
    }
    if (rep.windows > 0) {
        rep.mpjpe_cm = sum_mpjpe / rep.windows;
        rep.pckh = sum_pckh / rep.windows;
    } else {
        rep.mpjpe_cm = EpochRow::kMissing;
        rep.pckh = EpochRow::kMissing;
    }
    return rep;
}

MapProducer model_producer(const PoseModel& model) {
    return [&model](const LoadedSequence& s, int frame_begin, HeatmapStack& maps) {
        const size_t frame_cells = size_t(s.pressure.w) * s.pressure.h;
        const float* window = s.pressure.data.data() + size_t(frame_begin) * frame_cells;
        PoseModel::SupCache cache;
        model.sup_forward(window, maps, cache);
    };
}

// ============================================================
// run directory plumbing
// ============================================================

RunLock::RunLock(const std::string& run_dir) {
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create run directory " + run_dir);
    path_ = run_dir + "/.lock";
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        if (errno == EEXIST)
            fail(ErrorKind::Locked, "run directory is locked: " + path_);
        fail(ErrorKind::Io, "cannot create lock file " + path_);
    }
    std::string pid = std::to_string(::getpid()) + "\n";
    ssize_t ignored = ::write(fd, pid.data(), pid.size());
    (void)ignored;
    ::close(fd);
}

RunLock::~RunLock() { ::unlink(path_.c_str()); }

std::string latest_checkpoint(const std::string& run_dir, Stage stage) {
    const fs::path dir = fs::path(run_dir) / stage_name(stage);
    if (!fs::exists(dir)) return "";
    int best = -1;
    fs::path best_path;
    for (const auto& ent : fs::directory_iterator(dir)) {
        const std::string name = ent.path().filename().string();
        int n = -1;
        if (std::sscanf(name.c_str(), "epoch_%d.ckpt", &n) == 1 && n > best) {
            best = n;
            best_path = ent.path();
        }
    }
    return best < 0 ? "" : best_path.string();
}

namespace {

int checkpoint_epoch(const std::string& path) {
    int n = -1;
    std::sscanf(fs::path(path).filename().string().c_str(), "epoch_%d.ckpt", &n);
    return n;
}

std::string csv_num(double v) {
    if (std::isnan(v)) return "";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

void append_report(const std::string& run_dir, const std::vector<EpochRow>& rows) {
    const fs::path path = fs::path(run_dir) / "report.csv";
    const bool fresh = !fs::exists(path);
    std::ofstream out(path, std::ios::app);
    if (!out) fail(ErrorKind::Io, "cannot open " + path.string());
    if (fresh)
        out << "run_id,stage,epoch,split,loss,heatmap_mse,limb_loss,depth_loss,"
               "mpjpe_cm,pckh\n";
    for (const EpochRow& r : rows)
        out << r.run_id << ',' << r.stage << ',' << r.epoch << ',' << r.split << ','
            << csv_num(r.loss) << ',' << csv_num(r.heatmap_mse) << ','
            << csv_num(r.limb_loss) << ',' << csv_num(r.depth_loss) << ','
            << csv_num(r.mpjpe_cm) << ',' << csv_num(r.pckh) << '\n';
    if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

// ============================================================
// stage runner
// ============================================================

namespace {

struct EpochStats {
    double loss = 0.0, heat = 0.0, limb = 0.0, depth = 0.0;
    int items = 0;

    void add(const LossBreakdown& lb) {
        loss += lb.total;
        heat += lb.heatmap_mse;
        limb += lb.limb_loss;
        depth += lb.depth_loss;
        ++items;
    }
};

}  // namespace

StageResult run_stage(PoseModel& model, const Dataset& data, const LimbStats& stats,
                      const FullConfig& cfg, Stage stage, const std::string& run_dir,
                      const std::string& run_id) {
    const ModelConfig& mc = model.cfg;
    if (data.manifest.grid_w != mc.grid_w || data.manifest.grid_h != mc.grid_h)
        fail(ErrorKind::DimMismatch, "dataset grid differs from model config");
    if (data.manifest.num_joints != mc.num_joints)
        fail(ErrorKind::DimMismatch, "dataset joints differ from model config");

    const int T = mc.frames_t;
    std::vector<const LoadedSequence*> usable;
    for (const LoadedSequence* s : data.split("train"))
        if (s->pressure.t >= T) usable.push_back(s);
    if (usable.empty())
        fail(ErrorKind::BadArgument, "no train sequence holds a full frame window");
    std::vector<const LoadedSequence*> test = data.split("test");

    int epochs = 0;
    double lr = 0.0, wd = 0.0;
    switch (stage) {
        case Stage::Pretrain:
            epochs = cfg.train.pretrain_epochs;
            lr = cfg.train.pretrain_lr;
            wd = cfg.train.pretrain_weight_decay;
            break;
        case Stage::Warmup:
            epochs = cfg.train.warmup_epochs;
            lr = cfg.train.warmup_lr;
            wd = cfg.train.supervised_weight_decay;
            break;
        case Stage::Finetune:
            epochs = cfg.train.finetune_epochs;
            lr = cfg.train.finetune_lr;
            wd = cfg.train.supervised_weight_decay;
            break;
    }

    const std::string sname = stage_name(stage);
    const fs::path stage_dir = fs::path(run_dir) / sname;
    std::error_code ec;
    fs::create_directories(stage_dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create " + stage_dir.string());

    StageResult res;
    const std::string resume_from = latest_checkpoint(run_dir, stage);
    if (!resume_from.empty()) {
        restore_all(model.ps, load_checkpoint(resume_from));
        res.start_epoch = checkpoint_epoch(resume_from);
        res.final_checkpoint = resume_from;
    }

    const std::vector<uint8_t> trainable = trainable_mask(model.ps, stage);
    AdamW opt(model.ps.size(), lr, wd);
    GradBuffer grads(model.ps.size());

    const std::string provenance_base = config_to_json(cfg);
    const double beta = mc.softargmax_beta;
    const int stride = mc.heatmap_stride();
    const int batch = std::max(1, cfg.train.batch_size);
    const size_t frame_cells = size_t(mc.grid_h) * mc.grid_w;

    for (int e = res.start_epoch + 1; e <= epochs; ++e) {
        Rng rng(mix_seed(cfg.train.rng_seed,
                         mix_seed(uint64_t(stage) + 1, uint64_t(e))));
        std::vector<std::pair<const LoadedSequence*, int>> items;
        items.reserve(usable.size());
        for (const LoadedSequence* s : usable)
            items.emplace_back(s, int(rng.below(uint64_t(s->pressure.t - T + 1))));

        EpochStats ep;
        uint64_t mask_counter = 0;
        for (size_t b0 = 0; b0 < items.size(); b0 += size_t(batch)) {
            const size_t b1 = std::min(items.size(), b0 + size_t(batch));
            grads.zero();
            for (size_t i = b0; i < b1; ++i) {
                const LoadedSequence* s = items[i].first;
                const int start = items[i].second;
                const float* window = s->pressure.data.data() + size_t(start) * frame_cells;
                if (stage == Stage::Pretrain) {
                    const uint64_t mseed = mix_seed(
                        mix_seed(cfg.train.rng_seed, 0x6d61736bULL),
                        mix_seed(uint64_t(e), mask_counter++));
                    MaskSpec mask = sample_mask(mc.token_count(),
                                                cfg.train.mask_ratio, mseed);
                    PoseModel::MaeCache cache;
                    const double loss = model.mae_forward(window, mask, cache);
                    if (!std::isfinite(loss))
                        fail(ErrorKind::NonFinite, "pretrain loss is not finite");
                    model.mae_backward(cache, grads);
                    LossBreakdown lb;
                    lb.total = loss;
                    ep.add(lb);
                } else {
                    PoseModel::SupCache cache;
                    HeatmapStack maps;
                    model.sup_forward(window, maps, cache);
                    RenderResult target =
                        render_target_heatmaps(s->pose, start, T, mc);
                    DecodeCache dc;
                    Keypoints kp = decode_keypoints(maps, beta, stride, &dc);
                    HeatmapStack g_maps;
                    g_maps.resize(maps.t, maps.j, maps.h, maps.w);
                    LossBreakdown lb = total_loss_with_grad(
                        maps, target.maps, kp, dc, stats, data.manifest.skeleton,
                        cfg.train.limb_loss_weight, cfg.train.depth_loss_weight,
                        beta, stride, g_maps);
                    if (!std::isfinite(lb.total))
                        fail(ErrorKind::NonFinite, "training loss is not finite");
                    model.sup_backward(cache, g_maps, grads);
                    ep.add(lb);
                }
            }
            const double scale = 1.0 / double(b1 - b0);
            for (double& g : grads.g) g *= scale;
            opt.update(model.ps, grads, trainable);
        }

        EpochRow train_row;
        train_row.run_id = run_id;
        train_row.stage = sname;
        train_row.split = "train";
        train_row.epoch = e;
        train_row.loss = ep.loss / ep.items;
        if (stage != Stage::Pretrain) {
            train_row.heatmap_mse = ep.heat / ep.items;
            train_row.limb_loss = ep.limb / ep.items;
            train_row.depth_loss = ep.depth / ep.items;
        }
        res.rows.push_back(train_row);

        if (stage != Stage::Pretrain && !test.empty()) {
            EvalReport ev = evaluate(test, mc, data.manifest.skeleton,
                                     model_producer(model));
            EpochRow test_row;
            test_row.run_id = run_id;
            test_row.stage = sname;
            test_row.split = "test";
            test_row.epoch = e;
            test_row.mpjpe_cm = ev.mpjpe_cm;
            test_row.pckh = ev.pckh;
            res.rows.push_back(test_row);
        }

        const std::string prov = "{\"run_id\":\"" + run_id + "\",\"epoch\":" +
                                 std::to_string(e) + ",\"config\":" +
                                 provenance_base + "}";
        const std::string ckpt_path =
            (stage_dir / ("epoch_" + std::to_string(e) + ".ckpt")).string();
        save_checkpoint(ckpt_path, model.ps, sname, prov);
        res.final_checkpoint = ckpt_path;
    }
    return res;
}

}  // namespace presspose
