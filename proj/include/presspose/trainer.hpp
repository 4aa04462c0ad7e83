#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "presspose/config.hpp"
#include "presspose/dataio.hpp"
#include "presspose/metrics.hpp"
#include "presspose/model.hpp"

namespace presspose {

// Decoupled-weight-decay Adam over a flat parameter buffer. Parameters whose
// trainable flag is 0 are never read or written, so frozen weights stay
// bit-identical.
struct AdamW {
    double lr = 1e-3, weight_decay = 0.0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int64_t step = 0;
    std::vector<double> m, v;

    AdamW(size_t n, double lr_, double wd)
        : lr(lr_), weight_decay(wd), m(n, 0.0), v(n, 0.0) {}

    // A non-finite gradient on a trainable parameter aborts, naming it.
    void update(ParamStore& ps, const GradBuffer& grads,
                const std::vector<uint8_t>& trainable);
};

enum class Stage { Pretrain, Warmup, Finetune };
const char* stage_name(Stage s);

// Per-parameter trainable flags for a stage. Pretrain updates the patching
// block, trunk, and reconstruction decoder; warmup only the patching block
// and regression head; finetune everything except the decoder.
std::vector<uint8_t> trainable_mask(const ParamStore& ps, Stage stage);

// One report.csv row. NaN fields print as empty cells.
struct EpochRow {
    static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

    std::string run_id, stage, split;
    int epoch = 0;
    double loss = kMissing, heatmap_mse = kMissing, limb_loss = kMissing,
           depth_loss = kMissing, mpjpe_cm = kMissing, pckh = kMissing;
};

struct SequenceEval {
    std::string id;
    int windows = 0;
    double mpjpe_cm = 0.0, pckh = 0.0;
};

struct EvalReport {
    double mpjpe_cm = 0.0, pckh = 0.0;
    int windows = 0;
    int skipped = 0;  // sequences shorter than one window
    std::vector<SequenceEval> rows;
};

// Fills maps for gt.pressure frames [frame_begin, frame_begin + frames_t).
using MapProducer =
    std::function<void(const LoadedSequence&, int frame_begin, HeatmapStack&)>;

// Forward-only evaluation over non-overlapping windows of each sequence.
EvalReport evaluate(const std::vector<const LoadedSequence*>& split,
                    const ModelConfig& cfg, const SkeletonSpec& skel,
                    const MapProducer& produce);

MapProducer model_producer(const PoseModel& model);

// Exclusive lock on a run directory (created if needed); throws Locked if
// another writer holds it.
class RunLock {
public:
    explicit RunLock(const std::string& run_dir);
    ~RunLock();
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    std::string path_;
};

struct StageResult {
    std::vector<EpochRow> rows;       // appended to report.csv by the caller
    std::string final_checkpoint;     // path of the last epoch's checkpoint
    int start_epoch = 0;              // first epoch actually run (resume > 0)
};

// Runs one stage: per epoch, one random training window per usable train
// sequence, batched; AdamW on the stage's trainable set; checkpoint per
// epoch under {run_dir}/{stage}/epoch_{n}.ckpt. Resumes from the newest
// epoch checkpoint when one exists (training windows are re-derived from
// (seed, stage, epoch), so a resumed run sees the same draws).
StageResult run_stage(PoseModel& model, const Dataset& data, const LimbStats& stats,
                      const FullConfig& cfg, Stage stage, const std::string& run_dir,
                      const std::string& run_id);

// Appends rows to {run_dir}/report.csv, writing the header first if new.
void append_report(const std::string& run_dir, const std::vector<EpochRow>& rows);

// Newest epoch checkpoint under {run_dir}/{stage}, or "" if none.
std::string latest_checkpoint(const std::string& run_dir, Stage stage);

}  // namespace presspose
