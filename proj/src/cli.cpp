#include "presspose/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "presspose/common.hpp"
#include "presspose/config.hpp"
#include "presspose/dataio.hpp"
#include "presspose/model.hpp"
#include "presspose/params.hpp"
#include "presspose/pose_head.hpp"
#include "presspose/trainer.hpp"

namespace presspose {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// Validation-shaped failures exit 1; anything filesystem-shaped exits 2.
int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io:
        case ErrorKind::MissingFile:
        case ErrorKind::Truncated:
        case ErrorKind::BadMagic:
        case ErrorKind::Locked:
        case ErrorKind::MissingCheckpoint:
            return 2;
        default:
            return 1;
    }
}

// Flag values shared across subcommands. A flag only overrides the config
// value when it was actually given.
struct CommonOpts {
    std::string config, manifest, out, stage;
    uint64_t seed = 0;
    bool seed_set = false;
    bool from_scratch = false;
    bool json_out = false;
};

FullConfig config_or_default(const CommonOpts& o) {
    return o.config.empty() ? FullConfig{} : load_config_file(o.config);
}

// Exit-1 path for a config that parses but violates invariants.
void require_valid(const FullConfig& cfg) {
    ValidationReport rep = validate_config(cfg.model, cfg.train, cfg.skeleton);
    if (!rep.ok()) fail(ErrorKind::BadArgument, "invalid config:\n" + rep.to_string());
}

std::string run_id_for(const FullConfig& cfg) {
    return "seed-" + std::to_string(cfg.train.rng_seed);
}

Dataset load_data(const CommonOpts& o) { return load_dataset(o.manifest); }

LimbStats stats_for(const Dataset& data) {
    std::vector<const PoseSequence*> poses;
    for (const LoadedSequence* s : data.split("train")) poses.push_back(&s->pose);
    return compute_limb_stats(poses, data.manifest.skeleton);
}

void check_data_matches(const Dataset& data, const ModelConfig& mc) {
    if (data.manifest.grid_w != mc.grid_w || data.manifest.grid_h != mc.grid_h)
        fail(ErrorKind::DimMismatch, "dataset grid differs from model config");
    if (data.manifest.num_joints != mc.num_joints)
        fail(ErrorKind::DimMismatch, "dataset joints differ from model config");
}

// Newest supervised checkpoint of a run: finetune beats warmup.
std::string supervised_checkpoint(const std::string& run_dir) {
    std::string ck = latest_checkpoint(run_dir, Stage::Finetune);
    if (ck.empty()) ck = latest_checkpoint(run_dir, Stage::Warmup);
    if (ck.empty())
        fail(ErrorKind::MissingCheckpoint,
             "no warmup or finetune checkpoint under " + run_dir);
    return ck;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

// === subcommand runners ===

int run_gen_data(const CommonOpts& o, std::ostream& out) {
    FullConfig cfg = config_or_default(o);
    if (o.seed_set) cfg.synth.seed = o.seed;
    DatasetManifest m = generate_synthetic(cfg.synth, cfg.skeleton, o.out);
    int train = 0, test = 0;
    for (const SequenceEntry& s : m.sequences) (s.split == "train" ? train : test)++;
    if (o.json_out) {
        json j = {{"dir", o.out},
                  {"sequences", m.sequences.size()},
                  {"train", train},
                  {"test", test},
                  {"seed", cfg.synth.seed}};
        out << j.dump(2) << "\n";
    } else {
        out << "wrote " << m.sequences.size() << " sequences (" << train
            << " train, " << test << " test) under " << o.out << "\n";
    }
    return 0;
}

void summarize_stage(const StageResult& res, Stage stage, const CommonOpts& o,
                     json& stages, std::ostream& out) {
    int ran = 0;
    double last_loss = EpochRow::kMissing;
    for (const EpochRow& r : res.rows)
        if (r.split == "train") {
            ++ran;
            last_loss = r.loss;
        }
    if (o.json_out) {
        stages.push_back({{"stage", stage_name(stage)},
                          {"epochs_run", ran},
                          {"resumed_at", res.start_epoch},
                          {"final_checkpoint", res.final_checkpoint},
                          {"final_train_loss", last_loss}});
    } else {
        out << stage_name(stage) << ": ran " << ran << " epoch(s)";
        if (res.start_epoch > 0) out << " (resumed at " << res.start_epoch << ")";
        if (ran > 0) out << ", final train loss " << fmt(last_loss);
        out << "\n  checkpoint " << res.final_checkpoint << "\n";
    }
}

int run_pretrain(const CommonOpts& o, std::ostream& out) {
    FullConfig cfg = load_config_file(o.config);
    if (o.seed_set) cfg.train.rng_seed = o.seed;
    require_valid(cfg);
    Dataset data = load_data(o);
    LimbStats stats = stats_for(data);

    RunLock lock(o.out);
    PoseModel model;
    model.build(cfg.model);
    model.ps.initialize(cfg.train.rng_seed);

    json stages = json::array();
    StageResult res = run_stage(model, data, stats, cfg, Stage::Pretrain, o.out,
                                run_id_for(cfg));
    append_report(o.out, res.rows);
    summarize_stage(res, Stage::Pretrain, o, stages, out);
    if (o.json_out)
        out << json{{"run_id", run_id_for(cfg)}, {"stages", stages}}.dump(2) << "\n";
    return 0;
}

int run_train(const CommonOpts& o, std::ostream& out) {
    FullConfig cfg = load_config_file(o.config);
    if (o.seed_set) cfg.train.rng_seed = o.seed;
    require_valid(cfg);
    Dataset data = load_data(o);
    LimbStats stats = stats_for(data);

    RunLock lock(o.out);
    PoseModel model;
    model.build(cfg.model);
    model.ps.initialize(cfg.train.rng_seed);
    if (!o.from_scratch) {
        std::string ck = latest_checkpoint(o.out, Stage::Pretrain);
        if (ck.empty())
            fail(ErrorKind::MissingCheckpoint,
                 "no pretrain checkpoint under " + o.out +
                     " (run pretrain first or pass --from-scratch)");
        restore_matching(model.ps, load_checkpoint(ck));
    }

    const bool do_warmup = o.stage.empty() || o.stage == "warmup";
    const bool do_finetune = o.stage.empty() || o.stage == "finetune";
    json stages = json::array();

    if (do_warmup) {
        StageResult res = run_stage(model, data, stats, cfg, Stage::Warmup, o.out,
                                    run_id_for(cfg));
        append_report(o.out, res.rows);
        summarize_stage(res, Stage::Warmup, o, stages, out);
    } else if (latest_checkpoint(o.out, Stage::Finetune).empty()) {
        // finetune requested alone: continue from the warmup result if one
        // exists rather than from the raw trunk
        std::string ck = latest_checkpoint(o.out, Stage::Warmup);
        if (!ck.empty()) restore_all(model.ps, load_checkpoint(ck));
    }
    if (do_finetune) {
        StageResult res = run_stage(model, data, stats, cfg, Stage::Finetune, o.out,
                                    run_id_for(cfg));
        append_report(o.out, res.rows);
        summarize_stage(res, Stage::Finetune, o, stages, out);
    }
    if (o.json_out)
        out << json{{"run_id", run_id_for(cfg)}, {"stages", stages}}.dump(2) << "\n";
    return 0;
}

int run_eval(const CommonOpts& o, std::ostream& out) {
    FullConfig cfg = load_config_file(o.config);
    require_valid(cfg);
    Dataset data = load_data(o);
    check_data_matches(data, cfg.model);

    std::string ck = supervised_checkpoint(o.out);
    PoseModel model;
    model.build(cfg.model);
    restore_all(model.ps, load_checkpoint(ck));

    EvalReport rep = evaluate(data.split("test"), cfg.model, cfg.skeleton,
                              model_producer(model));
    if (o.json_out) {
        json rows = json::array();
        for (const SequenceEval& r : rep.rows)
            rows.push_back({{"id", r.id},
                            {"windows", r.windows},
                            {"mpjpe_cm", r.mpjpe_cm},
                            {"pckh", r.pckh}});
        json j = {{"checkpoint", ck},
                  {"windows", rep.windows},
                  {"skipped_sequences", rep.skipped},
                  {"mpjpe_cm", rep.mpjpe_cm},
                  {"pckh", rep.pckh},
                  {"sequences", rows}};
        out << j.dump(2) << "\n";
    } else {
        out << "checkpoint " << ck << "\n";
        for (const SequenceEval& r : rep.rows)
            out << "  " << r.id << ": windows " << r.windows << ", mpjpe_cm "
                << fmt(r.mpjpe_cm) << ", pckh " << fmt(r.pckh) << "\n";
        out << "overall: windows " << rep.windows << " (skipped " << rep.skipped
            << " short sequence(s)), mpjpe_cm " << fmt(rep.mpjpe_cm) << ", pckh "
            << fmt(rep.pckh) << "\n";
    }
    return 0;
}

int run_stats(const CommonOpts& o, std::ostream& out) {
    Dataset data = load_data(o);
    LimbStats stats = stats_for(data);
    const SkeletonSpec& skel = data.manifest.skeleton;

    if (!o.out.empty()) {
        std::error_code ec;
        fs::create_directories(o.out, ec);
        if (ec) fail(ErrorKind::Io, "cannot create " + o.out);
        fs::path p = fs::path(o.out) / "limb_stats.json";
        std::ofstream f(p, std::ios::binary);
        if (!f) fail(ErrorKind::Io, "cannot write " + p.string());
        f << limb_stats_to_json(stats) << "\n";
    }
    if (o.json_out) {
        json limbs = json::array();
        for (int i = 0; i < skel.num_limbs(); ++i)
            limbs.push_back({{"from", skel.joint_names[skel.limbs[i].first]},
                             {"to", skel.joint_names[skel.limbs[i].second]},
                             {"lower", stats.lower[i]},
                             {"upper", stats.upper[i]}});
        out << json{{"limbs", limbs}}.dump(2) << "\n";
    } else {
        for (int i = 0; i < skel.num_limbs(); ++i)
            out << skel.joint_names[skel.limbs[i].first] << " -> "
                << skel.joint_names[skel.limbs[i].second] << ": ["
                << fmt(stats.lower[i]) << ", " << fmt(stats.upper[i]) << "]\n";
    }
    return 0;
}

int run_export_preds(const CommonOpts& o, std::ostream& out) {
    FullConfig cfg = load_config_file(o.config);
    require_valid(cfg);
    Dataset data = load_data(o);
    check_data_matches(data, cfg.model);

    std::string ck = supervised_checkpoint(o.out);
    PoseModel model;
    model.build(cfg.model);
    restore_all(model.ps, load_checkpoint(ck));

    fs::path csv_path = fs::path(o.out) / "predictions.csv";
    std::ofstream csv(csv_path, std::ios::binary);
    if (!csv) fail(ErrorKind::Io, "cannot write " + csv_path.string());
    csv << "sequence_id,frame,joint,x,y,z\n";

    const int T = cfg.model.frames_t;
    const size_t frame_cells = size_t(cfg.model.grid_h) * cfg.model.grid_w;
    const double beta = cfg.model.softargmax_beta;
    const int stride = cfg.model.heatmap_stride();
    long rows = 0;
    int windows = 0, covered = 0;
    for (const LoadedSequence* s : data.split("test")) {
        if (s->pressure.t < T) continue;
        ++covered;
        for (int start = 0; start + T <= s->pressure.t; start += T) {
            PoseModel::SupCache sc;
            HeatmapStack maps;
            model.sup_forward(s->pressure.data.data() + size_t(start) * frame_cells,
                              maps, sc);
            Keypoints kp = decode_keypoints(maps, beta, stride);
            for (int f = 0; f < kp.t; ++f)
                for (int j = 0; j < kp.j; ++j) {
                    const double* p = kp.at(f, j);
                    csv << s->id << ',' << (start + f) << ',' << j << ','
                        << fmt(p[0]) << ',' << fmt(p[1]) << ',' << fmt(p[2])
                        << "\n";
                    ++rows;
                }
            ++windows;
        }
    }
    csv.flush();
    if (!csv) fail(ErrorKind::Io, "failed writing " + csv_path.string());
    if (o.json_out) {
        json j = {{"file", csv_path.string()},
                  {"rows", rows},
                  {"windows", windows},
                  {"sequences", covered},
                  {"checkpoint", ck}};
        out << j.dump(2) << "\n";
    } else {
        out << "wrote " << rows << " rows (" << windows << " windows over "
            << covered << " sequence(s)) to " << csv_path.string() << "\n";
    }
    return 0;
}

int run_validate(const CommonOpts& o, std::ostream& out) {
    FullConfig cfg = load_config_file(o.config);
    ValidationReport rep = validate_config(cfg.model, cfg.train, cfg.skeleton);
    if (o.json_out) {
        json issues = json::array();
        for (const ValidationIssue& is : rep.issues)
            issues.push_back({{"field", is.field}, {"message", is.message}});
        out << json{{"ok", rep.ok()}, {"issues", issues}}.dump(2) << "\n";
    } else {
        out << (rep.ok() ? "config ok\n" : rep.to_string());
    }
    return rep.ok() ? 0 : 1;
}

}  // namespace

int worker_thread_cap() {
    const char* v = std::getenv("TPL_NUM_THREADS");
    if (!v || !*v) return 1;
    char* end = nullptr;
    long n = std::strtol(v, &end, 10);
    if (*end != '\0' || n < 1)
        fail(ErrorKind::BadArgument,
             "TPL_NUM_THREADS must be a positive integer, got \"" +
                 std::string(v) + "\"");
    long hw = std::thread::hardware_concurrency();
    if (hw < 1) hw = 1;
    return int(std::min(n, hw));
}

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
    CLI::App app{"pressure-sequence pose estimation pipeline"};
    app.require_subcommand(1);
    CommonOpts o;

    auto add_common = [&](CLI::App* sub, bool config_required, bool needs_manifest,
                          bool needs_out) {
        CLI::Option* c = sub->add_option("--config", o.config, "config JSON path");
        if (config_required) c->required();
        if (needs_manifest)
            sub->add_option("--manifest", o.manifest, "dataset manifest path")
                ->required();
        if (needs_out)
            sub->add_option("--out", o.out, "output directory")->required();
        sub->add_flag("--json", o.json_out, "emit a JSON summary");
    };
    auto add_seed = [&](CLI::App* sub) {
        sub->add_option("--seed", o.seed, "seed override")
            ->each([&](const std::string&) { o.seed_set = true; });
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, false, false, true);
    add_seed(gen);

    CLI::App* pre = app.add_subcommand("pretrain", "masked-reconstruction stage");
    add_common(pre, true, true, true);
    add_seed(pre);

    CLI::App* trn = app.add_subcommand("train", "warmup + finetune stages");
    add_common(trn, true, true, true);
    add_seed(trn);
    trn->add_flag("--from-scratch", o.from_scratch,
                  "skip the pretrain checkpoint; start from fresh init");
    trn->add_option("--stage", o.stage, "run only one stage")
        ->check(CLI::IsMember({"warmup", "finetune"}));

    CLI::App* ev = app.add_subcommand("eval", "test-split metric report");
    add_common(ev, true, true, true);

    CLI::App* st = app.add_subcommand("stats", "limb length percentiles");
    st->add_option("--manifest", o.manifest, "dataset manifest path")->required();
    st->add_option("--out", o.out, "directory for limb_stats.json (optional)");
    st->add_flag("--json", o.json_out, "emit a JSON summary");

    CLI::App* ex = app.add_subcommand("export-preds", "predicted keypoint CSV");
    add_common(ex, true, true, true);

    CLI::App* va = app.add_subcommand("validate", "config invariant check");
    va->add_option("--config", o.config, "config JSON path")->required();
    va->add_flag("--json", o.json_out, "emit a JSON summary");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e, out, err);
        return rc == 0 ? 0 : 1;
    }

    try {
        worker_thread_cap();  // validate even though compute is single-threaded
        if (gen->parsed()) return run_gen_data(o, out);
        if (pre->parsed()) return run_pretrain(o, out);
        if (trn->parsed()) return run_train(o, out);
        if (ev->parsed()) return run_eval(o, out);
        if (st->parsed()) return run_stats(o, out);
        if (ex->parsed()) return run_export_preds(o, out);
        if (va->parsed()) return run_validate(o, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

}  // namespace presspose
