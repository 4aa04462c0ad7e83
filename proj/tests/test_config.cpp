#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "presspose/common.hpp"
#include "presspose/config.hpp"

using namespace presspose;

namespace {

ModelConfig micro_model() {
    ModelConfig m;
    m.grid_w = 8;
    m.grid_h = 8;
    m.frames_t = 2;
    m.spatial_crop = 4;
    m.temporal_crop = 2;
    m.embed_dim = 8;
    m.encoder_depth = 0;
    m.num_heads = 2;
    m.decoder_depth = 1;
    m.decoder_dim = 8;
    m.decoder_heads = 2;
    m.num_joints = 1;
    m.head_channels = 8;
    m.strict_geometry = false;
    return m;
}

}  // namespace

TEST_CASE("default skeleton topology") {
    SkeletonSpec s = default_skeleton();
    CHECK(s.num_joints() == 14);
    CHECK(s.num_limbs() == 13);
    // head limb connects neck to head
    auto [a, b] = s.limbs[s.head_limb_index];
    CHECK(s.joint_names[a] == "neck");
    CHECK(s.joint_names[b] == "head");
    ModelConfig m;  // full-scale default geometry
    CHECK(validate_config(m, TrainConfig{}, s).ok());
}

TEST_CASE("validate_config flags each violated invariant") {
    SkeletonSpec skel = default_skeleton();
    TrainConfig t;

    ModelConfig ok;
    CHECK(validate_config(ok, t, skel).ok());

    SUBCASE("T=1 with temporal_crop 4 is rejected") {
        ModelConfig m;
        m.frames_t = 1;
        m.temporal_crop = 4;
        auto r = validate_config(m, t, skel);
        CHECK(!r.ok());
        bool found = false;
        for (const auto& is : r.issues) found |= (is.field == "frames_t");
        CHECK(found);
    }

    SUBCASE("embed_dim 10 with 4 heads is rejected") {
        ModelConfig m;
        m.embed_dim = 10;
        m.num_heads = 4;
        auto r = validate_config(m, t, skel);
        CHECK(!r.ok());
        bool found = false;
        for (const auto& is : r.issues) found |= (is.field == "embed_dim");
        CHECK(found);
    }

    SUBCASE("strict geometry pins d=16") {
        ModelConfig m;
        m.grid_w = m.grid_h = 32;
        m.spatial_crop = 8;
        auto r = validate_config(m, t, skel);
        CHECK(!r.ok());
        m.strict_geometry = false;
        CHECK(validate_config(m, t, skel).ok());
    }

    SUBCASE("relaxed mode still requires d divisible by 4") {
        ModelConfig m = micro_model();
        m.grid_w = m.grid_h = 12;
        m.spatial_crop = 6;
        CHECK(!validate_config(m, t, skel).ok());
    }

    SUBCASE("bad skeleton limbs") {
        SkeletonSpec s = default_skeleton();
        s.limbs[3] = {2, 2};
        auto r = validate_config(ok, t, s);
        CHECK(!r.ok());
        s = default_skeleton();
        s.limbs.push_back({0, 1});  // duplicate of neck->head regardless of order
        CHECK(!validate_config(ok, t, s).ok());
        s = default_skeleton();
        s.head_limb_index = 13;
        CHECK(!validate_config(ok, t, s).ok());
    }

    SUBCASE("mask ratio bounds") {
        TrainConfig bad;
        bad.mask_ratio = 1.0;
        CHECK(!validate_config(ok, bad, skel).ok());
        bad.mask_ratio = 0.0;
        CHECK(!validate_config(ok, bad, skel).ok());
    }

    SUBCASE("multiple problems are all listed") {
        ModelConfig m;
        m.frames_t = 1;
        m.temporal_crop = 4;
        m.embed_dim = 10;
        m.num_heads = 4;
        auto r = validate_config(m, t, skel);
        CHECK(r.issues.size() >= 2);
    }
}

TEST_CASE("param_count matches the hand-derived micro total") {
    // grid 8x8, d=4, T=2, d_t=2, C=8, hc=8, J=1, depth 0, ffn 4.
    // Tokenizer: 8*16 + (2+1)*64 + 3*8 + 4*8           = 376
    //   (spatial conv 128+8, temporal conv 128+8, proj 64+8, pos 4 tokens * 8)
    // Head: 16*8*8+8+16 + 16*64+8+16 + (8*4+4)         = 2132
    // Total                                            = 2508
    ModelConfig m = micro_model();
    CHECK(param_count(m) == 2508);
}

TEST_CASE("param_count is linear in encoder depth") {
    ModelConfig m = micro_model();
    m.encoder_depth = 1;
    uint64_t d1 = param_count(m);
    m.encoder_depth = 2;
    uint64_t d2 = param_count(m);
    m.encoder_depth = 4;
    uint64_t d4 = param_count(m);
    uint64_t per_block = d2 - d1;
    // 12 C^2 + 13 C at C=8, ffn 4
    CHECK(per_block == 12 * 64 + 13 * 8);
    CHECK(d4 - d2 == 2 * per_block);
}

TEST_CASE("ViT-B-like configuration lands within 10% of 93.3M") {
    ModelConfig m;  // defaults are the full-scale geometry
    m.frames_t = 1;
    m.temporal_crop = 1;
    uint64_t n = param_count(m);
    CHECK(double(n) > 0.9 * 93.3e6);
    CHECK(double(n) < 1.1 * 93.3e6);
}

TEST_CASE("param_count ignores training hyperparameters and grows with width") {
    ModelConfig m = micro_model();
    uint64_t base = param_count(m);
    ModelConfig wider = m;
    wider.embed_dim = 16;
    CHECK(param_count(wider) > base);
    ModelConfig deeper = m;
    deeper.encoder_depth = 3;
    CHECK(param_count(deeper) > base);
}

TEST_CASE("decoder params counted separately") {
    ModelConfig m = micro_model();
    // proj 8*8+8=72, mask token 8, pos 4*8=32, 1 block 12*64+13*8=872,
    // pixel head 8*32+32=288 (cube = 2*4*4 = 32). Total 1272.
    CHECK(param_count_decoder(m) == 72 + 8 + 32 + 872 + 288);
}

TEST_CASE("config JSON round-trip preserves every field") {
    FullConfig cfg;
    cfg.model.grid_w = 48;
    cfg.model.spatial_crop = 16;
    cfg.model.embed_dim = 96;
    cfg.train.mask_ratio = 0.6;
    cfg.train.rng_seed = 123456789ULL;
    cfg.synth.num_sequences = 7;
    std::string text = config_to_json(cfg);
    FullConfig back = load_config_json(text);
    CHECK(back.model.grid_w == 48);
    CHECK(back.model.embed_dim == 96);
    CHECK(back.train.mask_ratio == doctest::Approx(0.6));
    CHECK(back.train.rng_seed == 123456789ULL);
    CHECK(back.synth.num_sequences == 7);
    CHECK(back.skeleton.num_joints() == 14);
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_AS(load_config_json(R"({"modle": {}})"), Error);
    CHECK_THROWS_AS(load_config_json(R"({"model": {"embed_dmi": 8}})"), Error);
    CHECK_THROWS_AS(load_config_json(R"({"train": {"lr": 0.1}})"), Error);
    CHECK_THROWS_AS(load_config_json(R"({"skeleton": {"joints": []}})"), Error);
    CHECK_THROWS_AS(load_config_json(R"({"synth": {"frames_t": 4}})"), Error);
    // and valid keys parse
    FullConfig c = load_config_json(R"({"model": {"embed_dim": 32}})");
    CHECK(c.model.embed_dim == 32);
    CHECK(c.model.grid_w == 96);  // untouched default
}

TEST_CASE("malformed JSON and wrong types raise BadArgument") {
    try {
        load_config_json("{nope");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::BadArgument);
    }
    CHECK_THROWS_AS(load_config_json(R"({"model": {"embed_dim": "eight"}})"), Error);
    CHECK_THROWS_AS(load_config_json(R"([1,2,3])"), Error);
}

TEST_CASE("missing config file raises MissingFile") {
    try {
        load_config_file("/nonexistent/cfg.json");
        FAIL("expected throw");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::MissingFile);
    }
}
