#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "presspose/common.hpp"
#include "presspose/params.hpp"

using namespace presspose;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    fs::path d = fs::temp_directory_path() / "pp_params_tests";
    fs::create_directories(d);
    return d;
}

ParamStore sample_store(uint64_t seed) {
    ParamStore s;
    s.add("tok.w", 12, Init::TruncNormal);
    s.add("tok.b", 4, Init::Zero);
    s.add("ln.gamma", 4, Init::One);
    s.add("head.w", 8, Init::TruncNormal);
    s.initialize(seed);
    return s;
}

}  // namespace

TEST_CASE("store layout and init kinds") {
    ParamStore s = sample_store(1);
    CHECK(s.size() == 28);
    CHECK(s.entry("tok.b").offset == 12);
    CHECK(s.entry("ln.gamma").size == 4);
    for (int i = 0; i < 4; ++i) CHECK(s.at(s.entry("tok.b").offset)[i] == 0.0);
    for (int i = 0; i < 4; ++i) CHECK(s.at(s.entry("ln.gamma").offset)[i] == 1.0);
    const double* w = s.at(s.entry("tok.w").offset);
    bool any_nonzero = false;
    for (int i = 0; i < 12; ++i) {
        CHECK(std::abs(w[i]) <= 0.04 + 1e-12);  // trunc_normal(0.02) clipped at 2 sigma
        any_nonzero |= (w[i] != 0.0);
    }
    CHECK(any_nonzero);
    CHECK(s.name_of(0) == "tok.w");
    CHECK(s.name_of(13) == "tok.b");
    CHECK(s.name_of(27) == "head.w");
    CHECK_THROWS_AS(s.entry("nope"), Error);
}

TEST_CASE("init is a function of (seed, name), not registration order") {
    ParamStore a = sample_store(7);
    ParamStore b;  // same entries, different insertion order
    b.add("head.w", 8, Init::TruncNormal);
    b.add("tok.w", 12, Init::TruncNormal);
    b.add("tok.b", 4, Init::Zero);
    b.add("ln.gamma", 4, Init::One);
    b.initialize(7);
    for (int i = 0; i < 12; ++i)
        CHECK(a.at(a.entry("tok.w").offset)[i] == b.at(b.entry("tok.w").offset)[i]);
    ParamStore c = sample_store(8);
    CHECK(a.at(a.entry("tok.w").offset)[0] != c.at(c.entry("tok.w").offset)[0]);
}

TEST_CASE("duplicate and empty entries are rejected") {
    ParamStore s;
    s.add("x", 3, Init::Zero);
    CHECK_THROWS_AS(s.add("x", 3, Init::Zero), Error);
    CHECK_THROWS_AS(s.add("y", 0, Init::Zero), Error);
}

TEST_CASE("checkpoint round-trip is exact at float32") {
    ParamStore s = sample_store(3);
    fs::path file = test_dir() / "a.ckpt";
    save_checkpoint(file.string(), s, "pretrain", R"({"note":"prov"})");

    Checkpoint ck = load_checkpoint(file.string());
    CHECK(ck.stage == "pretrain");
    CHECK(ck.provenance == R"({"note":"prov"})");
    REQUIRE(ck.tensors.size() == 4);

    ParamStore t = sample_store(99);  // different values
    restore_all(t, ck);
    for (const auto& e : s.entries()) {
        const double* a = s.at(e.offset);
        const double* b = t.at(t.entry(e.name).offset);
        for (size_t i = 0; i < e.size; ++i)
            CHECK(float(a[i]) == float(b[i]));  // float32 is the storage precision
    }
}

TEST_CASE("restore_matching fills only the intersection") {
    ParamStore s = sample_store(3);
    fs::path file = test_dir() / "b.ckpt";
    save_checkpoint(file.string(), s, "pretrain", "{}");
    Checkpoint ck = load_checkpoint(file.string());

    ParamStore t;
    t.add("tok.w", 12, Init::TruncNormal);
    t.add("extra.w", 5, Init::Zero);
    t.initialize(50);
    CHECK(restore_matching(t, ck) == 1);
    for (int i = 0; i < 12; ++i)
        CHECK(float(t.at(t.entry("tok.w").offset)[i]) == float(s.at(s.entry("tok.w").offset)[i]));
    CHECK_THROWS_AS(restore_all(t, ck), Error);

    // size conflict on a shared name is an error even in partial mode
    ParamStore u;
    u.add("tok.w", 3, Init::Zero);
    CHECK_THROWS_AS(restore_matching(u, ck), Error);
}

TEST_CASE("corrupt checkpoints raise distinct errors") {
    ParamStore s = sample_store(3);
    fs::path file = test_dir() / "c.ckpt";
    save_checkpoint(file.string(), s, "finetune", "{}");

    auto bytes = [&] {
        std::ifstream in(file, std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }();

    auto rewrite = [&](const std::string& b) {
        std::ofstream out(file, std::ios::binary | std::ios::trunc);
        out.write(b.data(), std::streamsize(b.size()));
    };

    SUBCASE("bad magic") {
        std::string b = bytes;
        b[0] = 'X';
        rewrite(b);
        try {
            load_checkpoint(file.string());
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::BadMagic);
        }
    }
    SUBCASE("truncation") {
        rewrite(bytes.substr(0, bytes.size() - 3));
        try {
            load_checkpoint(file.string());
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::Truncated);
        }
    }
    SUBCASE("missing file") {
        try {
            load_checkpoint("/nonexistent/x.ckpt");
            FAIL("expected throw");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::MissingCheckpoint);
        }
    }
}
