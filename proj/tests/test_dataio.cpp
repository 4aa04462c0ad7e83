#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "presspose/common.hpp"
#include "presspose/dataio.hpp"

using namespace presspose;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
    fs::path d = fs::temp_directory_path() / "pp_dataio_tests";
    fs::create_directories(d);
    return d;
}

std::pair<PressureSequence, PoseSequence> random_sequence(Rng& rng, int t, int w, int h,
                                                          int j) {
    PressureSequence pr;
    pr.t = t;
    pr.w = w;
    pr.h = h;
    pr.data.resize(size_t(t) * w * h);
    for (auto& v : pr.data) v = float(rng.uniform(0.0, 10.0));
    PoseSequence po;
    po.t = t;
    po.j = j;
    po.data.resize(size_t(t) * j * 3);
    for (int f = 0; f < t; ++f)
        for (int jj = 0; jj < j; ++jj) {
            po.at(f, jj, 0) = float(rng.uniform(0.0, w - 1e-3));
            po.at(f, jj, 1) = float(rng.uniform(0.0, h - 1e-3));
            po.at(f, jj, 2) = float(rng.uniform(0.0, 5.0));
        }
    return {pr, po};
}

ErrorKind kind_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("expected an Error");
    return ErrorKind::Io;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("sequence round-trip is bit-identical over 1000 random shapes") {
    Rng rng(100);
    fs::path file = test_dir() / "roundtrip.pmt";
    for (int iter = 0; iter < 1000; ++iter) {
        int t = 1 + int(rng.below(3)), w = 1 + int(rng.below(6)),
            h = 1 + int(rng.below(6)), j = 1 + int(rng.below(4));
        auto [pr, po] = random_sequence(rng, t, w, h, j);
        write_sequence(file.string(), pr, po);
        auto [pr2, po2] = read_sequence(file.string());
        REQUIRE(pr2.t == pr.t);
        REQUIRE(pr2.w == pr.w);
        REQUIRE(pr2.h == pr.h);
        REQUIRE(po2.j == po.j);
        REQUIRE(pr2.data == pr.data);  // float equality: bitwise round-trip
        REQUIRE(po2.data == po.data);
    }
}

TEST_CASE("pmt byte layout: T=2 W=H=4 J=1 file is exactly 172 bytes") {
    Rng rng(3);
    auto [pr, po] = random_sequence(rng, 2, 4, 4, 1);
    fs::path file = test_dir() / "tiny.pmt";
    write_sequence(file.string(), pr, po);
    CHECK(fs::file_size(file) == 172);  // 4 + 16 + 2*16*4 + 2*1*3*4
}

TEST_CASE("each corruption mode raises its own error kind") {
    Rng rng(4);
    auto [pr, po] = random_sequence(rng, 2, 4, 4, 1);
    fs::path file = test_dir() / "corrupt.pmt";
    write_sequence(file.string(), pr, po);
    std::string good = slurp(file);

    SUBCASE("bad magic") {
        std::string bad = good;
        bad[3] = '0';  // "PMT0"
        spit(file, bad);
        CHECK(kind_of([&] { read_sequence(file.string()); }) == ErrorKind::BadMagic);
    }
    SUBCASE("truncated payload") {
        spit(file, good.substr(0, good.size() - 5));
        CHECK(kind_of([&] { read_sequence(file.string()); }) == ErrorKind::Truncated);
    }
    SUBCASE("truncated header") {
        spit(file, good.substr(0, 10));
        CHECK(kind_of([&] { read_sequence(file.string()); }) == ErrorKind::Truncated);
    }
    SUBCASE("trailing bytes") {
        spit(file, good + "xx");
        CHECK(kind_of([&] { read_sequence(file.string()); }) == ErrorKind::Truncated);
    }
    SUBCASE("negative pressure") {
        auto bad_pr = pr;
        bad_pr.data[7] = -0.5f;
        CHECK(kind_of([&] { write_sequence(file.string(), bad_pr, po); }) ==
              ErrorKind::NegativePressure);
        // also caught on read if the file was made by something else
        std::string bytes = good;
        float v = -0.5f;
        uint32_t u;
        std::memcpy(&u, &v, 4);
        bytes[20] = char(u & 0xff);
        bytes[21] = char((u >> 8) & 0xff);
        bytes[22] = char((u >> 16) & 0xff);
        bytes[23] = char((u >> 24) & 0xff);
        spit(file, bytes);
        CHECK(kind_of([&] { read_sequence(file.string()); }) == ErrorKind::NegativePressure);
    }
    SUBCASE("non-finite pressure") {
        auto bad_pr = pr;
        bad_pr.data[0] = std::numeric_limits<float>::quiet_NaN();
        CHECK(kind_of([&] { write_sequence(file.string(), bad_pr, po); }) ==
              ErrorKind::NonFinite);
    }
    SUBCASE("pose out of grid") {
        auto bad_po = po;
        bad_po.at(0, 0, 0) = 4.0f;  // x must be < W
        CHECK(kind_of([&] { write_sequence(file.string(), pr, bad_po); }) ==
              ErrorKind::DimMismatch);
    }
    SUBCASE("frame count mismatch") {
        auto bad_po = po;
        bad_po.t = 3;
        CHECK(kind_of([&] { write_sequence(file.string(), pr, bad_po); }) ==
              ErrorKind::DimMismatch);
    }
    SUBCASE("missing file") {
        CHECK(kind_of([&] { read_sequence("/nonexistent/x.pmt"); }) ==
              ErrorKind::MissingFile);
    }
}

TEST_CASE("limb stats: nearest-rank percentiles") {
    SkeletonSpec skel;
    skel.joint_names = {"a", "b"};
    skel.limbs = {{0, 1}};
    skel.head_limb_index = 0;

    auto seq_with_lengths = [&](const std::vector<double>& lens) {
        PoseSequence po;
        po.t = int(lens.size());
        po.j = 2;
        po.data.assign(size_t(po.t) * 2 * 3, 0.0f);
        for (int f = 0; f < po.t; ++f) po.at(f, 1, 0) = float(lens[f]);
        return po;
    };

    SUBCASE("lengths 1..100 give L5=5, L95=95") {
        std::vector<double> lens(100);
        for (int i = 0; i < 100; ++i) lens[i] = i + 1;
        // shuffle so sortedness is the implementation's job
        Rng rng(5);
        for (size_t i = lens.size(); i > 1; --i)
            std::swap(lens[i - 1], lens[rng.below(i)]);
        auto stats = compute_limb_stats({seq_with_lengths(lens)}, skel);
        CHECK(stats.lower[0] == doctest::Approx(5.0));
        CHECK(stats.upper[0] == doctest::Approx(95.0));
    }

    SUBCASE("identical frames collapse both percentiles") {
        auto stats = compute_limb_stats({seq_with_lengths(std::vector<double>(8, 3.25))}, skel);
        CHECK(stats.lower[0] == doctest::Approx(3.25));
        CHECK(stats.upper[0] == doctest::Approx(3.25));
    }

    SUBCASE("37 random lengths match the sort oracle") {
        Rng rng(6);
        std::vector<double> lens(37);
        for (auto& l : lens) l = rng.uniform(0.5, 20.0);
        auto stats = compute_limb_stats({seq_with_lengths(lens)}, skel);
        // store through float first: the pose holds float32, the oracle must too
        std::vector<double> sorted;
        for (double l : lens) sorted.push_back(double(float(l)));
        std::sort(sorted.begin(), sorted.end());
        size_t k5 = size_t(std::ceil(0.05 * 37)), k95 = size_t(std::ceil(0.95 * 37));
        CHECK(stats.lower[0] == doctest::Approx(sorted[k5 - 1]).epsilon(1e-12));
        CHECK(stats.upper[0] == doctest::Approx(sorted[k95 - 1]).epsilon(1e-12));
        CHECK(stats.lower[0] <= stats.upper[0]);

        // duplicating the whole split leaves nearest-rank percentiles unchanged
        auto dup = compute_limb_stats(
            {seq_with_lengths(lens), seq_with_lengths(lens)}, skel);
        CHECK(dup.lower[0] == stats.lower[0]);
        CHECK(dup.upper[0] == stats.upper[0]);
    }

    SUBCASE("errors") {
        CHECK_THROWS_AS(compute_limb_stats(std::vector<PoseSequence>{}, skel), Error);
        PoseSequence wrong;
        wrong.t = 1;
        wrong.j = 3;
        wrong.data.assign(9, 0.0f);
        CHECK_THROWS_AS(compute_limb_stats({wrong}, skel), Error);
    }
}

TEST_CASE("limb stats json round-trip") {
    LimbStats s;
    s.lower = {1.5, 2.5};
    s.upper = {3.5, 4.5};
    auto back = limb_stats_from_json(limb_stats_to_json(s));
    CHECK(back.lower == s.lower);
    CHECK(back.upper == s.upper);
    CHECK_THROWS_AS(limb_stats_from_json("{}"), Error);
}

TEST_CASE("render_pressure_frame peaks at a cell-centered blob") {
    std::vector<float> frame(16 * 12);
    render_pressure_frame(16, 12, {{7.0, 5.0, 1.0}}, 1.5, frame.data());
    size_t best = std::max_element(frame.begin(), frame.end()) - frame.begin();
    CHECK(best == size_t(5 * 16 + 7));
    CHECK(frame[best] == doctest::Approx(1.0));  // unit amplitude at the center
    // two blobs superpose
    std::vector<float> two(16 * 12);
    render_pressure_frame(16, 12, {{7.0, 5.0, 1.0}, {2.0, 2.0, 0.5}}, 1.5, two.data());
    CHECK(two[5 * 16 + 7] >= frame[5 * 16 + 7]);
}

TEST_CASE("synthetic generator is deterministic and well-formed") {
    SynthSpec spec;
    spec.num_sequences = 5;
    spec.frames = 16;
    spec.grid_w = 16;
    spec.grid_h = 16;
    spec.seed = 77;
    spec.noise_std = 0.05;
    SkeletonSpec skel = default_skeleton();

    fs::path d1 = test_dir() / "gen_a", d2 = test_dir() / "gen_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    auto m1 = generate_synthetic(spec, skel, d1.string());
    auto m2 = generate_synthetic(spec, skel, d2.string());

    REQUIRE(m1.sequences.size() == 5);
    int tests = 0;
    for (const auto& e : m1.sequences) tests += (e.split == "test");
    CHECK(tests == 1);  // 80/20 at five sequences

    for (size_t i = 0; i < m1.sequences.size(); ++i) {
        std::string a = slurp(d1 / m1.sequences[i].file);
        std::string b = slurp(d2 / m2.sequences[i].file);
        CHECK(a == b);  // same seed, bit-identical files
        CHECK(!a.empty());
    }

    Dataset ds = load_dataset((d1 / "manifest.json").string());
    REQUIRE(ds.sequences.size() == 5);
    for (const auto& s : ds.sequences) {
        for (float v : s.pressure.data) CHECK(v >= 0.0f);
        double total_last = 0;
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) total_last += s.pressure.at(s.pressure.t - 1, y, x);
        CHECK(total_last > 0.0);
        for (int f = 0; f < s.pose.t; ++f)
            for (int j = 0; j < s.pose.j; ++j) {
                CHECK(s.pose.at(f, j, 0) >= 0.0f);
                CHECK(s.pose.at(f, j, 0) < 16.0f);
                CHECK(s.pose.at(f, j, 1) >= 0.0f);
                CHECK(s.pose.at(f, j, 1) < 16.0f);
            }
    }

    SUBCASE("different seeds differ") {
        SynthSpec other = spec;
        other.seed = 78;
        fs::path d3 = test_dir() / "gen_c";
        fs::remove_all(d3);
        generate_synthetic(other, skel, d3.string());
        CHECK(slurp(d1 / "seq_000.pmt") != slurp(d3 / "seq_000.pmt"));
    }
}

TEST_CASE("noise-free single contact peaks at the joint") {
    SynthSpec spec;
    spec.num_sequences = 1;
    spec.frames = 4;
    spec.grid_w = 24;
    spec.grid_h = 24;
    spec.seed = 9;
    spec.noise_std = 0.0;
    spec.contact_joints = {13};  // l_ankle
    fs::path d = test_dir() / "gen_single";
    fs::remove_all(d);
    generate_synthetic(spec, default_skeleton(), d.string());
    Dataset ds = load_dataset((d / "manifest.json").string());
    const auto& s = ds.sequences[0];
    for (int f = 0; f < s.pressure.t; ++f) {
        float best = -1;
        int bx = -1, by = -1;
        for (int y = 0; y < 24; ++y)
            for (int x = 0; x < 24; ++x)
                if (s.pressure.at(f, y, x) > best) {
                    best = s.pressure.at(f, y, x);
                    bx = x;
                    by = y;
                }
        double dx = bx - s.pose.at(f, 13, 0), dy = by - s.pose.at(f, 13, 1);
        CHECK(std::sqrt(dx * dx + dy * dy) <= 1.0);  // argmax is the nearest cell
    }
}

TEST_CASE("generator rejects bad requests") {
    SkeletonSpec skel = default_skeleton();
    SynthSpec spec;
    spec.grid_w = 8;  // too small
    spec.grid_h = 16;
    CHECK_THROWS_AS(generate_synthetic(spec, skel, (test_dir() / "x").string()), Error);
    SynthSpec zero;
    zero.num_sequences = 0;
    CHECK_THROWS_AS(generate_synthetic(zero, skel, (test_dir() / "x").string()), Error);
    SynthSpec bad_contact;
    bad_contact.contact_joints = {99};
    CHECK_THROWS_AS(generate_synthetic(bad_contact, skel, (test_dir() / "x").string()),
                    Error);
}

TEST_CASE("manifest validation on load") {
    SynthSpec spec;
    spec.num_sequences = 2;
    spec.frames = 4;
    spec.grid_w = 16;
    spec.grid_h = 16;
    fs::path d = test_dir() / "gen_manifest";
    fs::remove_all(d);
    auto m = generate_synthetic(spec, default_skeleton(), d.string());

    SUBCASE("duplicate ids rejected") {
        m.sequences.push_back(m.sequences[0]);
        write_manifest((d / "manifest.json").string(), m);
        CHECK_THROWS_AS(read_manifest((d / "manifest.json").string()), Error);
    }
    SUBCASE("grid mismatch with file header rejected") {
        m.grid_w = 32;
        write_manifest((d / "manifest.json").string(), m);
        CHECK(kind_of([&] { load_dataset((d / "manifest.json").string()); }) ==
              ErrorKind::DimMismatch);
    }
    SUBCASE("missing manifest") {
        CHECK(kind_of([&] { read_manifest("/nonexistent/manifest.json"); }) ==
              ErrorKind::MissingFile);
    }
}
