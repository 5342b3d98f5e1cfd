#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "stan/synthdata.hpp"

using namespace stan;

namespace {

struct TempFile {
    std::string path;
    explicit TempFile(const std::string& name) : path("/tmp/stan_test_" + name) {}
    ~TempFile() { std::remove(path.c_str()); }
};

std::vector<char> read_all(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

} // namespace

TEST_CASE("class helpers") {
    for (int c : {0, 1, 2, 3, 4, 5}) CHECK(is_reverse_pair_class(c));
    CHECK_FALSE(is_reverse_pair_class(kStatic));
    CHECK_FALSE(is_reverse_pair_class(kBlink));
    CHECK(reverse_class_of(kLeftRight) == kRightLeft);
    CHECK(reverse_class_of(kRightLeft) == kLeftRight);
    CHECK(reverse_class_of(kClockwise) == kCounterClockwise);
    CHECK(reverse_class_of(kStatic) == kStatic);
}

TEST_CASE("caption token layout is injective and decodable") {
    std::set<int> toks{stop_token()};
    for (int s = 0; s < kNumShapes; ++s) toks.insert(shape_token(s));
    for (int c = 0; c < kNumColors; ++c) toks.insert(color_token(c));
    for (int m = 0; m < kNumMotionClasses; ++m) toks.insert(motion_token(m));
    CHECK(toks.size() == 1u + kNumShapes + kNumColors + kNumMotionClasses);
    CHECK(*toks.rbegin() < 64); // fits the default vocabulary

    ModelConfig cfg;
    Dataset ds = generate_dataset(3, 2, cfg);
    for (const auto& clip : ds.clips) {
        REQUIRE(clip.caption.size() == 4);
        CHECK(clip.caption[3] == static_cast<std::uint32_t>(stop_token()));
        CHECK(clip.shape_id() >= 0);
        CHECK(clip.shape_id() < kNumShapes);
        CHECK(clip.color_id() >= 0);
        CHECK(clip.color_id() < kNumColors);
        CHECK(clip.motion_id() == static_cast<int>(clip.label));
    }
}

TEST_CASE("default dataset size and class balance") {
    ModelConfig cfg;
    Dataset ds = generate_dataset(0, 16, cfg);
    CHECK(ds.clips.size() == 16u * kNumMotionClasses);
    CHECK(ds.T == cfg.T);
    CHECK(ds.H == cfg.frame_px_h());
    CHECK(ds.W == cfg.frame_px_w());
    std::map<int, int> per_class;
    for (const auto& clip : ds.clips) {
        ++per_class[static_cast<int>(clip.label)];
        CHECK(clip.frames.size() == static_cast<size_t>(ds.T) * ds.H * ds.W);
        for (float px : clip.frames) {
            CHECK(px >= 0.0f);
            CHECK(px <= 1.0f);
        }
    }
    REQUIRE(per_class.size() == static_cast<size_t>(kNumMotionClasses));
    for (const auto& [label, count] : per_class) CHECK(count == 16);
}

TEST_CASE("generation is deterministic in the seed") {
    ModelConfig cfg;
    Dataset a = generate_dataset(7, 4, cfg);
    Dataset b = generate_dataset(7, 4, cfg);
    Dataset c = generate_dataset(8, 4, cfg);
    REQUIRE(a.clips.size() == b.clips.size());
    bool any_diff = false;
    for (size_t i = 0; i < a.clips.size(); ++i) {
        CHECK(a.clips[i].frames == b.clips[i].frames);
        CHECK(a.clips[i].label == b.clips[i].label);
        CHECK(a.clips[i].caption == b.clips[i].caption);
        if (a.clips[i].frames != c.clips[i].frames) any_diff = true;
    }
    CHECK(any_diff);
}

TEST_CASE("reverse pairs are exact frame reversals sharing a frame multiset") {
    ModelConfig cfg;
    Dataset ds = generate_dataset(11, 4, cfg);
    const size_t fsz = static_cast<size_t>(ds.H) * ds.W;
    // Forward/reverse clips are emitted adjacently per (idx, motion).
    int pairs = 0;
    for (size_t i = 0; i + 1 < ds.clips.size(); ++i) {
        const auto& f = ds.clips[i];
        const auto& r = ds.clips[i + 1];
        if (!is_reverse_pair_class(static_cast<int>(f.label)) ||
            static_cast<int>(r.label) != reverse_class_of(static_cast<int>(f.label)))
            continue;
        ++pairs;
        for (int t = 0; t < ds.T; ++t) {
            std::vector<float> fwd(f.frames.begin() + t * fsz, f.frames.begin() + (t + 1) * fsz);
            std::vector<float> rev(r.frames.begin() + (ds.T - 1 - t) * fsz,
                                   r.frames.begin() + (ds.T - t) * fsz);
            CHECK(fwd == rev);
        }
        // Consequence: any order-symmetric summary (e.g. the frame mean) is
        // identical across the pair.
        std::vector<double> mean_f(fsz, 0.0), mean_r(fsz, 0.0);
        for (int t = 0; t < ds.T; ++t)
            for (size_t p = 0; p < fsz; ++p) {
                mean_f[p] += f.frames[t * fsz + p];
                mean_r[p] += r.frames[t * fsz + p];
            }
        CHECK(mean_f == mean_r);
    }
    CHECK(pairs == 4 * 3); // three reversible motions per index
}

TEST_CASE("retrieval dataset has one clip per attribute tuple") {
    ModelConfig cfg;
    Dataset ds = generate_retrieval_dataset(5, cfg);
    CHECK(ds.clips.size() == static_cast<size_t>(kNumShapes * kNumColors * kNumMotionClasses));
    std::set<std::vector<std::uint32_t>> captions;
    for (const auto& clip : ds.clips) captions.insert(clip.caption);
    CHECK(captions.size() == ds.clips.size()); // captions unambiguous in-batch
}

TEST_CASE("dataset file round-trips bitwise") {
    ModelConfig cfg;
    Dataset ds = generate_dataset(13, 2, cfg);
    TempFile f("roundtrip.bin"), g("roundtrip2.bin");
    save_dataset(ds, f.path);
    Dataset loaded = load_dataset(f.path);
    REQUIRE(loaded.clips.size() == ds.clips.size());
    CHECK(loaded.T == ds.T);
    for (size_t i = 0; i < ds.clips.size(); ++i) {
        CHECK(loaded.clips[i].frames == ds.clips[i].frames);
        CHECK(loaded.clips[i].label == ds.clips[i].label);
        CHECK(loaded.clips[i].caption == ds.clips[i].caption);
    }
    save_dataset(loaded, g.path);
    CHECK(read_all(f.path) == read_all(g.path));
}

TEST_CASE("dataset loader rejects malformed files") {
    ModelConfig cfg;
    Dataset ds = generate_dataset(1, 1, cfg);
    TempFile f("badfile.bin");

    SUBCASE("bad magic") {
        std::ofstream os(f.path, std::ios::binary);
        os << "NOTADATA" << std::string(64, '\0');
        os.close();
        CHECK_THROWS_AS(load_dataset(f.path), FormatError);
    }
    SUBCASE("wrong version") {
        save_dataset(ds, f.path);
        std::fstream fs(f.path, std::ios::binary | std::ios::in | std::ios::out);
        fs.seekp(8);
        std::uint32_t v = 99;
        fs.write(reinterpret_cast<const char*>(&v), sizeof(v));
        fs.close();
        CHECK_THROWS_AS(load_dataset(f.path), VersionError);
    }
    SUBCASE("truncated payload") {
        save_dataset(ds, f.path);
        const auto bytes = read_all(f.path);
        std::ofstream os(f.path, std::ios::binary | std::ios::trunc);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
        os.close();
        CHECK_THROWS_AS(load_dataset(f.path), CorruptError);
    }
    SUBCASE("missing file") { CHECK_THROWS_AS(load_dataset("/tmp/does_not_exist_stan"), IoError); }
}

TEST_CASE("clip_frames_tensor shape and values") {
    ModelConfig cfg;
    Dataset ds = generate_dataset(2, 1, cfg);
    Tensor t = clip_frames_tensor(ds, 0);
    CHECK(t.shape() == Shape{ds.T, 1, ds.H, ds.W});
    for (int i = 0; i < t.size(); ++i)
        CHECK(t.values()[i] == doctest::Approx(ds.clips[0].frames[i]).epsilon(1e-12));
}
