#include "stan/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace stan {

static const char kMagic[8] = {'S', 'T', 'A', 'N', 'D', 'S', '1', '\0'};
static const std::uint32_t kVersion = 1;

bool is_reverse_pair_class(int label) { return label >= kLeftRight && label <= kCounterClockwise; }

int reverse_class_of(int label) {
    if (!is_reverse_pair_class(label)) return label;
    return label ^ 1;
}

int stop_token() { return 1; }
int shape_token(int shape_id) { return 2 + shape_id; }
int color_token(int color_id) { return 2 + kNumShapes + color_id; }
int motion_token(int motion_id) { return 2 + kNumShapes + kNumColors + motion_id; }

int SyntheticClip::shape_id() const { return static_cast<int>(caption[0]) - 2; }
int SyntheticClip::color_id() const { return static_cast<int>(caption[1]) - 2 - kNumShapes; }
int SyntheticClip::motion_id() const {
    return static_cast<int>(caption[2]) - 2 - kNumShapes - kNumColors;
}

// 5x5 glyph stencils.
static const char* kGlyphs[kNumShapes] = {
    ".XXX."
    ".XXX."
    ".XXX."
    ".XXX."
    ".....", // square
    "..X.."
    "..X.."
    "XXXXX"
    "..X.."
    "..X..", // cross
    "..X.."
    ".XXX."
    "XXXXX"
    ".XXX."
    "..X..", // diamond
    "XXXXX"
    "X...X"
    "X...X"
    "X...X"
    "XXXXX", // ring
};

static void stamp(std::vector<float>& frame, int H, int W, int cx, int cy, int shape,
                  float intensity) {
    const char* g = kGlyphs[shape];
    for (int dy = 0; dy < 5; ++dy)
        for (int dx = 0; dx < 5; ++dx) {
            if (g[dy * 5 + dx] != 'X') continue;
            const int y = cy - 2 + dy, x = cx - 2 + dx;
            if (y < 0 || y >= H || x < 0 || x >= W) continue;
            frame[static_cast<size_t>(y) * W + x] = intensity;
        }
}

// Glyph center per frame for a forward motion program.
static void motion_path(int motion, int t, int T, int H, int W, int jx, int jy, int& cx, int& cy,
                        bool& visible) {
    const int lo = 2, hix = W - 3, hiy = H - 3;
    const int mx = W / 2 - 1 + jx, my = H / 2 - 1 + jy;
    const double frac = (T > 1) ? static_cast<double>(t) / (T - 1) : 0.0;
    visible = true;
    cx = mx;
    cy = my;
    switch (motion) {
        case kLeftRight:
            cx = lo + static_cast<int>(std::lround(frac * (hix - lo)));
            cy = my;
            break;
        case kTopBottom:
            cx = mx;
            cy = lo + static_cast<int>(std::lround(frac * (hiy - lo)));
            break;
        case kClockwise: {
            const double r = std::min(H, W) / 2.0 - 3.0;
            const double a = 1.5707963267948966 - 6.283185307179586 * t / T;
            cx = mx + static_cast<int>(std::lround(r * std::cos(a)));
            cy = my - static_cast<int>(std::lround(r * std::sin(a)));
            break;
        }
        case kStatic:
            break;
        case kBlink:
            visible = (t % 2 == 0);
            break;
        default:
            throw ParamError("motion_path: not a forward motion class");
    }
}

static SyntheticClip render_forward(int motion, int shape, int color, int T, int H, int W,
                                    Rng rng) {
    SyntheticClip clip;
    clip.frames.resize(static_cast<size_t>(T) * H * W);
    const int jx = rng.uniform_int(3) - 1, jy = rng.uniform_int(3) - 1;
    const float intensity = color == 0 ? 1.0f : 0.7f;
    for (int t = 0; t < T; ++t) {
        std::vector<float> frame(static_cast<size_t>(H) * W);
        for (float& px : frame) px = static_cast<float>(rng.uniform(0.0, 0.1));
        int cx, cy;
        bool visible;
        motion_path(motion, t, T, H, W, jx, jy, cx, cy, visible);
        if (visible) stamp(frame, H, W, cx, cy, shape, intensity);
        std::copy(frame.begin(), frame.end(), clip.frames.begin() + static_cast<size_t>(t) * H * W);
    }
    clip.label = static_cast<std::uint32_t>(motion);
    clip.caption = {static_cast<std::uint32_t>(shape_token(shape)),
                    static_cast<std::uint32_t>(color_token(color)),
                    static_cast<std::uint32_t>(motion_token(motion)),
                    static_cast<std::uint32_t>(stop_token())};
    return clip;
}

static SyntheticClip reverse_clip(const SyntheticClip& fwd, int T, int H, int W) {
    SyntheticClip rev;
    rev.frames.resize(fwd.frames.size());
    const size_t fsz = static_cast<size_t>(H) * W;
    for (int t = 0; t < T; ++t)
        std::copy(fwd.frames.begin() + static_cast<size_t>(t) * fsz,
                  fwd.frames.begin() + static_cast<size_t>(t + 1) * fsz,
                  rev.frames.begin() + static_cast<size_t>(T - 1 - t) * fsz);
    const int motion = reverse_class_of(static_cast<int>(fwd.label));
    rev.label = static_cast<std::uint32_t>(motion);
    rev.caption = fwd.caption;
    rev.caption[2] = static_cast<std::uint32_t>(motion_token(motion));
    return rev;
}

Dataset generate_dataset(std::uint64_t seed, int n_per_class, const ModelConfig& cfg) {
    if (n_per_class < 1) throw ParamError("generate_dataset: n_per_class must be >= 1");
    if (cfg.T < 3) throw ParamError("generate_dataset: motion undefined for T < 3");
    Dataset ds;
    ds.T = cfg.T;
    ds.H = cfg.frame_px_h();
    ds.W = cfg.frame_px_w();
    Rng root(seed);
    for (int idx = 0; idx < n_per_class; ++idx) {
        const int shape = idx % kNumShapes;
        const int color = (idx / kNumShapes) % kNumColors;
        for (int motion : {kLeftRight, kTopBottom, kClockwise}) {
            Rng clip_rng = root.split(static_cast<std::uint64_t>(motion) * 1000003 + idx);
            SyntheticClip fwd = render_forward(motion, shape, color, ds.T, ds.H, ds.W, clip_rng);
            ds.clips.push_back(fwd);
            ds.clips.push_back(reverse_clip(fwd, ds.T, ds.H, ds.W));
        }
        for (int motion : {kStatic, kBlink}) {
            Rng clip_rng = root.split(static_cast<std::uint64_t>(motion) * 1000003 + idx);
            ds.clips.push_back(render_forward(motion, shape, color, ds.T, ds.H, ds.W, clip_rng));
        }
    }
    return ds;
}

Dataset generate_retrieval_dataset(std::uint64_t seed, const ModelConfig& cfg) {
    // n_per_class = shapes * colors cycles through every (shape, color) once
    // per motion class, giving exactly one clip per attribute tuple.
    return generate_dataset(seed, kNumShapes * kNumColors, cfg);
}

// ---- binary dataset file ----

template <typename T>
static void write_pod(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
static T read_pod(std::ifstream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw CorruptError("dataset file truncated");
    return v;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + path + " for writing");
    os.write(kMagic, 8);
    write_pod(os, kVersion);
    write_pod(os, static_cast<std::uint32_t>(ds.clips.size()));
    write_pod(os, static_cast<std::uint32_t>(ds.T));
    write_pod(os, static_cast<std::uint32_t>(ds.H));
    write_pod(os, static_cast<std::uint32_t>(ds.W));
    for (const auto& clip : ds.clips) {
        os.write(reinterpret_cast<const char*>(clip.frames.data()),
                 static_cast<std::streamsize>(clip.frames.size() * sizeof(float)));
        write_pod(os, clip.label);
        write_pod(os, static_cast<std::uint8_t>(clip.caption.size()));
        for (std::uint32_t tok : clip.caption) write_pod(os, tok);
    }
    if (!os) throw IoError("write failed for " + path);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw FormatError("not a dataset file (bad magic): " + path);
    const auto version = read_pod<std::uint32_t>(is);
    if (version != kVersion)
        throw VersionError("dataset version " + std::to_string(version) + ", expected " +
                           std::to_string(kVersion));
    const auto n = read_pod<std::uint32_t>(is);
    Dataset ds;
    ds.T = static_cast<int>(read_pod<std::uint32_t>(is));
    ds.H = static_cast<int>(read_pod<std::uint32_t>(is));
    ds.W = static_cast<int>(read_pod<std::uint32_t>(is));
    const size_t frame_count = static_cast<size_t>(ds.T) * ds.H * ds.W;
    ds.clips.resize(n);
    for (auto& clip : ds.clips) {
        clip.frames.resize(frame_count);
        is.read(reinterpret_cast<char*>(clip.frames.data()),
                static_cast<std::streamsize>(frame_count * sizeof(float)));
        if (!is) throw CorruptError("dataset file truncated in frame payload");
        clip.label = read_pod<std::uint32_t>(is);
        const auto cap_len = read_pod<std::uint8_t>(is);
        clip.caption.resize(cap_len);
        for (auto& tok : clip.caption) tok = read_pod<std::uint32_t>(is);
    }
    return ds;
}

Tensor clip_frames_tensor(const Dataset& ds, int index) {
    const auto& clip = ds.clips.at(index);
    std::vector<double> vals(clip.frames.begin(), clip.frames.end());
    return Tensor::from({ds.T, 1, ds.H, ds.W}, std::move(vals));
}

} // namespace stan
