#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stan/config.hpp"
#include "stan/rng.hpp"
#include "stan/tensor.hpp"

namespace stan {

// Motion classes. left_right/right_left, top_bottom/bottom_top and
// clockwise/counter_clockwise are exact time reversals of each other.
enum MotionClass : int {
    kLeftRight = 0,
    kRightLeft = 1,
    kTopBottom = 2,
    kBottomTop = 3,
    kClockwise = 4,
    kCounterClockwise = 5,
    kStatic = 6,
    kBlink = 7,
    kNumMotionClasses = 8,
};

constexpr int kNumShapes = 4;
constexpr int kNumColors = 2;

bool is_reverse_pair_class(int label);
int reverse_class_of(int label);

struct SyntheticClip {
    std::vector<float> frames; // [T, 1, H, W], row-major, values in [0, 1]
    std::uint32_t label = 0;
    std::vector<std::uint32_t> caption; // [shape_tok, color_tok, motion_tok, stop]

    int shape_id() const;
    int color_id() const;
    int motion_id() const;
};

// Caption token layout within the text vocabulary.
int shape_token(int shape_id);
int color_token(int color_id);
int motion_token(int motion_id);
int stop_token();

struct Dataset {
    int T = 0, H = 0, W = 0;
    std::vector<SyntheticClip> clips;
};

// Deterministic in seed. Reverse classes reuse the forward clip's frames in
// reversed order, so reverse pairs share an identical frame multiset.
Dataset generate_dataset(std::uint64_t seed, int n_per_class, const ModelConfig& cfg);

// One clip per (shape, color, motion) tuple; captions unambiguous in-batch.
Dataset generate_retrieval_dataset(std::uint64_t seed, const ModelConfig& cfg);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Frames of one clip as a [T, 1, H, W] double tensor.
Tensor clip_frames_tensor(const Dataset& ds, int index);

} // namespace stan
