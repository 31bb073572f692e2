#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/denoiser.hpp"

namespace difflab {

struct DatasetSpec {
    std::string kind = "gaussian-mixture";  // gaussian-mixture | swiss-roll | shapes-8x8
    int size = 4096;
    std::uint64_t seed = 0;

    // gaussian-mixture
    int mixture_modes = 8;
    double mixture_radius = 2.0;
    double mixture_sigma = 0.15;

    // swiss-roll
    double roll_noise = 0.05;

    // shapes-8x8
    int shape_classes = 3;  // square, circle, cross
};

struct Dataset {
    std::vector<Vec> samples;
    std::vector<int> labels;
    int num_conditions = 1;
    int dim = 0;
};

Dataset generate(const DatasetSpec& spec);

// shapes-8x8 support: render one anti-aliased 8x8 shape. class_id: 0 square,
// 1 circle, 2 cross. size_idx in {0,1}, pos_idx in {0..3}; jitter in [-1,1]
// perturbs center and size inside the class-preserving range.
Vec render_shape(int class_id, int size_idx, int pos_idx, double jx, double jy, double js);

// Deterministic rule-based shape classifier (analysis by synthesis over the
// class templates). Exact on generated data; used as the editing oracle.
int classify_shape(const Vec& image);

// Pixels untouched by any shape template; used to measure how well edits
// preserve the background.
std::vector<int> shape_background_pixels();

}  // namespace difflab
