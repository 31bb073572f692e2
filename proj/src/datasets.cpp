#include "difflab/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "difflab/rng.hpp"

namespace difflab {

namespace {

constexpr int kGrid = 8;
constexpr double kCrossArmWidth = 0.55;
constexpr double kCenterJitter = 0.3;
constexpr double kSizeJitter = 0.1;
const double kSizes[2] = {1.0, 1.6};
const double kPosX[4] = {3.0, 3.0, 5.0, 5.0};
const double kPosY[4] = {3.0, 5.0, 3.0, 5.0};

double shape_sdf(int class_id, double dx, double dy, double size) {
    const double ax = std::abs(dx);
    const double ay = std::abs(dy);
    switch (class_id) {
        case 0:  // square
            return std::max(ax, ay) - size;
        case 1:  // circle (disk)
            return std::sqrt(dx * dx + dy * dy) - size;
        case 2: {  // cross: union of two bars
            const double bar_h = std::max(ax - size, ay - kCrossArmWidth);
            const double bar_v = std::max(ay - size, ax - kCrossArmWidth);
            return std::min(bar_h, bar_v);
        }
        default:
            throw std::invalid_argument("shapes: unknown class id");
    }
}

Vec render(int class_id, double cx, double cy, double size) {
    Vec img(kGrid * kGrid);
    for (int r = 0; r < kGrid; ++r) {
        for (int c = 0; c < kGrid; ++c) {
            const double px = r + 0.5;
            const double py = c + 0.5;
            const double sd = shape_sdf(class_id, px - cx, py - cy, size);
            img[r * kGrid + c] = std::clamp(0.5 - sd, 0.0, 1.0);  // ~1px anti-aliased edge
        }
    }
    return img;
}

Dataset generate_mixture(const DatasetSpec& spec) {
    Dataset ds;
    ds.dim = 2;
    ds.num_conditions = spec.mixture_modes;
    Rng rng = Rng::derive(spec.seed, 0x6d6978ULL);
    // analytic standardization: per-coordinate variance of the ring mixture
    const double scale = 1.0 / std::sqrt(spec.mixture_radius * spec.mixture_radius / 2.0 +
                                         spec.mixture_sigma * spec.mixture_sigma);
    for (int i = 0; i < spec.size; ++i) {
        const int mode = rng.uniform_int(0, spec.mixture_modes - 1);
        const double ang = 2.0 * M_PI * mode / spec.mixture_modes;
        Vec x(2);
        x[0] = (spec.mixture_radius * std::cos(ang) + spec.mixture_sigma * rng.gaussian()) * scale;
        x[1] = (spec.mixture_radius * std::sin(ang) + spec.mixture_sigma * rng.gaussian()) * scale;
        ds.samples.push_back(std::move(x));
        ds.labels.push_back(mode);
    }
    return ds;
}

Dataset generate_roll(const DatasetSpec& spec) {
    Dataset ds;
    ds.dim = 2;
    ds.num_conditions = 4;
    Rng rng = Rng::derive(spec.seed, 0x726f6cULL);
    for (int i = 0; i < spec.size; ++i) {
        const double u = rng.uniform();
        const double theta = 1.5 * M_PI * (1.0 + 2.0 * u);
        Vec x(2);
        x[0] = theta * std::cos(theta) / 7.0 + spec.roll_noise * rng.gaussian();
        x[1] = theta * std::sin(theta) / 7.0 + spec.roll_noise * rng.gaussian();
        ds.samples.push_back(std::move(x));
        ds.labels.push_back(std::min(3, static_cast<int>(u * 4.0)));
    }
    return ds;
}

Dataset generate_shapes(const DatasetSpec& spec) {
    Dataset ds;
    ds.dim = kGrid * kGrid;
    ds.num_conditions = spec.shape_classes;
    Rng rng = Rng::derive(spec.seed, 0x736870ULL);
    for (int i = 0; i < spec.size; ++i) {
        const int cls = rng.uniform_int(0, spec.shape_classes - 1);
        const int size_idx = rng.uniform_int(0, 1);
        const int pos_idx = rng.uniform_int(0, 3);
        const double jx = 2.0 * rng.uniform() - 1.0;
        const double jy = 2.0 * rng.uniform() - 1.0;
        const double js = 2.0 * rng.uniform() - 1.0;
        ds.samples.push_back(render_shape(cls, size_idx, pos_idx, jx, jy, js));
        ds.labels.push_back(cls);
    }
    return ds;
}

}  // namespace

Vec render_shape(int class_id, int size_idx, int pos_idx, double jx, double jy, double js) {
    if (size_idx < 0 || size_idx > 1 || pos_idx < 0 || pos_idx > 3)
        throw std::invalid_argument("render_shape: bad size/pos index");
    const double cx = kPosX[pos_idx] + kCenterJitter * jx;
    const double cy = kPosY[pos_idx] + kCenterJitter * jy;
    const double size = kSizes[size_idx] + kSizeJitter * js;
    return render(class_id, cx, cy, size);
}

int classify_shape(const Vec& image) {
    if (image.size() != kGrid * kGrid) throw std::invalid_argument("classify_shape: expect 8x8 image");
    // Intensity-weighted centroid, then per-class template fit over a size
    // grid. Argmin of the residual picks the class.
    double mass = 0.0, mx = 0.0, my = 0.0;
    for (int r = 0; r < kGrid; ++r)
        for (int c = 0; c < kGrid; ++c) {
            const double v = std::clamp(image[r * kGrid + c], 0.0, 1.0);
            mass += v;
            mx += v * (r + 0.5);
            my += v * (c + 0.5);
        }
    if (mass <= 1e-9) return -1;  // blank image, no shape
    const double cx = mx / mass;
    const double cy = my / mass;

    // Analysis by synthesis: per class, fit the renderer's free parameters
    // (center and size) by a coarse grid followed by local refinement. The
    // generating class reaches a near-zero residual, so the argmin is exact
    // on rendered data even where small squares and disks nearly coincide.
    int best_class = -1;
    double best_err = std::numeric_limits<double>::infinity();
    for (int cls = 0; cls < 3; ++cls) {
        double bx = cx, by = cy, bs = 0.7, berr = std::numeric_limits<double>::infinity();
        for (int si = 0; si <= 32; ++si) {
            const double size = 0.7 + (2.0 - 0.7) * si / 32.0;
            const double err = (render(cls, cx, cy, size) - image).squaredNorm();
            if (err < berr) {
                berr = err;
                bs = size;
            }
        }
        // coordinate descent with a shrinking step on (cx, cy, size)
        for (double step = 0.05; step > 1e-4; step *= 0.5) {
            bool moved = true;
            while (moved) {
                moved = false;
                const double cand[][3] = {{bx + step, by, bs}, {bx - step, by, bs},
                                          {bx, by + step, bs}, {bx, by - step, bs},
                                          {bx, by, bs + step}, {bx, by, bs - step}};
                for (const auto& c : cand) {
                    const double err = (render(cls, c[0], c[1], c[2]) - image).squaredNorm();
                    if (err < berr) {
                        berr = err;
                        bx = c[0];
                        by = c[1];
                        bs = c[2];
                        moved = true;
                    }
                }
            }
        }
        if (berr < best_err) {
            best_err = berr;
            best_class = cls;
        }
    }
    return best_class;
}

std::vector<int> shape_background_pixels() {
    // Border ring: out of reach of every template, including jitter and the
    // anti-aliasing band.
    std::vector<int> px;
    for (int r = 0; r < kGrid; ++r)
        for (int c = 0; c < kGrid; ++c)
            if (r == 0 || r == kGrid - 1 || c == 0 || c == kGrid - 1) px.push_back(r * kGrid + c);
    return px;
}

Dataset generate(const DatasetSpec& spec) {
    if (spec.size < 1) throw std::invalid_argument("dataset: size must be >= 1");
    if (spec.kind == "gaussian-mixture") return generate_mixture(spec);
    if (spec.kind == "swiss-roll") return generate_roll(spec);
    if (spec.kind == "shapes-8x8") return generate_shapes(spec);
    throw std::invalid_argument("dataset: unknown kind '" + spec.kind + "'");
}

}  // namespace difflab
