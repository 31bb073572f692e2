#include <algorithm>
#include <cmath>

#include "difflab/eval.hpp"
#include "difflab/rng.hpp"
#include "doctest.h"

using namespace difflab;

namespace {

DenoiserConfig small_cfg(int dim = 2, int conds = 4) {
    DenoiserConfig c;
    c.data_dim = dim;
    c.hidden_width = 16;
    c.depth = 2;
    c.time_embed_dim = 8;
    c.cond_embed_dim = 4;
    c.num_conditions = conds;
    return c;
}

}  // namespace

TEST_CASE("recon metrics: identity, constant offset, independent formulas") {
    Rng rng = Rng::derive(1, 0x6d6574ULL);
    const Vec a = rng.gaussian_vec(16).cwiseAbs().cwiseMin(1.0);

    const ReconReport ident = recon_metrics({a}, {a});
    CHECK(ident.mean_mse == 0.0);
    CHECK(std::isinf(ident.mean_psnr));
    CHECK(ident.mean_psnr > 0.0);
    CHECK(ident.mean_ssim == doctest::Approx(1.0).epsilon(1e-12));

    const Vec b = a.array() + 0.1;
    const ReconReport off = recon_metrics({a}, {b});
    CHECK(off.mean_mse == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(off.mean_psnr == doctest::Approx(20.0).epsilon(1e-12));

    // independent scalar re-implementation of MSE/PSNR on a random pair
    const Vec x = rng.gaussian_vec(8);
    const Vec y = rng.gaussian_vec(8);
    double mse = 0.0;
    for (int i = 0; i < 8; ++i) mse += (x[i] - y[i]) * (x[i] - y[i]) / 8.0;
    const ReconReport r = recon_metrics({x}, {y});
    CHECK(r.mean_mse == doctest::Approx(mse).epsilon(1e-12));
    CHECK(r.mean_psnr == doctest::Approx(10.0 * std::log10(1.0 / mse)).epsilon(1e-12));
    CHECK(r.mean_ssim >= -1.0);
    CHECK(r.mean_ssim < 1.0);

    CHECK_THROWS(recon_metrics({x}, {x, y}));
    CHECK_THROWS(recon_metrics({x}, {rng.gaussian_vec(7)}));
    CHECK_THROWS(recon_metrics({}, {}));
}

TEST_CASE("ssim on image-shaped data responds to structure, not just offset") {
    Rng rng = Rng::derive(2, 0x7373696dULL);
    Vec img(64);
    for (int i = 0; i < 64; ++i) img[i] = 0.5 + 0.4 * std::sin(i * 0.7);
    const ReconReport same = recon_metrics({img}, {img});
    CHECK(same.mean_ssim == doctest::Approx(1.0).epsilon(1e-12));
    const Vec noisy = img + 0.2 * rng.gaussian_vec(64);
    const ReconReport diff = recon_metrics({img}, {noisy});
    CHECK(diff.mean_ssim < 0.999);
    CHECK(diff.mean_ssim >= -1.0);
}

TEST_CASE("mmd: identical sets vanish, separated sets are large, permutations center at zero") {
    Rng rng = Rng::derive(3, 0x6d6d64ULL);
    std::vector<Vec> xs, ys, far;
    for (int i = 0; i < 64; ++i) {
        xs.push_back(rng.gaussian_vec(2));
        ys.push_back(rng.gaussian_vec(2));
        far.push_back(rng.gaussian_vec(2) + Vec(Vec::Constant(2, 8.0)));
    }
    const double bw = mmd_median_bandwidth(xs, ys);
    CHECK(bw > 0.0);

    // Identical sets: the unbiased estimator equals -(2/m)(1 - mean offdiag
    // kernel), so it is non-positive and bounded by 2/m in magnitude.
    const double same = mmd_quality(xs, xs, bw);
    CHECK(same <= 0.0);
    CHECK(std::abs(same) <= 2.0 / 64);
    const double near = mmd_quality(xs, ys, bw);
    const double apart = mmd_quality(xs, far, bw);
    CHECK(apart > 0.5);           // two well-separated clouds
    CHECK(apart > 10.0 * std::abs(near));

    // permutation test: pooled relabeling centers the statistic at zero
    std::vector<Vec> pool = xs;
    pool.insert(pool.end(), ys.begin(), ys.end());
    Rng perm_rng = Rng::derive(4, 0x7065726dULL);
    double acc = 0.0;
    const int perms = 50;
    for (int p = 0; p < perms; ++p) {
        for (std::size_t i = pool.size() - 1; i > 0; --i)
            std::swap(pool[i], pool[static_cast<std::size_t>(perm_rng.uniform_int(0, static_cast<int>(i)))]);
        std::vector<Vec> ga(pool.begin(), pool.begin() + 64);
        std::vector<Vec> gb(pool.begin() + 64, pool.end());
        acc += mmd_quality(ga, gb, bw);
    }
    CHECK(std::abs(acc / perms) < 0.01);
    CHECK(apart > 50.0 * std::abs(acc / perms));

    CHECK_THROWS(mmd_quality(xs, ys, 0.0));
    CHECK_THROWS(mmd_quality(xs, ys, -1.0));
    CHECK_THROWS(mmd_quality({}, ys, 1.0));
}

TEST_CASE("istd report shape, determinism, and condition-order invariance") {
    const NoiseSchedule s = make_linear_schedule(50, 1e-4, 0.02);
    const ParameterSet p = init_denoiser(small_cfg(), 5);

    IstdConfig cfg;
    cfg.conditions = {0, 1, 2, 3};
    cfg.pairs_per_condition = 2;
    cfg.num_steps = 8;
    cfg.seed = 77;

    const SmoothnessReport a = compute_istd(s, p, nullptr, cfg);
    CHECK(a.etas.size() == 11);  // default 0..1 grid
    REQUIRE(a.stds.size() == 8);  // 4 conditions x 2 pairs
    for (const auto& series : a.distance_series) CHECK(series.size() == a.etas.size() - 1);
    CHECK(a.istd >= 0.0);

    const SmoothnessReport b = compute_istd(s, p, nullptr, cfg);
    CHECK(a.istd == b.istd);  // bitwise reproducible

    IstdConfig shuffled = cfg;
    shuffled.conditions = {3, 1, 0, 2};
    const SmoothnessReport c = compute_istd(s, p, nullptr, shuffled);
    CHECK(c.istd == doctest::Approx(a.istd).epsilon(1e-15));  // order-invariant mean

    IstdConfig bad = cfg;
    bad.conditions.clear();
    CHECK_THROWS(compute_istd(s, p, nullptr, bad));
    bad = cfg;
    bad.etas = {0.5};
    CHECK_THROWS(compute_istd(s, p, nullptr, bad));
}

TEST_CASE("degenerate sweep: identical outputs give istd exactly zero") {
    const NoiseSchedule s = make_linear_schedule(20, 1e-4, 0.02);
    const ParameterSet p = init_denoiser(small_cfg(), 6);
    IstdConfig cfg;
    cfg.conditions = {0, 1};
    cfg.num_steps = 5;
    cfg.seed = 5;
    cfg.etas.assign(11, 0.0);  // every sweep point is the same latent
    const SmoothnessReport rep = compute_istd(s, p, nullptr, cfg);
    for (const auto& series : rep.distance_series)
        for (double d : series) CHECK(d == 0.0);
    CHECK(rep.istd == 0.0);
}

TEST_CASE("paired report against itself has unit ratios") {
    const NoiseSchedule s = make_linear_schedule(20, 1e-4, 0.02);
    const ParameterSet p = init_denoiser(small_cfg(), 7);

    std::vector<Vec> held, ref;
    std::vector<int> labels;
    Rng rng = Rng::derive(7, 0x686c64ULL);
    for (int i = 0; i < 6; ++i) {
        held.push_back(rng.gaussian_vec(2));
        ref.push_back(rng.gaussian_vec(2));
        labels.push_back(i % 4);
    }

    PairedReportConfig pc;
    pc.istd.conditions = {0, 1};
    pc.istd.num_steps = 4;
    pc.istd.seed = 9;
    pc.num_steps = 4;
    pc.recon_samples = 4;
    pc.nti_samples = 2;
    pc.nti.inner_iters = 2;
    pc.mmd_samples = 8;

    const PairedReport rep = paired_report(s, p, p, held, labels, ref, pc);
    REQUIRE(!rep.rows.empty());
    for (const auto& row : rep.rows) CHECK(row.ratio == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.to_csv().find("metric,smooth,baseline,ratio") == 0);
    CHECK(rep.render().find("istd") != std::string::npos);
}
