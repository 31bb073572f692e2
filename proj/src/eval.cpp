#include "difflab/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "difflab/rng.hpp"

namespace difflab {

std::vector<double> IstdConfig::eta_grid() const {
    if (!etas.empty()) return etas;
    std::vector<double> g;
    for (int i = 0; i <= 10; ++i) g.push_back(i / 10.0);
    return g;
}

namespace {

double population_std(const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    return std::sqrt(var / static_cast<double>(v.size()));
}

}  // namespace

SmoothnessReport compute_istd(const NoiseSchedule& s, const ParameterSet& params,
                              const LoraAdapter* adapter, const IstdConfig& cfg) {
    if (cfg.conditions.empty()) throw std::invalid_argument("compute_istd: no conditions");
    const std::vector<double> etas = cfg.eta_grid();
    if (etas.size() < 2) throw std::invalid_argument("compute_istd: need at least 2 sweep points");

    const int D = params.config.data_dim;
    const Vec null_cond = null_embedding(params);

    // Fixed latent pairs, independent of the condition set.
    std::vector<std::pair<Vec, Vec>> pairs;
    for (int p = 0; p < cfg.pairs_per_condition; ++p) {
        Rng ra = Rng::derive(cfg.seed, 0x69737464ULL, static_cast<std::uint64_t>(p), 0);
        Rng rb = Rng::derive(cfg.seed, 0x69737464ULL, static_cast<std::uint64_t>(p), 1);
        pairs.emplace_back(ra.gaussian_vec(D), rb.gaussian_vec(D));
    }

    SmoothnessReport rep;
    rep.etas = etas;
    rep.num_conditions = static_cast<int>(cfg.conditions.size());
    for (int cid : cfg.conditions) {
        const Vec cond = cond_embedding(params, cid);
        for (const auto& [ea, eb] : pairs) {
            std::vector<Vec> outputs;
            outputs.reserve(etas.size());
            for (double eta : etas) {
                const Vec xT = slerp(ea, eb, eta);
                outputs.push_back(
                    ddim_sample(s, params, adapter, xT, cond, null_cond, cfg.w, cfg.num_steps).x);
            }
            std::vector<double> dists;
            dists.reserve(outputs.size() - 1);
            for (std::size_t i = 0; i + 1 < outputs.size(); ++i)
                dists.push_back((outputs[i + 1] - outputs[i]).norm());
            rep.stds.push_back(population_std(dists));
            rep.distance_series.push_back(std::move(dists));
        }
    }
    double acc = 0.0;
    for (double v : rep.stds) acc += v;
    rep.istd = acc / static_cast<double>(rep.stds.size());
    return rep;
}

namespace {

// Windowed SSIM with a Gaussian weighting; win is clamped to the extent.
double ssim_pair(const Vec& x, const Vec& y) {
    constexpr double kC1 = 0.01 * 0.01;  // (K1 * range)^2 on [0,1] data
    constexpr double kC2 = 0.03 * 0.03;
    const int D = static_cast<int>(x.size());
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(D))));
    const bool is_image = side * side == D && side >= 4;

    auto window_ssim = [&](const std::vector<int>& idx, const std::vector<double>& wgt) {
        double mx = 0, my = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            mx += wgt[i] * x[idx[i]];
            my += wgt[i] * y[idx[i]];
        }
        double vx = 0, vy = 0, cxy = 0;
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const double dx = x[idx[i]] - mx;
            const double dy = y[idx[i]] - my;
            vx += wgt[i] * dx * dx;
            vy += wgt[i] * dy * dy;
            cxy += wgt[i] * dx * dy;
        }
        return ((2 * mx * my + kC1) * (2 * cxy + kC2)) /
               ((mx * mx + my * my + kC1) * (vx + vy + kC2));
    };

    double acc = 0.0;
    int count = 0;
    if (is_image) {
        const int win = std::min(7, side);
        std::vector<double> g(static_cast<std::size_t>(win));
        const double sigma = 1.5;
        for (int i = 0; i < win; ++i) {
            const double d = i - (win - 1) / 2.0;
            g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
        }
        for (int r0 = 0; r0 + win <= side; ++r0)
            for (int c0 = 0; c0 + win <= side; ++c0) {
                std::vector<int> idx;
                std::vector<double> wgt;
                double wsum = 0;
                for (int r = 0; r < win; ++r)
                    for (int c = 0; c < win; ++c) {
                        idx.push_back((r0 + r) * side + (c0 + c));
                        const double w = g[static_cast<std::size_t>(r)] * g[static_cast<std::size_t>(c)];
                        wgt.push_back(w);
                        wsum += w;
                    }
                for (auto& w : wgt) w /= wsum;
                acc += window_ssim(idx, wgt);
                ++count;
            }
    } else {
        const int win = std::min(7, D);
        std::vector<double> g(static_cast<std::size_t>(win));
        const double sigma = 1.5;
        double wsum = 0;
        for (int i = 0; i < win; ++i) {
            const double d = i - (win - 1) / 2.0;
            g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2 * sigma * sigma));
            wsum += g[static_cast<std::size_t>(i)];
        }
        for (auto& w : g) w /= wsum;
        for (int o = 0; o + win <= D; ++o) {
            std::vector<int> idx;
            for (int i = 0; i < win; ++i) idx.push_back(o + i);
            acc += window_ssim(idx, g);
            ++count;
        }
    }
    return acc / count;
}

}  // namespace

ReconReport recon_metrics(const std::vector<Vec>& originals, const std::vector<Vec>& reconstructions) {
    if (originals.size() != reconstructions.size() || originals.empty())
        throw std::invalid_argument("recon_metrics: need equal-length nonempty lists");
    ReconReport rep;
    for (std::size_t i = 0; i < originals.size(); ++i) {
        if (originals[i].size() != reconstructions[i].size())
            throw std::invalid_argument("recon_metrics: dimension mismatch");
        const double mse = (originals[i] - reconstructions[i]).squaredNorm() /
                           static_cast<double>(originals[i].size());
        const double psnr =
            mse == 0.0 ? std::numeric_limits<double>::infinity() : 10.0 * std::log10(1.0 / mse);
        rep.mse.push_back(mse);
        rep.psnr.push_back(psnr);
        rep.ssim.push_back(ssim_pair(originals[i], reconstructions[i]));
    }
    const double n = static_cast<double>(rep.mse.size());
    for (double v : rep.mse) rep.mean_mse += v / n;
    for (double v : rep.psnr) rep.mean_psnr += v / n;
    for (double v : rep.ssim) rep.mean_ssim += v / n;
    return rep;
}

double mmd_quality(const std::vector<Vec>& model_samples, const std::vector<Vec>& data_samples,
                   double bandwidth) {
    if (model_samples.empty() || data_samples.empty())
        throw std::invalid_argument("mmd_quality: both sample sets must be nonempty");
    if (!(bandwidth > 0.0)) throw std::invalid_argument("mmd_quality: bandwidth must be > 0");
    const double inv2s2 = 1.0 / (2.0 * bandwidth * bandwidth);
    auto k = [&](const Vec& a, const Vec& b) { return std::exp(-(a - b).squaredNorm() * inv2s2); };

    const std::size_t m = model_samples.size();
    const std::size_t n = data_samples.size();
    double kxx = 0, kyy = 0, kxy = 0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j) kxx += k(model_samples[i], model_samples[j]);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) kyy += k(data_samples[i], data_samples[j]);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) kxy += k(model_samples[i], data_samples[j]);

    double est = 0.0;
    if (m > 1) est += kxx / (static_cast<double>(m) * (m - 1));
    if (n > 1) est += kyy / (static_cast<double>(n) * (n - 1));
    est -= 2.0 * kxy / (static_cast<double>(m) * static_cast<double>(n));
    return est;
}

double mmd_median_bandwidth(const std::vector<Vec>& a, const std::vector<Vec>& b) {
    std::vector<const Vec*> pool;
    for (const auto& v : a) pool.push_back(&v);
    for (const auto& v : b) pool.push_back(&v);
    const std::size_t cap = 512;
    const std::size_t n = std::min(pool.size(), cap);
    std::vector<double> dists;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) dists.push_back((*pool[i] - *pool[j]).norm());
    if (dists.empty()) return 1.0;
    std::nth_element(dists.begin(), dists.begin() + static_cast<long>(dists.size() / 2), dists.end());
    const double med = dists[dists.size() / 2];
    return med > 0.0 ? med : 1.0;
}

std::string PairedReport::render() const {
    std::ostringstream os;
    os << std::left << std::setw(20) << "metric" << std::right << std::setw(14) << "smooth"
       << std::setw(14) << "baseline" << std::setw(12) << "ratio" << "\n";
    for (const auto& r : rows) {
        os << std::left << std::setw(20) << r.metric << std::right << std::fixed
           << std::setprecision(6) << std::setw(14) << r.smooth << std::setw(14) << r.baseline
           << std::setprecision(4) << std::setw(12) << r.ratio << "\n";
    }
    return os.str();
}

std::string PairedReport::to_csv() const {
    std::ostringstream os;
    os << "metric,smooth,baseline,ratio\n";
    os << std::setprecision(12);
    for (const auto& r : rows)
        os << r.metric << "," << r.smooth << "," << r.baseline << "," << r.ratio << "\n";
    return os.str();
}

PairedReport paired_report(const NoiseSchedule& s, const ParameterSet& smooth,
                           const ParameterSet& baseline, const std::vector<Vec>& heldout,
                           const std::vector<int>& heldout_labels,
                           const std::vector<Vec>& data_reference, const PairedReportConfig& cfg) {
    if (smooth.config.data_dim != baseline.config.data_dim)
        throw std::invalid_argument("paired_report: mismatched model dimensions");
    PairedReport rep;
    auto push = [&](const std::string& name, double sv, double bv) {
        rep.rows.push_back({name, sv, bv, bv != 0.0 ? sv / bv : 0.0});
    };

    const double istd_s = compute_istd(s, smooth, nullptr, cfg.istd).istd;
    const double istd_b = compute_istd(s, baseline, nullptr, cfg.istd).istd;
    push("istd", istd_s, istd_b);

    auto roundtrip_mse = [&](const ParameterSet& m, bool use_nti, int count) {
        std::vector<Vec> orig, rec;
        const int n = std::min<int>(count, static_cast<int>(heldout.size()));
        for (int i = 0; i < n; ++i) {
            const Vec cond = cond_embedding(m, heldout_labels[static_cast<std::size_t>(i)]);
            InversionResult inv =
                use_nti ? nti_invert(s, m, nullptr, heldout[static_cast<std::size_t>(i)], cond,
                                     cfg.recon_w, cfg.num_steps, cfg.nti)
                        : ddim_invert_result(s, m, nullptr, heldout[static_cast<std::size_t>(i)],
                                             cond, cfg.recon_w, cfg.num_steps);
            orig.push_back(heldout[static_cast<std::size_t>(i)]);
            rec.push_back(reconstruct(s, m, nullptr, inv, cond));
        }
        return recon_metrics(orig, rec).mean_mse;
    };
    push("ddim_recon_mse", roundtrip_mse(smooth, false, cfg.recon_samples),
         roundtrip_mse(baseline, false, cfg.recon_samples));
    push("nti_recon_mse", roundtrip_mse(smooth, true, cfg.nti_samples),
         roundtrip_mse(baseline, true, cfg.nti_samples));

    auto draw_samples = [&](const ParameterSet& m) {
        std::vector<Vec> out;
        Rng rng = Rng::derive(cfg.seed, 0x6d6d64ULL);
        const Vec nc = null_embedding(m);
        const int C = m.config.num_conditions;
        for (int i = 0; i < cfg.mmd_samples; ++i) {
            const Vec xT = rng.gaussian_vec(m.config.data_dim);
            const Vec cond = cond_embedding(m, i % C);
            out.push_back(ddim_sample(s, m, nullptr, xT, cond, nc, cfg.istd.w, cfg.num_steps).x);
        }
        return out;
    };
    const std::vector<Vec> samp_s = draw_samples(smooth);
    const std::vector<Vec> samp_b = draw_samples(baseline);
    const double bw = mmd_median_bandwidth(data_reference, data_reference);
    push("mmd", mmd_quality(samp_s, data_reference, bw), mmd_quality(samp_b, data_reference, bw));

    return rep;
}

}  // namespace difflab
