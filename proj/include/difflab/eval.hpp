#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/inversion.hpp"
#include "difflab/sampler.hpp"

namespace difflab {

struct SmoothnessReport {
    std::vector<std::vector<double>> distance_series;  // one series per (condition, pair)
    std::vector<double> stds;                          // matching standard deviations
    double istd = 0.0;                                 // mean of stds
    std::vector<double> etas;
    int num_conditions = 0;
};

struct IstdConfig {
    std::vector<int> conditions;
    int pairs_per_condition = 1;
    int num_steps = 50;
    double w = 1.0;
    std::uint64_t seed = 0;
    std::vector<double> etas;  // empty = 0.0 .. 1.0 step 0.1

    std::vector<double> eta_grid() const;
};

// Latent pairs are drawn from (seed, pair index) only and reused for every
// condition, so the report is invariant to condition order and models
// compared under one seed see identical noise.
SmoothnessReport compute_istd(const NoiseSchedule& s, const ParameterSet& params,
                              const LoraAdapter* adapter, const IstdConfig& cfg);

struct ReconReport {
    std::vector<double> mse, psnr, ssim;
    double mean_mse = 0.0, mean_psnr = 0.0, mean_ssim = 0.0;
};

// Data range fixed to [0,1] for PSNR/SSIM. Square dimensions get a 2-D
// Gaussian-window SSIM; other dimensions fall back to a 1-D window.
ReconReport recon_metrics(const std::vector<Vec>& originals, const std::vector<Vec>& reconstructions);

// Unbiased squared MMD with a Gaussian kernel.
double mmd_quality(const std::vector<Vec>& model_samples, const std::vector<Vec>& data_samples,
                   double bandwidth);
double mmd_median_bandwidth(const std::vector<Vec>& a, const std::vector<Vec>& b);

struct PairedRow {
    std::string metric;
    double smooth = 0.0;
    double baseline = 0.0;
    double ratio = 0.0;  // smooth / baseline
};

struct PairedReport {
    std::vector<PairedRow> rows;
    std::string render() const;  // human-readable table
    std::string to_csv() const;
};

struct PairedReportConfig {
    IstdConfig istd;
    int recon_samples = 64;    // held-out round-trip count
    int nti_samples = 16;      // NTI is costlier, fewer samples
    double recon_w = 7.5;
    int num_steps = 50;
    int mmd_samples = 256;
    NtiOptions nti;
    std::uint64_t seed = 0;
};

PairedReport paired_report(const NoiseSchedule& s, const ParameterSet& smooth,
                           const ParameterSet& baseline, const std::vector<Vec>& heldout,
                           const std::vector<int>& heldout_labels,
                           const std::vector<Vec>& data_reference, const PairedReportConfig& cfg);

}  // namespace difflab
