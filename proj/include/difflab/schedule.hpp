#pragma once

#include <Eigen/Dense>
#include <vector>

namespace difflab {

using Vec = Eigen::VectorXd;

// Noise schedule: beta/alpha/alpha_bar tables plus every coefficient derived
// from them. Steps are 1-based to match the usual diffusion convention;
// internally the tables are stored 0-based, so table index t-1 holds step t.
// alpha_bar(0) == 1 (clean data), used by the final sampling step.
struct NoiseSchedule {
    int T = 0;
    Vec betas;       // length T, betas[i] for step i+1
    Vec alphas;      // 1 - beta
    Vec alpha_bars;  // running product of alphas

    double beta(int t) const { return betas[check(t) - 1]; }
    double alpha(int t) const { return alphas[check(t) - 1]; }

    // alpha_bar with the t=0 extension.
    double alpha_bar(int t) const {
        if (t == 0) return 1.0;
        return alpha_bars[check(t) - 1];
    }

    double sqrt_alpha_bar(int t) const { return std::sqrt(alpha_bar(t)); }
    double sqrt_one_minus_alpha_bar(int t) const { return std::sqrt(1.0 - alpha_bar(t)); }

    int check(int t) const;
};

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

// Serializable description of a linear schedule.
struct ScheduleSpec {
    int T = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    NoiseSchedule make() const { return make_linear_schedule(T, beta_start, beta_end); }
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
Vec forward_diffuse(const NoiseSchedule& s, const Vec& x0, const Vec& eps, int t);

// x0_hat = (x_t - sqrt(1 - abar_t) eps_pred) / sqrt(abar_t)
Vec predict_x0(const NoiseSchedule& s, const Vec& x_t, const Vec& eps_pred, int t);

}  // namespace difflab
