#include "difflab/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace difflab {

std::vector<int> substeps(int T, int num_steps) {
    if (num_steps < 1 || num_steps > T)
        throw std::invalid_argument("substeps: need 1 <= num_steps <= T");
    std::vector<int> taus(static_cast<std::size_t>(num_steps));
    for (int k = 1; k <= num_steps; ++k)
        taus[static_cast<std::size_t>(k - 1)] =
            static_cast<int>(static_cast<long long>(k) * T / num_steps);
    return taus;  // strictly increasing, ends at T
}

Vec cfg_predict(const ParameterSet& params, const LoraAdapter* adapter, const Vec& x_t, int t,
                const Vec& cond, const Vec& null_cond, double w) {
    const Vec e_c = predict_noise(params, adapter, x_t, t, cond);
    if (w == 1.0) return e_c;
    const Vec e_n = predict_noise(params, adapter, x_t, t, null_cond);
    return w * e_c + (1.0 - w) * e_n;
}

Vec ddim_update(const NoiseSchedule& s, const Vec& x_t, const Vec& eps, int t, int t_prev) {
    if (x_t.size() != eps.size()) throw std::invalid_argument("ddim_update: dimension mismatch");
    const Vec x0_hat = predict_x0(s, x_t, eps, t);
    return s.sqrt_alpha_bar(t_prev) * x0_hat + s.sqrt_one_minus_alpha_bar(t_prev) * eps;
}

Vec ddim_step(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
              const Vec& x_t, int t, const Vec& cond, const Vec& null_cond, double w) {
    s.check(t);
    const Vec eps = cfg_predict(params, adapter, x_t, t, cond, null_cond, w);
    return ddim_update(s, x_t, eps, t, t - 1);
}

SampleResult ddim_sample_with(const NoiseSchedule& s, const ParameterSet& params,
                              const LoraAdapter* adapter, const Vec& x_T, double w, int num_steps,
                              const SamplerHooks& hooks) {
    const std::vector<int> taus = substeps(s.T, num_steps);
    SampleResult out;
    out.trajectory.direction = TrajectoryRecord::Direction::BackwardSampling;
    out.trajectory.guidance = w;
    out.trajectory.steps.reserve(taus.size());

    Vec x = x_T;
    for (int k = static_cast<int>(taus.size()) - 1; k >= 0; --k) {
        const int t = taus[static_cast<std::size_t>(k)];
        const int t_prev = k > 0 ? taus[static_cast<std::size_t>(k - 1)] : 0;
        const Vec cond = hooks.cond(k, t);
        const Vec null_cond = hooks.null_cond(k, t);
        const Vec eps = cfg_predict(params, adapter, x, t, cond, null_cond, w);
        out.trajectory.steps.push_back({t, x, eps});
        x = ddim_update(s, x, eps, t, t_prev);
    }
    out.x = std::move(x);
    return out;
}

SampleResult ddim_sample(const NoiseSchedule& s, const ParameterSet& params,
                         const LoraAdapter* adapter, const Vec& x_T, const Vec& cond,
                         const Vec& null_cond, double w, int num_steps) {
    SamplerHooks hooks;
    hooks.cond = [&](int, int) { return cond; };
    hooks.null_cond = [&](int, int) { return null_cond; };
    return ddim_sample_with(s, params, adapter, x_T, w, num_steps, hooks);
}

SampleResult ddim_invert(const NoiseSchedule& s, const ParameterSet& params,
                         const LoraAdapter* adapter, const Vec& x0, const Vec& cond,
                         const Vec& null_cond, double w, int num_steps) {
    const std::vector<int> taus = substeps(s.T, num_steps);
    SampleResult out;
    out.trajectory.direction = TrajectoryRecord::Direction::ForwardInversion;
    out.trajectory.guidance = w;
    out.trajectory.steps.reserve(taus.size());

    Vec x = x0;
    int t_prev = 0;
    for (int t : taus) {
        // Local linear approximation: the noise estimate at the lower latent
        // stands in for the one the backward step would have used.
        const Vec eps = cfg_predict(params, adapter, x, t, cond, null_cond, w);
        const Vec x0_hat = (x - s.sqrt_one_minus_alpha_bar(t_prev) * eps) / s.sqrt_alpha_bar(t_prev);
        x = s.sqrt_alpha_bar(t) * x0_hat + s.sqrt_one_minus_alpha_bar(t) * eps;
        out.trajectory.steps.push_back({t, x, eps});
        t_prev = t;
    }
    out.x = x;
    return out;
}

Vec slerp(const Vec& a, const Vec& b, double eta) {
    if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("slerp: eta must lie in [0, 1]");
    if (eta == 0.0) return a;
    if (eta == 1.0) return b;
    const double na = a.norm();
    const double nb = b.norm();
    if (na == 0.0 || nb == 0.0) throw std::invalid_argument("slerp: inputs must be nonzero");

    double c = a.dot(b) / (na * nb);
    c = std::min(1.0, std::max(-1.0, c));
    const double theta = std::acos(c);
    if (theta > M_PI - 1e-6) throw std::invalid_argument("slerp: antiparallel inputs, arc undefined");
    if (theta < 1e-4) return a + eta * (b - a);  // sin(theta) too small, fall back

    const double st = std::sin(theta);
    return (std::sin((1.0 - eta) * theta) / st) * a + (std::sin(eta * theta) / st) * b;
}

}  // namespace difflab
