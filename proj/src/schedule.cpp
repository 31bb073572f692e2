#include "difflab/schedule.hpp"

#include <stdexcept>

namespace difflab {

int NoiseSchedule::check(int t) const {
    if (t < 1 || t > T) throw std::out_of_range("schedule: step index out of range");
    return t;
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("schedule: T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("schedule: need 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        const double beta = beta_start + (beta_end - beta_start) * i / (T - 1);
        s.betas[i] = beta;
        s.alphas[i] = 1.0 - beta;
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
    }
    return s;
}

Vec forward_diffuse(const NoiseSchedule& s, const Vec& x0, const Vec& eps, int t) {
    if (x0.size() != eps.size()) throw std::invalid_argument("forward_diffuse: dimension mismatch");
    s.check(t);
    return s.sqrt_alpha_bar(t) * x0 + s.sqrt_one_minus_alpha_bar(t) * eps;
}

Vec predict_x0(const NoiseSchedule& s, const Vec& x_t, const Vec& eps_pred, int t) {
    if (x_t.size() != eps_pred.size()) throw std::invalid_argument("predict_x0: dimension mismatch");
    s.check(t);
    return (x_t - s.sqrt_one_minus_alpha_bar(t) * eps_pred) / s.sqrt_alpha_bar(t);
}

}  // namespace difflab
