#pragma once

#include <functional>
#include <string>
#include <vector>

#include "difflab/denoiser.hpp"
#include "difflab/schedule.hpp"

namespace difflab {

struct TrajectoryStep {
    int t;
    Vec latent;    // latent at which the model was queried / produced
    Vec eps_pred;  // model output used for this step
};

struct TrajectoryRecord {
    enum class Direction { BackwardSampling, ForwardInversion };
    Direction direction = Direction::BackwardSampling;
    double guidance = 1.0;
    std::vector<TrajectoryStep> steps;
};

// Ascending sub-sequence tau_1 < ... < tau_S with tau_S == T, uniform stride.
std::vector<int> substeps(int T, int num_steps);

// w * eps(x,t,cond) + (1-w) * eps(x,t,null). w == 1 short-circuits to the
// conditional branch.
Vec cfg_predict(const ParameterSet& params, const LoraAdapter* adapter, const Vec& x_t, int t,
                const Vec& cond, const Vec& null_cond, double w);

// One deterministic DDIM update from step t to t_prev given a noise estimate.
Vec ddim_update(const NoiseSchedule& s, const Vec& x_t, const Vec& eps, int t, int t_prev);

// Single full-resolution step (t -> t-1, with abar_0 = 1 at t = 1).
Vec ddim_step(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
              const Vec& x_t, int t, const Vec& cond, const Vec& null_cond, double w);

// Per-step embedding overrides; k indexes the sub-sequence (0-based,
// ascending), t is the schedule step. Used by NTI reconstruction (per-step
// nulls) and prompt-switch editing (condition switch).
struct SamplerHooks {
    std::function<Vec(int k, int t)> cond;
    std::function<Vec(int k, int t)> null_cond;
};

struct SampleResult {
    Vec x;
    TrajectoryRecord trajectory;
};

SampleResult ddim_sample(const NoiseSchedule& s, const ParameterSet& params,
                         const LoraAdapter* adapter, const Vec& x_T, const Vec& cond,
                         const Vec& null_cond, double w, int num_steps);

SampleResult ddim_sample_with(const NoiseSchedule& s, const ParameterSet& params,
                              const LoraAdapter* adapter, const Vec& x_T, double w, int num_steps,
                              const SamplerHooks& hooks);

SampleResult ddim_invert(const NoiseSchedule& s, const ParameterSet& params,
                         const LoraAdapter* adapter, const Vec& x0, const Vec& cond,
                         const Vec& null_cond, double w, int num_steps);

// Spherical linear interpolation along the great arc; near-parallel inputs
// fall back to linear interpolation, antiparallel inputs are rejected.
Vec slerp(const Vec& a, const Vec& b, double eta);

}  // namespace difflab
