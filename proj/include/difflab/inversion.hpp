#pragma once

#include <string>
#include <vector>

#include "difflab/sampler.hpp"

namespace difflab {

// Per-step learnable null embeddings, indexed by the sampling sub-sequence
// (k = 0 is the lowest step, k = S-1 the step at T).
struct NullSchedule {
    double w = 7.5;
    std::vector<Vec> nulls;
};

struct InversionResult {
    Vec x_T;
    NullSchedule null_schedule;
    std::vector<double> residuals;  // per sub-step, ascending k, final values
    Vec source;                     // the inverted x0
    Vec cond;                       // condition embedding used
    int num_steps = 0;
    std::string method;  // "ddim" or "nti"
    int lr_halvings = 0;
};

struct NtiOptions {
    int inner_iters = 10;
    double inner_lr = 1e-2;
    double early_stop_tol = 1e-5;
};

// Plain DDIM inversion packaged with its per-step residuals (equivalent to
// NTI with the inner loop disabled).
InversionResult ddim_invert_result(const NoiseSchedule& s, const ParameterSet& params,
                                   const LoraAdapter* adapter, const Vec& x0, const Vec& cond,
                                   double w, int num_steps);

InversionResult nti_invert(const NoiseSchedule& s, const ParameterSet& params,
                           const LoraAdapter* adapter, const Vec& x0, const Vec& cond, double w,
                           int num_steps, const NtiOptions& opt);

struct SharedInversion {
    InversionResult a;
    InversionResult b;
    NullSchedule shared_nulls;
};

// Joint optimization of one null schedule over both pivot trajectories.
SharedInversion nti_invert_shared(const NoiseSchedule& s, const ParameterSet& params,
                                  const LoraAdapter* adapter, const Vec& x0_a, const Vec& x0_b,
                                  const Vec& cond, double w, int num_steps, const NtiOptions& opt);

Vec reconstruct(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                const InversionResult& inv, const Vec& cond);

std::vector<Vec> interpolate_real(const NoiseSchedule& s, const ParameterSet& params,
                                  const LoraAdapter* adapter, const Vec& x0_a, const Vec& x0_b,
                                  const Vec& cond, const std::vector<double>& etas, double w,
                                  int num_steps, const NtiOptions& opt);

// Reconstruction with the condition switched from src to trg once t <= T*r.
Vec edit_prompt_switch(const NoiseSchedule& s, const ParameterSet& params,
                       const LoraAdapter* adapter, const InversionResult& inv, const Vec& cond_src,
                       const Vec& cond_trg, double r);

}  // namespace difflab
