#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "difflab/denoiser.hpp"
#include "difflab/schedule.hpp"

namespace difflab::checks {

// Gradient-norm identity: the scalar-gradient reverse pass must equal the
// norm computed from an explicitly assembled Jacobian (one reverse pass per
// output dimension). Returns the worst relative error over `draws` random
// (x0, eps, t, direction) tuples for each data dimension in `dims`.
double vjp_identity_max_rel_error(const std::vector<int>& dims, int draws, std::uint64_t seed);

// Second-order check: d(reg loss)/d(theta) from the tape vs central finite
// differences on `n_checks` randomly chosen scalar parameters.
double svr_grad_max_rel_error(int n_checks, double h, std::uint64_t seed);

// Closed form for a linear map with orthogonal Jacobian: x0_hat = K Q eps + c
// gives measured norm sqrt(1-abar_t) * K for every unit direction.
struct OrthogonalCheck {
    double norm_err = 0.0;  // worst |measured - closed form|
    double loss_err = 0.0;  // worst |reg term - closed form|
};
OrthogonalCheck orthogonal_closed_form(std::uint64_t seed);

// Fast exact/unit properties: schedule arithmetic, diffusion round trip,
// slerp endpoints and angles, guidance reductions, moving-average fixed point.
std::vector<std::pair<std::string, bool>> unit_properties();

// Full gate used by the `verify` subcommand; prints one line per check.
bool run_verification(std::ostream& os);

}  // namespace difflab::checks
