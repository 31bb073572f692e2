#include "difflab/inversion.hpp"

#include <cmath>
#include <stdexcept>

#include "difflab/training.hpp"

namespace difflab {

namespace {

struct StepCoeffs {
    int t, t_prev;
    double sab_t, somab_t, sab_prev, somab_prev;
};

StepCoeffs coeffs(const NoiseSchedule& s, int t, int t_prev) {
    return {t, t_prev, s.sqrt_alpha_bar(t), s.sqrt_one_minus_alpha_bar(t),
            s.sqrt_alpha_bar(t_prev), s.sqrt_one_minus_alpha_bar(t_prev)};
}

Vec guided_step(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                const Vec& z, const StepCoeffs& c, const Vec& cond, const Vec& null_cond, double w) {
    const Vec eps = cfg_predict(params, adapter, z, c.t, cond, null_cond, w);
    return ddim_update(s, z, eps, c.t, c.t_prev);
}

double step_residual(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                     const Vec& z, const StepCoeffs& c, const Vec& cond, const Vec& null_cond,
                     double w, const Vec& target) {
    return (target - guided_step(s, params, adapter, z, c, cond, null_cond, w)).squaredNorm();
}

// d residual / d null via the tape; the conditional branch is a constant.
Vec null_gradient(const ParameterSet& params, const LoraAdapter* adapter, const Vec& z,
                  const StepCoeffs& c, const Vec& cond, const Vec& null_cond, double w,
                  const Vec& target) {
    ad::Tape tape;
    TapeModel model(tape, params, adapter);
    const Vec e_c = predict_noise(params, adapter, z, c.t, cond);
    const int null_leaf = tape.leaf(null_cond, true);
    const int z_const = tape.constant(z);
    const int e_n = model.forward(z_const, c.t, null_leaf);
    const int e = tape.add(tape.scale(tape.constant(e_c), w), tape.scale(e_n, 1.0 - w));
    const int x0_hat = tape.scale(tape.sub(z_const, tape.scale(e, c.somab_t)), 1.0 / c.sab_t);
    const int pred = tape.add(tape.scale(x0_hat, c.sab_prev), tape.scale(e, c.somab_prev));
    const int resid = tape.sqnorm(tape.sub(tape.constant(target), pred));
    const int g = tape.gradients(resid, {null_leaf})[0];
    return tape.val(g).col(0);
}

// Pivot latents in ascending order, with x0 prepended at index 0 so that
// targets[k] is the sampling target when stepping down from taus[k].
std::vector<Vec> pivot_targets(const TrajectoryRecord& traj, const Vec& x0) {
    std::vector<Vec> targets;
    targets.push_back(x0);
    for (const auto& st : traj.steps) targets.push_back(st.latent);
    targets.pop_back();  // the topmost latent is the start, never a target
    return targets;
}

struct NtiTrack {
    Vec z;                       // current latent, stepped down as nulls finalize
    std::vector<Vec> targets;    // ascending, index k
    std::vector<double> residuals;
};

// Shared inner loop for one or two trajectories.
void run_nti(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
             std::vector<NtiTrack>& tracks, const Vec& cond, double w, int num_steps,
             const NtiOptions& opt, NullSchedule& nulls, int& lr_halvings) {
    if (opt.inner_iters < 0) throw std::invalid_argument("nti: inner_iters must be >= 0");
    const std::vector<int> taus = substeps(s.T, num_steps);
    nulls.w = w;
    nulls.nulls.assign(static_cast<std::size_t>(num_steps), null_embedding(params));
    for (auto& tr : tracks) tr.residuals.assign(static_cast<std::size_t>(num_steps), 0.0);

    Vec null_cur = null_embedding(params);
    for (int k = num_steps - 1; k >= 0; --k) {
        const int t = taus[static_cast<std::size_t>(k)];
        const int t_prev = k > 0 ? taus[static_cast<std::size_t>(k - 1)] : 0;
        const StepCoeffs c = coeffs(s, t, t_prev);

        auto total_residual = [&](const Vec& nl) {
            double r = 0.0;
            for (const auto& tr : tracks)
                r += step_residual(s, params, adapter, tr.z, c, cond, nl, w,
                                   tr.targets[static_cast<std::size_t>(k)]);
            return r;
        };

        if (w != 1.0 && opt.inner_iters > 0) {  // at w=1 the null branch is inert
            double lr = opt.inner_lr;
            double cur = total_residual(null_cur);
            for (int it = 0; it < opt.inner_iters && cur > opt.early_stop_tol; ++it) {
                Vec g = Vec::Zero(null_cur.size());
                for (const auto& tr : tracks)
                    g += null_gradient(params, adapter, tr.z, c, cond, null_cur, w,
                                       tr.targets[static_cast<std::size_t>(k)]);
                const Vec trial = null_cur - lr * g;
                const double r_trial = total_residual(trial);
                if (!std::isfinite(r_trial)) throw NumericalAbort("nti: non-finite residual");
                if (r_trial <= cur) {
                    null_cur = trial;
                    cur = r_trial;
                } else {
                    lr *= 0.5;  // monotone inner loop, logged via lr_halvings
                    ++lr_halvings;
                }
            }
        }

        nulls.nulls[static_cast<std::size_t>(k)] = null_cur;
        for (auto& tr : tracks) {
            tr.residuals[static_cast<std::size_t>(k)] = step_residual(
                s, params, adapter, tr.z, c, cond, null_cur, w, tr.targets[static_cast<std::size_t>(k)]);
            tr.z = guided_step(s, params, adapter, tr.z, c, cond, null_cur, w);
        }
    }
}

}  // namespace

InversionResult ddim_invert_result(const NoiseSchedule& s, const ParameterSet& params,
                                   const LoraAdapter* adapter, const Vec& x0, const Vec& cond,
                                   double w, int num_steps) {
    NtiOptions off;
    off.inner_iters = 0;
    InversionResult r = nti_invert(s, params, adapter, x0, cond, w, num_steps, off);
    r.method = "ddim";
    return r;
}

InversionResult nti_invert(const NoiseSchedule& s, const ParameterSet& params,
                           const LoraAdapter* adapter, const Vec& x0, const Vec& cond, double w,
                           int num_steps, const NtiOptions& opt) {
    const Vec base_null = null_embedding(params);
    const SampleResult pivot = ddim_invert(s, params, adapter, x0, cond, base_null, w, num_steps);

    InversionResult out;
    out.x_T = pivot.x;
    out.source = x0;
    out.cond = cond;
    out.num_steps = num_steps;
    out.method = "nti";

    std::vector<NtiTrack> tracks(1);
    tracks[0].z = pivot.x;
    tracks[0].targets = pivot_targets(pivot.trajectory, x0);
    run_nti(s, params, adapter, tracks, cond, w, num_steps, opt, out.null_schedule, out.lr_halvings);
    out.residuals = std::move(tracks[0].residuals);
    return out;
}

SharedInversion nti_invert_shared(const NoiseSchedule& s, const ParameterSet& params,
                                  const LoraAdapter* adapter, const Vec& x0_a, const Vec& x0_b,
                                  const Vec& cond, double w, int num_steps, const NtiOptions& opt) {
    if (x0_a.size() != x0_b.size()) throw std::invalid_argument("nti_invert_shared: dimension mismatch");
    const Vec base_null = null_embedding(params);
    const SampleResult pa = ddim_invert(s, params, adapter, x0_a, cond, base_null, w, num_steps);
    const SampleResult pb = ddim_invert(s, params, adapter, x0_b, cond, base_null, w, num_steps);

    SharedInversion out;
    std::vector<NtiTrack> tracks(2);
    tracks[0].z = pa.x;
    tracks[0].targets = pivot_targets(pa.trajectory, x0_a);
    tracks[1].z = pb.x;
    tracks[1].targets = pivot_targets(pb.trajectory, x0_b);

    int halvings = 0;
    run_nti(s, params, adapter, tracks, cond, w, num_steps, opt, out.shared_nulls, halvings);

    auto pack = [&](const SampleResult& pivot, const Vec& x0, std::vector<double> residuals) {
        InversionResult r;
        r.x_T = pivot.x;
        r.source = x0;
        r.cond = cond;
        r.num_steps = num_steps;
        r.method = "nti-shared";
        r.null_schedule = out.shared_nulls;
        r.residuals = std::move(residuals);
        r.lr_halvings = halvings;
        return r;
    };
    out.a = pack(pa, x0_a, std::move(tracks[0].residuals));
    out.b = pack(pb, x0_b, std::move(tracks[1].residuals));
    return out;
}

Vec reconstruct(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                const InversionResult& inv, const Vec& cond) {
    if (static_cast<int>(inv.null_schedule.nulls.size()) != inv.num_steps)
        throw std::invalid_argument("reconstruct: null schedule length does not match num_steps");
    SamplerHooks hooks;
    hooks.cond = [&](int, int) { return cond; };
    hooks.null_cond = [&](int k, int) { return inv.null_schedule.nulls[static_cast<std::size_t>(k)]; };
    return ddim_sample_with(s, params, adapter, inv.x_T, inv.null_schedule.w, inv.num_steps, hooks).x;
}

std::vector<Vec> interpolate_real(const NoiseSchedule& s, const ParameterSet& params,
                                  const LoraAdapter* adapter, const Vec& x0_a, const Vec& x0_b,
                                  const Vec& cond, const std::vector<double>& etas, double w,
                                  int num_steps, const NtiOptions& opt) {
    const SharedInversion inv = nti_invert_shared(s, params, adapter, x0_a, x0_b, cond, w, num_steps, opt);
    SamplerHooks hooks;
    hooks.cond = [&](int, int) { return cond; };
    hooks.null_cond = [&](int k, int) { return inv.shared_nulls.nulls[static_cast<std::size_t>(k)]; };

    std::vector<Vec> out;
    out.reserve(etas.size());
    for (double eta : etas) {
        const Vec xT = slerp(inv.a.x_T, inv.b.x_T, eta);
        out.push_back(ddim_sample_with(s, params, adapter, xT, w, num_steps, hooks).x);
    }
    return out;
}

Vec edit_prompt_switch(const NoiseSchedule& s, const ParameterSet& params,
                       const LoraAdapter* adapter, const InversionResult& inv, const Vec& cond_src,
                       const Vec& cond_trg, double r) {
    if (!(r > 0.0 && r <= 1.0)) throw std::invalid_argument("edit_prompt_switch: r must lie in (0, 1]");
    if (static_cast<int>(inv.null_schedule.nulls.size()) != inv.num_steps)
        throw std::invalid_argument("edit_prompt_switch: null schedule length does not match num_steps");
    const double threshold = static_cast<double>(s.T) * r;
    SamplerHooks hooks;
    hooks.cond = [&](int, int t) { return t > threshold ? cond_src : cond_trg; };
    hooks.null_cond = [&](int k, int) { return inv.null_schedule.nulls[static_cast<std::size_t>(k)]; };
    return ddim_sample_with(s, params, adapter, inv.x_T, inv.null_schedule.w, inv.num_steps, hooks).x;
}

}  // namespace difflab
