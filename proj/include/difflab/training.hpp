#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "difflab/denoiser.hpp"
#include "difflab/rng.hpp"
#include "difflab/schedule.hpp"
#include "difflab/tape.hpp"

namespace difflab {

// Raised when a loss or gradient goes non-finite; the CLI maps this to its
// numerical-abort exit code.
struct NumericalAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Online moving-average target for the variation regularizer. The first
// update seeds the average with the observed mean.
struct EmaTracker {
    double a = 0.0;
    double decay = 0.99;
    bool initialized = false;
};

EmaTracker ema_update(EmaTracker ema, const std::vector<double>& observed_norms);

struct TrainConfig {
    double lambda = 1.0;
    double learning_rate = 1e-4;
    double weight_decay = 1e-4;
    int batch_size = 32;
    int total_iterations = 1000;
    std::uint64_t seed = 0;
    int lora_rank = 0;  // 0 = full training
    double ema_decay = 0.99;
    int reg_interval = 1;
    bool share_reg_noise = false;  // reuse the base-loss noise inside the regularizer
    int checkpoint_every = 0;      // 0 = final checkpoint only
    int log_every = 10;

    void validate() const;
};

struct Batch {
    std::vector<Vec> x0;
    std::vector<int> cond;
};

// Gaussian direction normalized to exact unit length.
Vec svr_direction(int dim, Rng& rng);

// ---- Tape-level loss builders (shared by train() and the oracles) ----

// Mean over the batch of ||eps - eps_hat||^2. Noise and step indices are
// consumed from `rng` in a fixed order; the drawn pairs are returned so the
// regularizer can optionally share them.
struct BaseLossDraws {
    std::vector<int> t;
    std::vector<Vec> eps;
};
int base_loss_node(ad::Tape& tape, const TapeModel& model, const NoiseSchedule& s,
                   const Batch& batch, Rng& rng, BaseLossDraws* draws = nullptr);

// Step-wise variation regularizer, Jacobian-vector norm via the
// scalar-gradient identity. Returns the loss node plus the per-sample
// observed norms feeding the EMA.
struct SvrBuild {
    int loss_node = -1;
    std::vector<double> norms;
};
SvrBuild svr_loss_node(ad::Tape& tape, const TapeModel& model, const NoiseSchedule& s,
                       const Batch& batch, double ema_a, Rng& rng,
                       const BaseLossDraws* shared = nullptr);

// ---- Value-level wrappers ----

double base_loss(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                 const Batch& batch, std::uint64_t noise_seed);

struct SvrEval {
    double loss = 0.0;
    std::vector<double> norms;
};
SvrEval svr_loss(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                 const Batch& batch, double ema_a, std::uint64_t seed);

inline double total_loss(double base, double reg, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("total_loss: lambda must be >= 0");
    return base + lambda * reg;
}

// ---- Optimizer ----

class AdamW {
public:
    AdamW(double lr, double weight_decay) : lr_(lr), weight_decay_(weight_decay) {}

    void step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads);

private:
    double lr_;
    double weight_decay_;
    double beta1_ = 0.9;
    double beta2_ = 0.999;
    double eps_ = 1e-8;
    long steps_ = 0;
    std::vector<Mat> m_, v_;
};

// ---- Training loop ----

struct MetricsRow {
    int iteration = 0;
    double base_loss = 0.0;
    double reg_loss = 0.0;
    double ema_a = 0.0;
    double wall_time = 0.0;  // seconds since run start
};

struct TrainResult {
    ParameterSet params;
    std::optional<LoraAdapter> adapter;
    EmaTracker ema;
    std::vector<MetricsRow> metrics;
    int reg_skips = 0;  // divergence-guard activations
};

using CheckpointHook =
    std::function<void(int iteration, const ParameterSet&, const LoraAdapter*)>;

TrainResult train(const TrainConfig& config, const NoiseSchedule& s, const std::vector<Vec>& data,
                  const std::vector<int>& labels, ParameterSet model,
                  const CheckpointHook& checkpoint = nullptr);

}  // namespace difflab
