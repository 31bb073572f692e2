#include "difflab/training.hpp"

#include <chrono>
#include <cmath>
#include <unordered_map>

namespace difflab {

EmaTracker ema_update(EmaTracker ema, const std::vector<double>& observed_norms) {
    if (observed_norms.empty()) throw std::invalid_argument("ema_update: empty observation set");
    double mean = 0.0;
    for (double v : observed_norms) {
        if (!std::isfinite(v) || v < 0.0)
            throw std::invalid_argument("ema_update: observations must be finite and nonnegative");
        mean += v;
    }
    mean /= static_cast<double>(observed_norms.size());
    if (!ema.initialized) {
        ema.a = mean;
        ema.initialized = true;
    } else {
        ema.a = ema.decay * ema.a + (1.0 - ema.decay) * mean;
    }
    return ema;
}

void TrainConfig::validate() const {
    if (lambda < 0.0) throw std::invalid_argument("train config: lambda must be >= 0");
    if (reg_interval < 1) throw std::invalid_argument("train config: reg_interval must be >= 1");
    if (batch_size < 1 || total_iterations < 1)
        throw std::invalid_argument("train config: batch_size and total_iterations must be >= 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("train config: learning_rate must be > 0");
    if (!(ema_decay > 0.0 && ema_decay < 1.0))
        throw std::invalid_argument("train config: ema_decay must lie in (0,1)");
    if (lora_rank < 0) throw std::invalid_argument("train config: lora_rank must be >= 0");
}

Vec svr_direction(int dim, Rng& rng) {
    if (dim < 1) throw std::invalid_argument("svr_direction: dim must be >= 1");
    Vec v;
    double n = 0.0;
    do {
        v = rng.gaussian_vec(dim);
        n = v.norm();
    } while (n == 0.0);
    return v / n;
}

namespace {

// Per-tape cache of condition embedding nodes; ids repeat within a batch.
class CondCache {
public:
    CondCache(const TapeModel& model) : model_(&model) {}
    int get(int cond_id) {
        auto it = cache_.find(cond_id);
        if (it != cache_.end()) return it->second;
        const int n = model_->cond_embedding_node(cond_id);
        cache_.emplace(cond_id, n);
        return n;
    }

private:
    const TapeModel* model_;
    std::unordered_map<int, int> cache_;
};

int mean_of(ad::Tape& tape, const std::vector<int>& terms) {
    int acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = tape.add(acc, terms[i]);
    return tape.scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

int base_loss_node(ad::Tape& tape, const TapeModel& model, const NoiseSchedule& s,
                   const Batch& batch, Rng& rng, BaseLossDraws* draws) {
    if (batch.x0.empty()) throw std::invalid_argument("base_loss: empty batch");
    CondCache conds(model);
    std::vector<int> terms;
    terms.reserve(batch.x0.size());
    for (std::size_t i = 0; i < batch.x0.size(); ++i) {
        const int t = rng.uniform_int(1, s.T);
        const Vec eps = rng.gaussian_vec(batch.x0[i].size());
        if (draws) {
            draws->t.push_back(t);
            draws->eps.push_back(eps);
        }
        const int xt = tape.constant(forward_diffuse(s, batch.x0[i], eps, t));
        const int eps_hat = model.forward(xt, t, conds.get(batch.cond[i]));
        terms.push_back(tape.sqnorm(tape.sub(tape.constant(eps), eps_hat)));
    }
    return mean_of(tape, terms);
}

SvrBuild svr_loss_node(ad::Tape& tape, const TapeModel& model, const NoiseSchedule& s,
                       const Batch& batch, double ema_a, Rng& rng, const BaseLossDraws* shared) {
    if (batch.x0.empty()) throw std::invalid_argument("svr_loss: empty batch");
    CondCache conds(model);
    SvrBuild out;
    std::vector<int> terms;
    terms.reserve(batch.x0.size());
    const int a_const = tape.constant_scalar(ema_a);

    for (std::size_t i = 0; i < batch.x0.size(); ++i) {
        const int dim = static_cast<int>(batch.x0[i].size());
        // Direction first, independent of eps by construction.
        const Vec dir = svr_direction(dim, rng);
        int t;
        Vec eps;
        if (shared) {
            t = shared->t[i];
            eps = shared->eps[i];
        } else {
            t = rng.uniform_int(1, s.T);
            eps = rng.gaussian_vec(dim);
        }
        const double sab = s.sqrt_alpha_bar(t);
        const double somab = s.sqrt_one_minus_alpha_bar(t);

        const int eps_leaf = tape.leaf(eps, true);
        const int x0c = tape.constant(batch.x0[i]);
        const int xt = tape.add(tape.scale(x0c, sab), tape.scale(eps_leaf, somab));
        const int eps_hat = model.forward(xt, t, conds.get(batch.cond[i]));
        const int x0_hat = tape.scale(tape.sub(xt, tape.scale(eps_hat, somab)), 1.0 / sab);

        // s = sqrt(1-abar_t) <x0_hat, dir>; its eps-gradient norm equals
        // sqrt(1-abar_t) ||J^T dir|| and stays differentiable in theta.
        const int sc = tape.scale(tape.dot(x0_hat, tape.constant(dir)), somab);
        const int g = tape.gradients(sc, {eps_leaf})[0];
        const int n = tape.norm(g);

        const double n_val = tape.scalar(n);
        if (!std::isfinite(n_val))
            throw NumericalAbort("svr_loss: non-finite gradient norm (activation/scale pathology)");
        out.norms.push_back(n_val);
        terms.push_back(tape.pow_const(tape.sub(n, a_const), 2.0));
    }
    out.loss_node = mean_of(tape, terms);
    return out;
}

double base_loss(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                 const Batch& batch, std::uint64_t noise_seed) {
    ad::Tape tape;
    TapeModel model(tape, params, adapter);
    Rng rng = Rng::derive(noise_seed, 0x62617365ULL);
    return tape.scalar(base_loss_node(tape, model, s, batch, rng));
}

SvrEval svr_loss(const NoiseSchedule& s, const ParameterSet& params, const LoraAdapter* adapter,
                 const Batch& batch, double ema_a, std::uint64_t seed) {
    ad::Tape tape;
    TapeModel model(tape, params, adapter);
    Rng rng = Rng::derive(seed, 0x737672ULL);
    const SvrBuild b = svr_loss_node(tape, model, s, batch, ema_a, rng);
    return {tape.scalar(b.loss_node), b.norms};
}

void AdamW::step(const std::vector<Mat*>& params, const std::vector<const Mat*>& grads) {
    if (params.size() != grads.size()) throw std::invalid_argument("AdamW: size mismatch");
    if (m_.empty()) {
        for (const Mat* p : params) {
            m_.push_back(Mat::Zero(p->rows(), p->cols()));
            v_.push_back(Mat::Zero(p->rows(), p->cols()));
        }
    }
    ++steps_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat& p = *params[i];
        const Mat& g = *grads[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i].array().matrix() + (1.0 - beta2_) * g.cwiseProduct(g);
        const Mat mhat = m_[i] / bc1;
        const Mat vhat = v_[i] / bc2;
        // decoupled weight decay
        p -= lr_ * (mhat.array() / (vhat.array().sqrt() + eps_)).matrix() + (lr_ * weight_decay_) * p;
    }
}

TrainResult train(const TrainConfig& config, const NoiseSchedule& s, const std::vector<Vec>& data,
                  const std::vector<int>& labels, ParameterSet model, const CheckpointHook& checkpoint) {
    config.validate();
    if (data.empty()) throw std::invalid_argument("train: empty dataset");
    if (data.size() != labels.size()) throw std::invalid_argument("train: data/label size mismatch");

    TrainResult result;
    if (config.lora_rank > 0) {
        result.adapter = init_lora(model, config.lora_rank, config.seed);
        model.freeze_all();  // base weights and embeddings stay fixed in adapter runs
    }

    EmaTracker ema;
    ema.decay = config.ema_decay;

    AdamW opt(config.learning_rate, config.weight_decay);
    Rng batch_rng = Rng::derive(config.seed, 0x626174ULL);
    Rng noise_rng = Rng::derive(config.seed, 0x6e6f69ULL);
    Rng reg_rng = Rng::derive(config.seed, 0x726567ULL);

    ad::Tape tape;
    const auto t_start = std::chrono::steady_clock::now();

    for (int iter = 1; iter <= config.total_iterations; ++iter) {
        Batch batch;
        batch.x0.reserve(config.batch_size);
        batch.cond.reserve(config.batch_size);
        for (int b = 0; b < config.batch_size; ++b) {
            const int idx = batch_rng.uniform_int(0, static_cast<int>(data.size()) - 1);
            batch.x0.push_back(data[static_cast<std::size_t>(idx)]);
            batch.cond.push_back(labels[static_cast<std::size_t>(idx)]);
        }

        tape.clear();
        TapeModel tm(tape, model, result.adapter ? &*result.adapter : nullptr);

        BaseLossDraws draws;
        const int base_node = base_loss_node(tape, tm, s, batch, noise_rng, &draws);
        const double base_val = tape.scalar(base_node);
        if (!std::isfinite(base_val)) throw NumericalAbort("train: non-finite base loss");

        int total_node = base_node;
        double reg_val = 0.0;
        const bool reg_due = config.lambda > 0.0 && (iter - 1) % config.reg_interval == 0;
        if (reg_due) {
            const SvrBuild reg = svr_loss_node(tape, tm, s, batch, ema.a, reg_rng,
                                               config.share_reg_noise ? &draws : nullptr);
            double max_norm = 0.0;
            for (double n : reg.norms) max_norm = std::max(max_norm, n);
            if (ema.initialized && max_norm > 1e3 * ema.a) {
                ++result.reg_skips;  // divergence guard: drop the term this step
            } else {
                reg_val = tape.scalar(reg.loss_node);
                if (!std::isfinite(reg_val)) throw NumericalAbort("train: non-finite reg loss");
                total_node = tape.add(base_node, tape.scale(reg.loss_node, config.lambda));
                ema = ema_update(ema, reg.norms);
            }
        }

        const std::vector<int> grad_nodes = tape.gradients(total_node, tm.trainable_nodes());
        std::vector<Mat*> targets;
        std::vector<const Mat*> grads;
        targets.reserve(grad_nodes.size());
        grads.reserve(grad_nodes.size());
        if (result.adapter) {
            std::size_t gi = 0;
            for (auto& le : result.adapter->entries) {
                targets.push_back(&le.B);
                grads.push_back(&tape.val(grad_nodes[gi++]));
                targets.push_back(&le.A);
                grads.push_back(&tape.val(grad_nodes[gi++]));
            }
        } else {
            std::size_t gi = 0;
            for (auto& e : model.entries)
                if (e.trainable) {
                    targets.push_back(&e.value);
                    grads.push_back(&tape.val(grad_nodes[gi++]));
                }
        }
        opt.step(targets, grads);

        if (iter % config.log_every == 0 || iter == config.total_iterations) {
            const double wall =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
            result.metrics.push_back({iter, base_val, reg_val, ema.a, wall});
        }
        if (checkpoint && config.checkpoint_every > 0 && iter % config.checkpoint_every == 0)
            checkpoint(iter, model, result.adapter ? &*result.adapter : nullptr);
    }

    if (checkpoint) checkpoint(config.total_iterations, model, result.adapter ? &*result.adapter : nullptr);
    result.params = std::move(model);
    result.ema = ema;
    return result;
}

}  // namespace difflab
