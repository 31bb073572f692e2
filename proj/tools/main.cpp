#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "checks.hpp"
#include "difflab/config.hpp"
#include "difflab/datasets.hpp"
#include "difflab/eval.hpp"
#include "difflab/inversion.hpp"
#include "difflab/io.hpp"
#include "difflab/rng.hpp"
#include "difflab/training.hpp"

namespace fs = std::filesystem;
using namespace difflab;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerifyFail = 2;
constexpr int kExitNumerical = 3;

fs::path prepare_run_dir(const std::string& out, bool must_be_fresh) {
    fs::path p(out);
    if (must_be_fresh && fs::exists(p) && !fs::is_empty(p))
        throw std::invalid_argument("output directory exists and is not empty: " + out);
    fs::create_directories(p / "checkpoints");
    fs::create_directories(p / "reports");
    fs::create_directories(p / "logs");
    return p;
}

// Resolved options for non-train commands, written before any work runs.
void write_effective_json(const fs::path& dir, const json& j) {
    std::ofstream os(dir / "config.json");
    os << j.dump(2) << "\n";
}

Vec read_vector_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("cannot open input vector file: " + path);
    std::vector<double> vals;
    std::string tok;
    while (is >> tok) {
        std::replace(tok.begin(), tok.end(), ',', ' ');
        std::istringstream ts(tok);
        double v;
        while (ts >> v) vals.push_back(v);
        if (!ts.eof()) throw std::invalid_argument(path + ": non-numeric token '" + tok + "'");
    }
    if (vals.empty()) throw std::invalid_argument(path + ": no values");
    Vec out(static_cast<long>(vals.size()));
    for (std::size_t i = 0; i < vals.size(); ++i) out[static_cast<long>(i)] = vals[i];
    return out;
}

std::vector<double> parse_eta_list(const std::string& text) {
    std::vector<double> etas;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        etas.push_back(std::stod(item));
    }
    if (etas.empty()) throw std::invalid_argument("--etas: empty list");
    return etas;
}

Vec checked_cond(const ParameterSet& p, int cond_id, const char* flag) {
    if (cond_id < 0 || cond_id >= p.config.num_conditions)
        throw std::invalid_argument(std::string(flag) + ": condition id out of range [0, " +
                                    std::to_string(p.config.num_conditions) + ")");
    return cond_embedding(p, cond_id);
}

const LoraAdapter* adapter_of(const Checkpoint& c) {
    return c.adapter ? &*c.adapter : nullptr;
}

bool is_square_image(long dim, int& side) {
    side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
    return static_cast<long>(side) * side == dim && side >= 4;
}

void export_maybe_pgm(const fs::path& reports, const std::string& stem, const Vec& v) {
    int side = 0;
    if (is_square_image(v.size(), side)) write_pgm((reports / (stem + ".pgm")).string(), v, side);
}

// ---- subcommand bodies ----

struct TrainArgs {
    std::string config_path;
    std::string out_override;
    double lambda = -1.0;  // <0 = keep config value
    std::int64_t seed = -1;
    int iterations = -1;
    int lora_rank = -1;
};

int cmd_train(const TrainArgs& a) {
    RunConfig cfg = load_config(a.config_path);
    if (!a.out_override.empty()) cfg.out_dir = a.out_override;
    if (a.lambda >= 0.0) cfg.train.lambda = a.lambda;
    if (a.seed >= 0) cfg.train.seed = static_cast<std::uint64_t>(a.seed);
    if (a.iterations > 0) cfg.train.total_iterations = a.iterations;
    if (a.lora_rank >= 0) cfg.train.lora_rank = a.lora_rank;

    const Dataset data = generate(cfg.dataset);
    cfg.model.data_dim = data.dim;
    cfg.model.num_conditions = data.num_conditions;
    cfg.validate();

    const fs::path run = prepare_run_dir(cfg.out_dir, true);
    save_config((run / "config.json").string(), cfg);

    const NoiseSchedule s = cfg.schedule.make();
    ParameterSet params = init_denoiser(cfg.model, cfg.seed);

    auto save = [&](const std::string& name, const ParameterSet& p, const LoraAdapter* ad) {
        Checkpoint ck;
        ck.schedule = cfg.schedule;
        ck.params = p;
        if (ad) ck.adapter = *ad;
        ck.extra_meta["dataset.kind"] = cfg.dataset.kind;
        ck.extra_meta["dataset.size"] = std::to_string(cfg.dataset.size);
        ck.extra_meta["dataset.seed"] = std::to_string(cfg.dataset.seed);
        ck.extra_meta["train.lambda"] = std::to_string(cfg.train.lambda);
        save_checkpoint((run / "checkpoints" / name).string(), ck);
    };
    CheckpointHook hook;
    if (cfg.train.checkpoint_every > 0)
        hook = [&](int iter, const ParameterSet& p, const LoraAdapter* ad) {
            char buf[32];
            std::snprintf(buf, sizeof buf, "iter_%07d.ckpt", iter);
            save(buf, p, ad);
        };

    TrainResult res = train(cfg.train, s, data.samples, data.labels, std::move(params), hook);
    write_metrics_csv((run / "logs" / "metrics.csv").string(), res.metrics);
    save("final.ckpt", res.params, res.adapter ? &*res.adapter : nullptr);
    std::cout << "trained " << cfg.train.total_iterations << " iterations, lambda=" << cfg.train.lambda
              << ", reg_skips=" << res.reg_skips << "\n"
              << "checkpoint: " << (run / "checkpoints" / "final.ckpt").string() << "\n";
    return kExitOk;
}

struct SampleArgs {
    std::string ckpt;
    int n = 8;
    int cond = 0;
    int steps = 50;
    double w = 1.0;
    std::int64_t seed = 0;
    std::string out = "run-sample";
};

int cmd_sample(const SampleArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const fs::path run = prepare_run_dir(a.out, false);
    write_effective_json(run, json{{"command", "sample"},
                                   {"ckpt", a.ckpt},
                                   {"n", a.n},
                                   {"cond", a.cond},
                                   {"steps", a.steps},
                                   {"w", a.w},
                                   {"seed", a.seed}});
    const NoiseSchedule s = ck.schedule.make();
    const Vec cond = checked_cond(ck.params, a.cond, "--cond");
    const Vec null_c = null_embedding(ck.params);

    std::vector<Vec> samples;
    TrajectoryRecord first_traj;
    for (int i = 0; i < a.n; ++i) {
        Rng rng = Rng::derive(static_cast<std::uint64_t>(a.seed), 0x73616d70ULL,
                              static_cast<std::uint64_t>(i));
        const Vec xT = rng.gaussian_vec(ck.params.config.data_dim);
        SampleResult r = ddim_sample(s, ck.params, adapter_of(ck), xT, cond, null_c, a.w, a.steps);
        if (i == 0) first_traj = r.trajectory;
        samples.push_back(std::move(r.x));
        export_maybe_pgm(run / "reports", "sample_" + std::to_string(i), samples.back());
    }
    write_vectors_csv((run / "reports" / "samples.csv").string(), samples);
    std::vector<Vec> traj_latents;
    for (const auto& st : first_traj.steps) traj_latents.push_back(st.latent);
    write_vectors_csv((run / "reports" / "trajectory.csv").string(), traj_latents);
    std::cout << "wrote " << a.n << " samples to " << (run / "reports").string() << "\n";
    return kExitOk;
}

struct InvertArgs {
    std::string ckpt, input, method = "nti", out = "run-invert";
    int cond = 0, steps = 50;
    double w = 7.5;
    NtiOptions nti;
};

int cmd_invert(const InvertArgs& a) {
    if (a.method != "ddim" && a.method != "nti")
        throw std::invalid_argument("--method must be ddim or nti");
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const Vec x0 = read_vector_file(a.input);
    if (x0.size() != ck.params.config.data_dim)
        throw std::invalid_argument("--input: dimension " + std::to_string(x0.size()) +
                                    " does not match model data_dim");
    const fs::path run = prepare_run_dir(a.out, false);
    write_effective_json(run, json{{"command", "invert"},
                                   {"ckpt", a.ckpt},
                                   {"input", a.input},
                                   {"method", a.method},
                                   {"cond", a.cond},
                                   {"steps", a.steps},
                                   {"w", a.w},
                                   {"inner_iters", a.nti.inner_iters},
                                   {"inner_lr", a.nti.inner_lr},
                                   {"early_stop_tol", a.nti.early_stop_tol}});
    const NoiseSchedule s = ck.schedule.make();
    const Vec cond = checked_cond(ck.params, a.cond, "--cond");

    const InversionResult inv =
        a.method == "ddim"
            ? ddim_invert_result(s, ck.params, adapter_of(ck), x0, cond, a.w, a.steps)
            : nti_invert(s, ck.params, adapter_of(ck), x0, cond, a.w, a.steps, a.nti);
    save_inversion((run / "reports" / "inversion.dlm").string(), inv);
    write_series_csv((run / "reports" / "residuals.csv").string(), "residual", inv.residuals);
    double total = 0;
    for (double r : inv.residuals) total += r;
    std::cout << a.method << " inversion done, summed residual " << total << ", lr halvings "
              << inv.lr_halvings << "\n"
              << "record: " << (run / "reports" / "inversion.dlm").string() << "\n";
    return kExitOk;
}

struct ReconstructArgs {
    std::string ckpt, inversion, out = "run-reconstruct";
};

int cmd_reconstruct(const ReconstructArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const InversionResult inv = load_inversion(a.inversion);
    const fs::path run = prepare_run_dir(a.out, false);
    write_effective_json(
        run, json{{"command", "reconstruct"}, {"ckpt", a.ckpt}, {"inversion", a.inversion}});
    const NoiseSchedule s = ck.schedule.make();
    const Vec rec = reconstruct(s, ck.params, adapter_of(ck), inv, inv.cond);
    const ReconReport rep = recon_metrics({inv.source}, {rec});
    write_vectors_csv((run / "reports" / "reconstruction.csv").string(), {rec});
    export_maybe_pgm(run / "reports", "reconstruction", rec);
    std::ofstream os(run / "reports" / "recon_report.csv");
    os << "mse,psnr,ssim\n"
       << std::setprecision(12) << rep.mean_mse << "," << rep.mean_psnr << "," << rep.mean_ssim
       << "\n";
    std::cout << "reconstruction mse " << rep.mean_mse << " psnr " << rep.mean_psnr << " ssim "
              << rep.mean_ssim << "\n";
    return kExitOk;
}

struct EditArgs {
    std::string ckpt, inversion, out = "run-edit";
    int target_cond = 0;
    double r = 0.8;
};

int cmd_edit(const EditArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const InversionResult inv = load_inversion(a.inversion);
    const fs::path run = prepare_run_dir(a.out, false);
    write_effective_json(run, json{{"command", "edit"},
                                   {"ckpt", a.ckpt},
                                   {"inversion", a.inversion},
                                   {"target_cond", a.target_cond},
                                   {"r", a.r}});
    const NoiseSchedule s = ck.schedule.make();
    const Vec trg = checked_cond(ck.params, a.target_cond, "--target-cond");
    const Vec edited = edit_prompt_switch(s, ck.params, adapter_of(ck), inv, inv.cond, trg, a.r);
    write_vectors_csv((run / "reports" / "edited.csv").string(), {edited});
    export_maybe_pgm(run / "reports", "edited", edited);
    std::cout << "edited sample written to " << (run / "reports").string() << "\n";
    return kExitOk;
}

struct InterpolateArgs {
    std::string ckpt, a_path, b_path, etas_text = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1", out = "run-interpolate";
    int cond = 0, steps = 50;
    double w = 7.5;
    NtiOptions nti;
};

int cmd_interpolate(const InterpolateArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const Vec xa = read_vector_file(a.a_path);
    const Vec xb = read_vector_file(a.b_path);
    const std::vector<double> etas = parse_eta_list(a.etas_text);
    const fs::path run = prepare_run_dir(a.out, false);
    write_effective_json(run, json{{"command", "interpolate"},
                                   {"ckpt", a.ckpt},
                                   {"a", a.a_path},
                                   {"b", a.b_path},
                                   {"etas", etas},
                                   {"cond", a.cond},
                                   {"steps", a.steps},
                                   {"w", a.w}});
    const NoiseSchedule s = ck.schedule.make();
    const Vec cond = checked_cond(ck.params, a.cond, "--cond");
    const std::vector<Vec> grid =
        interpolate_real(s, ck.params, adapter_of(ck), xa, xb, cond, etas, a.w, a.steps, a.nti);
    write_vectors_csv((run / "reports" / "interpolation.csv").string(), grid);
    std::vector<double> dists;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) dists.push_back((grid[i + 1] - grid[i]).norm());
    write_series_csv((run / "reports" / "distances.csv").string(), "distance", dists);
    for (std::size_t i = 0; i < grid.size(); ++i)
        export_maybe_pgm(run / "reports", "interp_" + std::to_string(i), grid[i]);
    std::cout << "interpolation grid of " << grid.size() << " points written to "
              << (run / "reports").string() << "\n";
    return kExitOk;
}

struct EvalIstdArgs {
    std::string ckpt, baseline, out = "run-eval-istd";
    int pairs = 1, steps = 50;
    double w = 1.0;
    std::int64_t seed = 0;
    int recon_samples = 32, nti_samples = 8, mmd_samples = 128;
};

IstdConfig istd_config_for(const Checkpoint& ck, const EvalIstdArgs& a) {
    IstdConfig cfg;
    for (int c = 0; c < ck.params.config.num_conditions; ++c) cfg.conditions.push_back(c);
    cfg.pairs_per_condition = a.pairs;
    cfg.num_steps = a.steps;
    cfg.w = a.w;
    cfg.seed = static_cast<std::uint64_t>(a.seed);
    return cfg;
}

DatasetSpec dataset_from_meta(const Checkpoint& ck) {
    DatasetSpec spec;
    auto need = [&](const char* k) {
        auto it = ck.extra_meta.find(k);
        if (it == ck.extra_meta.end())
            throw std::invalid_argument(std::string("checkpoint lacks dataset metadata key ") + k +
                                        " (required for --baseline comparison)");
        return it->second;
    };
    spec.kind = need("dataset.kind");
    spec.size = std::stoi(need("dataset.size"));
    spec.seed = std::stoull(need("dataset.seed"));
    return spec;
}

int cmd_eval_istd(const EvalIstdArgs& a) {
    const Checkpoint ck = load_checkpoint(a.ckpt);
    const fs::path run = prepare_run_dir(a.out, false);
    write_effective_json(run, json{{"command", "eval-istd"},
                                   {"ckpt", a.ckpt},
                                   {"baseline", a.baseline},
                                   {"pairs", a.pairs},
                                   {"steps", a.steps},
                                   {"w", a.w},
                                   {"seed", a.seed}});
    const NoiseSchedule s = ck.schedule.make();
    const IstdConfig cfg = istd_config_for(ck, a);
    const SmoothnessReport rep = compute_istd(s, ck.params, adapter_of(ck), cfg);
    write_series_csv((run / "reports" / "istd_stds.csv").string(), "std", rep.stds);
    std::cout << "istd " << rep.istd << " over " << rep.num_conditions << " conditions\n";

    if (!a.baseline.empty()) {
        const Checkpoint base = load_checkpoint(a.baseline);
        if (base.params.config.data_dim != ck.params.config.data_dim)
            throw std::invalid_argument("--baseline: model dimensions differ");
        DatasetSpec spec = dataset_from_meta(ck);
        const Dataset ref = generate(spec);
        spec.seed += 1;  // held-out draw, disjoint from training data
        spec.size = std::max(a.recon_samples, a.nti_samples);
        const Dataset held = generate(spec);

        PairedReportConfig pc;
        pc.istd = cfg;
        pc.recon_samples = a.recon_samples;
        pc.nti_samples = a.nti_samples;
        pc.num_steps = a.steps;
        pc.mmd_samples = a.mmd_samples;
        pc.seed = static_cast<std::uint64_t>(a.seed);
        std::vector<Vec> ref_subset(ref.samples.begin(),
                                    ref.samples.begin() + std::min<std::size_t>(ref.samples.size(),
                                                                                static_cast<std::size_t>(a.mmd_samples)));
        const PairedReport paired =
            paired_report(s, ck.params, base.params, held.samples, held.labels, ref_subset, pc);
        write_text_file((run / "reports" / "paired.csv").string(), paired.to_csv());
        std::cout << paired.render();
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"difflab: diffusion latent-smoothness laboratory"};
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* c_train = app.add_subcommand("train", "train a denoiser from a JSON config");
    c_train->add_option("config", train_args.config_path, "run config JSON")->required();
    c_train->add_option("--out", train_args.out_override, "override output directory");
    c_train->add_option("--lambda", train_args.lambda, "override regularizer weight");
    c_train->add_option("--seed", train_args.seed, "override training seed");
    c_train->add_option("--iterations", train_args.iterations, "override iteration count");
    c_train->add_option("--lora-rank", train_args.lora_rank, "override LoRA rank (0 = full)");

    SampleArgs sample_args;
    auto* c_sample = app.add_subcommand("sample", "draw samples from a checkpoint");
    c_sample->add_option("ckpt", sample_args.ckpt)->required();
    c_sample->add_option("--n", sample_args.n);
    c_sample->add_option("--cond", sample_args.cond);
    c_sample->add_option("--steps", sample_args.steps);
    c_sample->add_option("--w", sample_args.w);
    c_sample->add_option("--seed", sample_args.seed);
    c_sample->add_option("--out", sample_args.out);

    InvertArgs invert_args;
    auto* c_invert = app.add_subcommand("invert", "invert a data point to its latent");
    c_invert->add_option("ckpt", invert_args.ckpt)->required();
    c_invert->add_option("--input", invert_args.input)->required();
    c_invert->add_option("--method", invert_args.method, "ddim | nti");
    c_invert->add_option("--cond", invert_args.cond);
    c_invert->add_option("--steps", invert_args.steps);
    c_invert->add_option("--w", invert_args.w);
    c_invert->add_option("--inner-iters", invert_args.nti.inner_iters);
    c_invert->add_option("--inner-lr", invert_args.nti.inner_lr);
    c_invert->add_option("--out", invert_args.out);

    ReconstructArgs recon_args;
    auto* c_recon = app.add_subcommand("reconstruct", "replay an inversion record");
    c_recon->add_option("ckpt", recon_args.ckpt)->required();
    c_recon->add_option("--inversion", recon_args.inversion)->required();
    c_recon->add_option("--out", recon_args.out);

    EditArgs edit_args;
    auto* c_edit = app.add_subcommand("edit", "prompt-switch edit from an inversion record");
    c_edit->add_option("ckpt", edit_args.ckpt)->required();
    c_edit->add_option("--inversion", edit_args.inversion)->required();
    c_edit->add_option("--target-cond", edit_args.target_cond)->required();
    c_edit->add_option("--r", edit_args.r, "switch point as a fraction of T");
    c_edit->add_option("--out", edit_args.out);

    InterpolateArgs interp_args;
    auto* c_interp = app.add_subcommand("interpolate", "real-sample interpolation via shared inversion");
    c_interp->add_option("ckpt", interp_args.ckpt)->required();
    c_interp->add_option("--a", interp_args.a_path)->required();
    c_interp->add_option("--b", interp_args.b_path)->required();
    c_interp->add_option("--etas", interp_args.etas_text, "comma-separated blend weights");
    c_interp->add_option("--cond", interp_args.cond);
    c_interp->add_option("--steps", interp_args.steps);
    c_interp->add_option("--w", interp_args.w);
    c_interp->add_option("--inner-iters", interp_args.nti.inner_iters);
    c_interp->add_option("--out", interp_args.out);

    EvalIstdArgs eval_args;
    auto* c_eval = app.add_subcommand("eval-istd", "interpolation smoothness report");
    c_eval->add_option("ckpt", eval_args.ckpt)->required();
    c_eval->add_option("--baseline", eval_args.baseline, "second checkpoint for a paired report");
    c_eval->add_option("--pairs", eval_args.pairs);
    c_eval->add_option("--steps", eval_args.steps);
    c_eval->add_option("--w", eval_args.w);
    c_eval->add_option("--seed", eval_args.seed);
    c_eval->add_option("--recon-samples", eval_args.recon_samples);
    c_eval->add_option("--nti-samples", eval_args.nti_samples);
    c_eval->add_option("--mmd-samples", eval_args.mmd_samples);
    c_eval->add_option("--out", eval_args.out);

    auto* c_verify = app.add_subcommand("verify", "run the numerical oracle suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (c_train->parsed()) return cmd_train(train_args);
        if (c_sample->parsed()) return cmd_sample(sample_args);
        if (c_invert->parsed()) return cmd_invert(invert_args);
        if (c_recon->parsed()) return cmd_reconstruct(recon_args);
        if (c_edit->parsed()) return cmd_edit(edit_args);
        if (c_interp->parsed()) return cmd_interpolate(interp_args);
        if (c_eval->parsed()) return cmd_eval_istd(eval_args);
        if (c_verify->parsed())
            return checks::run_verification(std::cout) ? kExitOk : kExitVerifyFail;
    } catch (const NumericalAbort& e) {
        std::cerr << "numerical abort: " << e.what() << "\n";
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    }
    return kExitUsage;
}
