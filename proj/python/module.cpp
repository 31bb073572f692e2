// Python bindings for the diffusion laboratory: schedules, denoisers,
// sampling/inversion, training, datasets, and evaluation metrics.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "difflab/config.hpp"
#include "difflab/datasets.hpp"
#include "difflab/eval.hpp"
#include "difflab/inversion.hpp"
#include "difflab/io.hpp"
#include "difflab/sampler.hpp"
#include "difflab/training.hpp"

namespace py = pybind11;
using namespace difflab;

PYBIND11_MODULE(_difflab, m) {
    m.doc() = "Desk-scale diffusion lab: smoothness-regularized toy denoisers";

    // ---- schedule ----
    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("T", &NoiseSchedule::T)
        .def("beta", &NoiseSchedule::beta)
        .def("alpha", &NoiseSchedule::alpha)
        .def("alpha_bar", &NoiseSchedule::alpha_bar)
        .def("sqrt_alpha_bar", &NoiseSchedule::sqrt_alpha_bar)
        .def("sqrt_one_minus_alpha_bar", &NoiseSchedule::sqrt_one_minus_alpha_bar);
    py::class_<ScheduleSpec>(m, "ScheduleSpec")
        .def(py::init<>())
        .def_readwrite("T", &ScheduleSpec::T)
        .def_readwrite("beta_start", &ScheduleSpec::beta_start)
        .def_readwrite("beta_end", &ScheduleSpec::beta_end)
        .def("make", &ScheduleSpec::make);
    m.def("make_linear_schedule", &make_linear_schedule, py::arg("T"), py::arg("beta_start"),
          py::arg("beta_end"));
    m.def("forward_diffuse", &forward_diffuse);
    m.def("predict_x0", &predict_x0);

    // ---- denoiser ----
    py::class_<DenoiserConfig>(m, "DenoiserConfig")
        .def(py::init<>())
        .def_readwrite("data_dim", &DenoiserConfig::data_dim)
        .def_readwrite("hidden_width", &DenoiserConfig::hidden_width)
        .def_readwrite("depth", &DenoiserConfig::depth)
        .def_readwrite("time_embed_dim", &DenoiserConfig::time_embed_dim)
        .def_readwrite("cond_embed_dim", &DenoiserConfig::cond_embed_dim)
        .def_readwrite("num_conditions", &DenoiserConfig::num_conditions);
    py::class_<ParameterSet>(m, "ParameterSet")
        .def_readonly("config", &ParameterSet::config)
        .def("names",
             [](const ParameterSet& p) {
                 std::vector<std::string> out;
                 for (const auto& e : p.entries) out.push_back(e.name);
                 return out;
             })
        .def("get", [](const ParameterSet& p, const std::string& name) { return p.at(name); })
        .def("set", [](ParameterSet& p, const std::string& name, const Mat& v) { p.at(name) = v; })
        .def("set_trainable", &ParameterSet::set_trainable)
        .def("freeze_all", &ParameterSet::freeze_all);
    py::class_<LoraAdapter>(m, "LoraAdapter").def_readonly("rank", &LoraAdapter::rank);
    m.def("init_denoiser", &init_denoiser, py::arg("config"), py::arg("seed"));
    m.def("init_lora", &init_lora, py::arg("params"), py::arg("rank"), py::arg("seed"));
    m.def("time_embedding", &time_embedding);
    m.def("cond_embedding", &cond_embedding);
    m.def("null_embedding", &null_embedding);
    m.def(
        "predict_noise",
        [](const ParameterSet& p, const LoraAdapter* a, const Vec& x, int t, const Vec& c) {
            return predict_noise(p, a, x, t, c);
        },
        py::arg("params"), py::arg("adapter"), py::arg("x_t"), py::arg("t"), py::arg("cond"));

    // ---- sampler ----
    m.def("substeps", &substeps);
    m.def("slerp", &slerp);
    m.def(
        "ddim_sample",
        [](const NoiseSchedule& s, const ParameterSet& p, const LoraAdapter* a, const Vec& xT,
           const Vec& cond, const Vec& null_cond, double w, int steps) {
            return ddim_sample(s, p, a, xT, cond, null_cond, w, steps).x;
        },
        py::arg("schedule"), py::arg("params"), py::arg("adapter"), py::arg("x_T"),
        py::arg("cond"), py::arg("null_cond"), py::arg("w"), py::arg("num_steps"));
    m.def(
        "ddim_invert",
        [](const NoiseSchedule& s, const ParameterSet& p, const LoraAdapter* a, const Vec& x0,
           const Vec& cond, const Vec& null_cond, double w, int steps) {
            return ddim_invert(s, p, a, x0, cond, null_cond, w, steps).x;
        },
        py::arg("schedule"), py::arg("params"), py::arg("adapter"), py::arg("x0"), py::arg("cond"),
        py::arg("null_cond"), py::arg("w"), py::arg("num_steps"));

    // ---- inversion ----
    py::class_<NtiOptions>(m, "NtiOptions")
        .def(py::init<>())
        .def_readwrite("inner_iters", &NtiOptions::inner_iters)
        .def_readwrite("inner_lr", &NtiOptions::inner_lr)
        .def_readwrite("early_stop_tol", &NtiOptions::early_stop_tol);
    py::class_<InversionResult>(m, "InversionResult")
        .def_readonly("x_T", &InversionResult::x_T)
        .def_readonly("residuals", &InversionResult::residuals)
        .def_readonly("num_steps", &InversionResult::num_steps)
        .def_readonly("method", &InversionResult::method);
    m.def("ddim_invert_result", &ddim_invert_result);
    m.def("nti_invert", &nti_invert);
    m.def("reconstruct", &reconstruct);
    m.def("edit_prompt_switch", &edit_prompt_switch);
    m.def("interpolate_real", &interpolate_real);

    // ---- training ----
    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("lambda_", &TrainConfig::lambda)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("total_iterations", &TrainConfig::total_iterations)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("lora_rank", &TrainConfig::lora_rank)
        .def_readwrite("log_every", &TrainConfig::log_every);
    py::class_<MetricsRow>(m, "MetricsRow")
        .def_readonly("iteration", &MetricsRow::iteration)
        .def_readonly("base_loss", &MetricsRow::base_loss)
        .def_readonly("reg_loss", &MetricsRow::reg_loss)
        .def_readonly("ema_a", &MetricsRow::ema_a);
    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("params", &TrainResult::params)
        .def_readonly("metrics", &TrainResult::metrics);
    m.def(
        "train",
        [](const TrainConfig& c, const NoiseSchedule& s, const std::vector<Vec>& data,
           const std::vector<int>& labels, const ParameterSet& init) {
            return train(c, s, data, labels, init);
        },
        py::arg("config"), py::arg("schedule"), py::arg("data"), py::arg("labels"),
        py::arg("init"));

    // ---- datasets ----
    py::class_<DatasetSpec>(m, "DatasetSpec")
        .def(py::init<>())
        .def_readwrite("kind", &DatasetSpec::kind)
        .def_readwrite("size", &DatasetSpec::size)
        .def_readwrite("seed", &DatasetSpec::seed)
        .def_readwrite("mixture_modes", &DatasetSpec::mixture_modes)
        .def_readwrite("mixture_radius", &DatasetSpec::mixture_radius)
        .def_readwrite("mixture_sigma", &DatasetSpec::mixture_sigma)
        .def_readwrite("roll_noise", &DatasetSpec::roll_noise);
    py::class_<Dataset>(m, "Dataset")
        .def_readonly("samples", &Dataset::samples)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("num_conditions", &Dataset::num_conditions)
        .def_readonly("dim", &Dataset::dim);
    m.def("generate", &generate);
    m.def("render_shape", &render_shape);
    m.def("classify_shape", &classify_shape);
    m.def("shape_background_pixels", &shape_background_pixels);

    // ---- evaluation ----
    py::class_<IstdConfig>(m, "IstdConfig")
        .def(py::init<>())
        .def_readwrite("conditions", &IstdConfig::conditions)
        .def_readwrite("pairs_per_condition", &IstdConfig::pairs_per_condition)
        .def_readwrite("num_steps", &IstdConfig::num_steps)
        .def_readwrite("w", &IstdConfig::w)
        .def_readwrite("seed", &IstdConfig::seed)
        .def_readwrite("etas", &IstdConfig::etas);
    py::class_<SmoothnessReport>(m, "SmoothnessReport")
        .def_readonly("istd", &SmoothnessReport::istd)
        .def_readonly("stds", &SmoothnessReport::stds)
        .def_readonly("etas", &SmoothnessReport::etas)
        .def_readonly("distance_series", &SmoothnessReport::distance_series);
    m.def("compute_istd", &compute_istd);
    py::class_<ReconReport>(m, "ReconReport")
        .def_readonly("mean_mse", &ReconReport::mean_mse)
        .def_readonly("mean_psnr", &ReconReport::mean_psnr)
        .def_readonly("mean_ssim", &ReconReport::mean_ssim);
    m.def("recon_metrics", &recon_metrics);
    m.def("mmd_quality", &mmd_quality);
    m.def("mmd_median_bandwidth", &mmd_median_bandwidth);

    // ---- checkpoints ----
    py::class_<Checkpoint>(m, "Checkpoint")
        .def(py::init<>())
        .def_readwrite("schedule", &Checkpoint::schedule)
        .def_readwrite("params", &Checkpoint::params)
        .def_readwrite("extra_meta", &Checkpoint::extra_meta);
    m.def("save_checkpoint", &save_checkpoint);
    m.def("load_checkpoint", &load_checkpoint);
}
