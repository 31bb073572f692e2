#pragma once

#include <string>

#include "json.hpp"

#include "difflab/datasets.hpp"
#include "difflab/denoiser.hpp"
#include "difflab/eval.hpp"
#include "difflab/schedule.hpp"
#include "difflab/training.hpp"

namespace difflab {

// Evaluation knobs kept in the run config; the condition list itself is
// derived from the dataset at run time.
struct EvalConfig {
    int pairs_per_condition = 1;
    int num_steps = 50;
    double w = 1.0;
};

struct RunConfig {
    ScheduleSpec schedule;
    DenoiserConfig model;
    TrainConfig train;
    DatasetSpec dataset;
    EvalConfig eval;
    std::string out_dir = "run";
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);

// Unknown keys are rejected so typos fail loudly; absent keys keep defaults.
RunConfig config_from_json(const nlohmann::json& j);

RunConfig load_config(const std::string& path);
void save_config(const std::string& path, const RunConfig& cfg);

}  // namespace difflab
