#include "difflab/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace difflab {

using nlohmann::json;

namespace {

// Pulls known keys out of `j`, then complains about anything left over.
struct Section {
    const json& j;
    std::string name;
    mutable std::set<std::string> seen;

    template <typename T>
    void get(const char* key, T& out) const {
        seen.insert(key);
        if (j.contains(key)) j.at(key).get_to(out);
    }
    void finish() const {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!seen.count(it.key()))
                throw std::invalid_argument("config: unknown key '" + name + "." + it.key() + "'");
    }
};

}  // namespace

void RunConfig::validate() const {
    if (schedule.T < 2) throw std::invalid_argument("config: schedule.T must be >= 2");
    model.validate();
    train.validate();
    if (eval.pairs_per_condition < 1 || eval.num_steps < 1)
        throw std::invalid_argument("config: eval settings must be positive");
    if (out_dir.empty()) throw std::invalid_argument("config: out_dir must be nonempty");
}

json config_to_json(const RunConfig& c) {
    json j;
    j["schedule"] = {{"T", c.schedule.T},
                     {"beta_start", c.schedule.beta_start},
                     {"beta_end", c.schedule.beta_end}};
    j["model"] = {{"data_dim", c.model.data_dim},
                  {"hidden_width", c.model.hidden_width},
                  {"depth", c.model.depth},
                  {"time_embed_dim", c.model.time_embed_dim},
                  {"cond_embed_dim", c.model.cond_embed_dim},
                  {"num_conditions", c.model.num_conditions}};
    j["train"] = {{"lambda", c.train.lambda},
                  {"learning_rate", c.train.learning_rate},
                  {"weight_decay", c.train.weight_decay},
                  {"batch_size", c.train.batch_size},
                  {"total_iterations", c.train.total_iterations},
                  {"seed", c.train.seed},
                  {"lora_rank", c.train.lora_rank},
                  {"ema_decay", c.train.ema_decay},
                  {"reg_interval", c.train.reg_interval},
                  {"share_reg_noise", c.train.share_reg_noise},
                  {"checkpoint_every", c.train.checkpoint_every},
                  {"log_every", c.train.log_every}};
    j["dataset"] = {{"kind", c.dataset.kind},
                    {"size", c.dataset.size},
                    {"seed", c.dataset.seed},
                    {"mixture_modes", c.dataset.mixture_modes},
                    {"mixture_radius", c.dataset.mixture_radius},
                    {"mixture_sigma", c.dataset.mixture_sigma},
                    {"roll_noise", c.dataset.roll_noise},
                    {"shape_classes", c.dataset.shape_classes}};
    j["eval"] = {{"pairs_per_condition", c.eval.pairs_per_condition},
                 {"num_steps", c.eval.num_steps},
                 {"w", c.eval.w}};
    j["out_dir"] = c.out_dir;
    j["seed"] = c.seed;
    return j;
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
    RunConfig c;
    std::set<std::string> top_seen;
    auto section = [&](const char* key) -> const json* {
        top_seen.insert(key);
        return j.contains(key) ? &j.at(key) : nullptr;
    };

    if (const json* s = section("schedule")) {
        Section sec{*s, "schedule", {}};
        sec.get("T", c.schedule.T);
        sec.get("beta_start", c.schedule.beta_start);
        sec.get("beta_end", c.schedule.beta_end);
        sec.finish();
    }
    if (const json* s = section("model")) {
        Section sec{*s, "model", {}};
        sec.get("data_dim", c.model.data_dim);
        sec.get("hidden_width", c.model.hidden_width);
        sec.get("depth", c.model.depth);
        sec.get("time_embed_dim", c.model.time_embed_dim);
        sec.get("cond_embed_dim", c.model.cond_embed_dim);
        sec.get("num_conditions", c.model.num_conditions);
        sec.finish();
    }
    if (const json* s = section("train")) {
        Section sec{*s, "train", {}};
        sec.get("lambda", c.train.lambda);
        sec.get("learning_rate", c.train.learning_rate);
        sec.get("weight_decay", c.train.weight_decay);
        sec.get("batch_size", c.train.batch_size);
        sec.get("total_iterations", c.train.total_iterations);
        sec.get("seed", c.train.seed);
        sec.get("lora_rank", c.train.lora_rank);
        sec.get("ema_decay", c.train.ema_decay);
        sec.get("reg_interval", c.train.reg_interval);
        sec.get("share_reg_noise", c.train.share_reg_noise);
        sec.get("checkpoint_every", c.train.checkpoint_every);
        sec.get("log_every", c.train.log_every);
        sec.finish();
    }
    if (const json* s = section("dataset")) {
        Section sec{*s, "dataset", {}};
        sec.get("kind", c.dataset.kind);
        sec.get("size", c.dataset.size);
        sec.get("seed", c.dataset.seed);
        sec.get("mixture_modes", c.dataset.mixture_modes);
        sec.get("mixture_radius", c.dataset.mixture_radius);
        sec.get("mixture_sigma", c.dataset.mixture_sigma);
        sec.get("roll_noise", c.dataset.roll_noise);
        sec.get("shape_classes", c.dataset.shape_classes);
        sec.finish();
    }
    if (const json* s = section("eval")) {
        Section sec{*s, "eval", {}};
        sec.get("pairs_per_condition", c.eval.pairs_per_condition);
        sec.get("num_steps", c.eval.num_steps);
        sec.get("w", c.eval.w);
        sec.finish();
    }
    if (const json* s = section("out_dir")) s->get_to(c.out_dir);
    if (const json* s = section("seed")) s->get_to(c.seed);

    for (auto it = j.begin(); it != j.end(); ++it)
        if (!top_seen.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    json j;
    try {
        is >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: " + path + ": " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::string& path, const RunConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("config: cannot open for writing " + path);
    os << config_to_json(cfg).dump(2) << "\n";
}

}  // namespace difflab
