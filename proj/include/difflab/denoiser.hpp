#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "difflab/tape.hpp"

namespace difflab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Noise predictor: a residual MLP over [x_t ; time embedding ; condition
// embedding] with SiLU activations (smooth everywhere, which the
// second-order regularizer requires).
struct DenoiserConfig {
    int data_dim = 2;
    int hidden_width = 256;
    int depth = 4;
    int time_embed_dim = 32;
    int cond_embed_dim = 16;
    int num_conditions = 1;

    int input_dim() const { return data_dim + time_embed_dim + cond_embed_dim; }
    void validate() const;
};

struct ParamEntry {
    std::string name;
    Mat value;
    bool trainable = true;
};

struct ParameterSet {
    DenoiserConfig config;
    std::vector<ParamEntry> entries;

    int index_of(const std::string& name) const;  // -1 if absent
    const Mat& at(const std::string& name) const;
    Mat& at(const std::string& name);

    // Entry names whose weight matrices accept a LoRA update (2-D weights;
    // biases and embedding tables are never adapted).
    std::vector<std::string> adapted_names() const;

    void freeze_all();
    void set_trainable(const std::string& name, bool trainable);
};

struct LoraEntry {
    std::string name;  // matches a ParameterSet entry
    Mat B;             // d x r, zero at init
    Mat A;             // r x k
};

struct LoraAdapter {
    int rank = 0;
    std::vector<LoraEntry> entries;

    const LoraEntry* find(const std::string& name) const;
};

ParameterSet init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

Mat lora_apply(const Mat& W0, const Mat& B, const Mat& A);
LoraAdapter init_lora(const ParameterSet& params, int rank, std::uint64_t seed);

Vec time_embedding(int t, int dim);
Vec cond_embedding(const ParameterSet& params, int cond_id);
Vec null_embedding(const ParameterSet& params);

// epsilon prediction; `adapter` may be null. Pure in all inputs.
Vec predict_noise(const ParameterSet& params, const LoraAdapter* adapter,
                  const Vec& x_t, int t, const Vec& cond);

// Tape-backed twin of predict_noise. Parameter leaves are created once per
// TapeModel so a whole batch shares them and gradients accumulate naturally.
// The op sequence matches predict_noise exactly (tested bitwise).
class TapeModel {
public:
    TapeModel(ad::Tape& tape, const ParameterSet& params, const LoraAdapter* adapter);

    int forward(int x_node, int t, int cond_node) const;

    int cond_embedding_node(int cond_id) const;
    int null_embedding_node() const;

    // Leaves of trainable parameters, parallel to trainable_names().
    const std::vector<int>& trainable_nodes() const { return trainable_nodes_; }
    const std::vector<std::string>& trainable_names() const { return trainable_names_; }

    ad::Tape& tape() const { return *tape_; }

private:
    int effective_weight(const std::string& name) const;

    ad::Tape* tape_;
    const ParameterSet* params_;
    const LoraAdapter* adapter_;
    std::vector<int> entry_nodes_;                    // per ParameterSet entry
    std::vector<std::pair<int, int>> lora_nodes_;     // (B, A) per adapter entry
    std::vector<int> eff_nodes_;                      // per entry, adapted weight or entry node
    std::vector<int> trainable_nodes_;
    std::vector<std::string> trainable_names_;
};

}  // namespace difflab
