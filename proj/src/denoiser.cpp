#include "difflab/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include "difflab/rng.hpp"

namespace difflab {

void DenoiserConfig::validate() const {
    if (data_dim < 1 || hidden_width < 1 || depth < 1 || time_embed_dim < 2 ||
        cond_embed_dim < 1 || num_conditions < 1)
        throw std::invalid_argument("denoiser: all config dimensions must be positive (depth >= 1)");
    if (time_embed_dim % 2 != 0)
        throw std::invalid_argument("denoiser: time_embed_dim must be even");
}

int ParameterSet::index_of(const std::string& name) const {
    for (std::size_t i = 0; i < entries.size(); ++i)
        if (entries[i].name == name) return static_cast<int>(i);
    return -1;
}

const Mat& ParameterSet::at(const std::string& name) const {
    const int i = index_of(name);
    if (i < 0) throw std::invalid_argument("denoiser: no parameter entry named " + name);
    return entries[static_cast<std::size_t>(i)].value;
}

Mat& ParameterSet::at(const std::string& name) {
    const int i = index_of(name);
    if (i < 0) throw std::invalid_argument("denoiser: no parameter entry named " + name);
    return entries[static_cast<std::size_t>(i)].value;
}

std::vector<std::string> ParameterSet::adapted_names() const {
    std::vector<std::string> names;
    names.push_back("in.W");
    for (int i = 0; i < config.depth; ++i) {
        names.push_back("blk" + std::to_string(i) + ".W1");
        names.push_back("blk" + std::to_string(i) + ".W2");
    }
    names.push_back("out.W");
    return names;
}

void ParameterSet::freeze_all() {
    for (auto& e : entries) e.trainable = false;
}

void ParameterSet::set_trainable(const std::string& name, bool trainable) {
    const int i = index_of(name);
    if (i < 0) throw std::invalid_argument("denoiser: no parameter entry named " + name);
    entries[static_cast<std::size_t>(i)].trainable = trainable;
}

ParameterSet init_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ParameterSet p;
    p.config = cfg;

    const int H = cfg.hidden_width;
    const int D = cfg.data_dim;
    auto push = [&](const std::string& name, int rows, int cols, double std_dev) {
        Rng rng = Rng::derive(seed, 0x7061726dULL, p.entries.size());
        Mat m = std_dev == 0.0 ? Mat::Zero(rows, cols) : Mat(std_dev * rng.gaussian_mat(rows, cols));
        p.entries.push_back({name, std::move(m), true});
    };

    push("in.W", H, cfg.input_dim(), 1.0 / std::sqrt(static_cast<double>(cfg.input_dim())));
    push("in.b", H, 1, 0.0);
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string blk = "blk" + std::to_string(i);
        push(blk + ".W1", H, H, 1.0 / std::sqrt(static_cast<double>(H)));
        push(blk + ".b1", H, 1, 0.0);
        push(blk + ".W2", H, H, 1.0 / std::sqrt(static_cast<double>(H)));
        push(blk + ".b2", H, 1, 0.0);
    }
    push("out.W", D, H, 1.0 / std::sqrt(static_cast<double>(H)));
    push("out.b", D, 1, 0.0);
    push("cond.emb", cfg.cond_embed_dim, cfg.num_conditions, 1.0);
    push("cond.null", cfg.cond_embed_dim, 1, 1.0);
    return p;
}

Mat lora_apply(const Mat& W0, const Mat& B, const Mat& A) {
    if (B.cols() != A.rows() || B.rows() != W0.rows() || A.cols() != W0.cols())
        throw std::invalid_argument("lora_apply: shapes do not compose");
    return W0 + B * A;
}

LoraAdapter init_lora(const ParameterSet& params, int rank, std::uint64_t seed) {
    if (rank < 1) throw std::invalid_argument("init_lora: rank must be >= 1");
    LoraAdapter ad;
    ad.rank = rank;
    std::size_t k = 0;
    for (const auto& name : params.adapted_names()) {
        const Mat& W0 = params.at(name);
        const auto min_dim = std::min(W0.rows(), W0.cols());
        if (rank > min_dim)
            throw std::invalid_argument("init_lora: rank exceeds min dimension of " + name);
        Rng rng = Rng::derive(seed, 0x6c6f7261ULL, k++);
        LoraEntry e;
        e.name = name;
        e.B = Mat::Zero(W0.rows(), rank);  // zero so the adapted model starts at the base model
        e.A = rng.gaussian_mat(rank, W0.cols()) / std::sqrt(static_cast<double>(rank));
        ad.entries.push_back(std::move(e));
    }
    return ad;
}

const LoraEntry* LoraAdapter::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return &e;
    return nullptr;
}

Vec time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw std::invalid_argument("time_embedding: dim must be even and >= 2");
    const int half = dim / 2;
    Vec e(dim);
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * k / half);
        e[2 * k] = std::sin(t * freq);
        e[2 * k + 1] = std::cos(t * freq);
    }
    return e;
}

Vec cond_embedding(const ParameterSet& params, int cond_id) {
    const Mat& emb = params.at("cond.emb");
    if (cond_id < 0 || cond_id >= emb.cols())
        throw std::invalid_argument("cond_embedding: unknown condition id");
    // One-hot matmul instead of .col() so the value is bitwise identical to
    // the tape path.
    Mat onehot = Mat::Zero(emb.cols(), 1);
    onehot(cond_id, 0) = 1.0;
    return Mat(emb * onehot).col(0);
}

Vec null_embedding(const ParameterSet& params) {
    return params.at("cond.null").col(0);
}

namespace {

Mat silu_mat(const Mat& x) {
    const Mat s = (1.0 + (-x.array()).exp()).inverse().matrix();
    return x.cwiseProduct(s);
}

Mat effective_weight_plain(const ParameterSet& params, const LoraAdapter* adapter,
                           const std::string& name) {
    const Mat& W0 = params.at(name);
    if (adapter == nullptr) return W0;
    const LoraEntry* e = adapter->find(name);
    if (e == nullptr) return W0;
    return Mat(W0 + e->B * e->A);
}

}  // namespace

Vec predict_noise(const ParameterSet& params, const LoraAdapter* adapter,
                  const Vec& x_t, int t, const Vec& cond) {
    const DenoiserConfig& cfg = params.config;
    if (x_t.size() != cfg.data_dim) throw std::invalid_argument("predict_noise: x_t dimension mismatch");
    if (cond.size() != cfg.cond_embed_dim)
        throw std::invalid_argument("predict_noise: condition embedding dimension mismatch");

    Mat z(cfg.input_dim(), 1);
    z.topRows(cfg.data_dim) = x_t;
    z.middleRows(cfg.data_dim, cfg.time_embed_dim) = time_embedding(t, cfg.time_embed_dim);
    z.bottomRows(cfg.cond_embed_dim) = cond;

    Mat h = Mat(effective_weight_plain(params, adapter, "in.W") * z) + params.at("in.b");
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string blk = "blk" + std::to_string(i);
        const Mat u = silu_mat(Mat(effective_weight_plain(params, adapter, blk + ".W1") * h) +
                               params.at(blk + ".b1"));
        h = h + Mat(Mat(effective_weight_plain(params, adapter, blk + ".W2") * u) +
                    params.at(blk + ".b2"));
    }
    const Mat y = Mat(effective_weight_plain(params, adapter, "out.W") * silu_mat(h)) +
                  params.at("out.b");
    return y.col(0);
}

TapeModel::TapeModel(ad::Tape& tape, const ParameterSet& params, const LoraAdapter* adapter)
    : tape_(&tape), params_(&params), adapter_(adapter) {
    entry_nodes_.reserve(params.entries.size());
    for (const auto& e : params.entries) {
        const int n = tape.leaf(e.value, e.trainable);
        entry_nodes_.push_back(n);
        if (e.trainable) {
            trainable_nodes_.push_back(n);
            trainable_names_.push_back(e.name);
        }
    }
    eff_nodes_ = entry_nodes_;
    if (adapter != nullptr) {
        for (const auto& le : adapter->entries) {
            const int bi = tape.leaf(le.B, true);
            const int ai = tape.leaf(le.A, true);
            lora_nodes_.emplace_back(bi, ai);
            trainable_nodes_.push_back(bi);
            trainable_names_.push_back("lora." + le.name + ".B");
            trainable_nodes_.push_back(ai);
            trainable_names_.push_back("lora." + le.name + ".A");
            const int idx = params.index_of(le.name);
            eff_nodes_[static_cast<std::size_t>(idx)] =
                tape.add(entry_nodes_[static_cast<std::size_t>(idx)], tape.matmul(bi, ai));
        }
    }
}

int TapeModel::effective_weight(const std::string& name) const {
    const int idx = params_->index_of(name);
    if (idx < 0) throw std::invalid_argument("TapeModel: no entry named " + name);
    return eff_nodes_[static_cast<std::size_t>(idx)];
}

int TapeModel::cond_embedding_node(int cond_id) const {
    const Mat& emb = params_->at("cond.emb");
    if (cond_id < 0 || cond_id >= emb.cols())
        throw std::invalid_argument("TapeModel: unknown condition id");
    Mat onehot = Mat::Zero(emb.cols(), 1);
    onehot(cond_id, 0) = 1.0;
    return tape_->matmul(effective_weight("cond.emb"), tape_->constant(std::move(onehot)));
}

int TapeModel::null_embedding_node() const { return effective_weight("cond.null"); }

int TapeModel::forward(int x_node, int t, int cond_node) const {
    ad::Tape& tp = *tape_;
    const DenoiserConfig& cfg = params_->config;
    if (tp.val(x_node).rows() != cfg.data_dim || tp.val(x_node).cols() != 1)
        throw std::invalid_argument("TapeModel: x_t dimension mismatch");
    if (tp.val(cond_node).rows() != cfg.cond_embed_dim || tp.val(cond_node).cols() != 1)
        throw std::invalid_argument("TapeModel: condition embedding dimension mismatch");

    const int temb = tp.constant(time_embedding(t, cfg.time_embed_dim));
    const int z = tp.vstack2(tp.vstack2(x_node, temb), cond_node);

    int h = tp.add(tp.matmul(effective_weight("in.W"), z), entry_nodes_[params_->index_of("in.b")]);
    for (int i = 0; i < cfg.depth; ++i) {
        const std::string blk = "blk" + std::to_string(i);
        const int u = tp.silu(tp.add(tp.matmul(effective_weight(blk + ".W1"), h),
                                     entry_nodes_[params_->index_of(blk + ".b1")]));
        h = tp.add(h, tp.add(tp.matmul(effective_weight(blk + ".W2"), u),
                             entry_nodes_[params_->index_of(blk + ".b2")]));
    }
    return tp.add(tp.matmul(effective_weight("out.W"), tp.silu(h)),
                  entry_nodes_[params_->index_of("out.b")]);
}

}  // namespace difflab
