#include <Eigen/SVD>
#include <cmath>

#include "difflab/denoiser.hpp"
#include "difflab/rng.hpp"
#include "doctest.h"

using namespace difflab;

namespace {

DenoiserConfig small_cfg() {
    DenoiserConfig c;
    c.data_dim = 3;
    c.hidden_width = 16;
    c.depth = 2;
    c.time_embed_dim = 8;
    c.cond_embed_dim = 4;
    c.num_conditions = 5;
    return c;
}

}  // namespace

TEST_CASE("initialization is deterministic in the seed") {
    const DenoiserConfig cfg = small_cfg();
    const ParameterSet a = init_denoiser(cfg, 123);
    const ParameterSet b = init_denoiser(cfg, 123);
    const ParameterSet c = init_denoiser(cfg, 124);
    REQUIRE(a.entries.size() == b.entries.size());
    bool all_equal = true, any_diff = false;
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        all_equal = all_equal && a.entries[i].value == b.entries[i].value;
        any_diff = any_diff || a.entries[i].value != c.entries[i].value;
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("config validation rejects bad shapes") {
    DenoiserConfig c = small_cfg();
    c.time_embed_dim = 7;  // must be even for the sin/cos split
    CHECK_THROWS(c.validate());
    c = small_cfg();
    c.data_dim = 0;
    CHECK_THROWS(c.validate());
    c = small_cfg();
    c.num_conditions = 0;
    CHECK_THROWS(c.validate());
}

TEST_CASE("time embedding is bounded, even-dimensional, and step-sensitive") {
    const Vec e1 = time_embedding(1, 8);
    const Vec e2 = time_embedding(50, 8);
    CHECK(e1.size() == 8);
    CHECK(e1.cwiseAbs().maxCoeff() <= 1.0 + 1e-12);
    CHECK((e1 - e2).norm() > 1e-3);
    CHECK_THROWS(time_embedding(1, 7));
}

TEST_CASE("plain and tape forward passes agree bitwise") {
    const ParameterSet p = init_denoiser(small_cfg(), 7);
    Rng rng = Rng::derive(7, 0x706172ULL);
    for (int i = 0; i < 20; ++i) {
        const Vec x = rng.gaussian_vec(p.config.data_dim);
        const int t = rng.uniform_int(1, 100);
        const int cid = rng.uniform_int(0, p.config.num_conditions - 1);
        const Vec plain = predict_noise(p, nullptr, x, t, cond_embedding(p, cid));

        ad::Tape tape;
        TapeModel model(tape, p, nullptr);
        const int out = model.forward(tape.constant(x), t, model.cond_embedding_node(cid));
        const Vec taped = tape.val(out).col(0);
        REQUIRE(taped.size() == plain.size());
        for (long d = 0; d < plain.size(); ++d) CHECK(taped[d] == plain[d]);  // exact
    }
}

TEST_CASE("plain and tape forward passes agree bitwise with a LoRA adapter") {
    const ParameterSet p = init_denoiser(small_cfg(), 9);
    LoraAdapter lora = init_lora(p, 2, 11);
    // make the adapter non-trivial
    Rng rng = Rng::derive(11, 0x6c6f7261ULL);
    for (auto& e : lora.entries) e.B = 0.1 * rng.gaussian_mat(e.B.rows(), e.B.cols());

    for (int i = 0; i < 10; ++i) {
        const Vec x = rng.gaussian_vec(p.config.data_dim);
        const int t = rng.uniform_int(1, 100);
        const Vec plain = predict_noise(p, &lora, x, t, cond_embedding(p, 1));
        ad::Tape tape;
        TapeModel model(tape, p, &lora);
        const int out = model.forward(tape.constant(x), t, model.cond_embedding_node(1));
        const Vec taped = tape.val(out).col(0);
        for (long d = 0; d < plain.size(); ++d) CHECK(taped[d] == plain[d]);
    }
}

TEST_CASE("zero-initialized LoRA leaves the model unchanged") {
    const ParameterSet p = init_denoiser(small_cfg(), 21);
    const LoraAdapter lora = init_lora(p, 2, 22);
    Rng rng = Rng::derive(21, 0x7a65726fULL);
    for (int i = 0; i < 10; ++i) {
        const Vec x = rng.gaussian_vec(p.config.data_dim);
        const Vec base = predict_noise(p, nullptr, x, 17, cond_embedding(p, 0));
        const Vec adapted = predict_noise(p, &lora, x, 17, cond_embedding(p, 0));
        CHECK((base - adapted).norm() == 0.0);
    }
}

TEST_CASE("lora_apply adds a rank-bounded update") {
    Rng rng = Rng::derive(31, 0x72616e6bULL);
    const Mat W0 = rng.gaussian_mat(10, 8);
    const Mat B = rng.gaussian_mat(10, 3);
    const Mat A = rng.gaussian_mat(3, 8);
    const Mat W = lora_apply(W0, B, A);
    const Mat delta = W - W0;
    CHECK((delta - B * A).norm() < 1e-12);
    const Eigen::JacobiSVD<Mat> svd(delta);
    int numerical_rank = 0;
    for (long i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()[i] > 1e-10) ++numerical_rank;
    CHECK(numerical_rank <= 3);
    CHECK_THROWS(lora_apply(W0, B, rng.gaussian_mat(3, 7)));  // shape mismatch
    CHECK_THROWS(lora_apply(W0, rng.gaussian_mat(9, 3), A));
}

TEST_CASE("init_lora covers exactly the adapted weights and validates rank") {
    const ParameterSet p = init_denoiser(small_cfg(), 41);
    const LoraAdapter lora = init_lora(p, 2, 42);
    const auto names = p.adapted_names();
    REQUIRE(lora.entries.size() == names.size());
    for (const auto& name : names) {
        const LoraEntry* e = lora.find(name);
        REQUIRE(e != nullptr);
        CHECK(e->B.norm() == 0.0);  // B starts at zero
        CHECK(e->A.norm() > 0.0);
        CHECK(e->B.cols() == 2);
        CHECK(e->A.rows() == 2);
    }
    CHECK(lora.find("in.b") == nullptr);       // biases are never adapted
    CHECK(lora.find("cond.emb") == nullptr);   // embeddings are never adapted
    CHECK_THROWS(init_lora(p, 0, 1));
    CHECK_THROWS(init_lora(p, 1000, 1));  // rank above the smallest adapted dim
}

TEST_CASE("cond and null embeddings come from the parameter set") {
    const ParameterSet p = init_denoiser(small_cfg(), 51);
    const Vec c0 = cond_embedding(p, 0);
    const Vec c1 = cond_embedding(p, 1);
    CHECK(c0.size() == p.config.cond_embed_dim);
    CHECK((c0 - c1).norm() > 0.0);
    CHECK((c0 - p.at("cond.emb").col(0)).norm() == 0.0);
    CHECK((null_embedding(p) - p.at("cond.null").col(0)).norm() == 0.0);
    CHECK_THROWS(cond_embedding(p, -1));
    CHECK_THROWS(cond_embedding(p, p.config.num_conditions));
}
