#include <cmath>

#include "difflab/rng.hpp"
#include "difflab/tape.hpp"
#include "doctest.h"

using difflab::Rng;
using difflab::ad::Tape;
using Mat = Eigen::MatrixXd;

namespace {

// Finite-difference check of d(scalar out)/d(leaf element) for an arbitrary
// graph builder f(tape, leaf_id) -> scalar node id.
template <typename Build>
void fd_check(const Mat& x0, Build&& build, double tol = 1e-6, double h = 1e-6) {
    Tape tape;
    const int leaf = tape.leaf(x0, true);
    const int out = build(tape, leaf);
    const int g = tape.gradients(out, {leaf})[0];
    for (long r = 0; r < x0.rows(); ++r) {
        for (long c = 0; c < x0.cols(); ++c) {
            auto eval = [&](double v) {
                Tape t2;
                Mat xp = x0;
                xp(r, c) = v;
                const int l2 = t2.leaf(xp, true);
                return t2.scalar(build(t2, l2));
            };
            const double fd = difflab::ad::central_diff(eval, x0(r, c), h);
            CHECK(tape.val(g)(r, c) == doctest::Approx(fd).epsilon(tol));
        }
    }
}

}  // namespace

TEST_CASE("first-order gradients match finite differences per primitive") {
    Rng rng = Rng::derive(3, 0x74617065ULL);
    const Mat x = rng.gaussian_mat(3, 2);
    const Mat y = rng.gaussian_mat(3, 2);
    const Mat w = rng.gaussian_mat(4, 3);

    fd_check(x, [&](Tape& t, int l) { return t.sum(t.add(l, t.constant(y))); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.sub(t.constant(y), l)); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.mul(l, t.constant(y))); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.scale(l, -2.5)); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.matmul(t.constant(w), l)); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.transpose(l)); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.sigmoid(l)); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.silu(l)); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.pow_const(t.sigmoid(l), 3.0)); });
    fd_check(x, [&](Tape& t, int l) { return t.sqnorm(l); });
    fd_check(x, [&](Tape& t, int l) { return t.norm(l); }, 1e-5);
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.slice_rows(l, 1, 2)); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.vstack2(l, t.constant(y))); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.vstack2(t.constant(y), t.mul(l, l))); });
    // 1x1 broadcast on either side of mul
    fd_check(Mat::Constant(1, 1, 0.37),
             [&](Tape& t, int l) { return t.sum(t.mul(l, t.constant(y))); });
    fd_check(x, [&](Tape& t, int l) { return t.sum(t.mul(l, t.constant_scalar(1.3))); });
}

TEST_CASE("gradient-of-gradient matches analytic second derivatives") {
    // f(x) = x^4 (elementwise sum): df/dx = 4x^3, d2f/dx2 = 12x^2.
    Tape tape;
    Mat x(2, 1);
    x << 0.8, -1.3;
    const int leaf = tape.leaf(x, true);
    const int f = tape.sum(tape.pow_const(leaf, 4.0));
    const int g = tape.gradients(f, {leaf})[0];
    CHECK(tape.val(g)(0, 0) == doctest::Approx(4 * std::pow(0.8, 3)).epsilon(1e-12));
    const int gsum = tape.sum(g);
    const int gg = tape.gradients(gsum, {leaf})[0];
    CHECK(tape.val(gg)(0, 0) == doctest::Approx(12 * std::pow(0.8, 2)).epsilon(1e-12));
    CHECK(tape.val(gg)(1, 0) == doctest::Approx(12 * std::pow(-1.3, 2)).epsilon(1e-12));
}

TEST_CASE("gradient of a gradient norm (the regularizer shape) matches finite differences") {
    // phi(w) = || d/dx <sigmoid(W x), d> ||  differentiated w.r.t. W.
    Rng rng = Rng::derive(9, 0x6767ULL);
    const Mat W = rng.gaussian_mat(3, 3);
    const Mat x = rng.gaussian_mat(3, 1);
    const Mat d = rng.gaussian_mat(3, 1);

    Tape tape;
    const int wl = tape.leaf(W, true);
    const int xl = tape.leaf(x, true);
    const int s = tape.dot(tape.sigmoid(tape.matmul(wl, xl)), tape.constant(d));
    const int g = tape.gradients(s, {xl})[0];
    const int n = tape.norm(g);
    const int gw = tape.gradients(n, {wl})[0];

    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            const double fd = difflab::ad::central_diff(
                [&](double v) {
                    Mat Wp = W;
                    Wp(r, c) = v;
                    Tape t;
                    const int wl2 = t.leaf(Wp, true);
                    const int xl2 = t.leaf(x, true);
                    const int s2 = t.dot(t.sigmoid(t.matmul(wl2, xl2)), t.constant(d));
                    const int g2 = t.gradients(s2, {xl2})[0];
                    return t.scalar(t.norm(g2));
                },
                W(r, c), 1e-6);
            CHECK(tape.val(gw)(r, c) == doctest::Approx(fd).epsilon(1e-5));
        }
}

TEST_CASE("gradients w.r.t. an unrelated leaf are zero") {
    Tape tape;
    const int a = tape.leaf(Mat::Constant(2, 1, 1.5), true);
    const int b = tape.leaf(Mat::Constant(2, 1, -0.5), true);
    const int out = tape.sqnorm(a);
    const auto grads = tape.gradients(out, {a, b});
    CHECK(tape.val(grads[0]).norm() > 0.0);
    CHECK(tape.val(grads[1]).norm() == 0.0);
}

TEST_CASE("tape rejects malformed graphs") {
    Tape tape;
    const int a = tape.leaf(Mat::Zero(2, 2), true);
    const int b = tape.leaf(Mat::Zero(3, 2), true);
    CHECK_THROWS(tape.add(a, b));
    CHECK_THROWS(tape.matmul(a, b));
    const int nonscalar = tape.add(a, a);
    CHECK_THROWS(tape.gradients(nonscalar, {a}));
}
