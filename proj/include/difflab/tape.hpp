#pragma once

#include <Eigen/Dense>
#include <vector>

namespace difflab::ad {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff over dense matrices. Backward passes emit new tape
// nodes (every pullback is written in terms of tape primitives), so gradients
// stay differentiable and grad-of-grad works to any order. This is what the
// variation regularizer needs: its loss contains ||d<x0_hat, dir>/d_eps||,
// and the optimizer differentiates through that norm a second time.
class Tape {
public:
    enum class Op {
        Leaf,
        Add,
        Sub,
        Mul,        // elementwise; either side may be 1x1 (broadcast)
        Scale,      // multiply by compile-time constant
        MatMul,
        Transpose,
        Sigmoid,
        PowConst,   // elementwise x^p
        Sum,        // full reduction to 1x1
        SliceRows,
        VStack2,
    };

    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        double c0 = 0.0;  // scale factor / exponent / slice start
        double c1 = 0.0;  // slice length
        Mat value;
        bool requires_grad = false;
    };

    int leaf(Mat v, bool requires_grad = false);
    int constant(Mat v) { return leaf(std::move(v), false); }
    int constant_scalar(double v);

    int add(int a, int b);
    int sub(int a, int b);
    int mul(int a, int b);
    int scale(int a, double c);
    int matmul(int a, int b);
    int transpose(int a);
    int sigmoid(int a);
    int pow_const(int a, double p);
    int sum(int a);
    int slice_rows(int a, int r0, int n);
    int vstack2(int a, int b);

    int dot(int a, int b) { return sum(mul(a, b)); }
    int silu(int a) { return mul(a, sigmoid(a)); }
    int sqnorm(int a) { return sum(mul(a, a)); }
    int norm(int a) { return pow_const(sqnorm(a), 0.5); }

    const Mat& val(int i) const { return nodes_[i].value; }
    double scalar(int i) const { return nodes_[i].value(0, 0); }
    bool requires_grad(int i) const { return nodes_[i].requires_grad; }

    // Adjoints of `out` (must be 1x1) with respect to each node in `wrt`.
    // Results are tape nodes; missing dependencies come back as zeros.
    std::vector<int> gradients(int out, const std::vector<int>& wrt);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    void reserve(std::size_t n) { nodes_.reserve(n); }

private:
    int push(Node n);
    int emit(Op op, int a, int b, double c0, double c1, Mat value);
    void check_same_shape(int a, int b, const char* what) const;

    std::vector<Node> nodes_;
};

// Central finite-difference scalar derivative helper used by the test
// oracles: df/dx at x0 via (f(x0+h)-f(x0-h)) / 2h.
template <typename F>
double central_diff(F&& f, double x0, double h) {
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h);
}

}  // namespace difflab::ad
