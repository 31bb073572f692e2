#include "difflab/tape.hpp"

#include <stdexcept>
#include <unordered_map>

namespace difflab::ad {

namespace {
bool is_scalar(const Mat& m) { return m.rows() == 1 && m.cols() == 1; }
}

int Tape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::emit(Op op, int a, int b, double c0, double c1, Mat value) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.c0 = c0;
    n.c1 = c1;
    n.value = std::move(value);
    n.requires_grad = (a >= 0 && nodes_[a].requires_grad) || (b >= 0 && nodes_[b].requires_grad);
    return push(std::move(n));
}

void Tape::check_same_shape(int a, int b, const char* what) const {
    const Mat& x = nodes_[a].value;
    const Mat& y = nodes_[b].value;
    if (x.rows() != y.rows() || x.cols() != y.cols())
        throw std::invalid_argument(std::string("tape: shape mismatch in ") + what);
}

int Tape::leaf(Mat v, bool requires_grad) {
    Node n;
    n.op = Op::Leaf;
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    return push(std::move(n));
}

int Tape::constant_scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
}

int Tape::add(int a, int b) {
    check_same_shape(a, b, "add");
    return emit(Op::Add, a, b, 0, 0, nodes_[a].value + nodes_[b].value);
}

int Tape::sub(int a, int b) {
    check_same_shape(a, b, "sub");
    return emit(Op::Sub, a, b, 0, 0, nodes_[a].value - nodes_[b].value);
}

int Tape::mul(int a, int b) {
    const Mat& x = nodes_[a].value;
    const Mat& y = nodes_[b].value;
    Mat v;
    if (is_scalar(x) && !is_scalar(y)) {
        v = x(0, 0) * y;
    } else if (is_scalar(y) && !is_scalar(x)) {
        v = y(0, 0) * x;
    } else {
        check_same_shape(a, b, "mul");
        v = x.cwiseProduct(y);
    }
    return emit(Op::Mul, a, b, 0, 0, std::move(v));
}

int Tape::scale(int a, double c) {
    return emit(Op::Scale, a, -1, c, 0, c * nodes_[a].value);
}

int Tape::matmul(int a, int b) {
    const Mat& x = nodes_[a].value;
    const Mat& y = nodes_[b].value;
    if (x.cols() != y.rows()) throw std::invalid_argument("tape: shape mismatch in matmul");
    return emit(Op::MatMul, a, b, 0, 0, x * y);
}

int Tape::transpose(int a) {
    return emit(Op::Transpose, a, -1, 0, 0, nodes_[a].value.transpose());
}

int Tape::sigmoid(int a) {
    Mat v = (1.0 + (-nodes_[a].value.array()).exp()).inverse().matrix();
    return emit(Op::Sigmoid, a, -1, 0, 0, std::move(v));
}

int Tape::pow_const(int a, double p) {
    Mat v = nodes_[a].value.array().pow(p).matrix();
    return emit(Op::PowConst, a, -1, p, 0, std::move(v));
}

int Tape::sum(int a) {
    Mat v(1, 1);
    v(0, 0) = nodes_[a].value.sum();
    return emit(Op::Sum, a, -1, 0, 0, std::move(v));
}

int Tape::slice_rows(int a, int r0, int n) {
    const Mat& x = nodes_[a].value;
    if (r0 < 0 || n < 0 || r0 + n > x.rows()) throw std::invalid_argument("tape: bad row slice");
    return emit(Op::SliceRows, a, -1, r0, n, x.middleRows(r0, n));
}

int Tape::vstack2(int a, int b) {
    const Mat& x = nodes_[a].value;
    const Mat& y = nodes_[b].value;
    if (x.cols() != y.cols()) throw std::invalid_argument("tape: shape mismatch in vstack2");
    Mat v(x.rows() + y.rows(), x.cols());
    v << x, y;
    return emit(Op::VStack2, a, b, 0, 0, std::move(v));
}

std::vector<int> Tape::gradients(int out, const std::vector<int>& wrt) {
    if (!is_scalar(nodes_[out].value))
        throw std::invalid_argument("tape: gradients() needs a scalar output");

    // Only nodes lying on a path from some wrt leaf to `out` get adjoints.
    std::vector<char> relevant(static_cast<std::size_t>(out) + 1, 0);
    for (int w : wrt)
        if (w >= 0 && w <= out) relevant[static_cast<std::size_t>(w)] = 1;
    for (int i = 0; i <= out; ++i) {
        if (relevant[static_cast<std::size_t>(i)]) continue;
        const int a = nodes_[i].a;
        const int b = nodes_[i].b;
        if ((a >= 0 && relevant[static_cast<std::size_t>(a)]) ||
            (b >= 0 && relevant[static_cast<std::size_t>(b)]))
            relevant[static_cast<std::size_t>(i)] = 1;
    }

    std::unordered_map<int, int> adj;  // node id -> adjoint node id
    adj.reserve(static_cast<std::size_t>(out) + 1);
    adj[out] = constant_scalar(1.0);

    auto accumulate = [&](int target, int contrib) {
        auto it = adj.find(target);
        if (it == adj.end())
            adj.emplace(target, contrib);
        else
            it->second = add(it->second, contrib);
    };

    // mul contribution for one side, collapsing back to 1x1 when that side
    // was broadcast.
    auto mul_side = [&](int g, int other, int self) {
        int contrib;
        if (is_scalar(nodes_[self].value) && !is_scalar(nodes_[other].value))
            contrib = sum(mul(g, other));
        else
            contrib = mul(g, other);
        return contrib;
    };

    const int last = out;  // nodes created during backward are never revisited
    for (int i = last; i >= 0; --i) {
        if (!relevant[static_cast<std::size_t>(i)]) continue;
        auto it = adj.find(i);
        if (it == adj.end()) continue;
        const int g = it->second;
        // Snapshot fields: `nodes_` may reallocate while emitting pullbacks.
        const Op op = nodes_[i].op;
        const int a = nodes_[i].a;
        const int b = nodes_[i].b;
        const double c0 = nodes_[i].c0;
        const double c1 = nodes_[i].c1;

        const bool need_a = a >= 0 && relevant[static_cast<std::size_t>(a)];
        const bool need_b = b >= 0 && relevant[static_cast<std::size_t>(b)];
        if (!need_a && !need_b) continue;

        switch (op) {
            case Op::Leaf:
                break;
            case Op::Add:
                if (need_a) accumulate(a, g);
                if (need_b) accumulate(b, g);
                break;
            case Op::Sub:
                if (need_a) accumulate(a, g);
                if (need_b) accumulate(b, scale(g, -1.0));
                break;
            case Op::Mul:
                if (need_a) accumulate(a, mul_side(g, b, a));
                if (need_b) accumulate(b, mul_side(g, a, b));
                break;
            case Op::Scale:
                if (need_a) accumulate(a, scale(g, c0));
                break;
            case Op::MatMul:
                if (need_a) accumulate(a, matmul(g, transpose(b)));
                if (need_b) accumulate(b, matmul(transpose(a), g));
                break;
            case Op::Transpose:
                if (need_a) accumulate(a, transpose(g));
                break;
            case Op::Sigmoid: {
                if (need_a) {
                    const int ones = constant(Mat::Ones(nodes_[i].value.rows(), nodes_[i].value.cols()));
                    accumulate(a, mul(g, mul(i, sub(ones, i))));
                }
                break;
            }
            case Op::PowConst:
                if (need_a) accumulate(a, mul(g, scale(pow_const(a, c0 - 1.0), c0)));
                break;
            case Op::Sum:
                if (need_a) {
                    const int ones = constant(Mat::Ones(nodes_[a].value.rows(), nodes_[a].value.cols()));
                    accumulate(a, mul(g, ones));
                }
                break;
            case Op::SliceRows:
                if (need_a) {
                    const int r0 = static_cast<int>(c0);
                    const int n = static_cast<int>(c1);
                    const auto& src = nodes_[a].value;
                    const int below = static_cast<int>(src.rows()) - r0 - n;
                    int padded = g;
                    if (r0 > 0) padded = vstack2(constant(Mat::Zero(r0, src.cols())), padded);
                    if (below > 0) padded = vstack2(padded, constant(Mat::Zero(below, src.cols())));
                    accumulate(a, padded);
                }
                break;
            case Op::VStack2: {
                const int ra = static_cast<int>(nodes_[a].value.rows());
                const int rb = static_cast<int>(nodes_[b].value.rows());
                if (need_a) accumulate(a, slice_rows(g, 0, ra));
                if (need_b) accumulate(b, slice_rows(g, ra, rb));
                break;
            }
        }
    }

    std::vector<int> result;
    result.reserve(wrt.size());
    for (int w : wrt) {
        auto it = adj.find(w);
        if (it != adj.end())
            result.push_back(it->second);
        else
            result.push_back(constant(Mat::Zero(nodes_[w].value.rows(), nodes_[w].value.cols())));
    }
    return result;
}

}  // namespace difflab::ad
