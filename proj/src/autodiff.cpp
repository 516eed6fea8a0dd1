#include "windae/autodiff.hpp"

#include <cmath>

#include "windae/errors.hpp"

namespace windae::ad {

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.value().rows() != b.value().rows() || a.value().cols() != b.value().cols())
        throw UsageError(std::string(op) + ": shape mismatch");
}

void check_same_tape(const Var& a, const Var& b, const char* op) {
    if (a.tape != b.tape) throw UsageError(std::string(op) + ": Vars from different tapes");
}

} // namespace

const Mat& Var::value() const {
    if (!tape || id < 0) throw UsageError("use of an empty Var");
    return tape->value(id);
}

Var Tape::leaf(Mat value, bool requires_grad) {
    int id = emplace(std::move(value), "leaf", requires_grad, {});
    return {this, id};
}

int Tape::emplace(Mat value, const char* op, bool requires_grad, std::function<void(Tape&)> back) {
    if (!value.allFinite())
        throw NumericError(std::string("non-finite value produced by op '") + op + "'");
    Node node;
    node.value = std::move(value);
    node.op = op;
    node.requires_grad = requires_grad;
    node.back = std::move(back);
    nodes_.push_back(std::move(node));
    grads_valid_ = false;
    return static_cast<int>(nodes_.size()) - 1;
}

void Tape::backward(Var root) {
    if (root.tape != this) throw UsageError("backward: Var belongs to another tape");
    const Mat& rv = value(root.id);
    if (rv.rows() != 1 || rv.cols() != 1) throw UsageError("backward: loss must be a 1x1 scalar");
    if (!nodes_[static_cast<std::size_t>(root.id)].requires_grad)
        throw UsageError("backward: loss does not depend on any parameter");
    for (auto& node : nodes_) {
        if (node.requires_grad) node.grad = Mat::Zero(node.value.rows(), node.value.cols());
    }
    nodes_[static_cast<std::size_t>(root.id)].grad(0, 0) = 1.0;
    for (int i = root.id; i >= 0; --i) {
        Node& node = nodes_[static_cast<std::size_t>(i)];
        if (node.requires_grad && node.back) node.back(*this);
    }
    grads_valid_ = true;
}

const Mat& Tape::grad(Var v) const {
    if (v.tape != this) throw UsageError("grad: Var belongs to another tape");
    if (!grads_valid_) throw StateError("grad: backward() has not been run");
    const Node& node = nodes_[static_cast<std::size_t>(v.id)];
    if (!node.requires_grad) throw UsageError("grad: node does not require gradients");
    return node.grad;
}

// --- primitives -------------------------------------------------------------
//
// Each builder computes the forward value, then appends a node whose backward
// closure captures the (pre-assigned) output id plus parent ids. Gradients
// accumulate only into parents that require them.

Var add(Var a, Var b) {
    check_same_tape(a, b, "add");
    check_same_shape(a, b, "add");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, bid = b.id](Tape& tp) {
            const Mat& g = tp.grad_ref(out);
            if (tp.requires_grad(aid)) tp.grad_ref(aid) += g;
            if (tp.requires_grad(bid)) tp.grad_ref(bid) += g;
        };
    }
    t.emplace(a.value() + b.value(), "add", rg, std::move(back));
    return {&t, out};
}

Var sub(Var a, Var b) {
    check_same_tape(a, b, "sub");
    check_same_shape(a, b, "sub");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, bid = b.id](Tape& tp) {
            const Mat& g = tp.grad_ref(out);
            if (tp.requires_grad(aid)) tp.grad_ref(aid) += g;
            if (tp.requires_grad(bid)) tp.grad_ref(bid) -= g;
        };
    }
    t.emplace(a.value() - b.value(), "sub", rg, std::move(back));
    return {&t, out};
}

Var mul(Var a, Var b) {
    check_same_tape(a, b, "mul");
    check_same_shape(a, b, "mul");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, bid = b.id](Tape& tp) {
            const Mat& g = tp.grad_ref(out);
            if (tp.requires_grad(aid)) tp.grad_ref(aid).array() += g.array() * tp.value(bid).array();
            if (tp.requires_grad(bid)) tp.grad_ref(bid).array() += g.array() * tp.value(aid).array();
        };
    }
    t.emplace(a.value().cwiseProduct(b.value()), "mul", rg, std::move(back));
    return {&t, out};
}

Var matmul(Var a, Var b) {
    check_same_tape(a, b, "matmul");
    if (a.value().cols() != b.value().rows()) throw UsageError("matmul: inner dimensions differ");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, bid = b.id](Tape& tp) {
            const Mat& g = tp.grad_ref(out);
            if (tp.requires_grad(aid)) tp.grad_ref(aid).noalias() += g * tp.value(bid).transpose();
            if (tp.requires_grad(bid)) tp.grad_ref(bid).noalias() += tp.value(aid).transpose() * g;
        };
    }
    t.emplace(a.value() * b.value(), "matmul", rg, std::move(back));
    return {&t, out};
}

Var transpose(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) { tp.grad_ref(aid) += tp.grad_ref(out).transpose(); };
    }
    t.emplace(a.value().transpose(), "transpose", rg, std::move(back));
    return {&t, out};
}

Var add_rowvec(Var a, Var row) {
    check_same_tape(a, row, "add_rowvec");
    if (row.value().rows() != 1 || row.value().cols() != a.value().cols())
        throw UsageError("add_rowvec: row must be 1 x cols(a)");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id) || t.requires_grad(row.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, rid = row.id](Tape& tp) {
            const Mat& g = tp.grad_ref(out);
            if (tp.requires_grad(aid)) tp.grad_ref(aid) += g;
            if (tp.requires_grad(rid)) tp.grad_ref(rid) += g.colwise().sum();
        };
    }
    Mat v = a.value();
    v.rowwise() += Eigen::RowVectorXd(row.value().row(0));
    t.emplace(std::move(v), "add_rowvec", rg, std::move(back));
    return {&t, out};
}

Var scale(Var a, double s) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, s](Tape& tp) { tp.grad_ref(aid) += s * tp.grad_ref(out); };
    }
    t.emplace(s * a.value(), "scale", rg, std::move(back));
    return {&t, out};
}

Var add_scalar(Var a, double c) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) { tp.grad_ref(aid) += tp.grad_ref(out); };
    }
    t.emplace(a.value().array() + c, "add_scalar", rg, std::move(back));
    return {&t, out};
}

Var neg(Var a) { return scale(a, -1.0); }

Var tanh(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            const Mat& y = tp.value(out);
            tp.grad_ref(aid).array() += tp.grad_ref(out).array() * (1.0 - y.array().square());
        };
    }
    t.emplace(a.value().array().tanh(), "tanh", rg, std::move(back));
    return {&t, out};
}

Var sigmoid(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            const Mat& y = tp.value(out);
            tp.grad_ref(aid).array() += tp.grad_ref(out).array() * y.array() * (1.0 - y.array());
        };
    }
    // 0.5 * (1 + tanh(x/2)) avoids exp overflow on large |x|.
    t.emplace(0.5 * (1.0 + (0.5 * a.value().array()).tanh()), "sigmoid", rg, std::move(back));
    return {&t, out};
}

Var relu(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            tp.grad_ref(aid).array() +=
                tp.grad_ref(out).array() * (tp.value(aid).array() > 0.0).cast<double>();
        };
    }
    t.emplace(a.value().cwiseMax(0.0), "relu", rg, std::move(back));
    return {&t, out};
}

Var exp(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            tp.grad_ref(aid).array() += tp.grad_ref(out).array() * tp.value(out).array();
        };
    }
    t.emplace(a.value().array().exp(), "exp", rg, std::move(back));
    return {&t, out};
}

Var log(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            tp.grad_ref(aid).array() += tp.grad_ref(out).array() / tp.value(aid).array();
        };
    }
    t.emplace(a.value().array().log(), "log", rg, std::move(back));
    return {&t, out};
}

Var square(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            tp.grad_ref(aid).array() += 2.0 * tp.grad_ref(out).array() * tp.value(aid).array();
        };
    }
    t.emplace(a.value().array().square(), "square", rg, std::move(back));
    return {&t, out};
}

Var softmax_rows(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            const Mat& y = tp.value(out);
            const Mat& g = tp.grad_ref(out);
            Mat& ga = tp.grad_ref(aid);
            for (Eigen::Index r = 0; r < y.rows(); ++r) {
                const double dot = (g.row(r).array() * y.row(r).array()).sum();
                ga.row(r).array() += (g.row(r).array() - dot) * y.row(r).array();
            }
        };
    }
    Mat v = a.value();
    for (Eigen::Index r = 0; r < v.rows(); ++r) {
        const double mx = v.row(r).maxCoeff();
        Eigen::ArrayXd e = (v.row(r).array() - mx).exp();
        v.row(r) = e / e.sum();
    }
    t.emplace(std::move(v), "softmax_rows", rg, std::move(back));
    return {&t, out};
}

Var sum_all(Var a) {
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id](Tape& tp) {
            tp.grad_ref(aid).array() += tp.grad_ref(out)(0, 0);
        };
    }
    Mat v(1, 1);
    v(0, 0) = a.value().sum();
    t.emplace(std::move(v), "sum_all", rg, std::move(back));
    return {&t, out};
}

Var mean_all(Var a) {
    const double inv = 1.0 / static_cast<double>(a.value().size());
    return scale(sum_all(a), inv);
}

Var slice_rows(Var a, Eigen::Index r0, Eigen::Index nrows) {
    if (r0 < 0 || nrows < 1 || r0 + nrows > a.value().rows())
        throw UsageError("slice_rows: range out of bounds");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, r0, nrows](Tape& tp) {
            tp.grad_ref(aid).middleRows(r0, nrows) += tp.grad_ref(out);
        };
    }
    t.emplace(a.value().middleRows(r0, nrows), "slice_rows", rg, std::move(back));
    return {&t, out};
}

Var slice_cols(Var a, Eigen::Index c0, Eigen::Index ncols) {
    if (c0 < 0 || ncols < 1 || c0 + ncols > a.value().cols())
        throw UsageError("slice_cols: range out of bounds");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id);
    const int out = static_cast<int>(t.size());
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, c0, ncols](Tape& tp) {
            tp.grad_ref(aid).middleCols(c0, ncols) += tp.grad_ref(out);
        };
    }
    t.emplace(a.value().middleCols(c0, ncols), "slice_cols", rg, std::move(back));
    return {&t, out};
}

Var concat_rows(Var a, Var b) {
    check_same_tape(a, b, "concat_rows");
    if (a.value().cols() != b.value().cols()) throw UsageError("concat_rows: column counts differ");
    Tape& t = *a.tape;
    const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
    const int out = static_cast<int>(t.size());
    const Eigen::Index ra = a.value().rows(), rb = b.value().rows();
    std::function<void(Tape&)> back;
    if (rg) {
        back = [out, aid = a.id, bid = b.id, ra, rb](Tape& tp) {
            const Mat& g = tp.grad_ref(out);
            if (tp.requires_grad(aid)) tp.grad_ref(aid) += g.topRows(ra);
            if (tp.requires_grad(bid)) tp.grad_ref(bid) += g.bottomRows(rb);
        };
    }
    Mat v(ra + rb, a.value().cols());
    v.topRows(ra) = a.value();
    v.bottomRows(rb) = b.value();
    t.emplace(std::move(v), "concat_rows", rg, std::move(back));
    return {&t, out};
}

// --- composites ---------------------------------------------------------------

Var attention(Var q, Var k, Var v) {
    check_same_tape(q, k, "attention");
    check_same_tape(k, v, "attention");
    if (q.value().cols() != k.value().cols()) throw UsageError("attention: Q/K key dims differ");
    if (k.value().rows() != v.value().rows()) throw UsageError("attention: K/V lengths differ");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.value().cols()));
    Var scores = scale(matmul(q, transpose(k)), inv_sqrt_dk);
    return matmul(softmax_rows(scores), v);
}

LstmState lstm_cell(Var x, Var h_prev, Var c_prev, Var w_x, Var w_h, Var b) {
    const Eigen::Index four_h = w_x.value().cols();
    if (four_h % 4 != 0) throw UsageError("lstm_cell: gate matrix columns must be 4*H");
    const Eigen::Index h_dim = four_h / 4;
    if (w_h.value().rows() != h_dim || w_h.value().cols() != four_h)
        throw UsageError("lstm_cell: recurrent weight shape mismatch");
    if (h_prev.value().cols() != h_dim || c_prev.value().cols() != h_dim)
        throw UsageError("lstm_cell: state width mismatch");
    if (x.value().cols() != w_x.value().rows()) throw UsageError("lstm_cell: input width mismatch");

    Var gates = add_rowvec(add(matmul(x, w_x), matmul(h_prev, w_h)), b);
    Var i = sigmoid(slice_cols(gates, 0, h_dim));
    Var f = sigmoid(slice_cols(gates, h_dim, h_dim));
    Var g = tanh(slice_cols(gates, 2 * h_dim, h_dim));
    Var o = sigmoid(slice_cols(gates, 3 * h_dim, h_dim));
    Var c = add(mul(f, c_prev), mul(i, g));
    Var h = mul(o, tanh(c));
    return {h, c};
}

Var reparam_sample(Var mu, Var logvar, Var noise) {
    check_same_tape(mu, logvar, "reparam_sample");
    check_same_tape(mu, noise, "reparam_sample");
    check_same_shape(mu, logvar, "reparam_sample");
    check_same_shape(mu, noise, "reparam_sample");
    return add(mu, mul(exp(scale(logvar, 0.5)), noise));
}

Mat positional_encoding(Eigen::Index t_len, Eigen::Index d) {
    if (d % 2 != 0) throw UsageError("positional_encoding: dimension must be even");
    Mat pe(t_len, d);
    for (Eigen::Index pos = 0; pos < t_len; ++pos) {
        for (Eigen::Index i = 0; i < d / 2; ++i) {
            const double denom = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d));
            pe(pos, 2 * i) = std::sin(static_cast<double>(pos) / denom);
            pe(pos, 2 * i + 1) = std::cos(static_cast<double>(pos) / denom);
        }
    }
    return pe;
}

// --- parameters, functional gradient, optimizer --------------------------------

ParameterSet grad(const LossFn& f, const ParameterSet& params) {
    Tape tape;
    VarMap vars;
    for (const auto& [name, value] : params) vars[name] = tape.leaf(value, true);
    Var loss = f(tape, vars);
    if (loss.value().rows() != 1 || loss.value().cols() != 1)
        throw UsageError("grad: loss function must return a 1x1 scalar");
    tape.backward(loss);
    ParameterSet out;
    for (const auto& [name, var] : vars) out[name] = tape.grad(var);
    return out;
}

double loss_value(const LossFn& f, const ParameterSet& params) {
    Tape tape;
    VarMap vars;
    for (const auto& [name, value] : params) vars[name] = tape.leaf(value, false);
    Var loss = f(tape, vars);
    if (loss.value().rows() != 1 || loss.value().cols() != 1)
        throw UsageError("loss_value: loss function must return a 1x1 scalar");
    return loss.value()(0, 0);
}

void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state) {
    if (state.cfg.lr <= 0) throw ConfigError("adam: lr must be > 0");
    for (auto& [name, g] : grads) {
        if (!g.allFinite()) throw NumericError("adam: non-finite gradient for '" + name + "'");
        auto it = params.find(name);
        if (it == params.end()) throw UsageError("adam: unknown parameter '" + name + "'");
        if (it->second.rows() != g.rows() || it->second.cols() != g.cols())
            throw UsageError("adam: gradient shape mismatch for '" + name + "'");
    }
    state.t += 1;
    const double b1 = state.cfg.beta1, b2 = state.cfg.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    for (auto& [name, g] : grads) {
        Mat& p = params[name];
        Mat& m = state.m.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
        Mat& v = state.v.try_emplace(name, Mat::Zero(g.rows(), g.cols())).first->second;
        m = b1 * m + (1.0 - b1) * g;
        v = b2 * v.array().matrix() + (1.0 - b2) * g.array().square().matrix();
        p.array() -= state.cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + state.cfg.eps);
    }
}

Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, Philox& rng) {
    const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
    Mat w(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = rng.uniform(-s, s);
    return w;
}

} // namespace windae::ad
