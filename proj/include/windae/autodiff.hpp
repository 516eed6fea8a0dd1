#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "windae/rng.hpp"

namespace windae::ad {

using Mat = Eigen::MatrixXd;

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;

    const Mat& value() const;
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
};

// Reverse-mode tape. Nodes are appended in topological order during the
// forward pass; backward() walks them in reverse. Every op checks its output
// for non-finite values and names itself in the error.
class Tape {
public:
    Var leaf(Mat value, bool requires_grad = false);
    Var constant(Mat value) { return leaf(std::move(value), false); }

    // Root must be a 1x1 scalar.
    void backward(Var root);

    const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const Mat& grad(Var v) const;
    bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    std::size_t size() const { return nodes_.size(); }

    // Used by op builders; back may be empty for leaves.
    int emplace(Mat value, const char* op, bool requires_grad, std::function<void(Tape&)> back);
    Mat& grad_ref(int id) { return nodes_[static_cast<std::size_t>(id)].grad; }

private:
    struct Node {
        Mat value;
        Mat grad;
        const char* op;
        bool requires_grad;
        std::function<void(Tape&)> back;
    };
    std::vector<Node> nodes_;
    bool grads_valid_ = false;
};

// --- primitives -------------------------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b); // elementwise
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add_rowvec(Var a, Var row); // broadcast a 1xC row over all rows of a
Var scale(Var a, double s);
Var add_scalar(Var a, double c);
Var neg(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var square(Var a);
Var softmax_rows(Var a);
Var sum_all(Var a);  // 1x1
Var mean_all(Var a); // 1x1
Var slice_rows(Var a, Eigen::Index r0, Eigen::Index nrows);
Var slice_cols(Var a, Eigen::Index c0, Eigen::Index ncols);
Var concat_rows(Var a, Var b);

// --- composites -------------------------------------------------------------

// softmax(Q K^T / sqrt(d_k)) V
Var attention(Var q, Var k, Var v);

struct LstmState {
    Var h;
    Var c;
};

// Standard gated recurrence; gate layout along columns is [i, f, g, o].
// x: B x F, h/c: B x H, w_x: F x 4H, w_h: H x 4H, b: 1 x 4H.
LstmState lstm_cell(Var x, Var h_prev, Var c_prev, Var w_x, Var w_h, Var b);

// z = mu + exp(logvar / 2) .* noise
Var reparam_sample(Var mu, Var logvar, Var noise);

// Sinusoidal positional encoding table (constant, T x d, d even).
Mat positional_encoding(Eigen::Index t_len, Eigen::Index d);

// --- parameters, functional gradient, optimizer ------------------------------

// std::map keeps iteration order deterministic (lexicographic by name).
using ParameterSet = std::map<std::string, Mat>;
using VarMap = std::map<std::string, Var>;
using LossFn = std::function<Var(Tape&, const VarMap&)>;

// Exact reverse-mode gradients of a scalar loss w.r.t. every parameter.
ParameterSet grad(const LossFn& f, const ParameterSet& params);

// Forward-only evaluation of the same loss (used by finite-difference checks).
double loss_value(const LossFn& f, const ParameterSet& params);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    AdamConfig cfg;
    long t = 0;
    std::map<std::string, Mat> m;
    std::map<std::string, Mat> v;
};

// Adam with bias correction; moment buffers are created on first use.
void adam_step(ParameterSet& params, const ParameterSet& grads, AdamState& state);

// uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)).
Mat glorot_uniform(Eigen::Index rows, Eigen::Index cols, Philox& rng);

} // namespace windae::ad
