#include <doctest.h>

#include <cmath>

#include "windae/autodiff.hpp"
#include "windae/errors.hpp"

using namespace windae;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, Philox& rng, double scale = 1.0) {
    Mat m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * rng.gaussian();
    return m;
}

// Central finite differences against the reverse-mode gradient.
void check_gradients(const ad::LossFn& f, const ad::ParameterSet& params, double tol = 1e-4,
                     double h = 1e-5) {
    const ad::ParameterSet grads = ad::grad(f, params);
    for (const auto& [name, p] : params) {
        const Mat& g = grads.at(name);
        REQUIRE(g.rows() == p.rows());
        REQUIRE(g.cols() == p.cols());
        for (Eigen::Index r = 0; r < p.rows(); ++r) {
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                ad::ParameterSet plus = params, minus = params;
                plus[name](r, c) += h;
                minus[name](r, c) -= h;
                const double fd = (ad::loss_value(f, plus) - ad::loss_value(f, minus)) / (2.0 * h);
                const double denom = std::max({std::abs(fd), std::abs(g(r, c)), 1.0});
                CHECK(std::abs(fd - g(r, c)) / denom < tol);
            }
        }
    }
}

} // namespace

TEST_CASE("grad of theta^2 at theta=3 is 6") {
    ad::ParameterSet params{{"theta", Mat::Constant(1, 1, 3.0)}};
    auto f = [](Tape&, const ad::VarMap& p) { return ad::square(p.at("theta")); };
    auto g = ad::grad(f, params);
    CHECK(g.at("theta")(0, 0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("grad of sum(softmax(theta)) is the zero vector") {
    Philox rng(1);
    ad::ParameterSet params{{"theta", random_mat(1, 5, rng)}};
    auto f = [](Tape&, const ad::VarMap& p) { return ad::sum_all(ad::softmax_rows(p.at("theta"))); };
    auto g = ad::grad(f, params);
    CHECK(g.at("theta").cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-scalar loss is a usage error") {
    ad::ParameterSet params{{"theta", Mat::Ones(2, 2)}};
    auto f = [](Tape&, const ad::VarMap& p) { return ad::square(p.at("theta")); };
    CHECK_THROWS_AS(ad::grad(f, params), UsageError);
}

TEST_CASE("NaN in the forward pass names the op") {
    ad::ParameterSet params{{"theta", Mat::Constant(1, 1, -1.0)}};
    auto f = [](Tape&, const ad::VarMap& p) { return ad::sum_all(ad::log(p.at("theta"))); };
    try {
        ad::grad(f, params);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("log") != std::string::npos);
    }
}

TEST_CASE("two-layer network gradients match finite differences") {
    Philox rng(42);
    ad::ParameterSet params;
    params["w1"] = random_mat(4, 6, rng, 0.5);
    params["b1"] = random_mat(1, 6, rng, 0.1);
    params["w2"] = random_mat(6, 3, rng, 0.5);
    params["b2"] = random_mat(1, 3, rng, 0.1);
    const Mat x = random_mat(5, 4, rng);
    const Mat target = random_mat(5, 3, rng);
    auto f = [&](Tape& tape, const ad::VarMap& p) {
        Var h = ad::tanh(ad::add_rowvec(ad::matmul(tape.constant(x), p.at("w1")), p.at("b1")));
        Var y = ad::add_rowvec(ad::matmul(h, p.at("w2")), p.at("b2"));
        return ad::mean_all(ad::square(ad::sub(y, tape.constant(target))));
    };
    check_gradients(f, params);
}

TEST_CASE("every primitive passes a finite-difference check") {
    Philox rng(7);
    const Mat x = random_mat(3, 4, rng);

    auto unary_case = [&](const char* name, std::function<Var(Var)> op, double shift = 0.0) {
        CAPTURE(name);
        ad::ParameterSet params{{"a", random_mat(3, 4, rng, 0.8)}};
        params["a"].array() += shift;
        auto f = [&](Tape&, const ad::VarMap& p) { return ad::sum_all(op(p.at("a"))); };
        check_gradients(f, params);
    };
    unary_case("tanh", [](Var v) { return ad::tanh(v); });
    unary_case("sigmoid", [](Var v) { return ad::sigmoid(v); });
    unary_case("exp", [](Var v) { return ad::exp(v); });
    unary_case("log", [](Var v) { return ad::log(v); }, 4.0); // keep positive
    unary_case("square", [](Var v) { return ad::square(v); });
    unary_case("relu", [](Var v) { return ad::relu(v); }); // points are a.s. off zero
    unary_case("softmax", [](Var v) { return ad::sum_all(ad::mul(v, ad::softmax_rows(v))); });
    unary_case("transpose", [](Var v) { return ad::square(ad::transpose(v)); });
    unary_case("scale", [](Var v) { return ad::scale(v, -2.5); });
    unary_case("add_scalar", [](Var v) { return ad::square(ad::add_scalar(v, 1.5)); });
    unary_case("neg", [](Var v) { return ad::square(ad::neg(v)); });
    unary_case("slice_rows", [](Var v) { return ad::square(ad::slice_rows(v, 1, 2)); });
    unary_case("slice_cols", [](Var v) { return ad::square(ad::slice_cols(v, 1, 3)); });
    unary_case("mean_all", [](Var v) { return ad::square(ad::mean_all(v)); });

    // binary ops
    {
        ad::ParameterSet params{{"a", random_mat(3, 4, rng)}, {"b", random_mat(3, 4, rng)}};
        for (auto [name, op] : std::vector<std::pair<const char*, std::function<Var(Var, Var)>>>{
                 {"add", [](Var a, Var b) { return ad::add(a, b); }},
                 {"sub", [](Var a, Var b) { return ad::sub(a, b); }},
                 {"mul", [](Var a, Var b) { return ad::mul(a, b); }},
                 {"concat_rows", [](Var a, Var b) { return ad::square(ad::concat_rows(a, b)); }}}) {
            CAPTURE(name);
            auto f = [&](Tape&, const ad::VarMap& p) {
                return ad::sum_all(op(p.at("a"), p.at("b")));
            };
            check_gradients(f, params);
        }
    }
    {
        ad::ParameterSet params{{"a", random_mat(3, 4, rng)}, {"b", random_mat(4, 2, rng)}};
        auto f = [](Tape&, const ad::VarMap& p) {
            return ad::sum_all(ad::square(ad::matmul(p.at("a"), p.at("b"))));
        };
        check_gradients(f, params);
    }
    {
        ad::ParameterSet params{{"a", random_mat(3, 4, rng)}, {"r", random_mat(1, 4, rng)}};
        auto f = [](Tape&, const ad::VarMap& p) {
            return ad::sum_all(ad::square(ad::add_rowvec(p.at("a"), p.at("r"))));
        };
        check_gradients(f, params);
    }
    (void)x;
}

TEST_CASE("softmax rows sum to one and stay positive") {
    Philox rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        Tape tape;
        Var v = tape.leaf(random_mat(4, 9, rng, 5.0));
        Var s = ad::softmax_rows(v);
        for (Eigen::Index r = 0; r < 4; ++r) {
            CHECK(std::abs(s.value().row(r).sum() - 1.0) < 1e-9);
            CHECK(s.value().row(r).minCoeff() > 0.0);
        }
    }
}

TEST_CASE("attention identities") {
    // single token: attention weight is exactly 1
    Tape tape;
    Mat v(1, 3);
    v << 0.4, -1.2, 2.0;
    Var q = tape.leaf(v), k = tape.leaf(v), val = tape.leaf(v);
    Var out = ad::attention(q, k, val);
    CHECK((out.value() - v).cwiseAbs().maxCoeff() < 1e-15);

    // two identical keys share the weight equally
    Mat keys(2, 2);
    keys << 1.0, 2.0, 1.0, 2.0;
    Mat vals(2, 2);
    vals << 1.0, 0.0, 0.0, 1.0;
    Mat query(1, 2);
    query << 0.3, -0.7;
    Tape tape2;
    Var o = ad::attention(tape2.leaf(query), tape2.leaf(keys), tape2.leaf(vals));
    CHECK(o.value()(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(o.value()(0, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("attention 2x2 case matches the hand-computed formula") {
    Mat q(2, 2), k(2, 2), v(2, 2);
    q << 1, 0, 0, 1;
    k << 1, 1, 0, 2;
    v << 1, 2, 3, 4;
    Tape tape;
    Var out = ad::attention(tape.leaf(q), tape.leaf(k), tape.leaf(v));

    // scores = q k^T / sqrt(2), softmax per row, times v
    const double s = 1.0 / std::sqrt(2.0);
    Mat scores(2, 2);
    scores << 1 * s, 0 * s, 1 * s, 2 * s;
    for (int r = 0; r < 2; ++r) {
        const double e0 = std::exp(scores(r, 0)), e1 = std::exp(scores(r, 1));
        const double w0 = e0 / (e0 + e1), w1 = e1 / (e0 + e1);
        CHECK(out.value()(r, 0) == doctest::Approx(w0 * 1 + w1 * 3).epsilon(1e-12));
        CHECK(out.value()(r, 1) == doctest::Approx(w0 * 2 + w1 * 4).epsilon(1e-12));
    }

    // attention weight rows sum to 1: reconstruct weights via value ratio
    Philox rng(5);
    Mat qq = random_mat(6, 4, rng), kk = random_mat(6, 4, rng);
    Tape t2;
    Var w = ad::softmax_rows(ad::scale(ad::matmul(t2.leaf(qq), ad::transpose(t2.leaf(kk))), 0.5));
    for (Eigen::Index r = 0; r < 6; ++r) CHECK(std::abs(w.value().row(r).sum() - 1.0) < 1e-9);

    Mat bad(3, 2);
    Tape t3;
    CHECK_THROWS_AS(ad::attention(t3.leaf(Mat::Ones(2, 2)), t3.leaf(Mat::Ones(2, 3)),
                                  t3.leaf(Mat::Ones(2, 2))),
                    UsageError);
}

TEST_CASE("positional encoding follows the sinusoid formulas") {
    const Mat pe = ad::positional_encoding(12, 8);
    // row 0: even columns sin(0)=0, odd columns cos(0)=1
    for (Eigen::Index c = 0; c < 8; c += 2) CHECK(pe(0, c) == 0.0);
    for (Eigen::Index c = 1; c < 8; c += 2) CHECK(pe(0, c) == 1.0);
    // column 0 is sin(pos)
    for (Eigen::Index pos = 0; pos < 12; ++pos)
        CHECK(pe(pos, 0) == doctest::Approx(std::sin(static_cast<double>(pos))).epsilon(1e-15));
    CHECK(pe.maxCoeff() <= 1.0);
    CHECK(pe.minCoeff() >= -1.0);
    CHECK_THROWS_AS(ad::positional_encoding(4, 5), UsageError);
}

TEST_CASE("lstm cell identities and oracle") {
    const int h = 3, f = 2, b = 1;

    // all-zero everything stays zero
    Tape tape;
    auto zero = [&](Eigen::Index r, Eigen::Index c) { return tape.leaf(Mat::Zero(r, c)); };
    auto st = ad::lstm_cell(zero(b, f), zero(b, h), zero(b, h), zero(f, 4 * h), zero(h, 4 * h),
                            zero(1, 4 * h));
    CHECK(st.h.value().cwiseAbs().maxCoeff() == 0.0);
    CHECK(st.c.value().cwiseAbs().maxCoeff() == 0.0);

    // large forget-gate bias preserves c_prev
    Tape t2;
    Mat bias = Mat::Zero(1, 4 * h);
    bias.middleCols(h, h).setConstant(10.0);
    Mat c_prev = Mat::Constant(b, h, 0.7);
    auto st2 = ad::lstm_cell(t2.leaf(Mat::Zero(b, f)), t2.leaf(Mat::Zero(b, h)), t2.leaf(c_prev),
                             t2.leaf(Mat::Zero(f, 4 * h)), t2.leaf(Mat::Zero(h, 4 * h)),
                             t2.leaf(bias));
    // forget gate sigmoid(10) > 0.9999; input gate sigmoid(0) * tanh(0) = 0
    CHECK(st2.c.value()(0, 0) == doctest::Approx(0.7 * (1.0 / (1.0 + std::exp(-10.0)))).epsilon(1e-12));
    CHECK(st2.c.value()(0, 0) > 0.7 * 0.9999);

    // random step equals a direct gate-equation oracle
    Philox rng(17);
    const Mat x = random_mat(b, f, rng), hp = random_mat(b, h, rng), cp = random_mat(b, h, rng);
    const Mat wx = random_mat(f, 4 * h, rng), wh = random_mat(h, 4 * h, rng),
              bb = random_mat(1, 4 * h, rng);
    Tape t3;
    auto st3 = ad::lstm_cell(t3.leaf(x), t3.leaf(hp), t3.leaf(cp), t3.leaf(wx), t3.leaf(wh),
                             t3.leaf(bb));
    Eigen::RowVectorXd gates = x.row(0) * wx + hp.row(0) * wh + bb.row(0);
    auto sig = [](double z) { return 1.0 / (1.0 + std::exp(-z)); };
    for (int j = 0; j < h; ++j) {
        const double i_g = sig(gates[j]);
        const double f_g = sig(gates[h + j]);
        const double g_g = std::tanh(gates[2 * h + j]);
        const double o_g = sig(gates[3 * h + j]);
        const double c_new = f_g * cp(0, j) + i_g * g_g;
        CHECK(st3.c.value()(0, j) == doctest::Approx(c_new).epsilon(1e-12));
        CHECK(st3.h.value()(0, j) == doctest::Approx(o_g * std::tanh(c_new)).epsilon(1e-12));
    }

    // gradients through a full cell
    ad::ParameterSet params{{"wx", wx}, {"wh", wh}, {"b", bb}};
    auto loss = [&](Tape& tp, const ad::VarMap& p) {
        auto s = ad::lstm_cell(tp.constant(x), tp.constant(hp), tp.constant(cp), p.at("wx"),
                               p.at("wh"), p.at("b"));
        return ad::sum_all(ad::square(s.h));
    };
    check_gradients(loss, params);
}

TEST_CASE("reparameterized sampling") {
    Philox rng(23);
    const Mat mu = random_mat(2, 4, rng), lv = random_mat(2, 4, rng, 0.5);

    Tape tape;
    Var z0 = ad::reparam_sample(tape.leaf(mu), tape.leaf(lv), tape.leaf(Mat::Zero(2, 4)));
    CHECK((z0.value() - mu).cwiseAbs().maxCoeff() < 1e-15);

    const Mat noise = random_mat(2, 4, rng);
    Tape t2;
    Var z1 = ad::reparam_sample(t2.leaf(mu), t2.leaf(Mat::Zero(2, 4)), t2.leaf(noise));
    CHECK((z1.value() - (mu + noise)).cwiseAbs().maxCoeff() < 1e-15);

    ad::ParameterSet params{{"mu", mu}, {"lv", lv}};
    auto f = [&](Tape& tp, const ad::VarMap& p) {
        return ad::sum_all(ad::reparam_sample(p.at("mu"), p.at("lv"), tp.constant(noise)));
    };
    check_gradients(f, params);
}

TEST_CASE("adam steps") {
    // first step magnitude is ~lr for |g| >> eps
    ad::ParameterSet params{{"p", Mat::Constant(1, 1, 2.0)}};
    ad::ParameterSet grads{{"p", Mat::Constant(1, 1, 5.0)}};
    ad::AdamState state;
    state.cfg.lr = 0.01;
    ad::adam_step(params, grads, state);
    CHECK(state.t == 1);
    CHECK(params["p"](0, 0) == doctest::Approx(2.0 - 0.01).epsilon(1e-6));

    // zero gradient leaves parameters unchanged but advances the counter
    ad::ParameterSet params2{{"p", Mat::Constant(1, 1, 1.5)}};
    ad::ParameterSet zero{{"p", Mat::Zero(1, 1)}};
    ad::AdamState s2;
    ad::adam_step(params2, zero, s2);
    CHECK(params2["p"](0, 0) == 1.5);
    CHECK(s2.t == 1);

    // f(theta) = theta^2 from 1.0 decreases monotonically for 5 steps
    ad::ParameterSet p3{{"t", Mat::Constant(1, 1, 1.0)}};
    ad::AdamState s3;
    s3.cfg.lr = 0.1;
    double prev = 1.0;
    for (int i = 0; i < 5; ++i) {
        ad::ParameterSet g{{"t", Mat::Constant(1, 1, 2.0 * p3["t"](0, 0))}};
        ad::adam_step(p3, g, s3);
        CHECK(std::abs(p3["t"](0, 0)) < prev);
        prev = std::abs(p3["t"](0, 0));
    }

    // NaN gradient is a numeric error
    ad::ParameterSet bad{{"p", Mat::Constant(1, 1, std::nan(""))}};
    ad::AdamState s4;
    CHECK_THROWS_AS(ad::adam_step(params2, bad, s4), NumericError);
}

TEST_CASE("forward passes are bit-deterministic") {
    Philox rng(31);
    const Mat x = random_mat(8, 8, rng);
    auto run = [&]() {
        Tape tape;
        Var v = tape.leaf(x);
        Var out = ad::softmax_rows(ad::tanh(ad::matmul(v, ad::transpose(v))));
        return Mat(out.value());
    };
    const Mat a = run(), b = run();
    CHECK(a == b);
}
