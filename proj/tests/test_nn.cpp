#include "oracles.hpp"

#include <freetalk/error.hpp>
#include <freetalk/nn/archive.hpp>
#include <freetalk/nn/layers.hpp>
#include <freetalk/nn/motion_loss.hpp>
#include <freetalk/nn/ops.hpp>
#include <freetalk/nn/optim.hpp>

#include <doctest.h>

#include <Eigen/Dense>

#include <filesystem>

using namespace freetalk;
using namespace freetalk::nn;

namespace {

// Scalar readout that weights every entry differently.
Var readout(Tape& tape, const Var& x, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    return sum(mul(x, tape.constant(oracle::random_matrix(x.rows(), x.cols(), rng))));
}

void expect_gradients(ParamStore& store, const std::function<Var(Tape&)>& loss, double tol = 1e-6)
{
    const oracle::GradCheck g = oracle::check_gradients(store, loss, 10, 99, 1e-6, 1e-10);
    CHECK(g.worst_relative < tol);
}

} // namespace

TEST_CASE("elementwise and matrix op gradients")
{
    std::mt19937_64 rng(1);
    ParamStore store;
    Parameter& a = store.create("a", oracle::random_matrix(4, 5, rng));
    Parameter& b = store.create("b", oracle::random_matrix(5, 3, rng));
    Parameter& c = store.create("c", oracle::random_matrix(4, 3, rng));
    Parameter& r = store.create("r", oracle::random_matrix(1, 3, rng));
    expect_gradients(store, [&](Tape& t) {
        Var x = matmul(t.param(a), t.param(b));
        x = add(mul(gelu(x), tanh(t.param(c))), relu(sub(x, t.param(c))));
        x = add_row(scale(x, 0.7), t.param(r));
        return readout(t, x, 5);
    });
}

TEST_CASE("structural op gradients")
{
    std::mt19937_64 rng(2);
    ParamStore store;
    Parameter& a = store.create("a", oracle::random_matrix(3, 4, rng));
    Parameter& b = store.create("b", oracle::random_matrix(3, 2, rng));
    Parameter& table = store.create("table", oracle::random_matrix(5, 4, rng));
    const Eigen::MatrixXd L = oracle::random_matrix(2, 6, rng);
    expect_gradients(store, [&](Tape& t) {
        Var x = concat_cols({t.param(a), t.param(b)});          // 3 x 6
        Var y = concat_rows({x, slice_rows(x, 1, 2)});           // 5 x 6
        Var z = slice_cols(transpose(y), 1, 3);                  // 6 x 3
        Var g = gather_rows(t.param(table), {4, 0, 4});          // 3 x 4
        Var f = unflatten_row(flatten_row(g), 4, 3);             // 4 x 3
        Var row = slice_rows(f, 2, 1);
        Var w = add(z, broadcast_rows(row, 6));
        return add(readout(t, left_multiply(L, w), 6), mean(add_const(g, Eigen::MatrixXd::Ones(3, 4))));
    });
}

TEST_CASE("normalization and softmax gradients")
{
    std::mt19937_64 rng(3);
    ParamStore store;
    Parameter& x = store.create("x", oracle::random_matrix(4, 6, rng));
    LayerNorm ln = LayerNorm::create(store, "ln", 6);
    ln.gain->value = oracle::random_matrix(1, 6, rng);
    ln.bias->value = oracle::random_matrix(1, 6, rng);
    expect_gradients(store, [&](Tape& t) { return readout(t, softmax_rows(ln(t, t.param(x))), 7); });

    Tape t(false);
    const Mat s = softmax_rows(t.constant(oracle::random_matrix(3, 5, rng))).value();
    CHECK((s.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    const Mat n = layer_norm(t.constant(oracle::random_matrix(2, 8, rng)), t.constant(Mat::Ones(1, 8)),
                             t.constant(Mat::Zero(1, 8)))
                      .value();
    CHECK(n.rowwise().mean().cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention matches a dense oracle and differentiates")
{
    std::mt19937_64 rng(4);
    ParamStore store;
    MultiHeadAttention attn = MultiHeadAttention::create(store, "attn", 6, 5, 8, 1, rng);
    Parameter& q = store.create("q", oracle::random_matrix(5, 6, rng));
    Parameter& m = store.create("m", oracle::random_matrix(3, 5, rng));
    Tape t(false);
    Mat weights;
    const Mat out = attn(t, t.param(q), t.param(m), nullptr, &weights).value();
    const Mat Q = q.value * attn.query.weight->value + attn.query.bias->value.replicate(5, 1);
    const Mat K = m.value * attn.key.weight->value + attn.key.bias->value.replicate(3, 1);
    const Mat V = m.value * attn.value.weight->value + attn.value.bias->value.replicate(3, 1);
    const Mat expected = oracle::attention(Q, K, V) * attn.out.weight->value + attn.out.bias->value.replicate(5, 1);
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((weights.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
    CHECK(weights.minCoeff() >= 0.0);

    MultiHeadAttention multi = MultiHeadAttention::create(store, "multi", 6, 5, 8, 2, rng);
    const Mat bias = Mat::Random(5, 3);
    expect_gradients(store, [&](Tape& tape) {
        return readout(tape, multi(tape, tape.param(q), tape.param(m), &bias), 8);
    });
}

TEST_CASE("spectral diffusion op")
{
    std::mt19937_64 rng(5);
    const Eigen::Index n = 7;
    // Random M-orthonormal basis with positive eigenvalues.
    const Eigen::VectorXd mass = Eigen::VectorXd::Random(n).cwiseAbs().array() + 0.5;
    const Mat raw = oracle::random_matrix(n, 3, rng);
    const Eigen::HouseholderQR<Mat> qr(mass.cwiseSqrt().asDiagonal() * raw);
    const Mat basis = mass.cwiseSqrt().cwiseInverse().asDiagonal() * Mat(qr.householderQ()).leftCols(3);
    const Eigen::VectorXd lambda = Eigen::Vector3d(0.0, 1.5, 4.0);

    ParamStore store;
    Parameter& x = store.create("x", oracle::random_matrix(n, 2, rng));
    Parameter& times = store.create("t", Mat(Eigen::RowVector2d(0.3, 0.8)));
    expect_gradients(store, [&](Tape& t) {
        return readout(t, spectral_diffusion(t.param(x), t.param(times), basis, lambda, mass), 9);
    });

    // Zero time is the identity; negative times clamp to zero with no gradient.
    Tape t(true);
    times.value << -1.0, 0.0;
    const Var y = spectral_diffusion(t.param(x), t.param(times), basis, lambda, mass);
    CHECK((y.value() - x.value).cwiseAbs().maxCoeff() < 1e-12);
    store.zero_grad();
    t.backward(readout(t, y, 10));
    CHECK(times.grad(0, 0) == 0.0);
}

TEST_CASE("dropout is the identity outside training")
{
    std::mt19937_64 rng(6);
    Tape t(false);
    const Mat v = oracle::random_matrix(4, 4, rng);
    CHECK(dropout(t.constant(v), 0.5).value() == v);
    Tape train(false);
    train.training = true;
    train.rng = &rng;
    const Mat d = dropout(train.constant(Mat::Ones(50, 50)), 0.5).value();
    CHECK(((d.array() == 0.0) || (d.array() == 2.0)).all());
    CHECK(d.mean() == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("motion loss node")
{
    std::mt19937_64 rng(7);
    ParamStore store;
    Parameter& p = store.create("p", oracle::random_matrix(5, 6, rng));
    const Mat truth = oracle::random_matrix(5, 6, rng);
    Tape t(false);
    CHECK(nn::motion_loss(t.param(p), truth, {0.5, 0.2}).value()(0, 0) ==
          doctest::Approx(oracle::motion_loss(truth, p.value, 0.5, 0.2)).epsilon(1e-12));
    expect_gradients(store, [&](Tape& tape) { return nn::motion_loss(tape.param(p), truth, {0.5, 0.2}); });
}

TEST_CASE("AdamW first step and clipping")
{
    ParamStore store;
    Parameter& w = store.create("w", Mat::Constant(1, 2, 2.0));
    Parameter& b = store.create("b", Mat::Constant(1, 1, 2.0), false);
    w.grad = Mat(Eigen::RowVector2d(3.0, -4.0));
    b.grad = Mat::Constant(1, 1, 0.5);
    CHECK(grad_norm(store) == doctest::Approx(std::sqrt(25.25)));
    CHECK(clip_grad_norm(store, 1.0) == doctest::Approx(std::sqrt(25.25)));
    CHECK(grad_norm(store) == doctest::Approx(1.0));

    AdamW opt({0.1, 0.9, 0.999, 1e-12, 0.01});
    opt.step(store);
    CHECK(opt.steps() == 1);
    // Bias-corrected first step moves each entry by lr * sign(g); decay on w only.
    CHECK(w.value(0, 0) == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0 - 0.1));
    CHECK(w.value(0, 1) == doctest::Approx(2.0 - 0.1 * 0.01 * 2.0 + 0.1));
    CHECK(b.value(0, 0) == doctest::Approx(1.9));
}

TEST_CASE("archive round trip")
{
    std::mt19937_64 rng(8);
    ParamStore a;
    Linear::create(a, "lin", 4, 3, rng);
    a.create("table", oracle::random_matrix(2, 5, rng));
    Archive ar;
    ar.header = {{"kind", "test"}};
    store_parameters(a, "", ar);
    const auto path = std::filesystem::temp_directory_path() / "freetalk_test.ftck";
    save_archive(ar, path);
    const Archive back = load_archive(path);
    CHECK(back.header.at("kind") == "test");
    ParamStore b;
    std::mt19937_64 other(9);
    Linear::create(b, "lin", 4, 3, other);
    b.create("table", Mat::Zero(2, 5));
    load_parameters(b, "", back);
    for (const auto& [name, p] : a.all()) CHECK(b.at(name).value == p.value);

    ParamStore wrong;
    wrong.create("table", Mat::Zero(3, 5));
    CHECK_THROWS_AS(load_parameters(wrong, "", back), Error);
}
