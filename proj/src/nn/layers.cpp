#include <freetalk/error.hpp>
#include <freetalk/nn/layers.hpp>

#include <cmath>

namespace freetalk::nn {

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng)
{
    std::uniform_real_distribution<double> dist(-bound, bound);
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng)
{
    std::normal_distribution<double> dist(0.0, stddev);
    Mat m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
    return m;
}

Linear Linear::create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                      bool with_bias)
{
    Linear l;
    const double bound = 1.0 / std::sqrt(double(in));
    l.weight = &store.create(name + ".weight", uniform_init(in, out, bound, rng));
    if (with_bias) l.bias = &store.create(name + ".bias", Mat::Zero(1, out), false);
    return l;
}

Var Linear::operator()(Tape& tape, const Var& x) const
{
    Var y = matmul(x, tape.param(*weight));
    if (bias) y = add_row(y, tape.param(*bias));
    return y;
}

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, Eigen::Index width)
{
    LayerNorm ln;
    ln.gain = &store.create(name + ".gain", Mat::Ones(1, width), false);
    ln.bias = &store.create(name + ".bias", Mat::Zero(1, width), false);
    return ln;
}

Var LayerNorm::operator()(Tape& tape, const Var& x) const
{
    return layer_norm(x, tape.param(*gain), tape.param(*bias));
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, Eigen::Index query_in,
                                              Eigen::Index memory_in, Eigen::Index model_dim, int heads, Rng& rng)
{
    require(heads > 0 && model_dim % heads == 0, ErrorKind::Config, name + ": model dim not divisible by heads");
    MultiHeadAttention a;
    a.heads = heads;
    a.query = Linear::create(store, name + ".q", query_in, model_dim, rng);
    a.key = Linear::create(store, name + ".k", memory_in, model_dim, rng);
    a.value = Linear::create(store, name + ".v", memory_in, model_dim, rng);
    a.out = Linear::create(store, name + ".o", model_dim, model_dim, rng);
    return a;
}

Var MultiHeadAttention::operator()(Tape& tape, const Var& queries, const Var& memory, const Mat* bias,
                                   Mat* weights) const
{
    return attend(tape, query(tape, queries), memory, bias, weights);
}

Var MultiHeadAttention::attend(Tape& tape, const Var& q, const Var& memory, const Mat* bias, Mat* weights) const
{
    const Var k = key(tape, memory);
    const Var v = value(tape, memory);
    const Eigen::Index dh = q.cols() / heads;
    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    if (bias)
        require(bias->rows() == q.rows() && bias->cols() == k.rows(), ErrorKind::Shape,
                "attention bias shape mismatch");
    if (weights) *weights = Mat::Zero(q.rows(), k.rows());

    std::vector<Var> outs;
    outs.reserve(heads);
    for (int h = 0; h < heads; ++h) {
        const Var qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
        const Var kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
        const Var vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
        Var logits = scale(matmul(qh, transpose(kh)), inv_sqrt);
        if (bias) logits = add_const(logits, *bias);
        const Var attn = softmax_rows(logits);
        if (weights) *weights += attn.value() / double(heads);
        outs.push_back(matmul(attn, vh));
    }
    return out(tape, heads == 1 ? outs[0] : concat_cols(outs));
}

} // namespace freetalk::nn
