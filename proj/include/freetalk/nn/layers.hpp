#pragma once

#include <freetalk/nn/autograd.hpp>
#include <freetalk/nn/ops.hpp>

#include <optional>
#include <random>
#include <string>

namespace freetalk::nn {

using Rng = std::mt19937_64;

Mat uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);
Mat normal_init(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);

/// y = x W + b with W (in x out), b (1 x out).
struct Linear {
    Parameter* weight = nullptr;
    Parameter* bias = nullptr;

    static Linear create(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng,
                         bool with_bias = true);
    Var operator()(Tape& tape, const Var& x) const;
    Eigen::Index in_features() const { return weight->value.rows(); }
    Eigen::Index out_features() const { return weight->value.cols(); }
};

struct LayerNorm {
    Parameter* gain = nullptr;
    Parameter* bias = nullptr;

    static LayerNorm create(ParamStore& store, const std::string& name, Eigen::Index width);
    Var operator()(Tape& tape, const Var& x) const;
};

/// Multi-head scaled dot-product attention with output projection.
struct MultiHeadAttention {
    Linear query, key, value, out;
    int heads = 1;

    static MultiHeadAttention create(ParamStore& store, const std::string& name, Eigen::Index query_in,
                                     Eigen::Index memory_in, Eigen::Index model_dim, int heads, Rng& rng);

    /// `bias` is added to every head's logits (rows = queries, cols = keys).
    /// When `weights` is given it receives the head-averaged attention.
    Var operator()(Tape& tape, const Var& queries, const Var& memory, const Mat* bias = nullptr,
                   Mat* weights = nullptr) const;

    /// Same, with the query projection already applied.
    Var attend(Tape& tape, const Var& projected_queries, const Var& memory, const Mat* bias = nullptr,
               Mat* weights = nullptr) const;
};

} // namespace freetalk::nn
