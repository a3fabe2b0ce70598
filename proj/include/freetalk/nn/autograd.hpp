#pragma once

#include <Eigen/Core>

#include <deque>
#include <functional>
#include <initializer_list>
#include <map>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace freetalk::nn {

using Mat = Eigen::MatrixXd;

/// A trainable tensor with its gradient and AdamW moments.
struct Parameter {
    std::string name;
    Mat value;
    Mat grad;
    Mat adam_m;
    Mat adam_v;
    bool decay = true;
};

/// Named parameters in deterministic (lexicographic) order. Node-based map,
/// so Parameter references stay valid while entries are added.
class ParamStore {
public:
    Parameter& create(const std::string& name, Mat init, bool decay = true);
    Parameter& at(const std::string& name);
    const Parameter& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) > 0; }

    std::map<std::string, Parameter>& all() { return params_; }
    const std::map<std::string, Parameter>& all() const { return params_; }

    void zero_grad();
    Eigen::Index num_values() const;

private:
    std::map<std::string, Parameter> params_;
};

struct Node {
    Mat value;
    Mat grad;  // allocated on first accumulation
    bool requires_grad = false;
    std::function<void(Node&)> backward;
    Parameter* param = nullptr;

    Mat& grad_buffer()
    {
        if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
        return grad;
    }
};

class Tape;

/// Handle to a value recorded on a Tape.
class Var {
public:
    Var() = default;
    Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}

    const Mat& value() const { return node_->value; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_->requires_grad; }
    bool valid() const { return node_ != nullptr; }

    Node* node() const { return node_; }
    Tape* tape() const { return tape_; }

private:
    Tape* tape_ = nullptr;
    Node* node_ = nullptr;
};

/// Reverse-mode recording. A tape is single-threaded; use one per worker.
class Tape {
public:
    explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Mat value);
    /// One leaf per parameter per tape; repeated calls return the same Var.
    Var param(Parameter& p);

    /// Records an op result. The backward closure runs only when some input
    /// requires a gradient and recording is enabled.
    Var record(Mat value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward);
    Var record(Mat value, const std::vector<Var>& inputs, std::function<void(Node&)> backward);

    /// Seeds d(out)/d(out) = 1 for a 1x1 value and accumulates into Parameter::grad.
    void backward(const Var& out);

    bool grad_enabled() const { return grad_enabled_; }
    std::size_t size() const { return nodes_.size(); }

    /// Dropout and other stochastic ops draw from this generator when set.
    std::mt19937_64* rng = nullptr;
    bool training = false;

private:
    Node* push();

    std::deque<Node> nodes_;
    std::unordered_map<Parameter*, Node*> param_nodes_;
    bool grad_enabled_;
};

} // namespace freetalk::nn
