#include <freetalk/error.hpp>
#include <freetalk/nn/autograd.hpp>

namespace freetalk::nn {

Parameter& ParamStore::create(const std::string& name, Mat init, bool decay)
{
    require(!params_.count(name), ErrorKind::Validation, "duplicate parameter " + name);
    Parameter p;
    p.name = name;
    p.grad = Mat::Zero(init.rows(), init.cols());
    p.adam_m = Mat::Zero(init.rows(), init.cols());
    p.adam_v = Mat::Zero(init.rows(), init.cols());
    p.value = std::move(init);
    p.decay = decay;
    return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name)
{
    auto it = params_.find(name);
    if (it == params_.end()) fail(ErrorKind::Validation, "unknown parameter " + name);
    return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const
{
    auto it = params_.find(name);
    if (it == params_.end()) fail(ErrorKind::Validation, "unknown parameter " + name);
    return it->second;
}

void ParamStore::zero_grad()
{
    for (auto& [_, p] : params_) p.grad.setZero();
}

Eigen::Index ParamStore::num_values() const
{
    Eigen::Index n = 0;
    for (const auto& [_, p] : params_) n += p.value.size();
    return n;
}

Node* Tape::push()
{
    nodes_.emplace_back();
    return &nodes_.back();
}

Var Tape::constant(Mat value)
{
    Node* n = push();
    n->value = std::move(value);
    return {this, n};
}

Var Tape::param(Parameter& p)
{
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return {this, it->second};
    Node* n = push();
    n->value = p.value;
    n->requires_grad = grad_enabled_;
    n->param = &p;
    param_nodes_.emplace(&p, n);
    return {this, n};
}

Var Tape::record(Mat value, std::initializer_list<Var> inputs, std::function<void(Node&)> backward)
{
    Node* n = push();
    n->value = std::move(value);
    bool needs = false;
    if (grad_enabled_)
        for (const auto& v : inputs) needs |= v.requires_grad();
    n->requires_grad = needs;
    if (needs) n->backward = std::move(backward);
    return {this, n};
}

Var Tape::record(Mat value, const std::vector<Var>& inputs, std::function<void(Node&)> backward)
{
    Node* n = push();
    n->value = std::move(value);
    bool needs = false;
    if (grad_enabled_)
        for (const auto& v : inputs) needs |= v.requires_grad();
    n->requires_grad = needs;
    if (needs) n->backward = std::move(backward);
    return {this, n};
}

void Tape::backward(const Var& out)
{
    require(out.rows() == 1 && out.cols() == 1, ErrorKind::Shape, "backward needs a scalar output");
    if (!out.requires_grad()) return;
    out.node()->grad_buffer().setOnes();
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node& n = *it;
        if (!n.requires_grad || n.grad.size() == 0) continue;
        if (n.backward) n.backward(n);
        if (n.param) n.param->grad += n.grad;
    }
}

} // namespace freetalk::nn
