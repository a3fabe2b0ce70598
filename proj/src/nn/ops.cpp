#include <freetalk/error.hpp>
#include <freetalk/nn/ops.hpp>

#include <cmath>
#include <numbers>

namespace freetalk::nn {

namespace {

void same_shape(const Var& a, const Var& b, const char* op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols())
        fail(ErrorKind::Shape, std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                                   std::to_string(b.cols()));
}

inline void acc(Node* n, const Mat& g)
{
    if (n->requires_grad) n->grad_buffer() += g;
}

} // namespace

Var matmul(const Var& a, const Var& b)
{
    if (a.cols() != b.rows())
        fail(ErrorKind::Shape, "matmul: inner dimensions " + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    Mat out(a.rows(), b.cols());
    out.noalias() = a.value() * b.value();
    Node *na = a.node(), *nb = b.node();
    return a.tape()->record(std::move(out), {a, b}, [na, nb](Node& self) {
        if (na->requires_grad) na->grad_buffer().noalias() += self.grad * nb->value.transpose();
        if (nb->requires_grad) nb->grad_buffer().noalias() += na->value.transpose() * self.grad;
    });
}

Var add(const Var& a, const Var& b)
{
    same_shape(a, b, "add");
    Node *na = a.node(), *nb = b.node();
    return a.tape()->record(a.value() + b.value(), {a, b}, [na, nb](Node& self) {
        acc(na, self.grad);
        acc(nb, self.grad);
    });
}

Var sub(const Var& a, const Var& b)
{
    same_shape(a, b, "sub");
    Node *na = a.node(), *nb = b.node();
    return a.tape()->record(a.value() - b.value(), {a, b}, [na, nb](Node& self) {
        acc(na, self.grad);
        if (nb->requires_grad) nb->grad_buffer() -= self.grad;
    });
}

Var mul(const Var& a, const Var& b)
{
    same_shape(a, b, "mul");
    Node *na = a.node(), *nb = b.node();
    return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [na, nb](Node& self) {
        if (na->requires_grad) na->grad_buffer() += self.grad.cwiseProduct(nb->value);
        if (nb->requires_grad) nb->grad_buffer() += self.grad.cwiseProduct(na->value);
    });
}

Var scale(const Var& a, double s)
{
    Node* na = a.node();
    return a.tape()->record(a.value() * s, {a}, [na, s](Node& self) { acc(na, self.grad * s); });
}

Var add_row(const Var& a, const Var& row)
{
    if (row.rows() != 1 || row.cols() != a.cols()) fail(ErrorKind::Shape, "add_row: row must be 1 x cols");
    Mat out = a.value();
    out.rowwise() += row.value().row(0);
    Node *na = a.node(), *nr = row.node();
    return a.tape()->record(std::move(out), {a, row}, [na, nr](Node& self) {
        acc(na, self.grad);
        if (nr->requires_grad) nr->grad_buffer() += self.grad.colwise().sum();
    });
}

Var add_const(const Var& a, const Mat& c)
{
    if (a.rows() != c.rows() || a.cols() != c.cols()) fail(ErrorKind::Shape, "add_const: shape mismatch");
    Node* na = a.node();
    return a.tape()->record(a.value() + c, {a}, [na](Node& self) { acc(na, self.grad); });
}

Var broadcast_rows(const Var& row, Eigen::Index n)
{
    if (row.rows() != 1) fail(ErrorKind::Shape, "broadcast_rows: expects a single row");
    Node* nr = row.node();
    return row.tape()->record(row.value().replicate(n, 1), {row}, [nr](Node& self) {
        if (nr->requires_grad) nr->grad_buffer() += self.grad.colwise().sum();
    });
}

Var gelu(const Var& a)
{
    const Mat& x = a.value();
    const Mat cdf = x.unaryExpr([](double v) { return 0.5 * (1.0 + std::erf(v / std::numbers::sqrt2)); });
    Mat out = x.cwiseProduct(cdf);
    Node* na = a.node();
    return a.tape()->record(std::move(out), {a}, [na, cdf](Node& self) {
        if (!na->requires_grad) return;
        const auto& x = na->value.array();
        const auto pdf = (-0.5 * x.square()).exp() * (1.0 / std::sqrt(2.0 * std::numbers::pi));
        na->grad_buffer().array() += self.grad.array() * (cdf.array() + x * pdf);
    });
}

Var relu(const Var& a)
{
    Node* na = a.node();
    return a.tape()->record(a.value().cwiseMax(0.0), {a}, [na](Node& self) {
        if (na->requires_grad) na->grad_buffer().array() += (na->value.array() > 0.0).select(self.grad.array(), 0.0);
    });
}

Var tanh(const Var& a)
{
    Mat out = a.value().array().tanh().matrix();
    Node* na = a.node();
    return a.tape()->record(out, {a}, [na](Node& self) {
        if (na->requires_grad) na->grad_buffer().array() += self.grad.array() * (1.0 - self.value.array().square());
    });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps)
{
    const Eigen::Index c = x.cols();
    if (gain.rows() != 1 || gain.cols() != c || bias.rows() != 1 || bias.cols() != c)
        fail(ErrorKind::Shape, "layer_norm: gain/bias must be 1 x cols");
    const Eigen::VectorXd mu = x.value().rowwise().mean();
    Mat centered = x.value().colwise() - mu;
    const Eigen::VectorXd inv_std = ((centered.array().square().rowwise().sum() / double(c)) + eps).rsqrt();
    Mat xhat = inv_std.asDiagonal() * centered;
    Mat out = xhat * gain.value().row(0).asDiagonal();
    out.rowwise() += bias.value().row(0);
    Node *nx = x.node(), *ng = gain.node(), *nb = bias.node();
    return x.tape()->record(std::move(out), {x, gain, bias}, [nx, ng, nb, xhat, inv_std, c](Node& self) {
        const Mat& g = self.grad;
        if (ng->requires_grad) ng->grad_buffer() += g.cwiseProduct(xhat).colwise().sum();
        if (nb->requires_grad) nb->grad_buffer() += g.colwise().sum();
        if (nx->requires_grad) {
            const Mat dxhat = g * ng->value.row(0).asDiagonal();
            const Eigen::VectorXd m1 = dxhat.rowwise().mean();
            const Eigen::VectorXd m2 = dxhat.cwiseProduct(xhat).rowwise().mean();
            Mat dx = dxhat;
            dx.colwise() -= m1;
            dx -= xhat.cwiseProduct(m2.replicate(1, c));
            nx->grad_buffer() += inv_std.asDiagonal() * dx;
        }
    });
}

Var softmax_rows(const Var& a)
{
    Mat out = a.value();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
        const double m = out.row(r).maxCoeff();
        out.row(r) = (out.row(r).array() - m).exp();
        out.row(r) /= out.row(r).sum();
    }
    Node* na = a.node();
    return a.tape()->record(std::move(out), {a}, [na](Node& self) {
        if (!na->requires_grad) return;
        const Mat& s = self.value;
        const Eigen::VectorXd dot = self.grad.cwiseProduct(s).rowwise().sum();
        Mat g = self.grad;
        g.colwise() -= dot;
        na->grad_buffer() += s.cwiseProduct(g);
    });
}

Var transpose(const Var& a)
{
    Node* na = a.node();
    return a.tape()->record(a.value().transpose(), {a}, [na](Node& self) { acc(na, self.grad.transpose()); });
}

Var concat_cols(const std::vector<Var>& parts)
{
    require(!parts.empty(), ErrorKind::Shape, "concat_cols: no inputs");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        require(p.rows() == rows, ErrorKind::Shape, "concat_cols: row count mismatch");
        cols += p.cols();
    }
    Mat out(rows, cols);
    std::vector<Node*> nodes;
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleCols(off, p.cols()) = p.value();
        nodes.push_back(p.node());
        offsets.push_back(off);
        off += p.cols();
    }
    return parts[0].tape()->record(std::move(out), parts, [nodes, offsets](Node& self) {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i]->requires_grad)
                nodes[i]->grad_buffer() += self.grad.middleCols(offsets[i], nodes[i]->value.cols());
    });
}

Var concat_rows(const std::vector<Var>& parts)
{
    require(!parts.empty(), ErrorKind::Shape, "concat_rows: no inputs");
    const Eigen::Index cols = parts[0].cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        require(p.cols() == cols, ErrorKind::Shape, "concat_rows: column count mismatch");
        rows += p.rows();
    }
    Mat out(rows, cols);
    std::vector<Node*> nodes;
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        out.middleRows(off, p.rows()) = p.value();
        nodes.push_back(p.node());
        offsets.push_back(off);
        off += p.rows();
    }
    return parts[0].tape()->record(std::move(out), parts, [nodes, offsets](Node& self) {
        for (std::size_t i = 0; i < nodes.size(); ++i)
            if (nodes[i]->requires_grad)
                nodes[i]->grad_buffer() += self.grad.middleRows(offsets[i], nodes[i]->value.rows());
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count)
{
    require(start >= 0 && count >= 0 && start + count <= a.cols(), ErrorKind::Shape, "slice_cols: out of range");
    Node* na = a.node();
    return a.tape()->record(a.value().middleCols(start, count), {a}, [na, start, count](Node& self) {
        if (na->requires_grad) na->grad_buffer().middleCols(start, count) += self.grad;
    });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count)
{
    require(start >= 0 && count >= 0 && start + count <= a.rows(), ErrorKind::Shape, "slice_rows: out of range");
    Node* na = a.node();
    return a.tape()->record(a.value().middleRows(start, count), {a}, [na, start, count](Node& self) {
        if (na->requires_grad) na->grad_buffer().middleRows(start, count) += self.grad;
    });
}

Var gather_rows(const Var& table, const std::vector<int>& rows)
{
    Mat out(Eigen::Index(rows.size()), table.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require(rows[i] >= 0 && rows[i] < table.rows(), ErrorKind::Validation, "gather_rows: index out of range");
        out.row(Eigen::Index(i)) = table.value().row(rows[i]);
    }
    Node* nt = table.node();
    return table.tape()->record(std::move(out), {table}, [nt, rows](Node& self) {
        if (!nt->requires_grad) return;
        auto& g = nt->grad_buffer();
        for (std::size_t i = 0; i < rows.size(); ++i) g.row(rows[i]) += self.grad.row(Eigen::Index(i));
    });
}

Var flatten_row(const Var& a)
{
    const Eigen::Index r = a.rows(), c = a.cols();
    Mat out(1, r * c);
    for (Eigen::Index i = 0; i < r; ++i) out.block(0, i * c, 1, c) = a.value().row(i);
    Node* na = a.node();
    return a.tape()->record(std::move(out), {a}, [na, r, c](Node& self) {
        if (!na->requires_grad) return;
        auto& g = na->grad_buffer();
        for (Eigen::Index i = 0; i < r; ++i) g.row(i) += self.grad.block(0, i * c, 1, c);
    });
}

Var unflatten_row(const Var& a, Eigen::Index rows, Eigen::Index cols)
{
    require(a.rows() == 1 && a.cols() == rows * cols, ErrorKind::Shape, "unflatten_row: size mismatch");
    Mat out(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) out.row(i) = a.value().block(0, i * cols, 1, cols);
    Node* na = a.node();
    return a.tape()->record(std::move(out), {a}, [na, rows, cols](Node& self) {
        if (!na->requires_grad) return;
        auto& g = na->grad_buffer();
        for (Eigen::Index i = 0; i < rows; ++i) g.block(0, i * cols, 1, cols) += self.grad.row(i);
    });
}

Var left_multiply(const Mat& c, const Var& a)
{
    require(c.cols() == a.rows(), ErrorKind::Shape, "left_multiply: dimension mismatch");
    Mat out(c.rows(), a.cols());
    out.noalias() = c * a.value();
    Node* na = a.node();
    const Mat* cp = &c;
    return a.tape()->record(std::move(out), {a}, [na, cp](Node& self) {
        if (na->requires_grad) na->grad_buffer().noalias() += cp->transpose() * self.grad;
    });
}

Var left_multiply(const Eigen::SparseMatrix<double>& c, const Var& a)
{
    require(c.cols() == a.rows(), ErrorKind::Shape, "left_multiply: dimension mismatch");
    Mat out = c * a.value();
    Node* na = a.node();
    const Eigen::SparseMatrix<double>* cp = &c;
    return a.tape()->record(std::move(out), {a}, [na, cp](Node& self) {
        if (na->requires_grad) na->grad_buffer() += cp->transpose() * self.grad;
    });
}

Var dropout(const Var& a, double p)
{
    Tape* tape = a.tape();
    if (!tape->training || !tape->rng || p <= 0.0) return a;
    std::bernoulli_distribution keep(1.0 - p);
    Mat mask(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*tape->rng) ? 1.0 / (1.0 - p) : 0.0;
    Node* na = a.node();
    return tape->record(a.value().cwiseProduct(mask), {a}, [na, mask](Node& self) {
        if (na->requires_grad) na->grad_buffer() += self.grad.cwiseProduct(mask);
    });
}

Var sum(const Var& a)
{
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    Node* na = a.node();
    return a.tape()->record(std::move(out), {a}, [na](Node& self) {
        if (na->requires_grad) na->grad_buffer().array() += self.grad(0, 0);
    });
}

Var mean(const Var& a)
{
    return scale(sum(a), 1.0 / double(a.value().size()));
}

Var spectral_diffusion(const Var& x, const Var& times, const Mat& basis, const Eigen::VectorXd& eigenvalues,
                       const Eigen::VectorXd& mass)
{
    const Eigen::Index C = x.cols();
    require(times.rows() == 1 && times.cols() == C, ErrorKind::Shape, "spectral_diffusion: times must be 1 x C");
    require(basis.rows() == x.rows() && mass.size() == x.rows(), ErrorKind::Shape,
            "spectral_diffusion: basis/mass size mismatch");
    const Eigen::Index k = basis.cols();

    Mat coeffs(k, C);
    coeffs.noalias() = basis.transpose() * (mass.asDiagonal() * x.value());
    Mat gain(k, C);
    for (Eigen::Index c = 0; c < C; ++c) {
        const double t = std::max(times.value()(0, c), 0.0);
        gain.col(c) = (1.0 + t * eigenvalues.array()).inverse() - 1.0;
    }
    Mat out = x.value();
    out.noalias() += basis * gain.cwiseProduct(coeffs);

    Node *nx = x.node(), *nt = times.node();
    const Mat* bp = &basis;
    const Eigen::VectorXd* lp = &eigenvalues;
    const Eigen::VectorXd* mp = &mass;
    return x.tape()->record(std::move(out), {x, times}, [nx, nt, bp, lp, mp, coeffs, gain](Node& self) {
        Mat proj(bp->cols(), self.grad.cols());
        proj.noalias() = bp->transpose() * self.grad;
        if (nx->requires_grad) {
            Mat back(bp->rows(), self.grad.cols());
            back.noalias() = *bp * gain.cwiseProduct(proj);
            nx->grad_buffer() += self.grad + mp->asDiagonal() * back;
        }
        if (nt->requires_grad) {
            auto& g = nt->grad_buffer();
            for (Eigen::Index c = 0; c < proj.cols(); ++c) {
                const double t = nt->value(0, c);
                if (t < 0.0) continue;  // clamped: flat
                const Eigen::ArrayXd denom = 1.0 + t * lp->array();
                const Eigen::ArrayXd dgain = -lp->array() / denom.square();
                g(0, c) += (proj.col(c).array() * coeffs.col(c).array() * dgain).sum();
            }
        }
    });
}

} // namespace freetalk::nn
