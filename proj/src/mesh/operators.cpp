#include <freetalk/error.hpp>
#include <freetalk/mesh/operators.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

namespace freetalk::mesh {

namespace {

constexpr int kDenseEigenLimit = 800;

double cot_at(const Eigen::Vector3d& apex, const Eigen::Vector3d& p, const Eigen::Vector3d& q, bool& degenerate)
{
    const Eigen::Vector3d a = p - apex;
    const Eigen::Vector3d b = q - apex;
    const double s = a.cross(b).norm();
    if (!(s > 1e-300)) {
        degenerate = true;
        return 0.0;
    }
    return a.dot(b) / s;
}

SpectralBasis dense_solve(const SparseMatrix& L, const Eigen::VectorXd& mass, int k)
{
    const Eigen::VectorXd inv_sqrt = mass.cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd S = inv_sqrt.asDiagonal() * Eigen::MatrixXd(L) * inv_sqrt.asDiagonal();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success) fail(ErrorKind::Numerical, "dense eigen-solve failed");
    SpectralBasis out;
    out.eigenvalues = es.eigenvalues().head(k);
    out.eigenvectors = inv_sqrt.asDiagonal() * es.eigenvectors().leftCols(k);
    return out;
}

// Shift-invert subspace iteration with Rayleigh-Ritz projection.
SpectralBasis iterative_solve(const SparseMatrix& L, const Eigen::VectorXd& mass, int k)
{
    const Eigen::Index n = L.rows();
    const int p = int(std::min<Eigen::Index>(n, std::max(2 * k, k + 16)));
    const double scale = (L.diagonal().array() / mass.array()).mean();
    const double shift = 1e-6 * scale;

    SparseMatrix shifted = L;
    for (Eigen::Index i = 0; i < n; ++i) shifted.coeffRef(i, i) += shift * mass(i);
    Eigen::SimplicialLDLT<SparseMatrix> solver(shifted);
    if (solver.info() != Eigen::Success) fail(ErrorKind::Numerical, "factorization for eigen-solve failed");

    std::mt19937_64 rng(12345);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd X(n, p);
    for (Eigen::Index j = 0; j < p; ++j)
        for (Eigen::Index i = 0; i < n; ++i) X(i, j) = normal(rng);
    X.col(0).setOnes();

    SpectralBasis out;
    for (int iter = 0; iter < 1000; ++iter) {
        Eigen::MatrixXd Y = solver.solve(mass.asDiagonal() * X);
        Eigen::MatrixXd KY = L * Y;
        Eigen::MatrixXd Kr = Y.transpose() * KY;
        Eigen::MatrixXd Mr = Y.transpose() * mass.asDiagonal() * Y;
        Kr = 0.5 * (Kr + Kr.transpose());
        Mr = 0.5 * (Mr + Mr.transpose());
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(Kr, Mr);
        if (ges.info() != Eigen::Success) fail(ErrorKind::Numerical, "Rayleigh-Ritz step failed");
        X = Y * ges.eigenvectors();
        const Eigen::VectorXd theta = ges.eigenvalues();

        // Residuals relative to the top of the wanted spectrum, so the null
        // (constant) mode is judged on the same scale as the others.
        double worst = 0.0;
        const double ref = std::max(std::abs(theta(k - 1)), shift);
        const Eigen::MatrixXd LX = L * X.leftCols(k);
        for (int j = 0; j < k; ++j) {
            const Eigen::VectorXd mx = mass.cwiseProduct(X.col(j));
            const Eigen::VectorXd r = LX.col(j) - theta(j) * mx;
            worst = std::max(worst, r.norm() / (ref * mx.norm() + 1e-300));
        }
        if (worst < 1e-10 || (iter > 10 && worst < 1e-8 && iter % 50 == 0)) {
            out.eigenvalues = theta.head(k);
            out.eigenvectors = X.leftCols(k);
            return out;
        }
    }
    fail(ErrorKind::Numerical, "spectral basis did not converge");
}

} // namespace

SpectralBasis solve_spectral_basis(const SparseMatrix& laplacian, const Eigen::VectorXd& mass, int k)
{
    const Eigen::Index n = laplacian.rows();
    k = int(std::clamp<Eigen::Index>(k, 1, n));
    SpectralBasis basis = (n <= kDenseEigenLimit || k * 3 > n) ? dense_solve(laplacian, mass, k)
                                                               : iterative_solve(laplacian, mass, k);
    // Fix the sign of each eigenvector so the basis is a deterministic function
    // of the operator: largest-magnitude entry positive.
    for (int j = 0; j < k; ++j) {
        Eigen::Index idx = 0;
        basis.eigenvectors.col(j).cwiseAbs().maxCoeff(&idx);
        if (basis.eigenvectors(idx, j) < 0) basis.eigenvectors.col(j) *= -1.0;
    }
    return basis;
}

TangentGradient build_tangent_gradient(const Mesh& mesh, const Vertices& normals)
{
    const Eigen::Index n = mesh.num_vertices();
    std::vector<std::set<int>> nbrs(n);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
        for (int k = 0; k < 3; ++k) {
            const int a = mesh.faces(f, k), b = mesh.faces(f, (k + 1) % 3);
            nbrs[a].insert(b);
            nbrs[b].insert(a);
        }

    std::vector<Eigen::Triplet<double>> tx, ty;
    const double reg = 1e-8 * std::pow(mean_edge_length(mesh), 2);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (nbrs[i].empty()) continue;
        const Eigen::Vector3d nrm = normals.row(i).transpose();
        // Tangent frame: project the axis least aligned with the normal.
        Eigen::Vector3d axis = Eigen::Vector3d::UnitX();
        if (std::abs(nrm.x()) > 0.9) axis = Eigen::Vector3d::UnitY();
        const Eigen::Vector3d b1 = (axis - axis.dot(nrm) * nrm).normalized();
        const Eigen::Vector3d b2 = nrm.cross(b1);

        const int deg = int(nbrs[i].size());
        Eigen::MatrixXd E(deg, 2);
        std::vector<int> ids;
        int r = 0;
        for (int j : nbrs[i]) {
            const Eigen::Vector3d e = (mesh.vertices.row(j) - mesh.vertices.row(i)).transpose();
            E(r, 0) = e.dot(b1);
            E(r, 1) = e.dot(b2);
            ids.push_back(j);
            ++r;
        }
        const Eigen::Matrix2d A = E.transpose() * E + reg * Eigen::Matrix2d::Identity();
        const Eigen::MatrixXd G = A.ldlt().solve(E.transpose());  // 2 x deg
        for (int c = 0; c < deg; ++c) {
            tx.emplace_back(int(i), ids[c], G(0, c));
            ty.emplace_back(int(i), ids[c], G(1, c));
        }
        tx.emplace_back(int(i), int(i), -G.row(0).sum());
        ty.emplace_back(int(i), int(i), -G.row(1).sum());
    }
    TangentGradient out;
    out.gx.resize(n, n);
    out.gy.resize(n, n);
    out.gx.setFromTriplets(tx.begin(), tx.end());
    out.gy.setFromTriplets(ty.begin(), ty.end());
    return out;
}

SurfaceOperators build_operators(const Mesh& mesh, const OperatorOptions& options)
{
    validate(mesh);
    const Eigen::Index n = mesh.num_vertices();
    SurfaceOperators ops;

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(std::size_t(mesh.num_faces()) * 6);
    ops.mass = Eigen::VectorXd::Zero(n);
    std::map<std::pair<int, int>, int> edge_faces;
    bool degenerate_any = false;

    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        const int idx[3] = {mesh.faces(f, 0), mesh.faces(f, 1), mesh.faces(f, 2)};
        const Eigen::Vector3d p[3] = {mesh.vertices.row(idx[0]).transpose(), mesh.vertices.row(idx[1]).transpose(),
                                      mesh.vertices.row(idx[2]).transpose()};
        const double area = 0.5 * (p[1] - p[0]).cross(p[2] - p[0]).norm();
        for (int k = 0; k < 3; ++k) ops.mass(idx[k]) += area / 3.0;

        for (int k = 0; k < 3; ++k) {
            const int i = idx[(k + 1) % 3], j = idx[(k + 2) % 3];
            bool degenerate = false;
            const double w = 0.5 * cot_at(p[k], p[(k + 1) % 3], p[(k + 2) % 3], degenerate);
            degenerate_any |= degenerate;
            trips.emplace_back(i, j, -w);
            trips.emplace_back(j, i, -w);
            trips.emplace_back(i, i, w);
            trips.emplace_back(j, j, w);
            ++edge_faces[std::minmax(i, j)];
        }
    }
    ops.laplacian.resize(n, n);
    ops.laplacian.setFromTriplets(trips.begin(), trips.end());
    ops.laplacian.makeCompressed();

    if (degenerate_any) ops.warnings.emplace_back("degenerate faces contribute no cotan weight");
    const auto nonmanifold =
        std::count_if(edge_faces.begin(), edge_faces.end(), [](const auto& e) { return e.second > 2; });
    if (nonmanifold > 0)
        ops.warnings.push_back(std::to_string(nonmanifold) + " non-manifold edges; operators assembled anyway");

    // Isolated vertices or zero-area stars would make the mass singular.
    const double floor_mass = std::max(1e-12 * ops.mass.maxCoeff(), 1e-300);
    const auto tiny = (ops.mass.array() < floor_mass).count();
    if (tiny > 0) {
        ops.warnings.push_back(std::to_string(tiny) + " vertices with zero mass clamped");
        ops.mass = ops.mass.cwiseMax(floor_mass);
    }

    ops.normals = compute_vertex_normals(mesh);
    if (options.spectral_k) ops.spectral = solve_spectral_basis(ops.laplacian, ops.mass, *options.spectral_k);
    if (options.tangent_gradient) ops.gradient = build_tangent_gradient(mesh, ops.normals);
    return ops;
}

Eigen::MatrixXd heat_diffuse(const SurfaceOperators& ops, const Eigen::MatrixXd& signal, double t, HeatMethod method)
{
    require(t >= 0.0, ErrorKind::Validation, "diffusion time must be nonnegative");
    require(signal.rows() == ops.size(), ErrorKind::Shape, "signal rows do not match vertex count");
    if (t == 0.0) return signal;

    if (method == HeatMethod::Spectral) {
        require(ops.spectral.has_value(), ErrorKind::Validation, "spectral diffusion requires a spectral basis");
        const auto& basis = *ops.spectral;
        const Eigen::MatrixXd coeffs = basis.eigenvectors.transpose() * ops.mass.asDiagonal() * signal;
        const Eigen::VectorXd gain = (1.0 + t * basis.eigenvalues.array()).inverse() - 1.0;
        return signal + basis.eigenvectors * (gain.asDiagonal() * coeffs);
    }

    SparseMatrix system = ops.laplacian * t;
    for (Eigen::Index i = 0; i < ops.size(); ++i) system.coeffRef(i, i) += ops.mass(i);
    Eigen::SimplicialLDLT<SparseMatrix> solver(system);
    if (solver.info() != Eigen::Success) fail(ErrorKind::Numerical, "heat system factorization failed");
    Eigen::MatrixXd out = solver.solve(ops.mass.asDiagonal() * signal);
    if (solver.info() != Eigen::Success || !out.allFinite()) fail(ErrorKind::Numerical, "heat solve failed");
    return out;
}

} // namespace freetalk::mesh
