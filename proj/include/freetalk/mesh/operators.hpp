#pragma once

#include <freetalk/mesh/mesh.hpp>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <optional>
#include <string>
#include <vector>

namespace freetalk::mesh {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// k smallest generalized eigenpairs of L phi = lambda M phi, M-orthonormal.
struct SpectralBasis {
    Eigen::VectorXd eigenvalues;   // ascending, k
    Eigen::MatrixXd eigenvectors;  // n x k
};

/// Least-squares gradient in per-vertex tangent frames: for a scalar field u,
/// (grad_x u, grad_y u) = (gx * u, gy * u).
struct TangentGradient {
    SparseMatrix gx;
    SparseMatrix gy;
};

/// Immutable after construction; safe to share across threads.
struct SurfaceOperators {
    SparseMatrix laplacian;  // positive semidefinite cotan Laplacian, rows sum to 0
    Eigen::VectorXd mass;    // lumped barycentric mass (diagonal)
    Vertices normals;
    std::optional<SpectralBasis> spectral;
    std::optional<TangentGradient> gradient;
    std::vector<std::string> warnings;

    Eigen::Index size() const { return mass.size(); }
};

struct OperatorOptions {
    std::optional<int> spectral_k;  // clamped to the vertex count
    bool tangent_gradient = false;
};

/// Cotan Laplacian L_ij = -1/2 (cot a_ij + cot b_ij), L_ii = -sum_j L_ij,
/// barycentric lumped mass, vertex normals and the optional spectral basis.
/// Non-manifold edges and degenerate faces are reported in `warnings`.
/// Throws Numerical when the eigen-solve does not converge.
SurfaceOperators build_operators(const Mesh& mesh, const OperatorOptions& options = {});

/// Dense generalized eigen-solve for small meshes, shift-invert subspace
/// iteration otherwise.
SpectralBasis solve_spectral_basis(const SparseMatrix& laplacian, const Eigen::VectorXd& mass, int k);

TangentGradient build_tangent_gradient(const Mesh& mesh, const Vertices& normals);

enum class HeatMethod {
    Implicit,  // one backward-Euler step: (M + tL) u = M u0
    Spectral,  // filter 1/(1 + t lambda) on the basis span, identity on its complement
};

/// Diffuses every column of `signal` for time t >= 0.
Eigen::MatrixXd heat_diffuse(const SurfaceOperators& ops, const Eigen::MatrixXd& signal, double t,
                             HeatMethod method = HeatMethod::Implicit);

} // namespace freetalk::mesh
