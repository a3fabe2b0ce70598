#pragma once

#include <freetalk/mesh/mesh.hpp>

#include <optional>

namespace freetalk::mesh {

/// Unit geodesic sphere: every icosahedron face split into frequency^2
/// triangles, vertices projected to the sphere. 10 f^2 + 2 vertices;
/// frequency 2^k reproduces the level-k icosphere vertex count.
Mesh geodesic_sphere(int frequency);

/// Closest ray/mesh intersection (Moller-Trumbore); returns face and
/// barycentric weights of the hit.
struct RayHit {
    int face = -1;
    double t = 0.0;
    Eigen::Vector3d bary = Eigen::Vector3d::Zero();
};
std::optional<RayHit> intersect_ray(const Mesh& mesh, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir);

} // namespace freetalk::mesh
