#include <freetalk/error.hpp>
#include <freetalk/mesh/primitives.hpp>

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <tuple>
#include <vector>

namespace freetalk::mesh {

Mesh geodesic_sphere(int frequency)
{
    require(frequency >= 1, ErrorKind::Validation, "geodesic frequency must be >= 1");
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const std::vector<Eigen::Vector3d> ico = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
        {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}};
    const int tris[20][3] = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                             {3, 8, 9},   {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    const int f = frequency;

    // Lattice points are keyed by their integer barycentric coordinates over
    // the icosahedron corners so shared edges/corners are deduplicated exactly.
    std::map<std::tuple<int, int, int, int, int, int>, int> index;
    std::vector<Eigen::Vector3d> verts;
    auto vertex_id = [&](int a, int b, int c, int i, int j, int k) {
        // weights i, j, k on corners a, b, c (i + j + k = f); canonicalize order
        std::array<std::pair<int, int>, 3> w = {{{a, i}, {b, j}, {c, k}}};
        for (auto& e : w)
            if (e.second == 0) e.first = -1;
        std::sort(w.begin(), w.end());
        const auto key = std::make_tuple(w[0].first, w[0].second, w[1].first, w[1].second, w[2].first, w[2].second);
        auto it = index.find(key);
        if (it != index.end()) return it->second;
        const Eigen::Vector3d p = (double(i) * ico[a] + double(j) * ico[b] + double(k) * ico[c]) / double(f);
        const int id = int(verts.size());
        verts.push_back(p.normalized());
        index.emplace(key, id);
        return id;
    };

    std::vector<Eigen::RowVector3i> faces;
    for (const auto& t : tris) {
        const int a = t[0], b = t[1], c = t[2];
        // row r from corner a, column s toward c
        auto id = [&](int r, int s) { return vertex_id(a, b, c, f - r, r - s, s); };
        for (int r = 0; r < f; ++r) {
            for (int s = 0; s <= r; ++s) {
                faces.emplace_back(id(r, s), id(r + 1, s), id(r + 1, s + 1));
                if (s < r) faces.emplace_back(id(r, s), id(r + 1, s + 1), id(r, s + 1));
            }
        }
    }
    Mesh m;
    m.vertices.resize(Eigen::Index(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) m.vertices.row(Eigen::Index(i)) = verts[i].transpose();
    m.faces.resize(Eigen::Index(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) m.faces.row(Eigen::Index(i)) = faces[i];
    return m;
}

std::optional<RayHit> intersect_ray(const Mesh& mesh, const Eigen::Vector3d& origin, const Eigen::Vector3d& dir)
{
    std::optional<RayHit> best;
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        const Eigen::Vector3d p0 = mesh.vertices.row(mesh.faces(f, 0)).transpose();
        const Eigen::Vector3d p1 = mesh.vertices.row(mesh.faces(f, 1)).transpose();
        const Eigen::Vector3d p2 = mesh.vertices.row(mesh.faces(f, 2)).transpose();
        const Eigen::Vector3d e1 = p1 - p0, e2 = p2 - p0;
        const Eigen::Vector3d h = dir.cross(e2);
        const double det = e1.dot(h);
        if (std::abs(det) < 1e-14) continue;
        const double inv = 1.0 / det;
        const Eigen::Vector3d s = origin - p0;
        const double u = inv * s.dot(h);
        if (u < -1e-12 || u > 1.0 + 1e-12) continue;
        const Eigen::Vector3d q = s.cross(e1);
        const double v = inv * dir.dot(q);
        if (v < -1e-12 || u + v > 1.0 + 1e-12) continue;
        const double t = inv * e2.dot(q);
        if (t <= 0.0) continue;
        if (!best || t < best->t) {
            RayHit hit;
            hit.face = int(f);
            hit.t = t;
            Eigen::Vector3d w(1.0 - u - v, u, v);
            w = w.cwiseMax(0.0);
            hit.bary = w / w.sum();
            best = hit;
        }
    }
    return best;
}

} // namespace freetalk::mesh
