#include <freetalk/error.hpp>
#include <freetalk/mesh/mesh.hpp>

#include <Eigen/Geometry>

#include <map>
#include <utility>

namespace freetalk::mesh {

void validate(const Mesh& mesh)
{
    const auto n = mesh.num_vertices();
    require(n >= 3, ErrorKind::Validation, "mesh needs at least 3 vertices, got " + std::to_string(n));
    require(mesh.vertices.allFinite(), ErrorKind::Validation, "mesh has non-finite vertex coordinates");
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        for (int c = 0; c < 3; ++c) {
            const int v = mesh.faces(f, c);
            require(v >= 0 && v < n, ErrorKind::Validation,
                    "face " + std::to_string(f) + " references vertex " + std::to_string(v) +
                        " outside [0, " + std::to_string(n) + ")");
        }
        const auto& t = mesh.faces.row(f);
        require(t(0) != t(1) && t(1) != t(2) && t(0) != t(2), ErrorKind::Validation,
                "face " + std::to_string(f) + " repeats a vertex");
    }
}

Eigen::VectorXd face_areas(const Mesh& mesh)
{
    Eigen::VectorXd areas(mesh.num_faces());
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(f, 0));
        const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(f, 1));
        const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(f, 2));
        areas(f) = 0.5 * (b - a).cross(c - a).norm();
    }
    return areas;
}

Vertices compute_vertex_normals(const Mesh& mesh)
{
    Vertices normals = Vertices::Zero(mesh.num_vertices(), 3);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        const Eigen::Vector3d a = mesh.vertices.row(mesh.faces(f, 0));
        const Eigen::Vector3d b = mesh.vertices.row(mesh.faces(f, 1));
        const Eigen::Vector3d c = mesh.vertices.row(mesh.faces(f, 2));
        // |cross| = 2 * area, so the unnormalized cross product is the area weight.
        const Eigen::RowVector3d weighted = (b - a).cross(c - a).transpose();
        for (int k = 0; k < 3; ++k) normals.row(mesh.faces(f, k)) += weighted;
    }
    for (Eigen::Index i = 0; i < normals.rows(); ++i) {
        const double len = normals.row(i).norm();
        if (len > 1e-300 && std::isfinite(len))
            normals.row(i) /= len;
        else
            normals.row(i) = Eigen::RowVector3d(0, 0, 1);
    }
    return normals;
}

double mean_edge_length(const Mesh& mesh)
{
    double total = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        for (int k = 0; k < 3; ++k) {
            total += (mesh.vertices.row(mesh.faces(f, k)) - mesh.vertices.row(mesh.faces(f, (k + 1) % 3))).norm();
            ++count;
        }
    }
    return count ? total / double(count) : 0.0;
}

Mesh subdivide_midpoint(const Mesh& mesh)
{
    const auto n = mesh.num_vertices();
    std::map<std::pair<int, int>, int> midpoint;
    std::vector<Eigen::RowVector3d> extra;
    auto mid = [&](int a, int b) {
        const auto key = std::minmax(a, b);
        auto it = midpoint.find(key);
        if (it != midpoint.end()) return it->second;
        const int id = int(n + extra.size());
        extra.push_back(0.5 * (mesh.vertices.row(a) + mesh.vertices.row(b)));
        midpoint.emplace(key, id);
        return id;
    };

    Faces faces(mesh.num_faces() * 4, 3);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
        const int a = mesh.faces(f, 0), b = mesh.faces(f, 1), c = mesh.faces(f, 2);
        const int ab = mid(a, b), bc = mid(b, c), ca = mid(c, a);
        faces.row(4 * f + 0) << a, ab, ca;
        faces.row(4 * f + 1) << ab, b, bc;
        faces.row(4 * f + 2) << ca, bc, c;
        faces.row(4 * f + 3) << ab, bc, ca;
    }
    Mesh out;
    out.vertices.resize(n + Eigen::Index(extra.size()), 3);
    out.vertices.topRows(n) = mesh.vertices;
    for (size_t i = 0; i < extra.size(); ++i) out.vertices.row(n + Eigen::Index(i)) = extra[i];
    out.faces = std::move(faces);
    return out;
}

Mesh permute_vertices(const Mesh& mesh, const Eigen::VectorXi& perm)
{
    require(perm.size() == mesh.num_vertices(), ErrorKind::Shape, "permutation size mismatch");
    Mesh out;
    out.vertices.resize(mesh.num_vertices(), 3);
    for (Eigen::Index i = 0; i < perm.size(); ++i) out.vertices.row(perm(i)) = mesh.vertices.row(i);
    out.faces.resize(mesh.num_faces(), 3);
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
        for (int k = 0; k < 3; ++k) out.faces(f, k) = perm(mesh.faces(f, k));
    return out;
}

} // namespace freetalk::mesh
