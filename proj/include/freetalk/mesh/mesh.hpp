#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <string>

namespace freetalk::mesh {

using Vertices = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3>;

/// Triangle mesh. Face indices are 0-based.
struct Mesh {
    Vertices vertices;
    Faces faces;

    Eigen::Index num_vertices() const { return vertices.rows(); }
    Eigen::Index num_faces() const { return faces.rows(); }
};

/// Throws Validation if indices are out of range, a face repeats a vertex,
/// fewer than 3 vertices are present, or coordinates are not finite.
void validate(const Mesh& mesh);

enum class MeshFormat { Obj, PlyAscii, PlyBinary };

/// Reads OBJ or PLY (ASCII / binary little-endian), chosen by extension.
/// Polygons are fan-triangulated. Vertex order is preserved.
Mesh load_mesh(const std::filesystem::path& path);
Mesh load_obj(std::istream& in);
Mesh load_ply(std::istream& in);

/// PLY output stores coordinates as float64 so reloading is bit-exact.
void save_mesh(const Mesh& mesh, const std::filesystem::path& path,
               MeshFormat format = MeshFormat::PlyBinary);
void save_obj(const Mesh& mesh, std::ostream& out);
void save_ply(const Mesh& mesh, std::ostream& out, bool binary);

MeshFormat format_from_extension(const std::filesystem::path& path);

/// Area-weighted vertex normals. Vertices with a zero-area (or empty) star
/// get (0, 0, 1).
Vertices compute_vertex_normals(const Mesh& mesh);

/// Per-face area.
Eigen::VectorXd face_areas(const Mesh& mesh);

double mean_edge_length(const Mesh& mesh);

/// 1-to-4 midpoint subdivision. Original vertices keep their indices and
/// positions; edge midpoints are appended after them.
Mesh subdivide_midpoint(const Mesh& mesh);

/// Applies a vertex relabeling: new index of old vertex i is perm[i].
Mesh permute_vertices(const Mesh& mesh, const Eigen::VectorXi& perm);

} // namespace freetalk::mesh
