#pragma once

#include <freetalk/mesh/mesh.hpp>

#include <Eigen/SparseCore>

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace freetalk::mesh {

struct VertexAnchor {
    int vertex = 0;
};

struct BarycentricAnchor {
    int face = 0;
    std::array<double, 3> bary{1.0, 0.0, 0.0};
};

using Anchor = std::variant<VertexAnchor, BarycentricAnchor>;

/// Where each landmark lives on a mesh family, plus named vertex regions
/// ("mouth", "lips", "upper_face", ...) used by the metrics.
struct LandmarkSpec {
    std::vector<Anchor> anchors;
    std::map<std::string, std::vector<int>> regions;

    int size() const { return int(anchors.size()); }
    const std::vector<int>& region(const std::string& name) const;
};

/// Landmark positions, N x 3.
using LandmarkSet = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct LandmarkGraph {
    int num_nodes = 0;
    std::vector<std::pair<int, int>> edges;  // undirected, i < j

    std::vector<int> degrees() const;
};

constexpr int kDefaultLandmarkCount = 68;

/// Throws Validation if an anchor or region index is out of range for the
/// mesh or a barycentric triple is negative / does not sum to 1.
void validate(const LandmarkSpec& spec, const Mesh& mesh);

LandmarkSet extract_landmarks(const Mesh& mesh, const LandmarkSpec& spec);
LandmarkSet extract_landmarks(const Vertices& vertices, const Faces& faces, const LandmarkSpec& spec);

/// Sparse N x n interpolation matrix W with extract_landmarks(V) = W * V.
Eigen::SparseMatrix<double> anchor_weights(const LandmarkSpec& spec, const Faces& faces, Eigen::Index num_vertices);

/// 68-point facial connectivity: chains for the jaw, brows, nose bridge and
/// nostrils; closed loops for both eyes and both lip contours.
LandmarkGraph default_landmark_graph();

/// Undirected graph check: no self loops, indices in range, no isolated node.
void validate(const LandmarkGraph& graph);

LandmarkSpec load_landmark_spec(const std::filesystem::path& path);
void save_landmark_spec(const LandmarkSpec& spec, const std::filesystem::path& path);
LandmarkSpec landmark_spec_from_json(const std::string& text);
std::string landmark_spec_to_json(const LandmarkSpec& spec);

} // namespace freetalk::mesh
