#include <freetalk/error.hpp>
#include <freetalk/mesh/landmarks.hpp>

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace freetalk::mesh {

using nlohmann::json;

const std::vector<int>& LandmarkSpec::region(const std::string& name) const
{
    auto it = regions.find(name);
    if (it == regions.end()) fail(ErrorKind::Validation, "landmark spec has no region '" + name + "'");
    return it->second;
}

std::vector<int> LandmarkGraph::degrees() const
{
    std::vector<int> deg(num_nodes, 0);
    for (auto [a, b] : edges) {
        ++deg[a];
        ++deg[b];
    }
    return deg;
}

void validate(const LandmarkSpec& spec, const Mesh& mesh)
{
    const auto n = mesh.num_vertices();
    for (std::size_t a = 0; a < spec.anchors.size(); ++a) {
        const auto where = "landmark " + std::to_string(a);
        if (const auto* v = std::get_if<VertexAnchor>(&spec.anchors[a])) {
            require(v->vertex >= 0 && v->vertex < n, ErrorKind::Validation, where + ": vertex index out of range");
        } else {
            const auto& b = std::get<BarycentricAnchor>(spec.anchors[a]);
            require(b.face >= 0 && b.face < mesh.num_faces(), ErrorKind::Validation, where + ": face index out of range");
            double sum = 0.0;
            for (double w : b.bary) {
                require(w >= 0.0, ErrorKind::Validation, where + ": negative barycentric weight");
                sum += w;
            }
            require(std::abs(sum - 1.0) <= 1e-9, ErrorKind::Validation, where + ": barycentric weights do not sum to 1");
        }
    }
    for (const auto& [name, ids] : spec.regions)
        for (int v : ids)
            require(v >= 0 && v < n, ErrorKind::Validation, "region '" + name + "' has out-of-range vertex");
}

LandmarkSet extract_landmarks(const Vertices& vertices, const Faces& faces, const LandmarkSpec& spec)
{
    LandmarkSet out(spec.size(), 3);
    for (int a = 0; a < spec.size(); ++a) {
        if (const auto* v = std::get_if<VertexAnchor>(&spec.anchors[a])) {
            require(v->vertex >= 0 && v->vertex < vertices.rows(), ErrorKind::Validation,
                    "landmark vertex index out of range");
            out.row(a) = vertices.row(v->vertex);
        } else {
            const auto& b = std::get<BarycentricAnchor>(spec.anchors[a]);
            require(b.face >= 0 && b.face < faces.rows(), ErrorKind::Validation, "landmark face index out of range");
            out.row(a) = b.bary[0] * vertices.row(faces(b.face, 0)) + b.bary[1] * vertices.row(faces(b.face, 1)) +
                         b.bary[2] * vertices.row(faces(b.face, 2));
        }
    }
    return out;
}

LandmarkSet extract_landmarks(const Mesh& mesh, const LandmarkSpec& spec)
{
    return extract_landmarks(mesh.vertices, mesh.faces, spec);
}

Eigen::SparseMatrix<double> anchor_weights(const LandmarkSpec& spec, const Faces& faces, Eigen::Index num_vertices)
{
    std::vector<Eigen::Triplet<double>> trips;
    for (int a = 0; a < spec.size(); ++a) {
        if (const auto* v = std::get_if<VertexAnchor>(&spec.anchors[a])) {
            trips.emplace_back(a, v->vertex, 1.0);
        } else {
            const auto& b = std::get<BarycentricAnchor>(spec.anchors[a]);
            for (int k = 0; k < 3; ++k) trips.emplace_back(a, faces(b.face, k), b.bary[k]);
        }
    }
    Eigen::SparseMatrix<double> w(spec.size(), num_vertices);
    w.setFromTriplets(trips.begin(), trips.end());
    return w;
}

LandmarkGraph default_landmark_graph()
{
    LandmarkGraph g;
    g.num_nodes = kDefaultLandmarkCount;
    auto chain = [&](int first, int last) {
        for (int i = first; i < last; ++i) g.edges.emplace_back(i, i + 1);
    };
    auto loop = [&](int first, int last) {
        chain(first, last);
        g.edges.emplace_back(first, last);
    };
    chain(0, 16);   // jaw
    chain(17, 21);  // right brow
    chain(22, 26);  // left brow
    chain(27, 30);  // nose bridge
    chain(31, 35);  // nostrils
    loop(36, 41);   // right eye
    loop(42, 47);   // left eye
    loop(48, 59);   // outer lips
    loop(60, 67);   // inner lips
    return g;
}

void validate(const LandmarkGraph& graph)
{
    std::set<std::pair<int, int>> seen;
    for (auto [a, b] : graph.edges) {
        require(a != b, ErrorKind::Validation, "landmark graph has a self loop");
        require(a >= 0 && b >= 0 && a < graph.num_nodes && b < graph.num_nodes, ErrorKind::Validation,
                "landmark graph edge out of range");
        seen.insert(std::minmax(a, b));
    }
    const auto deg = graph.degrees();
    for (int i = 0; i < graph.num_nodes; ++i)
        require(deg[i] > 0, ErrorKind::Validation, "landmark " + std::to_string(i) + " has no edge");
}

LandmarkSpec landmark_spec_from_json(const std::string& text)
{
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("landmark spec: ") + e.what());
    }
    LandmarkSpec spec;
    try {
        for (const auto& a : j.at("anchors")) {
            if (a.contains("vertex")) {
                spec.anchors.emplace_back(VertexAnchor{a.at("vertex").get<int>()});
            } else {
                BarycentricAnchor b;
                b.face = a.at("face").get<int>();
                const auto w = a.at("bary").get<std::vector<double>>();
                if (w.size() != 3) fail(ErrorKind::Parse, "barycentric anchor needs 3 weights");
                b.bary = {w[0], w[1], w[2]};
                spec.anchors.emplace_back(b);
            }
        }
        if (j.contains("regions"))
            for (const auto& [name, ids] : j.at("regions").items()) spec.regions[name] = ids.get<std::vector<int>>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, std::string("landmark spec: ") + e.what());
    }
    return spec;
}

std::string landmark_spec_to_json(const LandmarkSpec& spec)
{
    json anchors = json::array();
    for (const auto& a : spec.anchors) {
        if (const auto* v = std::get_if<VertexAnchor>(&a))
            anchors.push_back({{"vertex", v->vertex}});
        else {
            const auto& b = std::get<BarycentricAnchor>(a);
            anchors.push_back({{"face", b.face}, {"bary", {b.bary[0], b.bary[1], b.bary[2]}}});
        }
    }
    json regions = json::object();
    for (const auto& [name, ids] : spec.regions) regions[name] = ids;
    return json{{"anchors", anchors}, {"regions", regions}}.dump(1);
}

LandmarkSpec load_landmark_spec(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open landmark spec " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return landmark_spec_from_json(ss.str());
}

void save_landmark_spec(const LandmarkSpec& spec, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write landmark spec " + path.string());
    out << landmark_spec_to_json(spec) << '\n';
}

} // namespace freetalk::mesh
