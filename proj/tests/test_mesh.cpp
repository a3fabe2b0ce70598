#include "oracles.hpp"

#include <freetalk/error.hpp>
#include <freetalk/mesh/landmarks.hpp>
#include <freetalk/mesh/mesh.hpp>
#include <freetalk/mesh/operators.hpp>
#include <freetalk/mesh/primitives.hpp>

#include <doctest.h>

#include <Eigen/Eigenvalues>

#include <filesystem>
#include <numeric>
#include <sstream>

using namespace freetalk;
using namespace freetalk::mesh;

namespace {

Mesh unit_triangle()
{
    Mesh m;
    m.vertices.resize(3, 3);
    m.vertices << 0, 0, 0, 1, 0, 0, 0.5, std::sqrt(3.0) / 2.0, 0;
    m.faces.resize(1, 3);
    m.faces << 0, 1, 2;
    return m;
}

// (k+1) x (k+1) vertex grid on [0,1]^2, counterclockwise triangles.
Mesh grid(int k, double jitter = 0.0, std::uint64_t seed = 1)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-jitter, jitter);
    Mesh m;
    m.vertices.resize((k + 1) * (k + 1), 3);
    for (int y = 0; y <= k; ++y)
        for (int x = 0; x <= k; ++x) {
            const bool interior = x > 0 && y > 0 && x < k && y < k;
            m.vertices.row(y * (k + 1) + x) << (x + (interior ? u(rng) : 0.0)) / k, (y + (interior ? u(rng) : 0.0)) / k, 0.0;
        }
    m.faces.resize(2 * k * k, 3);
    int f = 0;
    for (int y = 0; y < k; ++y)
        for (int x = 0; x < k; ++x) {
            const int a = y * (k + 1) + x, b = a + 1, c = a + k + 1, d = c + 1;
            m.faces.row(f++) << a, b, d;
            m.faces.row(f++) << a, d, c;
        }
    return m;
}

Mesh bumpy_sphere(int frequency, std::uint64_t seed)
{
    Mesh m = geodesic_sphere(frequency);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.9, 1.1);
    for (Eigen::Index i = 0; i < m.num_vertices(); ++i) m.vertices.row(i) *= u(rng);
    return m;
}

Eigen::VectorXi random_permutation(Eigen::Index n, std::uint64_t seed)
{
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(p.begin(), p.end(), rng);
    return Eigen::Map<Eigen::VectorXi>(p.data(), n);
}

} // namespace

TEST_CASE("OBJ loading: smallest mesh, 1-based indices, polygons")
{
    std::istringstream in("# tri\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    const Mesh m = load_obj(in);
    CHECK(m.num_vertices() == 3);
    CHECK(m.num_faces() == 1);
    CHECK(m.faces.row(0) == Eigen::RowVector3i(0, 1, 2));

    std::istringstream quad("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\n");
    const Mesh q = load_obj(quad);
    CHECK(q.num_faces() == 2);
    CHECK(q.faces.row(1) == Eigen::RowVector3i(0, 2, 3));
}

TEST_CASE("mesh loading rejects out-of-range faces")
{
    std::istringstream in("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n");
    CHECK_THROWS_AS(load_obj(in), Error);
}

TEST_CASE("PLY and OBJ round trips")
{
    const Mesh m = geodesic_sphere(8);
    CHECK(m.num_vertices() == 642);
    const auto dir = std::filesystem::temp_directory_path() / "freetalk_test_mesh";
    std::filesystem::create_directories(dir);
    save_mesh(m, dir / "s.ply");
    const Mesh p = load_mesh(dir / "s.ply");
    CHECK(p.faces == m.faces);
    CHECK(p.vertices == m.vertices);  // float64 PLY is bit-exact

    save_mesh(m, dir / "s.ply", MeshFormat::PlyAscii);
    CHECK(load_mesh(dir / "s.ply").faces == m.faces);
    save_mesh(m, dir / "s.obj", MeshFormat::Obj);
    const Mesh o = load_mesh(dir / "s.obj");
    CHECK(o.faces == m.faces);
    CHECK((o.vertices - m.vertices).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("vertex normals")
{
    Mesh square = grid(1);
    const Vertices n = compute_vertex_normals(square);
    for (Eigen::Index i = 0; i < n.rows(); ++i) CHECK((n.row(i) - Eigen::RowVector3d(0, 0, 1)).norm() < 1e-12);

    const Mesh s = geodesic_sphere(4);
    const Vertices ns = compute_vertex_normals(s);
    for (Eigen::Index i = 0; i < ns.rows(); ++i)
        CHECK(ns.row(i).dot(s.vertices.row(i).normalized()) > std::cos(5.0 * M_PI / 180.0));

    Mesh lonely = unit_triangle();
    lonely.vertices.conservativeResize(4, 3);
    lonely.vertices.row(3) << 5, 5, 5;
    CHECK(compute_vertex_normals(lonely).row(3) == Eigen::RowVector3d(0, 0, 1));
}

TEST_CASE("cotan weights of an equilateral triangle")
{
    const SurfaceOperators ops = build_operators(unit_triangle());
    const Eigen::MatrixXd L(ops.laplacian);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const double expected = i == j ? 1.0 / std::sqrt(3.0) : -1.0 / (2.0 * std::sqrt(3.0));
            CHECK(L(i, j) == doctest::Approx(expected).epsilon(1e-12));
        }
    CHECK(ops.mass.sum() == doctest::Approx(std::sqrt(3.0) / 4.0));
}

TEST_CASE("Laplacian invariants on a sphere")
{
    const Mesh m = bumpy_sphere(6, 3);
    const SurfaceOperators ops = build_operators(m, {.spectral_k = 12});
    const Eigen::MatrixXd L(ops.laplacian);
    CHECK((L * Eigen::VectorXd::Ones(L.rows())).cwiseAbs().maxCoeff() < 1e-8);
    CHECK((L - L.transpose()).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(ops.spectral->eigenvalues.minCoeff() >= -1e-8);
    // M-orthonormal eigenvectors satisfying L phi = lambda M phi
    const auto& b = *ops.spectral;
    const Eigen::MatrixXd gram = b.eigenvectors.transpose() * ops.mass.asDiagonal() * b.eigenvectors;
    CHECK((gram - Eigen::MatrixXd::Identity(12, 12)).cwiseAbs().maxCoeff() < 1e-8);
    const Eigen::MatrixXd res = L * b.eigenvectors - ops.mass.asDiagonal() * b.eigenvectors * b.eigenvalues.asDiagonal();
    CHECK(res.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("iterative and dense spectral solvers agree")
{
    const Mesh m = bumpy_sphere(10, 4);  // 1002 vertices, iterative path
    const SurfaceOperators ops = build_operators(m, {.spectral_k = 16});
    const Eigen::MatrixXd L(ops.laplacian);
    const Eigen::VectorXd s = ops.mass.cwiseSqrt().cwiseInverse();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s.asDiagonal() * L * s.asDiagonal());
    for (int j = 0; j < 16; ++j)
        CHECK(ops.spectral->eigenvalues(j) == doctest::Approx(es.eigenvalues()(j)).epsilon(1e-6).scale(1.0));
}

TEST_CASE("linear precision on a flat grid")
{
    const Mesh m = grid(8, 0.2);
    const SurfaceOperators ops = build_operators(m);
    const Eigen::VectorXd u = m.vertices.col(0);
    const Eigen::VectorXd Lu = ops.laplacian * u;
    double worst = 0.0;
    for (int y = 1; y < 8; ++y)
        for (int x = 1; x < 8; ++x) worst = std::max(worst, std::abs(Lu(y * 9 + x)));
    CHECK(worst / u.cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("operators are permutation equivariant")
{
    const Mesh m = bumpy_sphere(3, 9);  // 92 vertices
    const Eigen::VectorXi perm = random_permutation(m.num_vertices(), 5);
    const SurfaceOperators a = build_operators(m);
    const SurfaceOperators b = build_operators(permute_vertices(m, perm));
    const Eigen::MatrixXd La(a.laplacian), Lb(b.laplacian);
    double worst = 0.0;
    for (Eigen::Index i = 0; i < La.rows(); ++i) {
        CHECK(std::abs(a.mass(i) - b.mass(perm(i))) < 1e-12);
        for (Eigen::Index j = 0; j < La.cols(); ++j) worst = std::max(worst, std::abs(La(i, j) - Lb(perm(i), perm(j))));
    }
    CHECK(worst < 1e-12);
}

TEST_CASE("heat diffusion")
{
    const Mesh m = bumpy_sphere(4, 2);
    const SurfaceOperators ops = build_operators(m, {.spectral_k = 20});
    std::mt19937_64 rng(8);
    const Eigen::MatrixXd u0 = oracle::random_matrix(m.num_vertices(), 3, rng);

    CHECK((heat_diffuse(ops, u0, 0.0) - u0).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd ones = Eigen::MatrixXd::Constant(m.num_vertices(), 2, 3.5);
    for (double t : {1e-3, 0.1, 10.0}) {
        CHECK((heat_diffuse(ops, ones, t) - ones).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((heat_diffuse(ops, ones, t, HeatMethod::Spectral) - ones).cwiseAbs().maxCoeff() < 1e-6);
        const Eigen::MatrixXd u = heat_diffuse(ops, u0, t);
        for (int c = 0; c < 3; ++c)
            CHECK(std::abs(ops.mass.dot(u.col(c)) - ops.mass.dot(u0.col(c))) < 1e-6 * u0.col(c).lpNorm<1>());
    }
    const Eigen::MatrixXd far = heat_diffuse(ops, u0, 1e6);
    for (int c = 0; c < 3; ++c) {
        const double mean = ops.mass.dot(u0.col(c)) / ops.mass.sum();
        CHECK((far.col(c).array() - mean).abs().maxCoeff() < 1e-3);
    }
    CHECK_THROWS_AS(heat_diffuse(ops, u0, -1.0), Error);
}

TEST_CASE("landmark extraction")
{
    const Mesh tri = [] {
        Mesh m;
        m.vertices = Eigen::Matrix3d::Identity();
        m.faces.resize(1, 3);
        m.faces << 0, 1, 2;
        return m;
    }();
    LandmarkSpec spec;
    spec.anchors = {VertexAnchor{1}, BarycentricAnchor{0, {1.0, 0.0, 0.0}},
                    BarycentricAnchor{0, {1.0 / 3, 1.0 / 3, 1.0 / 3}}};
    const LandmarkSet l = extract_landmarks(tri, spec);
    CHECK(l.row(0) == tri.vertices.row(1));
    CHECK(l.row(1) == tri.vertices.row(0));
    CHECK((l.row(2) - Eigen::RowVector3d::Constant(1.0 / 3)).norm() < 1e-15);

    // Linearity in V, and agreement with the sparse interpolation matrix.
    const Mesh s = geodesic_sphere(4);
    LandmarkSpec ss;
    ss.anchors = {VertexAnchor{5}, BarycentricAnchor{3, {0.2, 0.3, 0.5}}, BarycentricAnchor{17, {0.6, 0.4, 0.0}}};
    std::mt19937_64 rng(4);
    const Vertices delta = oracle::random_matrix(s.num_vertices(), 3, rng);
    const Eigen::SparseMatrix<double> W = anchor_weights(ss, s.faces, s.num_vertices());
    const Vertices moved = s.vertices + delta;
    const LandmarkSet a = extract_landmarks(moved, s.faces, ss);
    const LandmarkSet b = extract_landmarks(s, ss) + LandmarkSet(W * delta);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(extract_landmarks(s, ss).row(0) == s.vertices.row(5));

    LandmarkSpec bad;
    bad.anchors = {BarycentricAnchor{0, {0.5, 0.2, 0.2}}};
    CHECK_THROWS_AS(validate(bad, s), Error);
    bad.anchors = {VertexAnchor{int(s.num_vertices())}};
    CHECK_THROWS_AS(validate(bad, s), Error);
}

TEST_CASE("landmark spec JSON round trip")
{
    LandmarkSpec spec;
    spec.anchors = {VertexAnchor{2}, BarycentricAnchor{1, {0.25, 0.25, 0.5}}};
    spec.regions = {{"mouth", {1, 2}}, {"upper_face", {0}}};
    const LandmarkSpec back = landmark_spec_from_json(landmark_spec_to_json(spec));
    CHECK(back.size() == 2);
    CHECK(std::get<VertexAnchor>(back.anchors[0]).vertex == 2);
    CHECK(std::get<BarycentricAnchor>(back.anchors[1]).bary[2] == 0.5);
    CHECK(back.region("mouth") == std::vector<int>{1, 2});
}

TEST_CASE("default landmark graph")
{
    const LandmarkGraph g = default_landmark_graph();
    validate(g);
    const auto deg = g.degrees();
    CHECK(g.num_nodes == 68);
    CHECK(deg[0] == 1);
    CHECK(deg[16] == 1);
    CHECK(deg[36] == 2);
    CHECK(deg[60] == 2);
    // 68 nodes in 9 components: 59 chain edges plus 4 loop closures.
    CHECK(g.edges.size() == 63);
}

TEST_CASE("midpoint subdivision keeps original vertices")
{
    const Mesh m = geodesic_sphere(3);
    const Mesh s = subdivide_midpoint(m);
    CHECK(s.num_faces() == 4 * m.num_faces());
    CHECK(s.vertices.topRows(m.num_vertices()) == m.vertices);
    // Euler characteristic of a sphere
    CHECK(s.num_vertices() - 3 * s.num_faces() / 2 + s.num_faces() == 2);
}

TEST_CASE("geodesic sphere vertex counts")
{
    for (int f : {1, 2, 4, 12}) CHECK(geodesic_sphere(f).num_vertices() == 10 * f * f + 2);
    const Mesh s = geodesic_sphere(5);
    CHECK((s.vertices.rowwise().norm().array() - 1.0).abs().maxCoeff() < 1e-12);
    const auto hit = intersect_ray(s, Eigen::Vector3d(0, 0, 5), Eigen::Vector3d(0, 0, -1));
    REQUIRE(hit.has_value());
    CHECK(hit->t == doctest::Approx(4.0).epsilon(0.01));
}
