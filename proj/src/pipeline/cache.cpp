#include <freetalk/error.hpp>
#include <freetalk/nn/archive.hpp>
#include <freetalk/pipeline/cache.hpp>
#include <freetalk/pipeline/log.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <random>
#include <vector>

namespace freetalk::pipeline {

namespace fs = std::filesystem;

std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t seed)
{
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = seed;
    for (std::size_t i = 0; i < size; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t hash_mesh(const mesh::Mesh& mesh)
{
    const mesh::Vertices& v = mesh.vertices;
    const mesh::Faces& f = mesh.faces;
    std::uint64_t h = hash_bytes(v.data(), sizeof(double) * std::size_t(v.size()));
    const std::int64_t n = v.rows();
    h = hash_bytes(&n, sizeof n, h);
    return hash_bytes(f.data(), sizeof(int) * std::size_t(f.size()), h);
}

std::uint64_t hash_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return hash_bytes(bytes.data(), bytes.size());
}

std::uint64_t hash_params(const nn::ParamStore& store)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, p] : store.all()) {
        h = hash_bytes(name.data(), name.size(), h);
        h = hash_bytes(p.value.data(), sizeof(double) * std::size_t(p.value.size()), h);
    }
    return h;
}

std::string hex(std::uint64_t h)
{
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::optional<fs::path> cache_dir()
{
    const char* env = std::getenv("FREETALK_CACHE");
    if (!env || !*env) return std::nullopt;
    fs::path dir(env);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) fail(ErrorKind::Io, "cannot create cache directory " + dir.string() + ": " + ec.message());
    return dir;
}

namespace {

// Writes through a unique temporary so concurrent writers never expose a
// partial file.
void atomic_save(const nn::Archive& archive, const fs::path& path)
{
    std::random_device rd;
    const fs::path tmp = path.string() + ".tmp" + hex((std::uint64_t(rd()) << 32) ^ rd());
    nn::save_archive(archive, tmp);
    fs::rename(tmp, path);
}

} // namespace

Eigen::MatrixXd cached_matrix(const std::string& key, const std::function<Eigen::MatrixXd()>& compute)
{
    const auto dir = cache_dir();
    if (!dir) return compute();
    const fs::path path = *dir / (key + ".ftck");
    if (fs::exists(path)) {
        try {
            return nn::load_archive(path).tensors.at("value");
        } catch (const std::exception& e) {
            log_warn("ignoring unreadable cache entry " + path.string() + ": " + e.what());
        }
    }
    Eigen::MatrixXd value = compute();
    nn::Archive a;
    a.header = {{"kind", "matrix"}, {"key", key}};
    a.tensors["value"] = value;
    atomic_save(a, path);
    return value;
}

namespace {

Eigen::MatrixXd triplets(const mesh::SparseMatrix& m)
{
    Eigen::MatrixXd t(m.nonZeros(), 3);
    Eigen::Index k = 0;
    for (int c = 0; c < m.outerSize(); ++c)
        for (mesh::SparseMatrix::InnerIterator it(m, c); it; ++it, ++k) t.row(k) << double(it.row()), double(it.col()), it.value();
    return t;
}

mesh::SparseMatrix from_triplets(const Eigen::MatrixXd& t, Eigen::Index rows, Eigen::Index cols)
{
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(std::size_t(t.rows()));
    for (Eigen::Index k = 0; k < t.rows(); ++k) trips.emplace_back(int(t(k, 0)), int(t(k, 1)), t(k, 2));
    mesh::SparseMatrix m(rows, cols);
    m.setFromTriplets(trips.begin(), trips.end());
    return m;
}

nn::Archive operators_archive(const mesh::SurfaceOperators& ops)
{
    nn::Archive a;
    a.header = {{"kind", "operators"}, {"n", ops.size()}, {"warnings", ops.warnings},
                {"spectral", ops.spectral.has_value()}, {"gradient", ops.gradient.has_value()}};
    a.tensors["laplacian"] = triplets(ops.laplacian);
    a.tensors["mass"] = ops.mass;
    a.tensors["normals"] = ops.normals;
    if (ops.spectral) {
        a.tensors["eigenvalues"] = ops.spectral->eigenvalues;
        a.tensors["eigenvectors"] = ops.spectral->eigenvectors;
    }
    if (ops.gradient) {
        a.tensors["gx"] = triplets(ops.gradient->gx);
        a.tensors["gy"] = triplets(ops.gradient->gy);
    }
    return a;
}

mesh::SurfaceOperators operators_from_archive(const nn::Archive& a)
{
    require(a.header.value("kind", "") == "operators", ErrorKind::Format, "archive does not hold operators");
    const Eigen::Index n = a.header.at("n").get<Eigen::Index>();
    mesh::SurfaceOperators ops;
    ops.laplacian = from_triplets(a.tensors.at("laplacian"), n, n);
    ops.mass = a.tensors.at("mass");
    ops.normals = a.tensors.at("normals");
    ops.warnings = a.header.at("warnings").get<std::vector<std::string>>();
    if (a.header.at("spectral").get<bool>())
        ops.spectral = mesh::SpectralBasis{a.tensors.at("eigenvalues"), a.tensors.at("eigenvectors")};
    if (a.header.at("gradient").get<bool>())
        ops.gradient = mesh::TangentGradient{from_triplets(a.tensors.at("gx"), n, n), from_triplets(a.tensors.at("gy"), n, n)};
    return ops;
}

} // namespace

void save_operators(const mesh::SurfaceOperators& ops, const fs::path& path) { nn::save_archive(operators_archive(ops), path); }

mesh::SurfaceOperators load_operators(const fs::path& path) { return operators_from_archive(nn::load_archive(path)); }

mesh::SurfaceOperators cached_operators(const mesh::Mesh& mesh, const mesh::OperatorOptions& options)
{
    const auto dir = cache_dir();
    if (!dir) return mesh::build_operators(mesh, options);
    std::uint64_t h = hash_mesh(mesh);
    const int k = options.spectral_k.value_or(-1);
    h = hash_bytes(&k, sizeof k, h);
    const int g = options.tangent_gradient ? 1 : 0;
    h = hash_bytes(&g, sizeof g, h);
    const fs::path path = *dir / ("ops-" + hex(h) + ".ftck");
    if (fs::exists(path)) {
        try {
            return load_operators(path);
        } catch (const std::exception& e) {
            log_warn("ignoring unreadable cache entry " + path.string() + ": " + e.what());
        }
    }
    mesh::SurfaceOperators ops = mesh::build_operators(mesh, options);
    atomic_save(operators_archive(ops), path);
    return ops;
}

nlohmann::json to_json(const audio::FeatureConfig& c)
{
    return {{"window_ms", c.window_ms},
            {"hop_ms", c.hop_ms},
            {"n_mels", c.n_mels},
            {"extractor", c.extractor == audio::ExtractorKind::LogMel ? "logmel" : "external"},
            {"external_command", c.external_command},
            {"external_channels", c.external_channels}};
}

audio::FeatureConfig feature_config_from_json(const nlohmann::json& j)
{
    audio::FeatureConfig c;
    c.window_ms = j.value("window_ms", c.window_ms);
    c.hop_ms = j.value("hop_ms", c.hop_ms);
    c.n_mels = j.value("n_mels", c.n_mels);
    const std::string kind = j.value("extractor", std::string("logmel"));
    if (kind == "logmel") c.extractor = audio::ExtractorKind::LogMel;
    else if (kind == "external") c.extractor = audio::ExtractorKind::External;
    else fail(ErrorKind::Config, "unknown extractor \"" + kind + "\"");
    c.external_command = j.value("external_command", c.external_command);
    c.external_channels = j.value("external_channels", c.external_channels);
    return c;
}

audio::AudioFeatures cached_audio_features(const fs::path& wav, const audio::FeatureConfig& config)
{
    const auto compute = [&] { return audio::extract_features(audio::load_wav(wav), config); };
    const auto dir = cache_dir();
    if (!dir) return compute();
    const std::string cfg = to_json(config).dump();
    const std::uint64_t h = hash_bytes(cfg.data(), cfg.size(), hash_file(wav));
    double rate = 0.0;
    const Eigen::MatrixXd packed = cached_matrix("audio-" + hex(h), [&] {
        const auto f = compute();
        Eigen::MatrixXd m(f.matrix.rows() + 1, f.matrix.cols());
        m.topRows(f.matrix.rows()) = f.matrix;
        m.row(f.matrix.rows()).setConstant(f.native_rate);
        return m;
    });
    rate = packed(packed.rows() - 1, 0);
    return {packed.topRows(packed.rows() - 1), rate};
}

} // namespace freetalk::pipeline
