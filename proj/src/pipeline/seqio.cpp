#include <freetalk/error.hpp>
#include <freetalk/pipeline/seqio.hpp>
#include <freetalk/pipeline/workers.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace freetalk::pipeline {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace fs = std::filesystem;

namespace {

template <typename T>
void put(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const fs::path& path)
{
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail(ErrorKind::Format, "truncated sequence file " + path.string());
    return v;
}

std::string frame_name(Eigen::Index t, const char* ext)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "frame_%04lld.%s", static_cast<long long>(t), ext);
    return buf;
}

} // namespace

mesh::Vertices PackedSequence::vertices(Eigen::Index t) const
{
    require(t >= 0 && t < num_frames(), ErrorKind::Validation, "frame index out of range");
    return Eigen::RowVectorXd(frames.row(t).cast<double>()).reshaped<Eigen::RowMajor>(num_points(), 3);
}

PackedSequence make_packed(const Eigen::MatrixXd& positions, const mesh::Faces& faces)
{
    require(positions.cols() % 3 == 0, ErrorKind::Shape, "positions must have 3n columns");
    PackedSequence s;
    s.faces = faces;
    s.frames = positions.cast<float>();
    return s;
}

void save_packed(const PackedSequence& seq, const fs::path& path)
{
    require(seq.frames.cols() % 3 == 0, ErrorKind::Shape, "packed frames must have 3n columns");
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out.write("FTK1", 4);
    put<std::uint32_t>(out, std::uint32_t(seq.num_frames()));
    put<std::uint32_t>(out, std::uint32_t(seq.num_points()));
    put<std::uint32_t>(out, std::uint32_t(seq.faces.rows()));
    for (Eigen::Index f = 0; f < seq.faces.rows(); ++f)
        for (int k = 0; k < 3; ++k) put<std::uint32_t>(out, std::uint32_t(seq.faces(f, k)));
    for (Eigen::Index t = 0; t < seq.frames.rows(); ++t)
        for (Eigen::Index j = 0; j < seq.frames.cols(); ++j) put<float>(out, seq.frames(t, j));
    if (!out) fail(ErrorKind::Io, "failed writing " + path.string());
}

PackedSequence load_packed(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FTK1", 4) != 0) fail(ErrorKind::Format, "bad magic in " + path.string());
    const auto T = get<std::uint32_t>(in, path);
    const auto n = get<std::uint32_t>(in, path);
    const auto m = get<std::uint32_t>(in, path);
    const auto size = fs::file_size(path);
    const std::uint64_t expected = 16ull + 12ull * m + 12ull * std::uint64_t(T) * n;
    if (size != expected)
        fail(ErrorKind::Format, path.string() + ": size " + std::to_string(size) + " does not match header (" +
                                    std::to_string(expected) + ")");
    PackedSequence s;
    s.faces.resize(m, 3);
    for (std::uint32_t f = 0; f < m; ++f)
        for (int k = 0; k < 3; ++k) {
            const auto idx = get<std::uint32_t>(in, path);
            if (idx >= n) fail(ErrorKind::Validation, path.string() + ": face index out of range");
            s.faces(f, k) = int(idx);
        }
    s.frames.resize(T, 3 * Eigen::Index(n));
    for (std::uint32_t t = 0; t < T; ++t)
        for (Eigen::Index j = 0; j < s.frames.cols(); ++j) s.frames(t, j) = get<float>(in, path);
    return s;
}

ExportFormat export_format_from_string(const std::string& s)
{
    if (s == "obj") return ExportFormat::Obj;
    if (s == "ply") return ExportFormat::Ply;
    if (s == "packed") return ExportFormat::Packed;
    fail(ErrorKind::Config, "unknown export format \"" + s + "\" (obj, ply, packed)");
}

std::string to_string(ExportFormat f)
{
    switch (f) {
    case ExportFormat::Obj: return "obj";
    case ExportFormat::Ply: return "ply";
    case ExportFormat::Packed: return "packed";
    }
    return "?";
}

std::vector<fs::path> export_sequence(const PackedSequence& seq, ExportFormat format, const fs::path& dir,
                                      int workers)
{
    fs::create_directories(dir);
    if (format == ExportFormat::Packed) {
        const fs::path p = dir / "sequence.ftk";
        save_packed(seq, p);
        return {p};
    }
    const char* ext = format == ExportFormat::Obj ? "obj" : "ply";
    std::vector<fs::path> files(std::size_t(seq.num_frames()));
    parallel_for(files.size(), workers, [&](std::size_t t) {
        const mesh::Mesh m{seq.vertices(Eigen::Index(t)), seq.faces};
        files[t] = dir / frame_name(Eigen::Index(t), ext);
        mesh::save_mesh(m, files[t], format == ExportFormat::Obj ? mesh::MeshFormat::Obj : mesh::MeshFormat::PlyBinary);
    });
    return files;
}

PackedSequence import_sequence(const fs::path& dir)
{
    if (fs::is_regular_file(dir)) return load_packed(dir);
    if (fs::exists(dir / "sequence.ftk")) return load_packed(dir / "sequence.ftk");
    std::vector<fs::path> files;
    if (fs::is_directory(dir))
        for (const auto& e : fs::directory_iterator(dir)) {
            const auto name = e.path().filename().string();
            if (name.rfind("frame_", 0) == 0 && (e.path().extension() == ".obj" || e.path().extension() == ".ply"))
                files.push_back(e.path());
        }
    require(!files.empty(), ErrorKind::Io, "no exported frames in " + dir.string());
    std::sort(files.begin(), files.end());
    PackedSequence s;
    for (std::size_t t = 0; t < files.size(); ++t) {
        const mesh::Mesh m = mesh::load_mesh(files[t]);
        if (t == 0) {
            s.faces = m.faces;
            s.frames.resize(Eigen::Index(files.size()), 3 * m.vertices.rows());
        }
        require(m.vertices.rows() * 3 == s.frames.cols() && m.faces == s.faces, ErrorKind::Validation,
                "connectivity changes within " + dir.string());
        s.frames.row(Eigen::Index(t)) = m.vertices.cast<float>().reshaped<Eigen::RowMajor>().transpose();
    }
    return s;
}

} // namespace freetalk::pipeline
