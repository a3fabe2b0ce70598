#include <freetalk/error.hpp>
#include <freetalk/mesh/mesh.hpp>

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <vector>

namespace freetalk::mesh {

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

namespace {

std::string lower(std::string s)
{
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}

Mesh assemble(const std::vector<Eigen::RowVector3d>& verts, const std::vector<Eigen::RowVector3i>& tris)
{
    Mesh m;
    m.vertices.resize(Eigen::Index(verts.size()), 3);
    for (size_t i = 0; i < verts.size(); ++i) m.vertices.row(Eigen::Index(i)) = verts[i];
    m.faces.resize(Eigen::Index(tris.size()), 3);
    for (size_t i = 0; i < tris.size(); ++i) m.faces.row(Eigen::Index(i)) = tris[i];
    validate(m);
    return m;
}

// ---- PLY -----------------------------------------------------------------

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

PlyType parse_ply_type(const std::string& s)
{
    if (s == "char" || s == "int8") return PlyType::Int8;
    if (s == "uchar" || s == "uint8") return PlyType::UInt8;
    if (s == "short" || s == "int16") return PlyType::Int16;
    if (s == "ushort" || s == "uint16") return PlyType::UInt16;
    if (s == "int" || s == "int32") return PlyType::Int32;
    if (s == "uint" || s == "uint32") return PlyType::UInt32;
    if (s == "float" || s == "float32") return PlyType::Float32;
    if (s == "double" || s == "float64") return PlyType::Float64;
    fail(ErrorKind::Parse, "unknown PLY property type '" + s + "'");
}

template <typename T>
T read_raw(std::istream& in)
{
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) fail(ErrorKind::Parse, "unexpected end of binary PLY data");
    return v;
}

double read_binary_value(std::istream& in, PlyType t)
{
    switch (t) {
    case PlyType::Int8: return read_raw<std::int8_t>(in);
    case PlyType::UInt8: return read_raw<std::uint8_t>(in);
    case PlyType::Int16: return read_raw<std::int16_t>(in);
    case PlyType::UInt16: return read_raw<std::uint16_t>(in);
    case PlyType::Int32: return read_raw<std::int32_t>(in);
    case PlyType::UInt32: return read_raw<std::uint32_t>(in);
    case PlyType::Float32: return read_raw<float>(in);
    case PlyType::Float64: return read_raw<double>(in);
    }
    return 0.0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::Float32;
    bool is_list = false;
    PlyType count_type = PlyType::UInt8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

} // namespace

Mesh load_ply(std::istream& in)
{
    std::string line;
    std::getline(in, line);
    if (line.rfind("ply", 0) != 0) fail(ErrorKind::Format, "missing 'ply' magic");

    bool binary = false;
    std::vector<PlyElement> elements;
    for (;;) {
        if (!std::getline(in, line)) fail(ErrorKind::Parse, "PLY header not terminated");
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string kw;
        ls >> kw;
        if (kw == "end_header") break;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") binary = false;
            else if (fmt == "binary_little_endian") binary = true;
            else fail(ErrorKind::Format, "unsupported PLY format '" + fmt + "'");
        } else if (kw == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            if (!ls) fail(ErrorKind::Parse, "bad PLY element line: " + line);
            elements.push_back(std::move(e));
        } else if (kw == "property") {
            if (elements.empty()) fail(ErrorKind::Parse, "PLY property before element");
            PlyProperty p;
            std::string type;
            ls >> type;
            if (type == "list") {
                std::string ct, it;
                ls >> ct >> it >> p.name;
                p.is_list = true;
                p.count_type = parse_ply_type(ct);
                p.type = parse_ply_type(it);
            } else {
                p.type = parse_ply_type(type);
                ls >> p.name;
            }
            if (!ls) fail(ErrorKind::Parse, "bad PLY property line: " + line);
            elements.back().props.push_back(p);
        }
        // comment / obj_info lines are ignored
    }

    std::vector<Eigen::RowVector3d> verts;
    std::vector<Eigen::RowVector3i> tris;

    for (const auto& e : elements) {
        int ix = -1, iy = -1, iz = -1, iface = -1;
        for (size_t k = 0; k < e.props.size(); ++k) {
            const auto& n = e.props[k].name;
            if (n == "x") ix = int(k);
            if (n == "y") iy = int(k);
            if (n == "z") iz = int(k);
            if (e.props[k].is_list && (n == "vertex_indices" || n == "vertex_index")) iface = int(k);
        }
        if (e.name == "vertex" && (ix < 0 || iy < 0 || iz < 0))
            fail(ErrorKind::Parse, "PLY vertex element lacks x/y/z");

        std::vector<double> scalars(e.props.size());
        std::vector<long long> list;
        for (std::size_t r = 0; r < e.count; ++r) {
            std::istringstream row;
            if (!binary) {
                if (!std::getline(in, line)) fail(ErrorKind::Parse, "unexpected end of ASCII PLY data");
                row.str(line);
            }
            for (size_t k = 0; k < e.props.size(); ++k) {
                const auto& p = e.props[k];
                if (p.is_list) {
                    double cnt = 0;
                    if (binary) cnt = read_binary_value(in, p.count_type);
                    else if (!(row >> cnt)) fail(ErrorKind::Parse, "bad PLY list count");
                    list.clear();
                    for (long long c = 0; c < (long long)cnt; ++c) {
                        double v = 0;
                        if (binary) v = read_binary_value(in, p.type);
                        else if (!(row >> v)) fail(ErrorKind::Parse, "bad PLY list entry");
                        list.push_back((long long)v);
                    }
                    if (int(k) == iface && e.name == "face") {
                        if (list.size() < 3) fail(ErrorKind::Parse, "PLY face with fewer than 3 vertices");
                        for (size_t c = 1; c + 1 < list.size(); ++c)
                            tris.emplace_back(int(list[0]), int(list[c]), int(list[c + 1]));
                    }
                } else {
                    double v = 0;
                    if (binary) v = read_binary_value(in, p.type);
                    else if (!(row >> v)) fail(ErrorKind::Parse, "bad PLY scalar in line: " + line);
                    scalars[k] = v;
                }
            }
            if (e.name == "vertex") verts.emplace_back(scalars[ix], scalars[iy], scalars[iz]);
        }
    }
    return assemble(verts, tris);
}

Mesh load_obj(std::istream& in)
{
    std::vector<Eigen::RowVector3d> verts;
    std::vector<Eigen::RowVector3i> tris;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string kw;
        if (!(ls >> kw)) continue;
        if (kw == "v") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) fail(ErrorKind::Parse, "bad vertex record at line " + std::to_string(lineno));
            verts.emplace_back(x, y, z);
        } else if (kw == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) {
                const auto slash = tok.find('/');
                const std::string head = tok.substr(0, slash);
                long long idx = 0;
                try {
                    std::size_t used = 0;
                    idx = std::stoll(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    fail(ErrorKind::Parse, "bad face index '" + tok + "' at line " + std::to_string(lineno));
                }
                if (idx == 0) fail(ErrorKind::Parse, "OBJ face index 0 at line " + std::to_string(lineno));
                // OBJ indices are 1-based; negative indices count back from the end.
                const long long zero_based = idx > 0 ? idx - 1 : (long long)verts.size() + idx;
                poly.push_back(int(zero_based));
            }
            if (poly.size() < 3) fail(ErrorKind::Parse, "face with fewer than 3 vertices at line " + std::to_string(lineno));
            for (size_t c = 1; c + 1 < poly.size(); ++c) tris.emplace_back(poly[0], poly[c], poly[c + 1]);
        }
    }
    return assemble(verts, tris);
}

MeshFormat format_from_extension(const std::filesystem::path& path)
{
    const auto ext = lower(path.extension().string());
    if (ext == ".obj") return MeshFormat::Obj;
    if (ext == ".ply") return MeshFormat::PlyBinary;
    fail(ErrorKind::Format, "unsupported mesh extension '" + ext + "'");
}

Mesh load_mesh(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open mesh file " + path.string());
    return format_from_extension(path) == MeshFormat::Obj ? load_obj(in) : load_ply(in);
}

void save_obj(const Mesh& mesh, std::ostream& out)
{
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i)
        out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
    for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
        out << "f " << mesh.faces(f, 0) + 1 << ' ' << mesh.faces(f, 1) + 1 << ' ' << mesh.faces(f, 2) + 1 << '\n';
}

void save_ply(const Mesh& mesh, std::ostream& out, bool binary)
{
    out << "ply\n"
        << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n")
        << "element vertex " << mesh.num_vertices() << "\n"
        << "property double x\nproperty double y\nproperty double z\n"
        << "element face " << mesh.num_faces() << "\n"
        << "property list uchar int vertex_indices\n"
        << "end_header\n";
    if (binary) {
        for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i)
            for (int c = 0; c < 3; ++c) {
                const double v = mesh.vertices(i, c);
                out.write(reinterpret_cast<const char*>(&v), sizeof v);
            }
        for (Eigen::Index f = 0; f < mesh.num_faces(); ++f) {
            const std::uint8_t three = 3;
            out.write(reinterpret_cast<const char*>(&three), 1);
            for (int c = 0; c < 3; ++c) {
                const std::int32_t idx = mesh.faces(f, c);
                out.write(reinterpret_cast<const char*>(&idx), sizeof idx);
            }
        }
    } else {
        out << std::setprecision(17);
        for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i)
            out << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
        for (Eigen::Index f = 0; f < mesh.num_faces(); ++f)
            out << "3 " << mesh.faces(f, 0) << ' ' << mesh.faces(f, 1) << ' ' << mesh.faces(f, 2) << '\n';
    }
}

void save_mesh(const Mesh& mesh, const std::filesystem::path& path, MeshFormat format)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write mesh file " + path.string());
    switch (format) {
    case MeshFormat::Obj: save_obj(mesh, out); break;
    case MeshFormat::PlyAscii: save_ply(mesh, out, false); break;
    case MeshFormat::PlyBinary: save_ply(mesh, out, true); break;
    }
    if (!out) fail(ErrorKind::Io, "failed writing mesh file " + path.string());
}

} // namespace freetalk::mesh
