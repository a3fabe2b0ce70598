#include <freetalk/error.hpp>
#include <freetalk/nn/archive.hpp>

#include <cstdint>
#include <cstring>
#include <fstream>

namespace freetalk::nn {

namespace {

template <typename T>
void put(std::ostream& out, T v)
{
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in)
{
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail(ErrorKind::Format, "truncated checkpoint");
    return v;
}

} // namespace

void save_archive(const Archive& archive, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
    out.write("FTCK", 4);
    put<std::uint32_t>(out, kArchiveVersion);
    const std::string header = archive.header.dump();
    put<std::uint64_t>(out, header.size());
    out.write(header.data(), std::streamsize(header.size()));
    put<std::uint32_t>(out, std::uint32_t(archive.tensors.size()));
    for (const auto& [name, m] : archive.tensors) {
        put<std::uint32_t>(out, std::uint32_t(name.size()));
        out.write(name.data(), std::streamsize(name.size()));
        put<std::uint32_t>(out, std::uint32_t(m.rows()));
        put<std::uint32_t>(out, std::uint32_t(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) put<double>(out, m(i, j));
    }
    if (!out) fail(ErrorKind::Io, "failed writing checkpoint " + path.string());
}

Archive load_archive(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "FTCK", 4) != 0) fail(ErrorKind::Format, "not a checkpoint: " + path.string());
    const auto version = get<std::uint32_t>(in);
    if (version != kArchiveVersion)
        fail(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
    const auto hlen = get<std::uint64_t>(in);
    std::string header(hlen, '\0');
    in.read(header.data(), std::streamsize(hlen));
    if (!in) fail(ErrorKind::Format, "truncated checkpoint header");
    Archive a;
    try {
        a.header = nlohmann::json::parse(header);
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::Format, std::string("bad checkpoint header: ") + e.what());
    }
    const auto count = get<std::uint32_t>(in);
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto nlen = get<std::uint32_t>(in);
        std::string name(nlen, '\0');
        in.read(name.data(), nlen);
        const auto rows = get<std::uint32_t>(in);
        const auto cols = get<std::uint32_t>(in);
        Mat m(rows, cols);
        for (std::uint32_t i = 0; i < rows; ++i)
            for (std::uint32_t j = 0; j < cols; ++j) m(i, j) = get<double>(in);
        a.tensors.emplace(std::move(name), std::move(m));
    }
    return a;
}

void store_parameters(const ParamStore& store, const std::string& prefix, Archive& archive)
{
    for (const auto& [name, p] : store.all()) archive.tensors[prefix + name] = p.value;
}

void load_parameters(ParamStore& store, const std::string& prefix, const Archive& archive)
{
    for (auto& [name, p] : store.all()) {
        auto it = archive.tensors.find(prefix + name);
        if (it == archive.tensors.end()) fail(ErrorKind::Validation, "checkpoint lacks tensor " + prefix + name);
        if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols())
            fail(ErrorKind::Validation, "checkpoint tensor " + prefix + name + " has the wrong shape");
        p.value = it->second;
    }
}

} // namespace freetalk::nn
