#pragma once

#include <freetalk/nn/autograd.hpp>

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace freetalk::nn {

/// Checkpoint archive: "FTCK", u32 version, u64 header length, JSON header,
/// u32 tensor count, then per tensor: u32 name length, name, u32 rows,
/// u32 cols, rows*cols float64 row-major. Little-endian throughout.
struct Archive {
    nlohmann::json header = nlohmann::json::object();
    std::map<std::string, Mat> tensors;
};

constexpr std::uint32_t kArchiveVersion = 1;

void save_archive(const Archive& archive, const std::filesystem::path& path);
Archive load_archive(const std::filesystem::path& path);

/// Copies every parameter value under "<prefix><name>".
void store_parameters(const ParamStore& store, const std::string& prefix, Archive& archive);
/// Overwrites matching parameters; throws Validation on missing names or
/// shape mismatches.
void load_parameters(ParamStore& store, const std::string& prefix, const Archive& archive);

} // namespace freetalk::nn
