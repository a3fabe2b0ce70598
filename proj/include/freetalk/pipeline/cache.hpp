#pragma once

#include <freetalk/audio/features.hpp>
#include <freetalk/mesh/operators.hpp>
#include <freetalk/nn/autograd.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

namespace freetalk::pipeline {

/// FNV-1a over raw bytes, chained through `seed`.
std::uint64_t hash_bytes(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ull);
std::uint64_t hash_mesh(const mesh::Mesh& mesh);
std::uint64_t hash_file(const std::filesystem::path& path);
std::uint64_t hash_params(const nn::ParamStore& store);
std::string hex(std::uint64_t h);

/// Directory named by FREETALK_CACHE, created on demand; nullopt when unset.
std::optional<std::filesystem::path> cache_dir();

/// Loads `key` from the cache or computes and stores it. Values round-trip
/// exactly (float64), so cached and recomputed results agree bitwise.
Eigen::MatrixXd cached_matrix(const std::string& key, const std::function<Eigen::MatrixXd()>& compute);

mesh::SurfaceOperators cached_operators(const mesh::Mesh& mesh, const mesh::OperatorOptions& options);

/// Audio features of a WAV file (cache key: file bytes + extractor config).
audio::AudioFeatures cached_audio_features(const std::filesystem::path& wav, const audio::FeatureConfig& config);

nlohmann::json to_json(const audio::FeatureConfig& config);
audio::FeatureConfig feature_config_from_json(const nlohmann::json& j);

void save_operators(const mesh::SurfaceOperators& ops, const std::filesystem::path& path);
mesh::SurfaceOperators load_operators(const std::filesystem::path& path);

} // namespace freetalk::pipeline
