#pragma once

#include <freetalk/pipeline/seqio.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace freetalk::pipeline {

/// Landmark displacement trajectory handed from ATS to STM.
struct MotionSequence {
    double fps = 30.0;
    std::string emotion = "neutral";
    int intensity = 1;
    Eigen::MatrixXd displacements;  // T x 3N, mesh units

    Eigen::Index frames() const { return displacements.rows(); }
    int landmarks() const { return int(displacements.cols() / 3); }
};

/// JSON with full-precision doubles, so a save/load round trip is exact.
void save_motion(const MotionSequence& motion, const std::filesystem::path& path);
MotionSequence load_motion(const std::filesystem::path& path);

struct AnimateConfig {
    std::filesystem::path audio;
    std::string emotion = "neutral";
    int intensity = 1;
    std::filesystem::path mesh;
    std::filesystem::path landmark_spec;
    std::filesystem::path ats_checkpoint;
    std::filesystem::path stm_checkpoint;
    /// Existing landmark trajectory; skips ATS (audio and ATS checkpoint unused).
    std::optional<std::filesystem::path> landmarks;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    int workers = 1;
    int ddim_steps = 100;
    std::optional<int> band_radius;
    ExportFormat format = ExportFormat::Obj;
    bool dump_attention = false;
};

nlohmann::json to_json(const AnimateConfig& config);
AnimateConfig animate_config_from_json(const nlohmann::json& j);

struct AnimateResult {
    MotionSequence motion;
    Eigen::MatrixXd vertex_displacements;  // T x 3n
    std::filesystem::path landmarks_file;  // out/landmarks.json
    std::filesystem::path mesh_dir;        // out/meshes
    std::vector<std::filesystem::path> files;
};

/// Audio + affect -> ATS landmark motion -> STM vertex motion -> export.
/// Writes landmarks.json, meshes/ and, when requested, attention/ (one
/// float32 n x N row-major .bin per frame plus attention.json).
AnimateResult animate(const AnimateConfig& config);

/// ATS stage only: samples the landmark motion for an audio file.
MotionSequence sample_motion(const AnimateConfig& config);

} // namespace freetalk::pipeline
