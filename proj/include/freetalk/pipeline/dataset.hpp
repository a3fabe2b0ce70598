#pragma once

#include <freetalk/ats/denoiser.hpp>
#include <freetalk/mesh/landmarks.hpp>

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace freetalk::pipeline {

/// One dataset unit. Paths are stored relative to the bundle file.
struct SequenceBundle {
    std::string id;
    std::string identity;
    std::filesystem::path audio;
    double fps = 30.0;
    std::string emotion = "neutral";
    int intensity = 1;
    std::filesystem::path template_mesh;
    std::filesystem::path landmark_spec;
    std::optional<std::filesystem::path> landmarks;  // FTK1, T x N points, no faces
    std::optional<std::filesystem::path> vertices;   // FTK1, T x n points with faces

    std::filesystem::path dir;  // directory of bundle.json (not serialized)
    std::filesystem::path resolve(const std::filesystem::path& p) const { return p.is_absolute() ? p : dir / p; }
};

nlohmann::json to_json(const SequenceBundle& b);
SequenceBundle bundle_from_json(const nlohmann::json& j, const std::filesystem::path& dir);
SequenceBundle load_bundle(const std::filesystem::path& path);
void save_bundle(const SequenceBundle& b, const std::filesystem::path& path);

struct Manifest {
    std::string dataset_id;
    double fps = 30.0;
    int landmarks = 68;
    ats::AffectVocabulary vocabulary;
    Eigen::RowVector3d landmark_std = Eigen::RowVector3d::Ones();
    std::map<std::string, std::vector<std::string>> splits;
    std::map<std::string, std::filesystem::path> sequences;  // id -> bundle path (relative)
    nlohmann::json extra = nlohmann::json::object();

    std::filesystem::path dir;
    std::filesystem::path bundle_path(const std::string& id) const;
    const std::vector<std::string>& split(const std::string& name) const;
};

nlohmann::json to_json(const Manifest& m);
Manifest load_manifest(const std::filesystem::path& dir_or_file);
void save_manifest(const Manifest& m, const std::filesystem::path& dir);

/// Bundle contents with displacements relative to the template. Stored
/// positions are float32, so displacements subtract the float32-rounded
/// template: a motionless frame yields exactly zero.
struct LoadedSequence {
    SequenceBundle bundle;
    mesh::Mesh template_mesh;
    mesh::LandmarkSpec spec;
    mesh::LandmarkSet template_landmarks;
    Eigen::MatrixXd landmark_displacements;                // T x 3N
    std::optional<Eigen::MatrixXd> vertex_displacements;   // T x 3n

    Eigen::Index frames() const { return landmark_displacements.rows(); }
};

/// Loads trajectories; frame counts from the audio timeline and stored
/// frames may differ by one (truncated to the minimum with a warning).
LoadedSequence load_sequence(const SequenceBundle& bundle, bool need_vertices);

/// round(duration * fps) for the bundle's audio.
Eigen::Index audio_frames(const SequenceBundle& bundle);

/// Per-axis std of displacements pooled over all frames and points.
Eigen::RowVector3d axis_std(const std::vector<const Eigen::MatrixXd*>& trajectories);

/// Reconciles two frame counts: equal or off by one -> min, else throws.
Eigen::Index reconcile_frames(Eigen::Index a, Eigen::Index b, const std::string& what);

/// Rounds every coefficient through float32.
Eigen::MatrixXd round_to_float(const Eigen::MatrixXd& m);

} // namespace freetalk::pipeline
