#pragma once

#include <freetalk/audio/wave.hpp>
#include <freetalk/mesh/landmarks.hpp>

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace freetalk::pipeline {

/// Static landmark offsets of one emotion, in units of emotion_amplitude.
struct EmotionField {
    double brow_raise = 0.0;    // brows and upper lids along +y
    double brow_squeeze = 0.0;  // brows toward the midline
    double corner_lift = 0.0;   // mouth corners up (+y) and outward
};

struct SyntheticDatasetSpec {
    int identities = 1;
    int sequences_per_identity = 6;
    double min_duration = 1.8;  // seconds
    double max_duration = 2.2;
    double fps = 30.0;
    int sample_rate = 16000;
    std::vector<std::string> emotions{"neutral", "happy", "sad", "angry"};
    std::map<std::string, EmotionField> emotion_fields{
        {"neutral", {}}, {"happy", {1.0, 0.0, 1.0}}, {"sad", {-1.0, 0.0, -1.0}}, {"angry", {-0.6, 1.0, -0.3}}};
    int max_intensity = 3;
    /// Sequence s of an identity uses emotion sequence_emotions[s % E] and
    /// intensity sequence_intensities[(s / E) % I]; empty means all emotions
    /// / {max_intensity}.
    std::vector<std::string> sequence_emotions;
    std::vector<int> sequence_intensities;
    /// When set, sequences s and s' with s / E == s' / E share their audio.
    bool shared_audio = false;
    double audio_amplitude = 0.5;
    double articulation_gain = 0.16;  // landmark opening per unit audio envelope
    double emotion_amplitude = 0.05;
    double identity_variation = 0.08;
    int mesh_frequency = 12;
    std::vector<int> remesh_levels{1};  // midpoint subdivisions of test sequences
    double rbf_sigma = 0.15;
    double rbf_floor = 0.5;
    int val_per_identity = 1;
    int test_per_identity = 1;
    std::uint64_t seed = 0;
};

nlohmann::json to_json(const SyntheticDatasetSpec& spec);
SyntheticDatasetSpec synthetic_spec_from_json(const nlohmann::json& j);

/// Landmarks of the brows and eyes / of the mouth in the 68-point layout.
const std::vector<int>& upper_face_landmarks();
const std::vector<int>& mouth_landmarks();

/// 68 x 3 offset field of an emotion at full intensity (mesh units).
Eigen::MatrixXd emotion_offsets(const SyntheticDatasetSpec& spec, const std::string& emotion);
/// 68 x 3 articulation direction scaled per unit envelope.
Eigen::MatrixXd articulation_basis();

struct SyntheticFace {
    std::string id;
    mesh::Mesh mesh;
    mesh::LandmarkSpec spec;
    mesh::LandmarkSet template_landmarks;
    Eigen::MatrixXd dense_weights;  // n x N, dV = W dL per frame
};

struct SyntheticSequence {
    std::string id;
    int identity = 0;
    std::string emotion;
    int intensity = 1;
    std::string split;
    audio::Waveform audio;
    Eigen::VectorXd envelope;                // per frame
    Eigen::MatrixXd landmark_displacements;  // T x 3N
    Eigen::MatrixXd vertex_displacements;    // T x 3n on the identity template
};

struct SyntheticDataset {
    SyntheticDatasetSpec spec;
    std::vector<SyntheticFace> faces;                    // one per identity
    std::map<int, std::vector<SyntheticFace>> remeshes;  // identity -> per remesh level
    std::vector<SyntheticSequence> sequences;
};

/// Ellipsoidal head of the given axes with the 68-point layout projected on
/// its front, region masks and dense interpolation weights.
SyntheticFace make_face(const mesh::Mesh& mesh, const Eigen::Vector3d& axes, const SyntheticDatasetSpec& spec,
                        const std::string& id);

/// Normalized Gaussian weights W_ij = phi_ij / (sum_k phi_ik + floor).
Eigen::MatrixXd dense_weights(const mesh::Vertices& vertices, const mesh::LandmarkSet& landmarks, double sigma,
                              double floor);

SyntheticDataset generate_synthetic(const SyntheticDatasetSpec& spec);

/// Writes manifest.json, identities/ and sequences/ under `dir`.
void write_synthetic(const SyntheticDataset& data, const std::filesystem::path& dir, int workers = 1);

} // namespace freetalk::pipeline
