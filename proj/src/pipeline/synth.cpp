#include <freetalk/error.hpp>
#include <freetalk/mesh/primitives.hpp>
#include <freetalk/pipeline/dataset.hpp>
#include <freetalk/pipeline/seqio.hpp>
#include <freetalk/pipeline/synth.hpp>
#include <freetalk/pipeline/workers.hpp>

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

namespace freetalk::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kFaceScale = 0.62;  // layout unit -> fraction of the head axes
const Eigen::Vector3d kBaseAxes(1.0, 1.25, 0.9);

// 68-point layout in face coordinates, x to the subject's left, y up.
Eigen::MatrixXd face_layout()
{
    Eigen::MatrixXd p(68, 2);
    const double pi = std::numbers::pi;
    for (int j = 0; j <= 16; ++j) {  // jaw
        const double a = pi + pi * j / 16.0;
        p.row(j) << 0.85 * std::cos(a), 0.15 + 0.95 * std::sin(a);
    }
    for (int j = 0; j < 5; ++j) {  // brows
        const double x = 0.2 + 0.125 * j;
        const double arch = 0.06 * std::sin(pi * j / 4.0);
        p.row(17 + j) << -(0.7 - 0.125 * j), 0.45 + arch;
        p.row(22 + j) << x, 0.45 + 0.06 * std::sin(pi * (4 - j) / 4.0);
    }
    for (int j = 0; j < 4; ++j) p.row(27 + j) << 0.0, 0.35 - 0.35 * j / 3.0;  // nose bridge
    for (int j = 0; j < 5; ++j) p.row(31 + j) << -0.2 + 0.1 * j, -0.08 - 0.03 * std::sin(pi * j / 4.0);
    const auto ellipse = [&](int first, int count, double cx, double cy, double rx, double ry) {
        // first point at the left corner, then over the top
        for (int j = 0; j < count; ++j) {
            const double a = pi - 2.0 * pi * j / count;
            p.row(first + j) << cx + rx * std::cos(a), cy + ry * std::sin(a);
        }
    };
    ellipse(36, 6, -0.4, 0.28, 0.14, 0.06);
    ellipse(42, 6, 0.4, 0.28, 0.14, 0.06);
    ellipse(48, 12, 0.0, -0.38, 0.32, 0.14);
    ellipse(60, 8, 0.0, -0.38, 0.22, 0.06);
    return p;
}

std::string sequence_name(int identity, int s)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "id%03d_s%02d", identity, s);
    return buf;
}

std::string identity_name(int identity)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "id%03d", identity);
    return buf;
}

double envelope(double t, const Eigen::Vector4d& p)
{
    const double two_pi = 2.0 * std::numbers::pi;
    return (0.5 - 0.5 * std::cos(two_pi * p(0) * t + p(1))) * (0.65 + 0.35 * std::sin(two_pi * p(2) * t + p(3)));
}

} // namespace

json to_json(const SyntheticDatasetSpec& s)
{
    json fields = json::object();
    for (const auto& [name, f] : s.emotion_fields)
        fields[name] = {{"brow_raise", f.brow_raise}, {"brow_squeeze", f.brow_squeeze}, {"corner_lift", f.corner_lift}};
    return {{"identities", s.identities},
            {"sequences_per_identity", s.sequences_per_identity},
            {"min_duration", s.min_duration},
            {"max_duration", s.max_duration},
            {"fps", s.fps},
            {"sample_rate", s.sample_rate},
            {"emotions", s.emotions},
            {"emotion_fields", fields},
            {"max_intensity", s.max_intensity},
            {"sequence_emotions", s.sequence_emotions},
            {"sequence_intensities", s.sequence_intensities},
            {"shared_audio", s.shared_audio},
            {"audio_amplitude", s.audio_amplitude},
            {"articulation_gain", s.articulation_gain},
            {"emotion_amplitude", s.emotion_amplitude},
            {"identity_variation", s.identity_variation},
            {"mesh_frequency", s.mesh_frequency},
            {"remesh_levels", s.remesh_levels},
            {"rbf_sigma", s.rbf_sigma},
            {"rbf_floor", s.rbf_floor},
            {"val_per_identity", s.val_per_identity},
            {"test_per_identity", s.test_per_identity},
            {"seed", s.seed}};
}

SyntheticDatasetSpec synthetic_spec_from_json(const json& j)
{
    SyntheticDatasetSpec s;
    s.identities = j.value("identities", s.identities);
    s.sequences_per_identity = j.value("sequences_per_identity", s.sequences_per_identity);
    s.min_duration = j.value("min_duration", s.min_duration);
    s.max_duration = j.value("max_duration", s.max_duration);
    s.fps = j.value("fps", s.fps);
    s.sample_rate = j.value("sample_rate", s.sample_rate);
    s.emotions = j.value("emotions", s.emotions);
    if (j.contains("emotion_fields")) {
        s.emotion_fields.clear();
        for (const auto& [name, f] : j.at("emotion_fields").items())
            s.emotion_fields[name] = {f.value("brow_raise", 0.0), f.value("brow_squeeze", 0.0), f.value("corner_lift", 0.0)};
    }
    s.max_intensity = j.value("max_intensity", s.max_intensity);
    s.sequence_emotions = j.value("sequence_emotions", s.sequence_emotions);
    s.sequence_intensities = j.value("sequence_intensities", s.sequence_intensities);
    s.shared_audio = j.value("shared_audio", s.shared_audio);
    s.audio_amplitude = j.value("audio_amplitude", s.audio_amplitude);
    s.articulation_gain = j.value("articulation_gain", s.articulation_gain);
    s.emotion_amplitude = j.value("emotion_amplitude", s.emotion_amplitude);
    s.identity_variation = j.value("identity_variation", s.identity_variation);
    s.mesh_frequency = j.value("mesh_frequency", s.mesh_frequency);
    s.remesh_levels = j.value("remesh_levels", s.remesh_levels);
    s.rbf_sigma = j.value("rbf_sigma", s.rbf_sigma);
    s.rbf_floor = j.value("rbf_floor", s.rbf_floor);
    s.val_per_identity = j.value("val_per_identity", s.val_per_identity);
    s.test_per_identity = j.value("test_per_identity", s.test_per_identity);
    s.seed = j.value("seed", s.seed);
    return s;
}

const std::vector<int>& upper_face_landmarks()
{
    static const std::vector<int> ids = [] {
        std::vector<int> v;
        for (int j = 17; j <= 26; ++j) v.push_back(j);
        for (int j = 36; j <= 47; ++j) v.push_back(j);
        return v;
    }();
    return ids;
}

const std::vector<int>& mouth_landmarks()
{
    static const std::vector<int> ids = [] {
        std::vector<int> v;
        for (int j = 48; j <= 67; ++j) v.push_back(j);
        return v;
    }();
    return ids;
}

Eigen::MatrixXd articulation_basis()
{
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(68, 3);
    for (int j = 3; j <= 13; ++j) {  // jaw drops and retracts, strongest at the chin
        const double w = std::exp(-std::pow((j - 8) / 3.0, 2));
        b.row(j) << 0.0, -w, -0.3 * w;
    }
    for (int j : {55, 56, 57, 58, 59, 65, 66, 67}) b.row(j) << 0.0, -0.9, -0.2;
    for (int j : {49, 50, 51, 52, 53, 61, 62, 63}) b.row(j) << 0.0, 0.15, 0.05;
    for (int j : {48, 60}) b.row(j) << 0.15, -0.4, -0.1;  // corners round inward
    for (int j : {54, 64}) b.row(j) << -0.15, -0.4, -0.1;
    return b;
}

Eigen::MatrixXd emotion_offsets(const SyntheticDatasetSpec& spec, const std::string& emotion)
{
    auto it = spec.emotion_fields.find(emotion);
    Eigen::MatrixXd f = Eigen::MatrixXd::Zero(68, 3);
    if (it == spec.emotion_fields.end()) {
        require(emotion == "neutral", ErrorKind::Config, "no offset field for emotion \"" + emotion + "\"");
        return f;
    }
    const EmotionField& e = it->second;
    for (int j = 17; j <= 26; ++j) {
        const bool left = j <= 21;
        const double inner = left ? (j - 17) / 4.0 : (26 - j) / 4.0;  // 1 at the inner end
        f(j, 1) += e.brow_raise;
        f(j, 0) += (left ? 1.0 : -1.0) * 0.5 * e.brow_squeeze * inner;
        f(j, 1) -= 0.3 * e.brow_squeeze * inner;
    }
    for (int j : {37, 38, 43, 44}) f(j, 1) += 0.5 * e.brow_raise;
    for (int j : {48, 60}) f.row(j) += Eigen::RowVector3d(-0.4 * e.corner_lift, e.corner_lift, 0.0);
    for (int j : {54, 64}) f.row(j) += Eigen::RowVector3d(0.4 * e.corner_lift, e.corner_lift, 0.0);
    for (int j : {49, 53, 59, 55}) f(j, 1) += 0.4 * e.corner_lift;
    return spec.emotion_amplitude * f;
}

Eigen::MatrixXd dense_weights(const mesh::Vertices& vertices, const mesh::LandmarkSet& landmarks, double sigma,
                              double floor)
{
    require(sigma > 0.0 && floor > 0.0, ErrorKind::Config, "rbf_sigma and rbf_floor must be positive");
    Eigen::MatrixXd w(vertices.rows(), landmarks.rows());
    for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
        for (Eigen::Index j = 0; j < landmarks.rows(); ++j)
            w(i, j) = std::exp(-(vertices.row(i) - landmarks.row(j)).squaredNorm() / (2.0 * sigma * sigma));
        w.row(i) /= w.row(i).sum() + floor;
    }
    return w;
}

SyntheticFace make_face(const mesh::Mesh& m, const Eigen::Vector3d& axes, const SyntheticDatasetSpec& spec,
                        const std::string& id)
{
    SyntheticFace face;
    face.id = id;
    face.mesh = m;
    const Eigen::MatrixXd layout = face_layout();
    for (int j = 0; j < layout.rows(); ++j) {
        const Eigen::Vector3d origin(layout(j, 0) * kFaceScale * axes(0), layout(j, 1) * kFaceScale * axes(1),
                                     10.0 * axes(2));
        const auto hit = mesh::intersect_ray(m, origin, Eigen::Vector3d(0, 0, -1));
        require(hit.has_value(), ErrorKind::Numerical, "landmark ray missed the synthetic head");
        Eigen::Vector3d b = hit->bary.cwiseMax(0.0);
        b /= b.sum();
        face.spec.anchors.push_back(mesh::BarycentricAnchor{hit->face, {b(0), b(1), b(2)}});
    }
    std::vector<int> mouth, lips, upper;
    for (Eigen::Index i = 0; i < m.vertices.rows(); ++i) {
        if (m.vertices(i, 2) <= 0.0) continue;
        const double fx = m.vertices(i, 0) / (kFaceScale * axes(0));
        const double fy = m.vertices(i, 1) / (kFaceScale * axes(1));
        const double dy = fy + 0.38;
        if (std::pow(fx / 0.5, 2) + std::pow(dy / 0.3, 2) <= 1.0) mouth.push_back(int(i));
        if (std::pow(fx / 0.38, 2) + std::pow(dy / 0.2, 2) <= 1.0) lips.push_back(int(i));
        if (fy >= 0.15 && std::abs(fx) <= 0.95) upper.push_back(int(i));
    }
    require(!mouth.empty() && !lips.empty() && !upper.empty(), ErrorKind::Config,
            "mesh too coarse for the region masks; raise mesh_frequency");
    face.spec.regions = {{"mouth", mouth}, {"lips", lips}, {"upper_face", upper}};
    face.template_landmarks = mesh::extract_landmarks(m, face.spec);
    face.dense_weights = dense_weights(m.vertices, face.template_landmarks, spec.rbf_sigma, spec.rbf_floor);
    return face;
}

SyntheticDataset generate_synthetic(const SyntheticDatasetSpec& spec)
{
    require(spec.identities >= 1 && spec.sequences_per_identity >= 1, ErrorKind::Config,
            "need at least one identity and one sequence");
    require(spec.min_duration > 0.0 && spec.max_duration >= spec.min_duration, ErrorKind::Config,
            "invalid duration range");
    require(spec.fps > 0.0 && spec.sample_rate > 0, ErrorKind::Config, "fps and sample_rate must be positive");
    require(spec.max_intensity >= 1, ErrorKind::Config, "max_intensity must be at least 1");
    require(spec.val_per_identity >= 0 && spec.test_per_identity >= 0 &&
                spec.val_per_identity + spec.test_per_identity < spec.sequences_per_identity,
            ErrorKind::Config, "val/test counts leave no training sequences");
    const ats::AffectVocabulary vocab(spec.emotions, spec.max_intensity);
    const std::vector<std::string> seq_emotions = spec.sequence_emotions.empty() ? spec.emotions : spec.sequence_emotions;
    const std::vector<int> seq_intensities =
        spec.sequence_intensities.empty() ? std::vector<int>{spec.max_intensity} : spec.sequence_intensities;
    for (const auto& e : seq_emotions) vocab.emotion_id(e);
    for (int i : seq_intensities)
        require(i >= 1 && i <= spec.max_intensity, ErrorKind::Config, "sequence intensity out of range");

    SyntheticDataset data;
    data.spec = spec;
    const mesh::Mesh sphere = mesh::geodesic_sphere(spec.mesh_frequency);
    const Eigen::MatrixXd basis = articulation_basis();
    const int E = int(seq_emotions.size());

    for (int id = 0; id < spec.identities; ++id) {
        std::mt19937_64 rng(derive_seed(spec.seed, 1000 + std::uint64_t(id)));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Eigen::Vector3d axes = kBaseAxes;
        for (int a = 0; a < 3; ++a) axes(a) *= 1.0 + spec.identity_variation * u(rng);
        mesh::Mesh head = sphere;
        head.vertices = (sphere.vertices * axes.asDiagonal()).eval();
        data.faces.push_back(make_face(head, axes, spec, identity_name(id)));
        for (int level : spec.remesh_levels) {
            require(level >= 1 && level <= 3, ErrorKind::Config, "remesh levels must lie in [1, 3]");
            mesh::Mesh fine = head;
            for (int l = 0; l < level; ++l) fine = mesh::subdivide_midpoint(fine);
            data.remeshes[id].push_back(make_face(fine, axes, spec, identity_name(id) + "_remesh" + std::to_string(level)));
        }
        const SyntheticFace& face = data.faces.back();

        for (int s = 0; s < spec.sequences_per_identity; ++s) {
            SyntheticSequence seq;
            seq.id = sequence_name(id, s);
            seq.identity = id;
            seq.emotion = seq_emotions[std::size_t(s % E)];
            seq.intensity = seq_intensities[std::size_t((s / E) % int(seq_intensities.size()))];
            const int n_test = spec.test_per_identity, n_val = spec.val_per_identity;
            const int S = spec.sequences_per_identity;
            seq.split = s >= S - n_test ? "test" : s >= S - n_test - n_val ? "val" : "train";

            const int audio_index = spec.shared_audio ? s / E : s;
            std::mt19937_64 arng(derive_seed(spec.seed, 100000 * std::uint64_t(id + 1) + std::uint64_t(audio_index)));
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            const double dur_draw = spec.min_duration + (spec.max_duration - spec.min_duration) * unit(arng);
            const Eigen::Index T = std::max<Eigen::Index>(1, std::llround(dur_draw * spec.fps));
            const double duration = double(T) / spec.fps;
            const Eigen::Vector4d env_params(1.2 + 1.3 * unit(arng), 2.0 * std::numbers::pi * unit(arng),
                                             0.4 + 0.6 * unit(arng), 2.0 * std::numbers::pi * unit(arng));
            Eigen::Vector3d f0, f1, phase;
            for (int k = 0; k < 3; ++k) {
                f0(k) = 200.0 + 1800.0 * unit(arng);
                f1(k) = 200.0 + 1800.0 * unit(arng);
                phase(k) = 2.0 * std::numbers::pi * unit(arng);
            }

            seq.audio.sample_rate = spec.sample_rate;
            const auto n_samples = std::size_t(std::llround(duration * spec.sample_rate));
            seq.audio.samples.resize(n_samples);
            for (std::size_t k = 0; k < n_samples; ++k) {
                const double t = double(k) / spec.sample_rate;
                double carrier = 0.0;
                for (int c = 0; c < 3; ++c)
                    carrier += std::sin(2.0 * std::numbers::pi * (f0(c) * t + 0.5 * (f1(c) - f0(c)) * t * t / duration) +
                                        phase(c)) /
                               3.0;
                seq.audio.samples[k] = spec.audio_amplitude * envelope(t, env_params) * carrier;
            }

            seq.envelope.resize(T);
            for (Eigen::Index k = 0; k < T; ++k)
                seq.envelope(k) = spec.audio_amplitude * envelope((double(k) + 0.5) / spec.fps, env_params);
            const Eigen::MatrixXd emo =
                (double(seq.intensity) / double(spec.max_intensity)) * emotion_offsets(spec, seq.emotion);
            seq.landmark_displacements.resize(T, 3 * 68);
            seq.vertex_displacements.resize(T, 3 * face.mesh.num_vertices());
            for (Eigen::Index k = 0; k < T; ++k) {
                const Eigen::MatrixXd dl = spec.articulation_gain * seq.envelope(k) * basis + emo;
                seq.landmark_displacements.row(k) = dl.reshaped<Eigen::RowMajor>().transpose();
                const Eigen::MatrixXd dv = face.dense_weights * dl;
                seq.vertex_displacements.row(k) = dv.reshaped<Eigen::RowMajor>().transpose();
            }
            data.sequences.push_back(std::move(seq));
        }
    }
    return data;
}

namespace {

Eigen::MatrixXd positions(const Eigen::MatrixXd& displacements, const Eigen::MatrixXd& rest)
{
    const Eigen::RowVectorXd flat = rest.reshaped<Eigen::RowMajor>().transpose();
    return displacements.rowwise() + flat;
}

} // namespace

void write_synthetic(const SyntheticDataset& data, const fs::path& dir, int workers)
{
    const auto& spec = data.spec;
    fs::create_directories(dir / "identities");
    fs::create_directories(dir / "sequences");

    Manifest manifest;
    manifest.dataset_id = "synthetic-" + std::to_string(spec.seed);
    manifest.fps = spec.fps;
    manifest.landmarks = 68;
    manifest.vocabulary = ats::AffectVocabulary(spec.emotions, spec.max_intensity);
    manifest.extra = {{"generator", to_json(spec)}};

    std::vector<const Eigen::MatrixXd*> train;
    for (const auto& s : data.sequences)
        if (s.split == "train") train.push_back(&s.landmark_displacements);
    manifest.landmark_std = axis_std(train);

    const auto face_paths = [&](const std::string& sub) {
        const fs::path d = dir / "identities" / sub;
        return std::make_pair(d / "template.ply", d / "landmarks.json");
    };
    for (std::size_t i = 0; i < data.faces.size(); ++i) {
        const auto& f = data.faces[i];
        const auto [mesh_path, spec_path] = face_paths(f.id);
        fs::create_directories(mesh_path.parent_path());
        mesh::save_mesh(f.mesh, mesh_path);
        mesh::save_landmark_spec(f.spec, spec_path);
        if (auto it = data.remeshes.find(int(i)); it != data.remeshes.end())
            for (const auto& r : it->second) {
                const auto [rm, rs] = face_paths(f.id + "/" + r.id.substr(f.id.size() + 1));
                fs::create_directories(rm.parent_path());
                mesh::save_mesh(r.mesh, rm);
                mesh::save_landmark_spec(r.spec, rs);
            }
    }

    struct Job {
        const SyntheticSequence* seq;
        const SyntheticFace* face;
        std::string id, split, face_dir;
        bool remesh;
    };
    std::vector<Job> jobs;
    for (const auto& s : data.sequences) {
        const auto& face = data.faces[std::size_t(s.identity)];
        jobs.push_back({&s, &face, s.id, s.split, face.id, false});
        if (s.split != "test") continue;
        if (auto it = data.remeshes.find(s.identity); it != data.remeshes.end())
            for (const auto& r : it->second) {
                const std::string tag = r.id.substr(face.id.size() + 1);
                jobs.push_back({&s, &r, s.id + "_" + tag, "test_" + tag, face.id + "/" + tag, true});
            }
    }
    for (const auto& j : jobs) {
        manifest.sequences[j.id] = fs::path("sequences") / j.id / "bundle.json";
        manifest.splits[j.split].push_back(j.id);
    }
    for (const char* split : {"train", "val", "test"}) manifest.splits.try_emplace(split);

    parallel_for(jobs.size(), workers, [&](std::size_t k) {
        const Job& j = jobs[k];
        const fs::path sdir = dir / "sequences" / j.id;
        fs::create_directories(sdir);
        SequenceBundle b;
        b.id = j.id;
        b.identity = data.faces[std::size_t(j.seq->identity)].id;
        b.fps = spec.fps;
        b.emotion = j.seq->emotion;
        b.intensity = j.seq->intensity;
        b.template_mesh = fs::path("../../identities") / j.face_dir / "template.ply";
        b.landmark_spec = fs::path("../../identities") / j.face_dir / "landmarks.json";
        if (j.remesh) {
            b.audio = fs::path("..") / j.seq->id / "audio.wav";
        } else {
            b.audio = "audio.wav";
            audio::save_wav(j.seq->audio, sdir / "audio.wav");
        }
        b.landmarks = "landmarks.ftk";
        save_packed(make_packed(positions(j.seq->landmark_displacements, j.face->template_landmarks), mesh::Faces(0, 3)),
                    sdir / "landmarks.ftk");
        b.vertices = "vertices.ftk";
        Eigen::MatrixXd dv = j.seq->vertex_displacements;
        if (j.remesh) {
            dv.resize(j.seq->landmark_displacements.rows(), 3 * j.face->mesh.num_vertices());
            for (Eigen::Index t = 0; t < dv.rows(); ++t) {
                const Eigen::MatrixXd dl = Eigen::RowVectorXd(j.seq->landmark_displacements.row(t)).reshaped<Eigen::RowMajor>(68, 3);
                dv.row(t) = (j.face->dense_weights * dl).reshaped<Eigen::RowMajor>().transpose();
            }
        }
        save_packed(make_packed(positions(dv, j.face->mesh.vertices), j.face->mesh.faces), sdir / "vertices.ftk");
        save_bundle(b, sdir / "bundle.json");
    });
    save_manifest(manifest, dir);
}

} // namespace freetalk::pipeline
