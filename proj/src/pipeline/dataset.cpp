#include <freetalk/audio/wave.hpp>
#include <freetalk/error.hpp>
#include <freetalk/pipeline/dataset.hpp>
#include <freetalk/pipeline/log.hpp>
#include <freetalk/pipeline/seqio.hpp>

#include <cmath>
#include <fstream>

namespace freetalk::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
}

void write_json(const json& j, const fs::path& path)
{
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

std::uint64_t wav_sample_count(const fs::path& path, double& rate)
{
    const auto w = audio::load_wav(path);
    rate = w.sample_rate;
    return w.samples.size();
}

} // namespace

json to_json(const SequenceBundle& b)
{
    json j = {{"id", b.id},
              {"identity", b.identity},
              {"audio", b.audio.generic_string()},
              {"fps", b.fps},
              {"emotion", b.emotion},
              {"intensity", b.intensity},
              {"template", b.template_mesh.generic_string()},
              {"landmark_spec", b.landmark_spec.generic_string()}};
    if (b.landmarks) j["landmarks"] = b.landmarks->generic_string();
    if (b.vertices) j["vertices"] = b.vertices->generic_string();
    return j;
}

SequenceBundle bundle_from_json(const json& j, const fs::path& dir)
{
    SequenceBundle b;
    try {
        b.id = j.at("id").get<std::string>();
        b.identity = j.value("identity", b.id);
        b.audio = j.at("audio").get<std::string>();
        b.fps = j.at("fps").get<double>();
        b.emotion = j.value("emotion", std::string("neutral"));
        b.intensity = j.value("intensity", 1);
        b.template_mesh = j.at("template").get<std::string>();
        b.landmark_spec = j.at("landmark_spec").get<std::string>();
        if (j.contains("landmarks")) b.landmarks = fs::path(j.at("landmarks").get<std::string>());
        if (j.contains("vertices")) b.vertices = fs::path(j.at("vertices").get<std::string>());
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, "bundle " + dir.string() + ": " + e.what());
    }
    require(b.fps > 0.0, ErrorKind::Validation, "bundle " + b.id + ": fps must be positive");
    require(b.landmarks || b.vertices, ErrorKind::Validation,
            "bundle " + b.id + " has neither landmark nor vertex trajectories");
    b.dir = dir;
    return b;
}

SequenceBundle load_bundle(const fs::path& path) { return bundle_from_json(read_json(path), path.parent_path()); }

void save_bundle(const SequenceBundle& b, const fs::path& path) { write_json(to_json(b), path); }

fs::path Manifest::bundle_path(const std::string& id) const
{
    auto it = sequences.find(id);
    if (it == sequences.end()) fail(ErrorKind::Validation, "manifest has no sequence " + id);
    return it->second.is_absolute() ? it->second : dir / it->second;
}

const std::vector<std::string>& Manifest::split(const std::string& name) const
{
    static const std::vector<std::string> empty;
    auto it = splits.find(name);
    return it == splits.end() ? empty : it->second;
}

json to_json(const Manifest& m)
{
    json seqs = json::object();
    for (const auto& [id, p] : m.sequences) seqs[id] = p.generic_string();
    json j = {{"format", "freetalk-dataset"},
              {"version", 1},
              {"dataset_id", m.dataset_id},
              {"fps", m.fps},
              {"landmarks", m.landmarks},
              {"vocabulary", ats::to_json(m.vocabulary)},
              {"normalization", {{"landmark_std", {m.landmark_std(0), m.landmark_std(1), m.landmark_std(2)}}}},
              {"splits", m.splits},
              {"sequences", seqs}};
    if (!m.extra.empty()) j["extra"] = m.extra;
    return j;
}

Manifest load_manifest(const fs::path& dir_or_file)
{
    const fs::path file = fs::is_directory(dir_or_file) ? dir_or_file / "manifest.json" : dir_or_file;
    const json j = read_json(file);
    Manifest m;
    try {
        require(j.value("format", "") == "freetalk-dataset", ErrorKind::Format, file.string() + " is not a dataset manifest");
        m.dataset_id = j.at("dataset_id").get<std::string>();
        m.fps = j.at("fps").get<double>();
        m.landmarks = j.at("landmarks").get<int>();
        m.vocabulary = ats::vocabulary_from_json(j.at("vocabulary"));
        const auto s = j.at("normalization").at("landmark_std").get<std::vector<double>>();
        require(s.size() == 3, ErrorKind::Validation, "landmark_std needs 3 entries");
        m.landmark_std << s[0], s[1], s[2];
        m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
        for (const auto& [id, p] : j.at("sequences").items()) m.sequences[id] = p.get<std::string>();
        if (j.contains("extra")) m.extra = j.at("extra");
    } catch (const json::exception& e) {
        fail(ErrorKind::Validation, file.string() + ": " + e.what());
    }
    for (const auto& [name, ids] : m.splits)
        for (const auto& id : ids)
            require(m.sequences.count(id) > 0, ErrorKind::Validation, "split " + name + " names unknown sequence " + id);
    m.dir = file.parent_path();
    return m;
}

void save_manifest(const Manifest& m, const fs::path& dir)
{
    fs::create_directories(dir);
    write_json(to_json(m), dir / "manifest.json");
}

Eigen::MatrixXd round_to_float(const Eigen::MatrixXd& m) { return m.cast<float>().cast<double>(); }

Eigen::Index reconcile_frames(Eigen::Index a, Eigen::Index b, const std::string& what)
{
    if (a == b) return a;
    if (std::abs(a - b) == 1) {
        log_warn(what + ": frame counts " + std::to_string(a) + " and " + std::to_string(b) + " differ by one; truncating");
        return std::min(a, b);
    }
    fail(ErrorKind::Validation,
         what + ": frame counts " + std::to_string(a) + " and " + std::to_string(b) + " are inconsistent");
}

Eigen::Index audio_frames(const SequenceBundle& bundle)
{
    double rate = 0.0;
    const auto samples = wav_sample_count(bundle.resolve(bundle.audio), rate);
    return Eigen::Index(std::llround(double(samples) / rate * bundle.fps));
}

LoadedSequence load_sequence(const SequenceBundle& bundle, bool need_vertices)
{
    LoadedSequence s;
    s.bundle = bundle;
    s.template_mesh = mesh::load_mesh(bundle.resolve(bundle.template_mesh));
    mesh::validate(s.template_mesh);
    s.spec = mesh::load_landmark_spec(bundle.resolve(bundle.landmark_spec));
    mesh::validate(s.spec, s.template_mesh);
    s.template_landmarks = mesh::extract_landmarks(s.template_mesh, s.spec);
    const Eigen::Index N = s.spec.size();

    std::optional<PackedSequence> verts;
    if (bundle.vertices && (need_vertices || !bundle.landmarks)) {
        verts = load_packed(bundle.resolve(*bundle.vertices));
        require(verts->num_points() == s.template_mesh.num_vertices(), ErrorKind::Validation,
                bundle.id + ": vertex trajectory size differs from the template");
        require(verts->faces.rows() == 0 || verts->faces == s.template_mesh.faces, ErrorKind::Validation,
                bundle.id + ": connectivity of the vertex trajectory differs from the template");
    }
    require(!need_vertices || verts, ErrorKind::Validation, bundle.id + ": bundle has no vertex trajectory");

    if (bundle.landmarks) {
        const PackedSequence lm = load_packed(bundle.resolve(*bundle.landmarks));
        require(lm.num_points() == N, ErrorKind::Validation,
                bundle.id + ": landmark trajectory has " + std::to_string(lm.num_points()) + " points, spec has " +
                    std::to_string(N));
        const Eigen::RowVectorXd tpl = round_to_float(s.template_landmarks).reshaped<Eigen::RowMajor>().transpose();
        s.landmark_displacements = lm.frames.cast<double>().rowwise() - tpl;
    } else {
        // Landmarks follow the dense frames through their anchors.
        s.landmark_displacements.resize(verts->num_frames(), 3 * N);
        const mesh::LandmarkSet tpl = round_to_float(s.template_landmarks);
        for (Eigen::Index t = 0; t < verts->num_frames(); ++t) {
            const mesh::LandmarkSet l = mesh::extract_landmarks(verts->vertices(t), s.template_mesh.faces, s.spec);
            s.landmark_displacements.row(t) = (l - tpl).reshaped<Eigen::RowMajor>().transpose();
        }
    }
    if (verts) {
        const Eigen::RowVectorXd tpl = round_to_float(s.template_mesh.vertices).reshaped<Eigen::RowMajor>().transpose();
        s.vertex_displacements = Eigen::MatrixXd(verts->frames.cast<double>().rowwise() - tpl);
    }

    Eigen::Index T = s.landmark_displacements.rows();
    if (s.vertex_displacements) T = reconcile_frames(T, s.vertex_displacements->rows(), bundle.id);
    T = reconcile_frames(T, audio_frames(bundle), bundle.id + " (audio)");
    s.landmark_displacements.conservativeResize(T, Eigen::NoChange);
    if (s.vertex_displacements) s.vertex_displacements->conservativeResize(T, Eigen::NoChange);
    require(s.landmark_displacements.allFinite(), ErrorKind::Validation, bundle.id + ": non-finite landmark positions");
    return s;
}

Eigen::RowVector3d axis_std(const std::vector<const Eigen::MatrixXd*>& trajectories)
{
    Eigen::Array3d sum = Eigen::Array3d::Zero(), sq = Eigen::Array3d::Zero();
    double count = 0.0;
    for (const auto* t : trajectories)
        for (Eigen::Index j = 0; j < t->cols(); ++j) {
            sum(j % 3) += t->col(j).sum();
            sq(j % 3) += t->col(j).squaredNorm();
            if (j % 3 == 0) count += double(t->rows());
        }
    Eigen::RowVector3d out = Eigen::RowVector3d::Ones();
    if (count == 0.0) return out;
    for (int a = 0; a < 3; ++a) {
        const double mean = sum(a) / count;
        const double var = std::max(sq(a) / count - mean * mean, 0.0);
        out(a) = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
    }
    return out;
}

} // namespace freetalk::pipeline
