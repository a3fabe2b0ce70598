#include <freetalk/ats/diffusion.hpp>
#include <freetalk/audio/wave.hpp>
#include <freetalk/error.hpp>
#include <freetalk/pipeline/animate.hpp>
#include <freetalk/pipeline/cache.hpp>
#include <freetalk/pipeline/checkpoint.hpp>
#include <freetalk/pipeline/log.hpp>
#include <freetalk/pipeline/workers.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

namespace freetalk::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

void save_motion(const MotionSequence& motion, const fs::path& path)
{
    json frames = json::array();
    for (Eigen::Index t = 0; t < motion.frames(); ++t) {
        json row = json::array();
        for (Eigen::Index c = 0; c < motion.displacements.cols(); ++c) row.push_back(motion.displacements(t, c));
        frames.push_back(std::move(row));
    }
    const json j = {{"format", "freetalk-motion"},
                    {"fps", motion.fps},
                    {"emotion", motion.emotion},
                    {"intensity", motion.intensity},
                    {"landmarks", motion.landmarks()},
                    {"frames", motion.frames()},
                    {"displacements", std::move(frames)}};
    std::ofstream out(path);
    if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
    out << j.dump() << '\n';
    if (!out) fail(ErrorKind::Io, "write failed: " + path.string());
}

MotionSequence load_motion(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Io, "cannot read " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
    MotionSequence m;
    try {
        require(j.value("format", "") == "freetalk-motion", ErrorKind::Format, path.string() + ": not a motion file");
        m.fps = j.at("fps").get<double>();
        m.emotion = j.at("emotion").get<std::string>();
        m.intensity = j.at("intensity").get<int>();
        const int n = j.at("landmarks").get<int>();
        const auto& frames = j.at("displacements");
        require(frames.size() == j.at("frames").get<std::size_t>() && !frames.empty(), ErrorKind::Validation,
                path.string() + ": frame count mismatch");
        m.displacements.resize(Eigen::Index(frames.size()), 3 * n);
        for (std::size_t t = 0; t < frames.size(); ++t) {
            require(frames[t].size() == std::size_t(3 * n), ErrorKind::Validation,
                    path.string() + ": frame " + std::to_string(t) + " has the wrong width");
            for (int c = 0; c < 3 * n; ++c) m.displacements(Eigen::Index(t), c) = frames[t][std::size_t(c)].get<double>();
        }
    } catch (const json::exception& e) {
        fail(ErrorKind::Parse, path.string() + ": " + e.what());
    }
    return m;
}

json to_json(const AnimateConfig& c)
{
    return {{"audio", c.audio.string()},
            {"emotion", c.emotion},
            {"intensity", c.intensity},
            {"mesh", c.mesh.string()},
            {"landmark_spec", c.landmark_spec.string()},
            {"ats_checkpoint", c.ats_checkpoint.string()},
            {"stm_checkpoint", c.stm_checkpoint.string()},
            {"landmarks", c.landmarks ? json(c.landmarks->string()) : json(nullptr)},
            {"out", c.out.string()},
            {"seed", c.seed},
            {"workers", c.workers},
            {"ddim_steps", c.ddim_steps},
            {"band_radius", c.band_radius ? json(*c.band_radius) : json(nullptr)},
            {"format", to_string(c.format)},
            {"dump_attention", c.dump_attention}};
}

AnimateConfig animate_config_from_json(const json& j)
{
    AnimateConfig c;
    c.audio = j.value("audio", std::string());
    c.emotion = j.value("emotion", c.emotion);
    c.intensity = j.value("intensity", c.intensity);
    c.mesh = j.value("mesh", std::string());
    c.landmark_spec = j.value("landmark_spec", std::string());
    c.ats_checkpoint = j.value("ats_checkpoint", std::string());
    c.stm_checkpoint = j.value("stm_checkpoint", std::string());
    if (j.contains("landmarks") && !j.at("landmarks").is_null()) c.landmarks = j.at("landmarks").get<std::string>();
    c.out = j.value("out", std::string());
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    c.ddim_steps = j.value("ddim_steps", c.ddim_steps);
    if (j.contains("band_radius") && !j.at("band_radius").is_null()) c.band_radius = j.at("band_radius").get<int>();
    if (j.contains("format")) c.format = export_format_from_string(j.at("format").get<std::string>());
    c.dump_attention = j.value("dump_attention", c.dump_attention);
    return c;
}

MotionSequence sample_motion(const AnimateConfig& config)
{
    const AtsCheckpoint ckpt = load_ats_checkpoint(config.ats_checkpoint);
    const ats::Denoiser& model = *ckpt.model;
    const auto& vocab = model.vocabulary();
    require(vocab.contains(config.emotion), ErrorKind::Config,
            "emotion \"" + config.emotion + "\" is not in the ATS checkpoint vocabulary");
    const ats::AffectLabel affect{vocab.emotion_id(config.emotion), config.intensity};
    ats::validate(affect, vocab);

    const audio::Waveform wave = audio::load_wav(config.audio);
    const audio::AudioFeatures feats = cached_audio_features(config.audio, ckpt.features);
    const Eigen::MatrixXd aligned = audio::resample_to_frames(feats, ckpt.fps, wave.duration()).matrix;
    require(aligned.rows() >= 1, ErrorKind::Validation, config.audio.string() + ": audio shorter than one frame");
    require(aligned.cols() == model.config().audio_channels, ErrorKind::Config,
            "audio feature width differs from the ATS checkpoint");
    require(aligned.rows() <= model.config().max_frames, ErrorKind::Config,
            "audio spans " + std::to_string(aligned.rows()) + " frames; the ATS model supports " +
                std::to_string(model.config().max_frames));

    ats::SamplerConfig sampler;
    sampler.ddim_steps = config.ddim_steps;
    sampler.band_radius = config.band_radius;
    sampler.seed = config.seed;
    const Eigen::MatrixXd x0 = ats::ddim_sample(model, ckpt.normalize_audio(aligned), affect, ckpt.schedule, sampler);
    for (Eigen::Index i = 0; i < x0.size(); ++i)
        if (!std::isfinite(x0.data()[i])) fail(ErrorKind::Numerical, "ATS sampling produced non-finite values");

    MotionSequence motion;
    motion.fps = ckpt.fps;
    motion.emotion = config.emotion;
    motion.intensity = config.intensity;
    motion.displacements = ckpt.denormalize_motion(x0);
    return motion;
}

namespace {

void write_attention(const std::vector<Eigen::MatrixXd>& weights, const fs::path& dir)
{
    fs::create_directories(dir);
    for (std::size_t t = 0; t < weights.size(); ++t) {
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = weights[t].cast<float>();
        char name[32];
        std::snprintf(name, sizeof name, "frame_%04zu.bin", t);
        std::ofstream out(dir / name, std::ios::binary);
        out.write(reinterpret_cast<const char*>(w.data()), std::streamsize(w.size() * sizeof(float)));
        if (!out) fail(ErrorKind::Io, "cannot write " + (dir / name).string());
    }
    const json meta = {{"frames", weights.size()},
                       {"rows", weights.empty() ? 0 : weights[0].rows()},
                       {"cols", weights.empty() ? 0 : weights[0].cols()},
                       {"dtype", "float32"},
                       {"layout", "row-major vertices x landmarks, heads averaged"}};
    std::ofstream(dir / "attention.json") << meta.dump(2) << '\n';
}

} // namespace

AnimateResult animate(const AnimateConfig& config)
{
    const mesh::Mesh mesh = mesh::load_mesh(config.mesh);
    const mesh::LandmarkSpec spec = mesh::load_landmark_spec(config.landmark_spec);
    mesh::validate(spec, mesh);
    const StmCheckpoint stm = load_stm_checkpoint(config.stm_checkpoint);
    require(stm.model->config().landmarks == spec.size(), ErrorKind::Config,
            "STM checkpoint expects " + std::to_string(stm.model->config().landmarks) + " landmarks, spec has " +
                std::to_string(spec.size()));

    AnimateResult result;
    if (config.landmarks) {
        result.motion = load_motion(*config.landmarks);
    } else {
        result.motion = sample_motion(config);
    }
    require(result.motion.landmarks() == spec.size(), ErrorKind::Config,
            "landmark motion has " + std::to_string(result.motion.landmarks()) + " landmarks, spec has " +
                std::to_string(spec.size()));

    fs::create_directories(config.out);
    result.landmarks_file = config.out / "landmarks.json";
    save_motion(result.motion, result.landmarks_file);

    const mesh::SurfaceOperators ops =
        cached_operators(mesh, stm::model_operator_options(stm.model->config(), mesh.num_vertices()));
    for (const auto& w : ops.warnings) log_warn(config.mesh.string() + ": " + w);
    const stm::StmResult out = stm::stm_forward(*stm.model, mesh, ops, result.motion.displacements, config.dump_attention);
    result.vertex_displacements = out.displacements;
    for (Eigen::Index i = 0; i < out.displacements.size(); ++i)
        if (!std::isfinite(out.displacements.data()[i])) fail(ErrorKind::Numerical, "STM produced non-finite vertices");

    Eigen::MatrixXd positions = out.displacements;
    const Eigen::RowVectorXd rest = mesh.vertices.reshaped<Eigen::RowMajor>().transpose();
    positions.rowwise() += rest;
    result.mesh_dir = config.out / "meshes";
    fs::create_directories(result.mesh_dir);
    result.files = export_sequence(make_packed(positions, mesh.faces), config.format, result.mesh_dir, config.workers);
    if (config.dump_attention) write_attention(out.attention, config.out / "attention");
    log_info("animate: " + std::to_string(result.motion.frames()) + " frames written to " + result.mesh_dir.string());
    return result;
}

} // namespace freetalk::pipeline
