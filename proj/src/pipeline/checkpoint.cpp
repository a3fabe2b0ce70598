#include <freetalk/error.hpp>
#include <freetalk/nn/archive.hpp>
#include <freetalk/pipeline/cache.hpp>
#include <freetalk/pipeline/checkpoint.hpp>

namespace freetalk::pipeline {

using nlohmann::json;

namespace {

json row3(const Eigen::RowVector3d& v) { return json::array({v(0), v(1), v(2)}); }

Eigen::RowVector3d get_row3(const json& j)
{
    const auto v = j.get<std::vector<double>>();
    require(v.size() == 3, ErrorKind::Format, "expected a 3-vector in checkpoint header");
    return {v[0], v[1], v[2]};
}

} // namespace

Eigen::MatrixXd scale_axes(const Eigen::MatrixXd& trajectory, const Eigen::RowVector3d& factor)
{
    require(trajectory.cols() % 3 == 0, ErrorKind::Shape, "trajectory width must be a multiple of 3");
    Eigen::MatrixXd out = trajectory;
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) *= factor(j % 3);
    return out;
}

Eigen::MatrixXd AtsCheckpoint::normalize_audio(const Eigen::MatrixXd& f) const
{
    require(f.cols() == audio_mean.size(), ErrorKind::Shape,
            "audio features have " + std::to_string(f.cols()) + " channels, checkpoint expects " +
                std::to_string(audio_mean.size()));
    return (f.rowwise() - audio_mean).array().rowwise() / audio_std.array();
}

Eigen::MatrixXd AtsCheckpoint::denormalize_motion(const Eigen::MatrixXd& x0) const { return scale_axes(x0, motion_std); }

void save_ats_checkpoint(const AtsCheckpoint& c, const std::filesystem::path& path)
{
    require(c.model != nullptr, ErrorKind::Validation, "no model to save");
    nn::Archive a;
    const auto& cfg = c.model->config();
    a.header = {{"kind", "ats"},
                {"config", ats::to_json(cfg)},
                {"schedule", {{"steps", c.schedule.steps()}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
                {"vocabulary", ats::to_json(c.model->vocabulary())},
                {"features", to_json(c.features)},
                {"normalization", {{"motion_std", row3(c.motion_std)}}},
                {"fps", c.fps},
                {"dataset_id", c.dataset_id},
                {"fingerprint",
                 {{"landmarks", cfg.landmarks}, {"motion_dim", cfg.motion_dim()}, {"audio_channels", cfg.audio_channels}}}};
    a.tensors["norm.audio_mean"] = c.audio_mean;
    a.tensors["norm.audio_std"] = c.audio_std;
    nn::store_parameters(c.model->params(), "", a);
    nn::save_archive(a, path);
}

AtsCheckpoint load_ats_checkpoint(const std::filesystem::path& path)
{
    const nn::Archive a = nn::load_archive(path);
    require(a.header.value("kind", "") == "ats", ErrorKind::Format, path.string() + " is not an ATS checkpoint");
    AtsCheckpoint c;
    try {
        const auto cfg = ats::ats_config_from_json(a.header.at("config"));
        const auto vocab = ats::vocabulary_from_json(a.header.at("vocabulary"));
        c.model = std::make_unique<ats::Denoiser>(cfg, vocab, 0);
        const auto& s = a.header.at("schedule");
        c.beta_start = s.at("beta_start").get<double>();
        c.beta_end = s.at("beta_end").get<double>();
        c.schedule = ats::make_schedule(s.at("steps").get<int>(), c.beta_start, c.beta_end);
        c.features = feature_config_from_json(a.header.at("features"));
        c.motion_std = get_row3(a.header.at("normalization").at("motion_std"));
        c.fps = a.header.at("fps").get<double>();
        c.dataset_id = a.header.value("dataset_id", "");
        c.audio_mean = a.tensors.at("norm.audio_mean");
        c.audio_std = a.tensors.at("norm.audio_std");
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, path.string() + ": malformed checkpoint header: " + e.what());
    } catch (const std::out_of_range&) {
        fail(ErrorKind::Format, path.string() + ": checkpoint lacks normalization tensors");
    }
    nn::load_parameters(c.model->params(), "", a);
    return c;
}

void save_stm_checkpoint(const StmCheckpoint& c, const std::filesystem::path& path)
{
    require(c.model != nullptr, ErrorKind::Validation, "no model to save");
    nn::Archive a;
    const auto& g = c.model->graph();
    json edges = json::array();
    for (auto [i, j] : g.edges) edges.push_back({i, j});
    a.header = {{"kind", "stm"},
                {"config", stm::to_json(c.model->config())},
                {"graph", {{"nodes", g.num_nodes}, {"edges", edges}}},
                {"scale", row3(c.model->scale)},
                {"diffusion_time", c.diffusion_time},
                {"dataset_id", c.dataset_id},
                {"fingerprint", {{"landmarks", c.model->config().landmarks}, {"graph_edges", g.edges.size()}}}};
    nn::store_parameters(c.model->params(), "", a);
    nn::save_archive(a, path);
}

StmCheckpoint load_stm_checkpoint(const std::filesystem::path& path)
{
    const nn::Archive a = nn::load_archive(path);
    require(a.header.value("kind", "") == "stm", ErrorKind::Format, path.string() + " is not an STM checkpoint");
    StmCheckpoint c;
    try {
        const auto cfg = stm::stm_config_from_json(a.header.at("config"));
        mesh::LandmarkGraph g;
        g.num_nodes = a.header.at("graph").at("nodes").get<int>();
        for (const auto& e : a.header.at("graph").at("edges")) g.edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        c.diffusion_time = a.header.at("diffusion_time").get<double>();
        c.model = std::make_unique<stm::StmModel>(cfg, std::move(g), c.diffusion_time, 0);
        c.model->scale = get_row3(a.header.at("scale"));
        c.dataset_id = a.header.value("dataset_id", "");
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, path.string() + ": malformed checkpoint header: " + e.what());
    }
    nn::load_parameters(c.model->params(), "", a);
    return c;
}

} // namespace freetalk::pipeline
