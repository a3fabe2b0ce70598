#include <freetalk/error.hpp>
#include <freetalk/pipeline/evaluate.hpp>
#include <freetalk/pipeline/json_schema.hpp>
#include <freetalk/pipeline/log.hpp>
#include <freetalk/pipeline/schemas.hpp>
#include <freetalk/pipeline/workers.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>

namespace freetalk::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

json to_json(const EvaluateConfig& c)
{
    return {{"dataset", c.dataset.string()},
            {"predictions", c.predictions.string()},
            {"split", c.split},
            {"sequences", c.sequences},
            {"out", c.out.string()},
            {"workers", c.workers},
            {"regions", {{"mouth", c.regions.mouth}, {"upper_face", c.regions.upper_face}, {"lips", c.regions.lips}}}};
}

EvaluateConfig evaluate_config_from_json(const json& j)
{
    EvaluateConfig c;
    c.dataset = j.value("dataset", std::string());
    c.predictions = j.value("predictions", std::string());
    c.split = j.value("split", c.split);
    c.sequences = j.value("sequences", c.sequences);
    c.out = j.value("out", std::string());
    c.workers = j.value("workers", c.workers);
    if (j.contains("regions")) {
        const auto& r = j.at("regions");
        c.regions.mouth = r.value("mouth", c.regions.mouth);
        c.regions.upper_face = r.value("upper_face", c.regions.upper_face);
        c.regions.lips = r.value("lips", c.regions.lips);
    }
    return c;
}

metrics::RegionMasks region_masks(const mesh::LandmarkSpec& spec, const RegionNames& names)
{
    const auto get = [&](const std::string& name) {
        const auto it = spec.regions.find(name);
        require(it != spec.regions.end() && !it->second.empty(), ErrorKind::Validation,
                "region mask \"" + name + "\" is missing from the landmark spec");
        return it->second;
    };
    return {get(names.mouth), get(names.upper_face), get(names.lips)};
}

SequenceEvaluation evaluate_sequence(const LoadedSequence& truth, const PackedSequence& prediction,
                                     const RegionNames& regions)
{
    const std::string& id = truth.bundle.id;
    require(truth.vertex_displacements.has_value(), ErrorKind::Validation, id + ": ground truth has no vertex frames");
    const Eigen::Index n = truth.template_mesh.num_vertices();
    require(prediction.num_points() == n, ErrorKind::Validation,
            id + ": prediction has " + std::to_string(prediction.num_points()) + " vertices, ground truth " +
                std::to_string(n));
    require(prediction.faces.rows() == 0 || prediction.faces == truth.template_mesh.faces, ErrorKind::Validation,
            id + ": prediction connectivity differs from the template");
    const metrics::RegionMasks masks = region_masks(truth.spec, regions);

    SequenceEvaluation e;
    e.id = id;
    e.vertices = n;
    const Eigen::Index T_gt = truth.vertex_displacements->rows();
    e.frames = std::min(T_gt, prediction.num_frames());
    require(e.frames >= 1, ErrorKind::Validation, id + ": empty prediction");
    if (T_gt != prediction.num_frames()) {
        e.truncated = true;
        log_warn(id + ": prediction has " + std::to_string(prediction.num_frames()) + " frames, ground truth " +
                 std::to_string(T_gt) + "; truncating to " + std::to_string(e.frames));
    }
    const Eigen::RowVectorXd rest =
        round_to_float(truth.template_mesh.vertices).reshaped<Eigen::RowMajor>().transpose();
    metrics::TrajectoryPair pair;
    pair.truth = truth.vertex_displacements->topRows(e.frames);
    pair.prediction = prediction.frames.topRows(e.frames).cast<double>();
    pair.prediction.rowwise() -= rest;
    e.report = metrics::evaluate_metrics(pair, masks);
    return e;
}

json to_json(const SequenceEvaluation& e)
{
    json m = json::object();
    for (const auto& [name, value] : metrics::report_fields(e.report)) m[name] = value;
    return {{"sequence", e.id}, {"frames", e.frames}, {"vertices", e.vertices}, {"truncated", e.truncated},
            {"metrics", m}};
}

CorpusSummary summarize(std::vector<SequenceEvaluation> sequences)
{
    CorpusSummary s;
    s.sequences = std::move(sequences);
    if (s.sequences.empty()) return s;
    const auto fields = [](metrics::MetricReport& r) {
        return std::array<double*, 7>{&r.lve, &r.mve, &r.fdd, &r.dtw, &r.dfd, &r.delta_m, &r.delta_cd};
    };
    const double count = double(s.sequences.size());
    auto mean = fields(s.mean);
    auto sd = fields(s.stdev);
    for (auto& e : s.sequences) {
        auto v = fields(e.report);
        for (std::size_t k = 0; k < v.size(); ++k) *mean[k] += *v[k] / count;
    }
    for (auto& e : s.sequences) {
        auto v = fields(e.report);
        for (std::size_t k = 0; k < v.size(); ++k) *sd[k] += (*v[k] - *mean[k]) * (*v[k] - *mean[k]) / count;
    }
    for (double* v : sd) *v = std::sqrt(*v);
    return s;
}

CorpusSummary evaluate(const EvaluateConfig& config)
{
    const Manifest manifest = load_manifest(config.dataset);
    const std::vector<std::string> ids = config.sequences.empty() ? manifest.split(config.split) : config.sequences;
    require(!ids.empty(), ErrorKind::Config, "no sequences to evaluate");
    fs::create_directories(config.out);

    std::vector<SequenceEvaluation> results(ids.size());
    parallel_for(ids.size(), config.workers, [&](std::size_t k) {
        const LoadedSequence truth = load_sequence(load_bundle(manifest.bundle_path(ids[k])), true);
        fs::path dir = config.predictions / ids[k];
        if (fs::is_directory(dir / "meshes")) dir /= "meshes";
        require(fs::is_directory(dir), ErrorKind::Io, "missing prediction directory " + dir.string());
        results[k] = evaluate_sequence(truth, import_sequence(dir), config.regions);
        const json report = to_json(results[k]);
        validate_schema(report, schema("metric_report"), ids[k] + " metric report");
        std::ofstream out(config.out / (ids[k] + ".json"));
        out << report.dump(2) << '\n';
        if (!out) fail(ErrorKind::Io, "cannot write report for " + ids[k]);
    });

    CorpusSummary s = summarize(std::move(results));
    s.csv = config.out / "metrics.csv";
    std::ofstream csv(s.csv);
    if (!csv) fail(ErrorKind::Io, "cannot write " + s.csv.string());
    csv << "metric,mean,std,sequences\n" << std::setprecision(12);
    const auto mean = metrics::report_fields(s.mean);
    const auto sd = metrics::report_fields(s.stdev);
    for (std::size_t k = 0; k < mean.size(); ++k)
        csv << mean[k].first << ',' << mean[k].second << ',' << sd[k].second << ',' << s.sequences.size() << '\n';
    log_info("evaluate: " + std::to_string(s.sequences.size()) + " sequences, report in " + config.out.string());
    return s;
}

} // namespace freetalk::pipeline
