#pragma once

#include <freetalk/metrics/motion.hpp>
#include <freetalk/pipeline/dataset.hpp>
#include <freetalk/pipeline/seqio.hpp>

#include <json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace freetalk::pipeline {

/// Names of the landmark-spec regions the metrics read.
struct RegionNames {
    std::string mouth = "mouth";
    std::string upper_face = "upper_face";
    std::string lips = "lips";
};

struct EvaluateConfig {
    std::filesystem::path dataset;
    /// Holds one directory per sequence id with an exported sequence, either
    /// directly or in a meshes/ subdirectory (as animate writes it).
    std::filesystem::path predictions;
    std::string split = "test";
    std::vector<std::string> sequences;  // overrides split when nonempty
    std::filesystem::path out;
    int workers = 1;
    RegionNames regions;
};

nlohmann::json to_json(const EvaluateConfig& config);
EvaluateConfig evaluate_config_from_json(const nlohmann::json& j);

metrics::RegionMasks region_masks(const mesh::LandmarkSpec& spec, const RegionNames& names);

struct SequenceEvaluation {
    std::string id;
    Eigen::Index frames = 0;
    Eigen::Index vertices = 0;
    bool truncated = false;
    metrics::MetricReport report;
};

/// Metrics of a predicted vertex sequence against a loaded ground truth.
/// Frame counts are truncated to the minimum (with a warning); vertex count
/// and connectivity must match.
SequenceEvaluation evaluate_sequence(const LoadedSequence& truth, const PackedSequence& prediction,
                                     const RegionNames& regions);

nlohmann::json to_json(const SequenceEvaluation& e);

struct CorpusSummary {
    std::vector<SequenceEvaluation> sequences;
    metrics::MetricReport mean;
    metrics::MetricReport stdev;  // population std over sequences
    std::filesystem::path csv;
};

CorpusSummary summarize(std::vector<SequenceEvaluation> sequences);

/// Writes <out>/<id>.json per sequence (schema-checked) and <out>/metrics.csv
/// with the corpus mean and std of each metric.
CorpusSummary evaluate(const EvaluateConfig& config);

} // namespace freetalk::pipeline
