#include "oracles.hpp"

#include <freetalk/error.hpp>
#include <freetalk/mesh/mesh.hpp>
#include <freetalk/pipeline/animate.hpp>
#include <freetalk/pipeline/checkpoint.hpp>
#include <freetalk/pipeline/dataset.hpp>
#include <freetalk/pipeline/evaluate.hpp>
#include <freetalk/pipeline/json_schema.hpp>
#include <freetalk/pipeline/schemas.hpp>
#include <freetalk/pipeline/seqio.hpp>
#include <freetalk/pipeline/synth.hpp>
#include <freetalk/pipeline/train.hpp>
#include <freetalk/pipeline/workers.hpp>

#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iterator>

using namespace freetalk;
using namespace freetalk::pipeline;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name)
{
    const fs::path d = fs::temp_directory_path() / "freetalk_test_pipeline" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string read_bytes(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SyntheticDatasetSpec small_spec(std::uint64_t seed = 7)
{
    SyntheticDatasetSpec s;
    s.sequences_per_identity = 3;
    s.min_duration = 0.4;
    s.max_duration = 0.5;
    s.mesh_frequency = 8;
    s.remesh_levels = {};
    s.seed = seed;
    return s;
}

// A dataset written once and shared by the training / animation tests.
const fs::path& shared_dataset()
{
    static const fs::path dir = [] {
        const fs::path d = fresh_dir("shared");
        write_synthetic(generate_synthetic(small_spec()), d / "data");
        return d / "data";
    }();
    return dir;
}

AtsTrainConfig tiny_ats(const fs::path& out)
{
    AtsTrainConfig c;
    c.dataset = shared_dataset();
    c.out = out;
    c.model.d_model = 16;
    c.model.heads = 2;
    c.model.layers = 1;
    c.model.ff_dim = 32;
    c.diffusion_steps = 50;
    c.epochs = 1;
    c.batch_size = 2;
    c.features.n_mels = 16;
    return c;
}

StmTrainConfig tiny_stm(const fs::path& out)
{
    StmTrainConfig c;
    c.dataset = shared_dataset();
    c.out = out;
    auto& m = c.model;
    m.encoder_width = m.feature_dim = m.decoder_width = m.gcn_hidden = m.landmark_dim = m.attention_dim = 8;
    m.encoder_blocks = m.decoder_blocks = 1;
    m.gcn_layers = 1;
    m.positional_dim = 4;
    m.heads = 2;
    m.spectral_k = 16;
    c.epochs = 1;
    c.window = 8;
    return c;
}

} // namespace

TEST_CASE("JSON schema subset")
{
    const json schema = json::parse(R"({
        "type": "object",
        "properties": {
            "a": {"type": "integer", "minimum": 1},
            "b": {"enum": ["x", "y"]},
            "c": {"type": "array", "items": {"type": "number"}, "maxItems": 2},
            "d": {"$ref": "#/definitions/pos"},
            "e": {"anyOf": [{"type": "null"}, {"type": "string", "minLength": 2}]}
        },
        "required": ["a"],
        "additionalProperties": false,
        "definitions": {"pos": {"type": "number", "exclusiveMinimum": 0}}
    })");
    CHECK(schema_errors(json::parse(R"({"a": 2, "b": "x", "c": [1, 2.5], "d": 0.1, "e": null})"), schema).empty());
    CHECK(schema_errors(json::parse(R"({"b": "x"})"), schema).size() == 1);
    CHECK(schema_errors(json::parse(R"({"a": 0})"), schema).size() == 1);
    CHECK(schema_errors(json::parse(R"({"a": 1.5})"), schema).size() == 1);
    CHECK(schema_errors(json::parse(R"({"a": 1, "b": "z"})"), schema).size() == 1);
    CHECK(schema_errors(json::parse(R"({"a": 1, "c": [1, 2, 3]})"), schema).size() == 1);
    CHECK(schema_errors(json::parse(R"({"a": 1, "d": 0})"), schema).size() == 1);
    CHECK(schema_errors(json::parse(R"({"a": 1, "e": "x"})"), schema).size() == 1);
    CHECK(schema_errors(json::parse(R"({"a": 1, "zzz": 1})"), schema).size() == 1);
    CHECK_THROWS_AS(validate_schema(json::parse(R"({"a": "1"})"), schema, "test"), Error);
    try {
        validate_schema(json::parse(R"({"a": "1"})"), schema, "test");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Config);
    }
}

TEST_CASE("published schemas accept the default configs")
{
    for (const auto& name : schema_names()) CHECK(schema(name).is_object());
    CHECK(schema_errors(to_json(small_spec()), schema("synth")).empty());
    CHECK(schema_errors(to_json(AtsTrainConfig{}), schema("ats_train")).empty());
    CHECK(schema_errors(to_json(StmTrainConfig{}), schema("stm_train")).empty());
    CHECK(schema_errors(to_json(AnimateConfig{}), schema("animate")).empty());
    CHECK(schema_errors(to_json(EvaluateConfig{}), schema("evaluate")).empty());
    CHECK_FALSE(schema_errors(json{{"batch_size", 0}}, schema("ats_train")).empty());
    CHECK_FALSE(schema_errors(json{{"model", {{"variant", "gcn"}}}}, schema("stm_train")).empty());

    const AtsTrainConfig a = ats_train_config_from_json(to_json(tiny_ats("x")));
    CHECK(a.model.d_model == 16);
    CHECK(a.features.n_mels == 16);
    CHECK(a.diffusion_steps == 50);
    const StmTrainConfig s = stm_train_config_from_json(to_json(tiny_stm("y")));
    CHECK(s.model.spectral_k == 16);
    CHECK(s.window == 8);
}

TEST_CASE("packed sequence format")
{
    const fs::path d = fresh_dir("packed");
    std::mt19937_64 rng(1);
    mesh::Faces faces(2, 3);
    faces << 0, 1, 2, 2, 1, 3;
    const PackedSequence seq = make_packed(oracle::random_matrix(3, 12, rng), faces);
    save_packed(seq, d / "s.ftk");
    const PackedSequence back = load_packed(d / "s.ftk");
    CHECK(back.faces == faces);
    CHECK(back.frames == seq.frames);
    CHECK(read_bytes(d / "s.ftk").substr(0, 4) == "FTK1");
    CHECK(fs::file_size(d / "s.ftk") == 16 + 2 * 12 + 3 * 12 * 4);

    std::string bytes = read_bytes(d / "s.ftk");
    bytes[0] = 'X';
    std::ofstream(d / "bad.ftk", std::ios::binary) << bytes;
    try {
        load_packed(d / "bad.ftk");
        FAIL("expected a format error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Format);
    }
    std::ofstream(d / "short.ftk", std::ios::binary) << read_bytes(d / "s.ftk").substr(0, 30);
    CHECK_THROWS_AS(load_packed(d / "short.ftk"), Error);
}

TEST_CASE("exported sequences re-import")
{
    std::mt19937_64 rng(2);
    mesh::Faces faces(2, 3);
    faces << 0, 1, 2, 2, 1, 3;
    const PackedSequence seq = make_packed(oracle::random_matrix(3, 12, rng), faces);
    for (ExportFormat f : {ExportFormat::Obj, ExportFormat::Ply, ExportFormat::Packed}) {
        const fs::path d = fresh_dir("export_" + to_string(f));
        const auto files = export_sequence(seq, f, d, 2);
        CHECK(files.size() == (f == ExportFormat::Packed ? 1u : 3u));
        const PackedSequence back = import_sequence(d);
        CHECK(back.faces == faces);
        CHECK(back.frames == seq.frames);  // float32 coordinates survive every format
    }
    const fs::path one = fresh_dir("export_one");
    export_sequence(make_packed(oracle::random_matrix(1, 12, rng), faces), ExportFormat::Obj, one);
    CHECK(mesh::load_mesh(one / "frame_0000.obj").faces == faces);
    CHECK_THROWS_AS(export_format_from_string("fbx"), Error);
}

TEST_CASE("worker pool")
{
    std::atomic<int> total{0};
    parallel_for(100, 3, [&](std::size_t i) { total += int(i); });
    CHECK(total == 4950);
    CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) {
                        if (i == 7) fail(ErrorKind::Io, "boom");
                    }),
                    Error);
    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(1, 3));
}

TEST_CASE("synthetic data is deterministic")
{
    const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
    SyntheticDatasetSpec spec = small_spec(11);
    spec.remesh_levels = {1};
    write_synthetic(generate_synthetic(spec), a, 1);
    write_synthetic(generate_synthetic(spec), b, 3);
    std::size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        const fs::path rel = fs::relative(e.path(), a);
        CHECK_MESSAGE(read_bytes(e.path()) == read_bytes(b / rel), rel.string());
        ++files;
    }
    CHECK(files > 10);
    const Manifest m = load_manifest(a);
    CHECK(m.split("test_remesh1").size() == 1);
}

TEST_CASE("silent neutral audio gives no landmark motion")
{
    SyntheticDatasetSpec spec = small_spec(12);
    spec.audio_amplitude = 0.0;
    spec.emotions = {"neutral"};
    spec.emotion_fields = {{"neutral", {}}};
    const SyntheticDataset data = generate_synthetic(spec);
    for (const auto& s : data.sequences) {
        CHECK(s.landmark_displacements.cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.vertex_displacements.cwiseAbs().maxCoeff() == 0.0);
    }
    const fs::path d = fresh_dir("silent");
    write_synthetic(data, d);
    const Manifest m = load_manifest(d);
    for (const auto& [id, path] : m.sequences) {
        const LoadedSequence s = load_sequence(load_bundle(m.bundle_path(id)), true);
        CHECK(s.landmark_displacements.cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.vertex_displacements->cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("emotion offsets separate happy from sad")
{
    SyntheticDatasetSpec spec = small_spec(13);
    spec.sequences_per_identity = 4;
    spec.sequence_emotions = {"happy", "sad"};
    spec.shared_audio = true;
    const SyntheticDataset data = generate_synthetic(spec);
    const auto& happy = data.sequences[0];
    const auto& sad = data.sequences[1];
    REQUIRE(happy.emotion == "happy");
    REQUIRE(sad.emotion == "sad");
    REQUIRE(happy.audio.samples == sad.audio.samples);
    const auto upper_mean = [](const Eigen::MatrixXd& traj) {
        Eigen::RowVector3d m = Eigen::RowVector3d::Zero();
        for (int k : upper_face_landmarks()) m += traj.middleCols(3 * k, 3).colwise().mean();
        return Eigen::RowVector3d(m / double(upper_face_landmarks().size()));
    };
    const double scale = double(happy.intensity) / double(spec.max_intensity);
    const Eigen::MatrixXd field = scale * (emotion_offsets(spec, "happy") - emotion_offsets(spec, "sad"));
    Eigen::RowVector3d expected = Eigen::RowVector3d::Zero();
    for (int k : upper_face_landmarks()) expected += field.row(k);
    expected /= double(upper_face_landmarks().size());
    const Eigen::RowVector3d diff = upper_mean(happy.landmark_displacements) - upper_mean(sad.landmark_displacements);
    CHECK((diff - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(diff(1) > 0.0);  // happy raises the brows
}

TEST_CASE("dataset bundles are consistent")
{
    const Manifest m = load_manifest(shared_dataset());
    CHECK(m.landmarks == 68);
    CHECK(m.vocabulary.contains("neutral"));
    CHECK((m.landmark_std.array() > 0.0).all());
    for (const auto& [id, path] : m.sequences) {
        const SequenceBundle b = load_bundle(m.bundle_path(id));
        const LoadedSequence s = load_sequence(b, true);
        CHECK(s.frames() == audio_frames(b));
        CHECK(s.vertex_displacements->rows() == s.frames());
        CHECK(s.spec.size() == 68);
        CHECK(bundle_audio_features(b, audio::FeatureConfig{}, s.frames()).rows() == s.frames());
    }
    CHECK(reconcile_frames(10, 11, "x") == 10);
    CHECK_THROWS_AS(reconcile_frames(10, 12, "x"), Error);
}

TEST_CASE("ATS training smoke and determinism")
{
    const fs::path d = fresh_dir("ats");
    const TrainSummary a = train_ats(tiny_ats(d / "a"));
    CHECK(fs::exists(a.checkpoint));
    CHECK(fs::exists(a.last_checkpoint));
    std::ifstream log(a.log);
    int lines = 0;
    for (std::string line; std::getline(log, line);) ++lines;
    CHECK(lines == 2);  // header + one epoch
    const TrainSummary b = train_ats(tiny_ats(d / "b"));
    CHECK(a.final_loss == b.final_loss);
    CHECK(read_bytes(a.checkpoint) == read_bytes(b.checkpoint));

    const AtsCheckpoint ck = load_ats_checkpoint(a.checkpoint);
    CHECK(ck.model->config().d_model == 16);
    CHECK(ck.model->config().audio_channels == 16);
    CHECK(ck.schedule.steps() == 50);
    CHECK(ck.fps == 30.0);

    AtsTrainConfig bad = tiny_ats(d / "c");
    bad.train_split = "nope";
    CHECK_THROWS_AS(train_ats(bad), Error);
}

TEST_CASE("STM training, animation and evaluation")
{
    const fs::path d = fresh_dir("stm");
    const TrainSummary s = train_stm(tiny_stm(d / "stm"));
    CHECK(fs::exists(s.checkpoint));
    const TrainSummary s2 = train_stm(tiny_stm(d / "stm2"));
    CHECK(s.final_loss == s2.final_loss);
    const TrainSummary a = train_ats(tiny_ats(d / "ats"));

    const Manifest m = load_manifest(shared_dataset());
    const std::string id = m.split("test").at(0);
    const SequenceBundle b = load_bundle(m.bundle_path(id));
    AnimateConfig cfg;
    cfg.audio = b.resolve(b.audio);
    cfg.emotion = "happy";
    cfg.intensity = 2;
    cfg.mesh = b.resolve(b.template_mesh);
    cfg.landmark_spec = b.resolve(b.landmark_spec);
    cfg.ats_checkpoint = a.checkpoint;
    cfg.stm_checkpoint = s.checkpoint;
    cfg.ddim_steps = 5;
    cfg.seed = 3;
    cfg.format = ExportFormat::Packed;
    cfg.out = d / "anim1";
    const AnimateResult r1 = animate(cfg);
    cfg.out = d / "anim2";
    const AnimateResult r2 = animate(cfg);

    const Eigen::Index frames = audio_frames(b);
    CHECK(r1.motion.frames() == frames);
    const PackedSequence seq = import_sequence(r1.mesh_dir);
    CHECK(seq.num_frames() == frames);
    CHECK(seq.faces == mesh::load_mesh(cfg.mesh).faces);
    CHECK(read_bytes(r1.mesh_dir / "sequence.ftk") == read_bytes(r2.mesh_dir / "sequence.ftk"));

    // Feeding the written landmark file reproduces the in-process result.
    const MotionSequence loaded = load_motion(r1.landmarks_file);
    CHECK(loaded.displacements == r1.motion.displacements);
    cfg.landmarks = r1.landmarks_file;
    cfg.out = d / "anim3";
    const AnimateResult r3 = animate(cfg);
    CHECK(r3.vertex_displacements == r1.vertex_displacements);
    CHECK(read_bytes(r3.mesh_dir / "sequence.ftk") == read_bytes(r1.mesh_dir / "sequence.ftk"));

    cfg.landmarks.reset();
    cfg.emotion = "bored";
    CHECK_THROWS_AS(animate(cfg), Error);

    // Evaluation: ground truth scores zero; a frozen template scores delta_m = mean squared GT step.
    const LoadedSequence truth = load_sequence(b, true);
    const Eigen::MatrixXd rest = round_to_float(truth.template_mesh.vertices).reshaped<Eigen::RowMajor>().transpose();
    Eigen::MatrixXd gt_positions = *truth.vertex_displacements;
    gt_positions.rowwise() += Eigen::RowVectorXd(rest.row(0));
    const PackedSequence gt_seq = make_packed(gt_positions, truth.template_mesh.faces);
    const SequenceEvaluation same = evaluate_sequence(truth, gt_seq, {});
    for (const auto& [name, v] : metrics::report_fields(same.report)) CHECK_MESSAGE(std::abs(v) < 1e-6, name);

    const Eigen::MatrixXd frozen = rest.replicate(truth.frames(), 1);
    const SequenceEvaluation still = evaluate_sequence(truth, make_packed(frozen, truth.template_mesh.faces), {});
    const Eigen::MatrixXd& gt = *truth.vertex_displacements;
    const Eigen::Index n = truth.template_mesh.num_vertices();
    double expected = 0.0;
    for (Eigen::Index t = 0; t + 1 < gt.rows(); ++t) expected += (gt.row(t + 1) - gt.row(t)).squaredNorm();
    expected /= double((gt.rows() - 1) * n);
    CHECK(still.report.delta_m == doctest::Approx(expected).epsilon(1e-6));
    CHECK(schema_errors(to_json(still), schema("metric_report")).empty());

    const fs::path preds = d / "preds";
    export_sequence(gt_seq, ExportFormat::Packed, preds / id);
    EvaluateConfig ec;
    ec.dataset = shared_dataset();
    ec.predictions = preds;
    ec.out = d / "eval";
    const CorpusSummary summary = evaluate(ec);
    CHECK(summary.sequences.size() == 1);
    CHECK(fs::exists(ec.out / (id + ".json")));
    CHECK(fs::exists(ec.out / "metrics.csv"));
    ec.regions.mouth = "chin";
    CHECK_THROWS_AS(evaluate(ec), Error);
}
