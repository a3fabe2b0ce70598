#include <freetalk/ats/diffusion.hpp>
#include <freetalk/audio/wave.hpp>
#include <freetalk/error.hpp>
#include <freetalk/nn/motion_loss.hpp>
#include <freetalk/nn/optim.hpp>
#include <freetalk/pipeline/cache.hpp>
#include <freetalk/pipeline/checkpoint.hpp>
#include <freetalk/pipeline/dataset.hpp>
#include <freetalk/pipeline/log.hpp>
#include <freetalk/pipeline/train.hpp>
#include <freetalk/pipeline/workers.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

namespace freetalk::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json optim_json(const OptimConfig& o)
{
    return {{"lr", o.lr}, {"weight_decay", o.weight_decay}, {"grad_clip", o.grad_clip}};
}

OptimConfig optim_from_json(const json& j)
{
    OptimConfig o;
    o.lr = j.value("lr", o.lr);
    o.weight_decay = j.value("weight_decay", o.weight_decay);
    o.grad_clip = j.value("grad_clip", o.grad_clip);
    return o;
}

json loss_json(const metrics::LossWeights& w) { return {{"velocity", w.velocity}, {"acceleration", w.acceleration}}; }

metrics::LossWeights loss_from_json(const json& j, metrics::LossWeights w)
{
    w.velocity = j.value("velocity", w.velocity);
    w.acceleration = j.value("acceleration", w.acceleration);
    return w;
}

std::optional<long long> optional_steps(const json& j)
{
    if (!j.contains("max_steps") || j.at("max_steps").is_null()) return std::nullopt;
    return j.at("max_steps").get<long long>();
}

json steps_json(const std::optional<long long>& s) { return s ? json(*s) : json(nullptr); }

void check_finite(double loss, const std::string& where)
{
    if (!std::isfinite(loss)) fail(ErrorKind::Numerical, "non-finite training loss at " + where + "; aborting");
}

class CsvLog {
public:
    explicit CsvLog(const fs::path& path) : out_(path)
    {
        if (!out_) fail(ErrorKind::Io, "cannot write " + path.string());
        out_ << "epoch,steps,train_loss,train_position,train_velocity,train_acceleration,val_loss,grad_norm,seconds\n";
        out_ << std::setprecision(10);
    }

    void row(int epoch, long long steps, const metrics::MotionLossTerms& t, std::optional<double> val, double gnorm,
             double seconds)
    {
        out_ << epoch << ',' << steps << ',' << t.total << ',' << t.position << ',' << t.velocity << ','
             << t.acceleration << ',';
        if (val) out_ << *val;
        out_ << ',' << gnorm << ',' << seconds << '\n';
        out_.flush();
    }

private:
    std::ofstream out_;
};

void accumulate(metrics::MotionLossTerms& acc, const metrics::MotionLossTerms& t, double w)
{
    acc.position += w * t.position;
    acc.velocity += w * t.velocity;
    acc.acceleration += w * t.acceleration;
    acc.total += w * t.total;
}

double seconds_since(std::chrono::steady_clock::time_point start)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

json to_json(const AtsTrainConfig& c)
{
    return {{"module", "ats"},
            {"dataset", c.dataset.string()},
            {"out", c.out.string()},
            {"seed", c.seed},
            {"workers", c.workers},
            {"model", ats::to_json(c.model)},
            {"schedule", {{"steps", c.diffusion_steps}, {"beta_start", c.beta_start}, {"beta_end", c.beta_end}}},
            {"optimizer", optim_json(c.optim)},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"max_steps", steps_json(c.max_steps)},
            {"val_every", c.val_every},
            {"loss", loss_json(c.loss)},
            {"features", to_json(c.features)},
            {"train_split", c.train_split},
            {"val_split", c.val_split}};
}

AtsTrainConfig ats_train_config_from_json(const json& j)
{
    AtsTrainConfig c;
    c.dataset = j.value("dataset", std::string());
    c.out = j.value("out", std::string());
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("model")) c.model = ats::ats_config_from_json(j.at("model"));
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        c.diffusion_steps = s.value("steps", c.diffusion_steps);
        c.beta_start = s.value("beta_start", c.beta_start);
        c.beta_end = s.value("beta_end", c.beta_end);
    }
    if (j.contains("optimizer")) c.optim = optim_from_json(j.at("optimizer"));
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.max_steps = optional_steps(j);
    c.val_every = j.value("val_every", c.val_every);
    if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"), c.loss);
    if (j.contains("features")) c.features = feature_config_from_json(j.at("features"));
    c.train_split = j.value("train_split", c.train_split);
    c.val_split = j.value("val_split", c.val_split);
    return c;
}

json to_json(const StmTrainConfig& c)
{
    return {{"module", "stm"},
            {"dataset", c.dataset.string()},
            {"out", c.out.string()},
            {"seed", c.seed},
            {"workers", c.workers},
            {"model", stm::to_json(c.model)},
            {"optimizer", optim_json(c.optim)},
            {"epochs", c.epochs},
            {"window", c.window},
            {"batch_windows", c.batch_windows},
            {"max_steps", steps_json(c.max_steps)},
            {"val_every", c.val_every},
            {"loss", loss_json(c.loss)},
            {"train_split", c.train_split},
            {"val_split", c.val_split}};
}

StmTrainConfig stm_train_config_from_json(const json& j)
{
    StmTrainConfig c;
    c.dataset = j.value("dataset", std::string());
    c.out = j.value("out", std::string());
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("model")) c.model = stm::stm_config_from_json(j.at("model"));
    if (j.contains("optimizer")) c.optim = optim_from_json(j.at("optimizer"));
    c.epochs = j.value("epochs", c.epochs);
    c.window = j.value("window", c.window);
    c.batch_windows = j.value("batch_windows", c.batch_windows);
    c.max_steps = optional_steps(j);
    c.val_every = j.value("val_every", c.val_every);
    if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"), c.loss);
    c.train_split = j.value("train_split", c.train_split);
    c.val_split = j.value("val_split", c.val_split);
    return c;
}

Eigen::MatrixXd bundle_audio_features(const SequenceBundle& bundle, const audio::FeatureConfig& config,
                                      Eigen::Index frames)
{
    const fs::path wav = bundle.resolve(bundle.audio);
    const audio::Waveform w = audio::load_wav(wav);
    const audio::AudioFeatures feats = cached_audio_features(wav, config);
    Eigen::MatrixXd m = audio::resample_to_frames(feats, bundle.fps, w.duration()).matrix;
    require(m.rows() >= frames, ErrorKind::Validation,
            bundle.id + ": audio covers " + std::to_string(m.rows()) + " frames, need " + std::to_string(frames));
    return m.topRows(frames);
}

TrainSummary train_ats(const AtsTrainConfig& config)
{
    require(config.batch_size >= 1 && config.epochs >= 1 && config.val_every >= 1, ErrorKind::Config,
            "batch_size, epochs and val_every must be positive");
    const Manifest manifest = load_manifest(config.dataset);
    const auto& train_ids = manifest.split(config.train_split);
    const auto& val_ids = manifest.split(config.val_split);
    require(!train_ids.empty(), ErrorKind::Config, "training split \"" + config.train_split + "\" is empty");
    fs::create_directories(config.out);

    std::vector<std::string> ids = train_ids;
    ids.insert(ids.end(), val_ids.begin(), val_ids.end());
    std::vector<ats::AtsExample> examples(ids.size());
    std::vector<Eigen::MatrixXd> raw_audio(ids.size());
    parallel_for(ids.size(), config.workers, [&](std::size_t k) {
        const SequenceBundle b = load_bundle(manifest.bundle_path(ids[k]));
        const LoadedSequence s = load_sequence(b, false);
        require(s.spec.size() == manifest.landmarks, ErrorKind::Validation, b.id + ": landmark count differs from manifest");
        examples[k].x0 = scale_axes(s.landmark_displacements, manifest.landmark_std.cwiseInverse());
        raw_audio[k] = bundle_audio_features(b, config.features, s.frames());
        examples[k].affect = {manifest.vocabulary.emotion_id(b.emotion), b.intensity};
        ats::validate(examples[k].affect, manifest.vocabulary);
    });

    // Per-channel audio statistics over training frames.
    const Eigen::Index C = raw_audio[0].cols();
    Eigen::ArrayXd sum = Eigen::ArrayXd::Zero(C), sq = Eigen::ArrayXd::Zero(C);
    double count = 0.0;
    for (std::size_t k = 0; k < train_ids.size(); ++k) {
        sum += raw_audio[k].colwise().sum().transpose().array();
        sq += raw_audio[k].array().square().colwise().sum().transpose();
        count += double(raw_audio[k].rows());
    }
    const Eigen::ArrayXd mean = sum / count;
    Eigen::ArrayXd stdev = (sq / count - mean.square()).max(0.0).sqrt();
    stdev = (stdev > 1e-6).select(stdev, 1.0);

    AtsCheckpoint ckpt;
    ckpt.audio_mean = mean.transpose().matrix();
    ckpt.audio_std = stdev.transpose().matrix();
    for (std::size_t k = 0; k < ids.size(); ++k) examples[k].audio = ckpt.normalize_audio(raw_audio[k]);

    ats::AtsConfig mc = config.model;
    mc.landmarks = manifest.landmarks;
    mc.audio_channels = int(C);
    ckpt.model = std::make_unique<ats::Denoiser>(mc, manifest.vocabulary, derive_seed(config.seed, 1));
    ckpt.beta_start = config.beta_start;
    ckpt.beta_end = config.beta_end;
    ckpt.schedule = ats::make_schedule(config.diffusion_steps, config.beta_start, config.beta_end);
    ckpt.features = config.features;
    ckpt.motion_std = manifest.landmark_std;
    ckpt.fps = manifest.fps;
    ckpt.dataset_id = manifest.dataset_id;
    ats::Denoiser& model = *ckpt.model;
    log_info("ATS: " + std::to_string(train_ids.size()) + " training / " + std::to_string(val_ids.size()) +
             " validation sequences, " + std::to_string(model.params().num_values()) + " parameters");

    std::vector<const ats::AtsExample*> train, val;
    for (std::size_t k = 0; k < ids.size(); ++k) (k < train_ids.size() ? train : val).push_back(&examples[k]);

    std::mt19937_64 rng(derive_seed(config.seed, 2));
    std::mt19937_64 dropout_rng(derive_seed(config.seed, 3));
    std::mt19937_64 val_rng(derive_seed(config.seed, 4));
    const auto val_draws = val.empty() ? std::vector<ats::NoiseDraw>{} : ats::draw_noise(val, ckpt.schedule, val_rng);
    nn::AdamW opt({config.optim.lr, 0.9, 0.999, 1e-8, config.optim.weight_decay});

    TrainSummary summary;
    summary.checkpoint = config.out / "ats.ckpt";
    summary.last_checkpoint = config.out / "ats.last.ckpt";
    summary.log = config.out / "ats_train.csv";
    CsvLog log(summary.log);
    const auto start = std::chrono::steady_clock::now();
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    bool done = false;
    for (int epoch = 1; epoch <= config.epochs && !done; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        metrics::MotionLossTerms epoch_terms;
        double items = 0.0, gnorm = 0.0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += std::size_t(config.batch_size)) {
            std::vector<const ats::AtsExample*> batch;
            for (std::size_t k = b0; k < std::min(order.size(), b0 + std::size_t(config.batch_size)); ++k)
                batch.push_back(train[order[k]]);
            const auto draws = ats::draw_noise(batch, ckpt.schedule, rng);
            nn::Tape tape(true);
            tape.training = true;
            tape.rng = &dropout_rng;
            std::vector<metrics::MotionLossTerms> terms;
            const nn::Var loss = ats::ats_loss(tape, model, ckpt.schedule, batch, draws, config.loss, &terms);
            check_finite(loss.value()(0, 0), "epoch " + std::to_string(epoch) + ", step " + std::to_string(opt.steps() + 1));
            tape.backward(loss);
            gnorm = nn::clip_grad_norm(model.params(), config.optim.grad_clip);
            check_finite(gnorm, "gradient of epoch " + std::to_string(epoch));
            opt.step(model.params());
            model.params().zero_grad();
            for (const auto& t : terms) accumulate(epoch_terms, t, 1.0);
            items += double(terms.size());
            if (config.max_steps && opt.steps() >= *config.max_steps) {
                done = true;
                break;
            }
        }
        accumulate(epoch_terms, epoch_terms, 1.0 / items - 1.0);
        if (epoch == 1) {
            summary.first_epoch_loss = epoch_terms.total;
            summary.first_epoch_position = epoch_terms.position;
        }
        summary.final_loss = epoch_terms.total;
        summary.final_position = epoch_terms.position;

        std::optional<double> val_loss;
        const bool last = done || epoch == config.epochs;
        if (epoch % config.val_every == 0 || last) {
            double selection = epoch_terms.total;
            if (!val.empty()) {
                nn::Tape tape(false);
                selection = ats::ats_loss(tape, model, ckpt.schedule, val, val_draws, config.loss).value()(0, 0);
                check_finite(selection, "validation after epoch " + std::to_string(epoch));
                val_loss = selection;
            }
            if (selection < best) {
                best = selection;
                save_ats_checkpoint(ckpt, summary.checkpoint);
            }
        }
        log.row(epoch, opt.steps(), epoch_terms, val_loss, gnorm, seconds_since(start));
        summary.epochs = epoch;
    }
    summary.steps = opt.steps();
    summary.best_val_loss = best;
    save_ats_checkpoint(ckpt, summary.last_checkpoint);
    log_info("ATS: " + std::to_string(summary.steps) + " steps, final loss " + std::to_string(summary.final_loss));
    return summary;
}

namespace {

struct StmItem {
    std::size_t mesh = 0;
    Eigen::MatrixXd landmarks;  // T x 3N, normalized
    Eigen::MatrixXd vertices;   // T x 3n, normalized
};

struct StmMesh {
    mesh::Mesh mesh;
    mesh::SurfaceOperators ops;
};

double stm_eval_loss(const stm::StmModel& model, const std::vector<StmMesh>& meshes, const std::vector<StmItem>& items,
                     const metrics::LossWeights& weights)
{
    double total = 0.0;
    std::map<std::size_t, Eigen::MatrixXd> features;
    for (const auto& it : items) {
        auto f = features.find(it.mesh);
        if (f == features.end())
            f = features.emplace(it.mesh, model.encode_mesh(meshes[it.mesh].mesh, meshes[it.mesh].ops)).first;
        nn::Tape tape(false);
        const stm::MeshFeatures mf = model.prepare(tape, f->second);
        const Eigen::MatrixXd pred = model.forward_sequence(tape, meshes[it.mesh].ops, mf, it.landmarks).value();
        total += metrics::motion_loss({it.vertices, pred}, weights);
    }
    return total / double(items.size());
}

} // namespace

TrainSummary train_stm(const StmTrainConfig& config)
{
    require(config.epochs >= 1 && config.window >= 1 && config.batch_windows >= 1 && config.val_every >= 1,
            ErrorKind::Config, "epochs, window, batch_windows and val_every must be positive");
    const Manifest manifest = load_manifest(config.dataset);
    const auto& train_ids = manifest.split(config.train_split);
    const auto& val_ids = manifest.split(config.val_split);
    require(!train_ids.empty(), ErrorKind::Config, "training split \"" + config.train_split + "\" is empty");
    fs::create_directories(config.out);

    std::vector<std::string> ids = train_ids;
    ids.insert(ids.end(), val_ids.begin(), val_ids.end());
    std::vector<LoadedSequence> loaded(ids.size());
    parallel_for(ids.size(), config.workers, [&](std::size_t k) {
        loaded[k] = load_sequence(load_bundle(manifest.bundle_path(ids[k])), true);
        require(loaded[k].spec.size() == manifest.landmarks, ErrorKind::Validation,
                ids[k] + ": landmark count differs from manifest");
    });

    // One operator set per distinct template.
    std::vector<StmMesh> meshes;
    std::map<std::string, std::size_t> mesh_index;
    std::vector<StmItem> items(ids.size());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        const std::string key = loaded[k].bundle.resolve(loaded[k].bundle.template_mesh).lexically_normal().string();
        auto it = mesh_index.find(key);
        if (it == mesh_index.end()) {
            it = mesh_index.emplace(key, meshes.size()).first;
            meshes.push_back({loaded[k].template_mesh, {}});
        }
        items[k].mesh = it->second;
        const Eigen::RowVector3d inv = manifest.landmark_std.cwiseInverse();
        items[k].landmarks = scale_axes(loaded[k].landmark_displacements, inv);
        items[k].vertices = scale_axes(*loaded[k].vertex_displacements, inv);
    }
    parallel_for(meshes.size(), config.workers, [&](std::size_t m) {
        meshes[m].ops =
            cached_operators(meshes[m].mesh, stm::model_operator_options(config.model, meshes[m].mesh.num_vertices()));
        for (const auto& w : meshes[m].ops.warnings) log_warn("mesh " + std::to_string(m) + ": " + w);
    });

    const double edge = mesh::mean_edge_length(meshes[items[0].mesh].mesh);
    StmCheckpoint ckpt;
    ckpt.diffusion_time = edge * edge;
    ckpt.dataset_id = manifest.dataset_id;
    stm::StmConfig mc = config.model;
    mc.landmarks = manifest.landmarks;
    mesh::LandmarkGraph graph = mc.landmarks == mesh::kDefaultLandmarkCount ? mesh::default_landmark_graph() : [&] {
        // Without a semantic layout fall back to a chain.
        mesh::LandmarkGraph g;
        g.num_nodes = mc.landmarks;
        for (int i = 0; i + 1 < mc.landmarks; ++i) g.edges.emplace_back(i, i + 1);
        return g;
    }();
    ckpt.model = std::make_unique<stm::StmModel>(mc, std::move(graph), ckpt.diffusion_time, derive_seed(config.seed, 1));
    stm::StmModel& model = *ckpt.model;
    model.scale = manifest.landmark_std;
    log_info("STM: " + std::to_string(train_ids.size()) + " training / " + std::to_string(val_ids.size()) +
             " validation sequences, " + std::to_string(model.params().num_values()) + " parameters");

    const std::vector<StmItem> train(items.begin(), items.begin() + std::ptrdiff_t(train_ids.size()));
    const std::vector<StmItem> val(items.begin() + std::ptrdiff_t(train_ids.size()), items.end());

    // Windows cover every frame; the last one is aligned to the sequence end.
    std::vector<std::pair<std::size_t, Eigen::Index>> windows;
    for (std::size_t k = 0; k < train.size(); ++k) {
        const Eigen::Index T = train[k].landmarks.rows();
        const Eigen::Index W = std::min<Eigen::Index>(config.window, T);
        for (Eigen::Index s = 0; s < T; s += W) windows.emplace_back(k, std::min(s, T - W));
    }

    std::mt19937_64 rng(derive_seed(config.seed, 2));
    nn::AdamW opt({config.optim.lr, 0.9, 0.999, 1e-8, config.optim.weight_decay});
    TrainSummary summary;
    summary.checkpoint = config.out / "stm.ckpt";
    summary.last_checkpoint = config.out / "stm.last.ckpt";
    summary.log = config.out / "stm_train.csv";
    CsvLog log(summary.log);
    const auto start = std::chrono::steady_clock::now();
    double best = std::numeric_limits<double>::infinity();

    bool done = false;
    for (int epoch = 1; epoch <= config.epochs && !done; ++epoch) {
        std::shuffle(windows.begin(), windows.end(), rng);
        metrics::MotionLossTerms epoch_terms;
        double count = 0.0, gnorm = 0.0;
        for (std::size_t w0 = 0; w0 < windows.size(); w0 += std::size_t(config.batch_windows)) {
            const std::size_t w1 = std::min(windows.size(), w0 + std::size_t(config.batch_windows));
            nn::Tape tape(true);
            std::map<std::size_t, stm::MeshFeatures> prepared;
            nn::Var total;
            for (std::size_t w = w0; w < w1; ++w) {
                const auto [k, s] = windows[w];
                const StmItem& item = train[k];
                auto p = prepared.find(item.mesh);
                if (p == prepared.end())
                    p = prepared.emplace(item.mesh, model.prepare(tape, meshes[item.mesh].mesh, meshes[item.mesh].ops)).first;
                const Eigen::Index W = std::min<Eigen::Index>(config.window, item.landmarks.rows());
                const Eigen::MatrixXd truth = item.vertices.middleRows(s, W);
                const nn::Var pred =
                    model.forward_sequence(tape, meshes[item.mesh].ops, p->second, item.landmarks.middleRows(s, W));
                const nn::Var loss = nn::motion_loss(pred, truth, config.loss);
                accumulate(epoch_terms, metrics::motion_loss_terms({truth, pred.value()}, config.loss), 1.0);
                count += 1.0;
                total = w == w0 ? loss : nn::add(total, loss);
            }
            total = nn::scale(total, 1.0 / double(w1 - w0));
            check_finite(total.value()(0, 0), "epoch " + std::to_string(epoch) + ", step " + std::to_string(opt.steps() + 1));
            tape.backward(total);
            gnorm = nn::clip_grad_norm(model.params(), config.optim.grad_clip);
            check_finite(gnorm, "gradient of epoch " + std::to_string(epoch));
            opt.step(model.params());
            model.params().zero_grad();
            if (config.max_steps && opt.steps() >= *config.max_steps) {
                done = true;
                break;
            }
        }
        accumulate(epoch_terms, epoch_terms, 1.0 / count - 1.0);
        if (epoch == 1) {
            summary.first_epoch_loss = epoch_terms.total;
            summary.first_epoch_position = epoch_terms.position;
        }
        summary.final_loss = epoch_terms.total;
        summary.final_position = epoch_terms.position;

        std::optional<double> val_loss;
        const bool last = done || epoch == config.epochs;
        if (epoch % config.val_every == 0 || last) {
            double selection = epoch_terms.total;
            if (!val.empty()) {
                selection = stm_eval_loss(model, meshes, val, config.loss);
                check_finite(selection, "validation after epoch " + std::to_string(epoch));
                val_loss = selection;
            }
            if (selection < best) {
                best = selection;
                save_stm_checkpoint(ckpt, summary.checkpoint);
            }
        }
        log.row(epoch, opt.steps(), epoch_terms, val_loss, gnorm, seconds_since(start));
        summary.epochs = epoch;
    }
    summary.steps = opt.steps();
    summary.best_val_loss = best;
    save_stm_checkpoint(ckpt, summary.last_checkpoint);
    log_info("STM: " + std::to_string(summary.steps) + " steps, final loss " + std::to_string(summary.final_loss));
    return summary;
}

} // namespace freetalk::pipeline
