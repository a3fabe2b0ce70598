// freetalk: synthetic data, ATS / STM training, animation, evaluation and
// export from the command line. Exit codes: 0 ok, 2 config, 3 data, 4 numerical.

#include <freetalk/error.hpp>
#include <freetalk/pipeline/animate.hpp>
#include <freetalk/pipeline/evaluate.hpp>
#include <freetalk/pipeline/json_schema.hpp>
#include <freetalk/pipeline/log.hpp>
#include <freetalk/pipeline/schemas.hpp>
#include <freetalk/pipeline/seqio.hpp>
#include <freetalk/pipeline/synth.hpp>
#include <freetalk/pipeline/train.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace freetalk;
using namespace freetalk::pipeline;

namespace {

struct Globals {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> workers;
    bool quiet = false;
};

json read_config(const std::string& path)
{
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Config, "cannot read config " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        fail(ErrorKind::Config, path + ": " + e.what());
    }
}

std::string absolute(const std::string& p) { return p.empty() ? p : fs::absolute(p).lexically_normal().string(); }

/// Config file < subcommand flags < global flags, then schema validation.
json merged(const Globals& g, const std::string& schema_name, const json& flags)
{
    json j = read_config(g.config);
    if (!j.is_object()) fail(ErrorKind::Config, "config must be a JSON object");
    for (const auto& [k, v] : flags.items()) j[k] = v;
    if (g.seed) j["seed"] = *g.seed;
    if (!g.out.empty()) j["out"] = g.out;
    if (g.workers) j["workers"] = *g.workers;
    validate_schema(j, schema(schema_name), schema_name + " config");
    return j;
}

void require_path(const std::string& value, const std::string& name)
{
    require(!value.empty(), ErrorKind::Config, "missing \"" + name + "\" (config key or flag)");
}

void write_resolved(const json& resolved, const std::string& schema_name, const fs::path& out)
{
    validate_schema(resolved, schema(schema_name), "resolved " + schema_name + " config");
    fs::create_directories(out);
    std::ofstream f(out / "config.resolved.json");
    f << resolved.dump(2) << '\n';
    if (!f) fail(ErrorKind::Io, "cannot write " + (out / "config.resolved.json").string());
}

// Collects subcommand flags that were actually given.
struct Flags {
    json values = json::object();
    std::vector<std::function<void()>> setters;

    template <class T>
    void add(CLI::App* app, const std::string& flag, const std::string& key, T& storage, const std::string& help,
             bool is_path = false)
    {
        auto* opt = app->add_option(flag, storage, help);
        setters.push_back([this, opt, key, &storage, is_path] {
            if (opt->count() == 0) return;
            if constexpr (std::is_same_v<T, std::string>)
                values[key] = is_path ? absolute(storage) : storage;
            else
                values[key] = storage;
        });
    }

    json collect()
    {
        for (auto& s : setters) s();
        return values;
    }
};

int run(int argc, char** argv)
{
    CLI::App app{"Emotional, topology-agnostic 3D talking heads from audio"};
    app.require_subcommand(1);
    app.fallthrough();
    Globals g;
    app.add_option("--config", g.config, "JSON config file");
    app.add_option("--seed", g.seed, "random seed");
    app.add_option("--out", g.out, "output directory");
    app.add_option("--workers", g.workers, "worker threads")->check(CLI::PositiveNumber);
    app.add_flag("--quiet", g.quiet, "only print warnings and errors");

    Flags synth_f, ats_f, stm_f, anim_f, eval_f, export_f;
    int identities = 0, seqs = 0, epochs = 0, intensity = 0, ddim = 0;
    long long max_steps = 0;
    std::string s_dataset, s_variant, s_audio, s_emotion, s_mesh, s_spec, s_ats, s_stm, s_landmarks, s_format,
        s_predictions, s_split, s_input;
    bool dump_attention = false;

    auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
    synth_f.add(synth, "--identities", "identities", identities, "number of identities");
    synth_f.add(synth, "--sequences-per-identity", "sequences_per_identity", seqs, "sequences per identity");

    auto* ats = app.add_subcommand("ats-train", "train the audio-to-landmark diffusion model");
    ats_f.add(ats, "--dataset", "dataset", s_dataset, "dataset directory", true);
    ats_f.add(ats, "--epochs", "epochs", epochs, "epochs");
    ats_f.add(ats, "--max-steps", "max_steps", max_steps, "optimizer step budget");

    auto* stm = app.add_subcommand("stm-train", "train the landmark-to-mesh model");
    stm_f.add(stm, "--dataset", "dataset", s_dataset, "dataset directory", true);
    stm_f.add(stm, "--epochs", "epochs", epochs, "epochs");
    stm_f.add(stm, "--max-steps", "max_steps", max_steps, "optimizer step budget");

    auto* anim = app.add_subcommand("animate", "animate a mesh from audio");
    anim_f.add(anim, "--audio", "audio", s_audio, "16-bit PCM WAV file", true);
    anim_f.add(anim, "--emotion", "emotion", s_emotion, "emotion label");
    anim_f.add(anim, "--intensity", "intensity", intensity, "emotion intensity");
    anim_f.add(anim, "--mesh", "mesh", s_mesh, "template mesh (OBJ/PLY)", true);
    anim_f.add(anim, "--landmark-spec", "landmark_spec", s_spec, "landmark spec JSON", true);
    anim_f.add(anim, "--ats", "ats_checkpoint", s_ats, "ATS checkpoint", true);
    anim_f.add(anim, "--stm", "stm_checkpoint", s_stm, "STM checkpoint", true);
    anim_f.add(anim, "--landmarks", "landmarks", s_landmarks, "landmark motion JSON (skips ATS)", true);
    anim_f.add(anim, "--format", "format", s_format, "obj, ply or packed");
    anim_f.add(anim, "--ddim-steps", "ddim_steps", ddim, "DDIM steps");
    anim->add_flag("--dump-attention", dump_attention, "write STM cross-attention weights");

    auto* eval = app.add_subcommand("evaluate", "score predictions against ground truth");
    eval_f.add(eval, "--dataset", "dataset", s_dataset, "dataset directory", true);
    eval_f.add(eval, "--predictions", "predictions", s_predictions, "prediction directory", true);
    eval_f.add(eval, "--split", "split", s_split, "dataset split");

    auto* exp = app.add_subcommand("export", "convert a sequence between OBJ, PLY and packed");
    export_f.add(exp, "--input", "input", s_input, "sequence directory or .ftk file", true);
    export_f.add(exp, "--format", "format", s_format, "obj, ply or packed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code_for(ErrorKind::Config);
    }
    if (g.quiet) log_level() = LogLevel::Warn;
    g.config = absolute(g.config);
    g.out = absolute(g.out);

    if (synth->parsed()) {
        const json j = merged(g, "synth", synth_f.collect());
        json spec_json = j;
        spec_json.erase("out");
        spec_json.erase("workers");
        const SyntheticDatasetSpec spec = synthetic_spec_from_json(spec_json);
        const std::string out = absolute(j.value("out", std::string()));
        require_path(out, "out");
        const int workers = j.value("workers", 1);
        json resolved = to_json(spec);
        resolved["out"] = out;
        resolved["workers"] = workers;
        write_resolved(resolved, "synth", out);
        write_synthetic(generate_synthetic(spec), out, workers);
        log_info("synthetic dataset written to " + out);
    } else if (ats->parsed()) {
        AtsTrainConfig c = ats_train_config_from_json(merged(g, "ats_train", ats_f.collect()));
        c.dataset = absolute(c.dataset.string());
        c.out = absolute(c.out.string());
        require_path(c.dataset.string(), "dataset");
        require_path(c.out.string(), "out");
        write_resolved(to_json(c), "ats_train", c.out);
        const TrainSummary s = train_ats(c);
        std::cout << s.checkpoint.string() << '\n';
    } else if (stm->parsed()) {
        StmTrainConfig c = stm_train_config_from_json(merged(g, "stm_train", stm_f.collect()));
        c.dataset = absolute(c.dataset.string());
        c.out = absolute(c.out.string());
        require_path(c.dataset.string(), "dataset");
        require_path(c.out.string(), "out");
        write_resolved(to_json(c), "stm_train", c.out);
        const TrainSummary s = train_stm(c);
        std::cout << s.checkpoint.string() << '\n';
    } else if (anim->parsed()) {
        json flags = anim_f.collect();
        if (dump_attention) flags["dump_attention"] = true;
        AnimateConfig c = animate_config_from_json(merged(g, "animate", flags));
        for (fs::path* p : {&c.audio, &c.mesh, &c.landmark_spec, &c.ats_checkpoint, &c.stm_checkpoint, &c.out})
            *p = absolute(p->string());
        if (c.landmarks) c.landmarks = absolute(c.landmarks->string());
        require_path(c.mesh.string(), "mesh");
        require_path(c.landmark_spec.string(), "landmark_spec");
        require_path(c.stm_checkpoint.string(), "stm_checkpoint");
        require_path(c.out.string(), "out");
        if (!c.landmarks) {
            require_path(c.audio.string(), "audio");
            require_path(c.ats_checkpoint.string(), "ats_checkpoint");
        }
        write_resolved(to_json(c), "animate", c.out);
        animate(c);
    } else if (eval->parsed()) {
        const json j = merged(g, "evaluate", eval_f.collect());
        EvaluateConfig c = evaluate_config_from_json(j);
        c.dataset = absolute(c.dataset.string());
        c.predictions = absolute(c.predictions.string());
        c.out = absolute(c.out.string());
        require_path(c.dataset.string(), "dataset");
        require_path(c.predictions.string(), "predictions");
        require_path(c.out.string(), "out");
        json resolved = to_json(c);
        if (j.contains("seed")) resolved["seed"] = j.at("seed");
        write_resolved(resolved, "evaluate", c.out);
        evaluate(c);
    } else if (exp->parsed()) {
        const json j = merged(g, "export", export_f.collect());
        const fs::path input = absolute(j.value("input", std::string()));
        const fs::path out = absolute(j.value("out", std::string()));
        require_path(input.string(), "input");
        require_path(out.string(), "out");
        const ExportFormat format = export_format_from_string(j.value("format", std::string("obj")));
        const int workers = j.value("workers", 1);
        json resolved = {{"input", input.string()}, {"format", to_string(format)}, {"out", out.string()},
                         {"workers", workers}};
        if (j.contains("seed")) resolved["seed"] = j.at("seed");
        write_resolved(resolved, "export", out);
        const PackedSequence seq = fs::is_directory(input) ? import_sequence(input) : load_packed(input);
        export_sequence(seq, format, out, workers);
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    try {
        return run(argc, argv);
    } catch (const Error& e) {
        std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const json::exception& e) {
        std::cerr << "error (config): " << e.what() << '\n';
        return exit_code_for(ErrorKind::Config);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(ErrorKind::Io);
    }
}
