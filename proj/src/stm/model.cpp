#include <freetalk/error.hpp>
#include <freetalk/stm/model.hpp>

#include <algorithm>
#include <cmath>

namespace freetalk::stm {

using nn::Mat;
using nn::Var;

std::string to_string(Variant v)
{
    switch (v) {
    case Variant::GcnCaConcat: return "gcn_ca_concat";
    case Variant::CaConcat: return "ca_concat";
    case Variant::Ca: return "ca";
    case Variant::Concat: return "concat";
    }
    return "?";
}

Variant variant_from_string(const std::string& s)
{
    for (Variant v : {Variant::GcnCaConcat, Variant::CaConcat, Variant::Ca, Variant::Concat})
        if (to_string(v) == s) return v;
    fail(ErrorKind::Config, "unknown STM variant \"" + s + "\"");
}

std::string to_string(DecoderKind d) { return d == DecoderKind::Diffusion ? "diffusion" : "mlp"; }

DecoderKind decoder_from_string(const std::string& s)
{
    if (s == "diffusion") return DecoderKind::Diffusion;
    if (s == "mlp") return DecoderKind::Mlp;
    fail(ErrorKind::Config, "unknown STM decoder \"" + s + "\"");
}

int StmConfig::fused_dim() const
{
    return feature_dim + (uses_global() ? motion_dim() : 0) + (uses_attention() ? attention_dim : 0);
}

nlohmann::json to_json(const StmConfig& c)
{
    return {{"landmarks", c.landmarks},
            {"encoder_width", c.encoder_width},
            {"feature_dim", c.feature_dim},
            {"encoder_blocks", c.encoder_blocks},
            {"decoder_width", c.decoder_width},
            {"decoder_blocks", c.decoder_blocks},
            {"gcn_layers", c.gcn_layers},
            {"gcn_hidden", c.gcn_hidden},
            {"gcn_bias", c.gcn_bias},
            {"positional_dim", c.positional_dim},
            {"landmark_dim", c.landmark_dim},
            {"attention_dim", c.attention_dim},
            {"heads", c.heads},
            {"gradient_features", c.gradient_features},
            {"spectral_k", c.spectral_k},
            {"variant", to_string(c.variant)},
            {"decoder", to_string(c.decoder)}};
}

StmConfig stm_config_from_json(const nlohmann::json& j)
{
    StmConfig c;
    c.landmarks = j.value("landmarks", c.landmarks);
    c.encoder_width = j.value("encoder_width", c.encoder_width);
    c.feature_dim = j.value("feature_dim", c.feature_dim);
    c.encoder_blocks = j.value("encoder_blocks", c.encoder_blocks);
    c.decoder_width = j.value("decoder_width", c.decoder_width);
    c.decoder_blocks = j.value("decoder_blocks", c.decoder_blocks);
    c.gcn_layers = j.value("gcn_layers", c.gcn_layers);
    c.gcn_hidden = j.value("gcn_hidden", c.gcn_hidden);
    c.gcn_bias = j.value("gcn_bias", c.gcn_bias);
    c.positional_dim = j.value("positional_dim", c.positional_dim);
    c.landmark_dim = j.value("landmark_dim", c.landmark_dim);
    c.attention_dim = j.value("attention_dim", c.attention_dim);
    c.heads = j.value("heads", c.heads);
    c.gradient_features = j.value("gradient_features", c.gradient_features);
    c.spectral_k = j.value("spectral_k", c.spectral_k);
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
    if (j.contains("decoder")) c.decoder = decoder_from_string(j.at("decoder").get<std::string>());
    return c;
}

namespace {

Eigen::MatrixXd normalized_adjacency(const mesh::LandmarkGraph& g)
{
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(g.num_nodes, g.num_nodes);
    for (auto [i, j] : g.edges) {
        require(i >= 0 && j >= 0 && i < g.num_nodes && j < g.num_nodes && i != j, ErrorKind::Validation,
                "landmark graph edge out of range");
        a(i, j) = a(j, i) = 1.0;
    }
    const Eigen::VectorXd inv_sqrt = a.rowwise().sum().cwiseSqrt().cwiseInverse();
    return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

} // namespace

StmModel::Block StmModel::make_block(const std::string& name, int width, double time, bool diffuse, bool gradient,
                                     nn::Rng& rng)
{
    Block b;
    b.diffuse = diffuse;
    b.gradient = diffuse && gradient;
    int inputs = 1;
    if (diffuse) {
        b.times = &params_.create(name + ".time", Mat::Constant(1, width, time), false);
        ++inputs;
    }
    if (b.gradient) {
        b.grad_re = nn::Linear::create(params_, name + ".grad_re", width, width, rng, false);
        b.grad_im = nn::Linear::create(params_, name + ".grad_im", width, width, rng, false);
        ++inputs;
    }
    b.fc1 = nn::Linear::create(params_, name + ".fc1", inputs * width, width, rng);
    b.fc2 = nn::Linear::create(params_, name + ".fc2", width, width, rng);
    return b;
}

StmModel::StmModel(StmConfig config, mesh::LandmarkGraph graph, double diffusion_time, std::uint64_t seed)
    : config_(config), graph_(std::move(graph))
{
    const auto& c = config_;
    require(graph_.num_nodes == c.landmarks, ErrorKind::Config,
            "landmark graph has " + std::to_string(graph_.num_nodes) + " nodes, config expects " +
                std::to_string(c.landmarks));
    require(c.encoder_width > 0 && c.feature_dim > 0 && c.decoder_width > 0 && c.encoder_blocks >= 0 &&
                c.decoder_blocks >= 0 && c.positional_dim > 0 && c.landmark_dim > 0 && c.attention_dim > 0,
            ErrorKind::Config, "STM widths must be positive");
    require(!c.uses_gcn() || (c.gcn_layers >= 1 && c.gcn_hidden > 0), ErrorKind::Config,
            "GCN needs at least one layer");
    require(diffusion_time >= 0.0 && std::isfinite(diffusion_time), ErrorKind::Config,
            "diffusion time must be finite and nonnegative");
    propagation_ = normalized_adjacency(graph_);

    nn::Rng rng(seed);
    enc_in_ = nn::Linear::create(params_, "stm.enc.in", 6, c.encoder_width, rng);
    for (int b = 0; b < c.encoder_blocks; ++b)
        enc_blocks_.push_back(make_block("stm.enc.block" + std::to_string(b), c.encoder_width, diffusion_time, true,
                                         c.gradient_features, rng));
    enc_out_ = nn::Linear::create(params_, "stm.enc.out", c.encoder_width, c.feature_dim, rng);

    if (c.uses_attention()) {
        int in = 3;
        if (c.uses_gcn()) {
            for (int l = 0; l < c.gcn_layers; ++l)
                gcn_layers_.push_back(nn::Linear::create(params_, "stm.gcn" + std::to_string(l), l == 0 ? 3 : c.gcn_hidden,
                                                         c.gcn_hidden, rng, c.gcn_bias));
            in = c.gcn_hidden;
        }
        positional_ =
            &params_.create("stm.positional", nn::normal_init(c.landmarks, c.positional_dim, 1.0, rng), false);
        phi_ = nn::Linear::create(params_, "stm.phi", in + c.positional_dim, c.landmark_dim, rng);
        attn_ = nn::MultiHeadAttention::create(params_, "stm.attn", c.feature_dim, c.landmark_dim, c.attention_dim,
                                               c.heads, rng);
    }

    const bool diffuse = c.decoder == DecoderKind::Diffusion;
    dec_in_ = nn::Linear::create(params_, "stm.dec.in", c.fused_dim(), c.decoder_width, rng);
    for (int b = 0; b < c.decoder_blocks; ++b)
        dec_blocks_.push_back(make_block("stm.dec.block" + std::to_string(b), c.decoder_width, diffusion_time, diffuse,
                                         c.gradient_features, rng));
    dec_out_ = nn::Linear::create(params_, "stm.dec.out", c.decoder_width, 3, rng);
}

Var StmModel::run_block(nn::Tape& tape, const Block& block, const mesh::SurfaceOperators& ops, const Var& x) const
{
    std::vector<Var> parts{x};
    if (block.diffuse) {
        require(ops.spectral.has_value(), ErrorKind::Config, "intrinsic blocks need a spectral basis");
        const auto& sb = *ops.spectral;
        const Var xd = nn::spectral_diffusion(x, tape.param(*block.times), sb.eigenvectors, sb.eigenvalues, ops.mass);
        parts.push_back(xd);
        if (block.gradient) {
            require(ops.gradient.has_value(), ErrorKind::Config, "gradient features need tangent gradients");
            const Var gx = nn::left_multiply(ops.gradient->gx, xd);
            const Var gy = nn::left_multiply(ops.gradient->gy, xd);
            const Var bx = nn::sub(block.grad_re(tape, gx), block.grad_im(tape, gy));
            const Var by = nn::add(block.grad_re(tape, gy), block.grad_im(tape, gx));
            parts.push_back(nn::tanh(nn::add(nn::mul(gx, bx), nn::mul(gy, by))));
        }
    }
    const Var in = parts.size() == 1 ? x : nn::concat_cols(parts);
    return nn::add(x, block.fc2(tape, nn::relu(block.fc1(tape, in))));
}

Var StmModel::encode_mesh(nn::Tape& tape, const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops) const
{
    require(ops.size() == mesh.vertices.rows(), ErrorKind::Shape, "operators were built for a different mesh");
    Mat input(mesh.vertices.rows(), 6);
    input << mesh.vertices, ops.normals;
    Var x = enc_in_(tape, tape.constant(std::move(input)));
    for (const auto& b : enc_blocks_) x = run_block(tape, b, ops, x);
    return enc_out_(tape, x);
}

Eigen::MatrixXd StmModel::encode_mesh(const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops) const
{
    nn::Tape tape(false);
    return encode_mesh(tape, mesh, ops).value();
}

Var StmModel::gcn(nn::Tape& tape, const Var& displacements) const
{
    require(displacements.rows() == config_.landmarks && displacements.cols() == 3, ErrorKind::Shape,
            "landmark displacements must be N x 3");
    Var l = displacements;
    for (const auto& layer : gcn_layers_) l = nn::relu(layer(tape, nn::left_multiply(propagation_, l)));
    return l;
}

Var StmModel::encode_landmarks(nn::Tape& tape, const Var& displacements) const
{
    require(config_.uses_attention(), ErrorKind::Config, "variant has no landmark encoder");
    const Var base = config_.uses_gcn() ? gcn(tape, displacements) : displacements;
    require(base.rows() == config_.landmarks && base.cols() == (config_.uses_gcn() ? config_.gcn_hidden : 3),
            ErrorKind::Shape, "landmark displacements must be N x 3");
    return phi_(tape, nn::concat_cols({base, tape.param(*positional_)}));
}

Var StmModel::attention(nn::Tape& tape, const Var& features, const Var& landmark_features, Eigen::MatrixXd* weights) const
{
    require(config_.uses_attention(), ErrorKind::Config, "variant has no attention");
    return attn_(tape, features, landmark_features, nullptr, weights);
}

Var StmModel::decoder_tail(nn::Tape& tape, const mesh::SurfaceOperators& ops, const Var& hidden) const
{
    Var x = hidden;
    for (const auto& b : dec_blocks_) x = run_block(tape, b, ops, x);
    return dec_out_(tape, x);
}

Var StmModel::decode(nn::Tape& tape, const mesh::SurfaceOperators& ops, const Var& fused) const
{
    require(fused.cols() == config_.fused_dim(), ErrorKind::Shape,
            "fused width " + std::to_string(fused.cols()) + " != decoder input " + std::to_string(config_.fused_dim()));
    require(fused.rows() == ops.size(), ErrorKind::Shape, "fused field rows do not match the mesh");
    return decoder_tail(tape, ops, dec_in_(tape, fused));
}

MeshFeatures StmModel::prepare(nn::Tape& tape, const Eigen::MatrixXd& features) const
{
    require(features.cols() == config_.feature_dim, ErrorKind::Shape, "static feature width mismatch");
    MeshFeatures mf;
    mf.features = tape.constant(features);
    if (config_.uses_attention()) mf.queries = attn_.query(tape, mf.features);
    const Var w_f = nn::slice_rows(tape.param(*dec_in_.weight), 0, config_.feature_dim);
    mf.decoder_static = nn::add_row(nn::matmul(mf.features, w_f), tape.param(*dec_in_.bias));
    return mf;
}

MeshFeatures StmModel::prepare(nn::Tape& tape, const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops) const
{
    MeshFeatures mf;
    mf.features = encode_mesh(tape, mesh, ops);
    if (config_.uses_attention()) mf.queries = attn_.query(tape, mf.features);
    const Var w_f = nn::slice_rows(tape.param(*dec_in_.weight), 0, config_.feature_dim);
    mf.decoder_static = nn::add_row(nn::matmul(mf.features, w_f), tape.param(*dec_in_.bias));
    return mf;
}

Var StmModel::forward_frame(nn::Tape& tape, const mesh::SurfaceOperators& ops, const MeshFeatures& mf,
                            const Var& displacements, Eigen::MatrixXd* weights) const
{
    const auto& c = config_;
    const Var w = tape.param(*dec_in_.weight);
    Var h = mf.decoder_static;
    int row = c.feature_dim;
    if (c.uses_global()) {
        const Var g = nn::flatten_row(displacements);
        h = nn::add_row(h, nn::matmul(g, nn::slice_rows(w, row, c.motion_dim())));
        row += c.motion_dim();
    }
    if (c.uses_attention()) {
        const Var lt = encode_landmarks(tape, displacements);
        const Var ctx = attn_.attend(tape, mf.queries, lt, nullptr, weights);
        h = nn::add(h, nn::matmul(ctx, nn::slice_rows(w, row, c.attention_dim)));
    }
    return decoder_tail(tape, ops, h);
}

Var StmModel::forward_sequence(nn::Tape& tape, const mesh::SurfaceOperators& ops, const MeshFeatures& mf,
                               const Eigen::MatrixXd& trajectory, std::vector<Eigen::MatrixXd>* weights) const
{
    require(trajectory.cols() == config_.motion_dim(), ErrorKind::Shape,
            "landmark trajectory width " + std::to_string(trajectory.cols()) + " != 3N = " +
                std::to_string(config_.motion_dim()));
    require(trajectory.rows() >= 1, ErrorKind::Shape, "empty landmark trajectory");
    if (weights) weights->clear();
    std::vector<Var> rows;
    rows.reserve(std::size_t(trajectory.rows()));
    for (Eigen::Index t = 0; t < trajectory.rows(); ++t) {
        const Mat frame = Eigen::RowVectorXd(trajectory.row(t)).reshaped<Eigen::RowMajor>(config_.landmarks, 3);
        Eigen::MatrixXd alpha;
        const Var dv = forward_frame(tape, ops, mf, tape.constant(frame), weights ? &alpha : nullptr);
        if (weights) weights->push_back(std::move(alpha));
        rows.push_back(nn::flatten_row(dv));
    }
    return rows.size() == 1 ? rows[0] : nn::concat_rows(rows);
}

Var fuse_features(const Var& features, const Var& global, const Var& context)
{
    std::vector<Var> parts{features};
    if (global.valid()) {
        require(global.rows() == 1, ErrorKind::Shape, "global motion vector must be a row");
        parts.push_back(nn::broadcast_rows(global, features.rows()));
    }
    if (context.valid()) {
        require(context.rows() == features.rows(), ErrorKind::Shape, "context rows do not match the mesh");
        parts.push_back(context);
    }
    return parts.size() == 1 ? features : nn::concat_cols(parts);
}

Eigen::MatrixXd fuse_features(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& global,
                              const Eigen::MatrixXd& context)
{
    require(context.size() == 0 || context.rows() == features.rows(), ErrorKind::Shape,
            "context rows do not match the mesh");
    Eigen::MatrixXd out(features.rows(), features.cols() + global.size() + context.cols());
    out.leftCols(features.cols()) = features;
    if (global.size()) out.middleCols(features.cols(), global.size()) = global.replicate(features.rows(), 1);
    if (context.size()) out.rightCols(context.cols()) = context;
    return out;
}

namespace {

Eigen::MatrixXd scale_columns(const Eigen::MatrixXd& traj, const Eigen::RowVector3d& factor)
{
    Eigen::MatrixXd out = traj;
    for (Eigen::Index j = 0; j < out.cols(); ++j) out.col(j) *= factor(j % 3);
    return out;
}

StmResult run(const StmModel& model, const mesh::SurfaceOperators& ops, const MeshFeatures& mf,
              const Eigen::MatrixXd& trajectory, bool keep_attention)
{
    const Eigen::RowVector3d inv = model.scale.cwiseInverse();
    StmResult r;
    const Eigen::MatrixXd normalized = scale_columns(trajectory, inv);
    r.displacements.resize(trajectory.rows(), 3 * ops.size());
    // Frames are independent; run them one at a time to keep the tape small.
    for (Eigen::Index t = 0; t < trajectory.rows(); ++t) {
        nn::Tape frame_tape(false);
        const Mat frame = Eigen::RowVectorXd(normalized.row(t)).reshaped<Eigen::RowMajor>(model.config().landmarks, 3);
        Eigen::MatrixXd alpha;
        MeshFeatures local{frame_tape.constant(mf.features.value()),
                           mf.queries.valid() ? frame_tape.constant(mf.queries.value()) : nn::Var{},
                           frame_tape.constant(mf.decoder_static.value())};
        const Var dv =
            model.forward_frame(frame_tape, ops, local, frame_tape.constant(frame), keep_attention ? &alpha : nullptr);
        r.displacements.row(t) = dv.value().reshaped<Eigen::RowMajor>().transpose();
        if (keep_attention) r.attention.push_back(std::move(alpha));
    }
    r.displacements = scale_columns(r.displacements, model.scale);
    return r;
}

} // namespace

StmResult stm_forward(const StmModel& model, const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops,
                      const Eigen::MatrixXd& trajectory, bool keep_attention)
{
    return stm_forward(model, ops, model.encode_mesh(mesh, ops), trajectory, keep_attention);
}

StmResult stm_forward(const StmModel& model, const mesh::SurfaceOperators& ops, const Eigen::MatrixXd& features,
                      const Eigen::MatrixXd& trajectory, bool keep_attention)
{
    require(trajectory.cols() == model.config().motion_dim(), ErrorKind::Shape,
            "landmark trajectory width does not match the model");
    nn::Tape tape(false);
    const MeshFeatures mf = model.prepare(tape, features);
    return run(model, ops, mf, trajectory, keep_attention);
}

mesh::Vertices deformed_vertices(const mesh::Vertices& rest, const Eigen::MatrixXd& displacements, Eigen::Index t)
{
    require(displacements.cols() == 3 * rest.rows(), ErrorKind::Shape, "displacement width does not match the mesh");
    mesh::Vertices v = rest;
    v += Eigen::RowVectorXd(displacements.row(t)).reshaped<Eigen::RowMajor>(rest.rows(), 3);
    return v;
}

mesh::OperatorOptions model_operator_options(const StmConfig& config, Eigen::Index num_vertices)
{
    mesh::OperatorOptions opt;
    opt.spectral_k = std::min<int>(config.spectral_k, int(num_vertices));
    opt.tangent_gradient = config.gradient_features;
    return opt;
}

mesh::SurfaceOperators model_operators(const StmConfig& config, const mesh::Mesh& mesh)
{
    return mesh::build_operators(mesh, model_operator_options(config, mesh.num_vertices()));
}

} // namespace freetalk::stm
