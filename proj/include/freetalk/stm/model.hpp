#pragma once

#include <freetalk/mesh/landmarks.hpp>
#include <freetalk/mesh/operators.hpp>
#include <freetalk/metrics/motion.hpp>
#include <freetalk/nn/layers.hpp>

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace freetalk::stm {

/// Which landmark-derived signals reach the decoder.
enum class Variant {
    GcnCaConcat,  // [f | g | c], attention keys from the GCN
    CaConcat,     // [f | g | c], keys from raw displacements + positional codes
    Ca,           // [f | c]
    Concat,       // [f | g]
};

enum class DecoderKind { Diffusion, Mlp };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
std::string to_string(DecoderKind d);
DecoderKind decoder_from_string(const std::string& s);

struct StmConfig {
    int landmarks = 68;
    int encoder_width = 128;
    int feature_dim = 128;      // d_f
    int encoder_blocks = 4;
    int decoder_width = 128;
    int decoder_blocks = 4;
    int gcn_layers = 3;
    int gcn_hidden = 128;
    bool gcn_bias = true;
    int positional_dim = 32;    // d_p
    int landmark_dim = 128;     // width of the projected landmark features
    int attention_dim = 128;    // d_c
    int heads = 4;
    bool gradient_features = false;
    int spectral_k = 128;
    Variant variant = Variant::GcnCaConcat;
    DecoderKind decoder = DecoderKind::Diffusion;

    int motion_dim() const { return 3 * landmarks; }
    bool uses_global() const { return variant != Variant::Ca; }
    bool uses_attention() const { return variant != Variant::Concat; }
    bool uses_gcn() const { return variant == Variant::GcnCaConcat; }
    /// d_f + D + d_c for the full variant.
    int fused_dim() const;
};

nlohmann::json to_json(const StmConfig& config);
StmConfig stm_config_from_json(const nlohmann::json& j);

/// Per-vertex context derived once per mesh and reused by every frame.
struct MeshFeatures {
    nn::Var features;       // f, n x d_f
    nn::Var queries;        // attention queries from f (when attention is used)
    nn::Var decoder_static; // f rows of the decoder input layer applied to f
};

class StmModel {
public:
    /// `diffusion_time` initializes every learned diffusion time.
    StmModel(StmConfig config, mesh::LandmarkGraph graph, double diffusion_time, std::uint64_t seed);

    const StmConfig& config() const { return config_; }
    const mesh::LandmarkGraph& graph() const { return graph_; }
    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    /// D^-1/2 (A + I) D^-1/2.
    const Eigen::MatrixXd& propagation() const { return propagation_; }

    /// [V | normals] through the intrinsic encoder, n x d_f.
    nn::Var encode_mesh(nn::Tape& tape, const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops) const;
    Eigen::MatrixXd encode_mesh(const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops) const;

    /// GCN over per-landmark displacements (N x 3) -> N x gcn_hidden.
    nn::Var gcn(nn::Tape& tape, const nn::Var& displacements) const;
    /// phi([l | p]) with l from the GCN, or from the raw displacements for
    /// variants without it. N x landmark_dim.
    nn::Var encode_landmarks(nn::Tape& tape, const nn::Var& displacements) const;

    /// Vertex-to-landmark attention. `weights` receives the head-averaged
    /// n x N matrix.
    nn::Var attention(nn::Tape& tape, const nn::Var& features, const nn::Var& landmark_features,
                      Eigen::MatrixXd* weights = nullptr) const;

    /// Decoder on an explicit fused field (n x fused_dim).
    nn::Var decode(nn::Tape& tape, const mesh::SurfaceOperators& ops, const nn::Var& fused) const;

    /// Encoder output plus the per-mesh parts of the first decoder layer.
    MeshFeatures prepare(nn::Tape& tape, const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops) const;
    MeshFeatures prepare(nn::Tape& tape, const Eigen::MatrixXd& features) const;

    /// One frame: normalized landmark displacements (N x 3) -> normalized
    /// vertex displacements (n x 3). Equal to decode(fuse(f, g, c)) with the
    /// first decoder layer split by input block.
    nn::Var forward_frame(nn::Tape& tape, const mesh::SurfaceOperators& ops, const MeshFeatures& mf,
                          const nn::Var& displacements, Eigen::MatrixXd* weights = nullptr) const;

    /// Frames of a T x 3N trajectory -> T x 3n trajectory (normalized units).
    nn::Var forward_sequence(nn::Tape& tape, const mesh::SurfaceOperators& ops, const MeshFeatures& mf,
                             const Eigen::MatrixXd& landmark_trajectory,
                             std::vector<Eigen::MatrixXd>* weights = nullptr) const;

    /// Per-axis scale dividing displacements before the network.
    Eigen::RowVector3d scale = Eigen::RowVector3d::Ones();

private:
    struct Block {
        nn::Parameter* times = nullptr;  // 1 x C, unused by the MLP decoder
        nn::Linear grad_re, grad_im;     // tangent-gradient features (optional)
        nn::Linear fc1, fc2;
        bool diffuse = true;
        bool gradient = false;
    };

    Block make_block(const std::string& name, int width, double time, bool diffuse, bool gradient, nn::Rng& rng);
    nn::Var run_block(nn::Tape& tape, const Block& block, const mesh::SurfaceOperators& ops, const nn::Var& x) const;
    nn::Var decoder_tail(nn::Tape& tape, const mesh::SurfaceOperators& ops, const nn::Var& hidden) const;

    StmConfig config_;
    mesh::LandmarkGraph graph_;
    Eigen::MatrixXd propagation_;
    nn::ParamStore params_;

    nn::Linear enc_in_, enc_out_;
    std::vector<Block> enc_blocks_;
    std::vector<nn::Linear> gcn_layers_;
    nn::Parameter* positional_ = nullptr;
    nn::Linear phi_;
    nn::MultiHeadAttention attn_;
    nn::Linear dec_in_, dec_out_;
    std::vector<Block> dec_blocks_;
};

/// Row i = [f_i | g | c_i]; empty Vars are skipped.
nn::Var fuse_features(const nn::Var& features, const nn::Var& global, const nn::Var& context);
Eigen::MatrixXd fuse_features(const Eigen::MatrixXd& features, const Eigen::RowVectorXd& global,
                              const Eigen::MatrixXd& context);

inline constexpr metrics::LossWeights kStmLossWeights{0.5, 0.2};

/// Dense result of running a trained model on one mesh, in mesh units.
struct StmResult {
    Eigen::MatrixXd displacements;          // T x 3n
    std::vector<Eigen::MatrixXd> attention; // per frame n x N when requested
};

/// Landmark displacements T x 3N (mesh units) -> vertex displacements.
StmResult stm_forward(const StmModel& model, const mesh::Mesh& mesh, const mesh::SurfaceOperators& ops,
                      const Eigen::MatrixXd& landmark_trajectory, bool keep_attention = false);
/// Same with precomputed static features.
StmResult stm_forward(const StmModel& model, const mesh::SurfaceOperators& ops, const Eigen::MatrixXd& features,
                      const Eigen::MatrixXd& landmark_trajectory, bool keep_attention = false);

/// V + dV_t for frame t of a T x 3n displacement trajectory.
mesh::Vertices deformed_vertices(const mesh::Vertices& rest, const Eigen::MatrixXd& displacements, Eigen::Index t);

/// Operator options the model needs on a mesh of `num_vertices` vertices.
mesh::OperatorOptions model_operator_options(const StmConfig& config, Eigen::Index num_vertices);
/// Operators with the spectral basis and gradients the model needs.
mesh::SurfaceOperators model_operators(const StmConfig& config, const mesh::Mesh& mesh);

} // namespace freetalk::stm
