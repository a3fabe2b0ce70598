#pragma once

#include <freetalk/mesh/mesh.hpp>

#include <Eigen/Core>

#include <filesystem>
#include <string>
#include <vector>

namespace freetalk::pipeline {

/// T frames of n points sharing one connectivity (possibly empty).
struct PackedSequence {
    mesh::Faces faces = mesh::Faces(0, 3);
    Eigen::MatrixXf frames;  // T x 3n, row t = [x0 y0 z0 x1 ...]

    Eigen::Index num_frames() const { return frames.rows(); }
    Eigen::Index num_points() const { return frames.cols() / 3; }
    mesh::Vertices vertices(Eigen::Index t) const;
};

/// "FTK1", u32 T, u32 n, u32 m, m x 3 u32 faces, T x n x 3 float32; all
/// little-endian.
void save_packed(const PackedSequence& seq, const std::filesystem::path& path);
PackedSequence load_packed(const std::filesystem::path& path);

/// Builds a packed sequence from double trajectories (T x 3n).
PackedSequence make_packed(const Eigen::MatrixXd& positions, const mesh::Faces& faces);

enum class ExportFormat { Obj, Ply, Packed };
ExportFormat export_format_from_string(const std::string& s);
std::string to_string(ExportFormat f);

/// Writes frame_0000.obj ... (or .ply), or sequence.ftk for Packed, into
/// `dir`; frames are written by up to `workers` threads. Returns the files.
std::vector<std::filesystem::path> export_sequence(const PackedSequence& seq, ExportFormat format,
                                                   const std::filesystem::path& dir, int workers = 1);

/// Reads a directory written by export_sequence (any format).
PackedSequence import_sequence(const std::filesystem::path& dir);

} // namespace freetalk::pipeline
