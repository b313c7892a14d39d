// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// On-disk RGB-D datasets with region embeddings:
//
//   intrinsics.txt             fx fy cx cy width height
//   color/NNNNNN.png           8-bit RGB
//   depth/NNNNNN.png           16-bit gray, millimetres (0 = invalid)
//   pose/NNNNNN.txt            4x4 row-major camera-to-world
//   regions/NNNNNN.bin         H*W little-endian i32 region ids (-1 = none)
//   regions/NNNNNN.tab         u32 count, then {id i32, confidence f32, embedding f32 x D}
//   gt/points.ply              binary little-endian x y z (f32)            [optional]
//   gt/labels.bin              i32 per point                               [optional]
//   gt/label_embeddings.bin    u32 count, u32 D, count x D f32             [optional]
//   gt/label_names.txt         one name per label                          [optional]
//
// Region files are optional per frame; without them the frame carries no semantics.
#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "splatfuse/camera.hpp"
#include "splatfuse/frame.hpp"

namespace splatfuse {

struct GroundTruthSegmentation {
    std::vector<Vec3> points;
    std::vector<std::int32_t> labels;
    std::vector<std::vector<float>> label_embeddings; // indexed by label
    std::vector<std::string> label_names;             // empty or one per label

    std::size_t label_count() const { return label_embeddings.size(); }
    bool has_label(int label) const;
    std::vector<Vec3> points_of(int label) const;
    /// "label_<k>" when no names are recorded.
    std::string name_of(int label) const;
    /// Label whose name is `name`, or nullopt.
    std::optional<int> find_label(const std::string &name) const;
    void validate() const;
};

std::string frame_stem(FrameId index);

CameraIntrinsics read_intrinsics(const std::filesystem::path &path);
void write_intrinsics(const std::filesystem::path &path, const CameraIntrinsics &k);

class DatasetReader {
public:
    /// Throws ErrorKind::Io if intrinsics.txt is missing or malformed.
    explicit DatasetReader(std::filesystem::path root);

    const CameraIntrinsics &intrinsics() const { return intrinsics_; }
    std::size_t size() const { return indices_.size(); }
    const std::vector<FrameId> &indices() const { return indices_; }
    const std::filesystem::path &root() const { return root_; }

    /// The n-th frame in index order. Errors name the frame and the cause.
    Frame read(std::size_t n) const;

    bool has_ground_truth() const;
    GroundTruthSegmentation ground_truth() const;

private:
    std::filesystem::path root_;
    CameraIntrinsics intrinsics_;
    std::vector<FrameId> indices_;
};

/// Writes one frame into the dataset layout under `root` (directories are created).
void write_frame(const std::filesystem::path &root, const Frame &frame);
void write_ground_truth(const std::filesystem::path &root, const GroundTruthSegmentation &gt);
GroundTruthSegmentation read_ground_truth(const std::filesystem::path &root);

} // namespace splatfuse
