// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic RGB-D scenes: an open-top room with axis-aligned boxes and
// spheres, analytic depth, per-object region embeddings and labeled ground truth.
//
// Region ids: 0 for the room, 1 + 2o for the upper half of object o and 2 + 2o for its
// lower half (split at the object's centre height).
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "splatfuse/camera.hpp"
#include "splatfuse/dataset.hpp"
#include "splatfuse/frame.hpp"

namespace splatfuse {

enum class ShapeKind { Box, Sphere };

struct SynthObject {
    ShapeKind shape = ShapeKind::Box;
    Vec3 center = Vec3::Zero();
    Vec3 half_extents = Vec3::Constant(0.1); // boxes
    double radius = 0.1;                     // spheres
    std::array<std::uint8_t, 3> color{200, 60, 60};

    /// Ground-truth label, or -1 for unlabeled clutter.
    int label = -1;
    /// Labeled objects: cosine between the lower-half embedding and the label embedding.
    double lower_cosine = 1.0;
    /// Clutter: label whose embedding it resembles (-1 = none) and by how much.
    int affinity_label = -1;
    double affinity_cosine = 0.0;
};

struct SynthSpec {
    std::vector<SynthObject> objects;
    std::vector<std::string> label_names; // one per label; labels are 0..n-1

    bool room = true;
    double room_half_width = 2.0; // walls at x, y = +-room_half_width
    double room_height = 2.5;     // walls span z in [0, room_height]; no ceiling

    int frames = 20;
    double orbit_radius = 1.6;
    double orbit_height = 1.4;
    Vec3 look_at = Vec3(0.0, 0.0, 0.2);
    /// Explicit camera-to-world poses; overrides the orbit when non-empty.
    std::vector<Pose> poses;

    CameraIntrinsics intrinsics{120.0, 120.0, 80.0, 60.0, 160, 120};
    int embedding_dim = 16;
    /// Cosine between any two label embeddings.
    double inter_object_cosine = 0.0;
    double gt_spacing = 0.01;

    void validate() const;
};

struct SynthHit {
    double t = 0.0;
    std::int32_t region = -1;
    int object = -1; // -1 for the room
};

class SynthScene {
public:
    /// Throws if objects overlap, leave the room, or the embedding budget is exceeded.
    SynthScene(SynthSpec spec, std::uint64_t seed);

    const SynthSpec &spec() const { return spec_; }
    std::uint64_t seed() const { return seed_; }
    int frame_count() const;
    Pose pose(int frame) const;

    std::optional<SynthHit> cast(const Vec3 &origin, const Vec3 &dir) const;
    /// Distance from p to the nearest analytic surface (objects and room planes).
    double surface_distance(const Vec3 &p) const;

    /// Embedding of a region id (unit norm).
    const std::vector<float> &region_embedding(std::int32_t region) const;
    const std::vector<std::vector<float>> &label_embeddings() const { return label_embeddings_; }
    int label_of_region(std::int32_t region) const;

    Frame render_frame(int frame) const;
    /// 255 where the nearest surface belongs to an object with `label`.
    ImageU8 label_mask(int frame, int label) const;
    GroundTruthSegmentation ground_truth() const;

private:
    float confidence(int frame, std::int32_t region) const;

    SynthSpec spec_;
    std::uint64_t seed_;
    std::vector<std::vector<float>> label_embeddings_;
    std::vector<std::vector<float>> region_embeddings_; // indexed by region id
};

/// Writes frames, intrinsics, ground truth, per-label masks (gt/masks/<name>/NNNNNN.png)
/// and a scripted-oracle file gt/oracle.json.
void write_synth_dataset(const SynthScene &scene, const std::filesystem::path &root);

/// Camera-to-world pose at `eye` looking at `target`, z up.
Pose look_at_pose(const Vec3 &eye, const Vec3 &target);

SynthSpec two_object_spec();
/// Six labeled objects with per-object optimal thresholds spread over [0.55, 0.9], each
/// touching an unlabeled distractor of slightly lower similarity.
SynthSpec ablation_spec();
SynthSpec sphere_spec();
/// Names accepted by synth_preset: "two_objects", "ablation", "sphere".
SynthSpec synth_preset(const std::string &name);

/// Optimal-threshold targets used by ablation_spec, one per label.
std::vector<double> ablation_targets();

} // namespace splatfuse
