// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Rigid edits of queried objects. Only the Gaussians move; TSDF and semantic voxel
// fields are left as they were.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "splatfuse/gaussian_map.hpp"
#include "splatfuse/query.hpp"

namespace splatfuse {

enum class EditVerb { Translate, Rotate, Delete };

struct EditCommand {
    EditVerb verb = EditVerb::Translate;
    std::size_t target = 0;              // index into QueryResult::clusters
    Vec3 translation = Vec3::Zero();     // Translate
    Vec3 rotation_rpy = Vec3::Zero();    // Rotate: roll, pitch, yaw (radians) about the centroid

    static EditCommand translate(std::size_t target, const Vec3 &t);
    static EditCommand rotate(std::size_t target, const Vec3 &rpy);
    static EditCommand remove(std::size_t target);
};

struct EditReport {
    EditVerb verb = EditVerb::Translate;
    std::size_t target = 0;
    std::vector<GaussianId> ids;
    Vec3 pivot = Vec3::Zero();
};

std::string to_string(EditVerb verb);
EditVerb parse_edit_verb(const std::string &text);

/// R = Rz(yaw) Ry(pitch) Rx(roll).
Mat3 rotation_from_rpy(const Vec3 &rpy);
Vec3 rpy_from_rotation(const Mat3 &r);

/// Applies `command` to the cluster's selected primitives. Throws listing any ids that
/// are no longer live.
EditReport apply_edit(GaussianMap &map, SparseVoxelGrid &grid, const QueryResult &result,
                      const EditCommand &command);

/// Lower-level form acting on an explicit id list.
EditReport apply_edit(GaussianMap &map, SparseVoxelGrid &grid, std::span<const GaussianId> ids,
                      const EditCommand &command);

/// PCA-oriented bounding box of the member means. Axes are ordered by extent
/// (descending; ties by dominant world axis), signed so their largest component is
/// positive, and completed to a right-handed frame.
ObjectDescriptor object_descriptor(std::span<const GaussianId> ids, const GaussianMap &map);
ObjectDescriptor object_descriptor(std::span<const Vec3> points);

} // namespace splatfuse
