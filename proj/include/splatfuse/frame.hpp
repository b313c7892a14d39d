// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "splatfuse/camera.hpp"
#include "splatfuse/common.hpp"
#include "splatfuse/image.hpp"

namespace splatfuse {

struct RegionEntry {
    std::vector<float> embedding;
    float confidence = 0.0f;
};

/// One posed RGB-D observation with its region segmentation. `depth` is in meters with 0
/// marking invalid pixels; `region_map` holds -1 where no region applies.
struct Frame {
    FrameId index = 0;
    ImageU8 color;
    ImageF depth;
    Pose camera_to_world = Pose::Identity();
    Image<std::int32_t> region_map;
    std::map<std::int32_t, RegionEntry> region_table;

    bool has_semantics() const { return !region_table.empty(); }
    /// Embedding dimension of the region table, 0 if there are no regions.
    std::size_t embedding_dim() const {
        return region_table.empty() ? 0 : region_table.begin()->second.embedding.size();
    }
    /// Throws if shapes disagree, a region id lacks a table entry, or an embedding is
    /// non-finite.
    void validate() const;
};

} // namespace splatfuse
