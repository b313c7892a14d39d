// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splatfuse/common.hpp"

namespace splatfuse {

/// Pinhole intrinsics. Pixel (u, v) has image-plane coordinates (u, v); there is no
/// half-pixel offset, the same convention is used for back-projection and splatting.
struct CameraIntrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const {
        if (!(fx > 0.0 && fy > 0.0)) {
            fail("intrinsics: focal lengths must be positive");
        }
        if (width <= 0 || height <= 0) {
            fail("intrinsics: image size must be positive");
        }
        if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
            fail("intrinsics: principal point must lie inside the image");
        }
    }

    Vec3 back_project(double u, double v, double depth) const {
        return Vec3((u - cx) * depth / fx, (v - cy) * depth / fy, depth);
    }
};

} // namespace splatfuse
