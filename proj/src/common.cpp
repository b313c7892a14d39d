// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/common.hpp"

#include <cmath>

namespace splatfuse {

bool is_rigid(const Mat4 &m, double tol) {
    if (!m.allFinite()) {
        return false;
    }
    if (std::abs(m(3, 0)) > tol || std::abs(m(3, 1)) > tol || std::abs(m(3, 2)) > tol ||
        std::abs(m(3, 3) - 1.0) > tol) {
        return false;
    }
    const Mat3 r = m.topLeftCorner<3, 3>();
    const Mat3 gram = r.transpose() * r;
    if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() > tol) {
        return false;
    }
    return std::abs(r.determinant() - 1.0) <= tol * 3.0;
}

Pose rigid_from_matrix(const Mat4 &m, double tol) {
    if (!is_rigid(m, tol)) {
        fail("pose is not a rigid transform (rotation must be orthonormal within tolerance)");
    }
    Pose pose = Pose::Identity();
    pose.linear() = m.topLeftCorner<3, 3>();
    pose.translation() = m.topRightCorner<3, 1>();
    return pose;
}

} // namespace splatfuse
