// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Shared scalar types, rigid poses and the error type used across the engine.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace splatfuse {

using Vec3 = Eigen::Vector3d;
using Vec3f = Eigen::Vector3f;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Pose = Eigen::Isometry3d;

using GaussianId = std::uint64_t;
using FrameId = std::int64_t;

/// Failure categories. The CLI maps these onto process exit codes.
enum class ErrorKind {
    InvalidArgument,
    NoMatch,
    Io,
    Oracle,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string &what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(const std::string &what) {
    throw Error(ErrorKind::InvalidArgument, what);
}

[[noreturn]] inline void fail_io(const std::string &what) { throw Error(ErrorKind::Io, what); }

/// Builds an isometry from a 4x4 matrix, rejecting anything that is not a proper
/// rigid transform (orthonormal rotation with det +1, last row 0 0 0 1) within `tol`.
Pose rigid_from_matrix(const Mat4 &m, double tol = 1e-6);

/// True if `m` satisfies the rigid-transform checks of rigid_from_matrix.
bool is_rigid(const Mat4 &m, double tol = 1e-6);

} // namespace splatfuse
