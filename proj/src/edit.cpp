// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/edit.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace splatfuse {

EditCommand EditCommand::translate(std::size_t target, const Vec3 &t) {
    EditCommand c;
    c.verb = EditVerb::Translate;
    c.target = target;
    c.translation = t;
    return c;
}

EditCommand EditCommand::rotate(std::size_t target, const Vec3 &rpy) {
    EditCommand c;
    c.verb = EditVerb::Rotate;
    c.target = target;
    c.rotation_rpy = rpy;
    return c;
}

EditCommand EditCommand::remove(std::size_t target) {
    EditCommand c;
    c.verb = EditVerb::Delete;
    c.target = target;
    return c;
}

std::string to_string(EditVerb verb) {
    switch (verb) {
    case EditVerb::Translate:
        return "translate";
    case EditVerb::Rotate:
        return "rotate";
    case EditVerb::Delete:
        return "delete";
    }
    return "unknown";
}

EditVerb parse_edit_verb(const std::string &text) {
    if (text == "translate") {
        return EditVerb::Translate;
    }
    if (text == "rotate") {
        return EditVerb::Rotate;
    }
    if (text == "delete") {
        return EditVerb::Delete;
    }
    fail("unknown edit verb '" + text + "' (expected translate, rotate or delete)");
}

Mat3 rotation_from_rpy(const Vec3 &rpy) {
    return (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
            Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
        .toRotationMatrix();
}

Vec3 rpy_from_rotation(const Mat3 &r) {
    const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
    const double roll = std::atan2(r(2, 1), r(2, 2));
    const double yaw = std::atan2(r(1, 0), r(0, 0));
    return Vec3(roll, pitch, yaw);
}

EditReport apply_edit(GaussianMap &map, SparseVoxelGrid &grid, std::span<const GaussianId> ids,
                      const EditCommand &command) {
    std::vector<GaussianId> missing;
    for (GaussianId id : ids) {
        if (!map.contains(id)) {
            missing.push_back(id);
        }
    }
    if (!missing.empty()) {
        std::string list;
        for (GaussianId id : missing) {
            list += (list.empty() ? "" : ", ") + std::to_string(id);
        }
        fail("edit target contains stale gaussian ids: " + list);
    }

    EditReport report;
    report.verb = command.verb;
    report.target = command.target;
    report.ids.assign(ids.begin(), ids.end());
    switch (command.verb) {
    case EditVerb::Translate:
        for (GaussianId id : ids) {
            const GaussianPrimitive &g = *map.find(id);
            map.update_shape(id, g.mean + command.translation, g.covariance, grid);
        }
        break;
    case EditVerb::Rotate: {
        Vec3 pivot = Vec3::Zero();
        for (GaussianId id : ids) {
            pivot += map.find(id)->mean;
        }
        if (!ids.empty()) {
            pivot /= static_cast<double>(ids.size());
        }
        report.pivot = pivot;
        const Mat3 r = rotation_from_rpy(command.rotation_rpy);
        for (GaussianId id : ids) {
            const GaussianPrimitive &g = *map.find(id);
            const Mat3 cov = r * g.covariance * r.transpose();
            map.update_shape(id, r * (g.mean - pivot) + pivot, 0.5 * (cov + cov.transpose()), grid);
        }
        break;
    }
    case EditVerb::Delete:
        for (GaussianId id : ids) {
            map.remove(id, grid);
        }
        break;
    }
    return report;
}

EditReport apply_edit(GaussianMap &map, SparseVoxelGrid &grid, const QueryResult &result,
                      const EditCommand &command) {
    if (command.target >= result.clusters.size()) {
        fail("edit target cluster " + std::to_string(command.target) + " does not exist (query has " +
             std::to_string(result.clusters.size()) + ")");
    }
    return apply_edit(map, grid, result.clusters[command.target].selected, command);
}

namespace {

/// Eigenvectors of a covariance, with degenerate eigenspaces replaced by a basis aligned
/// to the world axes so that symmetric shapes get a stable frame.
std::array<Vec3, 3> principal_basis(const Eigen::Vector3d &values, const Mat3 &vectors) {
    const double tol = 1e-6 * std::max(std::abs(values.maxCoeff()), 1e-300);
    const bool eq01 = std::abs(values[0] - values[1]) <= tol;
    const bool eq12 = std::abs(values[1] - values[2]) <= tol;
    if (eq01 && eq12) {
        return {Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ()};
    }
    std::array<Vec3, 3> out{vectors.col(0).normalized(), vectors.col(1).normalized(),
                            vectors.col(2).normalized()};
    if (eq01 || eq12) {
        const int lone = eq01 ? 2 : 0;
        const Vec3 normal = out[lone];
        int best = 0;
        for (int k = 1; k < 3; ++k) {
            if (std::abs(normal[k]) < std::abs(normal[best])) {
                best = k;
            }
        }
        Vec3 a = Vec3::Unit(best) - normal[best] * normal;
        a.normalize();
        const Vec3 b = normal.cross(a);
        if (eq01) {
            out[0] = a;
            out[1] = b;
        } else {
            out[1] = a;
            out[2] = b;
        }
    }
    return out;
}

} // namespace

ObjectDescriptor object_descriptor(std::span<const Vec3> points) {
    if (points.empty()) {
        fail("object descriptor needs at least one point");
    }
    ObjectDescriptor d;
    Vec3 mean = Vec3::Zero();
    for (const Vec3 &p : points) {
        mean += p;
    }
    mean /= static_cast<double>(points.size());
    if (points.size() == 1) {
        d.center = points.front();
        return d;
    }
    Mat3 cov = Mat3::Zero();
    for (const Vec3 &p : points) {
        cov += (p - mean) * (p - mean).transpose();
    }
    cov /= static_cast<double>(points.size());
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);

    std::array<Vec3, 3> axes;
    std::array<Vec3, 3> lo;
    std::array<double, 3> extent{};
    std::array<double, 3> mid{};
    std::array<int, 3> dominant{};
    std::array<Vec3, 3> basis = principal_basis(eig.eigenvalues(), eig.eigenvectors());
    for (int a = 0; a < 3; ++a) {
        Vec3 axis = basis[a];
        axis.cwiseAbs().maxCoeff(&dominant[a]);
        if (axis[dominant[a]] < 0.0) {
            axis = -axis;
        }
        axes[a] = axis;
        double mn = std::numeric_limits<double>::infinity();
        double mx = -mn;
        for (const Vec3 &p : points) {
            const double t = (p - mean).dot(axis);
            mn = std::min(mn, t);
            mx = std::max(mx, t);
        }
        extent[a] = mx - mn;
        mid[a] = 0.5 * (mn + mx);
    }
    std::array<int, 3> order{0, 1, 2};
    // Extents within a relative 1e-9 count as equal and fall back to the dominant axis.
    const double scale = std::max({extent[0], extent[1], extent[2], 1e-300});
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (std::abs(extent[a] - extent[b]) > 1e-9 * scale) {
            return extent[a] > extent[b];
        }
        return dominant[a] < dominant[b];
    });
    d.center = mean;
    for (int n = 0; n < 3; ++n) {
        const int a = order[n];
        d.axes.col(n) = axes[a];
        d.dims[n] = extent[a];
        d.center += mid[a] * axes[a];
    }
    if (d.axes.determinant() < 0.0) {
        d.axes.col(2) = -d.axes.col(2);
    }
    d.angles = rpy_from_rotation(d.axes);
    return d;
}

ObjectDescriptor object_descriptor(std::span<const GaussianId> ids, const GaussianMap &map) {
    std::vector<Vec3> points;
    points.reserve(ids.size());
    for (GaussianId id : ids) {
        const GaussianPrimitive *g = map.find(id);
        if (!g) {
            fail("object descriptor: unknown gaussian id " + std::to_string(id));
        }
        points.push_back(g->mean);
    }
    return object_descriptor(points);
}

} // namespace splatfuse
