// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <Eigen/QR>
#include <absl/container/flat_hash_set.h>
#include <json.hpp>

#include "splatfuse/sparse_grid.hpp"

namespace splatfuse {

namespace fs = std::filesystem;

namespace {

constexpr double kTouchTol = 1e-9;
constexpr double kRayEps = 1e-9;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Vec3 aabb_min(const SynthObject &o) {
    return o.shape == ShapeKind::Box ? Vec3(o.center - o.half_extents) : Vec3(o.center.array() - o.radius);
}
Vec3 aabb_max(const SynthObject &o) {
    return o.shape == ShapeKind::Box ? Vec3(o.center + o.half_extents) : Vec3(o.center.array() + o.radius);
}

double box_point_distance(const Vec3 &lo, const Vec3 &hi, const Vec3 &p) {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(Vec3::Zero());
    return d.norm();
}

bool overlaps(const SynthObject &a, const SynthObject &b) {
    if (a.shape == ShapeKind::Sphere && b.shape == ShapeKind::Sphere) {
        return (a.center - b.center).norm() < a.radius + b.radius - kTouchTol;
    }
    if (a.shape == ShapeKind::Box && b.shape == ShapeKind::Box) {
        const Vec3 lo = aabb_min(a).cwiseMax(aabb_min(b));
        const Vec3 hi = aabb_max(a).cwiseMin(aabb_max(b));
        return ((hi - lo).array() > kTouchTol).all();
    }
    const SynthObject &box = a.shape == ShapeKind::Box ? a : b;
    const SynthObject &ball = a.shape == ShapeKind::Box ? b : a;
    return box_point_distance(aabb_min(box), aabb_max(box), ball.center) < ball.radius - kTouchTol;
}

std::optional<double> intersect_box(const Vec3 &lo, const Vec3 &hi, const Vec3 &o, const Vec3 &d) {
    double t0 = -std::numeric_limits<double>::infinity();
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
            if (o[a] < lo[a] || o[a] > hi[a]) {
                return std::nullopt;
            }
            continue;
        }
        double ta = (lo[a] - o[a]) / d[a];
        double tb = (hi[a] - o[a]) / d[a];
        if (ta > tb) {
            std::swap(ta, tb);
        }
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t1 <= kRayEps) {
        return std::nullopt;
    }
    return t0 > kRayEps ? t0 : t1;
}

std::optional<double> intersect_sphere(const Vec3 &c, double r, const Vec3 &o, const Vec3 &d) {
    const Vec3 oc = o - c;
    const double b = oc.dot(d);
    const double disc = b * b - (oc.squaredNorm() - r * r);
    if (disc < 0.0) {
        return std::nullopt;
    }
    const double s = std::sqrt(disc);
    if (-b - s > kRayEps) {
        return -b - s;
    }
    if (-b + s > kRayEps) {
        return -b + s;
    }
    return std::nullopt;
}

std::vector<float> to_float_unit(const Eigen::VectorXd &v) {
    const Eigen::VectorXd u = v.normalized();
    return std::vector<float>(u.data(), u.data() + u.size());
}

} // namespace

void SynthSpec::validate() const {
    const int labels = static_cast<int>(label_names.size());
    std::vector<int> used(static_cast<std::size_t>(labels), 0);
    for (std::size_t n = 0; n < objects.size(); ++n) {
        const auto &o = objects[n];
        const std::string name = "object " + std::to_string(n);
        if (o.shape == ShapeKind::Box && !(o.half_extents.array() > 0.0).all()) {
            fail(name + ": box half extents must be positive");
        }
        if (o.shape == ShapeKind::Sphere && !(o.radius > 0.0)) {
            fail(name + ": sphere radius must be positive");
        }
        if (o.label >= labels || o.label < -1) {
            fail(name + ": label " + std::to_string(o.label) + " has no name");
        }
        if (o.label >= 0) {
            ++used[static_cast<std::size_t>(o.label)];
            if (!(o.lower_cosine > 0.0 && o.lower_cosine <= 1.0)) {
                fail(name + ": lower_cosine must be in (0, 1]");
            }
        } else if (o.affinity_label >= labels || o.affinity_label < -1 ||
                   !(o.affinity_cosine >= 0.0 && o.affinity_cosine < 1.0)) {
            fail(name + ": invalid affinity");
        }
        if (room) {
            const Vec3 lo = aabb_min(o);
            const Vec3 hi = aabb_max(o);
            if (lo.z() < -kTouchTol || hi.z() > room_height + kTouchTol ||
                std::max(std::abs(lo.x()), std::abs(hi.x())) > room_half_width + kTouchTol ||
                std::max(std::abs(lo.y()), std::abs(hi.y())) > room_half_width + kTouchTol) {
                fail(name + ": leaves the room");
            }
        }
        for (std::size_t m = 0; m < n; ++m) {
            if (overlaps(objects[m], o)) {
                fail("objects " + std::to_string(m) + " and " + std::to_string(n) + " overlap");
            }
        }
    }
    for (int l = 0; l < labels; ++l) {
        if (used[static_cast<std::size_t>(l)] == 0) {
            fail("label " + std::to_string(l) + " is not carried by any object");
        }
    }
    if (!(inter_object_cosine >= 0.0 && inter_object_cosine < 1.0)) {
        fail("inter_object_cosine must be in [0, 1)");
    }
    const int needed = 2 * labels + 1 + (inter_object_cosine > 0.0 ? 1 : 0);
    if (embedding_dim < needed) {
        fail("embedding_dim " + std::to_string(embedding_dim) + " too small for " + std::to_string(labels) +
             " labels (need " + std::to_string(needed) + ")");
    }
    if (poses.empty() && frames <= 0) {
        fail("synthetic scene needs at least one frame");
    }
    if (!(gt_spacing > 0.0)) {
        fail("gt_spacing must be positive");
    }
    intrinsics.validate();
}

Pose look_at_pose(const Vec3 &eye, const Vec3 &target) {
    const Vec3 f = (target - eye).normalized();
    Vec3 up(0.0, 0.0, 1.0);
    if (f.cross(up).norm() < 1e-9) {
        up = Vec3(0.0, 1.0, 0.0);
    }
    const Vec3 r = f.cross(up).normalized();
    const Vec3 d = f.cross(r);
    Pose pose = Pose::Identity();
    pose.linear().col(0) = r;
    pose.linear().col(1) = d;
    pose.linear().col(2) = f;
    pose.translation() = eye;
    return pose;
}

SynthScene::SynthScene(SynthSpec spec, std::uint64_t seed) : spec_(std::move(spec)), seed_(seed) {
    spec_.validate();
    const int dim = spec_.embedding_dim;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    Eigen::MatrixXd random(dim, dim);
    for (int c = 0; c < dim; ++c) {
        for (int r = 0; r < dim; ++r) {
            random(r, c) = normal(rng);
        }
    }
    const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(random).householderQ();
    const int labels = static_cast<int>(spec_.label_names.size());
    const double rho = spec_.inter_object_cosine;
    const Eigen::VectorXd shared = rho > 0.0 ? Eigen::VectorXd(basis.col(2 * labels + 1)) : Eigen::VectorXd::Zero(dim);
    const Eigen::VectorXd wall = basis.col(2 * labels);
    std::vector<Eigen::VectorXd> label_vec;
    for (int l = 0; l < labels; ++l) {
        label_vec.push_back(std::sqrt(rho) * shared + std::sqrt(1.0 - rho) * basis.col(l));
        label_embeddings_.push_back(to_float_unit(label_vec.back()));
    }
    const auto mix = [&](int label, double c) -> Eigen::VectorXd {
        return c * label_vec[static_cast<std::size_t>(label)].normalized() +
               std::sqrt(std::max(0.0, 1.0 - c * c)) * basis.col(labels + label);
    };
    region_embeddings_.push_back(to_float_unit(wall));
    for (const auto &o : spec_.objects) {
        if (o.label >= 0) {
            region_embeddings_.push_back(label_embeddings_[static_cast<std::size_t>(o.label)]);
            region_embeddings_.push_back(to_float_unit(mix(o.label, o.lower_cosine)));
        } else {
            const auto e = o.affinity_label >= 0 ? to_float_unit(mix(o.affinity_label, o.affinity_cosine))
                                                 : to_float_unit(wall);
            region_embeddings_.push_back(e);
            region_embeddings_.push_back(e);
        }
    }
}

int SynthScene::frame_count() const {
    return spec_.poses.empty() ? spec_.frames : static_cast<int>(spec_.poses.size());
}

Pose SynthScene::pose(int frame) const {
    if (frame < 0 || frame >= frame_count()) {
        fail("synthetic frame " + std::to_string(frame) + " out of range");
    }
    if (!spec_.poses.empty()) {
        return spec_.poses[static_cast<std::size_t>(frame)];
    }
    const double theta = 2.0 * std::numbers::pi * frame / spec_.frames;
    const Vec3 eye(spec_.look_at.x() + spec_.orbit_radius * std::cos(theta),
                   spec_.look_at.y() + spec_.orbit_radius * std::sin(theta), spec_.orbit_height);
    return look_at_pose(eye, spec_.look_at);
}

std::optional<SynthHit> SynthScene::cast(const Vec3 &o, const Vec3 &d) const {
    std::optional<SynthHit> best;
    const auto offer = [&](double t, std::int32_t region, int object) {
        if (!best || t < best->t) {
            best = SynthHit{t, region, object};
        }
    };
    for (std::size_t n = 0; n < spec_.objects.size(); ++n) {
        const auto &obj = spec_.objects[n];
        const auto t = obj.shape == ShapeKind::Box
                           ? intersect_box(obj.center - obj.half_extents, obj.center + obj.half_extents, o, d)
                           : intersect_sphere(obj.center, obj.radius, o, d);
        if (t) {
            const double z = o.z() + *t * d.z();
            const auto upper = static_cast<std::int32_t>(1 + 2 * n);
            offer(*t, z >= obj.center.z() ? upper : upper + 1, static_cast<int>(n));
        }
    }
    if (spec_.room) {
        const double h = spec_.room_half_width;
        const double tol = 1e-12;
        if (d.z() < 0.0) {
            const double t = -o.z() / d.z();
            const Vec3 p = o + t * d;
            if (t > kRayEps && std::abs(p.x()) <= h + tol && std::abs(p.y()) <= h + tol) {
                offer(t, 0, -1);
            }
        }
        for (int a = 0; a < 2; ++a) {
            for (double side : {-h, h}) {
                if (d[a] == 0.0 || (side > 0.0) != (d[a] > 0.0)) {
                    continue;
                }
                const double t = (side - o[a]) / d[a];
                const Vec3 p = o + t * d;
                if (t > kRayEps && std::abs(p[1 - a]) <= h + tol && p.z() >= -tol && p.z() <= spec_.room_height + tol) {
                    offer(t, 0, -1);
                }
            }
        }
    }
    return best;
}

double SynthScene::surface_distance(const Vec3 &p) const {
    double best = std::numeric_limits<double>::infinity();
    for (const auto &o : spec_.objects) {
        if (o.shape == ShapeKind::Sphere) {
            best = std::min(best, std::abs((p - o.center).norm() - o.radius));
        } else {
            const Vec3 q = (p - o.center).cwiseAbs() - o.half_extents;
            const double outside = q.cwiseMax(Vec3::Zero()).norm();
            const double inside = std::min(q.maxCoeff(), 0.0);
            best = std::min(best, std::abs(outside + inside));
        }
    }
    if (spec_.room) {
        const double h = spec_.room_half_width;
        best = std::min({best, std::abs(p.z()), std::abs(p.x() - h), std::abs(p.x() + h), std::abs(p.y() - h),
                         std::abs(p.y() + h)});
    }
    return best;
}

const std::vector<float> &SynthScene::region_embedding(std::int32_t region) const {
    if (region < 0 || static_cast<std::size_t>(region) >= region_embeddings_.size()) {
        fail("unknown synthetic region " + std::to_string(region));
    }
    return region_embeddings_[static_cast<std::size_t>(region)];
}

int SynthScene::label_of_region(std::int32_t region) const {
    if (region <= 0) {
        return -1;
    }
    return spec_.objects[static_cast<std::size_t>((region - 1) / 2)].label;
}

float SynthScene::confidence(int frame, std::int32_t region) const {
    const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed_) ^ static_cast<std::uint64_t>(frame)) ^
                                       static_cast<std::uint64_t>(region));
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return static_cast<float>(0.5 + 0.5 * u);
}

Frame SynthScene::render_frame(int frame) const {
    const auto &k = spec_.intrinsics;
    const Pose pose = this->pose(frame);
    Frame f;
    f.index = frame;
    f.camera_to_world = pose;
    f.color = ImageU8(k.width, k.height, 3);
    f.depth = ImageF(k.width, k.height, 1);
    f.region_map = Image<std::int32_t>(k.width, k.height, 1, -1);
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            const Vec3 ray_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            const Vec3 dir = pose.linear() * ray_cam.normalized();
            const auto hit = cast(pose.translation(), dir);
            if (!hit) {
                continue;
            }
            const double depth_mm = std::round(hit->t / ray_cam.norm() * 1000.0);
            if (depth_mm <= 0.0 || depth_mm > 65535.0) {
                continue;
            }
            f.depth.at(u, v) = static_cast<float>(depth_mm / 1000.0);
            f.region_map.at(u, v) = hit->region;
            std::array<std::uint8_t, 3> rgb{170, 170, 180};
            if (hit->object >= 0) {
                rgb = spec_.objects[static_cast<std::size_t>(hit->object)].color;
                if (hit->region % 2 == 0) {
                    for (auto &c : rgb) {
                        c = static_cast<std::uint8_t>(c * 7 / 10);
                    }
                }
            } else if (std::abs((pose.translation() + hit->t * dir).z()) < 1e-6) {
                rgb = {140, 120, 100};
            }
            for (int c = 0; c < 3; ++c) {
                f.color.at(u, v, c) = rgb[static_cast<std::size_t>(c)];
            }
            if (!f.region_table.contains(hit->region)) {
                f.region_table.emplace(hit->region, RegionEntry{region_embedding(hit->region), confidence(frame, hit->region)});
            }
        }
    }
    return f;
}

ImageU8 SynthScene::label_mask(int frame, int label) const {
    const auto &k = spec_.intrinsics;
    const Pose pose = this->pose(frame);
    ImageU8 mask(k.width, k.height, 1);
    for (int v = 0; v < k.height; ++v) {
        for (int u = 0; u < k.width; ++u) {
            const Vec3 dir = pose.linear() * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalized();
            const auto hit = cast(pose.translation(), dir);
            if (hit && hit->object >= 0 && label_of_region(hit->region) == label) {
                mask.at(u, v) = 255;
            }
        }
    }
    return mask;
}

GroundTruthSegmentation SynthScene::ground_truth() const {
    GroundTruthSegmentation gt;
    gt.label_embeddings = label_embeddings_;
    gt.label_names = spec_.label_names;
    const auto &k = spec_.intrinsics;
    absl::flat_hash_set<VoxelKey> seen;
    for (int frame = 0; frame < frame_count(); ++frame) {
        const Pose pose = this->pose(frame);
        for (int v = 0; v < k.height; ++v) {
            for (int u = 0; u < k.width; ++u) {
                const Vec3 dir = pose.linear() * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0).normalized();
                const auto hit = cast(pose.translation(), dir);
                if (!hit || hit->object < 0) {
                    continue;
                }
                const int label = label_of_region(hit->region);
                if (label < 0) {
                    continue;
                }
                const Vec3 p = pose.translation() + hit->t * dir;
                if (seen.insert(world_to_voxel(p, spec_.gt_spacing)).second) {
                    gt.points.push_back(p);
                    gt.labels.push_back(label);
                }
            }
        }
    }
    return gt;
}

void write_synth_dataset(const SynthScene &scene, const fs::path &root) {
    fs::create_directories(root);
    write_intrinsics(root / "intrinsics.txt", scene.spec().intrinsics);
    const int labels = static_cast<int>(scene.spec().label_names.size());
    nlohmann::json queries = nlohmann::json::object();
    for (int frame = 0; frame < scene.frame_count(); ++frame) {
        write_frame(root, scene.render_frame(frame));
        for (int l = 0; l < labels; ++l) {
            const std::string name = scene.spec().label_names[static_cast<std::size_t>(l)];
            const fs::path rel = fs::path("masks") / name / (frame_stem(frame) + ".png");
            fs::create_directories(root / "gt" / rel.parent_path());
            write_png(root / "gt" / rel, scene.label_mask(frame, l));
            queries[name][std::to_string(frame)] = rel.generic_string();
        }
    }
    write_ground_truth(root, scene.ground_truth());
    std::ofstream out(root / "gt" / "oracle.json");
    out << nlohmann::json{{"queries", queries}}.dump(2) << '\n';
    if (!out) {
        fail_io("cannot write " + (root / "gt" / "oracle.json").string());
    }
}

SynthSpec two_object_spec() {
    SynthSpec spec;
    spec.label_names = {"box", "ball"};
    SynthObject box;
    box.shape = ShapeKind::Box;
    box.center = Vec3(-0.72, -0.17, 0.19);
    box.half_extents = Vec3::Constant(0.19);
    box.color = {210, 50, 40};
    box.label = 0;
    SynthObject ball;
    ball.shape = ShapeKind::Sphere;
    ball.center = Vec3(0.7, 0.3, 0.25);
    ball.radius = 0.25;
    ball.color = {40, 80, 220};
    ball.label = 1;
    spec.objects = {box, ball};
    return spec;
}

SynthSpec sphere_spec() {
    SynthSpec spec;
    spec.room = false;
    spec.label_names = {"sphere"};
    SynthObject ball;
    ball.shape = ShapeKind::Sphere;
    ball.center = Vec3(0.0, 0.0, 0.5);
    ball.radius = 0.3;
    ball.color = {220, 180, 40};
    ball.label = 0;
    spec.objects = {ball};
    spec.frames = 10;
    spec.orbit_radius = 1.2;
    spec.orbit_height = 0.9;
    spec.look_at = ball.center;
    return spec;
}

std::vector<double> ablation_targets() { return {0.55, 0.62, 0.69, 0.76, 0.83, 0.90}; }

SynthSpec ablation_spec() {
    SynthSpec spec;
    spec.label_names = {"mug", "globe", "crate", "lamp", "ball", "radio"};
    spec.room_half_width = 2.6;
    spec.room_height = 2.0;
    spec.frames = 40;
    spec.orbit_radius = 2.1;
    spec.orbit_height = 1.3;
    spec.look_at = Vec3(0.0, 0.0, 0.1);
    const std::array<std::array<std::uint8_t, 3>, 6> colors{
        {{200, 60, 60}, {60, 160, 70}, {60, 90, 200}, {210, 170, 40}, {160, 60, 190}, {40, 170, 170}}};
    const auto targets = ablation_targets();
    const double ring = 1.0;
    const double half = 0.16;
    const double clutter_half = 0.11;
    for (int k = 0; k < 6; ++k) {
        const double theta = k * std::numbers::pi / 3.0;
        SynthObject obj;
        obj.shape = (k == 1 || k == 4) ? ShapeKind::Sphere : ShapeKind::Box;
        obj.half_extents = Vec3::Constant(half);
        obj.radius = half;
        obj.center = Vec3(ring * std::cos(theta), ring * std::sin(theta), half);
        obj.color = colors[static_cast<std::size_t>(k)];
        obj.label = k;
        obj.lower_cosine = targets[static_cast<std::size_t>(k)] + 0.04;

        // Distractor touching the object along the axis closest to the ring tangent.
        const Vec3 tangent(-std::sin(theta), std::cos(theta), 0.0);
        const int axis = std::abs(tangent.x()) > std::abs(tangent.y()) ? 0 : 1;
        Vec3 offset = Vec3::Zero();
        offset[axis] = (tangent[axis] > 0.0 ? 1.0 : -1.0) * (half + clutter_half);
        SynthObject clutter;
        clutter.shape = ShapeKind::Box;
        clutter.half_extents = Vec3::Constant(clutter_half);
        clutter.center = Vec3(obj.center.x() + offset.x(), obj.center.y() + offset.y(), clutter_half);
        clutter.color = {150, 150, 120};
        clutter.affinity_label = k;
        clutter.affinity_cosine = targets[static_cast<std::size_t>(k)] - 0.06;

        spec.objects.push_back(obj);
        spec.objects.push_back(clutter);
    }
    return spec;
}

SynthSpec synth_preset(const std::string &name) {
    if (name == "two_objects") {
        return two_object_spec();
    }
    if (name == "ablation") {
        return ablation_spec();
    }
    if (name == "sphere") {
        return sphere_spec();
    }
    fail("unknown synthetic preset '" + name + "' (expected two_objects, ablation or sphere)");
}

} // namespace splatfuse
