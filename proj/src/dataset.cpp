// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "binary_io.hpp"

namespace splatfuse {

namespace fs = std::filesystem;

void Frame::validate() const {
    const std::string name = "frame " + std::to_string(index);
    if (depth.channels != 1 || depth.width <= 0 || depth.height <= 0) {
        fail(name + ": depth image is empty or not single-channel");
    }
    if (!color.data.empty() &&
        (color.width != depth.width || color.height != depth.height || color.channels != 3)) {
        fail(name + ": color and depth dimensions differ");
    }
    if (!region_map.data.empty() && (region_map.width != depth.width || region_map.height != depth.height)) {
        fail(name + ": region map and depth dimensions differ");
    }
    if (!is_rigid(camera_to_world.matrix())) {
        fail(name + ": pose is not a rigid transform");
    }
    const std::size_t dim = embedding_dim();
    for (const auto &[id, entry] : region_table) {
        if (entry.embedding.size() != dim) {
            fail(name + ": region " + std::to_string(id) + " embedding dimension differs");
        }
        if (!(entry.confidence > 0.0f)) {
            fail(name + ": region " + std::to_string(id) + " confidence must be positive");
        }
        if (std::any_of(entry.embedding.begin(), entry.embedding.end(), [](float v) { return !std::isfinite(v); })) {
            fail(name + ": region " + std::to_string(id) + " embedding is not finite");
        }
    }
    for (std::int32_t id : region_map.data) {
        if (id != -1 && !region_table.contains(id)) {
            fail(name + ": region id " + std::to_string(id) + " has no table entry");
        }
    }
}

bool GroundTruthSegmentation::has_label(int label) const {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
}

std::vector<Vec3> GroundTruthSegmentation::points_of(int label) const {
    std::vector<Vec3> out;
    for (std::size_t n = 0; n < points.size(); ++n) {
        if (labels[n] == label) {
            out.push_back(points[n]);
        }
    }
    return out;
}

std::string GroundTruthSegmentation::name_of(int label) const {
    if (label >= 0 && static_cast<std::size_t>(label) < label_names.size()) {
        return label_names[static_cast<std::size_t>(label)];
    }
    return "label_" + std::to_string(label);
}

std::optional<int> GroundTruthSegmentation::find_label(const std::string &name) const {
    for (std::size_t n = 0; n < label_count(); ++n) {
        if (name_of(static_cast<int>(n)) == name) {
            return static_cast<int>(n);
        }
    }
    return std::nullopt;
}

void GroundTruthSegmentation::validate() const {
    if (points.size() != labels.size()) {
        fail("ground truth: point and label counts differ");
    }
    for (std::int32_t l : labels) {
        if (l < 0 || static_cast<std::size_t>(l) >= label_count()) {
            fail("ground truth: label " + std::to_string(l) + " has no embedding");
        }
    }
    if (!label_names.empty() && label_names.size() != label_count()) {
        fail("ground truth: label name count does not match label count");
    }
}

std::string frame_stem(FrameId index) {
    std::ostringstream os;
    os << std::setw(6) << std::setfill('0') << index;
    return os.str();
}

CameraIntrinsics read_intrinsics(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        fail_io("missing intrinsics file " + path.string());
    }
    CameraIntrinsics k;
    if (!(in >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height)) {
        fail_io("malformed intrinsics file " + path.string());
    }
    try {
        k.validate();
    } catch (const Error &e) {
        fail_io(path.string() + ": " + e.what());
    }
    return k;
}

void write_intrinsics(const fs::path &path, const CameraIntrinsics &k) {
    std::ofstream out(path);
    out << std::setprecision(17) << k.fx << ' ' << k.fy << ' ' << k.cx << ' ' << k.cy << ' ' << k.width << ' '
        << k.height << '\n';
    if (!out) {
        fail_io("cannot write " + path.string());
    }
}

namespace {

std::vector<char> slurp(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail_io("cannot open " + path.string());
    }
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

Mat4 read_pose(const fs::path &path) {
    std::ifstream in(path);
    if (!in) {
        fail_io("cannot open " + path.string());
    }
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            if (!(in >> m(r, c))) {
                fail_io("malformed pose file " + path.string());
            }
        }
    }
    return m;
}

std::map<std::int32_t, RegionEntry> read_region_table(const fs::path &path) {
    const auto bytes = slurp(path);
    if (bytes.size() < 4) {
        fail_io("truncated region table " + path.string());
    }
    std::uint32_t count = 0;
    std::memcpy(&count, bytes.data(), 4);
    std::map<std::int32_t, RegionEntry> table;
    if (count == 0) {
        return table;
    }
    const std::size_t body = bytes.size() - 4;
    if (body % count != 0 || (body / count) < 8 || ((body / count) - 8) % 4 != 0) {
        fail_io("region table " + path.string() + " has inconsistent size");
    }
    const std::size_t dim = (body / count - 8) / 4;
    const char *p = bytes.data() + 4;
    for (std::uint32_t n = 0; n < count; ++n) {
        std::int32_t id = 0;
        RegionEntry e;
        std::memcpy(&id, p, 4);
        std::memcpy(&e.confidence, p + 4, 4);
        e.embedding.resize(dim);
        std::memcpy(e.embedding.data(), p + 8, dim * 4);
        p += 8 + dim * 4;
        if (!table.emplace(id, std::move(e)).second) {
            fail_io("region table " + path.string() + " repeats region " + std::to_string(id));
        }
    }
    return table;
}

} // namespace

DatasetReader::DatasetReader(fs::path root) : root_(std::move(root)) {
    intrinsics_ = read_intrinsics(root_ / "intrinsics.txt");
    const fs::path pose_dir = root_ / "pose";
    if (fs::is_directory(pose_dir)) {
        for (const auto &entry : fs::directory_iterator(pose_dir)) {
            if (entry.path().extension() != ".txt") {
                continue;
            }
            const std::string stem = entry.path().stem().string();
            if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](char c) { return c >= '0' && c <= '9'; })) {
                continue;
            }
            indices_.push_back(std::stoll(stem));
        }
    }
    std::sort(indices_.begin(), indices_.end());
}

Frame DatasetReader::read(std::size_t n) const {
    if (n >= indices_.size()) {
        fail("frame position " + std::to_string(n) + " out of range");
    }
    const FrameId index = indices_[n];
    const std::string stem = frame_stem(index);
    const std::string name = "frame " + std::to_string(index);
    Frame f;
    f.index = index;
    try {
        f.color = read_png_u8(root_ / "color" / (stem + ".png"), 3);
        const ImageU16 mm = read_png_u16(root_ / "depth" / (stem + ".png"));
        f.depth = ImageF(mm.width, mm.height, 1);
        for (std::size_t i = 0; i < mm.data.size(); ++i) {
            f.depth.data[i] = static_cast<float>(mm.data[i]) / 1000.0f;
        }
        const Mat4 pose = read_pose(root_ / "pose" / (stem + ".txt"));
        if (!is_rigid(pose)) {
            fail(name + ": pose is not a rigid transform");
        }
        f.camera_to_world = rigid_from_matrix(pose);

        const fs::path region_bin = root_ / "regions" / (stem + ".bin");
        const fs::path region_tab = root_ / "regions" / (stem + ".tab");
        if (fs::exists(region_bin) && fs::exists(region_tab)) {
            const auto bytes = slurp(region_bin);
            const std::size_t expected = f.depth.pixel_count() * sizeof(std::int32_t);
            if (bytes.size() != expected) {
                fail(name + ": region map size does not match the depth resolution");
            }
            f.region_map = Image<std::int32_t>(f.depth.width, f.depth.height, 1);
            std::memcpy(f.region_map.data.data(), bytes.data(), expected);
            f.region_table = read_region_table(region_tab);
        }
    } catch (const Error &e) {
        const std::string what = e.what();
        throw Error(e.kind(), what.rfind(name, 0) == 0 ? what : name + ": " + what);
    }
    if (f.depth.width != intrinsics_.width || f.depth.height != intrinsics_.height) {
        fail(name + ": depth resolution " + std::to_string(f.depth.width) + "x" + std::to_string(f.depth.height) +
             " does not match intrinsics " + std::to_string(intrinsics_.width) + "x" +
             std::to_string(intrinsics_.height));
    }
    f.validate();
    return f;
}

bool DatasetReader::has_ground_truth() const {
    return fs::exists(root_ / "gt" / "points.ply") && fs::exists(root_ / "gt" / "labels.bin") &&
           fs::exists(root_ / "gt" / "label_embeddings.bin");
}

GroundTruthSegmentation DatasetReader::ground_truth() const { return read_ground_truth(root_); }

void write_frame(const fs::path &root, const Frame &frame) {
    frame.validate();
    const std::string stem = frame_stem(frame.index);
    for (const char *dir : {"color", "depth", "pose", "regions"}) {
        fs::create_directories(root / dir);
    }
    if (!frame.color.data.empty()) {
        write_png(root / "color" / (stem + ".png"), frame.color);
    }
    ImageU16 mm(frame.depth.width, frame.depth.height, 1);
    for (std::size_t i = 0; i < mm.data.size(); ++i) {
        const double v = std::round(static_cast<double>(frame.depth.data[i]) * 1000.0);
        mm.data[i] = static_cast<std::uint16_t>(std::clamp(v, 0.0, 65535.0));
    }
    write_png(root / "depth" / (stem + ".png"), mm);
    {
        std::ofstream out(root / "pose" / (stem + ".txt"));
        out << std::setprecision(17);
        const Mat4 m = frame.camera_to_world.matrix();
        for (int r = 0; r < 4; ++r) {
            out << m(r, 0) << ' ' << m(r, 1) << ' ' << m(r, 2) << ' ' << m(r, 3) << '\n';
        }
        if (!out) {
            fail_io("cannot write pose for frame " + std::to_string(frame.index));
        }
    }
    if (frame.has_semantics()) {
        std::ofstream bin(root / "regions" / (stem + ".bin"), std::ios::binary);
        bin.write(reinterpret_cast<const char *>(frame.region_map.data.data()),
                  static_cast<std::streamsize>(frame.region_map.data.size() * sizeof(std::int32_t)));
        std::ofstream tab(root / "regions" / (stem + ".tab"), std::ios::binary);
        detail::put<std::uint32_t>(tab, static_cast<std::uint32_t>(frame.region_table.size()));
        for (const auto &[id, e] : frame.region_table) {
            detail::put<std::int32_t>(tab, id);
            detail::put<float>(tab, e.confidence);
            tab.write(reinterpret_cast<const char *>(e.embedding.data()),
                      static_cast<std::streamsize>(e.embedding.size() * sizeof(float)));
        }
        if (!bin || !tab) {
            fail_io("cannot write regions for frame " + std::to_string(frame.index));
        }
    }
}

void write_ground_truth(const fs::path &root, const GroundTruthSegmentation &gt) {
    gt.validate();
    const fs::path dir = root / "gt";
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "points.ply", std::ios::binary);
        out << "ply\nformat binary_little_endian 1.0\nelement vertex " << gt.points.size()
            << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
        for (const Vec3 &p : gt.points) {
            for (int a = 0; a < 3; ++a) {
                detail::put<float>(out, static_cast<float>(p[a]));
            }
        }
    }
    {
        std::ofstream out(dir / "labels.bin", std::ios::binary);
        out.write(reinterpret_cast<const char *>(gt.labels.data()),
                  static_cast<std::streamsize>(gt.labels.size() * sizeof(std::int32_t)));
    }
    {
        std::ofstream out(dir / "label_embeddings.bin", std::ios::binary);
        const std::uint32_t dim = gt.label_embeddings.empty() ? 0 : static_cast<std::uint32_t>(gt.label_embeddings[0].size());
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(gt.label_embeddings.size()));
        detail::put<std::uint32_t>(out, dim);
        for (const auto &e : gt.label_embeddings) {
            if (e.size() != dim) {
                fail("ground truth: label embeddings differ in dimension");
            }
            out.write(reinterpret_cast<const char *>(e.data()), static_cast<std::streamsize>(dim * sizeof(float)));
        }
    }
    if (!gt.label_names.empty()) {
        std::ofstream out(dir / "label_names.txt");
        for (const auto &n : gt.label_names) {
            out << n << '\n';
        }
    }
}

GroundTruthSegmentation read_ground_truth(const fs::path &root) {
    const fs::path dir = root / "gt";
    GroundTruthSegmentation gt;
    {
        std::ifstream in(dir / "points.ply", std::ios::binary);
        if (!in) {
            fail_io("missing ground-truth points in " + dir.string());
        }
        std::string line;
        std::size_t count = 0;
        std::size_t props = 0;
        while (std::getline(in, line) && line != "end_header") {
            if (line.rfind("element vertex", 0) == 0) {
                count = std::stoull(line.substr(15));
            } else if (line.rfind("property", 0) == 0) {
                ++props;
            }
        }
        if (props != 3) {
            fail_io("ground-truth points must have exactly x y z float properties");
        }
        gt.points.resize(count);
        for (auto &p : gt.points) {
            for (int a = 0; a < 3; ++a) {
                p[a] = detail::get<float>(in, "ground-truth point");
            }
        }
    }
    {
        const auto bytes = slurp(dir / "labels.bin");
        if (bytes.size() != gt.points.size() * sizeof(std::int32_t)) {
            fail_io("ground-truth label count does not match point count");
        }
        gt.labels.resize(gt.points.size());
        std::memcpy(gt.labels.data(), bytes.data(), bytes.size());
    }
    {
        std::ifstream in(dir / "label_embeddings.bin", std::ios::binary);
        if (!in) {
            fail_io("missing ground-truth label embeddings in " + dir.string());
        }
        const auto count = detail::get<std::uint32_t>(in, "label count");
        const auto dim = detail::get<std::uint32_t>(in, "embedding dimension");
        gt.label_embeddings.assign(count, std::vector<float>(dim));
        for (auto &e : gt.label_embeddings) {
            for (auto &v : e) {
                v = detail::get<float>(in, "label embedding");
            }
        }
    }
    if (std::ifstream names(dir / "label_names.txt"); names) {
        std::string line;
        while (std::getline(names, line)) {
            if (!line.empty()) {
                gt.label_names.push_back(line);
            }
        }
    }
    try {
        gt.validate();
    } catch (const Error &e) {
        fail_io(e.what());
    }
    return gt;
}

} // namespace splatfuse
