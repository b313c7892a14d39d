// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/engine.hpp"

#include <fstream>

#include <json.hpp>

namespace splatfuse {

namespace fs = std::filesystem;
using nlohmann::json;

Engine::Engine(EngineConfig config)
    : config_((config.validate(), config)),
      grid_(config_.voxel_size, config_.truncation, 0, config_.max_weight),
      gaussians_(config_.effective_overlap_radius()) {}

FrameReport Engine::process_frame(const Frame &frame, const CameraIntrinsics &intrinsics) {
    FrameReport report;
    report.frame = frame.index;
    report.integration = integrate_frame(grid_, frame, intrinsics, config_.fusion());
    ++stats_.frames;
    if (is_keyframe(frame.index, config_.keyframe_interval)) {
        report.keyframe = true;
        ++stats_.keyframes;
        keyframes_.push_back(Keyframe{frame.index, frame.camera_to_world, intrinsics});

        const auto samples = downsample_depth(frame, intrinsics, config_.effective_downsample_step());
        report.samples = samples.size();
        for (auto &g : init_gaussians(samples, config_.knn, grid_.voxel_size(), frame.index)) {
            if (gaussians_.admit(std::move(g), grid_, config_.admit_tsdf)) {
                ++report.admitted;
            }
        }
        if (frame.has_semantics()) {
            for (const auto &s : samples) {
                const auto it = frame.region_table.find(s.region);
                if (it == frame.region_table.end()) {
                    continue;
                }
                const VoxelIndex v = grid_.get_or_insert(world_to_voxel(s.point, grid_.voxel_size()));
                fuse_semantics(grid_, v, it->second.embedding, it->second.confidence);
            }
        }
        report.pruned = gaussians_.prune(grid_, config_.prune_tsdf);
    }
    stats_.admitted += report.admitted;
    stats_.pruned += report.pruned;
    stats_.voxels = grid_.size();
    stats_.primitives = gaussians_.size();
    return report;
}

QueryResult Engine::adaptive(std::span<const float> text, std::string_view query_text, const ThresholdOracle &oracle,
                             RenderSink *sink) const {
    return adaptive_query(grid_, gaussians_, keyframes_, text, query_text, oracle, config_.query(), sink);
}

QueryResult Engine::fixed(std::span<const float> text, std::string_view query_text, double threshold) const {
    return fixed_query(grid_, gaussians_, text, query_text, threshold, config_.query());
}

void Engine::save(const fs::path &dir) const {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "grid.gsfg", std::ios::binary);
        grid_.save(out);
        if (!out) {
            fail_io("cannot write " + (dir / "grid.gsfg").string());
        }
    }
    {
        std::ofstream out(dir / "gaussians.ply", std::ios::binary);
        write_ply(out, gaussians_);
        if (!out) {
            fail_io("cannot write " + (dir / "gaussians.ply").string());
        }
    }
    json frames = json::array();
    for (const auto &kf : keyframes_) {
        std::vector<double> pose;
        const Mat4 m = kf.camera_to_world.matrix();
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) {
                pose.push_back(m(r, c));
            }
        }
        const auto &k = kf.intrinsics;
        frames.push_back({{"frame_id", kf.frame_id},
                          {"camera_to_world", pose},
                          {"intrinsics", {k.fx, k.fy, k.cx, k.cy, k.width, k.height}}});
    }
    std::ofstream out(dir / "keyframes.json");
    out << json{{"keyframes", frames}}.dump(1) << '\n';
    if (!out) {
        fail_io("cannot write " + (dir / "keyframes.json").string());
    }
}

Engine Engine::load(const fs::path &dir, EngineConfig config) {
    std::ifstream grid_in(dir / "grid.gsfg", std::ios::binary);
    if (!grid_in) {
        fail_io("cannot open map snapshot " + (dir / "grid.gsfg").string());
    }
    SparseVoxelGrid grid = SparseVoxelGrid::load(grid_in, config.max_weight);
    config.voxel_size = grid.voxel_size();
    config.truncation = grid.truncation();
    Engine engine(config);
    engine.grid_ = std::move(grid);
    for (std::size_t i = 0; i < engine.grid_.size(); ++i) {
        engine.grid_.voxel(static_cast<VoxelIndex>(i)).gaussians.clear();
    }
    std::ifstream ply(dir / "gaussians.ply", std::ios::binary);
    if (!ply) {
        fail_io("cannot open " + (dir / "gaussians.ply").string());
    }
    for (auto &g : read_ply(ply, engine.grid_.voxel_size())) {
        engine.gaussians_.insert(std::move(g), engine.grid_);
    }
    std::ifstream kf_in(dir / "keyframes.json");
    if (!kf_in) {
        fail_io("cannot open " + (dir / "keyframes.json").string());
    }
    try {
        const json doc = json::parse(kf_in);
        for (const auto &f : doc.at("keyframes")) {
            const auto pose = f.at("camera_to_world").get<std::vector<double>>();
            const auto k = f.at("intrinsics").get<std::vector<double>>();
            if (pose.size() != 16 || k.size() != 6) {
                fail_io("malformed keyframe entry");
            }
            Mat4 m;
            for (int n = 0; n < 16; ++n) {
                m(n / 4, n % 4) = pose[static_cast<std::size_t>(n)];
            }
            Keyframe kf{f.at("frame_id").get<FrameId>(), rigid_from_matrix(m),
                        CameraIntrinsics{k[0], k[1], k[2], k[3], static_cast<int>(k[4]), static_cast<int>(k[5])}};
            engine.keyframes_.push_back(kf);
        }
    } catch (const json::exception &e) {
        fail_io("malformed keyframes.json: " + std::string(e.what()));
    }
    engine.stats_.keyframes = engine.keyframes_.size();
    engine.stats_.voxels = engine.grid_.size();
    engine.stats_.primitives = engine.gaussians_.size();
    return engine;
}

Engine build_map(const DatasetReader &dataset, const EngineConfig &config, const FrameCallback &on_frame) {
    if (dataset.size() == 0) {
        fail_io("no frames in dataset " + dataset.root().string());
    }
    Engine engine(config);
    for (std::size_t n = 0; n < dataset.size(); ++n) {
        const auto report = engine.process_frame(dataset.read(n), dataset.intrinsics());
        if (on_frame) {
            on_frame(report);
        }
    }
    return engine;
}

} // namespace splatfuse
