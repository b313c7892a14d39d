// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/cli.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>
#include <tbb/global_control.h>

#include "splatfuse/config.hpp"
#include "splatfuse/dataset.hpp"
#include "splatfuse/edit.hpp"
#include "splatfuse/engine.hpp"
#include "splatfuse/eval.hpp"
#include "splatfuse/oracle.hpp"
#include "splatfuse/splat_render.hpp"
#include "splatfuse/synth.hpp"

namespace splatfuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Vec3 parse_vec3(const std::string &text, const std::string &what) {
    Vec3 v;
    std::istringstream in(text);
    char sep = 0;
    if (!(in >> v.x() >> sep) || sep != ',' || !(in >> v.y() >> sep) || sep != ',' || !(in >> v.z()) ||
        !(in >> std::ws).eof()) {
        fail(what + " expects x,y,z, got '" + text + "'");
    }
    return v;
}

std::vector<float> read_embedding_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail_io("cannot open embedding file " + path.string());
    }
    if (path.extension() == ".json") {
        try {
            return json::parse(in).get<std::vector<float>>();
        } catch (const json::exception &e) {
            fail_io("malformed embedding file " + path.string() + ": " + e.what());
        }
    }
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    if (bytes.empty() || bytes.size() % sizeof(float) != 0) {
        fail_io("embedding file " + path.string() + " is not a whole number of f32 values");
    }
    std::vector<float> e(bytes.size() / sizeof(float));
    std::memcpy(e.data(), bytes.data(), bytes.size());
    return e;
}

json descriptor_json(const ObjectDescriptor &d) {
    return {{"center", {d.center.x(), d.center.y(), d.center.z()}},
            {"dims", {d.dims.x(), d.dims.y(), d.dims.z()}},
            {"angles", {d.angles.x(), d.angles.y(), d.angles.z()}}};
}

json result_json(const QueryResult &r) {
    json clusters = json::array();
    for (const auto &c : r.clusters) {
        json rounds = json::array();
        for (const auto &rr : c.rounds) {
            json per_view = json::array();
            for (double v : rr.per_view_best) {
                per_view.push_back(std::isnan(v) ? json(nullptr) : json(v));
            }
            rounds.push_back({{"window", {rr.window.lo, rr.window.hi}},
                              {"thresholds", rr.thresholds},
                              {"viewpoints", rr.viewpoints},
                              {"per_view_best", per_view},
                              {"chosen", rr.chosen}});
        }
        clusters.push_back({{"id", c.cluster_id},
                            {"threshold", c.threshold},
                            {"members", c.cluster.members.size()},
                            {"centroid", {c.cluster.centroid.x(), c.cluster.centroid.y(), c.cluster.centroid.z()}},
                            {"selected", c.selected},
                            {"descriptor", descriptor_json(c.descriptor)},
                            {"viewpoints", c.viewpoints},
                            {"rounds", rounds}});
    }
    return {{"query", r.query}, {"strategy", r.strategy}, {"warnings", r.warnings}, {"clusters", clusters}};
}

/// Collects candidate renders and writes one grid per (cluster, round): rows are
/// viewpoints, columns are thresholds.
class GridSink final : public RenderSink {
public:
    void on_render(std::size_t cluster, std::size_t round, FrameId viewpoint, std::size_t candidate, double,
                   const RenderOutput &render) override {
        std::lock_guard lock(mutex_);
        images_[{cluster, round}][viewpoint][candidate] = to_rgb8(render);
    }

    void write(const fs::path &dir) const {
        fs::create_directories(dir);
        for (const auto &[key, views] : images_) {
            int cell_w = 0;
            int cell_h = 0;
            std::size_t cols = 0;
            for (const auto &[view, cands] : views) {
                for (const auto &[c, img] : cands) {
                    cell_w = std::max(cell_w, img.width);
                    cell_h = std::max(cell_h, img.height);
                    cols = std::max(cols, c + 1);
                }
            }
            ImageU8 grid(cell_w * static_cast<int>(cols), cell_h * static_cast<int>(views.size()), 3);
            int row = 0;
            for (const auto &[view, cands] : views) {
                for (const auto &[c, img] : cands) {
                    for (int y = 0; y < img.height; ++y) {
                        for (int x = 0; x < img.width; ++x) {
                            for (int ch = 0; ch < 3; ++ch) {
                                grid.at(static_cast<int>(c) * cell_w + x, row * cell_h + y, ch) = img.at(x, y, ch);
                            }
                        }
                    }
                }
                ++row;
            }
            write_png(dir / ("cluster" + std::to_string(key.first) + "_round" + std::to_string(key.second) + ".png"),
                      grid);
        }
    }

private:
    std::mutex mutex_;
    std::map<std::pair<std::size_t, std::size_t>, std::map<FrameId, std::map<std::size_t, ImageU8>>> images_;
};

std::string default_oracle(const std::string &dataset) {
    return dataset.empty() ? std::string() : "scripted:" + (fs::path(dataset) / "gt" / "oracle.json").string();
}

struct QueryText {
    std::vector<float> embedding;
    std::string text;
};

QueryText resolve_query(const std::string &dataset_dir, const std::string &label, const std::string &embedding_file,
                        const std::string &text) {
    QueryText q;
    q.text = text;
    if (!label.empty()) {
        if (dataset_dir.empty()) {
            fail("a label query needs --dataset for the ground-truth embeddings");
        }
        const auto gt = read_ground_truth(dataset_dir);
        const auto l = gt.find_label(label);
        if (!l) {
            fail("unknown label '" + label + "'");
        }
        q.embedding = gt.label_embeddings[static_cast<std::size_t>(*l)];
        if (q.text.empty()) {
            q.text = label;
        }
    } else if (!embedding_file.empty()) {
        q.embedding = read_embedding_file(embedding_file);
        if (q.text.empty()) {
            q.text = fs::path(embedding_file).stem().string();
        }
    } else {
        fail("query needs a label or --embedding");
    }
    return q;
}

QueryResult run_query(const Engine &engine, const QueryText &q, const std::optional<double> &fixed,
                      std::string oracle_spec, const std::string &dataset_dir, RenderSink *sink) {
    if (fixed) {
        return engine.fixed(q.embedding, q.text, *fixed);
    }
    if (oracle_spec.empty()) {
        oracle_spec = default_oracle(dataset_dir);
    }
    if (oracle_spec.empty()) {
        fail("adaptive query needs --oracle");
    }
    const auto &config = engine.config();
    const auto oracle = make_oracle(oracle_spec, config.oracle_timeout, config.oracle_retries);
    return engine.adaptive(q.embedding, q.text, *oracle, sink);
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::NoMatch:
        return kExitNoMatch;
    case ErrorKind::Io:
        return kExitIo;
    case ErrorKind::Oracle:
        return kExitOracle;
    case ErrorKind::InvalidArgument:
        break;
    }
    return kExitFailure;
}

} // namespace

int run_cli(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Open-vocabulary RGB-D mapping with a sparse TSDF grid and Gaussian primitives", "splatfuse"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_file;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> workers;
    app.add_option("--config", config_file, "key = value config file")->check(CLI::ExistingFile);
    app.add_option("--set", overrides, "config override key=value (repeatable)");
    app.add_option("--seed", seed, "random seed");
    app.add_option("--workers", workers, "worker threads (0 = all cores)");

    std::string dataset_dir, map_dir, out_path, label, embedding_file, text, oracle_spec, selection_file, verb,
        offset, rpy, pose_file, csv_out, preset = "two_objects";
    std::optional<double> fixed;
    std::optional<FrameId> frame;
    std::optional<int> frames;
    std::size_t cluster = 0;
    std::vector<std::string> strategies;

    auto *map_cmd = app.add_subcommand("map", "build a map from a dataset");
    map_cmd->add_option("--dataset", dataset_dir, "dataset directory")->required();
    map_cmd->add_option("--out", map_dir, "output map directory")->required();

    auto *query_cmd = app.add_subcommand("query", "answer a text query against a map");
    query_cmd->add_option("--map", map_dir, "map directory")->required();
    query_cmd->add_option("--dataset", dataset_dir, "dataset whose ground truth supplies --label embeddings");
    query_cmd->add_option("--label", label, "ground-truth label name to query");
    query_cmd->add_option("--embedding", embedding_file, "query embedding (.json array or raw f32)");
    query_cmd->add_option("--text", text, "query text passed to the oracle");
    query_cmd->add_option("--oracle", oracle_spec, "scripted:<file> | constant:<value> | http://host:port/path");
    query_cmd->add_option("--fixed", fixed, "use a single fixed threshold instead of the adaptive loop");
    query_cmd->add_option("--out", out_path, "output directory")->required();

    auto *edit_cmd = app.add_subcommand("edit", "move, rotate or delete a queried object");
    edit_cmd->add_option("--map", map_dir, "map directory")->required();
    edit_cmd->add_option("--selection", selection_file, "result.json written by query");
    edit_cmd->add_option("--query", label, "label to query instead of --selection (needs --dataset)");
    edit_cmd->add_option("--embedding", embedding_file, "query embedding instead of --selection");
    edit_cmd->add_option("--dataset", dataset_dir, "dataset whose ground truth supplies label embeddings");
    edit_cmd->add_option("--oracle", oracle_spec, "oracle spec for the query");
    edit_cmd->add_option("--fixed", fixed, "query with a fixed threshold");
    edit_cmd->add_option("--cluster", cluster, "cluster index in the selection");
    edit_cmd->add_option("--verb", verb, "translate | rotate | delete")->required();
    edit_cmd->add_option("--t,--offset", offset, "translation x,y,z in meters");
    edit_cmd->add_option("--rpy", rpy, "rotation roll,pitch,yaw in radians");
    edit_cmd->add_option("--out", out_path, "output map directory (default: overwrite --map)");

    auto *render_cmd = app.add_subcommand("render", "render a map from a keyframe or an explicit pose");
    render_cmd->add_option("--map", map_dir, "map directory")->required();
    render_cmd->add_option("--frame", frame, "keyframe id to render from");
    render_cmd->add_option("--pose", pose_file, "4x4 camera-to-world file (uses the first keyframe's intrinsics)");
    render_cmd->add_option("--out", out_path, "output directory for color.png and depth.png (mm)")->required();

    auto *eval_cmd = app.add_subcommand("eval", "segmentation benchmark over every ground-truth label");
    eval_cmd->add_option("--dataset", dataset_dir, "dataset with ground truth")->required();
    eval_cmd->add_option("--map", map_dir, "prebuilt map (built from the dataset when omitted)");
    eval_cmd->add_option("--strategy", strategies, "adaptive | fixed:<threshold> (repeatable)");
    eval_cmd->add_option("--oracle", oracle_spec, "oracle spec (default: the dataset's scripted masks)");
    eval_cmd->add_option("--out", out_path, "JSON report")->required();
    eval_cmd->add_option("--csv", csv_out, "CSV mirror of the report");

    auto *synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
    synth_cmd->add_option("--preset", preset, "two_objects | ablation | sphere");
    synth_cmd->add_option("--frames", frames, "override the frame count");
    synth_cmd->add_option("--out", out_path, "output directory")->required();

    std::vector<std::string> argv_store;
    argv_store.reserve(args.size() + 1);
    argv_store.emplace_back("splatfuse");
    argv_store.insert(argv_store.end(), args.begin(), args.end());
    std::vector<const char *> argv;
    for (const auto &a : argv_store) {
        argv.push_back(a.c_str());
    }
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitFailure;
    }

    try {
        EngineConfig config;
        if (!config_file.empty()) {
            config.merge_file(config_file);
        }
        for (const auto &kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                fail("--set expects key=value, got '" + kv + "'");
            }
            config.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed) {
            config.seed = *seed;
        }
        if (workers) {
            config.workers = *workers;
        }
        config.validate();
        std::optional<tbb::global_control> parallelism;
        if (config.workers > 0) {
            parallelism.emplace(tbb::global_control::max_allowed_parallelism,
                                static_cast<std::size_t>(config.workers));
        }

        if (*map_cmd) {
            const DatasetReader dataset(dataset_dir);
            const Engine engine = build_map(dataset, config);
            engine.save(map_dir);
            const auto &s = engine.stats();
            out << "frames=" << s.frames << " keyframes=" << s.keyframes << " voxels=" << s.voxels
                << " primitives=" << s.primitives << '\n';
            return kExitOk;
        }

        if (*query_cmd) {
            const Engine engine = Engine::load(map_dir, config);
            const QueryText q = resolve_query(dataset_dir, label, embedding_file, text);
            fs::create_directories(out_path);
            GridSink sink;
            const QueryResult result = run_query(engine, q, fixed, oracle_spec, dataset_dir, &sink);
            if (!fixed) {
                sink.write(fs::path(out_path) / "renders");
            }
            {
                std::ofstream f(fs::path(out_path) / "result.json");
                f << result_json(result).dump(2) << '\n';
            }
            {
                std::ofstream f(fs::path(out_path) / "selected.ply", std::ios::binary);
                write_ply(f, engine.gaussians(), result.all_selected());
            }
            for (const auto &w : result.warnings) {
                err << "warning: " << w << '\n';
            }
            for (const auto &c : result.clusters) {
                out << "cluster " << c.cluster_id << ": threshold=" << c.threshold << " selected=" << c.selected.size()
                    << '\n';
            }
            return kExitOk;
        }

        if (*edit_cmd) {
            Engine engine = Engine::load(map_dir, config);
            std::vector<GaussianId> ids;
            if (!selection_file.empty()) {
                std::ifstream in(selection_file);
                if (!in) {
                    fail_io("cannot open selection " + selection_file);
                }
                try {
                    const json doc = json::parse(in);
                    const auto &clusters = doc.at("clusters");
                    if (cluster >= clusters.size()) {
                        fail("selection has no cluster " + std::to_string(cluster));
                    }
                    ids = clusters.at(cluster).at("selected").get<std::vector<GaussianId>>();
                } catch (const json::exception &e) {
                    fail_io("malformed selection " + selection_file + ": " + e.what());
                }
            } else {
                const QueryText q = resolve_query(dataset_dir, label, embedding_file, text);
                const QueryResult result = run_query(engine, q, fixed, oracle_spec, dataset_dir, nullptr);
                if (cluster >= result.clusters.size()) {
                    fail("query has no cluster " + std::to_string(cluster));
                }
                ids = result.clusters[cluster].selected;
            }
            EditCommand command;
            switch (parse_edit_verb(verb)) {
            case EditVerb::Translate:
                command = EditCommand::translate(cluster, parse_vec3(offset, "--offset"));
                break;
            case EditVerb::Rotate:
                command = EditCommand::rotate(cluster, parse_vec3(rpy, "--rpy"));
                break;
            case EditVerb::Delete:
                command = EditCommand::remove(cluster);
                break;
            }
            const EditReport report = apply_edit(engine.gaussians(), engine.grid(), ids, command);
            engine.save(out_path.empty() ? map_dir : out_path);
            out << json{{"verb", to_string(report.verb)},
                        {"target", report.target},
                        {"ids", report.ids},
                        {"pivot", {report.pivot.x(), report.pivot.y(), report.pivot.z()}}}
                       .dump()
                << '\n';
            return kExitOk;
        }

        if (*render_cmd) {
            const Engine engine = Engine::load(map_dir, config);
            Pose camera_to_world = Pose::Identity();
            CameraIntrinsics intrinsics;
            if (engine.keyframes().empty()) {
                fail("map has no keyframes to take intrinsics from");
            }
            if (!pose_file.empty()) {
                std::ifstream in(pose_file);
                Mat4 m;
                for (int n = 0; n < 16; ++n) {
                    if (!(in >> m(n / 4, n % 4))) {
                        fail_io("malformed pose file " + pose_file);
                    }
                }
                camera_to_world = rigid_from_matrix(m);
                intrinsics = engine.keyframes().front().intrinsics;
            } else {
                const FrameId want = frame.value_or(engine.keyframes().front().frame_id);
                const auto it = std::find_if(engine.keyframes().begin(), engine.keyframes().end(),
                                             [&](const Keyframe &k) { return k.frame_id == want; });
                if (it == engine.keyframes().end()) {
                    fail("no keyframe with id " + std::to_string(want));
                }
                camera_to_world = it->camera_to_world;
                intrinsics = it->intrinsics;
            }
            std::vector<GaussianId> ids;
            for (const auto &[id, g] : engine.gaussians().primitives()) {
                ids.push_back(id);
            }
            const auto image =
                render(ids, engine.gaussians(), camera_to_world.inverse(), intrinsics, config.query().background);
            fs::create_directories(out_path);
            write_png(fs::path(out_path) / "color.png", to_rgb8(image));
            write_png(fs::path(out_path) / "depth.png", to_depth_mm(image));
            return kExitOk;
        }

        if (*eval_cmd) {
            const DatasetReader dataset(dataset_dir);
            if (!dataset.has_ground_truth()) {
                fail_io("dataset " + dataset_dir + " has no ground truth");
            }
            const auto gt = dataset.ground_truth();
            const Engine engine = map_dir.empty() ? build_map(dataset, config) : Engine::load(map_dir, config);
            if (strategies.empty()) {
                strategies.push_back("adaptive");
            }
            std::vector<Strategy> parsed;
            for (const auto &s : strategies) {
                parsed.push_back(Strategy::parse(s));
            }
            if (oracle_spec.empty()) {
                oracle_spec = default_oracle(dataset_dir);
            }
            const auto oracle = make_oracle(oracle_spec, config.oracle_timeout, config.oracle_retries);
            std::vector<SegmentationScore> scores;
            for (const auto &s : parsed) {
                scores.push_back(segmentation_benchmark(engine, gt, s, *oracle));
                out << scores.back().strategy << ": miou=" << scores.back().miou << " macc=" << scores.back().macc
                    << '\n';
            }
            const std::string hash = fnv1a_hex(engine.config().to_string());
            {
                std::ofstream f(out_path);
                write_report_json(f, scores, hash);
                if (!f) {
                    fail_io("cannot write " + out_path);
                }
            }
            if (!csv_out.empty()) {
                std::ofstream f(csv_out);
                write_report_csv(f, scores);
            }
            return kExitOk;
        }

        if (*synth_cmd) {
            SynthSpec spec = synth_preset(preset);
            if (frames) {
                spec.frames = *frames;
            }
            const SynthScene scene(spec, config.seed);
            write_synth_dataset(scene, out_path);
            out << "wrote " << scene.frame_count() << " frames to " << out_path << '\n';
            return kExitOk;
        }
    } catch (const Error &e) {
        err << "error: " << e.what() << '\n';
        return exit_code_for(e.kind());
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}

} // namespace splatfuse
