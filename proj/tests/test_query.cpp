// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "splatfuse/dbscan.hpp"
#include "splatfuse/engine.hpp"
#include "splatfuse/eval.hpp"
#include "splatfuse/oracle.hpp"
#include "splatfuse/query.hpp"
#include "splatfuse/similarity.hpp"
#include "splatfuse/synth.hpp"

using namespace splatfuse;

namespace {

const CameraIntrinsics kCam{100.0, 100.0, 50.0, 50.0, 100, 100};

void set_feature(SparseVoxelGrid &grid, const VoxelKey &key, const std::vector<float> &f, float conf = 1.0f) {
    grid.ensure_feature_dim(f.size());
    const VoxelIndex v = grid.get_or_insert(key);
    std::copy(f.begin(), f.end(), grid.feature(v).begin());
    grid.voxel(v).confidence = conf;
    grid.voxel(v).tsdf = 0.0f;
}

/// Sixteen voxels in a row at z = 1 whose raw similarity to (1, 0) is n / 15, each with
/// a handful of opaque primitives.
struct RowScene {
    SparseVoxelGrid grid{0.05, 0.07};
    GaussianMap map{0.001};
    std::vector<VoxelKey> keys;
    std::vector<Keyframe> keyframes;
    std::vector<float> query{1.0f, 0.0f};

    RowScene() {
        GaussianId next = 1;
        for (int n = 0; n < 16; ++n) {
            const VoxelKey key{n - 8, 0, 20};
            const double r = n / 15.0;
            set_feature(grid, key, {static_cast<float>(r), static_cast<float>(std::sqrt(1.0 - r * r))});
            keys.push_back(key);
            for (int m = 0; m < 4; ++m) {
                GaussianPrimitive g;
                g.id = next++;
                g.mean = voxel_center(key, 0.05) + Vec3(0.01 * (m % 2) - 0.005, 0.01 * (m / 2) - 0.005, 0.0);
                g.covariance = Mat3::Identity() * 1e-4;
                g.opacity = 0.95f;
                g.color = Vec3f(0.8f, 0.1f, 0.1f);
                map.insert(g, grid);
            }
        }
        for (FrameId f = 0; f < 2; ++f) {
            Keyframe kf;
            kf.frame_id = f;
            kf.camera_to_world = Pose(Eigen::Translation3d(0.02 * f, 0.0, 0.0));
            kf.intrinsics = kCam;
            keyframes.push_back(kf);
        }
    }

    Cluster everything() const {
        Cluster c;
        for (const auto &[id, g] : map.primitives()) {
            c.members.push_back(id);
            c.centroid += g.mean;
        }
        c.centroid /= static_cast<double>(c.members.size());
        c.region = keys;
        return c;
    }
};

ImageU8 coverage_mask(const RenderOutput &r) {
    ImageU8 m(r.width, r.height, 1);
    for (std::size_t i = 0; i < r.alpha.size(); ++i) {
        m.data[i] = r.alpha[i] > 0.5f ? 255 : 0;
    }
    return m;
}

} // namespace

TEST_CASE("similarity field normalisation") {
    SparseVoxelGrid grid(0.05, 0.07);
    set_feature(grid, {0, 0, 0}, {1.0f, 0.0f});
    set_feature(grid, {1, 0, 0}, {0.0f, 1.0f});
    set_feature(grid, {2, 0, 0}, {0.5f, static_cast<float>(std::sqrt(0.75))});
    grid.get_or_insert({3, 0, 0}); // no semantics
    const std::vector<float> q{1.0f, 0.0f};
    const SimilarityField f = similarity_field(grid, q);
    CHECK(f.size() == 3);
    CHECK(f.find({0, 0, 0})->raw == doctest::Approx(1.0));
    CHECK(*f.normalized({0, 0, 0}) == doctest::Approx(1.0));
    CHECK(*f.normalized({1, 0, 0}) == doctest::Approx(0.0));
    CHECK(*f.normalized({2, 0, 0}) == doctest::Approx(0.5));
    CHECK_FALSE(f.normalized({3, 0, 0}));

    CHECK(seed_selection(f, 0.8).size() == 1);
    CHECK(seed_selection(f, 0.0).size() == 3);
    CHECK(seed_selection(f, 1.0) == std::vector<VoxelKey>{{0, 0, 0}});
}

TEST_CASE("similarity field degenerate and error cases") {
    SparseVoxelGrid grid(0.05, 0.07);
    const std::vector<float> q{0.0f, 1.0f};
    try {
        similarity_field(grid, q);
        FAIL("expected an error");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::NoMatch);
        CHECK(std::string(e.what()).find("empty semantic map") != std::string::npos);
    }
    set_feature(grid, {0, 0, 0}, {0.6f, 0.8f});
    set_feature(grid, {0, 1, 0}, {0.6f, 0.8f});
    const SimilarityField f = similarity_field(grid, q);
    CHECK(*f.normalized({0, 0, 0}) == 0.5);
    CHECK(*f.normalized({0, 1, 0}) == 0.5);
    const std::vector<float> bad{0.5f, 0.5f};
    CHECK_THROWS_AS(similarity_field(grid, bad), Error);
}

TEST_CASE("similarity is invariant to feature scale") {
    SparseVoxelGrid a(0.05, 0.07);
    SparseVoxelGrid b(0.05, 0.07);
    std::mt19937 rng(4);
    std::normal_distribution<float> g;
    for (int n = 0; n < 30; ++n) {
        std::vector<float> f{g(rng), g(rng), g(rng)};
        set_feature(a, {n, 0, 0}, f);
        for (float &x : f) {
            x *= 3.5f;
        }
        set_feature(b, {n, 0, 0}, f);
    }
    const std::vector<float> q{0.0f, 0.6f, 0.8f};
    const SimilarityField fa = similarity_field(a, q);
    const SimilarityField fb = similarity_field(b, q);
    for (int n = 0; n < 30; ++n) {
        CHECK(fa.find({n, 0, 0})->raw == doctest::Approx(fb.find({n, 0, 0})->raw).epsilon(1e-6));
    }
    CHECK(seed_selection(fa, 0.7) == seed_selection(fb, 0.7));
}

TEST_CASE("dbscan examples") {
    std::vector<Vec3> pts;
    std::mt19937 rng(6);
    std::uniform_real_distribution<double> jitter(-0.02, 0.02);
    for (int blob = 0; blob < 3; ++blob) {
        for (int n = 0; n < 20; ++n) {
            pts.emplace_back(blob * 1.0 + jitter(rng), jitter(rng), jitter(rng));
        }
    }
    const auto r = dbscan(pts, 0.1, 5);
    CHECK(r.cluster_count == 3);
    CHECK(std::count(r.labels.begin(), r.labels.end(), kNoise) == 0);
    CHECK(oracle::same_partition(r.labels, oracle::brute_dbscan(pts, 0.1, 5)));

    const std::vector<Vec3> lone{Vec3(0, 0, 0)};
    CHECK(dbscan(lone, 0.1, 2).labels == std::vector<int>{kNoise});

    const std::vector<Vec3> same(12, Vec3(1, 2, 3));
    const auto s = dbscan(same, 0.1, 10);
    CHECK(s.cluster_count == 1);
    CHECK(std::count(s.labels.begin(), s.labels.end(), 0) == 12);

    CHECK_THROWS_AS(dbscan(same, 0.0, 10), Error);
    CHECK_THROWS_AS(dbscan(same, 0.1, 0), Error);
}

TEST_CASE("dbscan agrees with the brute-force reference") {
    std::mt19937 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<Vec3> pts;
        const int n = 50 + 40 * trial;
        for (int k = 0; k < n; ++k) {
            pts.emplace_back(u(rng), u(rng), 0.3 * u(rng));
        }
        const double eps = 0.04 + 0.01 * (trial % 4);
        const int min_pts = 2 + trial % 5;
        CHECK(oracle::same_partition(dbscan(pts, eps, min_pts).labels, oracle::brute_dbscan(pts, eps, min_pts)));
    }
}

TEST_CASE("keyframe score arithmetic") {
    CHECK(keyframe_score(1.0, 0.0, 0.01) == doctest::Approx(100.0));
    CHECK(keyframe_score(0.0, 3.0, 0.01) == 0.0);
    CHECK(keyframe_score(0.5, 0.99, 0.01) == doctest::Approx(0.5));
}

TEST_CASE("score_keyframes ranks by coverage over distance") {
    RowScene s;
    Cluster c = s.everything();
    std::vector<Keyframe> kfs;
    for (FrameId f = 0; f < 5; ++f) {
        Keyframe kf;
        kf.frame_id = f;
        kf.intrinsics = kCam;
        kf.camera_to_world = Pose(Eigen::Translation3d(0.0, 0.0, -0.1 * f));
        kfs.push_back(kf);
    }
    // facing away: never visible
    kfs[3].camera_to_world = Pose(Eigen::AngleAxisd(M_PI, Vec3::UnitY()));
    const auto top = score_keyframes(c, s.map, kfs, 3, 0.01);
    REQUIRE(top.size() == 3);
    for (std::size_t k = 1; k < top.size(); ++k) {
        CHECK(top[k - 1].score >= top[k].score);
    }
    for (const auto &t : top) {
        CHECK(t.keyframe->frame_id != 3);
        CHECK(t.score == doctest::Approx(t.coverage / (t.distance + 0.01)));
    }
    CHECK(score_keyframes(c, s.map, kfs, 10, 0.01).size() == 4);

    // identical keyframes tie and are broken by frame id
    std::vector<Keyframe> twins{kfs[0], kfs[0]};
    twins[0].frame_id = 9;
    twins[1].frame_id = 2;
    const auto t = score_keyframes(c, s.map, twins, 1, 0.01);
    REQUIRE(t.size() == 1);
    CHECK(t[0].keyframe->frame_id == 2);
}

TEST_CASE("threshold sampling and windows") {
    const auto t = sample_thresholds(ThresholdWindow(0.5, 1.0));
    CHECK(t == std::array<double, 5>{0.5, 0.625, 0.75, 0.875, 1.0});
    const auto n = sample_thresholds(ThresholdWindow(0.6, 0.6 + 4e-9));
    for (int k = 1; k < 5; ++k) {
        CHECK(n[k] > n[k - 1]);
    }
    CHECK(n.front() == 0.6);
    CHECK(n.back() == 0.6 + 4e-9);

    const auto w = ThresholdWindow::around(0.7, 0.2);
    CHECK(w.lo == doctest::Approx(0.5));
    CHECK(w.hi == doctest::Approx(0.9));
    const auto clipped = ThresholdWindow::around(0.95, 0.2);
    CHECK(clipped.lo == doctest::Approx(0.75));
    CHECK(clipped.hi == 1.0);
    CHECK_THROWS_AS(ThresholdWindow(0.7, 0.7), Error);
    CHECK_THROWS_AS(ThresholdWindow(-0.1, 0.5), Error);
}

TEST_CASE("lower median") {
    CHECK(lower_median({0.625, 0.75, 0.875}) == 0.75);
    CHECK(lower_median({0.875, 0.5}) == 0.5);
    CHECK(lower_median({0.3}) == 0.3);
}

TEST_CASE("selection is monotone in the threshold") {
    RowScene s;
    const SimilarityField f = similarity_field(s.grid, s.query);
    std::vector<GaussianId> prev;
    for (int step = 20; step >= 0; --step) {
        const double th = 0.05 * step;
        const auto sel = select_in_region(s.grid, f, s.keys, th);
        CHECK(std::includes(sel.begin(), sel.end(), prev.begin(), prev.end()));
        prev = sel;
    }
    CHECK(prev.size() == s.map.size());
}

TEST_CASE("evaluate_round with a hidden-mask judge") {
    RowScene s;
    const SimilarityField field = similarity_field(s.grid, s.query);
    const Cluster cluster = s.everything();
    QueryConfig cfg;

    // the hidden masks are the coverage of the selection at 0.75
    MaskIouOracle::MaskTable table;
    const auto at75 = select_in_region(s.grid, field, cluster.region, 0.75);
    for (const auto &kf : s.keyframes) {
        const RenderOutput r = render(at75, s.map, kf.camera_to_world.inverse(), kf.intrinsics, cfg.background);
        table[""][kf.frame_id] = coverage_mask(r);
    }
    const MaskIouOracle judge(std::move(table));

    const auto views = score_keyframes(cluster, s.map, s.keyframes, 3, 0.01);
    REQUIRE(views.size() == 2);
    const auto thresholds = sample_thresholds(ThresholdWindow(0.5, 1.0));
    RoundRecord rec;
    const double best = evaluate_round(s.grid, s.map, cluster, field, thresholds, views, judge, "row", cfg, &rec);
    CHECK(best == 0.75);
    CHECK(rec.per_view_best == std::vector<double>{0.75, 0.75});

    const std::vector<ScoredKeyframe> one{views[0]};
    CHECK(evaluate_round(s.grid, s.map, cluster, field, thresholds, one, ConstantOptimumOracle(0.9), "row", cfg) ==
          0.875);
}

namespace {

/// Picks a fixed index per viewpoint, failing on the ones listed.
class ScriptedIndexOracle final : public ThresholdOracle {
public:
    ScriptedIndexOracle(std::map<FrameId, std::size_t> picks) : picks_(std::move(picks)) {}
    std::size_t best_index(std::string_view, FrameId viewpoint, std::span<const OracleCandidate>) const override {
        const auto it = picks_.find(viewpoint);
        if (it == picks_.end()) {
            throw Error(ErrorKind::Oracle, "no opinion");
        }
        return it->second;
    }

private:
    std::map<FrameId, std::size_t> picks_;
};

} // namespace

TEST_CASE("evaluate_round aggregates with the lower median and skips failed views") {
    RowScene s;
    for (FrameId f = 2; f < 4; ++f) {
        Keyframe kf = s.keyframes[0];
        kf.frame_id = f;
        s.keyframes.push_back(kf);
    }
    const SimilarityField field = similarity_field(s.grid, s.query);
    const Cluster cluster = s.everything();
    const auto views = score_keyframes(cluster, s.map, s.keyframes, 4, 0.01);
    REQUIRE(views.size() == 4);
    const auto th = sample_thresholds(ThresholdWindow(0.5, 1.0));
    QueryConfig cfg;

    const ScriptedIndexOracle three({{0, 1}, {1, 2}, {2, 3}});
    RoundRecord rec;
    CHECK(evaluate_round(s.grid, s.map, cluster, field, th, views, three, "q", cfg, &rec) == 0.75);
    CHECK(std::count_if(rec.per_view_best.begin(), rec.per_view_best.end(), [](double x) { return std::isnan(x); }) ==
          1);

    const ScriptedIndexOracle two({{0, 4}, {3, 0}});
    CHECK(evaluate_round(s.grid, s.map, cluster, field, th, views, two, "q", cfg) == 0.5);

    const ScriptedIndexOracle none({});
    try {
        evaluate_round(s.grid, s.map, cluster, field, th, views, none, "q", cfg);
        FAIL("expected an error");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::Oracle);
    }
}

TEST_CASE("adaptive query converges for a constant judge") {
    RowScene s;
    QueryConfig cfg;
    cfg.dbscan_min_pts = 2;
    for (double target : {0.55, 0.7, 0.85}) {
        const auto r = adaptive_query(s.grid, s.map, s.keyframes, s.query, "row", ConstantOptimumOracle(target), cfg);
        REQUIRE(r.clusters.size() == 1);
        const auto &c = r.clusters[0];
        REQUIRE(c.rounds.size() == 2);
        CHECK(c.rounds[0].window.lo == 0.5);
        CHECK(c.rounds[0].window.hi == 1.0);
        CHECK(c.rounds[1].window.width() <= 0.4 + 1e-12);
        for (const auto &round : c.rounds) {
            CHECK(round.chosen >= round.window.lo);
            CHECK(round.chosen <= round.window.hi);
        }
        CHECK(std::abs(c.threshold - target) <= c.rounds[1].window.width() / 4.0 + 1e-9);
        CHECK(c.threshold >= 0.0);
        CHECK(c.threshold <= 1.0);
        const auto expect = select_in_region(s.grid, similarity_field(s.grid, s.query), c.cluster.region, c.threshold);
        CHECK(c.selected == expect);
    }
}

TEST_CASE("query failure modes") {
    RowScene s;
    QueryConfig cfg; // min_pts 10: the seed voxels hold only 4 primitives each
    cfg.dbscan_eps = 0.01;
    try {
        fixed_query(s.grid, s.map, s.query, "row", 0.8, cfg);
        FAIL("expected no match");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::NoMatch);
    }

    QueryConfig ok;
    ok.dbscan_min_pts = 2;
    std::vector<Keyframe> blind = s.keyframes;
    for (auto &kf : blind) {
        kf.camera_to_world = Pose(Eigen::AngleAxisd(M_PI, Vec3::UnitY()));
    }
    try {
        adaptive_query(s.grid, s.map, blind, s.query, "row", ConstantOptimumOracle(0.7), ok);
        FAIL("expected no match");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::NoMatch);
    }

    GaussianMap empty(0.01);
    CHECK_THROWS_AS(fixed_query(s.grid, empty, s.query, "row", 0.6, ok), Error);
    CHECK_THROWS_AS(fixed_query(s.grid, s.map, s.query, "row", 1.5, ok), Error);
}

TEST_CASE("fixed query at 1 keeps only the best voxels") {
    RowScene s;
    QueryConfig cfg;
    cfg.dbscan_min_pts = 2;
    const auto r = fixed_query(s.grid, s.map, s.query, "row", 1.0, cfg);
    const auto all = r.all_selected();
    REQUIRE(all.size() == 4);
    for (GaussianId id : all) {
        CHECK(s.map.find(id)->home_voxel == s.keys.back());
    }
    const auto lower = fixed_query(s.grid, s.map, s.query, "row", 0.6, cfg).all_selected();
    CHECK(std::includes(lower.begin(), lower.end(), all.begin(), all.end()));
}

TEST_CASE("two-object scene: each query isolates its object") {
    SynthScene scene(two_object_spec(), 0);
    EngineConfig cfg;
    cfg.keyframe_interval = 2;
    cfg.admit_tsdf = -0.05;
    cfg.prune_tsdf = -0.06;
    Engine engine(cfg);
    for (int f = 0; f < scene.frame_count(); ++f) {
        engine.process_frame(scene.render_frame(f), scene.spec().intrinsics);
    }
    const auto gt = scene.ground_truth();
    for (int label = 0; label < 2; ++label) {
        MaskIouOracle::MaskTable masks;
        for (const auto &kf : engine.keyframes()) {
            masks[""][kf.frame_id] = scene.label_mask(static_cast<int>(kf.frame_id), label);
        }
        const MaskIouOracle judge(std::move(masks));
        const auto r = engine.adaptive(gt.label_embeddings[label], gt.name_of(label), judge);
        const auto sel = r.all_selected();
        CHECK(iou3d(sel, engine.gaussians(), gt, label, 0.05) >= 0.8);
        CHECK(iou3d(sel, engine.gaussians(), gt, 1 - label, 0.05) == 0.0);
        for (const auto &c : r.clusters) {
            CHECK(c.rounds.size() == 2);
        }
    }
}
