// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sstream>

#include <json.hpp>

#include "splatfuse/cli.hpp"
#include "splatfuse/dataset.hpp"
#include "splatfuse/gaussian_map.hpp"
#include "splatfuse/image.hpp"
#include "test_support.hpp"

using namespace splatfuse;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

/// One small synthetic dataset and map shared by the CLI cases.
struct Fixture {
    testing::TempDir root{"cli"};
    fs::path data = root / "data";
    fs::path map = root / "map";

    Fixture() {
        REQUIRE(cli({"--seed", "3", "synth", "--preset", "two_objects", "--out", data.string()}).code == 0);
        const Run r = cli({"--set", "keyframe_interval=2", "--set", "admit_tsdf=-0.05", "--set", "prune_tsdf=-0.06",
                           "map", "--dataset", data.string(), "--out", map.string()});
        REQUIRE(r.code == kExitOk);
    }
};

Fixture &fixture() {
    static Fixture f;
    return f;
}

} // namespace

TEST_CASE("help lists the commands and their flags") {
    const Run top = cli({"--help"});
    CHECK(top.code == kExitOk);
    for (const char *s : {"--config", "--set", "--seed", "--workers", "map", "query", "edit", "render", "eval", "synth"}) {
        CHECK_MESSAGE(top.out.find(s) != std::string::npos, s);
    }
    const std::map<std::string, std::vector<std::string>> flags{
        {"map", {"--dataset", "--out"}},
        {"query", {"--map", "--dataset", "--label", "--embedding", "--text", "--oracle", "--fixed", "--out"}},
        {"edit", {"--map", "--selection", "--query", "--verb", "--t", "--rpy", "--cluster", "--out"}},
        {"render", {"--map", "--frame", "--pose", "--out"}},
        {"eval", {"--dataset", "--map", "--strategy", "--oracle", "--out", "--csv"}},
        {"synth", {"--preset", "--frames", "--out"}}};
    for (const auto &[cmd, fl] : flags) {
        const Run r = cli({cmd, "--help"});
        CHECK(r.code == kExitOk);
        for (const auto &f : fl) {
            CHECK_MESSAGE(r.out.find(f) != std::string::npos, (std::string(cmd) + " " + f));
        }
    }
}

TEST_CASE("usage errors") {
    CHECK(cli({}).code == kExitFailure);
    CHECK(cli({"map"}).code == kExitFailure);
    CHECK(cli({"teleport"}).code == kExitFailure);
    const Run r = cli({"--set", "colour=red", "synth", "--out", "/tmp/never"});
    CHECK(r.code == kExitFailure);
    CHECK(r.err.find("colour") != std::string::npos);
}

TEST_CASE("synth is reproducible from the seed") {
    testing::TempDir dir("cli_synth");
    for (const char *name : {"a", "b"}) {
        CHECK(cli({"--seed", "7", "synth", "--frames", "3", "--out", (dir / name).string()}).code == 0);
    }
    CHECK(cli({"--seed", "8", "synth", "--frames", "3", "--out", (dir / "c").string()}).code == 0);
    CHECK(testing::same_tree(dir / "a", dir / "b"));
    CHECK_FALSE(testing::same_tree(dir / "a", dir / "c"));
}

TEST_CASE("map reports stats and is reproducible") {
    Fixture &fx = fixture();
    testing::TempDir dir("cli_map");
    const Run a = cli({"map", "--dataset", fx.data.string(), "--out", (dir / "a").string()});
    const Run b = cli({"map", "--dataset", fx.data.string(), "--out", (dir / "b").string()});
    REQUIRE(a.code == 0);
    CHECK(a.out.find("frames=20 keyframes=2 ") != std::string::npos);
    CHECK(a.out == b.out);
    CHECK(testing::same_tree(dir / "a", dir / "b"));

    // flags win over the config file
    {
        std::ofstream(dir / "k.cfg") << "keyframe_interval = 5\n";
    }
    const Run c = cli({"--config", (dir / "k.cfg").string(), "map", "--dataset", fx.data.string(), "--out",
                       (dir / "c").string()});
    CHECK(c.out.find("keyframes=4 ") != std::string::npos);
    const Run d = cli({"--config", (dir / "k.cfg").string(), "--set", "keyframe_interval=10", "map", "--dataset",
                       fx.data.string(), "--out", (dir / "d").string()});
    CHECK(d.out.find("keyframes=2 ") != std::string::npos);
}

TEST_CASE("map failures") {
    testing::TempDir dir("cli_empty");
    write_intrinsics(dir / "intrinsics.txt", CameraIntrinsics{100, 100, 50, 50, 100, 100});
    const Run r = cli({"map", "--dataset", dir.path().string(), "--out", (dir / "m").string()});
    CHECK(r.code == kExitIo);
    CHECK(r.err.find("no frames") != std::string::npos);
    CHECK(cli({"map", "--dataset", (dir / "missing").string(), "--out", (dir / "m").string()}).code == kExitIo);
}

TEST_CASE("query writes result, selection and render grids") {
    Fixture &fx = fixture();
    testing::TempDir dir("cli_query");
    const Run r = cli({"query", "--map", fx.map.string(), "--dataset", fx.data.string(), "--label", "box", "--out",
                       dir.path().string()});
    REQUIRE(r.code == kExitOk);
    const auto doc = nlohmann::json::parse(testing::slurp(dir / "result.json"));
    CHECK(doc["strategy"] == "adaptive");
    REQUIRE(doc["clusters"].size() >= 1);
    for (const auto &c : doc["clusters"]) {
        CHECK(c["threshold"].get<double>() >= 0.0);
        CHECK(c["threshold"].get<double>() <= 1.0);
        CHECK(c["descriptor"].size() > 0);
    }
    std::ifstream ply(dir / "selected.ply", std::ios::binary);
    CHECK_FALSE(read_ply(ply, 0.05).empty());
    CHECK(fs::exists(dir / "renders" / "cluster0_round0.png"));
    CHECK(fs::exists(dir / "renders" / "cluster0_round1.png"));

    testing::TempDir fixed("cli_fixed");
    const Run f = cli({"query", "--map", fx.map.string(), "--dataset", fx.data.string(), "--label", "ball",
                       "--fixed", "0.6", "--out", fixed.path().string()});
    REQUIRE(f.code == kExitOk);
    CHECK(nlohmann::json::parse(testing::slurp(fixed / "result.json"))["strategy"] == "fixed");
}

TEST_CASE("query exit codes") {
    Fixture &fx = fixture();
    testing::TempDir dir("cli_codes");
    // nothing listens on port 9 of the loopback interface
    const Run oracle = cli({"--set", "oracle_retries=1", "--set", "oracle_timeout=0.5", "query", "--map",
                            fx.map.string(), "--dataset", fx.data.string(), "--label", "box", "--oracle",
                            "http://127.0.0.1:9/judge", "--out", (dir / "o").string()});
    CHECK(oracle.code == kExitOracle);

    // a gate above the truncation lets nothing in
    const Run m = cli({"--set", "admit_tsdf=0.08", "map", "--dataset", fx.data.string(), "--out",
                       (dir / "bare").string()});
    REQUIRE(m.code == kExitOk);
    CHECK(m.out.find("primitives=0") != std::string::npos);
    const Run none = cli({"query", "--map", (dir / "bare").string(), "--dataset", fx.data.string(), "--label", "box",
                          "--out", (dir / "n").string()});
    CHECK(none.code == kExitNoMatch);
    CHECK(cli({"query", "--map", (dir / "nowhere").string(), "--dataset", fx.data.string(), "--label", "box",
               "--out", (dir / "x").string()})
              .code == kExitIo);
    CHECK(cli({"query", "--map", fx.map.string(), "--dataset", fx.data.string(), "--label", "teapot", "--out",
               (dir / "y").string()})
              .code == kExitFailure);
}

TEST_CASE("render of a map without primitives is pure background") {
    Fixture &fx = fixture();
    testing::TempDir dir("cli_render");
    REQUIRE(cli({"--set", "admit_tsdf=0.08", "map", "--dataset", fx.data.string(), "--out", (dir / "bare").string()})
                .code == kExitOk);
    REQUIRE(cli({"render", "--map", (dir / "bare").string(), "--frame", "0", "--out", (dir / "img").string()}).code ==
            kExitOk);
    const ImageU8 color = read_png_u8(dir / "img" / "color.png", 3);
    for (auto v : color.data) {
        CHECK(v == 128);
    }
    const ImageU16 depth = read_png_u16(dir / "img" / "depth.png");
    for (auto v : depth.data) {
        CHECK(v == 0);
    }

    REQUIRE(cli({"render", "--map", fx.map.string(), "--frame", "4", "--out", (dir / "full").string()}).code ==
            kExitOk);
    const ImageU8 full = read_png_u8(dir / "full" / "color.png", 3);
    CHECK(full.data != color.data);
    {
        std::ofstream(dir / "pose.txt") << "1 0 0 0\n0 1 0 0\n0 0 1 -3\n0 0 0 1\n";
    }
    CHECK(cli({"render", "--map", fx.map.string(), "--pose", (dir / "pose.txt").string(), "--out",
               (dir / "posed").string()})
              .code == kExitOk);
    CHECK(cli({"render", "--map", fx.map.string(), "--frame", "5", "--out", (dir / "bad").string()}).code ==
          kExitFailure);
}

TEST_CASE("edit from a saved selection") {
    Fixture &fx = fixture();
    testing::TempDir dir("cli_edit");
    REQUIRE(cli({"query", "--map", fx.map.string(), "--dataset", fx.data.string(), "--label", "ball", "--fixed", "0.6",
                 "--out", (dir / "q").string()})
                .code == kExitOk);
    const auto sel = nlohmann::json::parse(testing::slurp(dir / "q" / "result.json"))["clusters"][0]["selected"]
                         .get<std::vector<GaussianId>>();
    const Run del = cli({"edit", "--map", fx.map.string(), "--selection", (dir / "q" / "result.json").string(),
                         "--verb", "delete", "--out", (dir / "edited").string()});
    REQUIRE(del.code == kExitOk);
    const auto report = nlohmann::json::parse(del.out);
    CHECK(report["verb"] == "delete");
    CHECK(report["ids"].get<std::vector<GaussianId>>() == sel);

    std::ifstream before(fx.map / "gaussians.ply", std::ios::binary);
    std::ifstream after(dir / "edited" / "gaussians.ply", std::ios::binary);
    CHECK(read_ply(before, 0.05).size() == read_ply(after, 0.05).size() + sel.size());

    const Run mv = cli({"edit", "--map", fx.map.string(), "--query", "box", "--dataset", fx.data.string(), "--fixed",
                        "0.6", "--verb", "translate", "--t", "0.1,0,0", "--out", (dir / "moved").string()});
    CHECK(mv.code == kExitOk);
    CHECK(cli({"edit", "--map", fx.map.string(), "--selection", (dir / "q" / "result.json").string(), "--verb",
               "translate", "--t", "0.1,zero", "--out", (dir / "z").string()})
              .code == kExitFailure);
}

TEST_CASE("eval reports both strategies") {
    Fixture &fx = fixture();
    testing::TempDir dir("cli_eval");
    const Run r = cli({"eval", "--dataset", fx.data.string(), "--map", fx.map.string(), "--strategy", "adaptive",
                       "--strategy", "fixed:0.6", "--out", (dir / "r.json").string(), "--csv",
                       (dir / "r.csv").string()});
    REQUIRE(r.code == kExitOk);
    const auto doc = nlohmann::json::parse(testing::slurp(dir / "r.json"));
    REQUIRE(doc["runs"].size() == 2);
    CHECK(doc["runs"][0]["strategy"] == "adaptive");
    CHECK(doc["runs"][1]["strategy"] == "fixed:0.6");
    for (const auto &run : doc["runs"]) {
        CHECK(run["per_label"].size() == 2);
        CHECK(run["miou"].get<double>() >= 0.0);
        CHECK(run["miou"].get<double>() <= 1.0);
    }
    const std::string csv = testing::slurp(dir / "r.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
}
