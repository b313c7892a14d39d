// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace splatfuse {

namespace {

std::string trim(const std::string &s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return {};
    }
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

double parse_double(const std::string &key, const std::string &text) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    if (used == 0 || used != text.size()) {
        fail("config: " + key + " expects a number, got '" + text + "'");
    }
    return v;
}

template <typename Int>
Int parse_int(const std::string &key, const std::string &text) {
    Int v{};
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        fail("config: " + key + " expects an integer, got '" + text + "'");
    }
    return v;
}

std::string format(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

struct Field {
    std::function<void(EngineConfig &, const std::string &, const std::string &)> set;
    std::function<std::string(const EngineConfig &)> get;
};

template <typename T>
Field number(T EngineConfig::*member) {
    return Field{[member](EngineConfig &c, const std::string &key, const std::string &text) {
                     if constexpr (std::is_floating_point_v<T>) {
                         c.*member = parse_double(key, text);
                     } else {
                         c.*member = parse_int<T>(key, text);
                     }
                 },
                 [member](const EngineConfig &c) {
                     if constexpr (std::is_floating_point_v<T>) {
                         return format(c.*member);
                     } else {
                         return std::to_string(c.*member);
                     }
                 }};
}

const std::vector<std::pair<std::string, Field>> &fields() {
    static const std::vector<std::pair<std::string, Field>> table = {
        {"voxel_size", number(&EngineConfig::voxel_size)},
        {"truncation", number(&EngineConfig::truncation)},
        {"max_weight", number(&EngineConfig::max_weight)},
        {"blend_mode",
         Field{[](EngineConfig &c, const std::string &key, const std::string &text) {
                   if (text == "paper") {
                       c.blend_mode = BlendMode::Paper;
                   } else if (text == "unit_sample") {
                       c.blend_mode = BlendMode::UnitSample;
                   } else {
                       fail("config: " + key + " expects 'paper' or 'unit_sample', got '" + text + "'");
                   }
               },
               [](const EngineConfig &c) { return std::string(c.blend_mode == BlendMode::Paper ? "paper" : "unit_sample"); }}},
        {"downsample_step", number(&EngineConfig::downsample_step)},
        {"keyframe_interval", number(&EngineConfig::keyframe_interval)},
        {"knn", number(&EngineConfig::knn)},
        {"admit_tsdf", number(&EngineConfig::admit_tsdf)},
        {"prune_tsdf", number(&EngineConfig::prune_tsdf)},
        {"overlap_radius", number(&EngineConfig::overlap_radius)},
        {"seed_threshold", number(&EngineConfig::seed_threshold)},
        {"keyframes_per_cluster", number(&EngineConfig::keyframes_per_cluster)},
        {"window_half_width", number(&EngineConfig::window_half_width)},
        {"window_lo", number(&EngineConfig::window_lo)},
        {"window_hi", number(&EngineConfig::window_hi)},
        {"rounds", number(&EngineConfig::rounds)},
        {"dbscan_eps", number(&EngineConfig::dbscan_eps)},
        {"dbscan_min_pts", number(&EngineConfig::dbscan_min_pts)},
        {"coverage_eps", number(&EngineConfig::coverage_eps)},
        {"region_floor", number(&EngineConfig::region_floor)},
        {"match_radius", number(&EngineConfig::match_radius)},
        {"macc_cutoff", number(&EngineConfig::macc_cutoff)},
        {"oracle_timeout", number(&EngineConfig::oracle_timeout)},
        {"oracle_retries", number(&EngineConfig::oracle_retries)},
        {"seed", number(&EngineConfig::seed)},
        {"workers", number(&EngineConfig::workers)},
    };
    return table;
}

} // namespace

void EngineConfig::set(const std::string &key, const std::string &value) {
    for (const auto &[name, field] : fields()) {
        if (name == key) {
            field.set(*this, key, trim(value));
            return;
        }
    }
    fail("config: unknown key '" + key + "'");
}

void EngineConfig::merge_file(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) {
        fail_io("cannot open config file " + path.string());
    }
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            fail(path.string() + ":" + std::to_string(number) + ": expected key = value");
        }
        set(trim(line.substr(0, eq)), line.substr(eq + 1));
    }
}

void EngineConfig::validate() const {
    const auto require = [](bool ok, const std::string &what) {
        if (!ok) {
            fail("config: " + what);
        }
    };
    require(voxel_size > 0.0, "voxel_size must be positive");
    require(truncation >= voxel_size, "truncation must be at least voxel_size");
    require(max_weight >= 1.0, "max_weight must be at least 1");
    require(downsample_step >= 0.0, "downsample_step must be non-negative");
    require(keyframe_interval >= 1, "keyframe_interval must be at least 1");
    require(knn >= 1, "knn must be at least 1");
    require(overlap_radius >= 0.0, "overlap_radius must be non-negative");
    require(seed_threshold >= 0.0 && seed_threshold <= 1.0, "seed_threshold must be in [0, 1]");
    require(keyframes_per_cluster >= 1, "keyframes_per_cluster must be at least 1");
    require(window_half_width > 0.0, "window_half_width must be positive");
    require(window_lo >= 0.0 && window_lo < window_hi && window_hi <= 1.0, "window must satisfy 0 <= lo < hi <= 1");
    require(rounds >= 1, "rounds must be at least 1");
    require(dbscan_eps >= 0.0, "dbscan_eps must be non-negative");
    require(dbscan_min_pts >= 1, "dbscan_min_pts must be at least 1");
    require(coverage_eps > 0.0, "coverage_eps must be positive");
    require(region_floor >= 0.0 && region_floor <= 1.0, "region_floor must be in [0, 1]");
    require(match_radius >= 0.0, "match_radius must be non-negative");
    require(macc_cutoff >= 0.0 && macc_cutoff <= 1.0, "macc_cutoff must be in [0, 1]");
    require(oracle_timeout > 0.0, "oracle_timeout must be positive");
    require(oracle_retries >= 0, "oracle_retries must be non-negative");
    require(workers >= 0, "workers must be non-negative");
}

FusionConfig EngineConfig::fusion() const { return FusionConfig{effective_downsample_step(), blend_mode}; }

QueryConfig EngineConfig::query() const {
    QueryConfig q;
    q.seed_threshold = seed_threshold;
    q.keyframes_per_cluster = keyframes_per_cluster;
    q.window_half_width = window_half_width;
    q.window_lo = window_lo;
    q.window_hi = window_hi;
    q.rounds = rounds;
    q.dbscan_eps = effective_dbscan_eps();
    q.dbscan_min_pts = dbscan_min_pts;
    q.coverage_eps = coverage_eps;
    q.region_floor = region_floor;
    return q;
}

std::string EngineConfig::to_string() const {
    std::string out;
    for (const auto &[name, field] : fields()) {
        out += name + "=" + field.get(*this) + "\n";
    }
    return out;
}

const std::vector<std::string> &EngineConfig::keys() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v;
        for (const auto &[name, field] : fields()) {
            v.push_back(name);
        }
        return v;
    }();
    return names;
}

} // namespace splatfuse
