// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>

#include <absl/container/flat_hash_set.h>
#include <json.hpp>

#include "splatfuse/engine.hpp"
#include "splatfuse/oracle.hpp"

namespace splatfuse {

namespace {

absl::flat_hash_set<VoxelKey> cells_of(std::span<const Vec3> points, double cell) {
    absl::flat_hash_set<VoxelKey> out;
    for (const Vec3 &p : points) {
        out.insert(world_to_voxel(p, cell));
    }
    return out;
}

} // namespace

double cell_iou(std::span<const Vec3> a, std::span<const Vec3> b, double cell) {
    if (!(cell > 0.0)) {
        fail("iou3d: match radius must be positive");
    }
    const auto ca = cells_of(a, cell);
    const auto cb = cells_of(b, cell);
    std::size_t both = 0;
    for (const auto &k : ca) {
        both += cb.contains(k) ? 1 : 0;
    }
    const std::size_t uni = ca.size() + cb.size() - both;
    return uni == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(uni);
}

double iou3d(std::span<const GaussianId> predicted, const GaussianMap &map, const GroundTruthSegmentation &gt,
             int label, double match_radius) {
    if (!(match_radius > 0.0)) {
        fail("iou3d: match radius must be positive");
    }
    const auto truth = gt.points_of(label);
    if (truth.empty()) {
        fail("iou3d: label " + std::to_string(label) + " is absent from the ground truth");
    }
    std::vector<Vec3> means;
    means.reserve(predicted.size());
    for (GaussianId id : predicted) {
        const auto *g = map.find(id);
        if (g == nullptr) {
            fail("iou3d: unknown gaussian id " + std::to_string(id));
        }
        means.push_back(g->mean);
    }
    return cell_iou(means, truth, match_radius);
}

double psnr(const ImageU8 &a, const ImageU8 &b) {
    if (!a.same_shape(b)) {
        fail("psnr: image dimensions differ");
    }
    if (a.data.empty()) {
        fail("psnr: empty images");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
        sum += d * d;
    }
    const double mse = sum / static_cast<double>(a.data.size());
    if (mse == 0.0) {
        return kPsnrCap;
    }
    return std::min(kPsnrCap, 10.0 * std::log10(255.0 * 255.0 / mse));
}

double depth_l1(const ImageF &a, const ImageF &b, const ImageU8 *mask) {
    if (!a.same_shape(b) || (mask != nullptr && (mask->width != a.width || mask->height != a.height))) {
        fail("depth_l1: image dimensions differ");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const float x = a.data[i];
        const float y = b.data[i];
        if (!(x > 0.0f && y > 0.0f && std::isfinite(x) && std::isfinite(y))) {
            continue;
        }
        if (mask != nullptr && mask->data[i * static_cast<std::size_t>(mask->channels)] == 0) {
            continue;
        }
        sum += std::abs(static_cast<double>(x) - static_cast<double>(y));
        ++count;
    }
    if (count == 0) {
        fail("depth_l1: no pixel is valid in both images");
    }
    return sum / static_cast<double>(count);
}

Strategy Strategy::parse(const std::string &text) {
    if (text == "adaptive") {
        return Strategy{};
    }
    const std::string prefix = "fixed:";
    if (text.rfind(prefix, 0) == 0) {
        std::size_t used = 0;
        double v = std::numeric_limits<double>::quiet_NaN();
        try {
            v = std::stod(text.substr(prefix.size()), &used);
        } catch (const std::exception &) {
        }
        if (used == text.size() - prefix.size() && v >= 0.0 && v <= 1.0) {
            return Strategy{false, v};
        }
    }
    fail("unknown strategy '" + text + "' (expected adaptive or fixed:<threshold in [0,1]>)");
}

std::string Strategy::name() const {
    if (adaptive) {
        return "adaptive";
    }
    std::ostringstream os;
    os << "fixed:" << fixed_threshold;
    return os.str();
}

SegmentationScore aggregate_scores(std::string strategy, std::vector<LabelScore> per_label, double cutoff) {
    std::sort(per_label.begin(), per_label.end(), [](const auto &a, const auto &b) { return a.label < b.label; });
    SegmentationScore s;
    s.strategy = std::move(strategy);
    s.per_label = std::move(per_label);
    if (!s.per_label.empty()) {
        double sum = 0.0;
        std::size_t hits = 0;
        for (const auto &l : s.per_label) {
            sum += l.iou;
            hits += l.iou > cutoff ? 1 : 0;
        }
        s.miou = sum / static_cast<double>(s.per_label.size());
        s.macc = static_cast<double>(hits) / static_cast<double>(s.per_label.size());
    }
    return s;
}

SegmentationScore segmentation_benchmark(const Engine &engine, const GroundTruthSegmentation &gt,
                                         const Strategy &strategy, const ThresholdOracle &oracle) {
    const auto &config = engine.config();
    std::vector<LabelScore> scores;
    for (std::size_t l = 0; l < gt.label_count(); ++l) {
        const int label = static_cast<int>(l);
        LabelScore score;
        score.label = label;
        score.name = gt.name_of(label);
        score.threshold = std::numeric_limits<double>::quiet_NaN();
        try {
            const auto &text = gt.label_embeddings[l];
            const QueryResult result = strategy.adaptive ? engine.adaptive(text, score.name, oracle)
                                                         : engine.fixed(text, score.name, strategy.fixed_threshold);
            const auto selected = result.all_selected();
            score.iou = iou3d(selected, engine.gaussians(), gt, label, config.effective_match_radius());
            const auto largest = std::max_element(result.clusters.begin(), result.clusters.end(),
                                                  [](const auto &a, const auto &b) {
                                                      return a.selected.size() < b.selected.size();
                                                  });
            if (largest != result.clusters.end()) {
                score.threshold = largest->threshold;
            }
        } catch (const Error &e) {
            score.iou = 0.0;
            score.error = e.what();
        }
        scores.push_back(std::move(score));
    }
    return aggregate_scores(strategy.name(), std::move(scores), config.macc_cutoff);
}

std::string fnv1a_hex(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

void write_report_json(std::ostream &out, std::span<const SegmentationScore> scores, const std::string &config_hash) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto &s : scores) {
        nlohmann::json per_label = nlohmann::json::array();
        for (const auto &l : s.per_label) {
            nlohmann::json row{{"label", l.label}, {"name", l.name}, {"iou", l.iou}};
            row["threshold"] = std::isnan(l.threshold) ? nlohmann::json(nullptr) : nlohmann::json(l.threshold);
            if (!l.error.empty()) {
                row["error"] = l.error;
            }
            per_label.push_back(std::move(row));
        }
        runs.push_back({{"strategy", s.strategy},
                        {"miou", s.miou},
                        {"macc", s.macc},
                        {"config_hash", config_hash},
                        {"per_label", per_label}});
    }
    out << nlohmann::json{{"config_hash", config_hash}, {"runs", runs}}.dump(2) << '\n';
}

void write_report_csv(std::ostream &out, std::span<const SegmentationScore> scores) {
    out << "strategy,label,name,iou,threshold,miou,macc\n";
    out << std::setprecision(6);
    for (const auto &s : scores) {
        for (const auto &l : s.per_label) {
            out << s.strategy << ',' << l.label << ',' << l.name << ',' << l.iou << ',';
            if (!std::isnan(l.threshold)) {
                out << l.threshold;
            }
            out << ',' << s.miou << ',' << s.macc << '\n';
        }
    }
}

} // namespace splatfuse
