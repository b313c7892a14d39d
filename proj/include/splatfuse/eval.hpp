// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "splatfuse/dataset.hpp"
#include "splatfuse/gaussian_map.hpp"
#include "splatfuse/image.hpp"

namespace splatfuse {

class Engine;
class ThresholdOracle;

inline constexpr double kPsnrCap = 99.0;

/// Occupancy IoU of two point sets voxelized at `cell`.
double cell_iou(std::span<const Vec3> a, std::span<const Vec3> b, double cell);

/// IoU between the predicted primitives' means and the ground-truth points of `label`.
double iou3d(std::span<const GaussianId> predicted, const GaussianMap &map, const GroundTruthSegmentation &gt,
             int label, double match_radius);

/// 10 log10(255^2 / MSE) over all channels; identical images give kPsnrCap.
double psnr(const ImageU8 &a, const ImageU8 &b);

/// Mean |a - b| over pixels where both depths are positive and finite (and `mask` is
/// non-zero, when given).
double depth_l1(const ImageF &a, const ImageF &b, const ImageU8 *mask = nullptr);

struct Strategy {
    bool adaptive = true;
    double fixed_threshold = 0.6;

    /// "adaptive" or "fixed:<value>".
    static Strategy parse(const std::string &text);
    std::string name() const;
};

struct LabelScore {
    int label = 0;
    std::string name;
    double iou = 0.0;
    double threshold = 0.0; // NaN when the query failed
    std::string error;
};

struct SegmentationScore {
    std::string strategy;
    std::vector<LabelScore> per_label; // sorted by label
    double miou = 0.0;
    double macc = 0.0;
};

/// mIoU and mAcc (fraction of labels with IoU above `cutoff`) over `per_label`.
SegmentationScore aggregate_scores(std::string strategy, std::vector<LabelScore> per_label, double cutoff);

/// One query per ground-truth label against an already built map. Failed queries score 0.
SegmentationScore segmentation_benchmark(const Engine &engine, const GroundTruthSegmentation &gt,
                                         const Strategy &strategy, const ThresholdOracle &oracle);

/// 64-bit FNV-1a, hex encoded.
std::string fnv1a_hex(std::string_view text);

void write_report_json(std::ostream &out, std::span<const SegmentationScore> scores, const std::string &config_hash);
void write_report_csv(std::ostream &out, std::span<const SegmentationScore> scores);

} // namespace splatfuse
