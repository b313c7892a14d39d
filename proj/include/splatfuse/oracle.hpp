// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Threshold judges. Given a text query and, for one viewpoint, the renders produced at a
// list of candidate thresholds, an oracle returns the index of the best candidate.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "splatfuse/image.hpp"
#include "splatfuse/splat_render.hpp"

namespace splatfuse {

struct OracleCandidate {
    double threshold = 0.0;
    const RenderOutput *render = nullptr;
};

/// Implementations must be safe to call concurrently for distinct viewpoints. Failure
/// to judge a viewpoint is reported by throwing Error with ErrorKind::Oracle.
class ThresholdOracle {
public:
    virtual ~ThresholdOracle() = default;
    virtual std::size_t best_index(std::string_view query, FrameId viewpoint,
                                   std::span<const OracleCandidate> candidates) const = 0;
};

/// Picks the candidate whose threshold is closest to a fixed optimum (lowest index on ties).
class ConstantOptimumOracle final : public ThresholdOracle {
public:
    explicit ConstantOptimumOracle(double optimum) : optimum_(optimum) {}
    std::size_t best_index(std::string_view query, FrameId viewpoint,
                           std::span<const OracleCandidate> candidates) const override;

private:
    double optimum_;
};

/// Scores each candidate by the 2D IoU between its coverage mask (alpha > 0.5) and a hidden
/// ground-truth mask for the viewpoint, returning the best (lowest index on ties).
/// Viewpoints without a mask, or whose mask is empty, fail.
class MaskIouOracle final : public ThresholdOracle {
public:
    /// masks[query][viewpoint]; a query of "" applies to every query text.
    using MaskTable = std::map<std::string, std::map<FrameId, ImageU8>, std::less<>>;

    explicit MaskIouOracle(MaskTable masks) : masks_(std::move(masks)) {}

    /// JSON: {"masks": {"<viewpoint>": "path.png"}} or
    /// {"queries": {"<text>": {"<viewpoint>": "path.png"}}}. Relative paths resolve
    /// against the JSON file's directory.
    static std::unique_ptr<MaskIouOracle> from_file(const std::filesystem::path &json_path);

    std::size_t best_index(std::string_view query, FrameId viewpoint,
                           std::span<const OracleCandidate> candidates) const override;

    static double mask_iou(const RenderOutput &render, const ImageU8 &mask);

private:
    MaskTable masks_;
};

struct HttpOracleOptions {
    std::string url; // http://host:port/path
    double timeout_seconds = 30.0;
    int retries = 2;
};

/// Remote judge. POSTs {query, viewpoint_id, candidates: [{threshold, image_png_base64}]}
/// as JSON and expects {best_index} back. Transport errors are retried `retries` times.
class HttpOracle final : public ThresholdOracle {
public:
    explicit HttpOracle(HttpOracleOptions options);
    std::size_t best_index(std::string_view query, FrameId viewpoint,
                           std::span<const OracleCandidate> candidates) const override;

    /// The request document sent for one viewpoint.
    static std::string request_body(std::string_view query, FrameId viewpoint,
                                    std::span<const OracleCandidate> candidates);

private:
    HttpOracleOptions options_;
    std::string scheme_host_port_;
    std::string path_;
};

/// Parses "scripted:<json>", "constant:<value>" or an http:// URL.
std::unique_ptr<ThresholdOracle> make_oracle(const std::string &spec, double timeout_seconds, int retries);

} // namespace splatfuse
