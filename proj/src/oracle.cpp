// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/oracle.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace splatfuse {

using nlohmann::json;

std::size_t ConstantOptimumOracle::best_index(std::string_view, FrameId,
                                              std::span<const OracleCandidate> candidates) const {
    if (candidates.empty()) {
        throw Error(ErrorKind::Oracle, "no candidates to judge");
    }
    std::size_t best = 0;
    for (std::size_t n = 1; n < candidates.size(); ++n) {
        if (std::abs(candidates[n].threshold - optimum_) < std::abs(candidates[best].threshold - optimum_)) {
            best = n;
        }
    }
    return best;
}

double MaskIouOracle::mask_iou(const RenderOutput &render, const ImageU8 &mask) {
    if (mask.width != render.width || mask.height != render.height || mask.channels != 1) {
        throw Error(ErrorKind::Oracle, "ground-truth mask size does not match the render");
    }
    std::size_t inter = 0;
    std::size_t uni = 0;
    for (std::size_t i = 0; i < mask.data.size(); ++i) {
        const bool a = render.alpha[i] > 0.5f;
        const bool b = mask.data[i] != 0;
        inter += a && b;
        uni += a || b;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t MaskIouOracle::best_index(std::string_view query, FrameId viewpoint,
                                      std::span<const OracleCandidate> candidates) const {
    auto table = masks_.find(query);
    if (table == masks_.end()) {
        table = masks_.find(std::string_view{});
    }
    if (table == masks_.end()) {
        throw Error(ErrorKind::Oracle, "no ground-truth masks for query '" + std::string(query) + "'");
    }
    const auto mask = table->second.find(viewpoint);
    if (mask == table->second.end()) {
        throw Error(ErrorKind::Oracle, "no ground-truth mask for viewpoint " + std::to_string(viewpoint));
    }
    if (std::none_of(mask->second.data.begin(), mask->second.data.end(), [](auto v) { return v != 0; })) {
        throw Error(ErrorKind::Oracle, "object not visible from viewpoint " + std::to_string(viewpoint));
    }
    if (candidates.empty()) {
        throw Error(ErrorKind::Oracle, "no candidates to judge");
    }
    std::size_t best = 0;
    double best_iou = -1.0;
    for (std::size_t n = 0; n < candidates.size(); ++n) {
        const double iou = mask_iou(*candidates[n].render, mask->second);
        if (iou > best_iou) {
            best_iou = iou;
            best = n;
        }
    }
    return best;
}

std::unique_ptr<MaskIouOracle> MaskIouOracle::from_file(const std::filesystem::path &json_path) {
    std::ifstream in(json_path);
    if (!in) {
        fail_io("cannot open oracle script " + json_path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception &e) {
        fail_io("malformed oracle script " + json_path.string() + ": " + e.what());
    }
    const auto base = json_path.parent_path();
    const auto load_views = [&](const json &views) {
        std::map<FrameId, ImageU8> out;
        for (const auto &[view, path] : views.items()) {
            out.emplace(std::stoll(view), read_png_u8(base / path.get<std::string>(), 1));
        }
        return out;
    };
    MaskTable table;
    if (doc.contains("masks")) {
        table.emplace("", load_views(doc.at("masks")));
    }
    if (doc.contains("queries")) {
        for (const auto &[query, views] : doc.at("queries").items()) {
            table.emplace(query, load_views(views));
        }
    }
    if (table.empty()) {
        fail_io("oracle script " + json_path.string() + " defines no masks");
    }
    return std::make_unique<MaskIouOracle>(std::move(table));
}

HttpOracle::HttpOracle(HttpOracleOptions options) : options_(std::move(options)) {
    const std::string prefix = "http://";
    if (options_.url.rfind(prefix, 0) != 0) {
        fail("oracle URL must start with http://");
    }
    const auto slash = options_.url.find('/', prefix.size());
    scheme_host_port_ = options_.url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : options_.url.substr(slash);
    if (options_.retries < 0) {
        fail("oracle retries must be non-negative");
    }
}

std::string HttpOracle::request_body(std::string_view query, FrameId viewpoint,
                                     std::span<const OracleCandidate> candidates) {
    json doc;
    doc["query"] = std::string(query);
    doc["viewpoint_id"] = viewpoint;
    doc["candidates"] = json::array();
    for (const auto &c : candidates) {
        doc["candidates"].push_back({{"threshold", c.threshold},
                                     {"image_png_base64", httplib::detail::base64_encode(encode_png(to_rgb8(*c.render)))}});
    }
    return doc.dump();
}

std::size_t HttpOracle::best_index(std::string_view query, FrameId viewpoint,
                                   std::span<const OracleCandidate> candidates) const {
    const std::string body = request_body(query, viewpoint, candidates);
    const auto timeout = std::chrono::duration<double>(options_.timeout_seconds);
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        httplib::Client client(scheme_host_port_);
        client.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        client.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(timeout));
        const auto res = client.Post(path_, body, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        try {
            const auto reply = json::parse(res->body);
            const auto index = reply.at("best_index").get<std::int64_t>();
            if (index < 0 || static_cast<std::size_t>(index) >= candidates.size()) {
                throw Error(ErrorKind::Oracle, "oracle returned out-of-range index " + std::to_string(index));
            }
            return static_cast<std::size_t>(index);
        } catch (const json::exception &e) {
            throw Error(ErrorKind::Oracle, std::string("malformed oracle reply: ") + e.what());
        }
    }
    throw Error(ErrorKind::Oracle, "oracle at " + options_.url + " unreachable after " +
                                       std::to_string(options_.retries + 1) + " attempts: " + last_error);
}

std::unique_ptr<ThresholdOracle> make_oracle(const std::string &spec, double timeout_seconds, int retries) {
    if (spec.rfind("scripted:", 0) == 0) {
        return MaskIouOracle::from_file(spec.substr(9));
    }
    if (spec.rfind("constant:", 0) == 0) {
        return std::make_unique<ConstantOptimumOracle>(std::stod(spec.substr(9)));
    }
    if (spec.rfind("http://", 0) == 0) {
        return std::make_unique<HttpOracle>(HttpOracleOptions{spec, timeout_seconds, retries});
    }
    fail("unknown oracle spec '" + spec + "' (expected scripted:<file>, constant:<value> or http://...)");
}

} // namespace splatfuse
