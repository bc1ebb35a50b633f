// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "gup/binary_io.hpp"
#include "gup/codec.hpp"
#include "gup/common.hpp"
#include "gup/eval.hpp"
#include "gup/rng.hpp"
#include "gup/tensor.hpp"

namespace gup {

/// One annotated person instance. head_size < 0 means not provided.
struct AnnotationRecord {
    int id = 0;
    int image_id = 0;
    std::array<double, 4> bbox{};  // x, y, w, h in pixels
    std::vector<double> keypoints;  // flat (x, y, v) triplets
    double area = 0.0;
    std::string category = "person";
    double head_size = -1.0;

    std::size_t joints() const { return keypoints.size() / 3; }

    KeypointSet keypoint_set() const {
        KeypointSet k;
        for (std::size_t j = 0; j < joints(); ++j)
            k.joints.push_back({keypoints[3 * j], keypoints[3 * j + 1], static_cast<int>(keypoints[3 * j + 2])});
        return k;
    }

    GtInstance gt_instance() const { return {image_id, keypoint_set(), area, head_size}; }
};

/// Every input record lands in exactly one bucket, so
/// records.size() + rejected.size() == total.
struct AnnotationLoadResult {
    std::vector<AnnotationRecord> records;
    std::vector<std::string> rejected;
    std::size_t total = 0;
};

namespace detail {

inline double require_number(const nlohmann::json& j, const char* field, const std::string& ctx) {
    if (!j.contains(field) || !j[field].is_number())
        throw ParseError(ctx + ": missing or non-numeric field '" + field + "'");
    return j[field].get<double>();
}

inline AnnotationRecord parse_annotation(const nlohmann::json& j, const std::set<int>& image_ids, std::size_t index) {
    std::string ctx = "annotation at index " + std::to_string(index);
    if (j.contains("id") && j["id"].is_number_integer()) ctx = "annotation id " + std::to_string(j["id"].get<int>());

    AnnotationRecord rec;
    rec.id = static_cast<int>(require_number(j, "id", ctx));
    rec.image_id = static_cast<int>(require_number(j, "image_id", ctx));
    if (!image_ids.empty() && image_ids.count(rec.image_id) == 0)
        throw ParseError(ctx + ": image_id " + std::to_string(rec.image_id) + " not in images[]");

    if (!j.contains("bbox") || !j["bbox"].is_array() || j["bbox"].size() != 4)
        throw ParseError(ctx + ": bbox must be an array of 4 numbers");
    for (std::size_t i = 0; i < 4; ++i) {
        if (!j["bbox"][i].is_number()) throw ParseError(ctx + ": bbox must be an array of 4 numbers");
        rec.bbox[i] = j["bbox"][i].get<double>();
    }
    if (rec.bbox[2] <= 0.0 || rec.bbox[3] <= 0.0) throw ParseError(ctx + ": non-positive bbox extent");

    if (!j.contains("keypoints") || !j["keypoints"].is_array())
        throw ParseError(ctx + ": missing keypoints array");
    for (const auto& v : j["keypoints"]) {
        if (!v.is_number()) throw ParseError(ctx + ": non-numeric keypoint entry");
        rec.keypoints.push_back(v.get<double>());
    }
    if (rec.keypoints.empty() || rec.keypoints.size() % 3 != 0)
        throw ParseError(ctx + ": keypoints length " + std::to_string(rec.keypoints.size()) +
                         " is not a positive multiple of 3");

    rec.area = require_number(j, "area", ctx);
    if (rec.area <= 0.0) throw ParseError(ctx + ": non-positive area");

    if (j.contains("category") && j["category"].is_string()) rec.category = j["category"].get<std::string>();
    if (j.contains("head_size")) {
        if (!j["head_size"].is_number() || j["head_size"].get<double>() <= 0.0)
            throw ParseError(ctx + ": head_size must be a positive number");
        rec.head_size = j["head_size"].get<double>();
    }
    return rec;
}

}  // namespace detail

/// Parses the annotation schema: an object with images[] (each carrying an
/// integer id) and annotations[] (id, image_id, bbox, keypoints, area,
/// optional category and head_size). With strict = true the first malformed
/// record raises; otherwise bad records are collected with their identifier
/// context and parsing continues.
inline AnnotationLoadResult load_annotations(const std::string& path, bool strict = true) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open annotation file: " + path);
    nlohmann::json root;
    try {
        is >> root;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!root.is_object() || !root.contains("annotations") || !root["annotations"].is_array())
        throw ParseError(path + ": expected an object with an annotations[] array");

    std::set<int> image_ids;
    if (root.contains("images")) {
        if (!root["images"].is_array()) throw ParseError(path + ": images must be an array");
        for (const auto& img : root["images"]) {
            if (!img.is_object() || !img.contains("id") || !img["id"].is_number_integer())
                throw ParseError(path + ": every images[] entry needs an integer id");
            image_ids.insert(img["id"].get<int>());
        }
    }

    AnnotationLoadResult out;
    for (std::size_t i = 0; i < root["annotations"].size(); ++i) {
        ++out.total;
        try {
            out.records.push_back(detail::parse_annotation(root["annotations"][i], image_ids, i));
        } catch (const ParseError& e) {
            if (strict) throw;
            out.rejected.push_back(e.what());
        }
    }
    return out;
}

/// Writes scored instances as a JSON array of {image_id, score, keypoints}
/// records with keypoints flattened to (x, y, confidence) triplets.
inline void write_predictions(const std::string& path, const std::vector<ScoredInstance>& preds) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : preds) {
        nlohmann::json rec;
        rec["image_id"] = p.image_id;
        rec["score"] = p.score;
        nlohmann::json kp = nlohmann::json::array();
        for (const auto& j : p.keypoints.joints) {
            kp.push_back(j.x);
            kp.push_back(j.y);
            kp.push_back(static_cast<double>(j.v));
        }
        rec["keypoints"] = kp;
        arr.push_back(rec);
    }
    std::ofstream os(path);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << arr.dump(2) << "\n";
    if (!os) throw IoError("write failed: " + path);
}

inline std::vector<ScoredInstance> load_predictions(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open prediction file: " + path);
    nlohmann::json arr;
    try {
        is >> arr;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    if (!arr.is_array()) throw ParseError(path + ": expected a JSON array of predictions");
    std::vector<ScoredInstance> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const auto& rec = arr[i];
        const std::string ctx = "prediction at index " + std::to_string(i);
        ScoredInstance p;
        p.image_id = static_cast<int>(detail::require_number(rec, "image_id", ctx));
        p.score = detail::require_number(rec, "score", ctx);
        if (!rec.contains("keypoints") || !rec["keypoints"].is_array() || rec["keypoints"].size() % 3 != 0)
            throw ParseError(ctx + ": keypoints must be a flat array of (x, y, v) triplets");
        for (std::size_t t = 0; t < rec["keypoints"].size(); t += 3) {
            Keypoint k;
            k.x = rec["keypoints"][t].get<double>();
            k.y = rec["keypoints"][t + 1].get<double>();
            k.v = static_cast<int>(rec["keypoints"][t + 2].get<double>());
            p.keypoints.joints.push_back(k);
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// Raw planar tensor file: magic "GUPI", dtype tag, rank, extents, data.
template <class S>
void write_image_tensor(const std::string& path, const Tensor<S>& t) {
    auto os = detail::open_out(path);
    detail::write_bytes(os, "GUPI", 4);
    detail::write_u8(os, detail::dtype_tag<S>());
    detail::write_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::write_u64(os, d);
    detail::write_bytes(os, t.data().data(), t.numel() * sizeof(S));
}

template <class S>
Tensor<S> read_image_tensor(const std::string& path) {
    auto is = detail::open_in(path);
    char magic[4];
    detail::read_bytes(is, magic, 4);
    if (std::string(magic, 4) != "GUPI") throw IoError(path + ": bad magic, not a raw tensor file");
    const std::uint8_t tag = detail::read_u8(is);
    if (tag != detail::dtype_tag<S>())
        throw IoError(path + ": dtype tag " + std::to_string(tag) + " does not match the requested precision");
    const std::uint32_t rank = detail::read_u32(is);
    if (rank > 8) throw IoError(path + ": implausible rank " + std::to_string(rank));
    Shape shape(rank);
    for (auto& d : shape) d = detail::read_u64(is);
    Tensor<S> t(shape);
    detail::read_bytes(is, t.data().data(), t.numel() * sizeof(S));
    return t;
}

/// Invertible axis-aligned affine map between coordinate frames.
struct AffineTransform {
    double scale_x = 1.0, scale_y = 1.0;
    double offset_x = 0.0, offset_y = 0.0;

    void apply(double& x, double& y) const {
        x = scale_x * x + offset_x;
        y = scale_y * y + offset_y;
    }

    Keypoint apply(const Keypoint& k) const {
        Keypoint out = k;
        apply(out.x, out.y);
        return out;
    }

    AffineTransform inverted() const {
        return {1.0 / scale_x, 1.0 / scale_y, -offset_x / scale_x, -offset_y / scale_y};
    }
};

struct CropResult {
    /// Resampled patch [3, target_h, target_w].
    Tensor<float> patch;
    /// Maps patch pixel coordinates back to original image pixels.
    AffineTransform to_original;
};

/// Expands the box to the target aspect ratio about its center, scales it by
/// the padding factor, and resamples the region bilinearly (clamp-to-edge)
/// to the target size. The returned transform maps patch coordinates to
/// original-image coordinates; its inverse maps the other way, and the two
/// compose to the identity.
inline CropResult crop_to_input(const Tensor<float>& image, const std::array<double, 4>& box, std::size_t target_h,
                                std::size_t target_w, double padding = 1.25) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeError("crop_to_input: expected [3, H, W] image, got " + shape_str(image.shape()));
    if (box[2] <= 0.0 || box[3] <= 0.0) throw UsageError("crop_to_input: degenerate box");
    if (target_h == 0 || target_w == 0) throw UsageError("crop_to_input: empty target");

    const double cx = box[0] + box[2] / 2.0;
    const double cy = box[1] + box[3] / 2.0;
    const double aspect = static_cast<double>(target_w) / static_cast<double>(target_h);

    double w = box[2], h = box[3];
    if (w / h < aspect)
        w = h * aspect;
    else
        h = w / aspect;
    w *= padding;
    h *= padding;

    const double sx = w / static_cast<double>(target_w);
    const double sy = h / static_cast<double>(target_h);
    const double x0 = cx - w / 2.0;
    const double y0 = cy - h / 2.0;

    const std::size_t src_h = image.dim(1), src_w = image.dim(2);
    Tensor<float> patch({3, target_h, target_w});
    auto clamp_idx = [](double v, std::size_t n) {
        if (v < 0.0) return std::size_t{0};
        if (v > static_cast<double>(n - 1)) return n - 1;
        return static_cast<std::size_t>(v);
    };
    for (std::size_t i = 0; i < target_h; ++i) {
        const double syc = y0 + (static_cast<double>(i) + 0.5) * sy - 0.5;
        const double fy = std::floor(syc);
        const std::size_t y_lo = clamp_idx(fy, src_h), y_hi = clamp_idx(fy + 1.0, src_h);
        const double wy = syc - fy;
        for (std::size_t jx = 0; jx < target_w; ++jx) {
            const double sxc = x0 + (static_cast<double>(jx) + 0.5) * sx - 0.5;
            const double fx = std::floor(sxc);
            const std::size_t x_lo = clamp_idx(fx, src_w), x_hi = clamp_idx(fx + 1.0, src_w);
            const double wx = sxc - fx;
            for (std::size_t c = 0; c < 3; ++c) {
                const double v00 = image.at(c, y_lo, x_lo), v01 = image.at(c, y_lo, x_hi);
                const double v10 = image.at(c, y_hi, x_lo), v11 = image.at(c, y_hi, x_hi);
                const double top = v00 + (v01 - v00) * wx;
                const double bot = v10 + (v11 - v10) * wx;
                patch.at(c, i, jx) = static_cast<float>(top + (bot - top) * wy);
            }
        }
    }

    AffineTransform t;
    t.scale_x = sx;
    t.scale_y = sy;
    t.offset_x = x0 + 0.5 * sx - 0.5;
    t.offset_y = y0 + 0.5 * sy - 0.5;
    return {std::move(patch), t};
}

/// Specification for the self-contained synthetic dataset: one bright,
/// per-joint colored Gaussian blob per joint over textured noise, with the
/// blob centers jittered around a fixed circular layout.
struct SyntheticSpec {
    std::size_t joints = 4;
    std::size_t image_h = 128;
    std::size_t image_w = 96;
    double blob_radius = 5.0;
    double jitter = 8.0;
    std::size_t count = 64;
    std::uint64_t seed = 42;
    double noise = 0.15;

    void validate() const {
        if (joints == 0 || image_h == 0 || image_w == 0 || count == 0)
            throw ConfigError("synthetic spec: joints, image size, and count must be positive");
        if (blob_radius <= 0.0 || jitter < 0.0 || noise < 0.0)
            throw ConfigError("synthetic spec: blob_radius must be positive, jitter and noise non-negative");
    }
};

struct SyntheticSample {
    Tensor<float> image;  // [3, H, W]
    KeypointSet keypoints;
    AnnotationRecord record;
};

namespace detail {

/// Fixed per-joint color signature so a joint looks the same in every
/// sample regardless of the dataset seed.
inline std::array<double, 3> joint_color(std::size_t joint) {
    SplitMix64 rng(0x9e3779b97f4a7c15ull, "palette." + std::to_string(joint));
    return {rng.next_uniform(0.35, 1.0), rng.next_uniform(0.35, 1.0), rng.next_uniform(0.35, 1.0)};
}

}  // namespace detail

/// Deterministic dataset generation. Sample i draws from an independent
/// stream seeded as SplitMix64(spec.seed, "sample.<i>"), so any subset can
/// be generated in any order with identical results.
inline std::vector<SyntheticSample> generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const double h = static_cast<double>(spec.image_h);
    const double w = static_cast<double>(spec.image_w);
    const double ring = 0.30 * std::min(h, w);
    const double margin = std::max(spec.blob_radius, 14.0);
    const double two_pi = 6.283185307179586;

    std::vector<SyntheticSample> out;
    out.reserve(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        SplitMix64 rng(spec.seed, "sample." + std::to_string(i));
        SyntheticSample s;
        s.image = Tensor<float>({3, spec.image_h, spec.image_w});

        float* px = s.image.data().data();
        const std::size_t plane = spec.image_h * spec.image_w;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < spec.image_h; ++y)
                for (std::size_t x = 0; x < spec.image_w; ++x) {
                    const double grad = 0.08 * (static_cast<double>(x) / w) + 0.08 * (static_cast<double>(y) / h);
                    px[c * plane + y * spec.image_w + x] =
                        static_cast<float>(spec.noise * rng.next_uniform() + grad);
                }

        for (std::size_t j = 0; j < spec.joints; ++j) {
            const double angle = two_pi * static_cast<double>(j) / static_cast<double>(spec.joints);
            double bx = w / 2.0 + ring * std::cos(angle) + rng.next_uniform(-spec.jitter, spec.jitter);
            double by = h / 2.0 + ring * std::sin(angle) + rng.next_uniform(-spec.jitter, spec.jitter);
            bx = std::clamp(bx, margin, w - 1.0 - margin);
            by = std::clamp(by, margin, h - 1.0 - margin);
            s.keypoints.joints.push_back({bx, by, 2});

            const auto color = detail::joint_color(j);
            const double inv = 1.0 / (2.0 * spec.blob_radius * spec.blob_radius);
            // Render within a 3-radius window; the tail beyond is negligible.
            const double win = 3.0 * spec.blob_radius;
            const std::size_t y_lo = static_cast<std::size_t>(std::max(0.0, std::floor(by - win)));
            const std::size_t y_hi = std::min(spec.image_h, static_cast<std::size_t>(std::max(0.0, by + win + 1.0)));
            const std::size_t x_lo = static_cast<std::size_t>(std::max(0.0, std::floor(bx - win)));
            const std::size_t x_hi = std::min(spec.image_w, static_cast<std::size_t>(std::max(0.0, bx + win + 1.0)));
            for (std::size_t y = y_lo; y < y_hi; ++y)
                for (std::size_t x = x_lo; x < x_hi; ++x) {
                    const double dx = static_cast<double>(x) - bx;
                    const double dy = static_cast<double>(y) - by;
                    const double g = std::exp(-(dx * dx + dy * dy) * inv);
                    for (std::size_t c = 0; c < 3; ++c)
                        px[c * plane + y * spec.image_w + x] += static_cast<float>(color[c] * g);
                }
        }

        s.record.id = static_cast<int>(i) + 1;
        s.record.image_id = static_cast<int>(i) + 1;
        s.record.bbox = {0.0, 0.0, w, h};
        s.record.area = w * h;
        for (const auto& kp : s.keypoints.joints) {
            s.record.keypoints.push_back(kp.x);
            s.record.keypoints.push_back(kp.y);
            s.record.keypoints.push_back(2.0);
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace gup
