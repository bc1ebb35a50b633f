// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "gup/common.hpp"
#include "gup/tensor.hpp"

namespace gup {

/// One joint in input-pixel coordinates. v: 0 = unlabeled, 1 = labeled but
/// occluded, 2 = labeled and visible.
struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    int v = 0;
};

struct KeypointSet {
    std::vector<Keypoint> joints;
};

struct DecodedJoint {
    double x = 0.0;
    double y = 0.0;
    double confidence = 0.0;
};

/// Input pixel -> heatmap cell under the shared +0.5 center alignment.
inline double px_to_cell(double px, double stride) { return (px + 0.5) / stride - 0.5; }

/// Heatmap cell -> input pixel; exact inverse of px_to_cell.
inline double cell_to_px(double cell, double stride) { return (cell + 0.5) * stride - 0.5; }

/// Renders one unnormalized Gaussian channel per joint: peak value 1 at the
/// sub-pixel joint location. Unlabeled joints (v = 0) give all-zero channels.
/// Output is [joints, hm_h, hm_w].
template <class S>
Tensor<S> encode_gaussian(const KeypointSet& kps, std::size_t hm_h, std::size_t hm_w, double sigma,
                          double stride = 4.0) {
    if (sigma <= 0.0) throw UsageError("encode_gaussian: sigma must be positive");
    const std::size_t joints = kps.joints.size();
    Tensor<S> hm({joints, hm_h, hm_w});
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (std::size_t j = 0; j < joints; ++j) {
        const Keypoint& kp = kps.joints[j];
        if (kp.v == 0) continue;
        const double cx = px_to_cell(kp.x, stride);
        const double cy = px_to_cell(kp.y, stride);
        S* plane = hm.data().data() + j * hm_h * hm_w;
        for (std::size_t y = 0; y < hm_h; ++y)
            for (std::size_t x = 0; x < hm_w; ++x) {
                const double dx = static_cast<double>(x) - cx;
                const double dy = static_cast<double>(y) - cy;
                plane[y * hm_w + x] = static_cast<S>(std::exp(-(dx * dx + dy * dy) * inv));
            }
    }
    return hm;
}

namespace detail {

/// Sub-cell peak refinement along one axis: the vertex of the parabola
/// through (-1, fm), (0, f0), (+1, fp), clamped to half a cell. Plateaus
/// (zero curvature) and one-hot neighborhoods yield zero shift. The ratio is
/// invariant under positive scaling of the heatmap.
inline double parabolic_shift(double fm, double f0, double fp) {
    const double denom = 2.0 * f0 - fm - fp;
    if (!(denom > 0.0)) return 0.0;
    const double shift = (fp - fm) / (2.0 * denom);
    if (shift > 0.5) return 0.5;
    if (shift < -0.5) return -0.5;
    return shift;
}

}  // namespace detail

/// Decodes per-joint sub-pixel keypoints from a [joints, H, W] heatmap:
/// argmax cell (ties to the smallest row-major index), per-axis parabolic
/// refinement (skipped on border rows/columns), mapped back to input pixels
/// with the encode alignment. Confidence is the raw peak value.
template <class S>
std::vector<DecodedJoint> decode_keypoints(const Tensor<S>& hm, double stride = 4.0) {
    if (hm.rank() != 3) throw ShapeError("decode_keypoints: expected [joints, H, W], got " + shape_str(hm.shape()));
    const std::size_t joints = hm.dim(0), h = hm.dim(1), w = hm.dim(2);
    std::vector<DecodedJoint> out(joints);
    for (std::size_t j = 0; j < joints; ++j) {
        const S* plane = hm.data().data() + j * h * w;
        std::size_t best = 0;
        for (std::size_t i = 1; i < h * w; ++i)
            if (plane[i] > plane[best]) best = i;
        const std::size_t by = best / w, bx = best % w;

        double sx = 0.0, sy = 0.0;
        if (bx > 0 && bx + 1 < w)
            sx = detail::parabolic_shift(static_cast<double>(plane[by * w + bx - 1]),
                                         static_cast<double>(plane[by * w + bx]),
                                         static_cast<double>(plane[by * w + bx + 1]));
        if (by > 0 && by + 1 < h)
            sy = detail::parabolic_shift(static_cast<double>(plane[(by - 1) * w + bx]),
                                         static_cast<double>(plane[by * w + bx]),
                                         static_cast<double>(plane[(by + 1) * w + bx]));

        out[j].x = cell_to_px(static_cast<double>(bx) + sx, stride);
        out[j].y = cell_to_px(static_cast<double>(by) + sy, stride);
        out[j].confidence = static_cast<double>(plane[best]);
    }
    return out;
}

}  // namespace gup
