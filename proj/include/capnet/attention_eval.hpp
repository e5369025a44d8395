#pragma once

#include <optional>
#include <string>
#include <vector>

#include "capnet/bbox.hpp"
#include "capnet/tensor.hpp"

namespace capnet {

// One decoding step's spatial weights reshaped to the grid.
struct AttentionMap {
    Tensor weights;  // (g,g), non-negative, sums to 1
    std::string word;
    std::size_t step = 0;
};

// Corner-aligned bilinear upsampling of a grid map to image size.
Tensor upsample_attention(const AttentionMap& map, std::size_t out_h, std::size_t out_w);

// (v - min) / (max - min + 1e-12); constant maps become all zeros.
Tensor normalize_map(const Tensor& map);

// Strict threshold: mask = value > th. th must lie in [0, 1).
Tensor segment_threshold(const Tensor& map, double th);

// Largest connected component (4-connected by default, 8 selectable), ties
// resolved toward the component containing the smallest row-major pixel.
std::optional<BBox> largest_component_bbox(const Tensor& mask, int connectivity = 4);

double siou(const std::optional<BBox>& pred, const BBox& truth);

// Full per-map pipeline: upsample -> normalize -> threshold -> component box.
std::optional<BBox> attention_bbox(const AttentionMap& map, std::size_t image_h,
                                   std::size_t image_w, double th, int connectivity = 4);

struct SampleTrace {
    std::vector<std::string> caption;  // generated tokens
    std::vector<AttentionMap> maps;    // aligned with caption
    BBox truth;
    std::size_t image_h = 0, image_w = 0;
};

struct LocalizationRow {
    std::string category;
    std::size_t count = 0;
    double mean_siou = 0.0;
    bool available = false;  // false when the category was never generated
};

// Mean sIOU per category word over samples whose generated caption contains
// it (first occurrence's map), plus an "overall" row.
std::vector<LocalizationRow> localization_accuracy(const std::vector<SampleTrace>& traces,
                                                   const std::vector<std::string>& categories,
                                                   double th, int connectivity = 4);

std::string localization_csv(const std::vector<LocalizationRow>& rows);

}  // namespace capnet
