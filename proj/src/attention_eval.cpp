#include "capnet/attention_eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "capnet/errors.hpp"
#include "capnet/image_io.hpp"

namespace capnet {

double siou(const BBox& a, const BBox& b) {
    const long ix0 = std::max(a.x, b.x);
    const long iy0 = std::max(a.y, b.y);
    const long ix1 = std::min(a.x + a.w, b.x + b.w);
    const long iy1 = std::min(a.y + a.h, b.y + b.h);
    const long iw = std::max(0L, ix1 - ix0);
    const long ih = std::max(0L, iy1 - iy0);
    const double inter = static_cast<double>(iw * ih);
    const double uni = static_cast<double>(a.area() + b.area()) - inter;
    return uni <= 0.0 ? 0.0 : inter / uni;
}

double siou(const std::optional<BBox>& pred, const BBox& truth) {
    return pred ? siou(*pred, truth) : 0.0;
}

Tensor upsample_attention(const AttentionMap& map, std::size_t out_h, std::size_t out_w) {
    const Tensor& w = map.weights;
    if (w.rank() != 2) throw DimensionError("attention map must be rank 2");
    if (out_h < w.dim(0) || out_w < w.dim(1)) {
        throw ValidationError("upsample target must be at least the grid size");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] < 0.0) throw ValidationError("attention weights must be non-negative");
        total += w[i];
    }
    if (std::abs(total - 1.0) > 1e-10) {
        throw ValidationError("attention weights must sum to 1, got " + std::to_string(total));
    }
    return bilinear_resize(w, out_h, out_w);
}

Tensor normalize_map(const Tensor& map) {
    if (!map.all_finite()) throw ValidationError("normalize_map requires finite values");
    double lo = map[0], hi = map[0];
    for (std::size_t i = 0; i < map.size(); ++i) {
        lo = std::min(lo, map[i]);
        hi = std::max(hi, map[i]);
    }
    Tensor out(map.shape());
    const double denom = hi - lo + 1e-12;
    for (std::size_t i = 0; i < map.size(); ++i) out[i] = (map[i] - lo) / denom;
    return out;
}

Tensor segment_threshold(const Tensor& map, double th) {
    if (!(th >= 0.0 && th < 1.0)) throw ValidationError("threshold must lie in [0, 1)");
    Tensor mask(map.shape());
    for (std::size_t i = 0; i < map.size(); ++i) mask[i] = map[i] > th ? 1.0 : 0.0;
    return mask;
}

std::optional<BBox> largest_component_bbox(const Tensor& mask, int connectivity) {
    if (mask.rank() != 2) throw DimensionError("mask must be rank 2");
    if (connectivity != 4 && connectivity != 8) {
        throw ValidationError("connectivity must be 4 or 8");
    }
    const long h = static_cast<long>(mask.dim(0));
    const long w = static_cast<long>(mask.dim(1));
    std::vector<int> label(static_cast<std::size_t>(h * w), -1);
    std::optional<BBox> best;
    std::size_t best_size = 0;
    int next_label = 0;
    std::vector<long> stack;
    for (long start = 0; start < h * w; ++start) {
        const std::size_t si = static_cast<std::size_t>(start);
        if (mask[si] == 0.0 || label[si] >= 0) continue;
        // flood this component from its smallest row-major pixel
        long min_x = w, min_y = h, max_x = -1, max_y = -1;
        std::size_t count = 0;
        stack.assign(1, start);
        label[si] = next_label;
        while (!stack.empty()) {
            const long p = stack.back();
            stack.pop_back();
            const long y = p / w, x = p % w;
            ++count;
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
            min_y = std::min(min_y, y);
            max_y = std::max(max_y, y);
            auto visit = [&](long ny, long nx) {
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) return;
                const std::size_t q = static_cast<std::size_t>(ny * w + nx);
                if (mask[q] == 0.0 || label[q] >= 0) return;
                label[q] = next_label;
                stack.push_back(ny * w + nx);
            };
            visit(y - 1, x);
            visit(y + 1, x);
            visit(y, x - 1);
            visit(y, x + 1);
            if (connectivity == 8) {
                visit(y - 1, x - 1);
                visit(y - 1, x + 1);
                visit(y + 1, x - 1);
                visit(y + 1, x + 1);
            }
        }
        // strict > keeps the earlier (smaller starting pixel) component on ties
        if (count > best_size) {
            best_size = count;
            best = BBox{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
        }
        ++next_label;
    }
    return best;
}

std::optional<BBox> attention_bbox(const AttentionMap& map, std::size_t image_h,
                                   std::size_t image_w, double th, int connectivity) {
    const Tensor up = upsample_attention(map, image_h, image_w);
    const Tensor norm = normalize_map(up);
    const Tensor mask = segment_threshold(norm, th);
    return largest_component_bbox(mask, connectivity);
}

std::vector<LocalizationRow> localization_accuracy(const std::vector<SampleTrace>& traces,
                                                   const std::vector<std::string>& categories,
                                                   double th, int connectivity) {
    std::vector<LocalizationRow> rows;
    double overall_sum = 0.0;
    std::size_t overall_count = 0;
    for (const std::string& cat : categories) {
        LocalizationRow row;
        row.category = cat;
        double sum = 0.0;
        for (const SampleTrace& tr : traces) {
            if (tr.caption.size() != tr.maps.size()) {
                throw ValidationError("trace caption/map length mismatch");
            }
            auto it = std::find(tr.caption.begin(), tr.caption.end(), cat);
            if (it == tr.caption.end()) continue;
            const std::size_t idx = static_cast<std::size_t>(it - tr.caption.begin());
            const double s =
                siou(attention_bbox(tr.maps[idx], tr.image_h, tr.image_w, th, connectivity),
                     tr.truth);
            sum += s;
            ++row.count;
        }
        if (row.count > 0) {
            row.available = true;
            row.mean_siou = sum / static_cast<double>(row.count);
            overall_sum += sum;
            overall_count += row.count;
        }
        rows.push_back(row);
    }
    LocalizationRow overall;
    overall.category = "overall";
    overall.count = overall_count;
    overall.available = overall_count > 0;
    overall.mean_siou = overall_count > 0 ? overall_sum / static_cast<double>(overall_count) : 0.0;
    rows.push_back(overall);
    return rows;
}

std::string localization_csv(const std::vector<LocalizationRow>& rows) {
    std::ostringstream os;
    os << "category,count,mean_siou\n";
    for (const auto& row : rows) {
        os << row.category << "," << row.count << ",";
        if (row.available) {
            os << std::fixed << std::setprecision(4) << row.mean_siou;
        } else {
            os << "n/a";
        }
        os << "\n";
    }
    return os.str();
}

}  // namespace capnet
