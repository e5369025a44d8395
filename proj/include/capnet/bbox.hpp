#pragma once

#include <cstddef>

namespace capnet {

// Integer pixel box; (x, y) is the top-left corner inside image bounds.
struct BBox {
    long x = 0;
    long y = 0;
    long w = 1;
    long h = 1;

    bool operator==(const BBox& o) const { return x == o.x && y == o.y && w == o.w && h == o.h; }
    long area() const { return w * h; }
};

// Intersection over union of two boxes.
double siou(const BBox& a, const BBox& b);

}  // namespace capnet
