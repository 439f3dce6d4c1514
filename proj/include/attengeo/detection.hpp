#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "attengeo/config.hpp"
#include "attengeo/random.hpp"
#include "attengeo/tape.hpp"
#include "attengeo/tensor.hpp"

// Anchor-based localization head: prior-box clustering, ground-truth
// assignment, the confidence/localization losses, box decoding, and
// highest-confidence selection.
//
// Grid tensor layout: raw is [(A*5) x Hg x Wg]; the five channels of
// anchor a are (x, y, w, h, confidence logit) at a*5 .. a*5+4. Boxes are
// indexed flat as a*Hg*Wg + cy*Wg + cx, and that order also settles
// argmax ties (lowest flat index wins).

namespace attengeo {

struct BBox {
    double x = 0; // center, pixels
    double y = 0;
    double w = 0;
    double h = 0;
};

struct AnchorBox {
    double w = 0;
    double h = 0;
};

// Shape-only IoU: both boxes centered at the origin.
inline double anchor_iou(double w1, double h1, double w2, double h2) {
    const double inter = std::min(w1, w2) * std::min(h1, h2);
    return inter / (w1 * h1 + w2 * h2 - inter);
}

struct AnchorSet {
    std::vector<AnchorBox> boxes; // sorted by area ascending

    std::size_t size() const { return boxes.size(); }
    const AnchorBox& operator[](std::size_t i) const { return boxes[i]; }
};

// k-means in (w, h) space under d = 1 - IoU, centroids updated as the
// per-cluster mean. Deterministic given the seed; an emptied cluster keeps
// its previous centroid.
inline AnchorSet cluster_anchors(const std::vector<AnchorBox>& boxes, std::size_t n = defaults::kNumAnchors,
                                 std::size_t iters = 25, std::uint64_t seed = 0) {
    if (n == 0) throw std::invalid_argument("cluster_anchors: cluster count must be positive");
    if (boxes.size() < n) {
        throw std::invalid_argument("cluster_anchors: need at least " + std::to_string(n) + " boxes, got " +
                                    std::to_string(boxes.size()));
    }
    for (const auto& b : boxes) {
        if (!(b.w > 0 && b.h > 0)) throw std::invalid_argument("cluster_anchors: non-positive box size");
    }

    Rng rng(seed);
    std::vector<AnchorBox> centroids;
    std::vector<std::size_t> taken;
    while (centroids.size() < n) { // distinct seed points
        std::size_t i = rng.index(boxes.size());
        if (std::find(taken.begin(), taken.end(), i) == taken.end()) {
            taken.push_back(i);
            centroids.push_back(boxes[i]);
        }
    }

    std::vector<std::size_t> assign(boxes.size(), 0);
    for (std::size_t it = 0; it < iters; ++it) {
        bool moved = false;
        for (std::size_t b = 0; b < boxes.size(); ++b) {
            double best = 2.0;
            std::size_t best_c = 0;
            for (std::size_t c = 0; c < n; ++c) {
                const double d = 1.0 - anchor_iou(boxes[b].w, boxes[b].h, centroids[c].w, centroids[c].h);
                if (d < best) {
                    best = d;
                    best_c = c;
                }
            }
            if (assign[b] != best_c) {
                assign[b] = best_c;
                moved = true;
            }
        }
        std::vector<double> sw(n, 0), sh(n, 0);
        std::vector<std::size_t> cnt(n, 0);
        for (std::size_t b = 0; b < boxes.size(); ++b) {
            sw[assign[b]] += boxes[b].w;
            sh[assign[b]] += boxes[b].h;
            ++cnt[assign[b]];
        }
        for (std::size_t c = 0; c < n; ++c) {
            if (cnt[c] > 0) {
                centroids[c].w = sw[c] / static_cast<double>(cnt[c]);
                centroids[c].h = sh[c] / static_cast<double>(cnt[c]);
            }
        }
        if (!moved && it > 0) break;
    }

    std::sort(centroids.begin(), centroids.end(),
              [](const AnchorBox& a, const AnchorBox& b) { return a.w * a.h < b.w * b.h; });
    return AnchorSet{std::move(centroids)};
}

// Plain-text serialization, one "w h" row per anchor; the on-disk format
// is fixed to the 9-anchor pipeline shape.
inline void save_anchors(const AnchorSet& anchors, const std::string& path) {
    if (anchors.size() != defaults::kNumAnchors) {
        throw std::invalid_argument("save_anchors: anchor file format requires exactly " +
                                    std::to_string(defaults::kNumAnchors) + " anchors, got " +
                                    std::to_string(anchors.size()));
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("save_anchors: cannot write " + path);
    out.precision(17);
    for (const auto& a : anchors.boxes) out << a.w << " " << a.h << "\n";
}

inline AnchorSet load_anchors(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_anchors: cannot open " + path);
    AnchorSet set;
    double w, h;
    while (in >> w >> h) {
        if (!(w > 0 && h > 0)) throw std::runtime_error("load_anchors: non-positive anchor in " + path);
        set.boxes.push_back({w, h});
    }
    if (set.size() != defaults::kNumAnchors) {
        throw std::runtime_error("load_anchors: expected " + std::to_string(defaults::kNumAnchors) +
                                 " rows in " + path + ", got " + std::to_string(set.size()));
    }
    return set;
}

struct GridShape {
    std::size_t anchors = 0;
    std::size_t h = 0;
    std::size_t w = 0;
    double cell_size = 0; // pixels per cell

    std::size_t cells() const { return h * w; }
    std::size_t total_boxes() const { return anchors * h * w; } // M
    std::size_t box_index(std::size_t anchor, std::size_t cy, std::size_t cx) const {
        return anchor * h * w + cy * w + cx;
    }
    // flat offset of channel field f for anchor a at (cy, cx) in raw
    std::size_t raw_index(std::size_t anchor, std::size_t field, std::size_t cy, std::size_t cx) const {
        return (anchor * 5 + field) * h * w + cy * w + cx;
    }
};

template <class T>
struct PredictionGrid {
    Tensor<T> raw; // [(A*5) x Hg x Wg]
    GridShape grid;
};

struct TargetAssignment {
    std::size_t cell_x = 0;
    std::size_t cell_y = 0;
    std::size_t anchor = 0;
    double tx = 0; // x - floor(x) in cell units
    double ty = 0;
    double tw = 0; // log(w / w_a)
    double th = 0;
    std::size_t positive_flat = 0; // box_index(anchor, cell_y, cell_x)
};

// Picks the cell containing the ground-truth center and the anchor with
// max shape IoU (ties -> lowest anchor index).
inline TargetAssignment assign_target(const BBox& gt, const AnchorSet& anchors, const GridShape& grid) {
    const double img_w = grid.cell_size * static_cast<double>(grid.w);
    const double img_h = grid.cell_size * static_cast<double>(grid.h);
    if (!(gt.x >= 0 && gt.x < img_w && gt.y >= 0 && gt.y < img_h)) {
        throw std::invalid_argument("assign_target: box center (" + std::to_string(gt.x) + ", " +
                                    std::to_string(gt.y) + ") outside reference image");
    }
    if (!(gt.w > 0 && gt.h > 0)) throw std::invalid_argument("assign_target: non-positive box size");
    if (anchors.size() == 0) throw std::invalid_argument("assign_target: empty anchor set");

    const double cx_units = gt.x / grid.cell_size;
    const double cy_units = gt.y / grid.cell_size;
    TargetAssignment t;
    t.cell_x = static_cast<std::size_t>(cx_units);
    t.cell_y = static_cast<std::size_t>(cy_units);
    t.tx = cx_units - std::floor(cx_units);
    t.ty = cy_units - std::floor(cy_units);

    double best = -1.0;
    for (std::size_t a = 0; a < anchors.size(); ++a) {
        const double iou = anchor_iou(gt.w, gt.h, anchors[a].w, anchors[a].h);
        if (iou > best) {
            best = iou;
            t.anchor = a;
        }
    }
    t.tw = std::log(gt.w / anchors[t.anchor].w);
    t.th = std::log(gt.h / anchors[t.anchor].h);
    t.positive_flat = grid.box_index(t.anchor, t.cell_y, t.cell_x);
    return t;
}

// ---- losses (tape-level; the pure overloads run a scratch tape) ----

// Per-sample binary cross-entropy over all M boxes; probabilities clamped
// to [eps, 1-eps] with eps = tol::kBceEps.
template <class T>
Var<T> confidence_loss(Tape<T>& tape, Var<T> raw, const GridShape& grid, const TargetAssignment& target) {
    const std::size_t cells = grid.cells();
    std::vector<std::size_t> conf_idx;
    conf_idx.reserve(grid.total_boxes());
    for (std::size_t a = 0; a < grid.anchors; ++a) {
        const std::size_t base = (a * 5 + 4) * cells;
        for (std::size_t p = 0; p < cells; ++p) conf_idx.push_back(base + p);
    }
    Tensor<T> labels({grid.total_boxes()});
    labels.data[target.positive_flat] = T(1);
    Tensor<T> inv_labels = ops::affine(labels, T(-1), T(1));

    Var<T> probs = clamp(sigmoid(gather(raw, std::move(conf_idx))), static_cast<T>(tol::kBceEps),
                         static_cast<T>(1.0 - tol::kBceEps));
    Var<T> pos_term = mul(tape.leaf(labels), log_elem(probs));
    Var<T> neg_term = mul(tape.leaf(inv_labels), log_elem(affine(probs, T(-1), T(1))));
    return affine(sum(add(pos_term, neg_term)), T(-1), T(0));
}

// Squared offset errors at the positive box only; (x, y) predictions pass
// through a sigmoid before comparison with the in-cell fractional targets.
template <class T>
Var<T> localization_loss(Tape<T>& tape, Var<T> raw, const GridShape& grid, const TargetAssignment& target) {
    const std::size_t a = target.anchor, cy = target.cell_y, cx = target.cell_x;
    Var<T> xy = sigmoid(gather(raw, {grid.raw_index(a, 0, cy, cx), grid.raw_index(a, 1, cy, cx)}));
    Var<T> wh = gather(raw, {grid.raw_index(a, 2, cy, cx), grid.raw_index(a, 3, cy, cx)});

    Tensor<T> xy_t({2}, {static_cast<T>(target.tx), static_cast<T>(target.ty)});
    Tensor<T> wh_t({2}, {static_cast<T>(target.tw), static_cast<T>(target.th)});
    Var<T> dx = add(xy, affine(tape.leaf(xy_t), T(-1), T(0)));
    Var<T> dw = add(wh, affine(tape.leaf(wh_t), T(-1), T(0)));
    return add(sum(mul(dx, dx)), sum(mul(dw, dw)));
}

template <class T>
Var<T> total_loss(Tape<T>& tape, Var<T> raw, const GridShape& grid, const TargetAssignment& target) {
    return add(confidence_loss(tape, raw, grid, target), localization_loss(tape, raw, grid, target));
}

template <class T>
T confidence_loss(const PredictionGrid<T>& pred, const TargetAssignment& target) {
    Tape<T> tape;
    return tape.value(confidence_loss(tape, tape.leaf(pred.raw), pred.grid, target)).data[0];
}

template <class T>
T localization_loss(const PredictionGrid<T>& pred, const TargetAssignment& target) {
    Tape<T> tape;
    return tape.value(localization_loss(tape, tape.leaf(pred.raw), pred.grid, target)).data[0];
}

template <class T>
T total_loss(const PredictionGrid<T>& pred, const TargetAssignment& target) {
    Tape<T> tape;
    return tape.value(total_loss(tape, tape.leaf(pred.raw), pred.grid, target)).data[0];
}

// ---- decoding and selection ----

// center = (cell + sigmoid(xy)) * cell_size; size = anchor * exp(wh).
template <class T>
BBox decode_box(const PredictionGrid<T>& pred, std::size_t cell_x, std::size_t cell_y, std::size_t anchor,
                const AnchorSet& anchors) {
    const GridShape& g = pred.grid;
    const double rx = pred.raw.data[g.raw_index(anchor, 0, cell_y, cell_x)];
    const double ry = pred.raw.data[g.raw_index(anchor, 1, cell_y, cell_x)];
    const double rw = pred.raw.data[g.raw_index(anchor, 2, cell_y, cell_x)];
    const double rh = pred.raw.data[g.raw_index(anchor, 3, cell_y, cell_x)];
    const double sx = 1.0 / (1.0 + std::exp(-rx));
    const double sy = 1.0 / (1.0 + std::exp(-ry));
    BBox b;
    b.x = (static_cast<double>(cell_x) + sx) * g.cell_size;
    b.y = (static_cast<double>(cell_y) + sy) * g.cell_size;
    b.w = anchors[anchor].w * std::exp(rw);
    b.h = anchors[anchor].h * std::exp(rh);
    return b;
}

struct Selection {
    BBox box;
    std::size_t flat_index = 0;
    std::size_t anchor = 0;
    std::size_t cell_x = 0;
    std::size_t cell_y = 0;
    double confidence = 0; // sigmoid of the winning logit
};

// Argmax over all M confidence scores; ties break to the lowest flat box
// index. Monotone transforms of the logits cannot change the winner.
template <class T>
Selection select_prediction(const PredictionGrid<T>& pred, const AnchorSet& anchors) {
    const GridShape& g = pred.grid;
    double best = -1e300;
    std::size_t best_flat = 0;
    for (std::size_t a = 0; a < g.anchors; ++a) {
        for (std::size_t cy = 0; cy < g.h; ++cy) {
            for (std::size_t cx = 0; cx < g.w; ++cx) {
                const double logit = pred.raw.data[g.raw_index(a, 4, cy, cx)];
                if (logit > best) {
                    best = logit;
                    best_flat = g.box_index(a, cy, cx);
                }
            }
        }
    }
    Selection s;
    s.flat_index = best_flat;
    s.anchor = best_flat / g.cells();
    s.cell_y = (best_flat % g.cells()) / g.w;
    s.cell_x = best_flat % g.w;
    s.box = decode_box(pred, s.cell_x, s.cell_y, s.anchor, anchors);
    s.confidence = 1.0 / (1.0 + std::exp(-best));
    return s;
}

} // namespace attengeo
