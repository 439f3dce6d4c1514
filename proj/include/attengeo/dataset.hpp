#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "attengeo/detection.hpp"
#include "attengeo/image.hpp"
#include "attengeo/random.hpp"

// Annotation schema, loaders, dataset splitting, and the synthetic
// cross-view pair generator.
//
// Annotations are JSON Lines; one object per line with fields
//   id, query_path, click_xy [x, y], reference_path,
//   bbox_xywh [center_x, center_y, w, h], split
// Image paths are relative to the annotation file. Images are binary PPM.

namespace attengeo {

struct Sample {
    std::string id;
    std::string query_path;
    std::string reference_path;
    double click_x = 0;
    double click_y = 0;
    BBox gt_box; // center-format, reference-image pixels
    std::string split; // train | val | test
};

inline nlohmann::json sample_to_json(const Sample& s) {
    return nlohmann::json{{"id", s.id},
                          {"query_path", s.query_path},
                          {"click_xy", {s.click_x, s.click_y}},
                          {"reference_path", s.reference_path},
                          {"bbox_xywh", {s.gt_box.x, s.gt_box.y, s.gt_box.w, s.gt_box.h}},
                          {"split", s.split}};
}

inline void write_annotations(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_annotations: cannot write " + path);
    for (const auto& s : samples) out << sample_to_json(s).dump() << "\n";
}

// Parses and validates one annotation line. Bounds checks read the PPM
// headers of the referenced images.
inline Sample parse_annotation_line(const std::string& line, const std::filesystem::path& base_dir) {
    nlohmann::json j = nlohmann::json::parse(line);
    Sample s;
    s.id = j.at("id").get<std::string>();
    s.query_path = j.at("query_path").get<std::string>();
    s.reference_path = j.at("reference_path").get<std::string>();
    const auto& click = j.at("click_xy");
    const auto& box = j.at("bbox_xywh");
    if (!click.is_array() || click.size() != 2) throw std::runtime_error("click_xy must be [x, y]");
    if (!box.is_array() || box.size() != 4) throw std::runtime_error("bbox_xywh must be [x, y, w, h]");
    s.click_x = click[0].get<double>();
    s.click_y = click[1].get<double>();
    s.gt_box = BBox{box[0].get<double>(), box[1].get<double>(), box[2].get<double>(), box[3].get<double>()};
    s.split = j.at("split").get<std::string>();
    if (s.split != "train" && s.split != "val" && s.split != "test") {
        throw std::runtime_error("split must be train/val/test, got '" + s.split + "'");
    }

    const auto [qw, qh] = read_ppm_dims((base_dir / s.query_path).string());
    if (!(s.click_x >= 0 && s.click_x < static_cast<double>(qw) && s.click_y >= 0 &&
          s.click_y < static_cast<double>(qh))) {
        throw std::runtime_error("click (" + std::to_string(s.click_x) + ", " + std::to_string(s.click_y) +
                                 ") outside query image " + std::to_string(qw) + "x" + std::to_string(qh));
    }
    const auto [rw, rh] = read_ppm_dims((base_dir / s.reference_path).string());
    const BBox& b = s.gt_box;
    if (!(b.w > 0 && b.h > 0)) throw std::runtime_error("bbox has non-positive extent");
    if (b.x - b.w / 2 < 0 || b.y - b.h / 2 < 0 || b.x + b.w / 2 > static_cast<double>(rw) ||
        b.y + b.h / 2 > static_cast<double>(rh)) {
        throw std::runtime_error("bbox extends outside reference image " + std::to_string(rw) + "x" +
                                 std::to_string(rh));
    }
    return s;
}

// Loads and validates every line. With errors == nullptr any malformed
// line aborts the load; otherwise bad lines are skipped and reported as
// "line N: reason".
inline std::vector<Sample> load_annotations(const std::string& path,
                                            std::vector<std::string>* errors = nullptr) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_annotations: cannot open " + path);
    const std::filesystem::path base_dir = std::filesystem::path(path).parent_path();

    std::vector<Sample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            samples.push_back(parse_annotation_line(line, base_dir));
        } catch (const std::exception& e) {
            const std::string msg = "line " + std::to_string(line_no) + ": " + e.what();
            if (errors) {
                errors->push_back(msg);
            } else {
                throw std::runtime_error("load_annotations: " + msg);
            }
        }
    }
    return samples;
}

struct SplitResult {
    std::vector<Sample> train, val, test;
};

// Seed-deterministic shuffle, then cut at round(n * ratio) boundaries;
// the last split takes the remainder.
inline SplitResult split_dataset(std::vector<Sample> samples, const std::array<double, 3>& ratios,
                                 std::uint64_t seed = 0) {
    const double rsum = ratios[0] + ratios[1] + ratios[2];
    if (std::abs(rsum - 1.0) > 1e-9) {
        throw std::invalid_argument("split_dataset: ratios sum to " + std::to_string(rsum) + ", expected 1");
    }
    Rng rng(seed);
    for (std::size_t i = samples.size(); i > 1; --i) {
        std::swap(samples[i - 1], samples[rng.index(i)]);
    }
    const std::size_t n = samples.size();
    std::size_t n_train = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[0]));
    n_train = std::min(n_train, n);
    std::size_t n_val = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratios[1]));
    n_val = std::min(n_val, n - n_train);

    SplitResult out;
    for (std::size_t i = 0; i < n; ++i) {
        Sample s = std::move(samples[i]);
        if (i < n_train) {
            s.split = "train";
            out.train.push_back(std::move(s));
        } else if (i < n_train + n_val) {
            s.split = "val";
            out.val.push_back(std::move(s));
        } else {
            s.split = "test";
            out.test.push_back(std::move(s));
        }
    }
    return out;
}

// ---- synthetic cross-view pairs ----

struct SyntheticSpec {
    std::size_t n_samples = 64;
    std::size_t query_size = 64;
    std::size_t ref_size = 128;
    std::size_t distractors = 3;       // reference view
    std::size_t query_distractors = 1; // query view
    double min_object = 16;
    double max_object = 40;
    std::array<double, 3> split_ratios{0.7, 0.15, 0.15};
    std::uint64_t seed = 0;
};

// Per-sample generation record kept in memory for verification; not
// serialized.
struct SyntheticMeta {
    Rgb target_color;
    ShapeKind target_shape = ShapeKind::kRect;
    long ref_x0 = 0, ref_y0 = 0, ref_w = 0, ref_h = 0; // painted extent in reference
};

struct GeneratedDataset {
    std::vector<Sample> samples;
    std::vector<SyntheticMeta> meta;
    std::string annotation_path;
};

namespace synth_detail {

inline const std::array<Rgb, 6>& palette() {
    static const std::array<Rgb, 6> colors{Rgb{220, 40, 40},  Rgb{40, 200, 60},  Rgb{60, 90, 230},
                                           Rgb{230, 200, 40}, Rgb{200, 60, 200}, Rgb{40, 210, 210}};
    return colors;
}

inline void fill_noise(Image& img, Rng& rng, int base, int spread) {
    for (std::size_t i = 0; i < img.pixels.size(); i += 3) {
        const int v = base + static_cast<int>(rng.index(static_cast<std::size_t>(spread)));
        const int dr = static_cast<int>(rng.index(9)) - 4;
        const int dg = static_cast<int>(rng.index(9)) - 4;
        const int db = static_cast<int>(rng.index(9)) - 4;
        auto clip = [](int x) { return static_cast<std::uint8_t>(std::min(255, std::max(0, x))); };
        img.pixels[i] = clip(v + dr);
        img.pixels[i + 1] = clip(v + dg);
        img.pixels[i + 2] = clip(v + db);
    }
}

struct Box {
    long x0, y0, w, h;
    bool overlaps(const Box& o, long margin) const {
        return x0 < o.x0 + o.w + margin && o.x0 < x0 + w + margin && y0 < o.y0 + o.h + margin &&
               o.y0 < y0 + h + margin;
    }
};

// Gray bars and blobs hugging the borders; the "edge noise" the model is
// supposed to learn to ignore.
inline void paint_border_clutter(Image& img, Rng& rng, const Box& avoid) {
    const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
    const std::size_t pieces = 4 + rng.index(4);
    for (std::size_t i = 0; i < pieces; ++i) {
        const std::uint8_t g = static_cast<std::uint8_t>(120 + rng.index(100));
        const Rgb gray{g, g, static_cast<std::uint8_t>(std::min<int>(255, g + static_cast<int>(rng.index(40))))};
        const std::size_t side = rng.index(4);
        long bw = 6 + static_cast<long>(rng.index(18));
        long bh = 2 + static_cast<long>(rng.index(5));
        if (side == 1 || side == 3) std::swap(bw, bh);
        long x0 = 0, y0 = 0;
        switch (side) {
        case 0: // top
            x0 = static_cast<long>(rng.index(static_cast<std::size_t>(std::max<long>(1, w - bw))));
            y0 = static_cast<long>(rng.index(4));
            break;
        case 1: // right
            x0 = w - bw - static_cast<long>(rng.index(4));
            y0 = static_cast<long>(rng.index(static_cast<std::size_t>(std::max<long>(1, h - bh))));
            break;
        case 2: // bottom
            x0 = static_cast<long>(rng.index(static_cast<std::size_t>(std::max<long>(1, w - bw))));
            y0 = h - bh - static_cast<long>(rng.index(4));
            break;
        default: // left
            x0 = static_cast<long>(rng.index(4));
            y0 = static_cast<long>(rng.index(static_cast<std::size_t>(std::max<long>(1, h - bh))));
            break;
        }
        const Box piece{x0, y0, bw, bh};
        if (piece.overlaps(avoid, 2)) continue;
        paint_shape(img, rng.coin(0.3) ? ShapeKind::kDisc : ShapeKind::kRect, x0, y0, bw, bh, gray);
    }
}

// Finds a placement not overlapping any existing box; consumes a bounded
// number of draws so generation stays deterministic even on failure.
inline bool place_box(Rng& rng, long img_w, long img_h, long w, long h, long margin,
                      const std::vector<Box>& taken, Box& out) {
    for (int attempt = 0; attempt < 60; ++attempt) {
        const long max_x = img_w - w - margin;
        const long max_y = img_h - h - margin;
        if (max_x <= margin || max_y <= margin) return false;
        const long x0 = margin + static_cast<long>(rng.index(static_cast<std::size_t>(max_x - margin + 1)));
        const long y0 = margin + static_cast<long>(rng.index(static_cast<std::size_t>(max_y - margin + 1)));
        const Box cand{x0, y0, w, h};
        bool ok = true;
        for (const auto& t : taken) {
            if (cand.overlaps(t, 4)) {
                ok = false;
                break;
            }
        }
        if (ok) {
            out = cand;
            return true;
        }
    }
    return false;
}

} // namespace synth_detail

// Renders n_samples cross-view pairs under <out_dir>/images and writes
// <out_dir>/annotations.jsonl. The query view shows the same object under
// a scale in [0.5, 2], a right-angle rotation, and position jitter, on a
// brighter background; distractors never share the target's color.
inline GeneratedDataset generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    namespace sd = synth_detail;
    if (spec.query_size < 24 || spec.ref_size < 48) {
        throw std::invalid_argument("generate_synthetic: image sizes too small");
    }
    std::filesystem::create_directories(std::filesystem::path(out_dir) / "images");

    GeneratedDataset result;
    Rng master(spec.seed);
    for (std::size_t i = 0; i < spec.n_samples; ++i) {
        Rng rng = master.fork(i);
        Sample s;
        SyntheticMeta meta;
        {
            std::ostringstream id;
            id << "syn_" << std::setw(6) << std::setfill('0') << i;
            s.id = id.str();
        }
        s.query_path = "images/" + s.id + "_q.ppm";
        s.reference_path = "images/" + s.id + "_r.ppm";

        const auto& colors = sd::palette();
        const std::size_t target_color_idx = rng.index(colors.size());
        meta.target_color = colors[target_color_idx];
        meta.target_shape = static_cast<ShapeKind>(rng.index(3));

        const long ref_sz = static_cast<long>(spec.ref_size);
        const long tw = static_cast<long>(std::lround(rng.uniform(spec.min_object, spec.max_object)));
        const long th = static_cast<long>(std::lround(rng.uniform(spec.min_object, spec.max_object)));

        // reference view
        Image ref(spec.ref_size, spec.ref_size);
        sd::fill_noise(ref, rng, 28, 26);
        sd::Box target_box;
        if (!sd::place_box(rng, ref_sz, ref_sz, tw, th, 4, {}, target_box)) {
            throw std::runtime_error("generate_synthetic: cannot place target object");
        }
        sd::paint_border_clutter(ref, rng, target_box);
        std::vector<sd::Box> taken{target_box};
        for (std::size_t d = 0; d < spec.distractors; ++d) {
            const long dw = static_cast<long>(std::lround(rng.uniform(spec.min_object, spec.max_object)));
            const long dh = static_cast<long>(std::lround(rng.uniform(spec.min_object, spec.max_object)));
            sd::Box db;
            const std::size_t color_idx = (target_color_idx + 1 + rng.index(colors.size() - 1)) % colors.size();
            const ShapeKind shape = static_cast<ShapeKind>(rng.index(3));
            if (sd::place_box(rng, ref_sz, ref_sz, dw, dh, 2, taken, db)) {
                taken.push_back(db);
                paint_shape(ref, shape, db.x0, db.y0, db.w, db.h, colors[color_idx]);
            }
        }
        // target painted last, never occluded
        paint_shape(ref, meta.target_shape, target_box.x0, target_box.y0, target_box.w, target_box.h,
                    meta.target_color);
        meta.ref_x0 = target_box.x0;
        meta.ref_y0 = target_box.y0;
        meta.ref_w = target_box.w;
        meta.ref_h = target_box.h;
        s.gt_box = BBox{static_cast<double>(target_box.x0) + static_cast<double>(target_box.w) / 2.0,
                        static_cast<double>(target_box.y0) + static_cast<double>(target_box.h) / 2.0,
                        static_cast<double>(target_box.w), static_cast<double>(target_box.h)};

        // query view: same object, different viewpoint
        const long q_sz = static_cast<long>(spec.query_size);
        const double scale = rng.uniform(0.5, 2.0);
        const std::size_t quarter_turns = rng.index(4);
        long qw = static_cast<long>(std::lround(static_cast<double>(tw) * scale));
        long qh = static_cast<long>(std::lround(static_cast<double>(th) * scale));
        if (quarter_turns % 2 == 1) std::swap(qw, qh);
        qw = std::min<long>(std::max<long>(qw, 8), q_sz - 8);
        qh = std::min<long>(std::max<long>(qh, 8), q_sz - 8);

        Image query(spec.query_size, spec.query_size);
        sd::fill_noise(query, rng, 64, 30);
        sd::Box q_target;
        if (!sd::place_box(rng, q_sz, q_sz, qw, qh, 3, {}, q_target)) {
            throw std::runtime_error("generate_synthetic: cannot place query object");
        }
        std::vector<sd::Box> q_taken{q_target};
        for (std::size_t d = 0; d < spec.query_distractors; ++d) {
            const long dw = 8 + static_cast<long>(rng.index(18));
            const long dh = 8 + static_cast<long>(rng.index(18));
            sd::Box db;
            const std::size_t color_idx = (target_color_idx + 1 + rng.index(colors.size() - 1)) % colors.size();
            if (sd::place_box(rng, q_sz, q_sz, dw, dh, 2, q_taken, db)) {
                q_taken.push_back(db);
                paint_shape(query, static_cast<ShapeKind>(rng.index(3)), db.x0, db.y0, db.w, db.h,
                            colors[color_idx]);
            }
        }
        paint_shape(query, meta.target_shape, q_target.x0, q_target.y0, q_target.w, q_target.h,
                    meta.target_color);

        // click: object center plus jitter, kept strictly inside the object
        const double qcx = static_cast<double>(q_target.x0) + static_cast<double>(q_target.w) / 2.0;
        const double qcy = static_cast<double>(q_target.y0) + static_cast<double>(q_target.h) / 2.0;
        s.click_x = qcx + rng.uniform(-2.0, 2.0);
        s.click_y = qcy + rng.uniform(-2.0, 2.0);

        write_ppm(query, (std::filesystem::path(out_dir) / s.query_path).string());
        write_ppm(ref, (std::filesystem::path(out_dir) / s.reference_path).string());
        result.samples.push_back(std::move(s));
        result.meta.push_back(meta);
    }

    SplitResult split = split_dataset(result.samples, spec.split_ratios, spec.seed ^ 0x5eedULL);
    result.samples.clear();
    for (auto& v : {&split.train, &split.val, &split.test}) {
        for (auto& s : *v) result.samples.push_back(s);
    }
    // stable order in the file: by id
    std::sort(result.samples.begin(), result.samples.end(),
              [](const Sample& a, const Sample& b) { return a.id < b.id; });

    result.annotation_path = (std::filesystem::path(out_dir) / "annotations.jsonl").string();
    write_annotations(result.samples, result.annotation_path);
    return result;
}

// In-memory image pair of one sample, normalized to [0, 1].
template <class T>
struct SampleTensors {
    Tensor<T> query_rgb; // [3 x Hq x Wq]
    Tensor<T> ref_rgb;   // [3 x Hr x Wr]
};

template <class T>
SampleTensors<T> load_sample_tensors(const Sample& s, const std::string& annotation_dir) {
    const std::filesystem::path base(annotation_dir);
    SampleTensors<T> out;
    out.query_rgb = read_ppm((base / s.query_path).string()).template to_tensor<T>();
    out.ref_rgb = read_ppm((base / s.reference_path).string()).template to_tensor<T>();
    return out;
}

inline std::vector<Sample> filter_split(const std::vector<Sample>& samples, const std::string& split) {
    std::vector<Sample> out;
    for (const auto& s : samples) {
        if (s.split == split) out.push_back(s);
    }
    return out;
}

} // namespace attengeo
