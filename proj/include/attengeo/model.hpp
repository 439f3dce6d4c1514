#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "attengeo/attention.hpp"
#include "attengeo/config.hpp"
#include "attengeo/detection.hpp"
#include "attengeo/encoding.hpp"
#include "attengeo/mhsam.hpp"
#include "attengeo/random.hpp"
#include "attengeo/tape.hpp"

// End-to-end pipeline: shared-weight conv backbone over the query
// (RGB + click channel) and reference images, cross-view fusion (CVCAM or
// the summation baseline), optional MHSAM refinement, and the 1x1 conv
// detection head. Plus checkpoint I/O.

namespace attengeo {

struct ModelConfig {
    std::size_t query_size = defaults::kQuerySize;
    std::size_t ref_size = defaults::kReferenceSize;
    // one conv stage per entry, each downsampling by 2; last entry is the
    // attention channel dim D
    std::vector<std::size_t> backbone_channels = {16, 32, 64, 64};
    std::size_t heads = defaults::kHeads;
    std::size_t interaction_iters = defaults::kInteractionIters; // k
    std::size_t expansion = defaults::kChannelExpansion;         // MHSAM E
    std::size_t num_anchors = defaults::kNumAnchors;
    bool use_cvcam = true;
    bool use_mhsam = true;
    bool share_cab_weights = true;
    double click_sigma = defaults::kClickSigma;

    std::size_t feature_dim() const { return backbone_channels.back(); } // D
    std::size_t stride() const { return std::size_t(1) << backbone_channels.size(); }
    std::size_t ref_grid() const { return ref_size / stride(); }
    std::size_t query_grid() const { return query_size / stride(); }
    double cell_size() const { return static_cast<double>(ref_size) / static_cast<double>(ref_grid()); }

    GridShape grid_shape() const { return GridShape{num_anchors, ref_grid(), ref_grid(), cell_size()}; }

    void validate() const {
        if (backbone_channels.empty()) throw std::invalid_argument("ModelConfig: no backbone stages");
        if (ref_size % stride() != 0 || query_size % stride() != 0) {
            throw std::invalid_argument("ModelConfig: image sizes must be divisible by backbone stride " +
                                        std::to_string(stride()));
        }
        if (ref_grid() == 0 || query_grid() == 0) throw std::invalid_argument("ModelConfig: empty feature grid");
        const std::size_t d = feature_dim();
        if (d % 4 != 0) throw std::invalid_argument("ModelConfig: feature dim must be a multiple of 4");
        if (heads == 0 || d % heads != 0) {
            throw std::invalid_argument("ModelConfig: feature dim " + std::to_string(d) +
                                        " not divisible by " + std::to_string(heads) + " heads");
        }
        if (use_cvcam && interaction_iters < 1) {
            throw std::invalid_argument("ModelConfig: interaction_iters must be >= 1");
        }
        if (use_mhsam && (ref_grid() < 5)) {
            throw std::invalid_argument("ModelConfig: reference grid " + std::to_string(ref_grid()) +
                                        " too small for the 5x5 MHSAM head");
        }
        if (num_anchors == 0) throw std::invalid_argument("ModelConfig: need at least one anchor");
        if (!(click_sigma > 0)) throw std::invalid_argument("ModelConfig: click_sigma must be positive");
        if (expansion == 0) throw std::invalid_argument("ModelConfig: expansion must be positive");
    }
};

inline nlohmann::json model_config_to_json(const ModelConfig& c) {
    return nlohmann::json{{"query_size", c.query_size},
                          {"ref_size", c.ref_size},
                          {"backbone_channels", c.backbone_channels},
                          {"heads", c.heads},
                          {"interaction_iters", c.interaction_iters},
                          {"expansion", c.expansion},
                          {"num_anchors", c.num_anchors},
                          {"use_cvcam", c.use_cvcam},
                          {"use_mhsam", c.use_mhsam},
                          {"share_cab_weights", c.share_cab_weights},
                          {"click_sigma", c.click_sigma}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.query_size = j.at("query_size").get<std::size_t>();
    c.ref_size = j.at("ref_size").get<std::size_t>();
    c.backbone_channels = j.at("backbone_channels").get<std::vector<std::size_t>>();
    c.heads = j.at("heads").get<std::size_t>();
    c.interaction_iters = j.at("interaction_iters").get<std::size_t>();
    c.expansion = j.at("expansion").get<std::size_t>();
    c.num_anchors = j.at("num_anchors").get<std::size_t>();
    c.use_cvcam = j.at("use_cvcam").get<bool>();
    c.use_mhsam = j.at("use_mhsam").get<bool>();
    c.share_cab_weights = j.at("share_cab_weights").get<bool>();
    c.click_sigma = j.at("click_sigma").get<double>();
    return c;
}

template <class T>
struct ModelParams {
    // stage 0 stems: query takes RGB + click channel, reference takes RGB;
    // later stages are shared between the branches
    Tensor<T> stem_q_w, stem_q_b;
    Tensor<T> stem_r_w, stem_r_b;
    std::vector<Tensor<T>> stage_w, stage_b;

    CvcamParams<T> cvcam; // empty when the summation baseline is used
    MhsamParams<T> mhsam; // empty when MHSAM is disabled

    Tensor<T> head_w, head_b; // 1x1 conv D -> A*5

    static ModelParams init(const ModelConfig& cfg, Rng& rng) {
        cfg.validate();
        ModelParams p;
        auto conv_init = [&rng](std::size_t cout, std::size_t cin, std::size_t k) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(cin * k * k));
            return rng.tensor_uniform<T>({cout, cin, k, k}, -bound, bound);
        };
        const std::size_t c0 = cfg.backbone_channels[0];
        p.stem_q_w = conv_init(c0, 4, 3);
        p.stem_q_b = Tensor<T>({c0});
        p.stem_r_w = conv_init(c0, 3, 3);
        p.stem_r_b = Tensor<T>({c0});
        for (std::size_t s = 1; s < cfg.backbone_channels.size(); ++s) {
            const std::size_t cin = cfg.backbone_channels[s - 1];
            const std::size_t cout = cfg.backbone_channels[s];
            p.stage_w.push_back(conv_init(cout, cin, 3));
            p.stage_b.push_back(Tensor<T>({cout}));
        }
        if (cfg.use_cvcam) {
            CvcamConfig cc{cfg.interaction_iters, cfg.share_cab_weights};
            p.cvcam = CvcamParams<T>::init(cfg.feature_dim(), cfg.heads, cc, rng);
        }
        if (cfg.use_mhsam) {
            p.mhsam = MhsamParams<T>::init(cfg.feature_dim(), cfg.expansion, rng);
        }
        p.head_w = conv_init(cfg.num_anchors * 5, cfg.feature_dim(), 1);
        p.head_b = Tensor<T>({cfg.num_anchors * 5});
        return p;
    }
};

template <class T>
struct Model {
    ModelConfig cfg;
    AnchorSet anchors;
    ModelParams<T> params;
};

// Visits every learnable tensor in a fixed order shared with
// for_each_var below; the pairing is what makes gradient extraction and
// checkpoints line up.
template <class T, class F>
void for_each_param(const ModelConfig& cfg, ModelParams<T>& p, F&& fn) {
    fn("stem_q_w", p.stem_q_w);
    fn("stem_q_b", p.stem_q_b);
    fn("stem_r_w", p.stem_r_w);
    fn("stem_r_b", p.stem_r_b);
    for (std::size_t s = 0; s < p.stage_w.size(); ++s) {
        fn(("stage" + std::to_string(s + 1) + "_w").c_str(), p.stage_w[s]);
        fn(("stage" + std::to_string(s + 1) + "_b").c_str(), p.stage_b[s]);
    }
    if (cfg.use_cvcam) {
        for (std::size_t i = 0; i < p.cvcam.query_update.size(); ++i) {
            const std::string tag = "cvcam_q" + std::to_string(i);
            fn((tag + "_wq").c_str(), p.cvcam.query_update[i].w_q);
            fn((tag + "_wk").c_str(), p.cvcam.query_update[i].w_k);
            fn((tag + "_wv").c_str(), p.cvcam.query_update[i].w_v);
        }
        for (std::size_t i = 0; i < p.cvcam.ref_update.size(); ++i) {
            const std::string tag = "cvcam_r" + std::to_string(i);
            fn((tag + "_wq").c_str(), p.cvcam.ref_update[i].w_q);
            fn((tag + "_wk").c_str(), p.cvcam.ref_update[i].w_k);
            fn((tag + "_wv").c_str(), p.cvcam.ref_update[i].w_v);
        }
        fn("cvcam_fuse_wq", p.cvcam.fuse.w_q);
        fn("cvcam_fuse_wk", p.cvcam.fuse.w_k);
        fn("cvcam_fuse_wv", p.cvcam.fuse.w_v);
    }
    if (cfg.use_mhsam) {
        for (std::size_t i = 0; i < kMhsamHeads; ++i) {
            const std::string tag = "mhsam" + std::to_string(i);
            fn((tag + "_cw").c_str(), p.mhsam.conv_w[i]);
            fn((tag + "_cb").c_str(), p.mhsam.conv_b[i]);
            fn((tag + "_dw").c_str(), p.mhsam.deconv_w[i]);
            fn((tag + "_db").c_str(), p.mhsam.deconv_b[i]);
        }
    }
    fn("head_w", p.head_w);
    fn("head_b", p.head_b);
}

template <class T>
struct ModelVars {
    Var<T> stem_q_w, stem_q_b, stem_r_w, stem_r_b;
    std::vector<Var<T>> stage_w, stage_b;
    CvcamVars<T> cvcam;
    MhsamVars<T> mhsam;
    Var<T> head_w, head_b;
};

template <class T>
ModelVars<T> on_tape(Tape<T>& tape, const Model<T>& model) {
    const ModelConfig& cfg = model.cfg;
    const ModelParams<T>& p = model.params;
    ModelVars<T> v;
    v.stem_q_w = tape.leaf(p.stem_q_w);
    v.stem_q_b = tape.leaf(p.stem_q_b);
    v.stem_r_w = tape.leaf(p.stem_r_w);
    v.stem_r_b = tape.leaf(p.stem_r_b);
    for (std::size_t s = 0; s < p.stage_w.size(); ++s) {
        v.stage_w.push_back(tape.leaf(p.stage_w[s]));
        v.stage_b.push_back(tape.leaf(p.stage_b[s]));
    }
    if (cfg.use_cvcam) v.cvcam = on_tape(tape, p.cvcam);
    if (cfg.use_mhsam) v.mhsam = on_tape(tape, p.mhsam);
    v.head_w = tape.leaf(p.head_w);
    v.head_b = tape.leaf(p.head_b);
    return v;
}

// Same traversal order as for_each_param.
template <class T, class F>
void for_each_var(const ModelConfig& cfg, ModelVars<T>& v, F&& fn) {
    fn("stem_q_w", v.stem_q_w);
    fn("stem_q_b", v.stem_q_b);
    fn("stem_r_w", v.stem_r_w);
    fn("stem_r_b", v.stem_r_b);
    for (std::size_t s = 0; s < v.stage_w.size(); ++s) {
        fn(("stage" + std::to_string(s + 1) + "_w").c_str(), v.stage_w[s]);
        fn(("stage" + std::to_string(s + 1) + "_b").c_str(), v.stage_b[s]);
    }
    if (cfg.use_cvcam) {
        for (std::size_t i = 0; i < v.cvcam.query_update.size(); ++i) {
            const std::string tag = "cvcam_q" + std::to_string(i);
            fn((tag + "_wq").c_str(), v.cvcam.query_update[i].w_q);
            fn((tag + "_wk").c_str(), v.cvcam.query_update[i].w_k);
            fn((tag + "_wv").c_str(), v.cvcam.query_update[i].w_v);
        }
        for (std::size_t i = 0; i < v.cvcam.ref_update.size(); ++i) {
            const std::string tag = "cvcam_r" + std::to_string(i);
            fn((tag + "_wq").c_str(), v.cvcam.ref_update[i].w_q);
            fn((tag + "_wk").c_str(), v.cvcam.ref_update[i].w_k);
            fn((tag + "_wv").c_str(), v.cvcam.ref_update[i].w_v);
        }
        fn("cvcam_fuse_wq", v.cvcam.fuse.w_q);
        fn("cvcam_fuse_wk", v.cvcam.fuse.w_k);
        fn("cvcam_fuse_wv", v.cvcam.fuse.w_v);
    }
    if (cfg.use_mhsam) {
        for (std::size_t i = 0; i < kMhsamHeads; ++i) {
            const std::string tag = "mhsam" + std::to_string(i);
            fn((tag + "_cw").c_str(), v.mhsam.conv_w[i]);
            fn((tag + "_cb").c_str(), v.mhsam.conv_b[i]);
            fn((tag + "_dw").c_str(), v.mhsam.deconv_w[i]);
            fn((tag + "_db").c_str(), v.mhsam.deconv_b[i]);
        }
    }
    fn("head_w", v.head_w);
    fn("head_b", v.head_b);
}

namespace detail {

// conv(k=3, stride 2, pad 1) + ReLU per stage.
template <class T>
Var<T> backbone_stage(Var<T> x, Var<T> w, Var<T> b) {
    return relu(conv2d(x, w, b, 2, 1));
}

template <class T>
Var<T> run_shared_stages(Var<T> x, const ModelVars<T>& vars) {
    for (std::size_t s = 0; s < vars.stage_w.size(); ++s) {
        x = backbone_stage(x, vars.stage_w[s], vars.stage_b[s]);
    }
    return x;
}

// [C x H x W] -> [C x (H*W)]
template <class T>
Var<T> flatten_spatial(Var<T> x) {
    const auto& s = x.tape->value(x).shape;
    return reshape(x, {s[0], s[1] * s[2]});
}

// Mean of f over positions, broadcast back over the reference extent:
// the summation-fusion baseline.
template <class T>
Var<T> broadcast_query_mean(Tape<T>& tape, Var<T> f_q_flat, std::size_t ref_positions) {
    const auto& s = tape.value(f_q_flat).shape;
    const std::size_t pq = s[1];
    Var<T> avg = matmul(f_q_flat, tape.leaf(Tensor<T>::full({pq, 1}, T(1) / static_cast<T>(pq))));
    return matmul(avg, tape.leaf(Tensor<T>::ones({1, ref_positions})));
}

} // namespace detail

template <class T>
struct ForwardOut {
    Var<T> raw; // [(A*5) x Hg x Wg]
    Var<T> fused; // [D x Hg x Wg] after fusion (pre-MHSAM)
    Var<T> refined; // after MHSAM (== fused when disabled)
    GridShape grid;
};

// Full differentiable forward pass for one sample.
template <class T>
ForwardOut<T> model_forward(Tape<T>& tape, const Model<T>& model, const ModelVars<T>& vars,
                            const Tensor<T>& query_rgb, double click_x, double click_y,
                            const Tensor<T>& ref_rgb) {
    const ModelConfig& cfg = model.cfg;
    if (query_rgb.rank() != 3 || query_rgb.shape[0] != 3 || query_rgb.shape[1] != cfg.query_size ||
        query_rgb.shape[2] != cfg.query_size) {
        throw std::invalid_argument("model_forward: query image must be [3 x " +
                                    std::to_string(cfg.query_size) + " x " + std::to_string(cfg.query_size) +
                                    "], got " + shape_str(query_rgb.shape));
    }
    if (ref_rgb.rank() != 3 || ref_rgb.shape[0] != 3 || ref_rgb.shape[1] != cfg.ref_size ||
        ref_rgb.shape[2] != cfg.ref_size) {
        throw std::invalid_argument("model_forward: reference image must be [3 x " +
                                    std::to_string(cfg.ref_size) + " x " + std::to_string(cfg.ref_size) +
                                    "], got " + shape_str(ref_rgb.shape));
    }

    // query branch: RGB plus the click channel
    const auto click = encode_click<T>(click_x, click_y, cfg.query_size, cfg.query_size, cfg.click_sigma);
    const std::size_t qhw = cfg.query_size * cfg.query_size;
    Var<T> q_rgb_rows = tape.leaf(ops::reshape(query_rgb, {3, qhw}));
    Var<T> click_rows = tape.leaf(ops::reshape(click.channel, {1, qhw}));
    Var<T> q_in = reshape(concat_rows<T>({q_rgb_rows, click_rows}), {4, cfg.query_size, cfg.query_size});

    Var<T> f_q = detail::run_shared_stages(detail::backbone_stage(q_in, vars.stem_q_w, vars.stem_q_b), vars);
    Var<T> f_r = detail::run_shared_stages(
        detail::backbone_stage(tape.leaf(ref_rgb), vars.stem_r_w, vars.stem_r_b), vars);

    const std::size_t d = cfg.feature_dim();
    const std::size_t qg = cfg.query_grid(), rg = cfg.ref_grid();
    Var<T> f_q_flat = detail::flatten_spatial(f_q);
    Var<T> f_r_flat = detail::flatten_spatial(f_r);

    Var<T> fused;
    if (cfg.use_cvcam) {
        Var<T> pe_q = tape.leaf(flatten_posenc(cached_posenc<T>(d, qg, qg)));
        Var<T> pe_r = tape.leaf(flatten_posenc(cached_posenc<T>(d, rg, rg)));
        CvcamConfig cc{cfg.interaction_iters, cfg.share_cab_weights};
        auto [uq, ur] = cvcam_interact(f_q_flat, f_r_flat, cc, vars.cvcam, pe_q, pe_r);
        fused = cvcam_fuse(uq, ur, vars.cvcam.fuse, pe_q, pe_r, rg, rg);
    } else {
        Var<T> summed = add(f_r_flat, detail::broadcast_query_mean(tape, f_q_flat, rg * rg));
        fused = reshape(summed, {d, rg, rg});
    }

    Var<T> refined = cfg.use_mhsam ? mhsam_forward(fused, vars.mhsam) : fused;
    Var<T> raw = conv2d(refined, vars.head_w, vars.head_b, 1, 0);

    ForwardOut<T> out;
    out.raw = raw;
    out.fused = fused;
    out.refined = refined;
    out.grid = cfg.grid_shape();
    return out;
}

// Inference-only forward: returns the prediction grid values.
template <class T>
PredictionGrid<T> predict(const Model<T>& model, const Tensor<T>& query_rgb, double click_x, double click_y,
                          const Tensor<T>& ref_rgb) {
    Tape<T> tape;
    ModelVars<T> vars = on_tape(tape, model);
    ForwardOut<T> out = model_forward(tape, model, vars, query_rgb, click_x, click_y, ref_rgb);
    return PredictionGrid<T>{tape.value(out.raw), out.grid};
}

template <class T>
struct InferResult {
    Selection selection;
    Tensor<double> heat; // [Hg x Wg], min-max normalized to [0, 1]
};

// Highest-confidence box plus the per-cell max-confidence heatmap.
template <class T>
InferResult<T> infer(const Model<T>& model, const Tensor<T>& query_rgb, double click_x, double click_y,
                     const Tensor<T>& ref_rgb) {
    PredictionGrid<T> grid = predict(model, query_rgb, click_x, click_y, ref_rgb);
    InferResult<T> res;
    res.selection = select_prediction(grid, model.anchors);

    const GridShape& g = grid.grid;
    res.heat = Tensor<double>({g.h, g.w});
    double lo = 1e300, hi = -1e300;
    for (std::size_t cy = 0; cy < g.h; ++cy) {
        for (std::size_t cx = 0; cx < g.w; ++cx) {
            double best = -1e300;
            for (std::size_t a = 0; a < g.anchors; ++a) {
                best = std::max(best, static_cast<double>(grid.raw.data[g.raw_index(a, 4, cy, cx)]));
            }
            const double conf = 1.0 / (1.0 + std::exp(-best));
            res.heat.at2(cy, cx) = conf;
            lo = std::min(lo, conf);
            hi = std::max(hi, conf);
        }
    }
    if (hi > lo) {
        for (auto& v : res.heat.data) v = (v - lo) / (hi - lo);
    } else {
        for (auto& v : res.heat.data) v = 0.0;
    }
    return res;
}

// ---- checkpoint I/O ----
//
// Little-endian binary blob:
//   magic "ATGEOCKP" | u32 version | u32 scalar size (4|8)
//   u64 json length | config+anchors JSON
//   u64 tensor count | per tensor: u64 name len, name, u64 rank, dims, data
inline constexpr char kCheckpointMagic[8] = {'A', 'T', 'G', 'E', 'O', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <class V>
void write_pod(std::ofstream& out, V v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::ifstream& in) {
    V v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(V));
    return v;
}

} // namespace detail

template <class T>
void save_checkpoint(const Model<T>& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    detail::write_pod<std::uint32_t>(out, kCheckpointVersion);
    detail::write_pod<std::uint32_t>(out, sizeof(T));

    nlohmann::json j;
    j["config"] = model_config_to_json(model.cfg);
    j["anchors"] = nlohmann::json::array();
    for (const auto& a : model.anchors.boxes) j["anchors"].push_back({a.w, a.h});
    const std::string js = j.dump();
    detail::write_pod<std::uint64_t>(out, js.size());
    out.write(js.data(), static_cast<std::streamsize>(js.size()));

    std::vector<std::pair<std::string, const Tensor<T>*>> entries;
    for_each_param(model.cfg, const_cast<ModelParams<T>&>(model.params),
                   [&entries](const char* name, Tensor<T>& t) { entries.emplace_back(name, &t); });
    detail::write_pod<std::uint64_t>(out, entries.size());
    for (const auto& [name, t] : entries) {
        detail::write_pod<std::uint64_t>(out, name.size());
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        detail::write_pod<std::uint64_t>(out, t->rank());
        for (std::size_t d : t->shape) detail::write_pod<std::uint64_t>(out, d);
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(T)));
    }
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

template <class T>
Model<T> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::string(magic, 8) != std::string(kCheckpointMagic, 8)) {
        throw std::runtime_error("load_checkpoint: " + path + " is not a checkpoint file");
    }
    const auto version = detail::read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion) {
        throw std::runtime_error("load_checkpoint: version mismatch in " + path + ": file has v" +
                                 std::to_string(version) + ", this build reads v" +
                                 std::to_string(kCheckpointVersion));
    }
    const auto scalar = detail::read_pod<std::uint32_t>(in);
    if (scalar != sizeof(T)) {
        throw std::runtime_error("load_checkpoint: scalar width mismatch in " + path + ": file stores " +
                                 std::to_string(scalar * 8) + "-bit floats, this build expects " +
                                 std::to_string(sizeof(T) * 8) + "-bit");
    }

    const auto js_len = detail::read_pod<std::uint64_t>(in);
    std::string js(js_len, '\0');
    in.read(js.data(), static_cast<std::streamsize>(js_len));
    nlohmann::json j = nlohmann::json::parse(js);

    Model<T> model;
    model.cfg = model_config_from_json(j.at("config"));
    model.cfg.validate();
    for (const auto& a : j.at("anchors")) {
        model.anchors.boxes.push_back({a[0].get<double>(), a[1].get<double>()});
    }
    Rng dummy(0);
    model.params = ModelParams<T>::init(model.cfg, dummy);

    const auto count = detail::read_pod<std::uint64_t>(in);
    std::vector<std::pair<std::string, Tensor<T>*>> entries;
    for_each_param(model.cfg, model.params,
                   [&entries](const char* name, Tensor<T>& t) { entries.emplace_back(name, &t); });
    if (count != entries.size()) {
        throw std::runtime_error("load_checkpoint: tensor count mismatch in " + path);
    }
    for (auto& [want_name, t] : entries) {
        const auto name_len = detail::read_pod<std::uint64_t>(in);
        std::string name(name_len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(name_len));
        if (name != want_name) {
            throw std::runtime_error("load_checkpoint: tensor order mismatch: expected " + want_name +
                                     ", found " + name);
        }
        const auto rank = detail::read_pod<std::uint64_t>(in);
        std::vector<std::size_t> shape(rank);
        for (auto& d : shape) d = detail::read_pod<std::uint64_t>(in);
        if (shape != t->shape) {
            throw std::runtime_error("load_checkpoint: shape mismatch for " + name);
        }
        in.read(reinterpret_cast<char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(T)));
    }
    if (!in) throw std::runtime_error("load_checkpoint: truncated file " + path);
    return model;
}

} // namespace attengeo
