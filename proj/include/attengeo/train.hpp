#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "attengeo/dataset.hpp"
#include "attengeo/detection.hpp"
#include "attengeo/evaluation.hpp"
#include "attengeo/model.hpp"

// Training: AdamW (decoupled weight decay) with step decay of the learning
// rate, global-norm gradient clipping, and batch-level parallelism with a
// deterministic reduction order. A fixed seed reproduces the loss curve
// bit for bit regardless of thread count.

namespace attengeo {

struct TrainConfig {
    std::size_t epochs = defaults::kEpochs;
    double lr = defaults::kLearningRate;
    double lr_decay = defaults::kLrDecayFactor;
    std::size_t decay_every = defaults::kLrDecayEveryEpochs;
    std::size_t batch = defaults::kBatchSize;
    double weight_decay = defaults::kWeightDecay;
    double clip_norm = defaults::kGradClipNorm;
    std::uint64_t seed = 0;
    std::size_t threads = 0; // 0 -> hardware concurrency
};

inline double lr_at_epoch(const TrainConfig& cfg, std::size_t epoch) {
    return cfg.lr * std::pow(cfg.lr_decay, static_cast<double>(epoch / cfg.decay_every));
}

// One moment pair per learnable tensor, in for_each_param order.
template <class T>
class AdamW {
public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, double lr,
              double weight_decay) {
        if (m_.empty()) {
            for (auto* p : params) {
                m_.push_back(Tensor<T>::zeros(p->shape));
                v_.push_back(Tensor<T>::zeros(p->shape));
            }
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t i = 0; i < params.size(); ++i) {
            Tensor<T>& p = *params[i];
            const Tensor<T>& g = grads[i];
            for (std::size_t j = 0; j < p.size(); ++j) {
                const double gj = static_cast<double>(g.data[j]);
                const double mj = beta1_ * static_cast<double>(m_[i].data[j]) + (1.0 - beta1_) * gj;
                const double vj = beta2_ * static_cast<double>(v_[i].data[j]) + (1.0 - beta2_) * gj * gj;
                m_[i].data[j] = static_cast<T>(mj);
                v_[i].data[j] = static_cast<T>(vj);
                const double update = (mj / bc1) / (std::sqrt(vj / bc2) + eps_);
                const double decayed = static_cast<double>(p.data[j]) * (1.0 - lr * weight_decay);
                p.data[j] = static_cast<T>(decayed - lr * update);
            }
        }
    }

private:
    double beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<Tensor<T>> m_, v_;
};

struct TrainResult {
    std::vector<double> epoch_loss; // mean total loss per epoch
};

namespace detail {

// Runs fn(i) for i in [0, n) across worker threads; any exception is
// rethrown on the caller thread.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    if (threads == 0) threads = std::max<std::size_t>(1, std::thread::hardware_concurrency());
    threads = std::min(threads, n);
    if (threads <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr err;
    std::mutex err_mu;
    std::vector<std::thread> pool;
    for (std::size_t tid = 0; tid < threads; ++tid) {
        pool.emplace_back([&, tid]() {
            for (std::size_t i = tid; i < n; i += threads) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mu);
                    if (!err) err = std::current_exception();
                    return;
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (err) std::rethrow_exception(err);
}

} // namespace detail

// Preloaded training instance: image tensors plus the fixed assignment.
template <class T>
struct TrainItem {
    SampleTensors<T> tensors;
    double click_x = 0, click_y = 0;
    TargetAssignment target;
    std::string id;
};

template <class T>
std::vector<TrainItem<T>> prepare_items(const Model<T>& model, const std::vector<Sample>& samples,
                                        const std::string& annotation_dir) {
    std::vector<TrainItem<T>> items;
    items.reserve(samples.size());
    const GridShape grid = model.cfg.grid_shape();
    for (const auto& s : samples) {
        TrainItem<T> it;
        it.tensors = load_sample_tensors<T>(s, annotation_dir);
        it.click_x = s.click_x;
        it.click_y = s.click_y;
        it.target = assign_target(s.gt_box, model.anchors, grid);
        it.id = s.id;
        items.push_back(std::move(it));
    }
    return items;
}

// Forward + backward for one sample; returns the loss and appends this
// sample's parameter gradients (in for_each order) to `grads`.
template <class T>
double sample_gradients(const Model<T>& model, const TrainItem<T>& item, std::vector<Tensor<T>>& grads) {
    Tape<T> tape;
    ModelVars<T> vars = on_tape(tape, model);
    ForwardOut<T> out = model_forward(tape, model, vars, item.tensors.query_rgb, item.click_x, item.click_y,
                                      item.tensors.ref_rgb);
    Var<T> raw_flat = reshape(out.raw, {tape.value(out.raw).size()});
    Var<T> loss = total_loss(tape, raw_flat, out.grid, item.target);
    tape.backward(loss);
    for_each_var(model.cfg, vars,
                 [&](const char*, Var<T> v) { grads.push_back(tape.grad(v)); });
    return static_cast<double>(tape.value(loss).data[0]);
}

template <class T>
TrainResult train(Model<T>& model, const std::vector<Sample>& train_samples,
                  const std::string& annotation_dir, const TrainConfig& cfg) {
    if (train_samples.empty()) throw std::invalid_argument("train: empty dataset");
    if (cfg.batch == 0) throw std::invalid_argument("train: batch size must be positive");
    model.cfg.validate();

    std::vector<TrainItem<T>> items = prepare_items(model, train_samples, annotation_dir);

    std::vector<Tensor<T>*> param_ptrs;
    for_each_param(model.cfg, model.params,
                   [&param_ptrs](const char*, Tensor<T>& t) { param_ptrs.push_back(&t); });
    const std::size_t n_params = param_ptrs.size();

    AdamW<T> opt;
    TrainResult result;
    Rng shuffle_rng(cfg.seed ^ 0x7a215eedULL);

    std::vector<std::size_t> order(items.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);
        }
        const double lr = lr_at_epoch(cfg, epoch);
        double epoch_loss_sum = 0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
            const std::size_t bsz = std::min(cfg.batch, order.size() - start);
            std::vector<std::vector<Tensor<T>>> slot_grads(bsz);
            std::vector<double> slot_loss(bsz, 0.0);

            detail::parallel_for(bsz, cfg.threads, [&](std::size_t bi) {
                slot_grads[bi].reserve(n_params);
                slot_loss[bi] = sample_gradients(model, items[order[start + bi]], slot_grads[bi]);
            });

            // deterministic reduction: batch mean accumulated in slot order
            std::vector<Tensor<T>> grads;
            grads.reserve(n_params);
            for (std::size_t p = 0; p < n_params; ++p) grads.push_back(Tensor<T>::zeros(param_ptrs[p]->shape));
            const T inv_b = T(1) / static_cast<T>(bsz);
            for (std::size_t bi = 0; bi < bsz; ++bi) {
                for (std::size_t p = 0; p < n_params; ++p) {
                    const Tensor<T>& g = slot_grads[bi][p];
                    for (std::size_t j = 0; j < g.size(); ++j) grads[p].data[j] += g.data[j] * inv_b;
                }
                epoch_loss_sum += slot_loss[bi];
            }

            if (cfg.clip_norm > 0) {
                double sq = 0;
                for (const auto& g : grads) {
                    for (T v : g.data) sq += static_cast<double>(v) * static_cast<double>(v);
                }
                const double norm = std::sqrt(sq);
                if (norm > cfg.clip_norm) {
                    const T scale = static_cast<T>(cfg.clip_norm / norm);
                    for (auto& g : grads) {
                        for (T& v : g.data) v *= scale;
                    }
                }
            }

            opt.step(param_ptrs, grads, lr, cfg.weight_decay);
        }
        result.epoch_loss.push_back(epoch_loss_sum / static_cast<double>(items.size()));
    }
    return result;
}

// Evaluates the model over samples, producing per-sample IoU records.
template <class T>
EvalReport evaluate(const Model<T>& model, const std::vector<Sample>& samples,
                    const std::string& annotation_dir) {
    if (samples.empty()) throw std::invalid_argument("evaluate: empty sample set");
    std::vector<SampleRecord> records(samples.size());
    detail::parallel_for(samples.size(), 0, [&](std::size_t i) {
        const Sample& s = samples[i];
        SampleTensors<T> tensors = load_sample_tensors<T>(s, annotation_dir);
        PredictionGrid<T> grid = predict(model, tensors.query_rgb, s.click_x, s.click_y, tensors.ref_rgb);
        Selection sel = select_prediction(grid, model.anchors);
        records[i] = SampleRecord{s.id, iou(sel.box, s.gt_box), false, false};
    });
    return make_report(std::move(records));
}

} // namespace attengeo
