#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "maskforge/dataset.hpp"
#include "maskforge/model.hpp"
#include "maskforge/pipeline.hpp"
#include "maskforge/schedules.hpp"

namespace maskforge {

struct TrainConfig {
    int n_epoch = 0;  // joint-training epochs
    int batch_size = 128;
    double lambda_init = 0.1;
    double lambda_fac = 1.1;
    int patience = 5;
    double plateau_rel_threshold = 5e-3;  // improvement must beat best by this fraction
    double tau_init = 10.0;
    double tau_decay = 0.5;
    double tau_min = 0.01;
    double mask_lr = 0.01;   // beta; 0 freezes the masks
    double model_lr = 0.0001;
    std::uint64_t seed = 0;
    std::optional<double> q_stop;  // stop once Q(final_discretize) drops to this
    int pretrain_epochs = 0;       // masks frozen at init, task loss only
    bool timing = true;            // off: seconds column reads 0 (reproducible output)
    bool adapt_schedules = true;   // off: lambda and tau stay at their init values
};

struct EpochMetrics {
    int epoch = 0;  // 1-based, continuous across pretrain + joint phases
    double train_acc = 0.0;
    double test_acc = 0.0;
    double task_loss = 0.0;  // mean L_f over the epoch's batches
    double mask_q = 0.0;     // noise-free Q from final_discretize at epoch end
    double lambda = 0.0;     // 0 during pretraining
    double tau = 0.0;
    bool lambda_stepped = false;
    double seconds = 0.0;
};

// Per-batch instrumentation; L always equals task_loss + lambda * mask_q in
// the recorded doubles.
struct BatchRecord {
    int epoch = 0;
    int batch = 0;
    bool explore = false;
    double loss = 0.0;
    double task_loss = 0.0;
    double mask_q = 0.0;
    double lambda = 0.0;
    double tau = 0.0;
};

struct TrainHooks {
    std::function<void(const BatchRecord&)> on_batch;
    // keep indicators per mask stage, in pipeline order
    std::function<void(int epoch, const std::vector<TensorPtr>& keeps)> on_epoch_masks;
};

struct TrainResult {
    std::vector<TensorPtr> final_hard;  // m^D per mask, noise-free
    std::vector<EpochMetrics> history;
    bool stopped_by_q = false;
};

// Algorithm: per joint epoch, per batch j (0-based): explore = (j % 2 == 0);
// discretize all masks at the current tau, apply them through the pipeline,
// L = cross-entropy + lambda * Q, backprop, one AMSGrad step on the model
// (model_lr) and one on the mask logits (mask_lr). lambda/tau adapt once per
// epoch. Pretraining epochs run first with masks frozen at their init
// (noise-free) and lambda = 0. Fully deterministic given the seed.
//
// If checkpoint_path is non-empty the full state is saved after every epoch;
// with resume=true an existing checkpoint is loaded and training continues
// bit-exactly as if uninterrupted.
TrainResult learn_selection_masks(Model& model, const Pipeline& pipeline,
                                  std::vector<SelectionMask>& masks, const Dataset& train,
                                  const Dataset& test, const TrainConfig& config,
                                  TrainHooks* hooks = nullptr,
                                  const std::string& checkpoint_path = "", bool resume = false);

// Deterministic noise-free accuracy with fixed binary masks.
double evaluate(const Model& model, const Pipeline& pipeline,
                const std::vector<SelectionMask>& masks, const std::vector<TensorPtr>& keeps,
                const Dataset& split, int batch_size = 256);

}  // namespace maskforge
