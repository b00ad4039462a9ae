#include "maskforge/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "maskforge/ops.hpp"

namespace maskforge {

namespace {

constexpr std::uint64_t kShufflePurpose = 0x73687566ULL;  // "shuf"

int argmax_row(const double* row, int n) {
    int best = 0;
    for (int j = 1; j < n; ++j)
        if (row[j] > row[best]) best = j;
    return best;
}

std::vector<TensorPtr> final_keeps(const std::vector<SelectionMask>& masks,
                                   const Pipeline& pipeline, std::vector<TensorPtr>* hards_out) {
    std::vector<TensorPtr> keeps;
    std::vector<TensorPtr> hards;
    for (const auto& s : pipeline.stages) {
        if (s.kind != Stage::Kind::Mask) continue;
        auto hard = final_discretize(masks[s.mask_id]);
        keeps.push_back(keep_indicator(hard, masks[s.mask_id]));
        hards.push_back(hard);
    }
    if (hards_out) *hards_out = std::move(hards);
    return keeps;
}

// --- checkpoint serialization (raw little-endian, doubles as bit patterns) ---

void put_u64(std::ofstream& os, std::uint64_t v) {
    os.write(reinterpret_cast<const char*>(&v), 8);
}
void put_f64(std::ofstream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(os, bits);
}
void put_vec(std::ofstream& os, const std::vector<double>& v) {
    put_u64(os, v.size());
    for (double d : v) put_f64(os, d);
}
void put_str(std::ofstream& os, const std::string& s) {
    put_u64(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::uint64_t get_u64(std::ifstream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    return v;
}
double get_f64(std::ifstream& is) {
    std::uint64_t bits = get_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}
std::vector<double> get_vec(std::ifstream& is) {
    std::vector<double> v(get_u64(is));
    for (auto& d : v) d = get_f64(is);
    return v;
}
std::string get_str(std::ifstream& is) {
    std::string s(get_u64(is), '\0');
    is.read(s.data(), static_cast<std::streamsize>(s.size()));
    return s;
}

void put_param(std::ofstream& os, const Parameter& p) {
    put_vec(os, p.tensor->values);
    put_vec(os, p.m);
    put_vec(os, p.v);
    put_vec(os, p.v_max);
    put_u64(os, static_cast<std::uint64_t>(p.step_count));
}

void get_param(std::ifstream& is, Parameter& p) {
    p.tensor->values = get_vec(is);
    p.m = get_vec(is);
    p.v = get_vec(is);
    p.v_max = get_vec(is);
    p.step_count = static_cast<std::int64_t>(get_u64(is));
}

constexpr std::uint64_t kCheckpointMagic = 0x4d534b43'4b505431ULL;  // "MSKCKPT1"

struct LoopState {
    int next_epoch = 1;
    Schedules schedules;
    std::vector<EpochMetrics> history;
    bool stopped_by_q = false;
};

void save_checkpoint(const std::string& path, const LoopState& st,
                     const std::vector<Parameter>& model_params,
                     const std::vector<Parameter>& mask_params,
                     const std::vector<SelectionMask>& masks, std::uint64_t seed) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("checkpoint: cannot write " + tmp);
        put_u64(os, kCheckpointMagic);
        put_u64(os, seed);
        put_u64(os, static_cast<std::uint64_t>(st.next_epoch));
        put_f64(os, st.schedules.lambda.lambda);
        put_f64(os, st.schedules.lambda.best_loss);
        put_u64(os, static_cast<std::uint64_t>(st.schedules.lambda.epochs_since_improve));
        put_f64(os, st.schedules.tau.tau);
        put_u64(os, st.history.size());
        for (const auto& m : st.history) {
            put_u64(os, static_cast<std::uint64_t>(m.epoch));
            put_f64(os, m.train_acc);
            put_f64(os, m.test_acc);
            put_f64(os, m.task_loss);
            put_f64(os, m.mask_q);
            put_f64(os, m.lambda);
            put_f64(os, m.tau);
            put_u64(os, m.lambda_stepped ? 1 : 0);
            put_f64(os, m.seconds);
        }
        put_u64(os, model_params.size());
        for (const auto& p : model_params) put_param(os, p);
        put_u64(os, mask_params.size());
        for (const auto& p : mask_params) put_param(os, p);
        put_u64(os, masks.size());
        for (const auto& m : masks) {
            put_str(os, m.noise.state_string());
            put_u64(os, m.noise.draw_count());
        }
    }
    std::rename(tmp.c_str(), path.c_str());
}

bool load_checkpoint(const std::string& path, LoopState& st, std::vector<Parameter>& model_params,
                     std::vector<Parameter>& mask_params, std::vector<SelectionMask>& masks,
                     std::uint64_t seed) {
    std::ifstream is(path, std::ios::binary);
    if (!is) return false;
    if (get_u64(is) != kCheckpointMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
    if (get_u64(is) != seed) throw std::runtime_error("checkpoint: seed mismatch in " + path);
    st.next_epoch = static_cast<int>(get_u64(is));
    st.schedules.lambda.lambda = get_f64(is);
    st.schedules.lambda.best_loss = get_f64(is);
    st.schedules.lambda.epochs_since_improve = static_cast<int>(get_u64(is));
    st.schedules.tau.tau = get_f64(is);
    st.history.resize(get_u64(is));
    for (auto& m : st.history) {
        m.epoch = static_cast<int>(get_u64(is));
        m.train_acc = get_f64(is);
        m.test_acc = get_f64(is);
        m.task_loss = get_f64(is);
        m.mask_q = get_f64(is);
        m.lambda = get_f64(is);
        m.tau = get_f64(is);
        m.lambda_stepped = get_u64(is) != 0;
        m.seconds = get_f64(is);
    }
    if (get_u64(is) != model_params.size())
        throw std::runtime_error("checkpoint: model parameter count mismatch");
    for (auto& p : model_params) get_param(is, p);
    if (get_u64(is) != mask_params.size())
        throw std::runtime_error("checkpoint: mask parameter count mismatch");
    for (auto& p : mask_params) get_param(is, p);
    if (get_u64(is) != masks.size()) throw std::runtime_error("checkpoint: mask count mismatch");
    for (auto& m : masks) {
        const std::string state = get_str(is);
        const std::uint64_t draws = get_u64(is);
        m.noise.restore_state(state, draws);
    }
    return true;
}

}  // namespace

double evaluate(const Model& model, const Pipeline& pipeline,
                const std::vector<SelectionMask>& masks, const std::vector<TensorPtr>& keeps,
                const Dataset& split, int batch_size) {
    if (split.size() == 0) throw std::invalid_argument("evaluate: empty split");
    std::int64_t correct = 0;
    for (std::int64_t start = 0; start < split.size(); start += batch_size) {
        const std::int64_t end = std::min<std::int64_t>(start + batch_size, split.size());
        std::vector<std::int64_t> idx(static_cast<std::size_t>(end - start));
        for (std::int64_t i = start; i < end; ++i) idx[i - start] = i;
        auto x = split.gather(idx);
        auto masked = pipeline_apply_hard(pipeline, x, masks, keeps);
        Tape tape;  // no grads on this path
        auto logits = model.forward(tape, masked);
        const int classes = logits->shape[1];
        for (std::int64_t i = 0; i < end - start; ++i) {
            const int pred = argmax_row(logits->values.data() + i * classes, classes);
            if (pred == split.labels[start + i]) ++correct;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(split.size());
}

TrainResult learn_selection_masks(Model& model, const Pipeline& pipeline,
                                  std::vector<SelectionMask>& masks, const Dataset& train,
                                  const Dataset& test, const TrainConfig& config,
                                  TrainHooks* hooks, const std::string& checkpoint_path,
                                  bool resume) {
    if (train.size() == 0) throw std::invalid_argument("learn_selection_masks: empty dataset");
    const int out_c = pipeline.validate(masks);
    if (pipeline.in_w != train.w || pipeline.in_h != train.h || pipeline.in_c != train.c)
        throw std::invalid_argument("learn_selection_masks: dataset shape does not match pipeline");
    if (out_c != model.spec.in_c || pipeline.in_w != model.spec.in_w ||
        pipeline.in_h != model.spec.in_h)
        throw std::invalid_argument(
            "learn_selection_masks: pipeline output does not match model input");

    std::vector<Parameter> mask_params;
    for (auto& m : masks) mask_params.emplace_back(m.logits);

    LoopState st;
    st.schedules = init_lambda_tau(config.lambda_init, config.lambda_fac, config.patience,
                                   config.tau_init, config.tau_decay, config.tau_min,
                                   config.plateau_rel_threshold);
    if (resume && !checkpoint_path.empty())
        load_checkpoint(checkpoint_path, st, model.params, mask_params, masks, config.seed);

    const int total_epochs = config.pretrain_epochs + config.n_epoch;
    const bool frozen_masks = config.mask_lr == 0.0;

    TrainResult result;
    for (int epoch = st.next_epoch; epoch <= total_epochs && !st.stopped_by_q; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const bool pretrain = epoch <= config.pretrain_epochs;
        const double lambda = pretrain ? 0.0 : st.schedules.lambda.lambda;
        const double tau = pretrain ? config.tau_init : st.schedules.tau.tau;

        auto shuffle =
            RngStream::derive(config.seed, kShufflePurpose, static_cast<std::uint64_t>(epoch));
        const auto batches = make_batches(train.size(), config.batch_size, shuffle);

        double loss_sum = 0.0, task_sum = 0.0;
        std::int64_t correct = 0;
        for (std::size_t j = 0; j < batches.size(); ++j) {
            const bool explore = !pretrain && (j % 2 == 0);
            auto x = train.gather(batches[j]);
            std::vector<int> labels(batches[j].size());
            for (std::size_t i = 0; i < batches[j].size(); ++i)
                labels[i] = train.labels[batches[j][i]];

            Tape tape;
            auto pr = pipeline_forward(tape, pipeline, x, masks, tau, explore);
            auto logits = model.forward(tape, pr.x);
            auto task_loss = ops::cross_entropy_with_logits(tape, logits, labels);
            auto loss = ops::add(tape, task_loss, ops::scale(tape, pr.q, lambda));
            if (!std::isfinite(loss->item())) {
                throw std::runtime_error("learn_selection_masks: non-finite loss at epoch " +
                                         std::to_string(epoch) + " batch " + std::to_string(j));
            }
            tape.backprop(loss);

            for (auto& p : model.params) adam_amsgrad_step(p, config.model_lr);
            if (!pretrain && !frozen_masks) {
                for (auto& p : mask_params) adam_amsgrad_step(p, config.mask_lr);
            } else {
                for (auto& p : mask_params) p.tensor->zero_grad();
            }

            loss_sum += loss->item();
            task_sum += task_loss->item();
            const int classes = logits->shape[1];
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (argmax_row(logits->values.data() + i * classes, classes) == labels[i])
                    ++correct;
            }
            if (hooks && hooks->on_batch) {
                hooks->on_batch({epoch, static_cast<int>(j), explore, loss->item(),
                                 task_loss->item(), pr.q->item(), lambda, tau});
            }
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.train_acc = static_cast<double>(correct) / static_cast<double>(train.size());
        em.task_loss = task_sum / static_cast<double>(batches.size());
        em.lambda = lambda;
        em.tau = tau;
        if (!pretrain && config.adapt_schedules) {
            em.lambda_stepped =
                adapt_lambda_tau(st.schedules, loss_sum / static_cast<double>(batches.size()));
        }

        std::vector<TensorPtr> hards;
        auto keeps = final_keeps(masks, pipeline, &hards);
        em.mask_q = pipeline_hard_cost(pipeline, masks, hards);
        em.test_acc = test.size() > 0 ? evaluate(model, pipeline, masks, keeps, test) : 0.0;
        em.seconds = config.timing
                         ? std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count()
                         : 0.0;
        st.history.push_back(em);
        if (hooks && hooks->on_epoch_masks) hooks->on_epoch_masks(epoch, keeps);

        if (config.q_stop && em.mask_q <= *config.q_stop) st.stopped_by_q = true;

        st.next_epoch = epoch + 1;
        if (!checkpoint_path.empty())
            save_checkpoint(checkpoint_path, st, model.params, mask_params, masks, config.seed);
    }

    result.history = st.history;
    result.stopped_by_q = st.stopped_by_q;
    std::vector<TensorPtr> hards;
    final_keeps(masks, pipeline, &hards);
    result.final_hard = std::move(hards);
    return result;
}

}  // namespace maskforge
