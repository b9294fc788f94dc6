#ifndef DCNN_OPTIM_HPP
#define DCNN_OPTIM_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dcnn/errors.hpp"

// Parameter-update rules and learning-rate schedules: AdaBelief (the
// primary optimizer), a plain SGD baseline, the triangular cyclical
// learning rate, plateau-driven reduction and the LR range test.

namespace dcnn {

// A flat view over one parameter array and its gradient; the optimizers
// are agnostic to where the storage lives.
template <typename T>
struct ParamView {
    std::string name;
    T* value = nullptr;
    const T* grad = nullptr;
    std::size_t size = 0;
};

template <typename T>
struct AdaBeliefConfig {
    T lr = T(1e-3);
    T beta1 = T(0.9);
    T beta2 = T(0.999);
    T epsilon = T(1e-14);
    T weight_decay = T(0);  // decoupled decay; 0 disables it
};

// AdaBelief scales each step by the "belief" in the gradient: the
// second moment of (g - m), the deviation of the gradient from its
// running mean, instead of the raw second moment Adam uses.
//
// Per update, with t the step counter:
//   m <- b1*m + (1-b1)*g
//   s <- b2*s + (1-b2)*(g - m)^2 + eps
//   m_hat = m / (1 - b1^t),  s_hat = s / (1 - b2^t)
//   theta <- theta - lr * m_hat / (sqrt(s_hat) + eps)
template <typename T>
class AdaBelief {
public:
    explicit AdaBelief(AdaBeliefConfig<T> cfg = {}) : cfg_(cfg) {
        if (cfg.lr <= T(0)) throw ConfigError("adabelief lr must be > 0");
        if (cfg.epsilon <= T(0)) throw ConfigError("adabelief epsilon must be > 0");
    }

    // One update over all parameters. lr_override, when positive,
    // replaces the configured rate for this step (used by schedules).
    void step(const std::vector<ParamView<T>>& params, T lr_override = T(-1));

    std::int64_t step_count() const { return t_; }
    const AdaBeliefConfig<T>& config() const { return cfg_; }

    // Serialized moment access for checkpoints. Slot i corresponds to
    // params[i] of every step() call; the layout must match across runs.
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return s_; }
    const std::vector<std::vector<T>>& first_moments() const { return m_; }
    const std::vector<std::vector<T>>& second_moments() const { return s_; }
    void restore(std::vector<std::vector<T>> m, std::vector<std::vector<T>> s, std::int64_t t) {
        m_ = std::move(m);
        s_ = std::move(s);
        t_ = t;
    }

private:
    AdaBeliefConfig<T> cfg_;
    std::vector<std::vector<T>> m_;
    std::vector<std::vector<T>> s_;
    std::int64_t t_ = 0;
};

// theta <- theta - lr * g
template <typename T>
void sgd_step(const std::vector<ParamView<T>>& params, T lr);

// ---------------------------------------------------------------------
// Schedules

// Triangular wave between min_lr and max_lr with period 2*step_size.
struct ClrSchedule {
    double min_lr = 1e-4;
    double max_lr = 1e-2;
    std::int64_t step_size = 2000;  // steps per half cycle
};

double clr_lr(const ClrSchedule& schedule, std::int64_t step);

// Multiplies the learning rate by factor when the monitored metric has
// not improved beyond `threshold` for `patience` consecutive epochs.
struct PlateauPolicy {
    double factor = 0.1;
    int patience = 10;
    double floor = 0.0;
    double threshold = 1e-4;
};

// Pure form over the full metric history (lower is better). Returns the
// rate after replaying the policy across `history`.
double plateau_update(const PlateauPolicy& policy, const std::vector<double>& history,
                      double current_lr);

// Incremental form used by the training loop.
class PlateauScheduler {
public:
    explicit PlateauScheduler(PlateauPolicy policy) : policy_(policy) {}

    // Feeds one epoch's metric; returns the multiplier to apply to the
    // base rate after this epoch (non-increasing over time).
    double observe(double metric);

    double scale() const { return scale_; }

private:
    PlateauPolicy policy_;
    double best_ = std::numeric_limits<double>::infinity();
    int wait_ = 0;
    double scale_ = 1.0;
};

// ---------------------------------------------------------------------
// LR range test

struct LrRangePoint {
    std::int64_t step = 0;
    double lr = 0;
    double raw_loss = 0;
    double smoothed_loss = 0;
};

struct LrRangeResult {
    std::vector<LrRangePoint> points;
    bool diverged = false;
    std::int64_t diverged_at = -1;

    std::string to_csv() const;  // header step,lr,raw_loss,smoothed_loss
};

// Runs `steps` updates while the learning rate grows geometrically from
// lr_low to lr_high; `train_step` performs one mini-batch update at the
// given rate and returns its loss. The sweep stops early when the loss
// exceeds 4x the initial loss.
LrRangeResult lr_range_test(double lr_low, double lr_high, std::int64_t steps,
                            const std::function<double(double lr)>& train_step,
                            double smoothing = 0.98);

} // namespace dcnn

#include "dcnn/optim_impl.hpp"

#endif
