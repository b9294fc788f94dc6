#include "dcnn/optim.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

namespace dcnn {

double clr_lr(const ClrSchedule& schedule, std::int64_t step) {
    if (schedule.step_size <= 0) throw ConfigError("clr step_size must be > 0");
    if (schedule.max_lr < schedule.min_lr) throw ConfigError("clr max_lr must be >= min_lr");
    if (step < 0) throw ConfigError("clr step must be >= 0");
    const double cycle = std::floor(1.0 + double(step) / (2.0 * double(schedule.step_size)));
    const double x = std::abs(double(step) / double(schedule.step_size) - 2.0 * cycle + 1.0);
    return schedule.min_lr + (schedule.max_lr - schedule.min_lr) * std::max(0.0, 1.0 - x);
}

double PlateauScheduler::observe(double metric) {
    if (metric < best_ - policy_.threshold) {
        best_ = metric;
        wait_ = 0;
    } else {
        ++wait_;
        if (wait_ >= policy_.patience) {
            scale_ = std::max(scale_ * policy_.factor, policy_.floor);
            wait_ = 0;
        }
    }
    return scale_;
}

double plateau_update(const PlateauPolicy& policy, const std::vector<double>& history,
                      double current_lr) {
    PlateauScheduler sched(policy);
    double scale = 1.0;
    for (double m : history) scale = sched.observe(m);
    return std::max(current_lr * scale, policy.floor);
}

std::string LrRangeResult::to_csv() const {
    std::ostringstream out;
    out << "step,lr,raw_loss,smoothed_loss\n";
    out.precision(17);
    for (const LrRangePoint& p : points)
        out << p.step << ',' << p.lr << ',' << p.raw_loss << ',' << p.smoothed_loss << '\n';
    return out.str();
}

LrRangeResult lr_range_test(double lr_low, double lr_high, std::int64_t steps,
                            const std::function<double(double lr)>& train_step,
                            double smoothing) {
    if (lr_low <= 0 || lr_high <= lr_low) throw ConfigError("lr range requires 0 < low < high");
    if (steps < 2) throw ConfigError("lr range requires at least 2 steps");

    LrRangeResult result;
    const double ratio = std::pow(lr_high / lr_low, 1.0 / double(steps - 1));
    double ewma = 0;
    double first_smoothed = 0;
    for (std::int64_t i = 0; i < steps; ++i) {
        const double lr = lr_low * std::pow(ratio, double(i));
        const double loss = train_step(lr);
        ewma = smoothing * ewma + (1.0 - smoothing) * loss;
        const double debiased = ewma / (1.0 - std::pow(smoothing, double(i + 1)));
        if (i == 0) first_smoothed = debiased;
        result.points.push_back({i, lr, loss, debiased});
        if (!std::isfinite(loss) || debiased > 4.0 * first_smoothed) {
            result.diverged = true;
            result.diverged_at = i;
            break;
        }
    }
    return result;
}

} // namespace dcnn
