#pragma once

#include <limits>
#include <stdexcept>

namespace maskforge {

// Plateau-driven trade-off schedule: lambda is multiplied by lambda_fac when
// the combined loss has not improved for `patience` epochs. Monotone
// non-decreasing over the run. An epoch only counts as an improvement when it
// beats the best by max(1e-6, rel_threshold * |best|); the first epoch after
// a reset establishes the baseline and counts as a plateau tick, so constant
// losses step lambda exactly every `patience` epochs.
struct LambdaSchedule {
    double lambda = 0.1;
    double lambda_fac = 1.1;
    int patience = 5;
    double rel_threshold = 5e-3;
    double best_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improve = 0;
};

// Temperature cool-down; halves (by tau_decay) every epoch, clamped at
// tau_min, and resets to tau_init on every lambda step.
struct TauSchedule {
    double tau_init = 10.0;
    double tau_decay = 0.5;
    double tau_min = 0.01;
    double tau = 10.0;
};

struct Schedules {
    LambdaSchedule lambda;
    TauSchedule tau;
};

Schedules init_lambda_tau(double lambda_init, double lambda_fac, int patience, double tau_init,
                          double tau_decay, double tau_min, double rel_threshold = 5e-3);

// Advances both schedules with the epoch's mean combined loss. Returns true
// if lambda stepped this epoch (tau was then reset to tau_init).
bool adapt_lambda_tau(Schedules& s, double epoch_loss);

}  // namespace maskforge
