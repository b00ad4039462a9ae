#include "maskforge/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace maskforge {

Schedules init_lambda_tau(double lambda_init, double lambda_fac, int patience, double tau_init,
                          double tau_decay, double tau_min, double rel_threshold) {
    if (!(lambda_init > 0.0)) throw std::invalid_argument("init_lambda_tau: lambda_init must be > 0");
    if (!(lambda_fac > 1.0)) throw std::invalid_argument("init_lambda_tau: lambda_fac must be > 1");
    if (patience < 1) throw std::invalid_argument("init_lambda_tau: patience must be >= 1");
    if (!(tau_decay > 0.0 && tau_decay < 1.0))
        throw std::invalid_argument("init_lambda_tau: tau_decay must be in (0,1)");
    if (!(tau_min > 0.0 && tau_min < tau_init))
        throw std::invalid_argument("init_lambda_tau: need 0 < tau_min < tau_init");
    if (rel_threshold < 0.0)
        throw std::invalid_argument("init_lambda_tau: rel_threshold must be >= 0");

    Schedules s;
    s.lambda.lambda = lambda_init;
    s.lambda.lambda_fac = lambda_fac;
    s.lambda.patience = patience;
    s.lambda.rel_threshold = rel_threshold;
    s.tau.tau_init = tau_init;
    s.tau.tau_decay = tau_decay;
    s.tau.tau_min = tau_min;
    s.tau.tau = tau_init;
    return s;
}

bool adapt_lambda_tau(Schedules& s, double epoch_loss) {
    if (!std::isfinite(epoch_loss))
        throw std::invalid_argument("adapt_lambda_tau: non-finite epoch loss");

    if (std::isinf(s.lambda.best_loss)) {
        // first observation after a reset: establishes the baseline; counts
        // as a plateau tick so constant losses step exactly every `patience`
        s.lambda.best_loss = epoch_loss;
        s.lambda.epochs_since_improve += 1;
    } else if (epoch_loss <
               s.lambda.best_loss -
                   std::max(1e-6, s.lambda.rel_threshold * std::abs(s.lambda.best_loss))) {
        s.lambda.best_loss = epoch_loss;
        s.lambda.epochs_since_improve = 0;
    } else {
        s.lambda.epochs_since_improve += 1;
    }

    if (s.lambda.epochs_since_improve >= s.lambda.patience) {
        s.lambda.lambda *= s.lambda.lambda_fac;
        s.lambda.epochs_since_improve = 0;
        // lambda changes make L non-comparable across steps
        s.lambda.best_loss = std::numeric_limits<double>::infinity();
        s.tau.tau = s.tau.tau_init;
        return true;
    }
    s.tau.tau = std::max(s.tau.tau_min, s.tau.tau * s.tau.tau_decay);
    return false;
}

}  // namespace maskforge
