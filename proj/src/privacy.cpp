#include "blade/privacy.hpp"

#include <cmath>

#include "blade/errors.hpp"
#include "blade/kernels.hpp"

namespace blade::privacy {

void PrivacyConfig::validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("privacy.epsilon must be positive");
    if (!(delta > 0.0) || delta >= 1.0) throw ConfigError("privacy.delta must be in (0, 1)");
    if (!(clip_norm > 0.0)) throw ConfigError("privacy.clip_norm must be positive");
    if (!(decay > 0.0) || decay > 1.0) throw ConfigError("privacy.decay must be in (0, 1]");
    if (patience < 1) throw ConfigError("privacy.patience must be >= 1");
    if (tol < 0.0) throw ConfigError("privacy.tol must be >= 0");
    if (sigma_min < 0.0) throw ConfigError("privacy.sigma_min must be >= 0");
}

double clip(mlcore::ParamVector& v, double clip_norm) {
    if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
    const double norm = std::sqrt(kernels::sum_squares(v.data(), v.size()));
    if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (double& x : v) x *= scale;
    }
    return norm;
}

double calibrate_sigma(double epsilon, double delta, double sensitivity) {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(delta > 0.0) || delta >= 1.0) throw ConfigError("delta must be in (0, 1)");
    if (!(sensitivity > 0.0)) throw ConfigError("sensitivity must be positive");
    return sensitivity * std::sqrt(2.0 * std::log(1.25 / delta)) / epsilon;
}

void perturb(mlcore::ParamVector& v, double sigma, Rng& rng) {
    if (sigma < 0.0) throw ConfigError("sigma must be >= 0");
    if (sigma == 0.0) return;
    for (double& x : v) x += sigma * rng.normal();
}

AdaptiveSigma::AdaptiveSigma(double sigma0, double decay, int patience, double tol,
                             double sigma_min)
    : sigma_(sigma0), decay_(decay), tol_(tol), sigma_min_(sigma_min), patience_(patience) {
    if (sigma0 < 0.0) throw ConfigError("sigma0 must be >= 0");
    if (!(decay > 0.0) || decay > 1.0) throw ConfigError("decay must be in (0, 1]");
    if (patience < 1) throw ConfigError("patience must be >= 1");
}

void AdaptiveSigma::observe(double accuracy) {
    if (seen_) {
        if (accuracy - prev_ < tol_) {
            if (++streak_ >= patience_) {
                sigma_ = std::max(sigma_ * decay_, sigma_min_);
                streak_ = 0;
            }
        } else {
            streak_ = 0;
        }
    }
    seen_ = true;
    prev_ = accuracy;
}

} // namespace blade::privacy
