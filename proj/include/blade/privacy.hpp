#pragma once
#include <cstdint>

#include "blade/mlcore.hpp"
#include "blade/rng.hpp"

// Local differential privacy for broadcast updates: L2 clipping, Gaussian
// noise calibrated from (epsilon, delta), and an optional schedule that
// decays the noise scale once accuracy stops improving.

namespace blade::privacy {

struct PrivacyConfig {
    double epsilon = 1.0;
    double delta = 1e-5;
    double clip_norm = 1.0;
    bool adaptive = false;
    double decay = 0.9;      // multiplier applied to sigma on a plateau
    int patience = 2;        // consecutive flat rounds before decaying
    double tol = 1e-4;       // minimum accuracy gain that counts as progress
    double sigma_min = 0.0;  // decay floor

    void validate() const;
};

// Scales v in place so its L2 norm is at most clip_norm. Returns the norm
// before clipping; vectors already inside the ball pass through untouched.
double clip(mlcore::ParamVector& v, double clip_norm);

// Gaussian mechanism noise scale for one release of a sensitivity-bounded
// vector: sigma = sensitivity * sqrt(2 ln(1.25/delta)) / epsilon.
double calibrate_sigma(double epsilon, double delta, double sensitivity);

// Adds sigma-scaled Gaussian noise to every coordinate.
void perturb(mlcore::ParamVector& v, double sigma, Rng& rng);

// Decays sigma by `decay` after `patience` consecutive rounds whose accuracy
// improved by less than tol over the round before, never below sigma_min.
class AdaptiveSigma {
  public:
    AdaptiveSigma(double sigma0, double decay, int patience, double tol, double sigma_min);
    double sigma() const { return sigma_; }
    void observe(double accuracy);

  private:
    double sigma_;
    double decay_;
    double tol_;
    double sigma_min_;
    int patience_;
    int streak_ = 0;
    bool seen_ = false;
    double prev_ = 0.0;
};

} // namespace blade::privacy
