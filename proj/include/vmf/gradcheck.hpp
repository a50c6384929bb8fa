#pragma once

#include <string>
#include <vector>

namespace vmf {

struct GradCheckResult {
    std::string loss_name;
    int seeds = 0;
    std::size_t checked = 0;   // coordinates compared against central differences
    std::size_t excluded = 0;  // coordinates inside documented non-smooth neighborhoods
    double max_rel_err = 0.0;
    bool passed = false;
};

/// Central-difference audit (h = 1e-5) of every analytic loss gradient:
/// adversarial, consistency, pseudo-label, KL alignment and photometric.
/// A coordinate passes when |analytic - fd| / max(|analytic|, |fd|) < 1e-4,
/// with near-zero pairs (both below 1e-7) accepted outright. Excluded
/// neighborhoods per loss: L1 kinks (|residual| < 1e-3 for the consistency
/// and pseudo-label losses, < 1e-2 for the photometric loss), bilinear cell
/// crossings within 1e-3 of the integer lattice, and 3D coordinates whose
/// nearest-neighbor association changes under the probe step.
std::vector<GradCheckResult> run_gradcheck(int seeds, const std::string& only = "");

}  // namespace vmf
