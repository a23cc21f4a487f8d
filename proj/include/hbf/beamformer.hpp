#pragma once

#include <vector>

#include "hbf/core.hpp"

namespace hbf {

/// Common analog stage and per-subchannel digital stage at the base station.
struct HybridBeamformer {
    CMatrix F_RF;               ///< Nt x NRFt
    std::vector<CMatrix> F_BB;  ///< K entries, NRFt x Ns
};

/// Common analog stage and per-subchannel digital stage at the user.
struct HybridCombiner {
    CMatrix W_RF;               ///< Nr x NRFr
    std::vector<CMatrix> W_BB;  ///< K entries, NRFr x Ns
};

/// Dimensions of one side of the link as seen by the state networks.
struct SideDims {
    int n_ant = 0;     ///< Nt or Nr
    int n_rf = 0;      ///< NRFt or NRFr
    int Ns = 0;
    int K = 0;
    int Kp = 0;
    int M = 0;
    int in_dim = 0;    ///< 2 * NRFr * L, the size of one flattened pilot subchannel

    int dc() const { return 2 * n_rf * Ns; }
    int dv() const { return 2 * n_rf * n_ant; }

    static SideDims bs(const SystemConfig& cfg);
    static SideDims ue(const SystemConfig& cfg);
};

/// Final node states: v (dv) for the analog node, column k of C (dc x K) for digital node k.
struct NodeStates {
    RVector v;
    RMatrix C;
};

struct RawHybrid {
    CMatrix rf;
    std::vector<CMatrix> bb;
};

/// Unpacks v = vec([Re RF, Im RF]) and c_k = vec([Re BB[k], Im BB[k]]).
RawHybrid read_out(const NodeStates& s, const SideDims& d);
/// Inverse of read_out (also maps gradients with respect to RawHybrid back to states).
NodeStates pack_states(const RawHybrid& raw);

/// Element-wise unit-modulus projection scale * x / |x|. Zero entries map to
/// phase 0; `zero_count` (if given) receives how many were substituted.
CMatrix project_unit_modulus(const CMatrix& x, double scale, int* zero_count = nullptr);
/// dL/dx for project_unit_modulus given dL/dy. Zero entries get zero gradient.
CMatrix project_unit_modulus_backward(const CMatrix& x, double scale, const CMatrix& grad_y);

/// Unit-modulus analog stage (1/sqrt(Nt)) and one common digital scale so that
/// sum_k ||F_RF F_BB[k]||_F^2 = K * Ns. Throws ConstraintError on an all-zero digital stack.
HybridBeamformer normalize_beamformer(const RawHybrid& raw, const SystemConfig& cfg);
RawHybrid normalize_beamformer_backward(const RawHybrid& raw, const SystemConfig& cfg,
                                        const HybridBeamformer& grad);

/// Unit-modulus analog stage (1/sqrt(Nr)); the digital stage passes through.
HybridCombiner normalize_combiner(const RawHybrid& raw, const SystemConfig& cfg);
RawHybrid normalize_combiner_backward(const RawHybrid& raw, const SystemConfig& cfg,
                                      const HybridCombiner& grad);

/// sum_k ||F_RF F_BB[k]||_F^2
double digital_power(const HybridBeamformer& f);

/// Max violation of the unit-modulus and total-power constraints (absolute
/// for modulus, relative for power). Zero for an exactly feasible beamformer.
struct ConstraintReport {
    double rf_modulus = 0.0;
    double power = 0.0;
};
ConstraintReport check_constraints(const HybridBeamformer& f, const SystemConfig& cfg);
double combiner_modulus_violation(const HybridCombiner& w, const SystemConfig& cfg);

}  // namespace hbf
