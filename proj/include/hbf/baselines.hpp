#pragma once

#include <vector>

#include "hbf/beamformer.hpp"
#include "hbf/channel.hpp"
#include "hbf/objective.hpp"
#include "hbf/pilot.hpp"

namespace hbf {

// -- fully digital with perfect CSI -------------------------------------------

enum class PowerAllocation {
    Equal,        ///< rho / Ns on each of the top-Ns streams of every subchannel
    WaterFilling, ///< total K * rho spread over all (subchannel, stream) modes
};

struct FullyDigitalResult {
    RateReport rate;
    std::vector<CMatrix> F;  ///< effective Nt x Ns precoders
    std::vector<CMatrix> W;  ///< effective Nr x Ns combiners
};

/// SVD precoding/combining per subchannel, evaluated through the same rate
/// machinery as the hybrid schemes. Water filling (the default) is an upper
/// bound on every hybrid design meeting the total-power constraint.
FullyDigitalResult fully_digital_svd(const ChannelRealization& h, double rho, double sigma2,
                                     const SystemConfig& cfg,
                                     PowerAllocation alloc = PowerAllocation::WaterFilling);

/// Classic water filling: p_i = max(0, mu - 1/g_i) with sum p_i = total.
std::vector<double> water_fill(const std::vector<double>& gains, double total);

// -- OMP channel estimation -----------------------------------------------------

struct AngleDictionary {
    CMatrix A_t;  ///< Nt x Gt
    CMatrix A_r;  ///< Nr x Gr

    /// Grids uniform in sin(angle): u_g = -1 + 2g/G.
    static AngleDictionary uniform(int Nt, int Nr, int Gt, int Gr);
    static AngleDictionary for_config(const SystemConfig& cfg);  ///< Gt = 2Nt, Gr = 2Nr
};

inline constexpr int kDefaultOmpPaths = 8;

/// Effective measurement matrix mapping angular gains X (Gr x Gt, column-major)
/// to the vectorized pilot block of one subchannel (NRFr*L, column-major over Y).
CMatrix omp_sensing_matrix(const PilotParams& p, const AngleDictionary& dict,
                           const SystemConfig& cfg);

struct OmpSolution {
    std::vector<int> support;             ///< selected columns in selection order
    CVector gains;                        ///< least-squares gains on the support
    std::vector<double> residual_norms;   ///< ||r|| before the first and after each iteration
};

/// Greedy OMP on y = A x with normalized correlation selection.
OmpSolution orthogonal_matching_pursuit(const CMatrix& A, const CVector& y, int n_atoms);

struct OmpEstimate {
    ChannelRealization H;
    std::vector<OmpSolution> per_pilot;
};

/// Per pilot subchannel OMP, then linear interpolation of angular gains across
/// subchannel index (flat past the last pilot subchannel).
OmpEstimate omp_channel_estimate(const ReceivedPilots& y, const PilotParams& p,
                                 const AngleDictionary& dict, int n_paths,
                                 const SystemConfig& cfg);

/// sum_k ||H_est[k] - H[k]||^2 / sum_k ||H[k]||^2
double channel_nmse(const ChannelRealization& est, const ChannelRealization& truth);

// -- manifold optimization ------------------------------------------------------

struct MoOptions {
    int iters = 200;
    double tol = 1e-6;
};

struct MoResult {
    CMatrix rf;
    std::vector<CMatrix> bb;
    std::vector<double> objective;  ///< after the initial LS fit and after every alternation
    bool converged = false;
};

/// Minimizes sum_k ||target[k] - RF BB[k]||_F^2 over RF with entries of modulus
/// `modulus`, alternating exact least squares for BB[k] and one Riemannian
/// conjugate-gradient step (Armijo backtracking) on the RF phases.
MoResult mo_factorize(const std::vector<CMatrix>& target, int n_rf, double modulus,
                      const MoOptions& opt = {});

struct MoHybridResult {
    HybridBeamformer F;
    HybridCombiner W;
    MoResult precoder, combiner;
    bool converged = false;
};

/// Hybrid design from a (possibly estimated) channel: SVD targets per
/// subchannel, mo_factorize on each side, then digital scaling to K * Ns.
MoHybridResult mo_hybrid(const ChannelRealization& h_est, const SystemConfig& cfg,
                         const MoOptions& opt = {});

}  // namespace hbf
