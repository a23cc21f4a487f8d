#pragma once

#include <vector>

#include "hbf/beamformer.hpp"
#include "hbf/channel.hpp"
#include "hbf/core.hpp"

namespace hbf {

/// Spectral efficiency in bits/s/Hz: one value per subchannel and their mean.
struct RateReport {
    RVector per_subchannel;
    double mean = 0.0;
};

/// Rate of one subchannel for effective precoder f (Nt x Ns) and combiner w (Nr x Ns):
/// log2 det(I + rho/Ns * Omega^-1 Lambda Lambda^H) with Lambda = w^H H f and
/// Omega = sigma2 w^H w.
double subchannel_rate(const CMatrix& h, const CMatrix& f, const CMatrix& w, double rho,
                       double sigma2, int subchannel = -1);

struct SubchannelRateGrad {
    double rate = 0.0;
    CMatrix f;  ///< d rate / d f
    CMatrix w;  ///< d rate / d w
};
SubchannelRateGrad subchannel_rate_grad(const CMatrix& h, const CMatrix& f, const CMatrix& w,
                                        double rho, double sigma2, int subchannel = -1);

RateReport spectral_efficiency(const ChannelRealization& h, const HybridBeamformer& f,
                               const HybridCombiner& w, double rho, double sigma2);

/// Fully-digital variant: per-subchannel effective precoders and combiners.
RateReport spectral_efficiency_digital(const ChannelRealization& h, const std::vector<CMatrix>& f,
                                       const std::vector<CMatrix>& w, double rho, double sigma2);

struct SpectralEfficiencyGrad {
    RateReport rate;
    HybridBeamformer f;  ///< d mean-rate / d (F_RF, F_BB[k])
    HybridCombiner w;    ///< d mean-rate / d (W_RF, W_BB[k])
};
SpectralEfficiencyGrad spectral_efficiency_grad(const ChannelRealization& h,
                                                const HybridBeamformer& f,
                                                const HybridCombiner& w, double rho,
                                                double sigma2);

/// alpha * vq_loss - rate
double total_loss(double vq_loss, double rate, double alpha);

}  // namespace hbf
