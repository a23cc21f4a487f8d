#pragma once

#include <cstdint>
#include <vector>

#include "hbf/channel.hpp"
#include "hbf/core.hpp"

namespace hbf {

/// Trainable sounding parameters. theta[l] is Nt x NRFt, phi[l] is Nr x NRFr
/// (radians); column l of s is the pilot symbol vector of transmission l.
struct PilotParams {
    std::vector<RMatrix> theta;
    std::vector<RMatrix> phi;
    CMatrix s;

    int L() const { return static_cast<int>(theta.size()); }

    /// Same shapes, all zeros (used as a gradient accumulator).
    static PilotParams zeros(const SystemConfig& cfg);
    /// Uniform phases on [0, 2pi); unit-power complex Gaussian symbols, projected.
    static PilotParams random(const SystemConfig& cfg, std::uint64_t seed);

    PilotParams& operator+=(const PilotParams& o);
};

/// Y[p] is NRFr x L for the p-th pilot-bearing subchannel.
struct ReceivedPilots {
    std::vector<CMatrix> Y;

    int Kp() const { return static_cast<int>(Y.size()); }
};

/// Column l of noise[p] is the antenna noise vector of transmission l on pilot subchannel p.
struct PilotNoise {
    std::vector<CMatrix> n;
};

/// scale * exp(j * phases), element-wise.
CMatrix analog_from_phases(const RMatrix& phases, double scale);

/// Returns s unchanged when ||s||^2 <= budget, else rescales it onto the sphere.
CVector project_pilot_power(const CVector& s, double budget);
/// Applies project_pilot_power to every column of p.s with budget NRFt.
void project_pilot_power(PilotParams& p, const SystemConfig& cfg);

PilotNoise draw_pilot_noise(const SystemConfig& cfg, std::uint64_t seed);
PilotNoise zero_pilot_noise(const SystemConfig& cfg);

/// Received pilots on the Kp pilot subchannels for a given noise draw.
ReceivedPilots transmit_pilots(const ChannelRealization& h, const PilotParams& p,
                               const SystemConfig& cfg, const PilotNoise& noise);
ReceivedPilots transmit_pilots(const ChannelRealization& h, const PilotParams& p,
                               const SystemConfig& cfg, std::uint64_t noise_seed);

/// Gradient of a real loss with respect to PilotParams given dL/dY. Complex
/// gradients follow the convention dL/dRe + j dL/dIm throughout the project.
PilotParams transmit_pilots_backward(const ChannelRealization& h, const PilotParams& p,
                                     const SystemConfig& cfg, const PilotNoise& noise,
                                     const ReceivedPilots& grad_y);

/// Chain rule through analog_from_phases: dL/dphases from dL/dF.
RMatrix phase_gradient(const CMatrix& grad_f, const CMatrix& f);

}  // namespace hbf
