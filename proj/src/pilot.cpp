#include "hbf/pilot.hpp"

#include <cmath>

#include "hbf/rng.hpp"

namespace hbf {

PilotParams PilotParams::zeros(const SystemConfig& cfg) {
    PilotParams p;
    p.theta.assign(cfg.L, RMatrix::Zero(cfg.Nt, cfg.NRFt));
    p.phi.assign(cfg.L, RMatrix::Zero(cfg.Nr, cfg.NRFr));
    p.s = CMatrix::Zero(cfg.NRFt, cfg.L);
    return p;
}

PilotParams PilotParams::random(const SystemConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    PilotParams p = zeros(cfg);
    for (auto& t : p.theta) t = t.unaryExpr([&](double) { return rng.uniform(0.0, 2 * M_PI); });
    for (auto& f : p.phi) f = f.unaryExpr([&](double) { return rng.uniform(0.0, 2 * M_PI); });
    p.s = p.s.unaryExpr([&](Complex) { return rng.complex_normal(1.0); });
    project_pilot_power(p, cfg);
    return p;
}

PilotParams& PilotParams::operator+=(const PilotParams& o) {
    for (std::size_t l = 0; l < theta.size(); ++l) {
        theta[l] += o.theta[l];
        phi[l] += o.phi[l];
    }
    s += o.s;
    return *this;
}

CMatrix analog_from_phases(const RMatrix& phases, double scale) {
    return phases.unaryExpr([scale](double a) { return std::polar(scale, a); });
}

CVector project_pilot_power(const CVector& s, double budget) {
    const double norm2 = s.squaredNorm();
    if (norm2 <= budget) return s;
    return s * std::sqrt(budget / norm2);
}

void project_pilot_power(PilotParams& p, const SystemConfig& cfg) {
    for (int l = 0; l < p.s.cols(); ++l) p.s.col(l) = project_pilot_power(p.s.col(l), cfg.NRFt);
}

PilotNoise draw_pilot_noise(const SystemConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    PilotNoise out;
    out.n.assign(cfg.Kp, CMatrix(cfg.Nr, cfg.L));
    for (auto& m : out.n)
        m = m.unaryExpr([&](Complex) { return rng.complex_normal(cfg.sigma_n2); });
    return out;
}

PilotNoise zero_pilot_noise(const SystemConfig& cfg) {
    PilotNoise out;
    out.n.assign(cfg.Kp, CMatrix::Zero(cfg.Nr, cfg.L));
    return out;
}

ReceivedPilots transmit_pilots(const ChannelRealization& h, const PilotParams& p,
                               const SystemConfig& cfg, const PilotNoise& noise) {
    check_shape(h, cfg);
    if (p.L() != cfg.L || p.s.rows() != cfg.NRFt || p.s.cols() != cfg.L)
        throw ConstraintError("pilot parameters do not match config");
    const double amp = std::sqrt(cfg.rho_p);
    const double ft = 1.0 / std::sqrt(static_cast<double>(cfg.Nt));
    const double fr = 1.0 / std::sqrt(static_cast<double>(cfg.Nr));

    ReceivedPilots out;
    out.Y.assign(cfg.Kp, CMatrix(cfg.NRFr, cfg.L));
    // tx[:, l] = F_l s_l; pilot beams are frequency flat.
    CMatrix tx(cfg.Nt, cfg.L);
    std::vector<CMatrix> w(cfg.L);
    for (int l = 0; l < cfg.L; ++l) {
        tx.col(l) = analog_from_phases(p.theta[l], ft) * p.s.col(l);
        w[l] = analog_from_phases(p.phi[l], fr);
    }
    for (int q = 0; q < cfg.Kp; ++q) {
        const CMatrix rx = amp * (h.H[cfg.pilot_subchannel(q)] * tx) + noise.n[q];
        for (int l = 0; l < cfg.L; ++l) out.Y[q].col(l) = w[l].adjoint() * rx.col(l);
    }
    return out;
}

ReceivedPilots transmit_pilots(const ChannelRealization& h, const PilotParams& p,
                               const SystemConfig& cfg, std::uint64_t noise_seed) {
    return transmit_pilots(h, p, cfg, draw_pilot_noise(cfg, noise_seed));
}

RMatrix phase_gradient(const CMatrix& grad_f, const CMatrix& f) {
    // dF/dphase = j F, so dL/dphase = Re(conj(G) * jF) = Im(G * conj(F)).
    return (grad_f.array() * f.array().conjugate()).imag().matrix();
}

PilotParams transmit_pilots_backward(const ChannelRealization& h, const PilotParams& p,
                                     const SystemConfig& cfg, const PilotNoise& noise,
                                     const ReceivedPilots& grad_y) {
    const double amp = std::sqrt(cfg.rho_p);
    const double ft = 1.0 / std::sqrt(static_cast<double>(cfg.Nt));
    const double fr = 1.0 / std::sqrt(static_cast<double>(cfg.Nr));

    PilotParams g = PilotParams::zeros(cfg);
    std::vector<CMatrix> f(cfg.L), w(cfg.L);
    CMatrix tx(cfg.Nt, cfg.L);
    for (int l = 0; l < cfg.L; ++l) {
        f[l] = analog_from_phases(p.theta[l], ft);
        w[l] = analog_from_phases(p.phi[l], fr);
        tx.col(l) = f[l] * p.s.col(l);
    }

    CMatrix grad_tx = CMatrix::Zero(cfg.Nt, cfg.L);
    std::vector<CMatrix> grad_w(cfg.L, CMatrix::Zero(cfg.Nr, cfg.NRFr));
    for (int q = 0; q < cfg.Kp; ++q) {
        const CMatrix& Hq = h.H[cfg.pilot_subchannel(q)];
        const CMatrix rx = amp * (Hq * tx) + noise.n[q];
        CMatrix grad_rx(cfg.Nr, cfg.L);
        for (int l = 0; l < cfg.L; ++l) {
            const auto gy = grad_y.Y[q].col(l);
            // y = W^H x  =>  dL/dW = x g^H, dL/dx = W g
            grad_w[l].noalias() += rx.col(l) * gy.adjoint();
            grad_rx.col(l) = w[l] * gy;
        }
        grad_tx.noalias() += amp * (Hq.adjoint() * grad_rx);
    }
    for (int l = 0; l < cfg.L; ++l) {
        const CMatrix grad_f = grad_tx.col(l) * p.s.col(l).adjoint();
        g.s.col(l) = f[l].adjoint() * grad_tx.col(l);
        g.theta[l] = phase_gradient(grad_f, f[l]);
        g.phi[l] = phase_gradient(grad_w[l], w[l]);
    }
    return g;
}

}  // namespace hbf
