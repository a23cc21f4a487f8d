#include "hbf/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "hbf/mlp.hpp"

namespace hbf {

// -- fully digital ------------------------------------------------------------

std::vector<double> water_fill(const std::vector<double>& gains, double total) {
    std::vector<double> p(gains.size(), 0.0);
    if (!(total > 0.0)) return p;
    std::vector<std::size_t> order(gains.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return gains[a] > gains[b]; });

    std::size_t active = 0;
    double inv_sum = 0.0, mu = 0.0;
    for (std::size_t n = 0; n < order.size(); ++n) {
        const double g = gains[order[n]];
        if (!(g > 0.0)) break;
        const double mu_n = (total + inv_sum + 1.0 / g) / static_cast<double>(n + 1);
        if (mu_n <= 1.0 / g) break;
        inv_sum += 1.0 / g;
        active = n + 1;
        mu = mu_n;
    }
    for (std::size_t n = 0; n < active; ++n) {
        const std::size_t i = order[n];
        p[i] = std::max(0.0, mu - 1.0 / gains[i]);
    }
    return p;
}

FullyDigitalResult fully_digital_svd(const ChannelRealization& h, double rho, double sigma2,
                                     const SystemConfig& cfg, PowerAllocation alloc) {
    const int K = h.K();
    const int ns = cfg.Ns;
    FullyDigitalResult out;
    out.F.resize(K);
    out.W.resize(K);
    std::vector<RVector> sv(K);
    for (int k = 0; k < K; ++k) {
        Eigen::JacobiSVD<CMatrix> svd(h.H[k], Eigen::ComputeThinU | Eigen::ComputeThinV);
        const int r = std::min<int>(ns, static_cast<int>(svd.singularValues().size()));
        out.F[k] = CMatrix::Zero(h.Nt(), ns);
        out.W[k] = CMatrix::Zero(h.Nr(), ns);
        out.F[k].leftCols(r) = svd.matrixV().leftCols(r);
        out.W[k].leftCols(r) = svd.matrixU().leftCols(r);
        // Streams beyond the channel rank still need an orthonormal combiner column.
        if (r < ns) {
            Eigen::HouseholderQR<CMatrix> qr(out.W[k]);
            out.W[k] = qr.householderQ() * CMatrix::Identity(h.Nr(), ns);
            out.W[k].leftCols(r) = svd.matrixU().leftCols(r);
        }
        sv[k] = RVector::Zero(ns);
        sv[k].head(r) = svd.singularValues().head(r);
    }

    if (alloc == PowerAllocation::WaterFilling) {
        std::vector<double> gains;
        gains.reserve(static_cast<std::size_t>(K) * ns);
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < ns; ++i) gains.push_back(sv[k](i) * sv[k](i) / sigma2);
        const std::vector<double> p = water_fill(gains, K * rho);
        for (int k = 0; k < K; ++k)
            for (int i = 0; i < ns; ++i) {
                const double pw = p[static_cast<std::size_t>(k) * ns + i];
                // rho/Ns * |f_i|^2 = pw
                out.F[k].col(i) *= rho > 0.0 ? std::sqrt(pw * ns / rho) : 0.0;
            }
    }
    out.rate = spectral_efficiency_digital(h, out.F, out.W, rho, sigma2);
    return out;
}

// -- OMP ------------------------------------------------------------------------

AngleDictionary AngleDictionary::uniform(int Nt, int Nr, int Gt, int Gr) {
    AngleDictionary d;
    d.A_t.resize(Nt, Gt);
    d.A_r.resize(Nr, Gr);
    for (int g = 0; g < Gt; ++g) d.A_t.col(g) = ula_response(Nt, std::asin(-1.0 + 2.0 * g / Gt));
    for (int g = 0; g < Gr; ++g) d.A_r.col(g) = ula_response(Nr, std::asin(-1.0 + 2.0 * g / Gr));
    return d;
}

AngleDictionary AngleDictionary::for_config(const SystemConfig& cfg) {
    return uniform(cfg.Nt, cfg.Nr, 2 * cfg.Nt, 2 * cfg.Nr);
}

CMatrix omp_sensing_matrix(const PilotParams& p, const AngleDictionary& dict,
                           const SystemConfig& cfg) {
    const Eigen::Index Gt = dict.A_t.cols(), Gr = dict.A_r.cols();
    const double amp = std::sqrt(cfg.rho_p);
    const double ft = 1.0 / std::sqrt(static_cast<double>(cfg.Nt));
    const double fr = 1.0 / std::sqrt(static_cast<double>(cfg.Nr));
    CMatrix A(static_cast<Eigen::Index>(cfg.NRFr) * cfg.L, Gr * Gt);
    for (int l = 0; l < cfg.L; ++l) {
        const CVector u = analog_from_phases(p.theta[l], ft) * p.s.col(l);
        const CMatrix w = analog_from_phases(p.phi[l], fr);
        const CMatrix rx = w.adjoint() * dict.A_r;         // NRFr x Gr
        const CVector tx = dict.A_t.adjoint() * u;         // Gt
        for (Eigen::Index j = 0; j < Gt; ++j)
            for (Eigen::Index i = 0; i < Gr; ++i)
                A.block(static_cast<Eigen::Index>(l) * cfg.NRFr, j * Gr + i, cfg.NRFr, 1) =
                    amp * tx(j) * rx.col(i);
    }
    return A;
}

OmpSolution orthogonal_matching_pursuit(const CMatrix& A, const CVector& y, int n_atoms) {
    if (n_atoms < 1) throw std::invalid_argument("OMP needs at least one atom");
    if (n_atoms > A.rows())
        throw ConstraintError("OMP sensing matrix has " + std::to_string(A.rows()) +
                              " rows, too few for " + std::to_string(n_atoms) + " atoms");
    const RVector norms = A.colwise().norm().transpose();
    OmpSolution sol;
    CVector resid = y;
    sol.residual_norms.push_back(resid.norm());
    std::vector<char> used(A.cols(), 0);
    for (int it = 0; it < n_atoms; ++it) {
        const CVector corr = A.adjoint() * resid;
        Eigen::Index best = -1;
        double best_val = -1.0;
        for (Eigen::Index c = 0; c < A.cols(); ++c) {
            if (used[c] || norms(c) == 0.0) continue;
            const double v = std::abs(corr(c)) / norms(c);
            if (v > best_val) {
                best_val = v;
                best = c;
            }
        }
        if (best < 0) throw ConstraintError("OMP ran out of usable dictionary atoms");
        used[best] = 1;
        sol.support.push_back(static_cast<int>(best));

        CMatrix sub(A.rows(), static_cast<Eigen::Index>(sol.support.size()));
        for (std::size_t s = 0; s < sol.support.size(); ++s) sub.col(s) = A.col(sol.support[s]);
        Eigen::ColPivHouseholderQR<CMatrix> qr(sub);
        if (qr.rank() < sub.cols())
            throw ConstraintError("OMP sensing matrix is column deficient; pilot length too short for " +
                                  std::to_string(n_atoms) + " paths");
        sol.gains = qr.solve(y);
        resid = y - sub * sol.gains;
        sol.residual_norms.push_back(resid.norm());
    }
    return sol;
}

OmpEstimate omp_channel_estimate(const ReceivedPilots& y, const PilotParams& p,
                                 const AngleDictionary& dict, int n_paths,
                                 const SystemConfig& cfg) {
    if (n_paths < 1) throw std::invalid_argument("n_paths must be >= 1");
    const CMatrix A = omp_sensing_matrix(p, dict, cfg);
    const Eigen::Index Gr = dict.A_r.cols();

    OmpEstimate est;
    std::vector<CMatrix> pilot_h(cfg.Kp);
    for (int q = 0; q < cfg.Kp; ++q) {
        const CVector yq = y.Y[q].reshaped();
        OmpSolution sol = orthogonal_matching_pursuit(A, yq, n_paths);
        CMatrix X = CMatrix::Zero(Gr, dict.A_t.cols());
        for (std::size_t s = 0; s < sol.support.size(); ++s)
            X(sol.support[s] % Gr, sol.support[s] / Gr) = sol.gains(s);
        pilot_h[q] = dict.A_r * X * dict.A_t.adjoint();
        est.per_pilot.push_back(std::move(sol));
    }

    est.H.H.resize(cfg.K);
    for (int k = 0; k < cfg.K; ++k) {
        const int q = k / cfg.M;
        const int offset = k % cfg.M;
        if (q + 1 >= cfg.Kp || offset == 0) {
            est.H.H[k] = pilot_h[std::min(q, cfg.Kp - 1)];
        } else {
            const double t = static_cast<double>(offset) / cfg.M;
            est.H.H[k] = (1.0 - t) * pilot_h[q] + t * pilot_h[q + 1];
        }
    }
    return est;
}

double channel_nmse(const ChannelRealization& est, const ChannelRealization& truth) {
    double err = 0.0, ref = 0.0;
    for (int k = 0; k < truth.K(); ++k) {
        err += (est.H[k] - truth.H[k]).squaredNorm();
        ref += truth.H[k].squaredNorm();
    }
    return err / ref;
}

// -- manifold optimization ------------------------------------------------------

namespace {

double factor_error(const std::vector<CMatrix>& target, const CMatrix& rf,
                    const std::vector<CMatrix>& bb) {
    double f = 0.0;
    for (std::size_t k = 0; k < target.size(); ++k) f += (target[k] - rf * bb[k]).squaredNorm();
    return f;
}

void least_squares_digital(const std::vector<CMatrix>& target, const CMatrix& rf,
                           std::vector<CMatrix>& bb) {
    const Eigen::ColPivHouseholderQR<CMatrix> qr(rf);
    for (std::size_t k = 0; k < target.size(); ++k) bb[k] = qr.solve(target[k]);
}

CMatrix tangent_project(const CMatrix& z, const CMatrix& x) {
    // Remove the radial component of z at every entry of x.
    const RMatrix radial = (z.array() * x.array().conjugate()).real() / x.array().abs2();
    return z - (radial.array().cast<Complex>() * x.array()).matrix();
}

}  // namespace

MoResult mo_factorize(const std::vector<CMatrix>& target, int n_rf, double modulus,
                      const MoOptions& opt) {
    if (target.empty()) throw std::invalid_argument("mo_factorize needs at least one target");
    const Eigen::Index n = target.front().rows();

    // Start from the phases of the dominant left singular vectors of all targets.
    CMatrix stacked(n, 0);
    for (const auto& t : target) {
        stacked.conservativeResize(n, stacked.cols() + t.cols());
        stacked.rightCols(t.cols()) = t;
    }
    Eigen::JacobiSVD<CMatrix> svd(stacked, Eigen::ComputeThinU);
    CMatrix init = CMatrix::Ones(n, n_rf);
    const Eigen::Index r = std::min<Eigen::Index>(n_rf, svd.matrixU().cols());
    init.leftCols(r) = svd.matrixU().leftCols(r);
    for (Eigen::Index j = r; j < n_rf; ++j)
        for (Eigen::Index i = 0; i < n; ++i) init(i, j) = std::polar(1.0, M_PI * i * j / n);

    MoResult res;
    res.rf = project_unit_modulus(init, modulus);
    // Phase extraction can collapse distinct singular vectors onto one
    // pattern; a DFT start is always full rank.
    {
        Eigen::JacobiSVD<CMatrix> rf_svd(res.rf);
        const auto sv = rf_svd.singularValues();
        if (sv(sv.size() - 1) < 1e-3 * sv(0)) {
            for (Eigen::Index j = 0; j < n_rf; ++j)
                for (Eigen::Index i = 0; i < n; ++i)
                    init(i, j) = std::polar(1.0, 2.0 * M_PI * static_cast<double>(i * j) / n);
            res.rf = project_unit_modulus(init, modulus);
        }
    }
    res.bb.resize(target.size());
    least_squares_digital(target, res.rf, res.bb);
    double f = factor_error(target, res.rf, res.bb);
    res.objective.push_back(f);

    CMatrix dir, grad_prev;
    double last_t = 0.0;
    for (int it = 0; it < opt.iters; ++it) {
        CMatrix egrad = CMatrix::Zero(n, n_rf);
        for (std::size_t k = 0; k < target.size(); ++k)
            egrad.noalias() -= 2.0 * (target[k] - res.rf * res.bb[k]) * res.bb[k].adjoint();
        const CMatrix rgrad = tangent_project(egrad, res.rf);
        const double gnorm2 = rgrad.squaredNorm();
        if (gnorm2 == 0.0) {
            res.converged = true;
            break;
        }

        bool steepest = dir.size() == 0;
        if (steepest) {
            dir = -rgrad;
        } else {
            // Polak-Ribiere+ with transport by tangent projection.
            const CMatrix gp = tangent_project(grad_prev, res.rf);
            const double beta =
                std::max(0.0, real_inner(rgrad, rgrad - gp) / grad_prev.squaredNorm());
            dir = -rgrad + beta * tangent_project(dir, res.rf);
        }
        double slope = real_inner(rgrad, dir);
        if (slope >= 0.0) {
            dir = -rgrad;
            slope = -gnorm2;
            steepest = true;
        }
        grad_prev = rgrad;

        // Armijo backtracking on the retracted objective.
        const double dmax = dir.cwiseAbs().maxCoeff();
        double t = last_t > 0.0 ? 2.0 * last_t : modulus / dmax;
        t = std::min(t, 2.0 * modulus / dmax);
        CMatrix candidate;
        bool accepted = false;
        for (int bt = 0; bt < 50; ++bt) {
            candidate = project_unit_modulus(res.rf + t * dir, modulus);
            if (factor_error(target, candidate, res.bb) <= f + 1e-4 * t * slope) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (accepted) {
            res.rf = candidate;
            last_t = t;
        } else {
            dir.resize(0, 0);
        }
        if (!accepted && !steepest) continue;  // retry from steepest descent

        least_squares_digital(target, res.rf, res.bb);
        const double f_ls = factor_error(target, res.rf, res.bb);
        res.objective.push_back(f_ls);
        const double decrease = f - f_ls;
        f = f_ls;
        if (!accepted || decrease <= opt.tol * std::max(f, 1e-300)) {
            res.converged = true;
            break;
        }
    }
    return res;
}

MoHybridResult mo_hybrid(const ChannelRealization& h_est, const SystemConfig& cfg,
                         const MoOptions& opt) {
    const int K = h_est.K();
    std::vector<CMatrix> f_opt(K), w_opt(K);
    for (int k = 0; k < K; ++k) {
        Eigen::JacobiSVD<CMatrix> svd(h_est.H[k], Eigen::ComputeThinU | Eigen::ComputeThinV);
        f_opt[k] = svd.matrixV().leftCols(cfg.Ns);
        w_opt[k] = svd.matrixU().leftCols(cfg.Ns);
    }
    MoHybridResult out;
    out.precoder = mo_factorize(f_opt, cfg.NRFt, 1.0 / std::sqrt(static_cast<double>(cfg.Nt)), opt);
    out.combiner = mo_factorize(w_opt, cfg.NRFr, 1.0 / std::sqrt(static_cast<double>(cfg.Nr)), opt);
    out.converged = out.precoder.converged && out.combiner.converged;

    out.F.F_RF = out.precoder.rf;
    out.F.F_BB = out.precoder.bb;
    const double p = digital_power(out.F);
    if (!(p > 0.0)) throw ConstraintError("degenerate beamformer");
    const double c = std::sqrt(static_cast<double>(K) * cfg.Ns / p);
    for (auto& bb : out.F.F_BB) bb *= c;

    out.W.W_RF = out.combiner.rf;
    out.W.W_BB = out.combiner.bb;
    return out;
}

}  // namespace hbf
