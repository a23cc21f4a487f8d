// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "helpers.hpp"
#include "ste_surrogate.hpp"
#include "hbf/cli.hpp"
#include "hbf/gnn.hpp"
#include "hbf/mlp.hpp"

using namespace hbf;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
    bool pass = false;
    std::string detail;
};

std::map<int, Verdict> verdicts;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    verdicts[id] = {pass, name + ": " + detail};
    std::printf("%s criterion %d %s: %s\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str());
    std::fflush(stdout);
}

std::string num(double x, int prec = 4) {
    std::ostringstream s;
    s.precision(prec);
    s << x;
    return s.str();
}

struct Budget {
    std::size_t samples = 4000;
    int epochs = 40;
    int batch = 32;
    double lr = 3e-3;
    std::vector<int> seeds{1, 2, 3};
    std::vector<int> bits{64, 128, 256, 512};
    int threads = 0;
};

ChannelRealization random_channel(const SystemConfig& cfg, Rng& rng) {
    ChannelRealization h;
    for (int k = 0; k < cfg.K; ++k) h.H.push_back(test::random_cmatrix(rng, cfg.Nr, cfg.Nt));
    return h;
}

double max_fd_error(const std::function<double()>& f, double* x, const double* g, std::size_t n,
                    double h) {
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        worst = std::max(worst, test::rel_err(test::central_diff(f, x + i, h), g[i], 1e-4));
    return worst;
}

// -- structural criteria ----------------------------------------------------------

void criterion_bits() {
    SystemConfig cfg = desk_config();
    cfg.Kp = 16;
    cfg.M = 2;
    cfg.L = 16;
    cfg.NRFr = 2;
    const Dataset data = generate_dataset(with_feedback_bits(cfg, 256), ClusterParams{}, 2);
    std::string detail;
    bool ok = cfg.pilot_real_count() == 1024;
    for (int b : {32, 64, 96, 128, 192, 256, 512, 768, 1024}) {
        const SystemConfig c = with_feedback_bits(cfg, b);
        const Model m = Model::init(c, Arch::Gnn, data);
        const Inference inf = infer(m, data[1], draw_pilot_noise(c, 5));
        const auto emitted = inf.feedback.bits.size();
        const bool round_trip = unpack_indices(inf.feedback.bits, c.bits_per_index()) == inf.feedback.indices;
        ok = ok && c.B == b && static_cast<int>(emitted) == b && round_trip;
        detail += std::to_string(b) + "->" + std::to_string(emitted) + (b == 1024 ? "" : " ");
    }
    report(2, "bit-budget exactness", ok, detail);
}

void criterion_gradients() {
    const SystemConfig cfg = test::tiny_config();
    Rng rng(31);
    double net = 0.0, codebook = 0.0, pilot = 0.0, lv = 0.0, rate = 0.0;
    for (Arch arch : {Arch::Gnn, Arch::Mlp}) {
        const ChannelRealization h = random_channel(cfg, rng);
        const PilotNoise noise = draw_pilot_noise(cfg, rng.index(1000));
        Model m = Model::init(cfg, arch, {h});
        Model g = m.zeros_like();
        const SampleStats st = sample_loss_grad(m, h, noise, cfg.rho, g);
        auto pm = m.params(), pg = g.params();

        auto loss = [&]() { return sample_loss(m, h, noise, cfg.rho).loss; };
        for (std::size_t t = 0; t < pm.size(); ++t)
            if (pm[t].name.rfind("hb_", 0) == 0 || pm[t].name.rfind("hc_", 0) == 0)
                net = std::max(net, max_fd_error(loss, pm[t].data, pg[t].data, pm[t].size, 1e-5));

        const RMatrix z = m.input_scale * split(transmit_pilots(h, m.pilot, cfg, noise), cfg.V);
        auto cb_term = [&]() { return cfg.alpha * vq_loss(z, m.codebook, st.indices, 0.0); };
        codebook = std::max(codebook, max_fd_error(cb_term, m.codebook.E.data(), g.codebook.E.data(),
                                                   m.codebook.E.size(), 1e-6));

        const test::Surrogate sur(m, h, noise, cfg.rho, false);
        for (std::size_t t = 0; t < pm.size(); ++t)
            if (pm[t].name.rfind("pilot.", 0) == 0)
                pilot = std::max(pilot, max_fd_error(sur, pm[t].data, pg[t].data, pm[t].size, 1e-6));

        // L_V with respect to the quantizer input, codebook held fixed.
        RMatrix zz = z;
        const VqLossGrad vg = vq_loss_backward(zz, m.codebook, st.indices);
        auto commit = [&]() { return kCommitmentBeta * vq_loss(zz, m.codebook, st.indices, 0.0); };
        lv = std::max(lv, max_fd_error(commit, zz.data(), vg.segments.data(), zz.size(), 1e-6));
    }
    {
        const ChannelRealization h = random_channel(cfg, rng);
        RawHybrid rf, rw;
        rf.rf = test::random_cmatrix(rng, cfg.Nt, cfg.NRFt);
        rw.rf = test::random_cmatrix(rng, cfg.Nr, cfg.NRFr);
        for (int k = 0; k < cfg.K; ++k) {
            rf.bb.push_back(test::random_cmatrix(rng, cfg.NRFt, cfg.Ns));
            rw.bb.push_back(test::random_cmatrix(rng, cfg.NRFr, cfg.Ns));
        }
        HybridBeamformer F = normalize_beamformer(rf, cfg);
        HybridCombiner W = normalize_combiner(rw, cfg);
        const SpectralEfficiencyGrad sg = spectral_efficiency_grad(h, F, W, cfg.rho, cfg.sigma_n2);
        auto se = [&]() { return spectral_efficiency(h, F, W, cfg.rho, cfg.sigma_n2).mean; };
        auto cm = [&](CMatrix& x, const CMatrix& gx) {
            rate = std::max(rate, max_fd_error(se, reinterpret_cast<double*>(x.data()),
                                               reinterpret_cast<const double*>(gx.data()), 2 * x.size(), 1e-5));
        };
        cm(F.F_RF, sg.f.F_RF);
        cm(W.W_RF, sg.w.W_RF);
        for (int k = 0; k < cfg.K; ++k) {
            cm(F.F_BB[k], sg.f.F_BB[k]);
            cm(W.W_BB[k], sg.w.W_BB[k]);
        }
    }
    const double worst = std::max({net, codebook, pilot, lv, rate});
    report(3, "gradient suite", worst < 1e-4,
           "max rel err rate " + num(rate) + ", networks " + num(net) + ", codebook " + num(codebook) +
               ", pilots (straight-through) " + num(pilot) + ", L_V " + num(lv) + " (tol 1e-4)");
}

RMatrix permute_groups(const RMatrix& x, const std::vector<int>& perm) {
    RMatrix out(x.rows(), x.cols());
    for (std::size_t q = 0; q < perm.size(); ++q) out.col(q) = x.col(perm[q]);
    return out;
}

bool equivariant(const StateNetwork& net, const RMatrix& x, const std::vector<int>& perm,
                 const SystemConfig& cfg) {
    auto fwd = [&](const RMatrix& in) { return normalize_beamformer(read_out(net.forward(in), net.dims()), cfg); };
    const HybridBeamformer a = fwd(x), b = fwd(permute_groups(x, perm));
    if (a.F_RF != b.F_RF) return false;
    for (int q = 0; q < cfg.Kp; ++q)
        for (int m = 0; m < cfg.M; ++m)
            if (b.F_BB[q * cfg.M + m] != a.F_BB[perm[q] * cfg.M + m]) return false;
    return true;
}

void criterion_equivariance() {
    const SystemConfig cfg = desk_config();
    Rng rng(41);
    const GnnNetwork gnn(SideDims::bs(cfg), cfg.G, rng);
    const MlpNetwork mlp(SideDims::bs(cfg), cfg.G, rng);
    std::vector<int> perm(cfg.Kp);
    std::iota(perm.begin(), perm.end(), 0);
    const int trials = 20;
    int gnn_ok = 0, mlp_broken = 0;
    for (int t = 0; t < trials; ++t) {
        for (int i = cfg.Kp - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
        const RMatrix x = test::random_rmatrix(rng, gnn.dims().in_dim, cfg.Kp);
        gnn_ok += equivariant(gnn, x, perm, cfg);
        mlp_broken += !equivariant(mlp, x, perm, cfg);
    }
    report(4, "equivariance", gnn_ok == trials && mlp_broken >= 1,
           "GNN exact on " + std::to_string(gnn_ok) + "/" + std::to_string(trials) +
               " random permutations, MLP broken on " + std::to_string(mlp_broken) + "/" +
               std::to_string(trials));
}

void criterion_se_oracle() {
    Rng rng(51);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const CMatrix h = test::random_cmatrix(rng, 2, 2), f = test::random_cmatrix(rng, 2, 2),
                      w = test::random_cmatrix(rng, 2, 2);
        const double rho = std::exp(rng.uniform(-3.0, 3.0)), s2 = std::exp(rng.uniform(-2.0, 1.0));
        const CMatrix lambda = w.adjoint() * h * f;
        Eigen::GeneralizedSelfAdjointEigenSolver<CMatrix> es(lambda * lambda.adjoint(),
                                                             s2 * (w.adjoint() * w), Eigen::EigenvaluesOnly);
        double oracle = 0.0;
        for (Eigen::Index i = 0; i < 2; ++i) oracle += std::log2(1.0 + rho / 2.0 * es.eigenvalues()(i));
        worst = std::max(worst, std::abs(subchannel_rate(h, f, w, rho, s2) - oracle));
    }
    double scalar = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Complex h = rng.complex_normal(1.0);
        const double rho = 0.1 + 10 * rng.uniform(0.0, 1.0), s2 = 0.05 + rng.uniform(0.0, 1.0);
        const CMatrix one = CMatrix::Ones(1, 1);
        const double expect = std::log2(1.0 + rho * std::norm(h) / s2);
        scalar = std::max(scalar, std::abs(subchannel_rate(CMatrix::Constant(1, 1, h), one, one, rho, s2) - expect) /
                                      std::max(1.0, expect));
    }
    report(5, "SE oracle", worst < 1e-10 && scalar <= 1e-14,
           "max |R - eig oracle| " + num(worst, 3) + " over 1000 2x2 instances, scalar formula " + num(scalar, 3));
}

void criterion_baselines() {
    Rng rng(61);
    bool monotone = true;
    for (int t = 0; t < 10; ++t) {
        std::vector<CMatrix> target;
        for (int k = 0; k < 8; ++k) target.push_back(test::random_cmatrix(rng, 16, 2));
        const MoResult r = mo_factorize(target, 4, 0.25, {200, 1e-10});
        for (std::size_t i = 1; i < r.objective.size(); ++i)
            monotone = monotone && r.objective[i] <= r.objective[i - 1] * (1 + 1e-12);
    }
    SystemConfig cfg = desk_config();
    const AngleDictionary dict = AngleDictionary::for_config(cfg);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
        const int r = static_cast<int>(rng.index(dict.A_r.cols())), c = static_cast<int>(rng.index(dict.A_t.cols()));
        const CMatrix h = rng.complex_normal(1.0) * dict.A_r.col(r) * dict.A_t.col(c).adjoint();
        ChannelRealization truth;
        truth.H.assign(cfg.K, h);
        const PilotParams p = PilotParams::random(cfg, 70 + t);
        const ReceivedPilots y = transmit_pilots(truth, p, cfg, zero_pilot_noise(cfg));
        worst = std::max(worst, channel_nmse(omp_channel_estimate(y, p, dict, 1, cfg).H, truth));
    }
    report(9, "baseline sanity", monotone && worst <= 1e-6,
           std::string("MO objective ") + (monotone ? "monotone" : "NOT monotone") +
               " over 10 runs, worst OMP on-grid NMSE " + num(worst, 3));
}

// -- trained criteria ---------------------------------------------------------------

struct Run {
    Arch arch;
    int bits, seed;
    Model best;
    double test_se = 0.0, init_se = 0.0, seconds = 0.0;
};

double model_test_se(const Model& m, const Dataset& test) { return mean_se(m, test, m.cfg.rho); }

struct ConstraintWorst {
    double modulus = 0.0, power = 0.0, pilot_excess = -1e300;
};

void constraint_worst(const Model& m, const Dataset& test, ConstraintWorst& w) {
    for (int l = 0; l < m.pilot.s.cols(); ++l)
        w.pilot_excess = std::max(w.pilot_excess, m.pilot.s.col(l).squaredNorm() - m.cfg.NRFt);
    for (std::size_t i = 0; i < test.size(); ++i) {
        const Inference inf = infer(m, test[i], draw_pilot_noise(m.cfg, eval_noise_seed(m.cfg, i)));
        const ConstraintReport c = check_constraints(inf.F, m.cfg);
        w.modulus = std::max({w.modulus, c.rf_modulus, combiner_modulus_violation(inf.W, m.cfg)});
        w.power = std::max(w.power, c.power);
    }
}

}  // namespace

int main(int argc, char** argv) {
    Budget b;
    CLI::App app{"acceptance gate"};
    app.add_option("--samples", b.samples, "channel samples");
    app.add_option("--epochs", b.epochs, "epochs per training run");
    app.add_option("--batch", b.batch, "minibatch size");
    app.add_option("--lr", b.lr, "learning rate");
    app.add_option("--seeds", b.seeds, "training seeds");
    app.add_option("--threads", b.threads, "worker threads");
    CLI11_PARSE(app, argc, argv);

    const auto t_start = Clock::now();
    criterion_bits();
    criterion_gradients();
    criterion_equivariance();
    criterion_se_oracle();
    criterion_baselines();

    const SystemConfig base = desk_config();
    const Dataset all = generate_dataset(base, ClusterParams{}, b.samples);
    const SplitIndices idx = split_dataset(all.size());
    const Dataset train_set = subset(all, idx.train), val = subset(all, idx.validation), test = subset(all, idx.test);
    std::printf("desk config: Nt=%d Nr=%d NRFt=%d NRFr=%d K=%d Kp=%d L=%d, %zu samples (%zu test), "
                "%d epochs, batch %d, lr %g\n",
                base.Nt, base.Nr, base.NRFt, base.NRFr, base.K, base.Kp, base.L, all.size(), test.size(),
                b.epochs, b.batch, b.lr);

    std::vector<Run> runs;
    bool constraints_ok = true;
    std::string constraint_error;
    double step_seconds = 0.0;
    long steps = 0;
    auto train_one = [&](Arch arch, int bits, int seed) {
        SystemConfig cfg = with_feedback_bits(base, bits);
        cfg.seed = static_cast<std::uint64_t>(seed);
        TrainOptions opt;
        opt.epochs = b.epochs;
        opt.batch_size = b.batch;
        opt.lr = b.lr;
        opt.arch = arch;
        opt.check_constraints = true;
        opt.threads = b.threads;
        const auto t0 = Clock::now();
        Run r{arch, bits, seed, {}};
        try {
            TrainResult res = train(cfg, train_set, val, opt);
            r.best = std::move(res.state.best);
        } catch (const ConstraintError& e) {
            constraints_ok = false;
            constraint_error = e.what();
            r.best = Model::init(cfg, arch, train_set);
        }
        r.seconds = seconds_since(t0);
        step_seconds += r.seconds;
        steps += static_cast<long>(b.epochs) * ((train_set.size() + b.batch - 1) / b.batch);
        r.test_se = model_test_se(r.best, test);
        r.init_se = model_test_se(Model::init(cfg, arch, train_set), test);
        std::printf("  trained %s B=%d seed=%d: test SE %.4f (init %.4f) in %.0f s\n", to_string(arch).c_str(),
                    bits, seed, r.test_se, r.init_se, r.seconds);
        std::fflush(stdout);
        runs.push_back(std::move(r));
    };
    for (int seed : b.seeds)
        for (int bits : b.bits) train_one(Arch::Gnn, bits, seed);
    for (int seed : b.seeds) train_one(Arch::Mlp, 256, seed);

    auto find = [&](Arch a, int bits, int seed) -> const Run& {
        for (const auto& r : runs)
            if (r.arch == a && r.bits == bits && r.seed == seed) return r;
        throw std::logic_error("missing run");
    };
    auto mean_over_seeds = [&](Arch a, int bits) {
        double s = 0.0;
        for (int seed : b.seeds) s += find(a, bits, seed).test_se;
        return s / static_cast<double>(b.seeds.size());
    };

    // 1: every step of every run was checked in training; recheck the test set here.
    ConstraintWorst cw;
    for (const auto& r : runs) constraint_worst(r.best, test, cw);
    constraints_ok = constraints_ok && cw.modulus <= 1e-12 && cw.power <= 1e-6 && cw.pilot_excess <= 1e-12;
    report(1, "constraint suite", constraints_ok,
           (constraint_error.empty() ? std::string("no violation in ") + std::to_string(steps) + " checked steps"
                                     : "training raised: " + constraint_error) +
               "; on the test set max modulus error " + num(cw.modulus, 3) + ", max relative power error " +
               num(cw.power, 3) + ", max pilot ||s||^2 - NRFt " + num(cw.pilot_excess, 3) + "; " +
               num(step_seconds / 60.0, 3) + " min of training");

    // 6: B = 256 ordering plus an 8-point power sweep for every method.
    const SystemConfig c256 = with_feedback_bits(base, 256);
    const std::vector<double> dbm{-5, 0, 5, 10, 15, 20, 25, 30};
    std::vector<double> rhos;
    for (double d : dbm) rhos.push_back(dbm_to_mw(d));
    const Run& g256 = find(Arch::Gnn, 256, b.seeds.front());
    const Run& m256 = find(Arch::Mlp, 256, b.seeds.front());
    const double fd = evaluate(Method::FullyDigital, c256, test, {c256.rho}).front().mean_se;
    const double mo_pcsi = evaluate(Method::MoPcsi, c256, test, {c256.rho}).front().mean_se;
    const double mo_omp = evaluate(Method::MoOmp, c256, test, {c256.rho}).front().mean_se;
    bool bounded = true;
    std::string gnn_detail;
    for (int seed : b.seeds) {
        const Run& r = find(Arch::Gnn, 256, seed);
        bounded = bounded && r.test_se < fd && r.test_se > r.init_se;
        gnn_detail += num(r.test_se) + (seed == b.seeds.back() ? "" : "/");
    }
    std::vector<ResultRow> sweep_rows;
    bool monotone = true;
    struct SweepCase {
        Method m;
        const Model* model;
        std::string name;
    };
    for (const SweepCase& sc : {SweepCase{Method::Gnn, &g256.best, "gnn"}, SweepCase{Method::Mlp, &m256.best, "mlp"},
                                SweepCase{Method::MoPcsi, nullptr, "mo_pcsi"},
                                SweepCase{Method::MoOmp, nullptr, "mo_omp"},
                                SweepCase{Method::MoOmp, &g256.best, "mo_omp_learned_pilots"},
                                SweepCase{Method::FullyDigital, nullptr, "fully_digital"}}) {
        const auto rows = evaluate(sc.m, c256, test, rhos, sc.model);
        std::printf("  power sweep %-22s", sc.name.c_str());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            std::printf(" %.3f", rows[i].mean_se);
            if (i > 0 && rows[i].mean_se < rows[i - 1].mean_se) monotone = false;
            sweep_rows.push_back({sc.name, dbm[i], rows[i].mean_se, rows[i].stderr_se, rows[i].n});
        }
        std::printf("\n");
    }
    write_results_csv("acceptance_power_sweep.csv", sweep_rows);
    report(6, "power ordering", bounded && monotone,
           "GNN@256 test SE " + gnn_detail + " vs fully digital " + num(fd) + " and init " + num(g256.init_se) +
               " (MO-PCSI " + num(mo_pcsi) + ", MO-OMP " + num(mo_omp) + "); 8-point sweep " +
               (monotone ? "non-decreasing" : "NOT monotone") + " for all methods");

    // 7: ordering over B.
    std::vector<double> by_bits;
    std::string bits_detail;
    int inversions = 0;
    bool within = true;
    std::vector<ResultRow> bit_rows;
    for (int bits : b.bits) {
        by_bits.push_back(mean_over_seeds(Arch::Gnn, bits));
        bits_detail += "B=" + std::to_string(bits) + ": " + num(by_bits.back()) + " ";
        bit_rows.push_back({"gnn", static_cast<double>(bits), by_bits.back(), 0.0, b.seeds.size()});
        if (by_bits.size() > 1) {
            const double prev = by_bits[by_bits.size() - 2], cur = by_bits.back();
            if (cur < prev) {
                ++inversions;
                within = within && cur >= prev * (1.0 - 0.02);
            }
        }
    }
    const SystemConfig c_max = with_feedback_bits(base, b.bits.back());
    const double omp_max = evaluate(Method::MoOmp, c_max, test, {c_max.rho}).front().mean_se;
    bit_rows.push_back({"mo_omp", static_cast<double>(b.bits.back()), omp_max, 0.0, test.size()});
    write_results_csv("acceptance_feedback_sweep.csv", bit_rows);
    report(7, "feedback ordering", within && by_bits.back() >= omp_max,
           bits_detail + "(seed mean, " + std::to_string(inversions) + " inversions, all within 2%: " +
               (within ? "yes" : "no") + "); GNN@" + std::to_string(b.bits.back()) + " " + num(by_bits.back()) +
               " vs MO-OMP " + num(omp_max));

    // 8: architecture ablation at equal B and budget.
    const double gnn_mean = mean_over_seeds(Arch::Gnn, 256), mlp_mean = mean_over_seeds(Arch::Mlp, 256);
    std::string abl;
    for (int seed : b.seeds)
        abl += num(find(Arch::Gnn, 256, seed).test_se) + " vs " + num(find(Arch::Mlp, 256, seed).test_se) +
               (seed == b.seeds.back() ? "" : ", ");
    report(8, "architecture ablation", gnn_mean >= mlp_mean,
           "B=256 seed-mean GNN " + num(gnn_mean) + " vs MLP " + num(mlp_mean) + " (per seed " + abl + ")");

    std::printf("\nsummary (%.1f min)\n", seconds_since(t_start) / 60.0);
    int failed = 0;
    for (const auto& [id, v] : verdicts) {
        std::printf("%s criterion %d %s\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str());
        failed += !v.pass;
    }
    return failed == 0 ? 0 : 1;
}
