#include "hbf/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <thread>

#include "hbf/mlp.hpp"
#include "hbf/rng.hpp"

namespace hbf {

std::string to_string(Arch a) { return a == Arch::Gnn ? "gnn" : "mlp"; }

Arch arch_from_string(const std::string& s) {
    if (s == "gnn") return Arch::Gnn;
    if (s == "mlp") return Arch::Mlp;
    throw ConfigError("unknown architecture '" + s + "' (expected gnn or mlp)");
}

// -- model ----------------------------------------------------------------------

Model::Model(const Model& o)
    : cfg(o.cfg),
      arch(o.arch),
      pilot(o.pilot),
      codebook(o.codebook),
      bs(o.bs ? o.bs->clone() : nullptr),
      ue(o.ue ? o.ue->clone() : nullptr),
      input_scale(o.input_scale) {}

Model& Model::operator=(const Model& o) {
    if (this != &o) {
        Model tmp(o);
        *this = std::move(tmp);
    }
    return *this;
}

namespace {

std::unique_ptr<StateNetwork> make_network(Arch arch, const SideDims& d, int depth, Rng& rng) {
    if (arch == Arch::Gnn) return std::make_unique<GnnNetwork>(d, depth, rng);
    return std::make_unique<MlpNetwork>(d, depth, rng);
}

}  // namespace

Model Model::init(const SystemConfig& cfg, Arch arch, const Dataset& calibration) {
    validate(cfg);
    Model m;
    m.cfg = cfg;
    m.arch = arch;
    m.pilot = PilotParams::random(cfg, derive_seed(cfg.seed, Stream::PilotInit));
    Rng net_rng(derive_seed(cfg.seed, Stream::NetInit));
    m.bs = make_network(arch, SideDims::bs(cfg), cfg.G, net_rng);
    m.ue = make_network(arch, SideDims::ue(cfg), cfg.G, net_rng);

    Rng cb_rng(derive_seed(cfg.seed, Stream::Codebook));
    if (calibration.empty()) {
        m.codebook.E = RMatrix(cfg.D, cfg.V).unaryExpr([&](double) { return cb_rng.normal(); });
        return m;
    }
    const std::size_t n = std::min<std::size_t>(calibration.size(), 64);
    RMatrix segments(0, cfg.V);
    double sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const ReceivedPilots y =
            transmit_pilots(calibration[i], m.pilot, cfg, derive_seed(cfg.seed, Stream::Codebook, i + 1));
        const RMatrix z = split(y, cfg.V);
        sum2 += z.squaredNorm();
        segments.conservativeResize(segments.rows() + z.rows(), cfg.V);
        segments.bottomRows(z.rows()) = z;
    }
    const double rms = std::sqrt(sum2 / static_cast<double>(segments.size()));
    m.input_scale = rms > 0.0 ? 1.0 / rms : 1.0;
    m.codebook.E.resize(cfg.D, cfg.V);
    for (int d = 0; d < cfg.D; ++d)
        m.codebook.E.row(d) = m.input_scale * segments.row(cb_rng.index(segments.rows()));
    return m;
}

Model Model::zeros_like() const {
    Model g;
    g.cfg = cfg;
    g.arch = arch;
    g.pilot = PilotParams::zeros(cfg);
    g.codebook.E = RMatrix::Zero(codebook.D(), codebook.V());
    g.bs = bs->zeros_like();
    g.ue = ue->zeros_like();
    g.input_scale = input_scale;
    return g;
}

std::vector<ParamRef> Model::params() {
    std::vector<ParamRef> out;
    for (int l = 0; l < pilot.L(); ++l) out.push_back(real_param("pilot.theta" + std::to_string(l), pilot.theta[l]));
    for (int l = 0; l < pilot.L(); ++l) out.push_back(real_param("pilot.phi" + std::to_string(l), pilot.phi[l]));
    out.push_back(complex_param("pilot.s", pilot.s));
    out.push_back(real_param("codebook.E", codebook.E));
    bs->params("hb_" + bs->kind(), out);
    ue->params("hc_" + ue->kind(), out);
    return out;
}

// -- forward / backward -----------------------------------------------------------
// The quantizer sees the pilot tensor multiplied by input_scale, so codewords
// and the VQ loss live in the same normalized units as the network inputs.

namespace {

ReceivedPilots scaled(ReceivedPilots r, double s) {
    for (auto& y : r.Y) y *= s;
    return r;
}

}  // namespace

Inference infer(const Model& m, const ChannelRealization& h, const PilotNoise& noise) {
    const SystemConfig& cfg = m.cfg;
    Inference out;
    out.y = transmit_pilots(h, m.pilot, cfg, noise);
    out.feedback = encode(scaled(out.y, m.input_scale), m.codebook, cfg);
    out.y_hat = scaled(decode(out.feedback, m.codebook, cfg), 1.0 / m.input_scale);
    const NodeStates sb = m.bs->forward(pilot_features(out.y_hat, m.input_scale));
    const NodeStates su = m.ue->forward(pilot_features(out.y, m.input_scale));
    out.F = normalize_beamformer(read_out(sb, m.bs->dims()), cfg);
    out.W = normalize_combiner(read_out(su, m.ue->dims()), cfg);
    return out;
}

SampleStats sample_loss(const Model& m, const ChannelRealization& h, const PilotNoise& noise,
                        double rho) {
    const Inference inf = infer(m, h, noise);
    SampleStats st;
    st.indices = inf.feedback.indices;
    st.vq_loss = vq_loss(m.input_scale * split(inf.y, m.cfg.V), m.codebook, st.indices);
    st.rate = spectral_efficiency(h, inf.F, inf.W, rho, m.cfg.sigma_n2).mean;
    st.loss = total_loss(st.vq_loss, st.rate, m.cfg.alpha);
    return st;
}

SampleStats sample_loss_grad(const Model& m, const ChannelRealization& h, const PilotNoise& noise,
                             double rho, Model& grad, double weight, const GradOptions& opt) {
    const SystemConfig& cfg = m.cfg;
    SampleStats st;

    const ReceivedPilots y = transmit_pilots(h, m.pilot, cfg, noise);
    const RMatrix z = m.input_scale * split(y, cfg.V);
    st.indices = nearest_codewords(z, m.codebook);
    // Straight-through: the quantized tensor flows forward, gradients pass to z unchanged.
    const ReceivedPilots y_hat =
        scaled(unsplit(gather_codewords(st.indices, m.codebook), cfg), 1.0 / m.input_scale);

    const RMatrix x_bs = pilot_features(y_hat, m.input_scale);
    const RMatrix x_ue = pilot_features(y, m.input_scale);
    NetCache cache_bs, cache_ue;
    const RawHybrid raw_bs = read_out(m.bs->forward(x_bs, &cache_bs), m.bs->dims());
    const RawHybrid raw_ue = read_out(m.ue->forward(x_ue, &cache_ue), m.ue->dims());
    const HybridBeamformer F = normalize_beamformer(raw_bs, cfg);
    const HybridCombiner W = normalize_combiner(raw_ue, cfg);

    SpectralEfficiencyGrad se = spectral_efficiency_grad(h, F, W, rho, cfg.sigma_n2);
    st.rate = se.rate.mean;
    st.vq_loss = vq_loss(z, m.codebook, st.indices);
    st.loss = total_loss(st.vq_loss, st.rate, cfg.alpha);

    // dL/dR = -1
    for (auto& g : se.f.F_BB) g *= -weight;
    se.f.F_RF *= -weight;
    for (auto& g : se.w.W_BB) g *= -weight;
    se.w.W_RF *= -weight;

    const NodeStates g_bs = pack_states(normalize_beamformer_backward(raw_bs, cfg, se.f));
    const NodeStates g_ue = pack_states(normalize_combiner_backward(raw_ue, cfg, se.w));
    const RMatrix gx_bs = m.bs->backward(x_bs, cache_bs, g_bs, *grad.bs);
    const RMatrix gx_ue = m.ue->backward(x_ue, cache_ue, g_ue, *grad.ue);

    const VqLossGrad vq = vq_loss_backward(z, m.codebook, st.indices);
    if (!opt.freeze_codebook) grad.codebook.E += (weight * cfg.alpha) * vq.codebook;

    if (!opt.freeze_pilot) {
        RMatrix gz = split(feature_gradient_to_pilots(gx_bs, m.input_scale, cfg), cfg.V);
        if (opt.commitment_to_pilots) gz += (weight * cfg.alpha * m.input_scale) * vq.segments;
        ReceivedPilots gy = unsplit(gz, cfg);
        const ReceivedPilots gy_ue = feature_gradient_to_pilots(gx_ue, m.input_scale, cfg);
        for (int q = 0; q < cfg.Kp; ++q) gy.Y[q] += gy_ue.Y[q];
        grad.pilot += transmit_pilots_backward(h, m.pilot, cfg, noise, gy);
    }
    return st;
}

// -- training ---------------------------------------------------------------------

namespace {

template <class Fn>
void run_chunks(int n_chunks, int threads, Fn&& fn) {
    if (threads <= 0) threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    threads = std::min(threads, n_chunks);
    if (threads <= 1) {
        for (int c = 0; c < n_chunks; ++c) fn(c);
        return;
    }
    std::vector<std::exception_ptr> errors(threads);
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (int c = t; c < n_chunks; c += threads) fn(c);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

constexpr int kGradChunks = 4;

void adam_step(Model& model, Model& grad, AdamState& adam, double lr) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto p = model.params();
    auto g = grad.params();
    if (adam.m.empty()) {
        for (const auto& r : p) {
            adam.m.push_back(RVector::Zero(static_cast<Eigen::Index>(r.size)));
            adam.v.push_back(RVector::Zero(static_cast<Eigen::Index>(r.size)));
        }
    }
    ++adam.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(adam.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(adam.step));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto n = static_cast<Eigen::Index>(p[i].size);
        Eigen::Map<RVector> w(p[i].data, n);
        Eigen::Map<const RVector> gi(g[i].data, n);
        adam.m[i] = b1 * adam.m[i] + (1.0 - b1) * gi;
        adam.v[i] = b2 * adam.v[i] + (1.0 - b2) * gi.cwiseAbs2();
        w.array() -= lr * (adam.m[i].array() / c1) / ((adam.v[i].array() / c2).sqrt() + eps);
    }
}

void assert_pilot_constraints(const Model& m) {
    for (int l = 0; l < m.pilot.s.cols(); ++l)
        if (m.pilot.s.col(l).squaredNorm() > m.cfg.NRFt + 1e-12)
            throw ConstraintError("pilot power constraint violated at l=" + std::to_string(l));
    for (int l = 0; l < m.pilot.L(); ++l)
        if (!m.pilot.theta[l].allFinite() || !m.pilot.phi[l].allFinite())
            throw ConstraintError("non-finite pilot phases");
}

void assert_forward_constraints(const Model& m, const ChannelRealization& h, const PilotNoise& noise) {
    const Inference inf = infer(m, h, noise);
    const ConstraintReport r = check_constraints(inf.F, m.cfg);
    if (r.rf_modulus > 1e-12 || r.power > 1e-6)
        throw ConstraintError("beamformer constraints violated");
    if (combiner_modulus_violation(inf.W, m.cfg) > 1e-12)
        throw ConstraintError("combiner constraints violated");
}

void reseed_dead(Model& m, const std::vector<long>& usage, const Dataset& train, int epoch) {
    Rng rng(derive_seed(m.cfg.seed, Stream::Codebook, 1000003, static_cast<std::uint64_t>(epoch)));
    for (int d = 0; d < m.codebook.D(); ++d) {
        if (usage[d] > 0) continue;
        const std::size_t i = rng.index(train.size());
        const ReceivedPilots y = transmit_pilots(
            train[i], m.pilot, m.cfg,
            derive_seed(m.cfg.seed, Stream::TrainNoise, static_cast<std::uint64_t>(epoch), i));
        const RMatrix z = m.input_scale * split(y, m.cfg.V);
        m.codebook.E.row(d) = z.row(rng.index(z.rows()));
    }
}

}  // namespace

TrainResult train(const SystemConfig& cfg, const Dataset& train_set, const Dataset& validation,
                  const TrainOptions& opt, std::optional<TrainState> resume) {
    validate(cfg);
    if (train_set.empty()) throw std::invalid_argument("training split is empty");
    TrainResult result;
    TrainState& st = result.state;
    if (resume) {
        st = std::move(*resume);
    } else {
        st.model = Model::init(cfg, opt.arch, train_set);
        st.best = st.model;
        st.best_val = validation.empty() ? 0.0 : mean_se(st.model, validation, cfg.rho);
        result.history.push_back({0, std::nan(""), std::nan(""), std::nan(""), st.best_val});
    }
    if (opt.check_constraints) assert_pilot_constraints(st.model);

    const int batch = std::max(1, opt.batch_size);
    const GradOptions gopt{opt.freeze_codebook, false, opt.commitment_to_pilots};
    std::vector<Model> grads;
    for (int c = 0; c < kGradChunks; ++c) grads.push_back(st.model.zeros_like());

    const int first = st.epoch + 1;
    const int last = opt.epochs;
    for (int epoch = first; epoch <= last; ++epoch) {
        std::vector<std::size_t> order(train_set.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(derive_seed(cfg.seed, Stream::Shuffle, static_cast<std::uint64_t>(epoch)));
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);

        std::vector<long> usage(cfg.D, 0);
        double sum_loss = 0.0, sum_vq = 0.0, sum_rate = 0.0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            const std::size_t end = std::min(order.size(), start + batch);
            const std::size_t n = end - start;
            const double w = 1.0 / static_cast<double>(n);
            std::vector<SampleStats> stats(n);
            for (auto& g : grads) fill_zero(g.params());
            const int chunks = static_cast<int>(std::min<std::size_t>(kGradChunks, n));
            run_chunks(chunks, opt.threads, [&](int c) {
                for (std::size_t j = start + c; j < end; j += chunks) {
                    const std::size_t i = order[j];
                    const PilotNoise noise = draw_pilot_noise(
                        cfg, derive_seed(cfg.seed, Stream::TrainNoise, static_cast<std::uint64_t>(epoch), i));
                    stats[j - start] = sample_loss_grad(st.model, train_set[i], noise, cfg.rho, grads[c], w, gopt);
                }
            });
            for (int c = 1; c < chunks; ++c) accumulate(grads[0].params(), grads[c].params());

            double batch_loss = 0.0;
            for (const auto& s : stats) {
                batch_loss += s.loss;
                sum_loss += s.loss;
                sum_vq += s.vq_loss;
                sum_rate += s.rate;
                for (int idx : s.indices) ++usage[idx];
            }
            if (!std::isfinite(batch_loss)) throw std::runtime_error("training diverged: non-finite loss");

            adam_step(st.model, grads[0], st.adam, opt.lr);
            project_pilot_power(st.model.pilot, cfg);
            if (opt.check_constraints) {
                assert_pilot_constraints(st.model);
                assert_forward_constraints(st.model, train_set[order[start]],
                                           draw_pilot_noise(cfg, eval_noise_seed(cfg, order[start])));
            }
        }
        if (opt.reseed_dead_codewords && !opt.freeze_codebook) reseed_dead(st.model, usage, train_set, epoch);

        st.epoch = epoch;
        EpochRecord rec;
        rec.epoch = epoch;
        const double n = static_cast<double>(train_set.size());
        rec.train_vq_loss = sum_vq / n;
        rec.train_rate = sum_rate / n;
        rec.train_loss = sum_loss / n;
        rec.val_se = validation.empty() ? 0.0 : mean_se(st.model, validation, cfg.rho);
        if (rec.val_se > st.best_val) {
            st.best_val = rec.val_se;
            st.best = st.model;
        }
        result.history.push_back(rec);
        if (opt.on_epoch) opt.on_epoch(rec);
    }
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream out(path);
    if (!out) throw std::ios_base::failure("cannot write history " + path);
    out.precision(17);
    out << "epoch,train_loss,train_vq_loss,train_rate,val_se\n";
    for (const auto& r : history)
        out << r.epoch << ',' << r.train_loss << ',' << r.train_vq_loss << ',' << r.train_rate << ','
            << r.val_se << '\n';
}

// -- evaluation -------------------------------------------------------------------

std::string to_string(Method m) {
    switch (m) {
        case Method::Gnn: return "gnn";
        case Method::Mlp: return "mlp";
        case Method::MoPcsi: return "mo_pcsi";
        case Method::MoOmp: return "mo_omp";
        case Method::FullyDigital: return "fully_digital";
    }
    return "?";
}

Method method_from_string(const std::string& s) {
    for (Method m : {Method::Gnn, Method::Mlp, Method::MoPcsi, Method::MoOmp, Method::FullyDigital})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown method '" + s + "'");
}

std::uint64_t eval_noise_seed(const SystemConfig& cfg, std::size_t sample) {
    return derive_seed(cfg.seed, Stream::EvalNoise, sample);
}

std::vector<std::vector<double>> evaluate_samples(Method method, const SystemConfig& cfg,
                                                  const Dataset& data,
                                                  const std::vector<double>& rhos,
                                                  const Model* model, const MoOptions& mo) {
    if (data.empty()) throw std::invalid_argument("evaluation split is empty");
    const bool learned = method == Method::Gnn || method == Method::Mlp;
    if (learned) {
        if (!model) throw ConfigError("learned method needs a model");
        if ((method == Method::Gnn) != (model->arch == Arch::Gnn))
            throw ConfigError("checkpoint architecture " + to_string(model->arch) +
                              " does not match method " + to_string(method));
    }
    const PilotParams pilots =
        model ? model->pilot : PilotParams::random(cfg, derive_seed(cfg.seed, Stream::PilotInit));
    const AngleDictionary dict = AngleDictionary::for_config(cfg);

    std::vector<std::vector<double>> out(rhos.size(), std::vector<double>(data.size()));
    for (std::size_t i = 0; i < data.size(); ++i) {
        const ChannelRealization& h = data[i];
        check_shape(h, cfg);
        if (method == Method::FullyDigital) {
            for (std::size_t r = 0; r < rhos.size(); ++r)
                out[r][i] = fully_digital_svd(h, rhos[r], cfg.sigma_n2, cfg).rate.mean;
            continue;
        }
        HybridBeamformer F;
        HybridCombiner W;
        const PilotNoise noise = draw_pilot_noise(cfg, eval_noise_seed(cfg, i));
        if (learned) {
            Inference inf = infer(*model, h, noise);
            F = std::move(inf.F);
            W = std::move(inf.W);
        } else if (method == Method::MoPcsi) {
            MoHybridResult r = mo_hybrid(h, cfg, mo);
            F = std::move(r.F);
            W = std::move(r.W);
        } else {
            const ReceivedPilots y = transmit_pilots(h, pilots, cfg, noise);
            const OmpEstimate est = omp_channel_estimate(y, pilots, dict, kDefaultOmpPaths, cfg);
            MoHybridResult r = mo_hybrid(est.H, cfg, mo);
            F = std::move(r.F);
            W = std::move(r.W);
        }
        for (std::size_t r = 0; r < rhos.size(); ++r)
            out[r][i] = spectral_efficiency(h, F, W, rhos[r], cfg.sigma_n2).mean;
    }
    return out;
}

std::vector<EvalRow> evaluate(Method method, const SystemConfig& cfg, const Dataset& data,
                              const std::vector<double>& rhos, const Model* model,
                              const MoOptions& mo) {
    const auto samples = evaluate_samples(method, cfg, data, rhos, model, mo);
    std::vector<EvalRow> rows;
    for (std::size_t r = 0; r < rhos.size(); ++r) {
        const auto& v = samples[r];
        const double n = static_cast<double>(v.size());
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
        double ss = 0.0;
        for (double x : v) ss += (x - mean) * (x - mean);
        const double se = v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
        rows.push_back({rhos[r], mean, se, v.size()});
    }
    return rows;
}

double mean_se(const Model& m, const Dataset& data, double rho) {
    const Method method = m.arch == Arch::Gnn ? Method::Gnn : Method::Mlp;
    return evaluate(method, m.cfg, data, {rho}, &m).front().mean_se;
}

// -- checkpoints -------------------------------------------------------------------

namespace {

constexpr char kCkptMagic[8] = {'H', 'B', 'F', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCkptVersion = 1;

template <class T>
void put(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <class T>
T take(std::istream& in) {
    T v{};
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw FormatError("truncated checkpoint");
    return v;
}

std::string take_string(std::istream& in) {
    const auto n = take<std::uint32_t>(in);
    if (n > (1u << 26)) throw FormatError("corrupt checkpoint string length");
    std::string s(n, '\0');
    if (!in.read(s.data(), n)) throw FormatError("truncated checkpoint");
    return s;
}

void put_group(std::ostream& out, const std::vector<ParamRef>& refs) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(refs.size()));
    for (const auto& r : refs) {
        put_string(out, r.name);
        put<std::uint64_t>(out, r.size);
        out.write(reinterpret_cast<const char*>(r.data), static_cast<std::streamsize>(r.size * sizeof(double)));
    }
}

void take_group(std::istream& in, const std::vector<ParamRef>& refs, const std::string& group) {
    const auto n = take<std::uint32_t>(in);
    if (n != refs.size()) throw FormatError("checkpoint group " + group + " has wrong tensor count");
    for (const auto& r : refs) {
        const std::string name = take_string(in);
        const auto size = take<std::uint64_t>(in);
        if (name != r.name || size != r.size)
            throw FormatError("checkpoint tensor " + name + " does not match expected " + r.name);
        if (!in.read(reinterpret_cast<char*>(r.data), static_cast<std::streamsize>(size * sizeof(double))))
            throw FormatError("truncated checkpoint");
    }
}

std::vector<ParamRef> moment_refs(std::vector<RVector>& moments, const std::vector<ParamRef>& like,
                                  const std::string& prefix) {
    std::vector<ParamRef> out;
    for (std::size_t i = 0; i < moments.size(); ++i)
        out.push_back(real_param(prefix + like[i].name, moments[i]));
    return out;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& state_in) {
    TrainState state = state_in;  // params() needs mutable access
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::ios_base::failure("cannot write checkpoint " + path);
    out.write(kCkptMagic, sizeof(kCkptMagic));
    put<std::uint32_t>(out, kCkptVersion);
    put<std::uint64_t>(out, shape_hash(state.model.cfg));
    put_string(out, nlohmann::json(state.model.cfg).dump());
    put_string(out, to_string(state.model.arch));
    put<double>(out, state.model.input_scale);
    put<double>(out, state.best.input_scale);
    put<std::int32_t>(out, state.epoch);
    put<double>(out, state.best_val);
    put<std::int64_t>(out, state.adam.step);

    const auto refs = state.model.params();
    put_group(out, refs);
    put_group(out, state.best.params());
    put<std::uint8_t>(out, state.adam.m.empty() ? 0 : 1);
    if (!state.adam.m.empty()) {
        put_group(out, moment_refs(state.adam.m, refs, "adam.m."));
        put_group(out, moment_refs(state.adam.v, refs, "adam.v."));
    }
    if (!out) throw std::ios_base::failure("write failed for checkpoint " + path);
}

TrainState load_checkpoint(const std::string& path, const std::optional<SystemConfig>& expect) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::ios_base::failure("cannot open checkpoint " + path);
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
        throw FormatError("bad checkpoint magic in " + path);
    if (take<std::uint32_t>(in) != kCkptVersion) throw FormatError("unsupported checkpoint version");
    const auto hash = take<std::uint64_t>(in);
    SystemConfig cfg;
    try {
        cfg = nlohmann::json::parse(take_string(in)).get<SystemConfig>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("corrupt checkpoint config: ") + e.what());
    }
    if (shape_hash(cfg) != hash) throw FormatError("checkpoint config hash is inconsistent");
    if (expect && shape_hash(*expect) != hash)
        throw FormatError("checkpoint " + path + " was trained for a different configuration");
    if (expect) {
        // Non-shape fields (powers, noise, alpha, seed) follow the caller's config.
        cfg = *expect;
    }
    const Arch arch = arch_from_string(take_string(in));

    TrainState st;
    st.model = Model::init(cfg, arch);
    st.best = st.model;
    st.model.input_scale = take<double>(in);
    st.best.input_scale = take<double>(in);
    st.epoch = take<std::int32_t>(in);
    st.best_val = take<double>(in);
    st.adam.step = take<std::int64_t>(in);

    const auto refs = st.model.params();
    take_group(in, refs, "model");
    take_group(in, st.best.params(), "best");
    if (take<std::uint8_t>(in)) {
        for (const auto& r : refs) {
            st.adam.m.push_back(RVector::Zero(static_cast<Eigen::Index>(r.size)));
            st.adam.v.push_back(RVector::Zero(static_cast<Eigen::Index>(r.size)));
        }
        take_group(in, moment_refs(st.adam.m, refs, "adam.m."), "adam.m");
        take_group(in, moment_refs(st.adam.v, refs, "adam.v."), "adam.v");
    }
    return st;
}

}  // namespace hbf
