#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hbf/baselines.hpp"
#include "hbf/beamformer.hpp"
#include "hbf/channel.hpp"
#include "hbf/feedback.hpp"
#include "hbf/gnn.hpp"
#include "hbf/objective.hpp"
#include "hbf/pilot.hpp"

namespace hbf {

enum class Arch { Gnn, Mlp };

std::string to_string(Arch a);
Arch arch_from_string(const std::string& s);

/// Every trainable group of the learned pipeline plus the fixed input scale.
struct Model {
    SystemConfig cfg;
    Arch arch = Arch::Gnn;
    PilotParams pilot;
    Codebook codebook;
    std::unique_ptr<StateNetwork> bs;  ///< base-station network (beamformer)
    std::unique_ptr<StateNetwork> ue;  ///< user network (combiner)
    double input_scale = 1.0;

    Model() = default;
    Model(const Model& o);
    Model& operator=(const Model& o);
    Model(Model&&) noexcept = default;
    Model& operator=(Model&&) noexcept = default;

    /// Fresh parameters. `calibration` (if non-empty) sets the input scale and
    /// seeds the codebook with D random pilot segments.
    static Model init(const SystemConfig& cfg, Arch arch, const Dataset& calibration = {});
    /// Zero-valued model with identical shapes, used to accumulate gradients.
    Model zeros_like() const;

    /// Named, ordered views of every trainable tensor.
    std::vector<ParamRef> params();
};

/// Everything one application of the pipeline produces for a channel sample.
struct Inference {
    ReceivedPilots y;
    FeedbackMessage feedback;
    ReceivedPilots y_hat;
    HybridBeamformer F;
    HybridCombiner W;
};

Inference infer(const Model& m, const ChannelRealization& h, const PilotNoise& noise);

/// Per-sample loss terms.
struct SampleStats {
    double loss = 0.0;
    double vq_loss = 0.0;
    double rate = 0.0;
    std::vector<int> indices;
};

struct GradOptions {
    bool freeze_codebook = false;
    bool freeze_pilot = false;
    /// Route the commitment term's gradient past the quantizer into the pilots.
    /// Off by default: it lowers pilot power instead of moving the codebook.
    bool commitment_to_pilots = false;
};

/// Forward and backward pass of alpha * L_V - R for one sample at transmit
/// power rho. Gradients are added to `grad` scaled by `weight`.
SampleStats sample_loss_grad(const Model& m, const ChannelRealization& h, const PilotNoise& noise,
                             double rho, Model& grad, double weight = 1.0,
                             const GradOptions& opt = {});
/// Forward only.
SampleStats sample_loss(const Model& m, const ChannelRealization& h, const PilotNoise& noise,
                        double rho);

struct AdamState {
    std::vector<RVector> m, v;
    long step = 0;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double train_vq_loss = 0.0;
    double train_rate = 0.0;
    double val_se = 0.0;
};

struct TrainState {
    Model model;
    Model best;
    AdamState adam;
    int epoch = 0;
    double best_val = -1.0;
};

struct TrainOptions {
    int epochs = 500;
    int batch_size = 128;
    double lr = 1e-3;
    Arch arch = Arch::Gnn;
    bool freeze_codebook = false;
    bool commitment_to_pilots = false;
    bool reseed_dead_codewords = true;
    bool check_constraints = false;
    int threads = 0;  ///< 0: hardware concurrency
    std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
    TrainState state;
    std::vector<EpochRecord> history;  ///< row 0 is the starting point when training from scratch
};

/// Joint training on `train`, model selection on `validation` at cfg.rho.
/// Passing `resume` continues from its epoch up to `opt.epochs` in total, with
/// the same per-epoch seeds as an uninterrupted run.
TrainResult train(const SystemConfig& cfg, const Dataset& train, const Dataset& validation,
                  const TrainOptions& opt, std::optional<TrainState> resume = std::nullopt);

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

// -- evaluation -----------------------------------------------------------------

enum class Method { Gnn, Mlp, MoPcsi, MoOmp, FullyDigital };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct EvalRow {
    double rho = 0.0;
    double mean_se = 0.0;
    double stderr_se = 0.0;
    std::size_t n = 0;
};

/// Per-sample mean spectral efficiency of one method at each transmit power.
/// Beamformers are computed once per sample with fixed noise seeds and reused
/// across powers. Learned methods and MO+OMP need `model` (MO+OMP reuses its
/// pilots); the others ignore it.
std::vector<std::vector<double>> evaluate_samples(Method method, const SystemConfig& cfg,
                                                  const Dataset& data,
                                                  const std::vector<double>& rhos,
                                                  const Model* model = nullptr,
                                                  const MoOptions& mo = {});

std::vector<EvalRow> evaluate(Method method, const SystemConfig& cfg, const Dataset& data,
                              const std::vector<double>& rhos, const Model* model = nullptr,
                              const MoOptions& mo = {});

/// Mean SE of the learned pipeline at cfg.rho under fixed evaluation noise.
double mean_se(const Model& m, const Dataset& data, double rho);

std::uint64_t eval_noise_seed(const SystemConfig& cfg, std::size_t sample);

// -- checkpoints ----------------------------------------------------------------

void save_checkpoint(const std::string& path, const TrainState& state);
/// Throws FormatError on malformed files or when `expect` disagrees with the
/// checkpoint's configuration hash.
TrainState load_checkpoint(const std::string& path,
                           const std::optional<SystemConfig>& expect = std::nullopt);

}  // namespace hbf
