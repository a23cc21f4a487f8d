#pragma once

#include <memory>
#include <string>
#include <vector>

#include "hbf/beamformer.hpp"
#include "hbf/nn.hpp"
#include "hbf/pilot.hpp"

namespace hbf {

/// Intermediate tensors a network keeps for its backward pass.
struct NetCache {
    std::vector<RMatrix> t;
};

/// Maps the per-subchannel pilot features (in_dim x Kp, column p for pilot
/// subchannel p) to final node states. Implemented by the star-graph GNN and
/// by the fully-connected ablation network.
class StateNetwork {
public:
    explicit StateNetwork(SideDims dims) : dims_(dims) {}
    virtual ~StateNetwork() = default;

    const SideDims& dims() const { return dims_; }

    virtual NodeStates forward(const RMatrix& x, NetCache* cache = nullptr) const = 0;
    /// Accumulates parameter gradients into `grad` (same concrete type) and returns dL/dx.
    virtual RMatrix backward(const RMatrix& x, const NetCache& cache, const NodeStates& grad_out,
                             StateNetwork& grad) const = 0;

    virtual std::unique_ptr<StateNetwork> clone() const = 0;
    virtual std::unique_ptr<StateNetwork> zeros_like() const = 0;
    virtual void params(const std::string& prefix, std::vector<ParamRef>& out) = 0;
    virtual std::size_t param_count() const = 0;
    virtual std::string kind() const = 0;

private:
    SideDims dims_;
};

struct GnnLayer {
    Dense f1;  ///< analog -> analog
    Dense f2;  ///< mean digital -> analog
    Dense f3;  ///< digital -> digital, shared by all subchannels
    Dense f4;  ///< analog -> digital, shared by all subchannels
};

/// Star graph with one analog node and K digital nodes. Digital nodes start in
/// Kp groups of M (one shared initializer per pilot subchannel), the analog
/// node from the element-wise mean pilot feature; G layers of
/// aggregation/combination follow. The last layer is affine.
class GnnNetwork final : public StateNetwork {
public:
    GnnNetwork(SideDims dims, int depth, Rng& rng);
    static GnnNetwork zeros(SideDims dims, int depth);

    int depth() const { return static_cast<int>(layers.size()); }

    NodeStates forward(const RMatrix& x, NetCache* cache = nullptr) const override;
    RMatrix backward(const RMatrix& x, const NetCache& cache, const NodeStates& grad_out,
                     StateNetwork& grad) const override;

    /// Initialization layer alone: c^0 (dc x K) and v^0.
    NodeStates init_nodes(const RMatrix& x) const;
    /// One aggregation/combination layer (1-based g).
    NodeStates message_pass(const NodeStates& s, int g) const;

    std::unique_ptr<StateNetwork> clone() const override;
    std::unique_ptr<StateNetwork> zeros_like() const override;
    void params(const std::string& prefix, std::vector<ParamRef>& out) override;
    std::size_t param_count() const override;
    std::string kind() const override { return "gnn"; }

    /// Affine parameter count for the given dimensions without allocating.
    static std::size_t count_params(const SideDims& d, int depth);

    Dense init_bb;  ///< in_dim -> M * dc
    Dense init_rf;  ///< in_dim -> dv
    std::vector<GnnLayer> layers;

private:
    GnnNetwork(SideDims dims) : StateNetwork(dims) {}
};

/// Column-stacks a pilot tensor into in_dim x Kp network input.
RMatrix pilot_features(const ReceivedPilots& r, double scale);
/// Routes dL/dfeatures back to dL/dY for the same scale.
ReceivedPilots feature_gradient_to_pilots(const RMatrix& grad_x, double scale,
                                          const SystemConfig& cfg);

}  // namespace hbf
