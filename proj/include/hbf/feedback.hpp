#pragma once

#include <cstdint>
#include <vector>

#include "hbf/core.hpp"
#include "hbf/pilot.hpp"

namespace hbf {

/// D codewords of length V, one per row.
struct Codebook {
    RMatrix E;

    int D() const { return static_cast<int>(E.rows()); }
    int V() const { return static_cast<int>(E.cols()); }
};

/// Codeword indices in segment order and their fixed-width big-endian bit stream.
struct FeedbackMessage {
    std::vector<int> indices;
    std::vector<std::uint8_t> bits;  // one bit per element, 0 or 1
};

inline constexpr double kCommitmentBeta = 0.25;

/// Real view of one pilot subchannel: real plane then imaginary plane,
/// each ordered RF chain first, then pilot index.
RVector flatten_subchannel(const CMatrix& y);
CMatrix unflatten_subchannel(const Eigen::Ref<const RVector>& v, int n_rf, int L);

/// Whole tensor, subchannel-major, using flatten_subchannel per block.
RVector flatten(const ReceivedPilots& r);
ReceivedPilots unflatten(const Eigen::Ref<const RVector>& v, const SystemConfig& cfg);

/// Chunks the flattened tensor into rows of length V.
RMatrix split(const ReceivedPilots& r, int V);
ReceivedPilots unsplit(const RMatrix& segments, const SystemConfig& cfg);

/// Nearest codeword per row, ties to the lowest index.
std::vector<int> nearest_codewords(const RMatrix& segments, const Codebook& cb);

std::vector<std::uint8_t> pack_indices(const std::vector<int>& indices, int bits_per_index);
std::vector<int> unpack_indices(const std::vector<std::uint8_t>& bits, int bits_per_index);

FeedbackMessage encode(const ReceivedPilots& r, const Codebook& cb, const SystemConfig& cfg);
/// Throws FormatError for an index outside [0, D) or a bit stream whose
/// length disagrees with the index list.
ReceivedPilots decode(const FeedbackMessage& q, const Codebook& cb, const SystemConfig& cfg);
/// Decodes from the bit stream alone.
ReceivedPilots decode_bits(const std::vector<std::uint8_t>& bits, const Codebook& cb,
                           const SystemConfig& cfg);

/// Selected codeword rows for each segment.
RMatrix gather_codewords(const std::vector<int>& indices, const Codebook& cb);

/// mean_i ||z_i - e_d(i)||^2 (1 + beta). Numerically the codebook and
/// commitment terms coincide; they differ only in where gradients flow.
double vq_loss(const RMatrix& segments, const Codebook& cb, const std::vector<int>& indices,
               double beta = kCommitmentBeta);

struct VqLossGrad {
    RMatrix segments;  ///< commitment term only (codebook held fixed)
    RMatrix codebook;  ///< codebook term only (segments held fixed)
};
VqLossGrad vq_loss_backward(const RMatrix& segments, const Codebook& cb,
                            const std::vector<int>& indices, double beta = kCommitmentBeta);

}  // namespace hbf
