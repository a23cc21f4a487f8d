#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hbf/core.hpp"

namespace hbf {

/// Frequency response of one link: H[k] is Nr x Nt for each of the K subchannels.
struct ChannelRealization {
    std::vector<CMatrix> H;

    int K() const { return static_cast<int>(H.size()); }
    int Nr() const { return H.empty() ? 0 : static_cast<int>(H.front().rows()); }
    int Nt() const { return H.empty() ? 0 : static_cast<int>(H.front().cols()); }

    bool operator==(const ChannelRealization& o) const;
};

using Dataset = std::vector<ChannelRealization>;

/// Throws ConstraintError if the tensor shape disagrees with cfg or holds non-finite values.
void check_shape(const ChannelRealization& h, const SystemConfig& cfg);

/// Clustered multipath model on half-wavelength uniform linear arrays.
struct ClusterParams {
    int num_clusters = 4;
    int rays_per_cluster = 5;
    double angle_spread_deg = 7.5;
    double max_delay_s = 100e-9;
    double carrier_hz = 60e9;
    double bandwidth_hz = 100e6;
};

void validate(const ClusterParams& p);

/// Unit-norm ULA response exp(j*pi*n*sin(angle)) / sqrt(n_ant).
CVector ula_response(int n_ant, double angle_rad);

/// Draws one realization. Entries are rounded to float precision so that the
/// binary dataset format stores the realization exactly.
ChannelRealization generate_clustered_channel(const SystemConfig& cfg, const ClusterParams& params,
                                              std::uint64_t seed);

/// n realizations whose per-sample seeds derive from cfg.seed and the sample index.
Dataset generate_dataset(const SystemConfig& cfg, const ClusterParams& params, std::size_t n);

// -- binary dataset format ----------------------------------------------------
// offset size  field
//      0    8  magic "HBFCHAN1"
//      8    4  version (uint32 LE) = 1
//     12    4  K       (uint32 LE)
//     16    4  Nr      (uint32 LE)
//     20    4  Nt      (uint32 LE)
//     24    8  count   (uint64 LE)
//     32  ...  float32 LE values, for sample, k, row r, column t: re, im

inline constexpr std::size_t kDatasetHeaderBytes = 32;
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetShape {
    int K = 0, Nr = 0, Nt = 0;
    std::uint64_t count = 0;
};

void save_dataset(const std::string& path, const Dataset& data);
/// Throws FormatError on bad magic/version, truncation, or a shape that
/// disagrees with `expect` when given.
Dataset load_dataset(const std::string& path,
                     const std::optional<SystemConfig>& expect = std::nullopt);
DatasetShape read_dataset_header(const std::string& path);

/// Index ranges of the 60/20/20 train/validation/test split (contiguous, disjoint).
struct SplitIndices {
    std::vector<std::size_t> train, validation, test;
};
SplitIndices split_dataset(std::size_t n);

template <class Idx>
Dataset subset(const Dataset& data, const Idx& indices) {
    Dataset out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(data.at(i));
    return out;
}

}  // namespace hbf
