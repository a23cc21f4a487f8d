#pragma once

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace hbf {

using Complex = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

/// Raised when a configuration violates a dimensional or physical invariant.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Raised when a runtime quantity leaves its feasible set.
class ConstraintError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised on malformed or mismatched files (datasets, checkpoints, CSV).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// All dimensional and physical parameters of one link. Powers are linear mW.
struct SystemConfig {
    int Nt = 64;
    int Nr = 4;
    int NRFt = 4;
    int NRFr = 2;
    int Ns = 2;
    int K = 128;
    int Kp = 16;
    int M = 8;
    int L = 16;
    double rho = 10.0;
    double rho_p = 10.0;
    double sigma_n2 = 1.0;
    int B = 512;
    int D = 16;
    int V = 8;
    int G = 4;
    double alpha = 0.2;
    std::uint64_t seed = 1;

    /// Real entries in the received pilot tensor: 2 * Kp * NRFr * L.
    int pilot_real_count() const { return 2 * Kp * NRFr * L; }
    int num_segments() const { return pilot_real_count() / V; }
    int bits_per_index() const;
    /// Zero-based index of the p-th pilot-bearing subchannel.
    int pilot_subchannel(int p) const { return p * M; }

    bool operator==(const SystemConfig&) const = default;
};

/// Throws ConfigError naming the first violated invariant; otherwise returns cfg.
const SystemConfig& validate(const SystemConfig& cfg);

/// Feedback bits implied by (Kp, NRFr, L, V, D). Requires the divisibility invariants.
int feedback_bits(const SystemConfig& cfg);

/// Returns a copy of cfg with (B, D, V) set for a target bit budget. Uses the
/// reference (D, V) pairs when the pilot tensor has 1024 real entries and
/// otherwise the valid pair whose codebook size is closest to 16.
SystemConfig with_feedback_bits(SystemConfig cfg, int bits);

double dbm_to_mw(double dbm);
double mw_to_dbm(double mw);

/// Per-subchannel noise power in mW for a PSD in dBm/Hz spread over K subchannels.
double noise_power_from_psd(double psd_dbm_per_hz, double bandwidth_hz, int K);

/// Wideband reference settings (64x4 antennas, 128 subchannels, 16 pilot subchannels).
SystemConfig reference_config();
/// Desk-scale settings used throughout the test suites (16x2 antennas, 32 subchannels).
SystemConfig desk_config();

/// Default large-scale loss folded into the noise floor; channels are unit-gain normalized.
inline constexpr double kDefaultPathLossDb = 110.0;
inline constexpr double kDefaultNoisePsdDbmHz = -161.0;
inline constexpr double kDefaultBandwidthHz = 100e6;

void to_json(nlohmann::json& j, const SystemConfig& cfg);
/// Missing keys keep their defaults. Accepts "*_dbm" power keys and
/// "noise_psd_dbm_hz"/"bandwidth_hz"/"path_loss_db" in place of sigma_n2.
void from_json(const nlohmann::json& j, SystemConfig& cfg);

SystemConfig load_config(const std::string& path);
void save_config(const std::string& path, const SystemConfig& cfg);

/// Stable 64-bit hash over every field that shapes trainable tensors.
std::uint64_t shape_hash(const SystemConfig& cfg);

// -- complex <-> real layout ------------------------------------------------
// A complex matrix X (rows x cols) is vectorized as [vec(Re X); vec(Im X)],
// column-major within each plane (real plane then imaginary plane).

RVector pack_complex(const CMatrix& x);
CMatrix unpack_complex(const Eigen::Ref<const RVector>& v, int rows, int cols);

/// Frobenius inner product Re tr(a^H b).
inline double real_inner(const CMatrix& a, const CMatrix& b) {
    return (a.conjugate().array() * b.array()).real().sum();
}

}  // namespace hbf
