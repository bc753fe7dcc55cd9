#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kseg {

struct ComplexVolume;

/// splitmix64 stream. All randomness in the project flows through this
/// generator so that sequences are bit-exact across platforms and languages.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1) from the top 53 bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal pair via Box-Muller; consumes two doubles.
    std::pair<double, double> next_gaussian_pair();

    /// Uniform integer in [0, n). n must be > 0.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(next_double() * static_cast<double>(n));
    }

private:
    uint64_t state_;
};

/// FNV-1a 64-bit hash of a byte string.
uint64_t fnv1a64(std::string_view s);

/// Deterministic evaluation-mask seed for (acceleration, patient, patch start
/// slice). Hashes the canonical string "a=<R>|p=<patient>|z=<patch_z>".
uint64_t derive_mask_seed(int acceleration, int patient_index, int patch_z);

/// Deterministic evaluation-noise seed for (SNR, patient). Hashes the
/// canonical string "snr=<snr_db>|p=<patient>" with snr_db rendered as a
/// (possibly negative) integer.
uint64_t derive_noise_seed(int snr_db, int patient_index);

/// Round half to even (banker's rounding).
long round_half_even(double x);

/// Per-slice column-selection undersampling mask.
struct SamplingMask {
    int width = 0;
    std::vector<uint8_t> keep;      // one flag per column
    double acceleration = 1.0;      // R
    double center_fraction = 0.0;   // cf
    uint64_t seed = 0;

    int kept_count() const;
    double kept_fraction() const;
};

/// One (acceleration, center fraction) evaluation setting.
struct AccelEntry {
    int acceleration;
    double center_fraction;
};

/// The evaluation schedule: 1x through 48x with their center fractions.
const std::vector<AccelEntry>& default_accel_schedule();

/// The evaluation noise levels in dB, +20 down to -30.
const std::vector<int>& default_snr_schedule();

/// Random Cartesian column mask. The central round(cf*width) columns
/// (round half to even) are always kept; every other column is kept
/// independently with probability p = (width/R - n_low) / (width - n_low),
/// clamped to [0, 1]. Decisions consume one double per non-center column in
/// left-to-right order from SplitMix64(seed).
SamplingMask random_mask(int width, double acceleration, double center_fraction, uint64_t seed);

/// Zero the dropped columns of a k-space volume. Kept columns are copied
/// bit-identically.
ComplexVolume apply_mask(const ComplexVolume& k, const SamplingMask& mask);

/// Add circularly symmetric complex Gaussian noise calibrated so that
/// signal power / noise power equals 10^(snr_db/10), with the signal power
/// taken as mean |k|^2 over the volume.
ComplexVolume add_noise(const ComplexVolume& k, double snr_db, uint64_t seed);

/// Mask as one 0/1 CSV row per mask.
std::string masks_to_csv(const std::vector<SamplingMask>& masks);

} // namespace kseg
