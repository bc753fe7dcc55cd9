#include "kseg/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kseg/errors.hpp"
#include "kseg/kspace.hpp"

namespace kseg {

std::pair<double, double> SplitMix64::next_gaussian_pair() {
    // u1 in (0, 1] keeps the log finite.
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

uint64_t derive_mask_seed(int acceleration, int patient_index, int patch_z) {
    std::ostringstream os;
    os << "a=" << acceleration << "|p=" << patient_index << "|z=" << patch_z;
    return fnv1a64(os.str());
}

uint64_t derive_noise_seed(int snr_db, int patient_index) {
    std::ostringstream os;
    os << "snr=" << snr_db << "|p=" << patient_index;
    return fnv1a64(os.str());
}

long round_half_even(double x) {
    double fl = std::floor(x);
    double frac = x - fl;
    long lo = static_cast<long>(fl);
    if (frac > 0.5) return lo + 1;
    if (frac < 0.5) return lo;
    return (lo % 2 == 0) ? lo : lo + 1;
}

int SamplingMask::kept_count() const {
    return static_cast<int>(std::count(keep.begin(), keep.end(), uint8_t{1}));
}

double SamplingMask::kept_fraction() const {
    return width == 0 ? 0.0 : static_cast<double>(kept_count()) / width;
}

const std::vector<AccelEntry>& default_accel_schedule() {
    static const std::vector<AccelEntry> schedule = {
        {1, 1.0},   {2, 0.04},  {4, 0.08},  {6, 0.05},
        {8, 0.04},  {10, 0.03}, {12, 0.02}, {16, 0.015},
        {24, 0.008}, {32, 0.004}, {48, 0.002},
    };
    return schedule;
}

const std::vector<int>& default_snr_schedule() {
    static const std::vector<int> snrs = {20, 10, 5, 0, -5, -10, -15, -20, -25, -30};
    return snrs;
}

SamplingMask random_mask(int width, double acceleration, double center_fraction, uint64_t seed) {
    if (width < 1) throw validation_error("random_mask: width must be >= 1");
    if (acceleration < 1.0) throw validation_error("random_mask: acceleration must be >= 1");
    if (center_fraction < 0.0 || center_fraction > 1.0)
        throw validation_error("random_mask: center_fraction must be in [0, 1]");

    SamplingMask mask;
    mask.width = width;
    mask.acceleration = acceleration;
    mask.center_fraction = center_fraction;
    mask.seed = seed;
    mask.keep.assign(width, 0);

    long n_low = round_half_even(center_fraction * width);
    n_low = std::clamp(n_low, 0L, static_cast<long>(width));
    int pad = static_cast<int>((width - n_low + 1) / 2);
    for (long c = 0; c < n_low; ++c) mask.keep[pad + c] = 1;

    double p = 1.0;
    if (width > n_low) {
        p = (width / acceleration - static_cast<double>(n_low)) /
            static_cast<double>(width - n_low);
        p = std::clamp(p, 0.0, 1.0);
    }

    SplitMix64 stream(seed);
    for (int c = 0; c < width; ++c) {
        if (c >= pad && c < pad + n_low) continue;
        double draw = stream.next_double();
        if (draw < p) mask.keep[c] = 1;
    }
    return mask;
}

ComplexVolume apply_mask(const ComplexVolume& k, const SamplingMask& mask) {
    if (mask.width != k.width)
        throw validation_error("apply_mask: mask width " + std::to_string(mask.width) +
                               " does not match volume width " + std::to_string(k.width));
    ComplexVolume out = k;
    for (int d = 0; d < k.depth; ++d)
        for (int h = 0; h < k.height; ++h)
            for (int w = 0; w < k.width; ++w)
                if (!mask.keep[w]) out.at(d, h, w) = {0.0f, 0.0f};
    return out;
}

ComplexVolume add_noise(const ComplexVolume& k, double snr_db, uint64_t seed) {
    double signal_power = k.energy() / static_cast<double>(k.size());
    if (!(signal_power > 0.0))
        throw degenerate_input_error("add_noise: input volume has zero energy");

    double noise_power = signal_power / std::pow(10.0, snr_db / 10.0);
    double sigma_component = std::sqrt(noise_power / 2.0);

    SplitMix64 stream(seed);
    ComplexVolume out = k;
    for (auto& v : out.data) {
        auto [g_re, g_im] = stream.next_gaussian_pair();
        v += std::complex<float>(static_cast<float>(g_re * sigma_component),
                                 static_cast<float>(g_im * sigma_component));
    }
    return out;
}

std::string masks_to_csv(const std::vector<SamplingMask>& masks) {
    std::ostringstream os;
    for (const auto& m : masks) {
        for (int c = 0; c < m.width; ++c) {
            if (c) os << ',';
            os << int(m.keep[c]);
        }
        os << '\n';
    }
    return os.str();
}

} // namespace kseg
