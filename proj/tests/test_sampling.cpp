#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "kseg/errors.hpp"
#include "kseg/kspace.hpp"
#include "kseg/sampling.hpp"

using namespace kseg;

namespace {

// Independent FNV-1a reference used as the oracle for seed derivation.
uint64_t fnv_ref(const std::string& s) {
    uint64_t h = 14695981039346656037ULL;
    for (char c : s) h = (h ^ uint64_t(uint8_t(c))) * 1099511628211ULL;
    return h;
}

} // namespace

TEST_CASE("splitmix64 reference vectors") {
    SplitMix64 s(0);
    CHECK(s.next_u64() == 0xE220A8397B1DCDAFULL);
    CHECK(s.next_u64() == 0x6E789E6AA1B965F4ULL);
    CHECK(s.next_u64() == 0x06C45D188009454FULL);

    SplitMix64 a(1234567), b(1234567);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("splitmix64 doubles live in [0,1)") {
    SplitMix64 s(42);
    for (int i = 0; i < 10000; ++i) {
        double d = s.next_double();
        CHECK(d >= 0.0);
        CHECK(d < 1.0);
    }
}

TEST_CASE("fnv1a matches known vectors") {
    CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("derive_mask_seed hashes the canonical string") {
    CHECK(derive_mask_seed(4, 0, 0) == fnv_ref("a=4|p=0|z=0"));
    CHECK(derive_mask_seed(16, 37, 48) == fnv_ref("a=16|p=37|z=48"));
    CHECK(derive_mask_seed(4, 0, 0) == derive_mask_seed(4, 0, 0));
}

TEST_CASE("derive_noise_seed renders negative SNR") {
    CHECK(derive_noise_seed(-10, 3) == fnv_ref("snr=-10|p=3"));
    CHECK(derive_noise_seed(20, 0) == fnv_ref("snr=20|p=0"));
}

TEST_CASE("seed derivation is injective over the evaluation grid") {
    std::set<uint64_t> seen;
    int count = 0;
    for (const auto& entry : default_accel_schedule())
        for (int p = 0; p < 50; ++p)
            for (int z : {0, 8, 16, 24}) {
                seen.insert(derive_mask_seed(entry.acceleration, p, z));
                ++count;
            }
    CHECK(int(seen.size()) == count);
}

TEST_CASE("round_half_even") {
    CHECK(round_half_even(0.5) == 0);
    CHECK(round_half_even(1.5) == 2);
    CHECK(round_half_even(2.5) == 2);
    CHECK(round_half_even(-0.5) == 0);
    CHECK(round_half_even(-1.5) == -2);
    CHECK(round_half_even(2.4) == 2);
    CHECK(round_half_even(2.6) == 3);
    CHECK(round_half_even(320 * 0.08) == 26);
}

TEST_CASE("full sampling keeps every column") {
    auto m = random_mask(320, 1.0, 0.04, 99);
    CHECK(m.kept_count() == 320);
}

TEST_CASE("center fraction guarantees the central block") {
    // round(0.08 * 320) = 26 central columns always kept.
    for (uint64_t seed : {1ULL, 2ULL, 3ULL, 77ULL}) {
        auto m = random_mask(320, 4.0, 0.08, seed);
        int pad = (320 - 26 + 1) / 2;
        for (int c = pad; c < pad + 26; ++c) CHECK(m.keep[c] == 1);
        CHECK(m.keep[160] == 1); // DC column
    }
}

TEST_CASE("center guarantee holds for every schedule entry") {
    for (const auto& entry : default_accel_schedule()) {
        long n_low = round_half_even(entry.center_fraction * 320);
        int pad = int((320 - n_low + 1) / 2);
        for (uint64_t seed = 0; seed < 25; ++seed) {
            auto m = random_mask(320, entry.acceleration, entry.center_fraction, seed);
            for (long c = 0; c < n_low; ++c) CHECK(m.keep[pad + c] == 1);
        }
    }
}

TEST_CASE("mean kept fraction approximates 1/R") {
    // Monte Carlo oracle: over 1000 seeds the empirical mean kept fraction
    // stays within 10% relative of the nominal rate.
    double total = 0.0;
    for (uint64_t seed = 0; seed < 1000; ++seed)
        total += random_mask(320, 16.0, 0.015, seed).kept_fraction();
    double mean = total / 1000.0;
    CHECK(mean > (1.0 / 16.0) * 0.9);
    CHECK(mean < (1.0 / 16.0) * 1.1);
}

TEST_CASE("masks are bit-exact for identical inputs") {
    auto a = random_mask(320, 8.0, 0.04, 12345);
    auto b = random_mask(320, 8.0, 0.04, 12345);
    CHECK(a.keep == b.keep);
    auto c = random_mask(320, 8.0, 0.04, 12346);
    CHECK(a.keep != c.keep);
}

TEST_CASE("apply_mask zeroes dropped columns only") {
    ComplexVolume k(2, 8, 16, Domain::kspace);
    SplitMix64 s(5);
    for (auto& v : k.data)
        v = {float(s.next_double() - 0.5), float(s.next_double() - 0.5)};

    SamplingMask all;
    all.width = 16;
    all.keep.assign(16, 1);
    auto same = apply_mask(k, all);
    CHECK(same.data == k.data);

    auto m = random_mask(16, 4.0, 0.1, 3);
    auto masked = apply_mask(k, m);
    CHECK(masked.energy() <= k.energy());
    for (int d = 0; d < 2; ++d)
        for (int h = 0; h < 8; ++h)
            for (int w = 0; w < 16; ++w) {
                if (m.keep[w])
                    CHECK(masked.at(d, h, w) == k.at(d, h, w));
                else
                    CHECK(std::abs(masked.at(d, h, w)) == 0.0f);
            }

    SamplingMask wrong;
    wrong.width = 8;
    wrong.keep.assign(8, 1);
    CHECK_THROWS_AS(apply_mask(k, wrong), validation_error);
}

TEST_CASE("column masking of a delta image aliases along width") {
    ComplexVolume img(1, 32, 32, Domain::image);
    img.at(0, 16, 16) = {1.0f, 0.0f};
    auto k = fft2c(img);

    SamplingMask center_only;
    center_only.width = 32;
    center_only.keep.assign(32, 0);
    center_only.keep[16] = 1;
    auto aliased = ifft2c(apply_mask(k, center_only));

    // A single kept k-space column spreads the impulse across the whole row.
    double far = std::abs(aliased.at(0, 16, 2));
    double peak = std::abs(aliased.at(0, 16, 16));
    CHECK(peak > 0.0);
    CHECK(far > 0.1 * peak);
}

TEST_CASE("noise power calibration at 0 dB") {
    ComplexVolume k(16, 256, 256, Domain::kspace);
    SplitMix64 s(9);
    for (auto& v : k.data)
        v = {float(2.0 * s.next_double() - 1.0), float(2.0 * s.next_double() - 1.0)};

    auto noisy = add_noise(k, 0.0, 111);
    double noise_power = 0.0;
    for (size_t i = 0; i < k.data.size(); ++i) {
        auto d = noisy.data[i] - k.data[i];
        noise_power += double(d.real()) * d.real() + double(d.imag()) * d.imag();
    }
    noise_power /= double(k.size());
    double signal_power = k.energy() / double(k.size());
    double ratio = noise_power / signal_power;
    CHECK(ratio > 0.95);
    CHECK(ratio < 1.05);
}

TEST_CASE("empirical SNR within 0.2 dB of target") {
    ComplexVolume k(16, 256, 256, Domain::kspace);
    SplitMix64 s(17);
    for (auto& v : k.data)
        v = {float(2.0 * s.next_double() - 1.0), float(2.0 * s.next_double() - 1.0)};
    double signal_power = k.energy() / double(k.size());

    for (double snr_db : {20.0, 0.0, -10.0}) {
        auto noisy = add_noise(k, snr_db, 2024);
        double noise_power = 0.0;
        for (size_t i = 0; i < k.data.size(); ++i) {
            auto d = noisy.data[i] - k.data[i];
            noise_power += double(d.real()) * d.real() + double(d.imag()) * d.imag();
        }
        noise_power /= double(k.size());
        double snr_est = 10.0 * std::log10(signal_power / noise_power);
        CHECK(std::abs(snr_est - snr_db) < 0.2);
    }
}

TEST_CASE("very high SNR leaves the volume nearly unchanged") {
    ComplexVolume k(4, 64, 64, Domain::kspace);
    SplitMix64 s(3);
    for (auto& v : k.data)
        v = {float(s.next_double() + 0.5), float(s.next_double() - 0.5)};
    auto noisy = add_noise(k, 60.0, 5);
    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < k.data.size(); ++i) {
        auto d = noisy.data[i] - k.data[i];
        num += std::norm(std::complex<double>(d.real(), d.imag()));
        den += std::norm(std::complex<double>(k.data[i].real(), k.data[i].imag()));
    }
    CHECK(std::sqrt(num / den) < 0.002);
}

TEST_CASE("noise is zero-mean and circularly symmetric") {
    ComplexVolume k(16, 256, 256, Domain::kspace);
    for (auto& v : k.data) v = {1.0f, 0.0f};

    auto noisy = add_noise(k, 0.0, 314159);
    double sum_re = 0.0, sum_im = 0.0, var_re = 0.0, var_im = 0.0;
    size_t n = k.size();
    for (size_t i = 0; i < n; ++i) {
        auto d = noisy.data[i] - k.data[i];
        sum_re += d.real();
        sum_im += d.imag();
        var_re += double(d.real()) * d.real();
        var_im += double(d.imag()) * d.imag();
    }
    double sigma = std::sqrt((var_re + var_im) / double(n) / 2.0);
    double mean_mag = std::hypot(sum_re / double(n), sum_im / double(n));
    CHECK(mean_mag < 3.0 * sigma / std::sqrt(double(n)));
    CHECK(var_re / var_im == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("add_noise rejects zero-energy input") {
    ComplexVolume k(2, 8, 8, Domain::kspace);
    CHECK_THROWS_AS(add_noise(k, 0.0, 1), degenerate_input_error);
}

TEST_CASE("mask CSV export") {
    auto m = random_mask(8, 2.0, 0.25, 10);
    auto csv = masks_to_csv({m});
    CHECK(csv.find('\n') != std::string::npos);
    int commas = int(std::count(csv.begin(), csv.end(), ','));
    CHECK(commas == 7);
}

TEST_CASE("schedule matches the published acceleration list") {
    const auto& s = default_accel_schedule();
    REQUIRE(s.size() == 11);
    CHECK(s[0].acceleration == 1);
    CHECK(s[1].acceleration == 2);
    CHECK(s[1].center_fraction == doctest::Approx(0.04));
    CHECK(s[2].acceleration == 4);
    CHECK(s[2].center_fraction == doctest::Approx(0.08));
    CHECK(s[7].acceleration == 16);
    CHECK(s[7].center_fraction == doctest::Approx(0.015));
    CHECK(s[10].acceleration == 48);
    CHECK(s[10].center_fraction == doctest::Approx(0.002));
    CHECK(default_snr_schedule() ==
          std::vector<int>{20, 10, 5, 0, -5, -10, -15, -20, -25, -30});
}
