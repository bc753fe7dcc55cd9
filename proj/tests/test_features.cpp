#include "doctest.h"

#include <cmath>
#include <complex>

#include "kseg/errors.hpp"
#include "kseg/features.hpp"
#include "kseg/sampling.hpp"

using namespace kseg;

namespace {

ComplexVolume random_channel(int d, int h, int w, uint64_t seed) {
    ComplexVolume v(d, h, w, Domain::image);
    SplitMix64 s(seed);
    for (auto& x : v.data)
        x = {float(2.0 * s.next_double() - 1.0), float(2.0 * s.next_double() - 1.0)};
    return v;
}

ComplexVolume rotated(const ComplexVolume& v, double phi) {
    ComplexVolume out = v;
    std::complex<float> r(float(std::cos(phi)), float(std::sin(phi)));
    for (auto& x : out.data) x *= r;
    return out;
}

double total_energy(const ComplexVolume& v) { return v.energy(); }

ModelConfig tiny_hybrid_config() {
    ModelConfig cfg;
    cfg.variant = ModelVariant::hybrid_kspace_to_image;
    cfg.image_levels = 2;
    cfg.kspace_levels = 1;
    cfg.image_base_channels = 2;
    cfg.kspace_hidden_factor = 2;
    cfg.kspace_feature_channels = 2;
    return cfg;
}

} // namespace

TEST_CASE("coherent sum of a single channel is the channel itself") {
    auto c = random_channel(2, 8, 8, 1);
    auto sum = coherent_sum({c});
    for (size_t i = 0; i < c.data.size(); ++i)
        CHECK(std::abs(sum.data[i] - c.data[i]) < 1e-6);
}

TEST_CASE("alignment removes a pre-applied rotation of a duplicate channel") {
    auto c = random_channel(2, 8, 8, 2);
    auto sum = coherent_sum({c, rotated(c, M_PI / 3)});
    for (size_t i = 0; i < c.data.size(); ++i)
        CHECK(std::abs(sum.data[i] - 2.0f * c.data[i]) < 1e-5 * std::abs(2.0f * c.data[i]) + 1e-5);
}

TEST_CASE("alignment maximizes |sum| over per-channel global phases") {
    auto a = random_channel(1, 8, 8, 3);
    auto b = random_channel(1, 8, 8, 4);
    double aligned = total_energy(coherent_sum({a, b}));

    // Grid-search oracle over the rotation of the second channel.
    double best = 0.0;
    for (int step = 0; step < 720; ++step) {
        double phi = 2.0 * M_PI * step / 720.0;
        ComplexVolume sum = a;
        auto br = rotated(b, phi);
        for (size_t i = 0; i < sum.data.size(); ++i) sum.data[i] += br.data[i];
        best = std::max(best, total_energy(sum));
    }
    CHECK(aligned >= best - 1e-3 * best);
}

TEST_CASE("coherent sum is invariant to unit-phase rotations of the inputs") {
    auto a = random_channel(1, 8, 8, 5);
    auto b = random_channel(1, 8, 8, 6);
    auto base = coherent_sum({a, b});

    // Rotating a non-reference channel leaves the sum identical.
    auto rot_b = coherent_sum({a, rotated(b, 1.234)});
    for (size_t i = 0; i < base.data.size(); ++i)
        CHECK(std::abs(rot_b.data[i] - base.data[i]) < 1e-5);

    // Rotating the reference rotates the sum globally; |sum| is unchanged.
    auto rot_a = coherent_sum({rotated(a, 0.777), b});
    CHECK(total_energy(rot_a) == doctest::Approx(total_energy(base)).epsilon(1e-5));
}

TEST_CASE("coherent sum energy dominates the naive sum for channel pairs") {
    for (uint64_t seed = 10; seed < 20; ++seed) {
        auto a = random_channel(1, 8, 8, seed);
        auto b = random_channel(1, 8, 8, seed + 100);
        ComplexVolume naive = a;
        for (size_t i = 0; i < naive.data.size(); ++i) naive.data[i] += b.data[i];
        CHECK(total_energy(coherent_sum({a, b})) >= total_energy(naive) - 1e-9);
    }
}

TEST_CASE("radial profile of a DC impulse concentrates in bin zero") {
    ComplexVolume k(1, 16, 16, Domain::kspace);
    k.at(0, 8, 8) = {2.0f, 0.0f};
    auto profile = radial_energy_profile(k, 8);
    CHECK(profile.energy[0] > 0.0);
    for (int b = 1; b < 8; ++b) CHECK(profile.energy[b] == 0.0);
}

TEST_CASE("white-noise k-space has a flat radial profile") {
    ComplexVolume k(8, 128, 128, Domain::kspace);
    SplitMix64 s(7);
    for (auto& v : k.data) {
        auto [re, im] = s.next_gaussian_pair();
        v = {float(re), float(im)};
    }
    auto profile = radial_energy_profile(k, 6);
    double mean = 0.0;
    for (double e : profile.energy) mean += e;
    mean /= profile.energy.size();
    for (double e : profile.energy) CHECK(std::abs(e - mean) < 0.1 * mean);
}

TEST_CASE("radial profile scales quadratically and conserves energy") {
    auto k = random_channel(2, 32, 32, 9);
    k.domain = Domain::kspace;
    auto p1 = radial_energy_profile(k, 5);

    ComplexVolume k2 = k;
    for (auto& v : k2.data) v *= 2.0f;
    auto p2 = radial_energy_profile(k2, 5);
    for (int b = 0; b < 5; ++b)
        CHECK(p2.energy[b] == doctest::Approx(4.0 * p1.energy[b]).epsilon(1e-5));

    // Completeness: bin energy * bin count sums to the total energy.
    double total = 0.0;
    for (int b = 0; b < 5; ++b) total += p1.energy[b] * double(p1.bin_counts[b]);
    CHECK(total == doctest::Approx(k.energy()).epsilon(1e-5));

    CHECK_THROWS_AS(radial_energy_profile(k, 1), validation_error);
}

TEST_CASE("gradient weights: variant guard, determinism, zero for detached channels") {
    SegmentationModel<double> hybrid(tiny_hybrid_config(), 11);

    nn::Tensor<double> patch(1, 2, 4, 8, 8);
    SplitMix64 s(21);
    for (auto& v : patch.data) v = 2.0 * s.next_double() - 1.0;

    auto a = gradient_modulated_sum(hybrid, patch);
    auto b = gradient_modulated_sum(hybrid, patch);
    CHECK(a.weights == b.weights);
    REQUIRE(a.weights.size() == 2);
    for (double w : a.weights) CHECK(w > 0.0);

    SegmentationModel<double> mag(
        ModelConfig{.variant = ModelVariant::image_magnitude, .image_levels = 2,
                    .image_base_channels = 2},
        1);
    CHECK_THROWS_AS(gradient_modulated_sum(mag, patch), usage_error);

    // Zeroing every image-stage parameter that reads the bridge detaches all
    // channels: the lesion logit becomes constant and every weight drops to 0.
    SegmentationModel<double> detached(tiny_hybrid_config(), 11);
    for (auto* p : detached.params())
        if (p->name.rfind("image.", 0) == 0)
            std::fill(p->value.begin(), p->value.end(), 0.0);
    auto z = gradient_modulated_sum(detached, patch);
    for (double w : z.weights) CHECK(w == 0.0);
}

TEST_CASE("gradient weights match finite-difference channel sensitivities") {
    SegmentationModel<double> hybrid(tiny_hybrid_config(), 31);

    nn::Tensor<double> patch(1, 2, 4, 8, 8);
    SplitMix64 s(41);
    for (auto& v : patch.data) v = 2.0 * s.next_double() - 1.0;

    auto result = gradient_modulated_sum(hybrid, patch);

    // FD oracle: perturb every component of the bridge tensor, difference
    // the summed lesion logits through the image stage, and rebuild the
    // per-channel mean-|gradient| weights from scratch.
    hybrid.forward(patch, true);
    nn::Tensor<double> bridge = hybrid.bridge_output();
    auto lesion_logit_sum = [&](const nn::Tensor<double>& b) {
        auto logits = hybrid.image_stage_logits(b);
        const size_t sp = logits.spatial();
        double acc = 0.0;
        for (size_t i = 0; i < sp; ++i) acc += logits.sample(0)[sp + i];
        return acc;
    };

    const int K = 2;
    const size_t sp = bridge.spatial();
    const double h = 1e-5;
    std::vector<double> fd_weights(K, 0.0);
    for (int ch = 0; ch < K; ++ch) {
        for (size_t i = 0; i < sp; ++i) {
            double fd_comp[2];
            for (int part = 0; part < 2; ++part) {
                size_t idx = size_t(part == 0 ? ch : K + ch) * sp + i;
                nn::Tensor<double> bp = bridge, bm = bridge;
                bp.data[idx] += h;
                bm.data[idx] -= h;
                fd_comp[part] = (lesion_logit_sum(bp) - lesion_logit_sum(bm)) / (2 * h);
            }
            fd_weights[ch] += std::hypot(fd_comp[0], fd_comp[1]);
        }
        fd_weights[ch] /= double(sp);
    }

    for (int ch = 0; ch < K; ++ch)
        CHECK(std::abs(fd_weights[ch] - result.weights[ch]) <=
              5e-2 * std::max({1e-12, fd_weights[ch], result.weights[ch]}));
}
