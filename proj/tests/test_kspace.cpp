#include "doctest.h"

#include <array>
#include <cmath>
#include <complex>

#include "kseg/errors.hpp"
#include "kseg/kspace.hpp"
#include "kseg/phantom.hpp"
#include "kseg/sampling.hpp"

using namespace kseg;

namespace {

ComplexVolume random_volume(int d, int h, int w, uint64_t seed, Domain dom = Domain::image) {
    ComplexVolume v(d, h, w, dom);
    SplitMix64 s(seed);
    for (auto& x : v.data)
        x = {float(2.0 * s.next_double() - 1.0), float(2.0 * s.next_double() - 1.0)};
    return v;
}

double max_abs_diff(const ComplexVolume& a, const ComplexVolume& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i)
        m = std::max(m, double(std::abs(a.data[i] - b.data[i])));
    return m;
}

} // namespace

TEST_CASE("fft2c/ifft2c round trip across shapes") {
    const std::array<std::array<int, 3>, 5> shapes = {{{1, 8, 8}, {3, 16, 12}, {2, 5, 7}, {4, 64, 64}, {1, 9, 8}}};
    for (auto [d, h, w] : shapes) {
        auto v = random_volume(d, h, w, 100 + h + w);
        auto rt = ifft2c(fft2c(v));
        CHECK(rt.domain == Domain::image);
        CHECK(max_abs_diff(v, rt) < 1e-6);

        auto k = random_volume(d, h, w, 200 + h + w, Domain::kspace);
        auto ktrip = fft2c(ifft2c(k));
        CHECK(max_abs_diff(k, ktrip) < 1e-6);
    }
}

TEST_CASE("unit impulse at the grid center transforms to a flat spectrum") {
    ComplexVolume v(1, 4, 4, Domain::image);
    v.at(0, 2, 2) = {1.0f, 0.0f};
    auto k = fft2c(v);
    for (const auto& s : k.data) CHECK(std::abs(s) == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("Parseval: energy is preserved") {
    for (uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        auto v = random_volume(3, 24, 20, seed);
        auto k = fft2c(v);
        CHECK(k.energy() == doctest::Approx(v.energy()).epsilon(1e-5));
    }
}

TEST_CASE("linearity of the transform") {
    auto x = random_volume(2, 16, 16, 11);
    auto y = random_volume(2, 16, 16, 12);
    std::complex<float> a{1.3f, -0.2f}, b{-0.7f, 0.9f};

    ComplexVolume combo(2, 16, 16, Domain::image);
    for (size_t i = 0; i < combo.data.size(); ++i)
        combo.data[i] = a * x.data[i] + b * y.data[i];

    auto lhs = fft2c(combo);
    auto fx = fft2c(x), fy = fft2c(y);
    double scale = std::sqrt(lhs.energy());
    for (size_t i = 0; i < lhs.data.size(); ++i) {
        auto rhs = a * fx.data[i] + b * fy.data[i];
        CHECK(std::abs(lhs.data[i] - rhs) < 1e-5 * std::max(1.0, scale));
    }
}

TEST_CASE("real images give conjugate-symmetric k-space") {
    ComplexVolume v(1, 16, 16, Domain::image);
    SplitMix64 s(77);
    for (auto& x : v.data) x = {float(s.next_double()), 0.0f};
    auto k = fft2c(v);

    // Reflection about the centered DC bin: shifted index j pairs with n - j
    // (j = 0, the Nyquist bin, pairs with itself).
    auto reflect = [](int j, int n) { return j == 0 ? 0 : n - j; };
    for (int h = 0; h < 16; ++h)
        for (int w = 0; w < 16; ++w) {
            auto a = k.at(0, h, w);
            auto b = std::conj(k.at(0, reflect(h, 16), reflect(w, 16)));
            CHECK(std::abs(a - b) < 1e-5);
        }
}

TEST_CASE("ifft2c of zeros and constants") {
    ComplexVolume zero(2, 8, 8, Domain::kspace);
    auto img = ifft2c(zero);
    for (const auto& s : img.data) CHECK(std::abs(s) == 0.0f);

    ComplexVolume flat(1, 8, 8, Domain::kspace);
    std::complex<float> c{0.5f, 0.25f};
    for (auto& s : flat.data) s = c;
    auto impulse = ifft2c(flat);
    CHECK(std::abs(impulse.at(0, 4, 4)) == doctest::Approx(std::abs(c) * 8.0).epsilon(1e-5));
    double off = 0.0;
    for (int h = 0; h < 8; ++h)
        for (int w = 0; w < 8; ++w)
            if (h != 4 || w != 4) off = std::max(off, double(std::abs(impulse.at(0, h, w))));
    CHECK(off < 1e-6);
}

TEST_CASE("domain tags are enforced") {
    auto img = random_volume(1, 8, 8, 5);
    CHECK_THROWS_AS(ifft2c(img), usage_error);
    auto k = fft2c(img);
    CHECK_THROWS_AS(fft2c(k), usage_error);
}

TEST_CASE("rms_normalize scales all timepoints by the pre-contrast RMS") {
    auto pre = random_volume(2, 16, 16, 21, Domain::kspace);
    auto post = random_volume(2, 16, 16, 22, Domain::kspace);
    auto out = rms_normalize({pre, post});

    double rms = std::sqrt(out.volumes[0].energy() / double(out.volumes[0].size()));
    CHECK(rms == doctest::Approx(1.0).epsilon(1e-6));

    // Scale invariance: multiplying inputs by 10 leaves outputs unchanged.
    auto pre10 = pre, post10 = post;
    for (auto& v : pre10.data) v *= 10.0f;
    for (auto& v : post10.data) v *= 10.0f;
    auto out10 = rms_normalize({pre10, post10});
    CHECK(out10.scale == doctest::Approx(out.scale * 10.0).epsilon(1e-6));
    CHECK(max_abs_diff(out10.volumes[1], out.volumes[1]) < 1e-5);
}

TEST_CASE("rms_normalize with constant-magnitude pre-contrast") {
    ComplexVolume pre(1, 4, 4, Domain::kspace);
    for (auto& v : pre.data) v = {0.0f, 2.0f}; // |v| = 2 everywhere
    auto out = rms_normalize({pre});
    CHECK(out.scale == doctest::Approx(2.0));
    for (const auto& v : out.volumes[0].data) CHECK(std::abs(v) == doctest::Approx(1.0).epsilon(1e-6));

    ComplexVolume zero(1, 4, 4, Domain::kspace);
    CHECK_THROWS_AS(rms_normalize({zero}), degenerate_input_error);
}

TEST_CASE("temporal subtraction commutes with the transform") {
    PhantomSpec spec;
    spec.depth = 8;
    auto exam = generate_exam(spec, 0, 42);

    auto img_diff = temporal_subtract(exam, Domain::image);
    auto k_diff = temporal_subtract(exam, Domain::kspace);
    auto lifted = fft2c(img_diff);
    double scale = std::sqrt(std::max(1.0, k_diff.energy()));
    CHECK(max_abs_diff(lifted, k_diff) < 1e-5 * scale);

    // post2 == pre gives the zero volume.
    Exam same = exam;
    same.post2 = same.pre;
    auto zero = temporal_subtract(same, Domain::image);
    CHECK(zero.energy() == 0.0);

    // The augmentation pair is selectable.
    auto aug = temporal_subtract(exam, Domain::image, SubtractionTimepoint::post1);
    CHECK(max_abs_diff(aug, img_diff) > 1e-6);
}

TEST_CASE("prepare_subtraction_kspace normalizes by the pre-contrast RMS") {
    PhantomSpec spec;
    spec.depth = 8;
    auto exam = generate_exam(spec, 1, 7);
    auto k = prepare_subtraction_kspace(exam);
    CHECK(k.domain == Domain::kspace);
    CHECK(k.finite());

    // Oracle: fft2c the timepoints, divide by pre RMS, subtract.
    auto pre_k = fft2c(exam.pre);
    auto post_k = fft2c(exam.post2);
    double rms = std::sqrt(pre_k.energy() / double(pre_k.size()));
    ComplexVolume expect(pre_k.depth, pre_k.height, pre_k.width, Domain::kspace);
    for (size_t i = 0; i < expect.data.size(); ++i)
        expect.data[i] = (post_k.data[i] - pre_k.data[i]) / float(rms);
    CHECK(max_abs_diff(k, expect) < 1e-5);
}

TEST_CASE("pad_crop_taper identity when target equals the current shape") {
    auto v = random_volume(2, 16, 16, 31);
    auto out = pad_crop_taper(v, 16, 16, 4);
    CHECK(out.data == v.data);
}

TEST_CASE("padding fills corners with exact zeros") {
    auto v = random_volume(1, 64, 64, 32);
    auto out = pad_crop_taper(v, 96, 96, 8);
    CHECK(out.height == 96);
    CHECK(out.width == 96);
    CHECK(std::abs(out.at(0, 0, 0)) == 0.0f);
    CHECK(std::abs(out.at(0, 95, 95)) == 0.0f);
    CHECK(std::abs(out.at(0, 0, 95)) == 0.0f);
    CHECK(std::abs(out.at(0, 10, 10)) == 0.0f); // still inside the 16-wide pad
}

TEST_CASE("crop then pad back preserves the untapered interior") {
    // Index-bookkeeping oracle: crop 96 -> 64 takes content starting at 16;
    // padding back re-places it at 16, ramping only the outer taper voxels.
    const int taper = 4;
    auto v = random_volume(2, 96, 96, 33);
    auto cropped = pad_crop_taper(v, 64, 64, taper);
    CHECK(cropped.height == 64);
    auto back = pad_crop_taper(cropped, 96, 96, taper);

    for (int d = 0; d < 2; ++d)
        for (int sh = taper; sh < 64 - taper; ++sh)
            for (int sw = taper; sw < 64 - taper; ++sw)
                CHECK(back.at(d, 16 + sh, 16 + sw) == v.at(d, 16 + sh, 16 + sw));
}

TEST_CASE("cropping alone is exact") {
    auto v = random_volume(1, 32, 32, 34);
    auto out = pad_crop_taper(v, 16, 16, 4);
    for (int h = 0; h < 16; ++h)
        for (int w = 0; w < 16; ++w)
            CHECK(out.at(0, h, w) == v.at(0, 8 + h, 8 + w));
}

TEST_CASE("pad_crop_taper validation") {
    auto v = random_volume(1, 16, 16, 35);
    CHECK_THROWS_AS(pad_crop_taper(v, 7, 16, 4), validation_error);   // target <= 2*taper
    CHECK_THROWS_AS(pad_crop_taper(v, 20, 20, 8), validation_error);  // taper > pad amount
    CHECK_NOTHROW(pad_crop_taper(v, 32, 32, 8));
}
