#include "doctest.h"

#include <cmath>

#include "kseg/errors.hpp"
#include "kseg/kspace.hpp"
#include "kseg/models.hpp"
#include "kseg/sampling.hpp"

using namespace kseg;
using nn::Tensor;

namespace {

ModelConfig tiny_config(ModelVariant v) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.image_levels = 2;
    cfg.kspace_levels = 1;
    cfg.image_base_channels = 2;
    cfg.kspace_hidden_factor = 2;
    cfg.kspace_feature_channels = 2;
    return cfg;
}

ModelConfig desk_config(ModelVariant v) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.desk_scale_factor = 4;
    return cfg;
}

Tensor<float> random_input(int n, int d, int h, int w, uint64_t seed) {
    Tensor<float> t(n, 2, d, h, w);
    SplitMix64 s(seed);
    for (auto& v : t.data) v = float(2.0 * s.next_double() - 1.0);
    return t;
}

} // namespace

TEST_CASE("shape and softmax contracts hold for every variant") {
    auto x = random_input(2, 24, 32, 32, 1);
    for (ModelVariant v : all_variants()) {
        SegmentationModel<float> model(desk_config(v), 42);
        auto probs = model.forward(x, false);
        CHECK(probs.shape == nn::Shape5{2, 2, 24, 32, 32});
        const size_t sp = probs.spatial();
        for (int n = 0; n < 2; ++n)
            for (size_t i = 0; i < sp; i += 97) {
                float sum = probs.sample(n)[i] + probs.sample(n)[sp + i];
                CHECK(std::abs(sum - 1.0f) < 1e-5f);
            }
    }
}

TEST_CASE("forward is deterministic in evaluation mode") {
    auto x = random_input(1, 8, 16, 16, 2);
    SegmentationModel<float> model(tiny_config(ModelVariant::hybrid_kspace_to_image), 7);
    auto a = model.forward(x, false);
    auto b = model.forward(x, false);
    CHECK(a.data == b.data);
}

TEST_CASE("indivisible shapes raise a padding error naming the target") {
    SegmentationModel<float> model(desk_config(ModelVariant::image_magnitude), 3);
    auto x = random_input(1, 20, 32, 32, 3);
    CHECK_THROWS_WITH_AS(model.forward(x, false),
                         doctest::Contains("pad depth to 24"), validation_error);
}

TEST_CASE("magnitude variant is invariant to a global phase rotation") {
    auto x = random_input(1, 8, 16, 16, 4);
    SegmentationModel<float> mag(tiny_config(ModelVariant::image_magnitude), 11);
    auto base = mag.forward(x, false);

    for (double phi : {0.7, M_PI / 2}) {
        Tensor<float> rotated(x.shape);
        const size_t sp = x.spatial();
        float c = float(std::cos(phi)), s = float(std::sin(phi));
        for (size_t i = 0; i < sp; ++i) {
            float re = x.sample(0)[i], im = x.sample(0)[sp + i];
            rotated.sample(0)[i] = c * re - s * im;
            rotated.sample(0)[sp + i] = s * re + c * im;
        }
        auto out = mag.forward(rotated, false);
        double max_diff = 0.0;
        for (size_t i = 0; i < out.numel(); ++i)
            max_diff = std::max(max_diff, double(std::abs(out.data[i] - base.data[i])));
        CHECK(max_diff < 1e-4);
    }
}

TEST_CASE("complex variant is not phase invariant") {
    auto x = random_input(1, 8, 16, 16, 5);
    SegmentationModel<float> cplx(tiny_config(ModelVariant::image_complex), 12);
    auto base = cplx.forward(x, false);

    // Counterexample at phi = pi/2: (re, im) -> (-im, re).
    Tensor<float> rotated(x.shape);
    const size_t sp = x.spatial();
    for (size_t i = 0; i < sp; ++i) {
        rotated.sample(0)[i] = -x.sample(0)[sp + i];
        rotated.sample(0)[sp + i] = x.sample(0)[i];
    }
    auto out = cplx.forward(rotated, false);
    double max_diff = 0.0;
    for (size_t i = 0; i < out.numel(); ++i)
        max_diff = std::max(max_diff, double(std::abs(out.data[i] - base.data[i])));
    CHECK(max_diff > 1e-3);
}

TEST_CASE("gradient flows through the fixed bridge (tiny double hybrid)") {
    SegmentationModel<double> model(tiny_config(ModelVariant::hybrid_kspace_to_image), 21);

    Tensor<double> x(1, 2, 4, 8, 8);
    SplitMix64 s(31);
    for (auto& v : x.data) v = 2.0 * s.next_double() - 1.0;

    Tensor<double> r(model.forward(x, false).shape);
    for (auto& v : r.data) v = 2.0 * s.next_double() - 1.0;

    auto probe = [&]() {
        auto y = model.forward(x, false);
        double acc = 0.0;
        for (size_t i = 0; i < y.numel(); ++i) acc += r.data[i] * y.data[i];
        return acc;
    };

    model.zero_grad();
    model.forward(x, true);
    model.backward(r);

    auto params = model.params();
    SplitMix64 pick(41);
    const double h = 1e-4; // large enough to keep FD roundoff below the tolerance
    int checked = 0;
    while (checked < 60) {
        auto* p = params[pick.next_below(params.size())];
        size_t idx = pick.next_below(p->numel());
        double orig = p->value[idx];
        p->value[idx] = orig + h;
        double lp = probe();
        p->value[idx] = orig - h;
        double lm = probe();
        p->value[idx] = orig;
        double fd = (lp - lm) / (2 * h);
        double scale = std::max({1e-6, std::abs(fd), std::abs(p->grad[idx])});
        CHECK(std::abs(p->grad[idx] - fd) / scale < 1e-3);
        ++checked;
    }
}

TEST_CASE("bridge has no trainable parameters and stage counts add up") {
    SegmentationModel<float> hybrid(desk_config(ModelVariant::hybrid_kspace_to_image), 5);
    // Stage sums: rebuild the stages standalone and compare.
    ModelConfig cfg = desk_config(ModelVariant::hybrid_kspace_to_image);

    nn::UNetSpec kspec;
    kspec.in_channels = 2;
    kspec.out_channels = 2 * cfg.kspace_feature_channels;
    kspec.channels = nn::doubling_channels(cfg.kspace_base(), cfg.kspace_levels);
    kspec.level_stride = {2, 1, 1};
    kspec.up_kernel = {3, 1, 1};
    SplitMix64 s1(1);
    auto kstage = nn::build_unet<float>(kspec, s1, "k");
    std::vector<nn::Param<float>*> kp;
    kstage->collect_params(kp);
    size_t k_count = 0;
    for (auto* p : kp) k_count += p->numel();

    nn::UNetSpec ispec;
    ispec.in_channels = 2 * cfg.kspace_feature_channels;
    ispec.out_channels = cfg.num_classes;
    ispec.channels = nn::doubling_channels(cfg.hybrid_image_base(), cfg.image_levels);
    SplitMix64 s2(2);
    auto istage = nn::build_unet<float>(ispec, s2, "i");
    std::vector<nn::Param<float>*> ip;
    istage->collect_params(ip);
    size_t i_count = 0;
    for (auto* p : ip) i_count += p->numel();

    CHECK(hybrid.parameter_count() == k_count + i_count);
}

TEST_CASE("paper-scale parameter counts match the published budgets") {
    const nn::Shape5 input{1, 2, 24, 320, 320};

    SegmentationModel<float> mag(ModelConfig{.variant = ModelVariant::image_magnitude}, 1);
    auto mag_report = mag.complexity(input);
    CHECK(double(mag_report.parameter_count) > 2.67e6 * 0.85);
    CHECK(double(mag_report.parameter_count) < 2.67e6 * 1.15);

    SegmentationModel<float> cplx(ModelConfig{.variant = ModelVariant::image_complex}, 1);
    auto cplx_report = cplx.complexity(input);
    CHECK(double(cplx_report.parameter_count) > 2.67e6 * 0.85);
    CHECK(double(cplx_report.parameter_count) < 2.67e6 * 1.15);

    SegmentationModel<float> native(ModelConfig{.variant = ModelVariant::native_kspace}, 1);
    auto native_report = native.complexity(input);
    CHECK(double(native_report.parameter_count) > 2.67e6 * 0.85);
    CHECK(double(native_report.parameter_count) < 2.67e6 * 1.15);

    SegmentationModel<float> hybrid(ModelConfig{.variant = ModelVariant::hybrid_kspace_to_image}, 1);
    auto hybrid_report = hybrid.complexity(input);
    CHECK(double(hybrid_report.parameter_count) > 2.25e6 * 0.85);
    CHECK(double(hybrid_report.parameter_count) < 2.25e6 * 1.15);

    double ratio = double(hybrid_report.mac_count) / double(mag_report.mac_count);
    CHECK(ratio >= 6.0);
    CHECK(ratio <= 12.0);
}

TEST_CASE("magnitude model commutes with in-plane circular translation") {
    // A circular image translation is a phase ramp in k-space; on the interior
    // (away from zero-padding border effects) the probability maps should
    // translate along. Translation by 8 respects every stride level.
    const int D = 8, H = 64, W = 64, shift = 8;
    SegmentationModel<float> model(desk_config(ModelVariant::image_magnitude), 77);

    ComplexVolume img(D, H, W, Domain::image);
    SplitMix64 s(55);
    for (auto& v : img.data) v = {float(s.next_double()), float(0.3 * s.next_double())};
    auto k = fft2c(img);

    ComplexVolume img_shift(D, H, W, Domain::image);
    for (int d = 0; d < D; ++d)
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x)
                img_shift.at(d, y, x) = img.at(d, (y + H - shift) % H, (x + W - shift) % W);
    auto k_shift = fft2c(img_shift);

    auto to_tensor = [&](const ComplexVolume& vol) {
        Tensor<float> t(1, 2, D, H, W);
        for (size_t i = 0; i < vol.data.size(); ++i) {
            t.data[i] = vol.data[i].real();
            t.data[i + vol.data.size()] = vol.data[i].imag();
        }
        return t;
    };

    auto p0 = model.forward(to_tensor(k), false);
    auto p1 = model.forward(to_tensor(k_shift), false);

    const int margin = 24;
    int considered = 0, agree = 0;
    for (int d = 0; d < D; ++d)
        for (int y = margin; y < H - margin; ++y)
            for (int x = margin; x < W - margin; ++x) {
                float ref = p0.at(0, 1, d, (y + H - shift) % H, (x + W - shift) % W);
                if (std::abs(ref - 0.5f) < 0.05f) continue; // skip near-ties
                bool fg_ref = ref > 0.5f;
                bool fg_new = p1.at(0, 1, d, y, x) > 0.5f;
                ++considered;
                agree += (fg_ref == fg_new);
            }
    REQUIRE(considered > 100);
    CHECK(double(agree) / considered > 0.97);
}

TEST_CASE("clone reproduces forward outputs") {
    SegmentationModel<float> model(tiny_config(ModelVariant::native_kspace), 99);
    auto x = random_input(1, 8, 16, 16, 6);
    auto expected = model.forward(x, false);
    auto copy = model.clone();
    auto got = copy.forward(x, false);
    CHECK(got.data == expected.data);
}

TEST_CASE("aux and bridge accessors enforce the variant") {
    SegmentationModel<float> mag(tiny_config(ModelVariant::image_magnitude), 1);
    CHECK_THROWS_AS(mag.aux_kspace_output(), usage_error);
    CHECK_THROWS_AS(mag.bridge_output(), usage_error);

    SegmentationModel<float> native(tiny_config(ModelVariant::native_kspace), 1);
    auto x = random_input(1, 8, 16, 16, 7);
    native.forward(x, true);
    CHECK(native.aux_kspace_output().shape == nn::Shape5{1, 4, 8, 16, 16});
}
