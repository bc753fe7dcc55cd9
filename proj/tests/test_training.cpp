#include "doctest.h"

#include <cmath>

#include "kseg/errors.hpp"
#include "kseg/evaluation.hpp"
#include "kseg/training.hpp"

using namespace kseg;
using nn::Tensor;

namespace {

// A cohort where only the mask geometry matters (sampler tests).
Exam mask_only_exam(int patient, int depth, bool lesion_in_back_half) {
    Exam e;
    e.patient_index = patient;
    e.lesion_mask = MaskVolume(depth, 8, 8);
    if (lesion_in_back_half)
        for (int d = depth - 10; d < depth - 4; ++d)
            for (int h = 2; h < 5; ++h)
                for (int w = 2; w < 5; ++w) e.lesion_mask.at(d, h, w) = 1;
    return e;
}

PhantomSpec tiny_phantom_spec() {
    PhantomSpec spec;
    spec.depth = 16;
    spec.height = 16;
    spec.width = 16;
    spec.lesion_count_min = spec.lesion_count_max = 1;
    spec.lesion_radius_min = 2.0;
    spec.lesion_radius_max = 3.0;
    return spec;
}

ModelConfig tiny_model_config(ModelVariant v) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.image_levels = 3;
    cfg.kspace_levels = 2;
    cfg.image_base_channels = 2;
    cfg.kspace_hidden_factor = 2;
    cfg.kspace_feature_channels = 2;
    return cfg;
}

TrainConfig tiny_train_config() {
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.patch_depth = 8;
    cfg.patch_stride = 8;
    cfg.max_epochs = 2;
    cfg.early_stopping_patience = 10;
    cfg.seed = 7;
    return cfg;
}

} // namespace

TEST_CASE("perfect prediction gives a near-zero loss") {
    TrainConfig cfg;
    LabelBatch target(1, 2, 4, 4);
    for (int d = 0; d < 2; ++d) target.at(0, d, 1, 1) = 1;
    Tensor<double> probs(1, 2, 2, 4, 4);
    const size_t sp = probs.spatial();
    for (size_t i = 0; i < sp; ++i) {
        bool fg = target.labels[i] == 1;
        probs.data[i] = fg ? 0.0 : 1.0;
        probs.data[sp + i] = fg ? 1.0 : 0.0;
    }
    auto loss = dice_focal_loss(probs, target, cfg);
    CHECK(loss.total < 1e-3);
}

TEST_CASE("uniform probabilities on a single-class target match the closed form") {
    TrainConfig cfg;
    const int N = 1, D = 2, H = 4, W = 4;
    const double vox = D * H * W;
    LabelBatch target(N, D, H, W); // all background
    Tensor<double> probs(N, 2, D, H, W);
    for (auto& p : probs.data) p = 0.5;

    auto loss = dice_focal_loss(probs, target, cfg);

    const double eps = cfg.dice_smooth;
    double d_bg = (2 * 0.5 * vox + eps) / (0.5 * vox + vox + eps);
    double d_fg = (0.0 + eps) / (0.5 * vox + 0.0 + eps);
    double dice_term = 1.0 - (0.05 * d_bg + 0.95 * d_fg);
    double focal_term = -0.05 * std::pow(0.5, 1.5) * std::log(0.5);

    CHECK(loss.dice_term == doctest::Approx(dice_term).epsilon(1e-9));
    CHECK(loss.focal_term == doctest::Approx(focal_term).epsilon(1e-9));
    CHECK(loss.total == doctest::Approx(0.7 * dice_term + 0.3 * focal_term).epsilon(1e-9));
}

TEST_CASE("loss decomposition is exact") {
    TrainConfig cfg;
    SplitMix64 s(3);
    LabelBatch target(2, 4, 6, 6);
    for (auto& l : target.labels) l = s.next_double() < 0.2 ? 1 : 0;
    Tensor<double> probs(2, 2, 4, 6, 6);
    const size_t sp = probs.spatial();
    for (int n = 0; n < 2; ++n)
        for (size_t i = 0; i < sp; ++i) {
            double p = 0.05 + 0.9 * s.next_double();
            probs.sample(n)[i] = 1.0 - p;
            probs.sample(n)[sp + i] = p;
        }
    auto loss = dice_focal_loss(probs, target, cfg);
    CHECK(std::abs(loss.total - (0.7 * loss.dice_term + 0.3 * loss.focal_term)) < 1e-7);
    CHECK(loss.total >= 0.0);
}

TEST_CASE("loss decreases monotonically from uniform to one-hot") {
    TrainConfig cfg;
    SplitMix64 s(11);
    LabelBatch target(1, 4, 8, 8);
    for (auto& l : target.labels) l = s.next_double() < 0.3 ? 1 : 0;

    double prev = 1e9;
    for (int step = 0; step <= 100; ++step) {
        double t = step / 100.0;
        Tensor<double> probs(1, 2, 4, 8, 8);
        const size_t sp = probs.spatial();
        for (size_t i = 0; i < sp; ++i) {
            double fg = target.labels[i] == 1 ? 1.0 : 0.0;
            probs.data[sp + i] = (1 - t) * 0.5 + t * fg;
            probs.data[i] = 1.0 - probs.data[sp + i];
        }
        double val = dice_focal_loss(probs, target, cfg).total;
        CHECK(val < prev + 1e-12);
        prev = val;
    }
}

TEST_CASE("dice focal gradient matches finite differences") {
    TrainConfig cfg;
    SplitMix64 s(17);
    LabelBatch target(1, 2, 4, 4);
    for (auto& l : target.labels) l = s.next_double() < 0.4 ? 1 : 0;
    Tensor<double> probs(1, 2, 2, 4, 4);
    const size_t sp = probs.spatial();
    for (size_t i = 0; i < sp; ++i) {
        double p = 0.1 + 0.8 * s.next_double();
        probs.data[i] = 1.0 - p;
        probs.data[sp + i] = p;
    }
    auto loss = dice_focal_loss(probs, target, cfg);
    const double h = 1e-7;
    for (size_t idx = 0; idx < probs.numel(); idx += 7) {
        Tensor<double> pp = probs, pm = probs;
        pp.data[idx] += h;
        pm.data[idx] -= h;
        double fd = (dice_focal_loss(pp, target, cfg).total -
                     dice_focal_loss(pm, target, cfg).total) /
                    (2 * h);
        CHECK(loss.grad.data[idx] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("auxiliary k-space MSE identities") {
    LabelBatch target(1, 2, 8, 8);
    SplitMix64 s(23);
    for (auto& l : target.labels) l = s.next_double() < 0.3 ? 1 : 0;

    // Predicted exactly the transform of the one-hot target: zero loss.
    Tensor<double> exact(1, 4, 2, 8, 8);
    const size_t plane = 64, sp = 2 * plane;
    std::vector<std::complex<double>> onehot(plane), spec(plane);
    for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 2; ++d) {
            for (size_t i = 0; i < plane; ++i)
                onehot[i] = {target.labels[size_t(d) * plane + i] == c ? 1.0 : 0.0, 0.0};
            fft2c_slice_d(onehot.data(), spec.data(), 8, 8);
            for (size_t i = 0; i < plane; ++i) {
                exact.data[size_t(c) * sp + size_t(d) * plane + i] = spec[i].real();
                exact.data[size_t(2 + c) * sp + size_t(d) * plane + i] = spec[i].imag();
            }
        }
    CHECK(kspace_mse_aux(exact, target).value < 1e-20);

    // Zero prediction: Parseval turns the loss into the mean one-hot energy
    // per voxel, which is exactly 1.
    Tensor<double> zero(1, 4, 2, 8, 8);
    CHECK(kspace_mse_aux(zero, target).value == doctest::Approx(1.0).epsilon(1e-9));

    // Doubling the residual quadruples the loss.
    Tensor<double> twice(1, 4, 2, 8, 8);
    for (size_t i = 0; i < twice.numel(); ++i)
        twice.data[i] = exact.data[i] + 2.0 * (zero.data[i] - exact.data[i]);
    double base = kspace_mse_aux(zero, target).value;
    CHECK(kspace_mse_aux(twice, target).value == doctest::Approx(4.0 * base).epsilon(1e-9));
}

TEST_CASE("auxiliary MSE gradient matches finite differences") {
    LabelBatch target(1, 2, 4, 4);
    SplitMix64 s(29);
    for (auto& l : target.labels) l = s.next_double() < 0.5 ? 1 : 0;
    Tensor<double> pred(1, 4, 2, 4, 4);
    for (auto& v : pred.data) v = 2.0 * s.next_double() - 1.0;

    auto res = kspace_mse_aux(pred, target);
    const double h = 1e-6;
    for (size_t idx = 0; idx < pred.numel(); idx += 5) {
        Tensor<double> pp = pred, pm = pred;
        pp.data[idx] += h;
        pm.data[idx] -= h;
        double fd = (kspace_mse_aux(pp, target).value - kspace_mse_aux(pm, target).value) / (2 * h);
        CHECK(res.grad.data[idx] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("native total loss gradient (with weighted aux term) matches finite differences") {
    SegmentationModel<double> model(tiny_model_config(ModelVariant::native_kspace), 31);
    TrainConfig cfg;

    SplitMix64 s(37);
    Tensor<double> x(1, 2, 8, 8, 8);
    for (auto& v : x.data) v = 2.0 * s.next_double() - 1.0;
    LabelBatch target(1, 8, 8, 8);
    for (auto& l : target.labels) l = s.next_double() < 0.3 ? 1 : 0;

    auto total_loss = [&]() {
        auto probs = model.forward(x, true);
        auto df = dice_focal_loss(probs, target, cfg);
        auto aux = kspace_mse_aux(model.aux_kspace_output(), target);
        return df.total + cfg.aux_kspace_mse_weight * aux.value;
    };

    model.zero_grad();
    {
        auto probs = model.forward(x, true);
        auto df = dice_focal_loss(probs, target, cfg);
        auto aux = kspace_mse_aux(model.aux_kspace_output(), target);
        for (auto& g : aux.grad.data) g *= cfg.aux_kspace_mse_weight;
        model.backward(df.grad, &aux.grad);
    }

    auto params = model.params();
    SplitMix64 pick(41);
    // The focal term's third derivative is large near saturated
    // probabilities, so keep the step small to bound FD truncation error.
    const double h = 1e-6;
    for (int i = 0; i < 50; ++i) {
        auto* p = params[pick.next_below(params.size())];
        size_t idx = pick.next_below(p->numel());
        double orig = p->value[idx];
        p->value[idx] = orig + h;
        double lp = total_loss();
        p->value[idx] = orig - h;
        double lm = total_loss();
        p->value[idx] = orig;
        double fd = (lp - lm) / (2 * h);
        double scale = std::max({1e-5, std::abs(fd), std::abs(p->grad[idx])});
        CHECK(std::abs(p->grad[idx] - fd) / scale < 1e-3);
    }
}

TEST_CASE("window starts cover the volume with a clamped final window") {
    CHECK(window_starts(40, 24, 16) == std::vector<int>{0, 16});
    CHECK(window_starts(32, 24, 16) == std::vector<int>{0, 8});
    CHECK(window_starts(24, 24, 16) == std::vector<int>{0});
    CHECK(window_starts(56, 24, 16) == std::vector<int>{0, 16, 32});
    CHECK_THROWS_WITH_AS(window_starts(20, 24, 16), doctest::Contains("minimum patch depth 24"),
                         validation_error);
}

TEST_CASE("patch sampler hits the positive-fraction target on a mixed cohort") {
    std::vector<Exam> cohort;
    for (int p = 0; p < 4; ++p) cohort.push_back(mask_only_exam(p, 48, p % 2 == 0));
    TrainConfig cfg;
    cfg.patch_depth = 24;
    cfg.patch_stride = 16;
    PatchSampler sampler(cohort, cfg, 2024);
    REQUIRE(sampler.has_positive());
    REQUIRE(sampler.has_negative());

    int positive = 0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        PatchDraw d = sampler.next();
        const Exam& e = cohort[d.exam_index];
        bool pos = false;
        for (int z = d.window_start; z < d.window_start + cfg.patch_depth && !pos; ++z)
            for (int h = 0; h < 8 && !pos; ++h)
                for (int w = 0; w < 8; ++w)
                    if (e.lesion_mask.at(z, h, w)) {
                        pos = true;
                        break;
                    }
        positive += pos;
    }
    double frac = positive / double(draws);
    CHECK(frac > 0.45);
    CHECK(frac < 0.55);
}

TEST_CASE("patch sampler degrades to uniform on an all-negative cohort") {
    std::vector<Exam> cohort = {mask_only_exam(0, 48, false), mask_only_exam(1, 48, false)};
    TrainConfig cfg;
    cfg.patch_depth = 24;
    cfg.patch_stride = 16;
    PatchSampler sampler(cohort, cfg, 5);
    CHECK(!sampler.has_positive());
    for (int i = 0; i < 100; ++i) CHECK_NOTHROW(sampler.next());
}

TEST_CASE("undersampling augmentation honors probability and center columns") {
    TrainConfig cfg;
    SplitMix64 stream(91);

    Tensor<float> patch(1, 2, 4, 8, 32);
    for (auto& v : patch.data) v = 1.0f;

    cfg.augmentation_probability = 0.0;
    auto copy = patch;
    CHECK(!augment_undersample(copy, cfg, stream));
    CHECK(copy.data == patch.data);

    cfg.augmentation_probability = 1.0;
    cfg.augmentation_choices = {{2, 0.25}};
    auto masked = patch;
    CHECK(augment_undersample(masked, cfg, stream));
    // round(0.25 * 32) = 8 central columns intact in every slice and channel.
    int n_low = 8, pad = (32 - n_low + 1) / 2;
    for (int c = 0; c < 2; ++c)
        for (int d = 0; d < 4; ++d)
            for (int h = 0; h < 8; ++h)
                for (int w = pad; w < pad + n_low; ++w)
                    CHECK(masked.at(0, c, d, h, w) == 1.0f);

    cfg.augmentation_probability = 0.3;
    cfg.augmentation_choices = {{2, 0.04}, {4, 0.08}};
    int applied = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        auto t = patch;
        applied += augment_undersample(t, cfg, stream);
    }
    double rate = applied / double(trials);
    CHECK(rate > 0.27);
    CHECK(rate < 0.33);
}

TEST_CASE("train loop: clipping bound, determinism, history, early-stopping plumbing") {
    PhantomSpec spec = tiny_phantom_spec();
    auto train_cohort = generate_cohort(spec, 3, 404);
    std::vector<Exam> val_cohort = {generate_exam(spec, 7, 505)};
    val_cohort[0].patient_index = 7;

    auto run = [&](std::vector<double>* losses, std::vector<double>* norms) {
        SegmentationModel<float> model(tiny_model_config(ModelVariant::image_magnitude), 11);
        TrainConfig cfg = tiny_train_config();
        auto result = train_model(model, train_cohort, val_cohort, cfg,
                                  [&](const StepInfo& info) {
                                      if (losses) losses->push_back(info.loss);
                                      if (norms) norms->push_back(info.grad_norm_postclip);
                                  });
        return result;
    };

    std::vector<double> loss_a, norm_a, loss_b;
    auto result = run(&loss_a, &norm_a);
    run(&loss_b, nullptr);

    REQUIRE(!loss_a.empty());
    CHECK(loss_a == loss_b); // bit-identical loss curves across runs
    for (double n : norm_a) CHECK(n <= 1.0 + 1e-6);

    CHECK(result.history.size() == size_t(result.epochs_run));
    CHECK(result.history[0].lr == doctest::Approx(3e-4));
    CHECK(result.best_epoch >= 0);

    auto csv = history_to_csv(result.history);
    CHECK(csv.rfind("epoch,lr,train_loss,val_dice\n", 0) == 0);
}

TEST_CASE("training rejects overlapping patient sets") {
    PhantomSpec spec = tiny_phantom_spec();
    auto cohort = generate_cohort(spec, 2, 17);
    SegmentationModel<float> model(tiny_model_config(ModelVariant::image_magnitude), 1);
    TrainConfig cfg = tiny_train_config();
    CHECK_THROWS_AS(train_model(model, cohort, cohort, cfg), validation_error);
}

TEST_CASE("train config invariants are validated") {
    TrainConfig cfg;
    cfg.dice_weight = 0.8; // breaks dice + focal = 1
    CHECK_THROWS_AS(cfg.validate(), validation_error);
    cfg = TrainConfig{};
    cfg.augmentation_probability = 1.5;
    CHECK_THROWS_AS(cfg.validate(), validation_error);
    CHECK_NOTHROW(TrainConfig{}.validate());
}
