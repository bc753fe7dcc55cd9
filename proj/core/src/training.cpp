#include "kseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "kseg/errors.hpp"
#include "kseg/evaluation.hpp"
#include "kseg/nn/optim.hpp"

namespace kseg {

void TrainConfig::validate() const {
    auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in01(dice_weight) || !in01(focal_weight) || !in01(class_weight_background) ||
        !in01(class_weight_lesion) || !in01(positive_patch_fraction) ||
        !in01(augmentation_probability))
        throw validation_error("TrainConfig: weights and probabilities must lie in [0, 1]");
    if (std::abs(dice_weight + focal_weight - 1.0) > 1e-12)
        throw validation_error("TrainConfig: dice_weight + focal_weight must equal 1");
    if (focal_gamma < 0.0) throw validation_error("TrainConfig: focal_gamma must be >= 0");
    if (learning_rate <= 0.0 || lr_min <= 0.0 || lr_min > learning_rate)
        throw validation_error("TrainConfig: require 0 < lr_min <= learning_rate");
    if (max_epochs < 1) throw validation_error("TrainConfig: max_epochs must be >= 1");
    if (batch_size < 1) throw validation_error("TrainConfig: batch_size must be >= 1");
    if (patch_depth < 1 || patch_stride < 1)
        throw validation_error("TrainConfig: patch geometry must be positive");
    if (positive_patient_oversampling < 1)
        throw validation_error("TrainConfig: positive_patient_oversampling must be >= 1");
    if (augmentation_choices.empty())
        throw validation_error("TrainConfig: augmentation_choices must not be empty");
    if (grad_clip_norm <= 0.0) throw validation_error("TrainConfig: grad_clip_norm must be > 0");
}

template <typename T>
DiceFocalResult<T> dice_focal_loss(const nn::Tensor<T>& probs, const LabelBatch& target,
                                   const TrainConfig& cfg) {
    const int N = probs.n(), C = probs.c();
    if (C != 2) throw validation_error("dice_focal_loss: expected 2 classes");
    if (target.n != N || target.d != probs.d() || target.h != probs.h() || target.w != probs.w())
        throw validation_error("dice_focal_loss: probability/target shape mismatch");

    const size_t sp = probs.spatial();
    const size_t voxels = size_t(N) * sp;
    const double eps = cfg.dice_smooth;
    const double w[2] = {cfg.class_weight_background, cfg.class_weight_lesion};
    const double wsum = w[0] + w[1];

    DiceFocalResult<T> out;
    out.grad = nn::Tensor<T>(probs.shape);

    // Soft-Dice per class over the whole batch.
    double inter[2] = {0.0, 0.0}, psum[2] = {0.0, 0.0}, tsum[2] = {0.0, 0.0};
    for (int n = 0; n < N; ++n) {
        const T* pr = probs.sample(n);
        const uint8_t* lb = target.labels.data() + size_t(n) * sp;
        for (size_t i = 0; i < sp; ++i) {
            int cls = lb[i];
            for (int c = 0; c < 2; ++c) {
                double p = pr[size_t(c) * sp + i];
                double t = (cls == c) ? 1.0 : 0.0;
                inter[c] += p * t;
                psum[c] += p;
                tsum[c] += t;
            }
        }
    }
    double dice_sum = 0.0, num[2], den[2];
    for (int c = 0; c < 2; ++c) {
        num[c] = 2.0 * inter[c] + eps;
        den[c] = psum[c] + tsum[c] + eps;
        dice_sum += w[c] / wsum * (num[c] / den[c]);
    }
    out.dice_term = 1.0 - dice_sum;

    // Focal term and the combined gradient.
    double focal = 0.0;
    const double gamma = cfg.focal_gamma;
    const double inv_vox = 1.0 / double(voxels);
    for (int n = 0; n < N; ++n) {
        const T* pr = probs.sample(n);
        T* gr = out.grad.sample(n);
        const uint8_t* lb = target.labels.data() + size_t(n) * sp;
        for (size_t i = 0; i < sp; ++i) {
            int cls = lb[i];
            for (int c = 0; c < 2; ++c) {
                double p = pr[size_t(c) * sp + i];
                double t = (cls == c) ? 1.0 : 0.0;
                // d dice_term / d p = -w_c/wsum * d(num/den)/dp
                double ddice = -(w[c] / wsum) * (2.0 * t * den[c] - num[c]) / (den[c] * den[c]);
                double g = cfg.dice_weight * ddice;
                if (cls == c) {
                    double pc = std::max(p, 1e-12);
                    double one_m = 1.0 - pc;
                    double pow_g = std::pow(one_m, gamma);
                    focal += -w[c] * pow_g * std::log(pc) * inv_vox;
                    double dfocal =
                        w[c] * inv_vox *
                        (gamma * std::pow(one_m, gamma - 1.0) * std::log(pc) - pow_g / pc);
                    g += cfg.focal_weight * dfocal;
                }
                gr[size_t(c) * sp + i] = T(g);
            }
        }
    }
    out.focal_term = focal;
    out.total = cfg.dice_weight * out.dice_term + cfg.focal_weight * out.focal_term;
    return out;
}

template <typename T>
AuxMseResult<T> kspace_mse_aux(const nn::Tensor<T>& pred_kspace, const LabelBatch& target) {
    const int N = pred_kspace.n();
    const int C2 = pred_kspace.c();
    if (C2 % 2 != 0) throw validation_error("kspace_mse_aux: channel count must be even");
    const int C = C2 / 2;
    if (target.n != N || target.d != pred_kspace.d() || target.h != pred_kspace.h() ||
        target.w != pred_kspace.w())
        throw validation_error("kspace_mse_aux: prediction/target shape mismatch");

    const int D = pred_kspace.d(), H = pred_kspace.h(), W = pred_kspace.w();
    const size_t plane = size_t(H) * W;
    const size_t sp = size_t(D) * plane;
    const double inv = 1.0 / double(size_t(N) * sp);

    AuxMseResult<T> out;
    out.grad = nn::Tensor<T>(pred_kspace.shape);

    std::vector<std::complex<T>> onehot(plane), spec(plane);
    for (int n = 0; n < N; ++n) {
        const uint8_t* lb = target.labels.data() + size_t(n) * sp;
        for (int c = 0; c < C; ++c) {
            const T* pre = pred_kspace.sample(n) + size_t(c) * sp;
            const T* pim = pred_kspace.sample(n) + size_t(C + c) * sp;
            T* gre = out.grad.sample(n) + size_t(c) * sp;
            T* gim = out.grad.sample(n) + size_t(C + c) * sp;
            for (int d = 0; d < D; ++d) {
                for (size_t i = 0; i < plane; ++i)
                    onehot[i] = {lb[size_t(d) * plane + i] == c ? T(1) : T(0), T(0)};
                if constexpr (std::is_same_v<T, float>)
                    fft2c_slice_f(onehot.data(), spec.data(), H, W);
                else
                    fft2c_slice_d(onehot.data(), spec.data(), H, W);
                const size_t off = size_t(d) * plane;
                for (size_t i = 0; i < plane; ++i) {
                    double dre = double(pre[off + i]) - spec[i].real();
                    double dim = double(pim[off + i]) - spec[i].imag();
                    out.value += (dre * dre + dim * dim) * inv;
                    gre[off + i] = T(2.0 * dre * inv);
                    gim[off + i] = T(2.0 * dim * inv);
                }
            }
        }
    }
    return out;
}

std::vector<int> window_starts(int depth, int patch_depth, int stride) {
    if (depth < patch_depth)
        throw validation_error("window_starts: volume depth " + std::to_string(depth) +
                               " is below the minimum patch depth " + std::to_string(patch_depth));
    std::vector<int> starts;
    for (int s = 0; s + patch_depth <= depth; s += stride) starts.push_back(s);
    int last = depth - patch_depth;
    if (starts.empty() || starts.back() != last) starts.push_back(last);
    return starts;
}

PatchSampler::PatchSampler(const std::vector<Exam>& cohort, const TrainConfig& cfg, uint64_t seed)
    : positive_fraction_(cfg.positive_patch_fraction), stream_(seed) {
    for (size_t e = 0; e < cohort.size(); ++e) {
        const Exam& exam = cohort[e];
        auto starts = window_starts(exam.lesion_mask.depth, cfg.patch_depth, cfg.patch_stride);
        bool patient_positive = exam.lesion_mask.foreground_count() > 0;
        int multiplicity = patient_positive ? cfg.positive_patient_oversampling : 1;
        for (int start : starts) {
            ++windows_total_;
            bool window_positive = false;
            for (int d = start; d < start + cfg.patch_depth && !window_positive; ++d)
                for (int h = 0; h < exam.lesion_mask.height && !window_positive; ++h)
                    for (int w = 0; w < exam.lesion_mask.width; ++w)
                        if (exam.lesion_mask.at(d, h, w)) {
                            window_positive = true;
                            break;
                        }
            auto& pool = window_positive ? positive_pool_ : negative_pool_;
            for (int m = 0; m < multiplicity; ++m) pool.push_back({int(e), start});
        }
    }
    if (positive_pool_.empty() && negative_pool_.empty())
        throw validation_error("PatchSampler: cohort yields no candidate windows");
}

PatchDraw PatchSampler::next() {
    bool want_positive = stream_.next_double() < positive_fraction_;
    const std::vector<Candidate>* pool;
    if (want_positive)
        pool = !positive_pool_.empty() ? &positive_pool_ : &negative_pool_;
    else
        pool = !negative_pool_.empty() ? &negative_pool_ : &positive_pool_;
    const Candidate& c = (*pool)[stream_.next_below(pool->size())];
    PatchDraw draw;
    draw.exam_index = c.exam_index;
    draw.window_start = c.window_start;
    draw.timepoint = stream_.next_double() < 0.5 ? SubtractionTimepoint::post2
                                                 : SubtractionTimepoint::post1;
    return draw;
}

template <typename T>
bool augment_undersample(nn::Tensor<T>& patch, const TrainConfig& cfg, SplitMix64& stream) {
    if (stream.next_double() >= cfg.augmentation_probability) return false;
    const AccelEntry choice =
        cfg.augmentation_choices[stream.next_below(cfg.augmentation_choices.size())];
    SamplingMask mask =
        random_mask(patch.w(), choice.acceleration, choice.center_fraction, stream.next_u64());
    const size_t sp = patch.spatial();
    const int W = patch.w();
    for (int n = 0; n < patch.n(); ++n)
        for (int c = 0; c < patch.c(); ++c) {
            T* plane = patch.sample(n) + size_t(c) * sp;
            for (size_t i = 0; i < sp; ++i)
                if (!mask.keep[i % W]) plane[i] = T(0);
        }
    return true;
}

template <typename T>
nn::Tensor<T> patch_to_tensor(const ComplexVolume& volume, int start, int depth) {
    if (volume.domain != Domain::kspace)
        throw usage_error("patch_to_tensor: expected a prepared k-space volume");
    if (start < 0 || start + depth > volume.depth)
        throw validation_error("patch_to_tensor: window out of range");
    nn::Tensor<T> t(1, 2, depth, volume.height, volume.width);
    const size_t sp = t.spatial();
    const size_t plane = size_t(volume.height) * volume.width;
    const std::complex<float>* src = volume.data.data() + size_t(start) * plane;
    for (size_t i = 0; i < sp; ++i) {
        t.data[i] = T(src[i].real());
        t.data[sp + i] = T(src[i].imag());
    }
    return t;
}

void copy_label_window(const MaskVolume& mask, int start, int depth, int batch_index,
                       LabelBatch& out) {
    const size_t plane = size_t(mask.height) * mask.width;
    const size_t sp = size_t(depth) * plane;
    std::copy(mask.data.begin() + size_t(start) * plane,
              mask.data.begin() + size_t(start) * plane + sp,
              out.labels.begin() + size_t(batch_index) * sp);
}

namespace {

struct PreparedExam {
    ComplexVolume post2_sub;
    ComplexVolume post1_sub;
    const MaskVolume* mask;
};

} // namespace

TrainResult train_model(SegmentationModel<float>& model, const std::vector<Exam>& train_cohort,
                        const std::vector<Exam>& val_cohort, const TrainConfig& cfg,
                        const StepCallback& on_step) {
    cfg.validate();
    if (train_cohort.empty()) throw validation_error("train_model: empty training cohort");
    {
        std::set<int> train_ids, overlap;
        for (const auto& e : train_cohort) train_ids.insert(e.patient_index);
        for (const auto& e : val_cohort)
            if (train_ids.count(e.patient_index)) overlap.insert(e.patient_index);
        if (!overlap.empty()) {
            std::ostringstream os;
            os << "train_model: training and validation patient sets overlap:";
            for (int id : overlap) os << ' ' << id;
            throw validation_error(os.str());
        }
    }

    std::vector<PreparedExam> prepared;
    prepared.reserve(train_cohort.size());
    for (const auto& exam : train_cohort)
        prepared.push_back({prepare_subtraction_kspace(exam, SubtractionTimepoint::post2),
                            prepare_subtraction_kspace(exam, SubtractionTimepoint::post1),
                            &exam.lesion_mask});

    std::vector<ComplexVolume> val_prepared;
    for (const auto& exam : val_cohort) val_prepared.push_back(prepare_subtraction_kspace(exam));

    PatchSampler sampler(train_cohort, cfg, fnv1a64("train-sampler|s=" + std::to_string(cfg.seed)));
    SplitMix64 aug_stream(fnv1a64("train-augment|s=" + std::to_string(cfg.seed)));

    auto params = model.params();
    nn::AdamW<float> opt(params, cfg.learning_rate, cfg.weight_decay);
    opt.zero_grad();

    EvalConfig val_eval;
    val_eval.patch_depth = cfg.patch_depth;
    val_eval.patch_stride = cfg.patch_stride;

    const int H = train_cohort.front().pre.height;
    const int W = train_cohort.front().pre.width;
    const int steps_per_epoch = std::max(1, (sampler.windows_total() + cfg.batch_size - 1) /
                                                cfg.batch_size);

    TrainResult result;
    std::vector<std::vector<float>> best_params;
    auto snapshot = [&]() {
        best_params.clear();
        for (auto* p : params) best_params.push_back(p->value);
    };
    auto restore = [&]() {
        for (size_t i = 0; i < params.size(); ++i) params[i]->value = best_params[i];
    };

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        double lr = nn::cosine_lr(epoch, cfg.max_epochs, cfg.learning_rate, cfg.lr_min);
        opt.set_lr(lr);

        double epoch_loss = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            nn::Tensor<float> batch(cfg.batch_size, 2, cfg.patch_depth, H, W);
            LabelBatch labels(cfg.batch_size, cfg.patch_depth, H, W);
            for (int b = 0; b < cfg.batch_size; ++b) {
                PatchDraw draw = sampler.next();
                const PreparedExam& pe = prepared[draw.exam_index];
                const ComplexVolume& vol = draw.timepoint == SubtractionTimepoint::post2
                                               ? pe.post2_sub
                                               : pe.post1_sub;
                nn::Tensor<float> patch =
                    patch_to_tensor<float>(vol, draw.window_start, cfg.patch_depth);
                augment_undersample(patch, cfg, aug_stream);
                std::copy(patch.data.begin(), patch.data.end(),
                          batch.data.begin() + size_t(b) * batch.sample_stride());
                copy_label_window(*pe.mask, draw.window_start, cfg.patch_depth, b, labels);
            }

            auto probs = model.forward(batch, true);
            auto loss = dice_focal_loss(probs, labels, cfg);
            double total = loss.total;
            if (model.config().variant == ModelVariant::native_kspace) {
                auto aux = kspace_mse_aux(model.aux_kspace_output(), labels);
                total += cfg.aux_kspace_mse_weight * aux.value;
                for (auto& g : aux.grad.data) g *= float(cfg.aux_kspace_mse_weight);
                model.backward(loss.grad, &aux.grad);
            } else {
                model.backward(loss.grad);
            }
            double post_clip = nn::clip_global_grad_norm(params, cfg.grad_clip_norm);
            opt.step();
            opt.zero_grad();
            epoch_loss += total;
            if (on_step) on_step({epoch, step, total, post_clip});
        }
        epoch_loss /= steps_per_epoch;

        double val_dice = 0.0;
        if (!val_cohort.empty()) {
            int counted = 0;
            for (size_t v = 0; v < val_cohort.size(); ++v) {
                auto pred = sliding_infer(model, val_prepared[v], 1, 1.0,
                                          val_cohort[v].patient_index, val_eval);
                auto d = try_dice_score(pred, val_cohort[v].lesion_mask);
                if (d) {
                    val_dice += *d;
                    ++counted;
                }
            }
            if (counted) val_dice /= counted;
        }

        result.history.push_back({epoch, lr, epoch_loss, val_dice});
        result.epochs_run = epoch + 1;

        if (val_cohort.empty()) continue;
        if (result.best_epoch < 0 || val_dice > result.best_val_dice) {
            result.best_epoch = epoch;
            result.best_val_dice = val_dice;
            snapshot();
        } else if (epoch - result.best_epoch >= cfg.early_stopping_patience) {
            break;
        }
    }
    if (!best_params.empty()) restore();
    return result;
}

std::string history_to_csv(const std::vector<EpochStats>& history) {
    std::ostringstream os;
    os << "epoch,lr,train_loss,val_dice\n";
    for (const auto& row : history) {
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%d,%.9g,%.9g,%.9g\n", row.epoch, row.lr, row.train_loss,
                      row.val_dice);
        os << buf;
    }
    return os.str();
}

template DiceFocalResult<float> dice_focal_loss<float>(const nn::Tensor<float>&, const LabelBatch&,
                                                       const TrainConfig&);
template DiceFocalResult<double> dice_focal_loss<double>(const nn::Tensor<double>&,
                                                         const LabelBatch&, const TrainConfig&);
template AuxMseResult<float> kspace_mse_aux<float>(const nn::Tensor<float>&, const LabelBatch&);
template AuxMseResult<double> kspace_mse_aux<double>(const nn::Tensor<double>&, const LabelBatch&);
template bool augment_undersample<float>(nn::Tensor<float>&, const TrainConfig&, SplitMix64&);
template bool augment_undersample<double>(nn::Tensor<double>&, const TrainConfig&, SplitMix64&);
template nn::Tensor<float> patch_to_tensor<float>(const ComplexVolume&, int, int);
template nn::Tensor<double> patch_to_tensor<double>(const ComplexVolume&, int, int);

} // namespace kseg
