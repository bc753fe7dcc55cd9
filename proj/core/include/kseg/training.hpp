#pragma once

#include <functional>
#include <vector>

#include "kseg/kspace.hpp"
#include "kseg/models.hpp"
#include "kseg/phantom.hpp"
#include "kseg/sampling.hpp"

namespace kseg {

struct TrainConfig {
    double dice_weight = 0.7;
    double focal_weight = 0.3;
    double focal_gamma = 1.5;
    double class_weight_background = 0.05;
    double class_weight_lesion = 0.95;
    double aux_kspace_mse_weight = 0.5; // native variant only
    double learning_rate = 3e-4;
    double lr_min = 1e-6;
    int max_epochs = 60;
    double grad_clip_norm = 1.0;
    int batch_size = 4;
    int patch_depth = 24;
    int patch_stride = 16;
    double positive_patch_fraction = 0.5;
    int positive_patient_oversampling = 2;
    double augmentation_probability = 0.3;
    std::vector<AccelEntry> augmentation_choices = {{2, 0.04}, {4, 0.08}};
    int early_stopping_patience = 10;
    double weight_decay = 1e-2;
    double dice_smooth = 1e-5;
    uint64_t seed = 0;

    void validate() const;
};

/// Batch of voxel labels aligned with a (N, C, D, H, W) probability tensor.
struct LabelBatch {
    int n = 0, d = 0, h = 0, w = 0;
    std::vector<uint8_t> labels; // class index per voxel, row-major (n, d, h, w)

    LabelBatch() = default;
    LabelBatch(int n_, int d_, int h_, int w_)
        : n(n_), d(d_), h(h_), w(w_), labels(size_t(n_) * d_ * h_ * w_, 0) {}
    size_t numel() const { return labels.size(); }
    uint8_t& at(int n_, int d_, int h_, int w_) {
        return labels[((size_t(n_) * d + d_) * h + h_) * w + w_];
    }
};

template <typename T>
struct DiceFocalResult {
    double total = 0.0;      // dice_weight * dice_term + focal_weight * focal_term
    double dice_term = 0.0;  // 1 - weighted soft-Dice
    double focal_term = 0.0; // class-weighted focal loss
    nn::Tensor<T> grad;      // d total / d probs
};

/// Weighted soft-Dice plus focal loss on per-voxel class probabilities.
template <typename T>
DiceFocalResult<T> dice_focal_loss(const nn::Tensor<T>& probs, const LabelBatch& target,
                                   const TrainConfig& cfg);

template <typename T>
struct AuxMseResult {
    double value = 0.0; // unweighted mean squared complex error, summed over classes
    nn::Tensor<T> grad; // d value / d predicted k-space
};

/// Mean squared complex error between predicted per-class k-space (packed as
/// re_1..re_C, im_1..im_C) and the centered FFT of the one-hot target.
template <typename T>
AuxMseResult<T> kspace_mse_aux(const nn::Tensor<T>& pred_kspace, const LabelBatch& target);

/// Depth-window starts covering [0, depth) with the final window clamped to
/// end at the last slice.
std::vector<int> window_starts(int depth, int patch_depth, int stride);

/// One training patch choice.
struct PatchDraw {
    int exam_index = 0;
    int window_start = 0;
    SubtractionTimepoint timepoint = SubtractionTimepoint::post2;
};

/// Lesion-aware patch stream: draws are positive (lesion-containing) with
/// probability positive_patch_fraction when both pools are nonempty, and
/// lesion-positive patients enter the pools with the configured multiplicity.
/// Pools fall back to each other when one is empty.
class PatchSampler {
public:
    PatchSampler(const std::vector<Exam>& cohort, const TrainConfig& cfg, uint64_t seed);

    PatchDraw next();

    /// Candidate windows without oversampling multiplicity (epoch length basis).
    int windows_total() const { return windows_total_; }
    bool has_positive() const { return !positive_pool_.empty(); }
    bool has_negative() const { return !negative_pool_.empty(); }

private:
    struct Candidate {
        int exam_index;
        int window_start;
    };
    std::vector<Candidate> positive_pool_, negative_pool_;
    int windows_total_ = 0;
    double positive_fraction_;
    SplitMix64 stream_;
};

/// With probability cfg.augmentation_probability, apply a fresh random
/// column mask drawn uniformly from cfg.augmentation_choices to the 2-channel
/// k-space patch; otherwise leave it untouched.
template <typename T>
bool augment_undersample(nn::Tensor<T>& patch, const TrainConfig& cfg, SplitMix64& stream);

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_dice = 0.0;
};

struct StepInfo {
    int epoch = 0;
    int step = 0;
    double loss = 0.0;
    double grad_norm_postclip = 0.0;
};
using StepCallback = std::function<void(const StepInfo&)>;

struct TrainResult {
    std::vector<EpochStats> history;
    int best_epoch = -1;
    double best_val_dice = 0.0;
    int epochs_run = 0;
};

/// Full optimization loop: AdamW with cosine annealing, global gradient
/// clipping, undersampling augmentation, and early stopping on exam-level
/// validation Dice. Training and validation patient sets must be disjoint.
/// The best-validation parameters are restored before returning.
TrainResult train_model(SegmentationModel<float>& model, const std::vector<Exam>& train_cohort,
                        const std::vector<Exam>& val_cohort, const TrainConfig& cfg,
                        const StepCallback& on_step = {});

/// History rows as CSV text (epoch, lr, train_loss, val_dice).
std::string history_to_csv(const std::vector<EpochStats>& history);

/// Extract a 2-channel (re, im) patch tensor of `depth` slices starting at
/// `start` from a prepared k-space volume.
template <typename T>
nn::Tensor<T> patch_to_tensor(const ComplexVolume& volume, int start, int depth);

/// Slice a label patch out of a mask volume.
void copy_label_window(const MaskVolume& mask, int start, int depth, int batch_index,
                       LabelBatch& out);

} // namespace kseg
