#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "kseg/models.hpp"
#include "kseg/phantom.hpp"
#include "kseg/sampling.hpp"

namespace kseg {

struct EvalConfig {
    int patch_depth = 24;
    int patch_stride = 16;
    std::vector<AccelEntry> schedule = default_accel_schedule();
    std::vector<int> snr_list = default_snr_schedule();
    int folds = 5;
    uint64_t fold_seed = 123;

    void validate() const;
};

/// Dice similarity coefficient 2|A n B| / (|A| + |B|). The ground truth must
/// be nonempty (lesion-positive evaluation); use try_dice_score to signal
/// exclusion instead.
double dice_score(const MaskVolume& pred, const MaskVolume& gt);
std::optional<double> try_dice_score(const MaskVolume& pred, const MaskVolume& gt);

/// Fraction of Dice values exactly equal to zero.
double failure_rate(const std::vector<double>& dice_values);

/// Strict-majority aggregation of overlapping binary patch votes: a voxel is
/// foreground iff its vote sum strictly exceeds half its overlap count.
MaskVolume aggregate_votes(const std::vector<int>& starts,
                           const std::vector<MaskVolume>& patch_votes, int depth);

/// Sliding-window inference over depth windows. For acceleration > 1 each
/// patch gets its own deterministic evaluation mask seeded from
/// (acceleration, patient_index, window start). The input must be a prepared
/// k-space volume.
MaskVolume sliding_infer(SegmentationModel<float>& model, const ComplexVolume& prepared_kspace,
                         int acceleration, double center_fraction, int patient_index,
                         const EvalConfig& cfg);

/// Patient-level fold assignment. Stratified mode balances label counts per
/// fold; otherwise a seeded shuffled K-fold split.
std::vector<int> split_folds(const std::vector<int>& patient_labels, int k, uint64_t seed,
                             bool stratified);

struct MetricRecord {
    std::string model;
    std::string condition_type; // "accel" or "snr"
    double condition_value = 0.0;
    int patient = 0;
    double dice = 0.0;
};
using MetricTable = std::vector<MetricRecord>;

/// Models keyed by variant name.
using ModelSet = std::vector<std::pair<std::string, SegmentationModel<float>*>>;

/// Dice of every (model, schedule entry, patient): full preparation, masked
/// sliding inference, patient-level Dice. Deterministic given checkpoints.
MetricTable acceleration_sweep(const ModelSet& models, const std::vector<Exam>& cohort,
                               const EvalConfig& cfg, int workers = 1);

/// As acceleration_sweep but adding calibrated complex Gaussian noise at each
/// schedule SNR instead of masking; noise seeds derive from (SNR, patient).
MetricTable noise_sweep(const ModelSet& models, const std::vector<Exam>& cohort,
                        const EvalConfig& cfg, int workers = 1);

/// Canonical ordering used for every persisted table.
void sort_metric_table(MetricTable& table);

/// Mean Dice for one (model, condition) cell of a table.
std::vector<double> table_dice_values(const MetricTable& table, const std::string& model,
                                      const std::string& condition_type, double condition_value);

} // namespace kseg
