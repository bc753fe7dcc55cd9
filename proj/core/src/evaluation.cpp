#include "kseg/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <thread>

#include "kseg/errors.hpp"
#include "kseg/training.hpp"

namespace kseg {

void EvalConfig::validate() const {
    if (patch_depth < 1 || patch_stride < 1)
        throw validation_error("EvalConfig: patch geometry must be positive");
    if (schedule.empty()) throw validation_error("EvalConfig: empty acceleration schedule");
    if (folds < 1) throw validation_error("EvalConfig: folds must be >= 1");
}

double dice_score(const MaskVolume& pred, const MaskVolume& gt) {
    auto d = try_dice_score(pred, gt);
    if (!d)
        throw validation_error("dice_score: empty ground truth is excluded from the "
                               "lesion-positive primary metric");
    return *d;
}

std::optional<double> try_dice_score(const MaskVolume& pred, const MaskVolume& gt) {
    if (pred.depth != gt.depth || pred.height != gt.height || pred.width != gt.width)
        throw validation_error("dice_score: shape mismatch");
    size_t inter = 0, a = 0, b = 0;
    for (size_t i = 0; i < pred.data.size(); ++i) {
        bool pa = pred.data[i] != 0, pb = gt.data[i] != 0;
        inter += (pa && pb);
        a += pa;
        b += pb;
    }
    if (b == 0) return std::nullopt;
    return 2.0 * double(inter) / double(a + b);
}

double failure_rate(const std::vector<double>& dice_values) {
    if (dice_values.empty()) throw validation_error("failure_rate: empty input");
    size_t zeros = 0;
    for (double d : dice_values) zeros += (d == 0.0);
    return double(zeros) / double(dice_values.size());
}

MaskVolume aggregate_votes(const std::vector<int>& starts,
                           const std::vector<MaskVolume>& patch_votes, int depth) {
    if (starts.size() != patch_votes.size())
        throw validation_error("aggregate_votes: starts/votes size mismatch");
    if (starts.empty()) throw validation_error("aggregate_votes: no patches");
    const int H = patch_votes.front().height, W = patch_votes.front().width;
    const int pd = patch_votes.front().depth;

    std::vector<uint16_t> votes(size_t(depth) * H * W, 0);
    std::vector<uint16_t> overlap(size_t(depth) * H * W, 0);
    for (size_t p = 0; p < starts.size(); ++p) {
        const MaskVolume& mv = patch_votes[p];
        if (mv.depth != pd || mv.height != H || mv.width != W)
            throw validation_error("aggregate_votes: inconsistent patch shapes");
        for (int d = 0; d < pd; ++d) {
            int z = starts[p] + d;
            if (z < 0 || z >= depth) throw validation_error("aggregate_votes: window out of range");
            for (int h = 0; h < H; ++h)
                for (int w = 0; w < W; ++w) {
                    size_t idx = (size_t(z) * H + h) * W + w;
                    votes[idx] += mv.at(d, h, w) ? 1 : 0;
                    overlap[idx] += 1;
                }
        }
    }
    MaskVolume out(depth, H, W);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (2 * votes[i] > overlap[i]) ? 1 : 0; // strict majority
    return out;
}

MaskVolume sliding_infer(SegmentationModel<float>& model, const ComplexVolume& prepared_kspace,
                         int acceleration, double center_fraction, int patient_index,
                         const EvalConfig& cfg) {
    if (prepared_kspace.domain != Domain::kspace)
        throw usage_error("sliding_infer: exam must be prepared (k-space subtraction input)");
    auto starts = window_starts(prepared_kspace.depth, cfg.patch_depth, cfg.patch_stride);

    std::vector<MaskVolume> votes;
    votes.reserve(starts.size());
    for (int z : starts) {
        nn::Tensor<float> patch = patch_to_tensor<float>(prepared_kspace, z, cfg.patch_depth);
        if (acceleration > 1) {
            SamplingMask mask = random_mask(prepared_kspace.width, acceleration, center_fraction,
                                            derive_mask_seed(acceleration, patient_index, z));
            const size_t sp = patch.spatial();
            const int W = patch.w();
            for (int c = 0; c < 2; ++c) {
                float* plane = patch.sample(0) + size_t(c) * sp;
                for (size_t i = 0; i < sp; ++i)
                    if (!mask.keep[i % W]) plane[i] = 0.0f;
            }
        }
        auto probs = model.forward(patch, false);
        MaskVolume vote(cfg.patch_depth, prepared_kspace.height, prepared_kspace.width);
        const size_t sp = probs.spatial();
        const float* bg = probs.sample(0);
        const float* fg = probs.sample(0) + sp;
        for (size_t i = 0; i < sp; ++i) vote.data[i] = fg[i] > bg[i] ? 1 : 0;
        votes.push_back(std::move(vote));
    }
    return aggregate_votes(starts, votes, prepared_kspace.depth);
}

std::vector<int> split_folds(const std::vector<int>& patient_labels, int k, uint64_t seed,
                             bool stratified) {
    const int n = int(patient_labels.size());
    if (k < 1) throw validation_error("split_folds: k must be >= 1");
    if (k > n)
        throw validation_error("split_folds: k (" + std::to_string(k) + ") exceeds patient count (" +
                               std::to_string(n) + ")");

    auto shuffled = [&](std::vector<int> idx, uint64_t s) {
        SplitMix64 stream(s);
        for (size_t i = idx.size(); i > 1; --i) {
            size_t j = stream.next_below(i);
            std::swap(idx[i - 1], idx[j]);
        }
        return idx;
    };

    std::vector<int> fold(n, -1);
    if (!stratified) {
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        idx = shuffled(std::move(idx), seed);
        for (int i = 0; i < n; ++i) fold[idx[i]] = i % k;
        return fold;
    }

    // Stratified: shuffle within each label group and deal round-robin, so
    // per-fold label counts differ by at most one.
    std::vector<int> labels_sorted = patient_labels;
    std::sort(labels_sorted.begin(), labels_sorted.end());
    labels_sorted.erase(std::unique(labels_sorted.begin(), labels_sorted.end()),
                        labels_sorted.end());
    int cursor = 0;
    for (int label : labels_sorted) {
        std::vector<int> group;
        for (int i = 0; i < n; ++i)
            if (patient_labels[i] == label) group.push_back(i);
        group = shuffled(std::move(group), seed ^ fnv1a64("stratum|" + std::to_string(label)));
        for (int i : group) fold[i] = (cursor++) % k;
    }
    return fold;
}

void sort_metric_table(MetricTable& table) {
    std::sort(table.begin(), table.end(), [](const MetricRecord& a, const MetricRecord& b) {
        if (a.model != b.model) return a.model < b.model;
        if (a.condition_type != b.condition_type) return a.condition_type < b.condition_type;
        if (a.condition_value != b.condition_value) return a.condition_value < b.condition_value;
        return a.patient < b.patient;
    });
}

std::vector<double> table_dice_values(const MetricTable& table, const std::string& model,
                                      const std::string& condition_type, double condition_value) {
    std::vector<double> out;
    for (const auto& r : table)
        if (r.model == model && r.condition_type == condition_type &&
            r.condition_value == condition_value)
            out.push_back(r.dice);
    return out;
}

namespace {

MetricTable sweep_impl(const ModelSet& models, const std::vector<Exam>& cohort,
                       const EvalConfig& cfg, bool noise, int workers) {
    cfg.validate();
    struct Task {
        size_t model_idx;
        size_t exam_idx;
    };
    std::vector<Task> tasks;
    for (size_t m = 0; m < models.size(); ++m)
        for (size_t e = 0; e < cohort.size(); ++e) tasks.push_back({m, e});

    const size_t conditions = noise ? cfg.snr_list.size() : cfg.schedule.size();
    MetricTable table(tasks.size() * conditions);

    std::atomic<size_t> next{0};
    auto worker = [&]() {
        // Each worker runs on its own model clones so layer caches never race.
        std::vector<std::unique_ptr<SegmentationModel<float>>> local;
        for (auto& [name, model] : models)
            local.push_back(std::make_unique<SegmentationModel<float>>(model->clone()));
        while (true) {
            size_t t = next.fetch_add(1);
            if (t >= tasks.size()) break;
            const Task& task = tasks[t];
            const Exam& exam = cohort[task.exam_idx];
            ComplexVolume prepared = prepare_subtraction_kspace(exam);
            SegmentationModel<float>& model = *local[task.model_idx];
            const std::string& name = models[task.model_idx].first;

            for (size_t ci = 0; ci < conditions; ++ci) {
                MetricRecord rec;
                rec.model = name;
                rec.patient = exam.patient_index;
                std::optional<double> dice;
                if (noise) {
                    int snr = cfg.snr_list[ci];
                    rec.condition_type = "snr";
                    rec.condition_value = snr;
                    ComplexVolume noisy =
                        add_noise(prepared, snr, derive_noise_seed(snr, exam.patient_index));
                    auto pred = sliding_infer(model, noisy, 1, 1.0, exam.patient_index, cfg);
                    dice = try_dice_score(pred, exam.lesion_mask);
                } else {
                    const AccelEntry& entry = cfg.schedule[ci];
                    rec.condition_type = "accel";
                    rec.condition_value = entry.acceleration;
                    auto pred = sliding_infer(model, prepared, entry.acceleration,
                                              entry.center_fraction, exam.patient_index, cfg);
                    dice = try_dice_score(pred, exam.lesion_mask);
                }
                rec.dice = dice.value_or(-1.0); // empty-GT patients are marked and dropped below
                table[t * conditions + ci] = std::move(rec);
            }
        }
    };

    int n_workers = std::max(1, workers);
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        for (int i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (auto& th : threads) th.join();
    }

    MetricTable out;
    out.reserve(table.size());
    for (auto& rec : table)
        if (rec.dice >= 0.0) out.push_back(std::move(rec));
    sort_metric_table(out);
    return out;
}

} // namespace

MetricTable acceleration_sweep(const ModelSet& models, const std::vector<Exam>& cohort,
                               const EvalConfig& cfg, int workers) {
    return sweep_impl(models, cohort, cfg, false, workers);
}

MetricTable noise_sweep(const ModelSet& models, const std::vector<Exam>& cohort,
                        const EvalConfig& cfg, int workers) {
    return sweep_impl(models, cohort, cfg, true, workers);
}

} // namespace kseg
