#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "kseg/evaluation.hpp"
#include "kseg/io/config_tree.hpp"
#include "kseg/models.hpp"
#include "kseg/phantom.hpp"
#include "kseg/training.hpp"

namespace kseg {

std::string tool_version();

/// Everything one experiment needs, round-trippable through the plain-text
/// config. `init` writes the full default tree; the hash of the canonical
/// serialization is stamped into every artifact.
struct ExperimentConfig {
    PhantomSpec phantom;
    int cohort_size = 50;
    ModelConfig model; // variant is selected per run; other fields shared
    TrainConfig train;
    EvalConfig eval;
    std::string output_dir = "out";
    uint64_t seed = 20240501;

    ConfigTree to_tree() const;
    static ExperimentConfig from_tree(const ConfigTree& tree);
    static ExperimentConfig load(const std::string& path);
    void save(const std::string& path) const;

    uint64_t hash() const { return to_tree().hash(); }
    std::string hash_hex() const { return to_tree().hash_hex(); }

    /// Desk-scale defaults: width divisor 4, batch 4 (the published training
    /// protocol otherwise).
    static ExperimentConfig desk_default();
};

/// Cohort persistence: one CVOL per volume under dir/phantom, patient index
/// and timepoint in the metadata, plus a manifest config stamp.
void save_cohort(const std::filesystem::path& dir, const std::vector<Exam>& cohort,
                 const std::string& config_hash_hex);
std::vector<Exam> load_cohort(const std::filesystem::path& dir);

/// Checkpoint naming convention shared by the CLI and tests.
std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, ModelVariant variant,
                                      int fold);

/// Resumable sweep: reuses records already present in `existing` (matched on
/// model/condition/patient) and computes only the missing ones. The returned
/// table is complete and canonically sorted.
MetricTable sweep_with_resume(const ModelSet& models, const std::vector<Exam>& cohort,
                              const EvalConfig& cfg, bool noise, const MetricTable& existing,
                              int workers);

} // namespace kseg
