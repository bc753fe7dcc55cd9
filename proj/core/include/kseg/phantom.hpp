#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "kseg/kspace.hpp"

namespace kseg {

/// Geometry of one lesion, kept alongside the voxel mask so downstream
/// checks can reason about the analytic shape.
struct LesionEllipsoid {
    std::array<double, 3> center;    // (z, y, x) voxel coordinates
    std::array<double, 3> half_axes; // (az, ay, ax) voxels
};

struct PhantomSpec {
    int depth = 32;
    int height = 64;
    int width = 64;
    int lesion_count_min = 1;
    int lesion_count_max = 3;
    double lesion_radius_min = 3.0;
    double lesion_radius_max = 6.0;
    double enhancement_factor = 3.0;       // lesion gain at post-contrast-2
    double background_texture_scale = 0.2; // relative texture amplitude
    double phase_smoothness = 8.0;         // phase correlation length, voxels
    double noise_floor = 0.02;             // relative magnitude floor

    /// Throws validation_error naming the violated invariant.
    void validate() const;
};

/// One synthetic patient: three contrast timepoints in image space plus the
/// lesion ground truth.
struct Exam {
    int patient_index = 0;
    ComplexVolume pre, post1, post2; // image domain, shared shape
    MaskVolume lesion_mask;
    std::vector<LesionEllipsoid> lesions;
};

/// Deterministic synthetic DCE exam. Identical (spec, patient_index, seed)
/// yields bit-identical output.
Exam generate_exam(const PhantomSpec& spec, int patient_index, uint64_t seed);

/// Cohort of n exams with patient_index 0..n-1; per-exam streams are derived
/// from (seed, patient_index) so exams are independent and reproducible.
std::vector<Exam> generate_cohort(const PhantomSpec& spec, int n_patients, uint64_t seed);

} // namespace kseg
