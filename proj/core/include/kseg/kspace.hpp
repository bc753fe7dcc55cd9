#pragma once

#include <complex>
#include <cstdint>
#include <vector>

namespace kseg {

enum class Domain : uint8_t { image = 0, kspace = 1 };

/// A depth x height x width grid of complex samples, tagged with the domain
/// it lives in. Slices are the depth-indexed 2D planes; all per-slice
/// transforms leave the depth axis untouched.
struct ComplexVolume {
    int depth = 0, height = 0, width = 0;
    Domain domain = Domain::image;
    std::vector<std::complex<float>> data; // row-major [d][h][w]

    ComplexVolume() = default;
    ComplexVolume(int d, int h, int w, Domain dom)
        : depth(d), height(h), width(w), domain(dom),
          data(static_cast<size_t>(d) * h * w) {}

    size_t size() const { return data.size(); }
    std::complex<float>& at(int d, int h, int w) {
        return data[(static_cast<size_t>(d) * height + h) * width + w];
    }
    const std::complex<float>& at(int d, int h, int w) const {
        return data[(static_cast<size_t>(d) * height + h) * width + w];
    }
    bool same_shape(const ComplexVolume& o) const {
        return depth == o.depth && height == o.height && width == o.width;
    }
    /// Sum of |v|^2 over all samples.
    double energy() const;
    /// All samples finite.
    bool finite() const;
};

/// Binary volume sharing ComplexVolume's layout.
struct MaskVolume {
    int depth = 0, height = 0, width = 0;
    std::vector<uint8_t> data;

    MaskVolume() = default;
    MaskVolume(int d, int h, int w)
        : depth(d), height(h), width(w), data(static_cast<size_t>(d) * h * w, 0) {}

    size_t size() const { return data.size(); }
    uint8_t& at(int d, int h, int w) {
        return data[(static_cast<size_t>(d) * height + h) * width + w];
    }
    uint8_t at(int d, int h, int w) const {
        return data[(static_cast<size_t>(d) * height + h) * width + w];
    }
    size_t foreground_count() const;
};

/// Centered orthonormal 2D FFT applied per slice: DC lands at
/// (floor(h/2), floor(w/2)) and total energy is preserved.
ComplexVolume fft2c(const ComplexVolume& v);

/// Inverse of fft2c.
ComplexVolume ifft2c(const ComplexVolume& k);

/// Double-precision slice transforms used by gradient paths and tests.
void fft2c_slice_d(const std::complex<double>* in, std::complex<double>* out, int h, int w);
void ifft2c_slice_d(const std::complex<double>* in, std::complex<double>* out, int h, int w);
void fft2c_slice_f(const std::complex<float>* in, std::complex<float>* out, int h, int w);
void ifft2c_slice_f(const std::complex<float>* in, std::complex<float>* out, int h, int w);

struct Exam; // phantom.hpp

/// Divide every timepoint by the RMS magnitude of the pre-contrast volume.
/// Returns the scale so callers can round-trip. All volumes must share a
/// shape and domain; the pre volume must have nonzero energy.
struct RmsNormalized {
    std::vector<ComplexVolume> volumes;
    double scale = 1.0;
};
RmsNormalized rms_normalize(const std::vector<ComplexVolume>& timepoints);

enum class SubtractionTimepoint { post1, post2 };

/// post - pre in the requested domain. The k-space path transforms each
/// timepoint with fft2c first and then subtracts.
ComplexVolume temporal_subtract(const Exam& exam, Domain representation,
                                SubtractionTimepoint tp = SubtractionTimepoint::post2);

/// Full network-input preparation: per-timepoint fft2c, RMS normalization by
/// the pre-contrast k-space, then the post-minus-pre subtraction in k-space.
ComplexVolume prepare_subtraction_kspace(const Exam& exam,
                                         SubtractionTimepoint tp = SubtractionTimepoint::post2);

/// Center-crop when larger, zero-pad when smaller; on padded edges the
/// outermost taper_width voxels of the original content are ramped by a
/// raised cosine so content decays smoothly into the padding. The interior
/// beyond the ramp is bit-identical.
ComplexVolume pad_crop_taper(const ComplexVolume& v, int target_h, int target_w, int taper_width);

} // namespace kseg
