#pragma once

#include <vector>

#include "kseg/kspace.hpp"
#include "kseg/models.hpp"

namespace kseg {

/// Phase-aligned coherent sum: channel i is rotated by exp(-i*phi_i) with
/// phi_i = arg <channel_i, channel_0>, then all channels are summed. The
/// rotation makes each channel's inner product with the reference real and
/// nonnegative, which maximizes |sum| in the two-channel case.
ComplexVolume coherent_sum(const std::vector<ComplexVolume>& channels);

/// Per-channel alignment phases used by coherent_sum.
std::vector<double> alignment_phases(const std::vector<ComplexVolume>& channels);

struct RadialProfile {
    int n_bins = 0;
    std::vector<double> bin_edges;   // n_bins + 1 edges over [0, 0.5*sqrt(2)]
    std::vector<double> energy;      // mean |k|^2 per bin
    std::vector<size_t> bin_counts;  // samples per bin (per slice stack)
};

/// Mean squared k-space magnitude over annuli of equal radial width around
/// the centered DC bin, averaged over slices. Radius is the normalized
/// spatial frequency sqrt((u/H)^2 + (v/W)^2) with u, v measured from the DC
/// bin; every sample lands in exactly one bin.
RadialProfile radial_energy_profile(const ComplexVolume& kspace, int n_bins);

struct GradientModulatedSum {
    std::vector<double> weights;   // mean |gradient| per bridge channel
    ComplexVolume sum;             // coherent sum of the weighted channels
    std::vector<ComplexVolume> channels; // post-bridge channels (image space)
};

/// Hybrid-model feature attribution: weight every bridge output channel by
/// the mean modulus of d(sum of lesion logits)/d(channel), then take the
/// phase-aligned coherent sum of the weighted channels. Requires the hybrid
/// variant; runs its own forward pass on the given patch.
template <typename T>
GradientModulatedSum gradient_modulated_sum(SegmentationModel<T>& model,
                                            const nn::Tensor<T>& kspace_patch);

/// Split a (1, 2K, D, H, W) packed tensor into K complex volumes.
template <typename T>
std::vector<ComplexVolume> unpack_complex_channels(const nn::Tensor<T>& packed, Domain domain);

extern template GradientModulatedSum gradient_modulated_sum<float>(SegmentationModel<float>&,
                                                                   const nn::Tensor<float>&);
extern template GradientModulatedSum gradient_modulated_sum<double>(SegmentationModel<double>&,
                                                                    const nn::Tensor<double>&);

} // namespace kseg
