#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "kseg/nn/layers.hpp"

namespace kseg::nn {

/// Volumetric U-Net description. `channels` lists the encoder widths top to
/// bottom (levels + 1 entries, doubling by convention); every level applies
/// `level_stride` on the way down and a transposed convolution with
/// `up_kernel` on the way back up. Blocks are residual units with group
/// normalization and leaky ReLU.
struct UNetSpec {
    int in_channels = 1;
    int out_channels = 2;
    std::vector<int> channels;            // e.g. {24, 48, 96, 192}
    std::array<int, 3> level_stride{2, 2, 2};
    std::array<int, 3> up_kernel{3, 3, 3};
    int res_units = 2;
    int norm_groups = 2;
    double slope = 0.1;
    std::array<int, 3> kernel{3, 3, 3};
};

namespace detail {

template <typename T>
LayerPtr<T> unet_block(const UNetSpec& spec, int in_ch, int out_ch, std::span<const int> channels,
                       bool is_top, SplitMix64& stream, const std::string& prefix) {
    const int c = channels[0];
    auto block = std::make_unique<Sequential<T>>();

    // Down path: strided residual unit.
    block->add(std::make_unique<ResidualUnit<T>>(in_ch, c, spec.level_stride, spec.kernel,
                                                 spec.res_units, spec.norm_groups, spec.slope,
                                                 false, stream, prefix + ".down"));

    int up_in;
    LayerPtr<T> sub;
    if (channels.size() > 2) {
        sub = unet_block<T>(spec, c, c, channels.subspan(1), false, stream, prefix + ".sub");
        up_in = 2 * c;
    } else {
        sub = std::make_unique<ResidualUnit<T>>(c, channels[1], std::array<int, 3>{1, 1, 1},
                                                spec.kernel, spec.res_units, spec.norm_groups,
                                                spec.slope, false, stream, prefix + ".bottom");
        up_in = c + channels[1];
    }
    block->add(std::make_unique<SkipConnection<T>>(std::move(sub)));

    // Up path: transposed convolution then a single-subunit residual unit;
    // the very top one emits raw (un-normalized) outputs.
    auto up = std::make_unique<Sequential<T>>();
    up->add(std::make_unique<ConvTranspose3d<T>>(up_in, out_ch, spec.up_kernel, spec.level_stride,
                                                 stream, prefix + ".up.conv"));
    up->add(std::make_unique<GroupNorm<T>>(spec.norm_groups, out_ch, prefix + ".up.norm"));
    up->add(std::make_unique<LeakyReLU<T>>(spec.slope));
    up->add(std::make_unique<ResidualUnit<T>>(out_ch, out_ch, std::array<int, 3>{1, 1, 1},
                                              spec.kernel, 1, spec.norm_groups, spec.slope,
                                              is_top, stream, prefix + ".up.res"));
    block->add(std::move(up));
    return block;
}

} // namespace detail

template <typename T>
LayerPtr<T> build_unet(const UNetSpec& spec, SplitMix64& stream, const std::string& prefix) {
    if (spec.channels.size() < 2)
        throw validation_error("UNetSpec: need at least one level (two channel entries)");
    for (size_t i = 1; i < spec.channels.size(); ++i)
        if (spec.channels[i] != 2 * spec.channels[i - 1])
            throw validation_error("UNetSpec: channel progression must double per level");
    return detail::unet_block<T>(spec, spec.in_channels, spec.out_channels,
                                 std::span<const int>(spec.channels), true, stream, prefix);
}

/// Channel schedule (base, 2*base, ..., 2^levels * base).
inline std::vector<int> doubling_channels(int base, int levels) {
    std::vector<int> out;
    int c = base;
    for (int i = 0; i <= levels; ++i) {
        out.push_back(c);
        c *= 2;
    }
    return out;
}

} // namespace kseg::nn
