#include "kseg/features.hpp"

#include <cmath>
#include <complex>

#include "kseg/errors.hpp"

namespace kseg {

std::vector<double> alignment_phases(const std::vector<ComplexVolume>& channels) {
    if (channels.empty()) throw validation_error("coherent_sum: empty channel list");
    const ComplexVolume& ref = channels.front();
    std::vector<double> phases;
    phases.reserve(channels.size());
    for (const auto& ch : channels) {
        if (!ch.same_shape(ref)) throw validation_error("coherent_sum: shape mismatch");
        std::complex<double> inner{0.0, 0.0};
        for (size_t i = 0; i < ch.data.size(); ++i) {
            std::complex<double> a(ch.data[i].real(), ch.data[i].imag());
            std::complex<double> b(ref.data[i].real(), ref.data[i].imag());
            inner += a * std::conj(b);
        }
        phases.push_back(std::abs(inner) > 0.0 ? std::arg(inner) : 0.0);
    }
    return phases;
}

ComplexVolume coherent_sum(const std::vector<ComplexVolume>& channels) {
    auto phases = alignment_phases(channels);
    const ComplexVolume& ref = channels.front();
    ComplexVolume out(ref.depth, ref.height, ref.width, ref.domain);
    for (size_t c = 0; c < channels.size(); ++c) {
        std::complex<float> rot(float(std::cos(-phases[c])), float(std::sin(-phases[c])));
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += channels[c].data[i] * rot;
    }
    return out;
}

RadialProfile radial_energy_profile(const ComplexVolume& kspace, int n_bins) {
    if (n_bins < 2) throw validation_error("radial_energy_profile: n_bins must be >= 2");

    RadialProfile profile;
    profile.n_bins = n_bins;
    const double r_max = 0.5 * std::sqrt(2.0);
    for (int b = 0; b <= n_bins; ++b)
        profile.bin_edges.push_back(r_max * double(b) / n_bins);
    profile.energy.assign(n_bins, 0.0);
    profile.bin_counts.assign(n_bins, 0);

    const int H = kspace.height, W = kspace.width;
    const int ch = H / 2, cw = W / 2;
    for (int d = 0; d < kspace.depth; ++d)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w) {
                double fu = double(h - ch) / H;
                double fv = double(w - cw) / W;
                double r = std::sqrt(fu * fu + fv * fv);
                int bin = std::min(n_bins - 1, int(r / r_max * n_bins));
                const auto& v = kspace.at(d, h, w);
                profile.energy[bin] += double(v.real()) * v.real() + double(v.imag()) * v.imag();
                profile.bin_counts[bin] += 1;
            }
    for (int b = 0; b < n_bins; ++b)
        if (profile.bin_counts[b]) profile.energy[b] /= double(profile.bin_counts[b]);
    return profile;
}

template <typename T>
std::vector<ComplexVolume> unpack_complex_channels(const nn::Tensor<T>& packed, Domain domain) {
    if (packed.n() != 1 || packed.c() % 2 != 0)
        throw validation_error("unpack_complex_channels: expected a (1, 2K, D, H, W) tensor");
    const int K = packed.c() / 2;
    const size_t sp = packed.spatial();
    std::vector<ComplexVolume> out;
    out.reserve(K);
    for (int ch = 0; ch < K; ++ch) {
        ComplexVolume vol(packed.d(), packed.h(), packed.w(), domain);
        const T* re = packed.sample(0) + size_t(ch) * sp;
        const T* im = packed.sample(0) + size_t(K + ch) * sp;
        for (size_t i = 0; i < sp; ++i) vol.data[i] = {float(re[i]), float(im[i])};
        out.push_back(std::move(vol));
    }
    return out;
}

template <typename T>
GradientModulatedSum gradient_modulated_sum(SegmentationModel<T>& model,
                                            const nn::Tensor<T>& kspace_patch) {
    if (model.config().variant != ModelVariant::hybrid_kspace_to_image)
        throw usage_error("gradient_modulated_sum requires the hybrid variant");
    if (kspace_patch.n() != 1)
        throw validation_error("gradient_modulated_sum: single-patch input expected");

    model.forward(kspace_patch, true);
    nn::Tensor<T> grad = model.lesion_logit_gradient_at_bridge();

    const int K = model.config().kspace_feature_channels;
    const size_t sp = grad.spatial();

    GradientModulatedSum result;
    result.channels = unpack_complex_channels(model.bridge_output(), Domain::image);
    result.weights.assign(K, 0.0);
    for (int ch = 0; ch < K; ++ch) {
        const T* gre = grad.sample(0) + size_t(ch) * sp;
        const T* gim = grad.sample(0) + size_t(K + ch) * sp;
        double acc = 0.0;
        for (size_t i = 0; i < sp; ++i)
            acc += std::sqrt(double(gre[i]) * gre[i] + double(gim[i]) * gim[i]);
        result.weights[ch] = acc / double(sp);
    }

    std::vector<ComplexVolume> weighted = result.channels;
    for (int ch = 0; ch < K; ++ch) {
        float w = float(result.weights[ch]);
        for (auto& v : weighted[ch].data) v *= w;
    }
    result.sum = coherent_sum(weighted);
    return result;
}

template std::vector<ComplexVolume> unpack_complex_channels<float>(const nn::Tensor<float>&, Domain);
template std::vector<ComplexVolume> unpack_complex_channels<double>(const nn::Tensor<double>&,
                                                                    Domain);
template GradientModulatedSum gradient_modulated_sum<float>(SegmentationModel<float>&,
                                                            const nn::Tensor<float>&);
template GradientModulatedSum gradient_modulated_sum<double>(SegmentationModel<double>&,
                                                             const nn::Tensor<double>&);

} // namespace kseg
