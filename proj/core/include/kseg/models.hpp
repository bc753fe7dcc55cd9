#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "kseg/nn/optim.hpp"
#include "kseg/nn/unet.hpp"

namespace kseg {

enum class ModelVariant {
    hybrid_kspace_to_image,
    native_kspace,
    image_magnitude,
    image_complex,
};

const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);
const std::vector<ModelVariant>& all_variants();

struct ModelConfig {
    ModelVariant variant = ModelVariant::hybrid_kspace_to_image;
    int image_levels = 3;
    int kspace_levels = 2;
    int image_base_channels = 24;   // baselines and the native model
    int kspace_hidden_factor = 20;  // k-space stage base width; also the
                                    // hybrid image stage base (the published
                                    // parameter budget pins it there)
    int kspace_feature_channels = 4; // complex channels across the bridge
    int num_classes = 2;
    int desk_scale_factor = 1;      // divides channel widths for small runs

    /// Width after desk scaling, rounded up to an even count so group
    /// normalization with 2 groups stays valid.
    int scaled(int width) const;

    int image_base() const { return scaled(image_base_channels); }
    int hybrid_image_base() const { return scaled(kspace_hidden_factor); }
    int kspace_base() const { return scaled(kspace_hidden_factor); }

    void validate() const;
};

struct ComplexityReport {
    size_t parameter_count = 0;
    uint64_t mac_count = 0;
};

/// One of the four segmentation networks. All variants consume a 2-channel
/// (real, imaginary) k-space patch and emit per-class probabilities of the
/// same spatial shape.
template <typename T>
class SegmentationModel {
public:
    SegmentationModel(const ModelConfig& config, uint64_t init_seed);

    const ModelConfig& config() const { return config_; }

    /// Required divisibility of (depth, height, width) for this variant.
    std::array<int, 3> required_divisor() const;
    void check_input(const nn::Shape5& shape) const;

    /// Forward pass: (N, 2, D, H, W) k-space -> (N, classes, D, H, W)
    /// probabilities. training=true keeps caches for backward.
    nn::Tensor<T> forward(const nn::Tensor<T>& kspace_patch, bool training);

    /// Backward from the probability gradient; for the native variant an
    /// optional gradient on the pre-bridge per-class k-space output is added
    /// (the auxiliary loss path).
    void backward(const nn::Tensor<T>& grad_probs, const nn::Tensor<T>* grad_aux_kspace = nullptr);

    /// Native variant: per-class complex k-space emitted by the U-Net
    /// (valid after a forward).
    const nn::Tensor<T>& aux_kspace_output() const;

    /// Hybrid variant: image-space feature channels just after the bridge
    /// (valid after a forward).
    const nn::Tensor<T>& bridge_output() const;

    /// Hybrid variant: gradient of the summed lesion-class logits with
    /// respect to the bridge output. Requires a prior forward(training=true);
    /// leaves parameter gradients zeroed.
    nn::Tensor<T> lesion_logit_gradient_at_bridge();

    /// Hybrid variant: per-class logits of the image stage evaluated on a
    /// caller-provided bridge tensor (no caching side effects).
    nn::Tensor<T> image_stage_logits(const nn::Tensor<T>& bridge_tensor);

    std::vector<nn::Param<T>*> params();
    size_t parameter_count() const;
    void zero_grad();

    /// Parameter count plus analytic multiply-accumulate count for one
    /// forward pass on the given input shape.
    ComplexityReport complexity(const nn::Shape5& input_shape) const;

    /// Copy parameter values from another model with identical config.
    void load_params_from(const SegmentationModel<T>& other);
    SegmentationModel<T> clone() const;

private:
    ModelConfig config_;
    uint64_t init_seed_ = 0;

    // Stage graph; unused stages stay null depending on the variant.
    nn::LayerPtr<T> kstage_;       // hybrid
    nn::LayerPtr<T> bridge_;       // all variants (fixed, no parameters)
    nn::LayerPtr<T> magnitude_;    // native + image_magnitude
    nn::LayerPtr<T> calibration_;  // native
    nn::LayerPtr<T> image_stage_;  // hybrid + image baselines + native backbone
    nn::LayerPtr<T> softmax_;

    nn::Tensor<T> aux_kspace_;
    nn::Tensor<T> bridge_out_;
    mutable std::vector<nn::Param<T>*> param_cache_;
    void build();
};

using SegmentationModelF = SegmentationModel<float>;

extern template class SegmentationModel<float>;
extern template class SegmentationModel<double>;

} // namespace kseg
