#include "kseg/models.hpp"

#include <numeric>
#include <sstream>

#include "kseg/errors.hpp"

namespace kseg {

const char* variant_name(ModelVariant v) {
    switch (v) {
        case ModelVariant::hybrid_kspace_to_image: return "hybrid_kspace_to_image";
        case ModelVariant::native_kspace: return "native_kspace";
        case ModelVariant::image_magnitude: return "image_magnitude";
        case ModelVariant::image_complex: return "image_complex";
    }
    return "unknown";
}

ModelVariant variant_from_name(const std::string& name) {
    for (ModelVariant v : all_variants())
        if (name == variant_name(v)) return v;
    throw validation_error("unknown model variant: " + name);
}

const std::vector<ModelVariant>& all_variants() {
    static const std::vector<ModelVariant> v = {
        ModelVariant::hybrid_kspace_to_image,
        ModelVariant::native_kspace,
        ModelVariant::image_magnitude,
        ModelVariant::image_complex,
    };
    return v;
}

int ModelConfig::scaled(int width) const {
    int w = (width + desk_scale_factor - 1) / desk_scale_factor;
    if (w % 2 != 0) ++w;
    return std::max(2, w);
}

void ModelConfig::validate() const {
    if (image_levels < 1 || kspace_levels < 1)
        throw validation_error("ModelConfig: levels must be >= 1");
    if (image_base_channels < 2 || kspace_hidden_factor < 2)
        throw validation_error("ModelConfig: channel widths must be >= 2");
    if (kspace_feature_channels < 1)
        throw validation_error("ModelConfig: kspace_feature_channels must be >= 1");
    if (num_classes < 2) throw validation_error("ModelConfig: num_classes must be >= 2");
    if (desk_scale_factor < 1)
        throw validation_error("ModelConfig: desk_scale_factor must be >= 1");
}

template <typename T>
SegmentationModel<T>::SegmentationModel(const ModelConfig& config, uint64_t init_seed)
    : config_(config), init_seed_(init_seed) {
    config_.validate();
    build();
}

template <typename T>
void SegmentationModel<T>::build() {
    SplitMix64 stream(init_seed_);
    const int classes = config_.num_classes;

    nn::UNetSpec image_spec;
    image_spec.level_stride = {2, 2, 2};
    image_spec.up_kernel = {3, 3, 3};

    nn::UNetSpec kspec;
    kspec.level_stride = {2, 1, 1};
    kspec.up_kernel = {3, 1, 1};

    switch (config_.variant) {
        case ModelVariant::hybrid_kspace_to_image: {
            kspec.in_channels = 2;
            kspec.out_channels = 2 * config_.kspace_feature_channels;
            kspec.channels = nn::doubling_channels(config_.kspace_base(), config_.kspace_levels);
            kstage_ = nn::build_unet<T>(kspec, stream, "kstage");
            bridge_ = std::make_unique<nn::IFFTBridge<T>>(config_.kspace_feature_channels);
            image_spec.in_channels = 2 * config_.kspace_feature_channels;
            image_spec.out_channels = classes;
            image_spec.channels =
                nn::doubling_channels(config_.hybrid_image_base(), config_.image_levels);
            image_stage_ = nn::build_unet<T>(image_spec, stream, "image");
            break;
        }
        case ModelVariant::native_kspace: {
            // The backbone runs entirely in k-space with the baseline widths
            // and isotropic strides, predicting one complex k-space per class.
            image_spec.in_channels = 2;
            image_spec.out_channels = 2 * classes;
            image_spec.channels =
                nn::doubling_channels(config_.image_base(), config_.image_levels);
            kstage_ = nn::build_unet<T>(image_spec, stream, "knet");
            bridge_ = std::make_unique<nn::IFFTBridge<T>>(classes);
            magnitude_ = std::make_unique<nn::Magnitude<T>>(classes);
            calibration_ = std::make_unique<nn::CalibrationHead<T>>(classes, "calibration");
            break;
        }
        case ModelVariant::image_magnitude: {
            bridge_ = std::make_unique<nn::IFFTBridge<T>>(1);
            magnitude_ = std::make_unique<nn::Magnitude<T>>(1);
            image_spec.in_channels = 1;
            image_spec.out_channels = classes;
            image_spec.channels =
                nn::doubling_channels(config_.image_base(), config_.image_levels);
            image_stage_ = nn::build_unet<T>(image_spec, stream, "image");
            break;
        }
        case ModelVariant::image_complex: {
            bridge_ = std::make_unique<nn::IFFTBridge<T>>(1);
            image_spec.in_channels = 2;
            image_spec.out_channels = classes;
            image_spec.channels =
                nn::doubling_channels(config_.image_base(), config_.image_levels);
            image_stage_ = nn::build_unet<T>(image_spec, stream, "image");
            break;
        }
    }
    softmax_ = std::make_unique<nn::Softmax<T>>();
}

template <typename T>
std::array<int, 3> SegmentationModel<T>::required_divisor() const {
    int image_div = 1 << config_.image_levels;
    int depth_div = image_div;
    if (config_.variant == ModelVariant::hybrid_kspace_to_image)
        depth_div = std::max(image_div, 1 << config_.kspace_levels);
    return {depth_div, image_div, image_div};
}

template <typename T>
void SegmentationModel<T>::check_input(const nn::Shape5& shape) const {
    if (shape[1] != 2)
        throw validation_error("model input must have 2 channels (real, imaginary), got " +
                               std::to_string(shape[1]));
    auto div = required_divisor();
    const char* axis_names[3] = {"depth", "height", "width"};
    for (int a = 0; a < 3; ++a) {
        int extent = shape[2 + a];
        if (extent <= 0 || extent % div[a] != 0) {
            int padded = ((std::max(extent, 1) + div[a] - 1) / div[a]) * div[a];
            std::ostringstream os;
            os << "patch " << axis_names[a] << " must be divisible by " << div[a] << " (got "
               << extent << "); pad " << axis_names[a] << " to " << padded;
            throw validation_error(os.str());
        }
    }
}

template <typename T>
nn::Tensor<T> SegmentationModel<T>::forward(const nn::Tensor<T>& x, bool training) {
    check_input(x.shape);
    switch (config_.variant) {
        case ModelVariant::hybrid_kspace_to_image: {
            nn::Tensor<T> t = kstage_->forward(x, training);
            nn::Tensor<T> b = bridge_->forward(t, training);
            if (training) bridge_out_ = b;
            nn::Tensor<T> u = image_stage_->forward(b, training);
            return softmax_->forward(u, training);
        }
        case ModelVariant::native_kspace: {
            nn::Tensor<T> k = kstage_->forward(x, training);
            if (training) aux_kspace_ = k;
            nn::Tensor<T> b = bridge_->forward(k, training);
            nn::Tensor<T> m = magnitude_->forward(b, training);
            nn::Tensor<T> c = calibration_->forward(m, training);
            return softmax_->forward(c, training);
        }
        case ModelVariant::image_magnitude: {
            nn::Tensor<T> b = bridge_->forward(x, training);
            nn::Tensor<T> m = magnitude_->forward(b, training);
            nn::Tensor<T> u = image_stage_->forward(m, training);
            return softmax_->forward(u, training);
        }
        case ModelVariant::image_complex: {
            nn::Tensor<T> b = bridge_->forward(x, training);
            nn::Tensor<T> u = image_stage_->forward(b, training);
            return softmax_->forward(u, training);
        }
    }
    throw usage_error("unreachable");
}

template <typename T>
void SegmentationModel<T>::backward(const nn::Tensor<T>& grad_probs,
                                    const nn::Tensor<T>* grad_aux_kspace) {
    if (grad_aux_kspace && config_.variant != ModelVariant::native_kspace)
        throw usage_error("auxiliary k-space gradient applies to the native variant only");
    nn::Tensor<T> g = softmax_->backward(grad_probs);
    switch (config_.variant) {
        case ModelVariant::hybrid_kspace_to_image:
            g = image_stage_->backward(g);
            g = bridge_->backward(g);
            kstage_->backward(g);
            break;
        case ModelVariant::native_kspace:
            g = calibration_->backward(g);
            g = magnitude_->backward(g);
            g = bridge_->backward(g);
            if (grad_aux_kspace) {
                if (grad_aux_kspace->shape != g.shape)
                    throw validation_error("auxiliary gradient shape mismatch");
                for (size_t i = 0; i < g.numel(); ++i) g.data[i] += grad_aux_kspace->data[i];
            }
            kstage_->backward(g);
            break;
        case ModelVariant::image_magnitude:
            g = image_stage_->backward(g);
            g = magnitude_->backward(g);
            bridge_->backward(g);
            break;
        case ModelVariant::image_complex:
            g = image_stage_->backward(g);
            bridge_->backward(g);
            break;
    }
}

template <typename T>
const nn::Tensor<T>& SegmentationModel<T>::aux_kspace_output() const {
    if (config_.variant != ModelVariant::native_kspace)
        throw usage_error("aux_kspace_output is defined for the native k-space variant only");
    return aux_kspace_;
}

template <typename T>
const nn::Tensor<T>& SegmentationModel<T>::bridge_output() const {
    if (config_.variant != ModelVariant::hybrid_kspace_to_image)
        throw usage_error("bridge_output is defined for the hybrid variant only");
    return bridge_out_;
}

template <typename T>
nn::Tensor<T> SegmentationModel<T>::lesion_logit_gradient_at_bridge() {
    if (config_.variant != ModelVariant::hybrid_kspace_to_image)
        throw usage_error("lesion_logit_gradient_at_bridge requires the hybrid variant");
    if (bridge_out_.numel() == 0)
        throw usage_error("run forward(training=true) before requesting bridge gradients");
    nn::Shape5 logits_shape = image_stage_->output_shape(bridge_out_.shape);
    nn::Tensor<T> g(logits_shape);
    const size_t sp = g.spatial();
    for (int n = 0; n < g.n(); ++n) {
        T* lesion_plane = g.sample(n) + sp; // class index 1
        for (size_t i = 0; i < sp; ++i) lesion_plane[i] = T(1);
    }
    nn::Tensor<T> at_bridge = image_stage_->backward(g);
    zero_grad();
    return at_bridge;
}

template <typename T>
nn::Tensor<T> SegmentationModel<T>::image_stage_logits(const nn::Tensor<T>& bridge_tensor) {
    if (config_.variant != ModelVariant::hybrid_kspace_to_image)
        throw usage_error("image_stage_logits requires the hybrid variant");
    return image_stage_->forward(bridge_tensor, false);
}

template <typename T>
std::vector<nn::Param<T>*> SegmentationModel<T>::params() {
    std::vector<nn::Param<T>*> out;
    for (nn::Layer<T>* l : {kstage_.get(), bridge_.get(), magnitude_.get(), calibration_.get(),
                            image_stage_.get(), softmax_.get()})
        if (l) l->collect_params(out);
    return out;
}

template <typename T>
size_t SegmentationModel<T>::parameter_count() const {
    auto* self = const_cast<SegmentationModel<T>*>(this);
    size_t total = 0;
    for (const auto* p : self->params()) total += p->numel();
    return total;
}

template <typename T>
void SegmentationModel<T>::zero_grad() {
    for (auto* p : params()) p->zero_grad();
}

template <typename T>
ComplexityReport SegmentationModel<T>::complexity(const nn::Shape5& input_shape) const {
    auto* self = const_cast<SegmentationModel<T>*>(this);
    ComplexityReport report;
    report.parameter_count = parameter_count();

    nn::Shape5 s = input_shape;
    auto walk = [&](nn::Layer<T>* layer) {
        if (!layer) return;
        report.mac_count += layer->macs(s);
        s = layer->output_shape(s);
    };
    switch (config_.variant) {
        case ModelVariant::hybrid_kspace_to_image:
            walk(self->kstage_.get());
            walk(self->bridge_.get());
            walk(self->image_stage_.get());
            break;
        case ModelVariant::native_kspace:
            walk(self->kstage_.get());
            walk(self->bridge_.get());
            walk(self->magnitude_.get());
            walk(self->calibration_.get());
            break;
        case ModelVariant::image_magnitude:
            walk(self->bridge_.get());
            walk(self->magnitude_.get());
            walk(self->image_stage_.get());
            break;
        case ModelVariant::image_complex:
            walk(self->bridge_.get());
            walk(self->image_stage_.get());
            break;
    }
    walk(self->softmax_.get());
    return report;
}

template <typename T>
void SegmentationModel<T>::load_params_from(const SegmentationModel<T>& other) {
    auto* src = const_cast<SegmentationModel<T>*>(&other);
    auto dst_params = params();
    auto src_params = src->params();
    if (dst_params.size() != src_params.size())
        throw validation_error("load_params_from: parameter structure mismatch");
    for (size_t i = 0; i < dst_params.size(); ++i) {
        if (dst_params[i]->value.size() != src_params[i]->value.size())
            throw validation_error("load_params_from: size mismatch for " + dst_params[i]->name);
        dst_params[i]->value = src_params[i]->value;
    }
}

template <typename T>
SegmentationModel<T> SegmentationModel<T>::clone() const {
    SegmentationModel<T> copy(config_, init_seed_);
    copy.load_params_from(*this);
    return copy;
}

template class SegmentationModel<float>;
template class SegmentationModel<double>;

} // namespace kseg
