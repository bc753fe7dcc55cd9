#include "kseg/kspace.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <string>

#include "kseg/errors.hpp"
#include "kseg/phantom.hpp"

namespace kseg {

double ComplexVolume::energy() const {
    double e = 0.0;
    for (const auto& v : data) e += double(v.real()) * v.real() + double(v.imag()) * v.imag();
    return e;
}

bool ComplexVolume::finite() const {
    for (const auto& v : data)
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    return true;
}

size_t MaskVolume::foreground_count() const {
    size_t n = 0;
    for (uint8_t v : data) n += (v != 0);
    return n;
}

namespace {

// Plans are cached per (h, w, sign, precision). Creation is serialized;
// new-array execution is thread-safe. FFTW_UNALIGNED lets plans run on any
// caller-provided buffer.
std::mutex g_plan_mutex;
std::map<std::tuple<int, int, int>, fftwf_plan> g_plans_f;
std::map<std::tuple<int, int, int>, fftw_plan> g_plans_d;

fftwf_plan plan_f(int h, int w, int sign) {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto key = std::make_tuple(h, w, sign);
    auto it = g_plans_f.find(key);
    if (it != g_plans_f.end()) return it->second;
    std::vector<std::complex<float>> tmp_in(size_t(h) * w), tmp_out(size_t(h) * w);
    fftwf_plan p = fftwf_plan_dft_2d(h, w,
                                     reinterpret_cast<fftwf_complex*>(tmp_in.data()),
                                     reinterpret_cast<fftwf_complex*>(tmp_out.data()),
                                     sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    g_plans_f.emplace(key, p);
    return p;
}

fftw_plan plan_d(int h, int w, int sign) {
    std::lock_guard<std::mutex> lock(g_plan_mutex);
    auto key = std::make_tuple(h, w, sign);
    auto it = g_plans_d.find(key);
    if (it != g_plans_d.end()) return it->second;
    std::vector<std::complex<double>> tmp_in(size_t(h) * w), tmp_out(size_t(h) * w);
    fftw_plan p = fftw_plan_dft_2d(h, w,
                                   reinterpret_cast<fftw_complex*>(tmp_in.data()),
                                   reinterpret_cast<fftw_complex*>(tmp_out.data()),
                                   sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    g_plans_d.emplace(key, p);
    return p;
}

// ifftshift: out[j] = in[(j + c) mod n] per axis, c = floor(n/2).
template <typename C>
void ifftshift2(const C* in, C* out, int h, int w) {
    int ch = h / 2, cw = w / 2;
    for (int r = 0; r < h; ++r) {
        int rs = (r + ch) % h;
        const C* src = in + size_t(rs) * w;
        C* dst = out + size_t(r) * w;
        for (int c = 0; c < w; ++c) dst[c] = src[(c + cw) % w];
    }
}

// fftshift: out[j] = in[(j - c) mod n] per axis, c = floor(n/2).
template <typename C>
void fftshift2(const C* in, C* out, int h, int w) {
    int ch = h / 2, cw = w / 2;
    for (int r = 0; r < h; ++r) {
        int rs = (r - ch + h) % h;
        const C* src = in + size_t(rs) * w;
        C* dst = out + size_t(r) * w;
        for (int c = 0; c < w; ++c) dst[c] = src[(c - cw + w) % w];
    }
}

template <typename C, typename Plan, typename Exec>
void centered_2d(const C* in, C* out, int h, int w, Plan plan, Exec exec, double scale) {
    std::vector<C> a(size_t(h) * w), b(size_t(h) * w);
    ifftshift2(in, a.data(), h, w);
    exec(plan, a.data(), b.data());
    fftshift2(b.data(), out, h, w);
    using R = typename C::value_type;
    R s = static_cast<R>(scale);
    for (size_t i = 0; i < size_t(h) * w; ++i) out[i] *= s;
}

void exec_f(fftwf_plan p, std::complex<float>* in, std::complex<float>* out) {
    fftwf_execute_dft(p, reinterpret_cast<fftwf_complex*>(in),
                      reinterpret_cast<fftwf_complex*>(out));
}
void exec_d(fftw_plan p, std::complex<double>* in, std::complex<double>* out) {
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(in),
                     reinterpret_cast<fftw_complex*>(out));
}

} // namespace

void fft2c_slice_f(const std::complex<float>* in, std::complex<float>* out, int h, int w) {
    centered_2d(in, out, h, w, plan_f(h, w, FFTW_FORWARD), exec_f, 1.0 / std::sqrt(double(h) * w));
}
void ifft2c_slice_f(const std::complex<float>* in, std::complex<float>* out, int h, int w) {
    centered_2d(in, out, h, w, plan_f(h, w, FFTW_BACKWARD), exec_f, 1.0 / std::sqrt(double(h) * w));
}
void fft2c_slice_d(const std::complex<double>* in, std::complex<double>* out, int h, int w) {
    centered_2d(in, out, h, w, plan_d(h, w, FFTW_FORWARD), exec_d, 1.0 / std::sqrt(double(h) * w));
}
void ifft2c_slice_d(const std::complex<double>* in, std::complex<double>* out, int h, int w) {
    centered_2d(in, out, h, w, plan_d(h, w, FFTW_BACKWARD), exec_d, 1.0 / std::sqrt(double(h) * w));
}

ComplexVolume fft2c(const ComplexVolume& v) {
    if (v.domain != Domain::image)
        throw usage_error("fft2c: expected an image-domain volume");
    ComplexVolume out(v.depth, v.height, v.width, Domain::kspace);
    size_t slice = size_t(v.height) * v.width;
    for (int d = 0; d < v.depth; ++d)
        fft2c_slice_f(v.data.data() + d * slice, out.data.data() + d * slice, v.height, v.width);
    return out;
}

ComplexVolume ifft2c(const ComplexVolume& k) {
    if (k.domain != Domain::kspace)
        throw usage_error("ifft2c: expected a k-space volume");
    ComplexVolume out(k.depth, k.height, k.width, Domain::image);
    size_t slice = size_t(k.height) * k.width;
    for (int d = 0; d < k.depth; ++d)
        ifft2c_slice_f(k.data.data() + d * slice, out.data.data() + d * slice, k.height, k.width);
    return out;
}

RmsNormalized rms_normalize(const std::vector<ComplexVolume>& timepoints) {
    if (timepoints.empty()) throw validation_error("rms_normalize: no timepoints");
    const ComplexVolume& pre = timepoints.front();
    for (const auto& t : timepoints) {
        if (!t.same_shape(pre)) throw validation_error("rms_normalize: shape mismatch");
        if (t.domain != pre.domain) throw usage_error("rms_normalize: mixed domains");
    }
    double mean_sq = pre.energy() / static_cast<double>(pre.size());
    if (!(mean_sq > 0.0))
        throw degenerate_input_error("rms_normalize: pre-contrast volume has zero energy");
    double scale = std::sqrt(mean_sq);

    RmsNormalized out;
    out.scale = scale;
    out.volumes = timepoints;
    float inv = static_cast<float>(1.0 / scale);
    for (auto& vol : out.volumes)
        for (auto& s : vol.data) s *= inv;
    return out;
}

ComplexVolume temporal_subtract(const Exam& exam, Domain representation, SubtractionTimepoint tp) {
    const ComplexVolume& post = (tp == SubtractionTimepoint::post2) ? exam.post2 : exam.post1;
    if (!post.same_shape(exam.pre))
        throw validation_error("temporal_subtract: timepoint shapes differ");

    auto subtract = [](const ComplexVolume& a, const ComplexVolume& b) {
        ComplexVolume out = a;
        for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
        return out;
    };

    if (representation == Domain::image) return subtract(post, exam.pre);
    return subtract(fft2c(post), fft2c(exam.pre));
}

ComplexVolume prepare_subtraction_kspace(const Exam& exam, SubtractionTimepoint tp) {
    std::vector<ComplexVolume> k = {fft2c(exam.pre), fft2c(exam.post1), fft2c(exam.post2)};
    RmsNormalized norm = rms_normalize(k);
    const ComplexVolume& post = (tp == SubtractionTimepoint::post2) ? norm.volumes[2] : norm.volumes[1];
    ComplexVolume out = post;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= norm.volumes[0].data[i];
    return out;
}

namespace {

// Per-axis ramp weight for a voxel at distance d (0 = outermost content
// voxel) from the content edge, rising smoothly toward 1 over taper voxels.
double taper_weight(long d, int taper) {
    if (d >= taper) return 1.0;
    double s = std::sin(M_PI * (double(d) + 1.0) / (2.0 * (taper + 1)));
    return s * s;
}

} // namespace

ComplexVolume pad_crop_taper(const ComplexVolume& v, int target_h, int target_w, int taper_width) {
    if (taper_width < 0) throw validation_error("pad_crop_taper: taper_width must be >= 0");
    if (target_h < 1 || target_w < 1)
        throw validation_error("pad_crop_taper: target shape must be positive");
    if (target_h <= 2 * taper_width || target_w <= 2 * taper_width)
        throw validation_error("pad_crop_taper: target must exceed 2*taper_width");

    // Offsets keep the DC-at-floor(n/2) convention aligned between shapes.
    auto content_start = [](int target, int cur) { return target / 2 - cur / 2; };

    int off_h = content_start(target_h, v.height); // content position in target (may be < 0 = crop)
    int off_w = content_start(target_w, v.width);

    int pad_top = std::max(0, off_h);
    int pad_bottom = std::max(0, target_h - off_h - v.height);
    int pad_left = std::max(0, off_w);
    int pad_right = std::max(0, target_w - off_w - v.width);
    for (int pad : {pad_top, pad_bottom, pad_left, pad_right})
        if (pad > 0 && taper_width > pad)
            throw validation_error("pad_crop_taper: taper_width exceeds pad amount");

    ComplexVolume out(v.depth, target_h, target_w, v.domain);
    for (int d = 0; d < v.depth; ++d) {
        for (int th = 0; th < target_h; ++th) {
            int sh = th - off_h;
            if (sh < 0 || sh >= v.height) continue;
            for (int tw = 0; tw < target_w; ++tw) {
                int sw = tw - off_w;
                if (sw < 0 || sw >= v.width) continue;
                double wgt = 1.0;
                if (pad_top > 0) wgt *= taper_weight(sh, taper_width);
                if (pad_bottom > 0) wgt *= taper_weight(long(v.height) - 1 - sh, taper_width);
                if (pad_left > 0) wgt *= taper_weight(sw, taper_width);
                if (pad_right > 0) wgt *= taper_weight(long(v.width) - 1 - sw, taper_width);
                std::complex<float> s = v.at(d, sh, sw);
                out.at(d, th, tw) = (wgt == 1.0) ? s : s * static_cast<float>(wgt);
            }
        }
    }
    return out;
}

} // namespace kseg
