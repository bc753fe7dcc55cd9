#include "kseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "kseg/errors.hpp"
#include "kseg/sampling.hpp"

namespace kseg {

void PhantomSpec::validate() const {
    if (depth < 8 || height < 8 || width < 8)
        throw validation_error("PhantomSpec: depth, height and width must be >= 8");
    if (height % 2 != 0 || width % 2 != 0)
        throw validation_error("PhantomSpec: height and width must be even");
    if (lesion_count_min < 1 || lesion_count_max < lesion_count_min)
        throw validation_error("PhantomSpec: lesion count range must satisfy 1 <= min <= max");
    if (lesion_radius_min <= 0.0 || lesion_radius_max < lesion_radius_min)
        throw validation_error("PhantomSpec: lesion radius range must satisfy 0 < min <= max");
    if (lesion_radius_max >= std::min(height, width) / 4.0)
        throw validation_error("PhantomSpec: lesion radii must be smaller than min(height, width)/4");
    if (enhancement_factor <= 1.0)
        throw validation_error("PhantomSpec: enhancement_factor must exceed 1");
    if (background_texture_scale < 0.0 || background_texture_scale > 0.5)
        throw validation_error("PhantomSpec: background_texture_scale must be in [0, 0.5]");
    if (phase_smoothness <= 0.0)
        throw validation_error("PhantomSpec: phase_smoothness must be positive");
    if (noise_floor < 0.0)
        throw validation_error("PhantomSpec: noise_floor must be >= 0");
}

namespace {

struct Field {
    int d, h, w;
    std::vector<double> v;
    Field(int d_, int h_, int w_) : d(d_), h(h_), w(w_), v(size_t(d_) * h_ * w_, 0.0) {}
    double& at(int z, int y, int x) { return v[(size_t(z) * h + y) * w + x]; }
    double at(int z, int y, int x) const { return v[(size_t(z) * h + y) * w + x]; }
};

Field gaussian_field(SplitMix64& stream, int d, int h, int w) {
    Field f(d, h, w);
    size_t n = f.v.size();
    for (size_t i = 0; i + 1 < n; i += 2) {
        auto [a, b] = stream.next_gaussian_pair();
        f.v[i] = a;
        f.v[i + 1] = b;
    }
    if (n % 2 == 1) f.v[n - 1] = stream.next_gaussian_pair().first;
    return f;
}

// Separable Gaussian smoothing, zero padding at the borders.
void smooth(Field& f, double sigma) {
    if (sigma <= 0.0) return;
    int radius = std::max(1, int(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    auto pass = [&](int axis) {
        Field out(f.d, f.h, f.w);
        int len = axis == 0 ? f.d : axis == 1 ? f.h : f.w;
        for (int z = 0; z < f.d; ++z)
            for (int y = 0; y < f.h; ++y)
                for (int x = 0; x < f.w; ++x) {
                    double acc = 0.0;
                    int pos = axis == 0 ? z : axis == 1 ? y : x;
                    for (int k = -radius; k <= radius; ++k) {
                        int p = pos + k;
                        if (p < 0 || p >= len) continue;
                        double s = axis == 0 ? f.at(p, y, x)
                                 : axis == 1 ? f.at(z, p, x)
                                             : f.at(z, y, p);
                        acc += kernel[k + radius] * s;
                    }
                    out.at(z, y, x) = acc;
                }
        f = std::move(out);
    };
    pass(0);
    pass(1);
    pass(2);
}

void normalize_rms(Field& f) {
    double ss = 0.0;
    for (double s : f.v) ss += s * s;
    double rms = std::sqrt(ss / double(f.v.size()));
    if (rms > 0.0)
        for (double& s : f.v) s /= rms;
}

// Per-axis raised-cosine support window: zero margin at the border, cosine
// ramp, flat interior.
double support_window(int i, int n) {
    constexpr double margin = 0.04, ramp = 0.18;
    double u = (i + 0.5) / n;
    double e = std::min(u, 1.0 - u);
    if (e <= margin) return 0.0;
    if (e < margin + ramp) return 0.5 * (1.0 - std::cos(M_PI * (e - margin) / ramp));
    return 1.0;
}

} // namespace

Exam generate_exam(const PhantomSpec& spec, int patient_index, uint64_t seed) {
    spec.validate();
    if (patient_index < 0) throw validation_error("generate_exam: patient_index must be >= 0");

    std::ostringstream tag;
    tag << "exam|s=" << seed << "|p=" << patient_index;
    SplitMix64 stream(fnv1a64(tag.str()));

    const int D = spec.depth, H = spec.height, W = spec.width;

    Exam exam;
    exam.patient_index = patient_index;

    // Lesion geometry. The interior box keeps whole ellipsoids inside the
    // flat region of the support so no ground truth falls outside it.
    int count = spec.lesion_count_min +
                int(stream.next_below(uint64_t(spec.lesion_count_max - spec.lesion_count_min + 1)));
    constexpr double interior_lo = 0.23, interior_hi = 0.77;
    for (int l = 0; l < count; ++l) {
        double radius = spec.lesion_radius_min +
                        stream.next_double() * (spec.lesion_radius_max - spec.lesion_radius_min);
        // Anisotropy normalized to unit geometric mean keeps the analytic
        // volume equal to a radius-r sphere.
        std::array<double, 3> u;
        for (auto& a : u) a = 0.8 + 0.4 * stream.next_double();
        double gm = std::cbrt(u[0] * u[1] * u[2]);
        LesionEllipsoid les;
        for (int a = 0; a < 3; ++a) les.half_axes[a] = radius * u[a] / gm;

        std::array<int, 3> dims = {D, H, W};
        for (int a = 0; a < 3; ++a) {
            double lo = interior_lo * dims[a] + les.half_axes[a];
            double hi = interior_hi * dims[a] - les.half_axes[a];
            if (hi < lo) { lo = hi = 0.5 * dims[a]; }
            les.center[a] = lo + stream.next_double() * (hi - lo);
        }
        exam.lesions.push_back(les);
    }

    double u1 = 0.4 + 0.2 * stream.next_double(); // post1 fraction of full enhancement

    Field texture = gaussian_field(stream, D, H, W);
    smooth(texture, 2.0);
    normalize_rms(texture);

    Field parenchyma = gaussian_field(stream, D, H, W);
    smooth(parenchyma, 6.0);
    normalize_rms(parenchyma);
    for (double& s : parenchyma.v) s = s * s / (1.0 + s * s); // smooth, nonnegative, < 1

    Field phase = gaussian_field(stream, D, H, W);
    smooth(phase, spec.phase_smoothness / 2.0);
    normalize_rms(phase);

    std::array<Field, 3> phase_delta = {Field(D, H, W), Field(D, H, W), Field(D, H, W)};
    for (auto& pd : phase_delta) {
        pd = gaussian_field(stream, D, H, W);
        smooth(pd, spec.phase_smoothness / 2.0);
        normalize_rms(pd);
    }

    exam.lesion_mask = MaskVolume(D, H, W);
    exam.pre = ComplexVolume(D, H, W, Domain::image);
    exam.post1 = ComplexVolume(D, H, W, Domain::image);
    exam.post2 = ComplexVolume(D, H, W, Domain::image);

    const double ef = spec.enhancement_factor;
    const double g2 = 0.2, g1 = u1 * 0.2; // parenchymal enhancement amplitudes

    for (int z = 0; z < D; ++z) {
        double wz = support_window(z, D);
        for (int y = 0; y < H; ++y) {
            double wy = support_window(y, H);
            for (int x = 0; x < W; ++x) {
                double support = wz * wy * support_window(x, W);

                // Soft lesion field: 1 inside the analytic ellipsoid, cosine
                // ramp over ~1 voxel outside it.
                double lesion_soft = 0.0;
                bool inside = false;
                for (const auto& les : exam.lesions) {
                    double e = 0.0;
                    double dz = (z - les.center[0]) / les.half_axes[0];
                    double dy = (y - les.center[1]) / les.half_axes[1];
                    double dx = (x - les.center[2]) / les.half_axes[2];
                    e = dz * dz + dy * dy + dx * dx;
                    double rho = std::sqrt(e);
                    double delta = 1.0 / std::max(1.0, std::cbrt(les.half_axes[0] *
                                                                 les.half_axes[1] *
                                                                 les.half_axes[2]));
                    double soft;
                    if (rho <= 1.0) {
                        soft = 1.0;
                        inside = true;
                    } else if (rho < 1.0 + delta) {
                        soft = 0.5 * (1.0 + std::cos(M_PI * (rho - 1.0) / delta));
                    } else {
                        soft = 0.0;
                    }
                    lesion_soft = std::max(lesion_soft, soft);
                }
                if (inside) exam.lesion_mask.at(z, y, x) = 1;

                double tex = std::max(0.05, 1.0 + spec.background_texture_scale * texture.at(z, y, x));
                double background = support * tex + spec.noise_floor;

                double p = parenchyma.at(z, y, x) * support;
                double m_pre = background;
                double m_post1 = background * (1.0 + u1 * (ef - 1.0) * lesion_soft + g1 * p);
                double m_post2 = background * (1.0 + (ef - 1.0) * lesion_soft + g2 * p);

                double ph = 0.9 * phase.at(z, y, x);
                auto sample = [&](double mag, const Field& delta) {
                    double a = ph + 0.12 * delta.at(z, y, x);
                    return std::complex<float>(float(mag * std::cos(a)), float(mag * std::sin(a)));
                };
                exam.pre.at(z, y, x) = sample(m_pre, phase_delta[0]);
                exam.post1.at(z, y, x) = sample(m_post1, phase_delta[1]);
                exam.post2.at(z, y, x) = sample(m_post2, phase_delta[2]);
            }
        }
    }

    if (exam.lesion_mask.foreground_count() == 0)
        throw validation_error("generate_exam: produced an empty lesion mask; "
                               "lesion radii are too small for this grid");
    return exam;
}

std::vector<Exam> generate_cohort(const PhantomSpec& spec, int n_patients, uint64_t seed) {
    if (n_patients < 1) throw validation_error("generate_cohort: n_patients must be >= 1");
    std::vector<Exam> cohort;
    cohort.reserve(n_patients);
    for (int i = 0; i < n_patients; ++i) cohort.push_back(generate_exam(spec, i, seed));
    return cohort;
}

} // namespace kseg
