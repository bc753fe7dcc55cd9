#pragma once

#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "kseg/errors.hpp"
#include "kseg/kspace.hpp"
#include "kseg/nn/blas.hpp"
#include "kseg/nn/tensor.hpp"
#include "kseg/sampling.hpp"

namespace kseg::nn {

/// One node of a static layer graph. forward(training=true) caches whatever
/// backward needs; backward returns the input gradient and accumulates
/// parameter gradients. Inference-mode forwards keep no state and are safe
/// to run concurrently on distinct layer instances.
template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<T> forward(const Tensor<T>& x, bool training) = 0;
    virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
    virtual void collect_params(std::vector<Param<T>*>& out) { (void)out; }
    virtual Shape5 output_shape(const Shape5& in) const = 0;
    virtual uint64_t macs(const Shape5& in) const { (void)in; return 0; }
};

template <typename T>
using LayerPtr = std::unique_ptr<Layer<T>>;

namespace detail {

/// PyTorch-style uniform init: U(-1/sqrt(fan), 1/sqrt(fan)).
template <typename T>
void uniform_init(std::vector<T>& v, size_t fan, SplitMix64& stream) {
    double bound = 1.0 / std::sqrt(double(fan));
    for (auto& x : v) x = static_cast<T>((2.0 * stream.next_double() - 1.0) * bound);
}

// col layout: (C * kd*kh*kw) rows x (od*oh*ow) columns, row-major.
template <typename T>
void im2col(const T* src, int C, int D, int H, int W, const int k[3], const int s[3],
            const int p[3], int OD, int OH, int OW, T* col) {
    const size_t onum = size_t(OD) * OH * OW;
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        const T* plane = src + size_t(c) * D * H * W;
        for (int kd = 0; kd < k[0]; ++kd)
            for (int kh = 0; kh < k[1]; ++kh)
                for (int kw = 0; kw < k[2]; ++kw, ++row) {
                    T* dst = col + row * onum;
                    size_t i = 0;
                    for (int od = 0; od < OD; ++od) {
                        int z = od * s[0] - p[0] + kd;
                        bool z_ok = (z >= 0 && z < D);
                        for (int oh = 0; oh < OH; ++oh) {
                            int y = oh * s[1] - p[1] + kh;
                            bool y_ok = z_ok && (y >= 0 && y < H);
                            int x0 = -p[2] + kw;
                            const T* line = plane + (size_t(z) * H + y) * W;
                            for (int ow = 0; ow < OW; ++ow, ++i) {
                                int x = ow * s[2] + x0;
                                dst[i] = (y_ok && x >= 0 && x < W) ? line[x] : T(0);
                            }
                        }
                    }
                }
    }
}

/// Adjoint of im2col: scatter-add the column matrix back onto the grid.
template <typename T>
void col2im(const T* col, int C, int D, int H, int W, const int k[3], const int s[3],
            const int p[3], int OD, int OH, int OW, T* dst) {
    const size_t onum = size_t(OD) * OH * OW;
    size_t row = 0;
    for (int c = 0; c < C; ++c) {
        T* plane = dst + size_t(c) * D * H * W;
        for (int kd = 0; kd < k[0]; ++kd)
            for (int kh = 0; kh < k[1]; ++kh)
                for (int kw = 0; kw < k[2]; ++kw, ++row) {
                    const T* src = col + row * onum;
                    size_t i = 0;
                    for (int od = 0; od < OD; ++od) {
                        int z = od * s[0] - p[0] + kd;
                        bool z_ok = (z >= 0 && z < D);
                        for (int oh = 0; oh < OH; ++oh) {
                            int y = oh * s[1] - p[1] + kh;
                            bool y_ok = z_ok && (y >= 0 && y < H);
                            int x0 = -p[2] + kw;
                            T* line = plane + (size_t(z) * H + y) * W;
                            for (int ow = 0; ow < OW; ++ow, ++i) {
                                int x = ow * s[2] + x0;
                                if (y_ok && x >= 0 && x < W) line[x] += src[i];
                            }
                        }
                    }
                }
    }
}

} // namespace detail

template <typename T>
class Conv3d : public Layer<T> {
public:
    Conv3d(int in_ch, int out_ch, std::array<int, 3> kernel, std::array<int, 3> stride,
           SplitMix64& stream, std::string name)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), s_(stride),
          p_{kernel[0] / 2, kernel[1] / 2, kernel[2] / 2} {
        size_t kvol = size_t(k_[0]) * k_[1] * k_[2];
        weight_.name = name + ".weight";
        weight_.dims = {out_ch_, in_ch_, k_[0], k_[1], k_[2]};
        weight_.value.resize(size_t(out_ch_) * in_ch_ * kvol);
        weight_.grad.assign(weight_.value.size(), T(0));
        bias_.name = name + ".bias";
        bias_.dims = {out_ch_};
        bias_.value.resize(out_ch_);
        bias_.grad.assign(out_ch_, T(0));
        size_t fan_in = size_t(in_ch_) * kvol;
        detail::uniform_init(weight_.value, fan_in, stream);
        detail::uniform_init(bias_.value, fan_in, stream);
    }

    Shape5 output_shape(const Shape5& in) const override {
        Shape5 out = in;
        out[1] = out_ch_;
        for (int a = 0; a < 3; ++a) out[2 + a] = (in[2 + a] + 2 * p_[a] - k_[a]) / s_[a] + 1;
        return out;
    }

    uint64_t macs(const Shape5& in) const override {
        Shape5 o = output_shape(in);
        uint64_t kvol = uint64_t(k_[0]) * k_[1] * k_[2];
        return uint64_t(o[0]) * o[2] * o[3] * o[4] * in_ch_ * out_ch_ * kvol;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Shape5 os = output_shape(x.shape);
        Tensor<T> y(os);
        const size_t ck = size_t(in_ch_) * k_[0] * k_[1] * k_[2];
        const size_t onum = size_t(os[2]) * os[3] * os[4];
        std::vector<T> col(ck * onum);
        for (int n = 0; n < x.n(); ++n) {
            detail::im2col(x.sample(n), in_ch_, x.d(), x.h(), x.w(), k_.data(), s_.data(),
                           p_.data(), os[2], os[3], os[4], col.data());
            gemm(false, false, out_ch_, int(onum), int(ck), T(1), weight_.value.data(), int(ck),
                 col.data(), int(onum), T(0), y.sample(n), int(onum));
            for (int c = 0; c < out_ch_; ++c) {
                T b = bias_.value[c];
                T* dst = y.sample(n) + size_t(c) * onum;
                for (size_t i = 0; i < onum; ++i) dst[i] += b;
            }
        }
        if (training) cached_input_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        const Tensor<T>& x = cached_input_;
        Tensor<T> gx(x.shape);
        const size_t ck = size_t(in_ch_) * k_[0] * k_[1] * k_[2];
        const size_t onum = size_t(gy.d()) * gy.h() * gy.w();
        std::vector<T> col(ck * onum), colg(ck * onum);
        for (int n = 0; n < x.n(); ++n) {
            detail::im2col(x.sample(n), in_ch_, x.d(), x.h(), x.w(), k_.data(), s_.data(),
                           p_.data(), gy.d(), gy.h(), gy.w(), col.data());
            // dW += gy * col^T
            gemm(false, true, out_ch_, int(ck), int(onum), T(1), gy.sample(n), int(onum),
                 col.data(), int(onum), T(1), weight_.grad.data(), int(ck));
            for (int c = 0; c < out_ch_; ++c) {
                const T* src = gy.sample(n) + size_t(c) * onum;
                T acc = T(0);
                for (size_t i = 0; i < onum; ++i) acc += src[i];
                bias_.grad[c] += acc;
            }
            // dX = col2im(W^T * gy)
            gemm(true, false, int(ck), int(onum), out_ch_, T(1), weight_.value.data(), int(ck),
                 gy.sample(n), int(onum), T(0), colg.data(), int(onum));
            detail::col2im(colg.data(), in_ch_, x.d(), x.h(), x.w(), k_.data(), s_.data(),
                           p_.data(), gy.d(), gy.h(), gy.w(), gx.sample(n));
        }
        return gx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

private:
    int in_ch_, out_ch_;
    std::array<int, 3> k_, s_, p_;
    Param<T> weight_, bias_;
    Tensor<T> cached_input_;
};

template <typename T>
class ConvTranspose3d : public Layer<T> {
public:
    ConvTranspose3d(int in_ch, int out_ch, std::array<int, 3> kernel, std::array<int, 3> stride,
                    SplitMix64& stream, std::string name)
        : in_ch_(in_ch), out_ch_(out_ch), k_(kernel), s_(stride),
          p_{kernel[0] / 2, kernel[1] / 2, kernel[2] / 2},
          op_{stride[0] - 1, stride[1] - 1, stride[2] - 1} {
        size_t kvol = size_t(k_[0]) * k_[1] * k_[2];
        weight_.name = name + ".weight";
        weight_.dims = {in_ch_, out_ch_, k_[0], k_[1], k_[2]};
        weight_.value.resize(size_t(in_ch_) * out_ch_ * kvol);
        weight_.grad.assign(weight_.value.size(), T(0));
        bias_.name = name + ".bias";
        bias_.dims = {out_ch_};
        bias_.value.resize(out_ch_);
        bias_.grad.assign(out_ch_, T(0));
        size_t fan = size_t(out_ch_) * kvol;
        detail::uniform_init(weight_.value, fan, stream);
        detail::uniform_init(bias_.value, fan, stream);
    }

    Shape5 output_shape(const Shape5& in) const override {
        Shape5 out = in;
        out[1] = out_ch_;
        for (int a = 0; a < 3; ++a)
            out[2 + a] = (in[2 + a] - 1) * s_[a] - 2 * p_[a] + k_[a] + op_[a];
        return out;
    }

    uint64_t macs(const Shape5& in) const override {
        uint64_t kvol = uint64_t(k_[0]) * k_[1] * k_[2];
        return uint64_t(in[0]) * in[2] * in[3] * in[4] * in_ch_ * out_ch_ * kvol;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Shape5 os = output_shape(x.shape);
        Tensor<T> y(os);
        const size_t ck = size_t(out_ch_) * k_[0] * k_[1] * k_[2];
        const size_t inum = x.spatial();
        std::vector<T> col(ck * inum);
        for (int n = 0; n < x.n(); ++n) {
            // col = W^T * x, scattered back onto the upsampled grid.
            gemm(true, false, int(ck), int(inum), in_ch_, T(1), weight_.value.data(), int(ck),
                 x.sample(n), int(inum), T(0), col.data(), int(inum));
            detail::col2im(col.data(), out_ch_, os[2], os[3], os[4], k_.data(), s_.data(),
                           p_.data(), x.d(), x.h(), x.w(), y.sample(n));
            const size_t onum = size_t(os[2]) * os[3] * os[4];
            for (int c = 0; c < out_ch_; ++c) {
                T b = bias_.value[c];
                T* dst = y.sample(n) + size_t(c) * onum;
                for (size_t i = 0; i < onum; ++i) dst[i] += b;
            }
        }
        if (training) cached_input_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        const Tensor<T>& x = cached_input_;
        Tensor<T> gx(x.shape);
        const size_t ck = size_t(out_ch_) * k_[0] * k_[1] * k_[2];
        const size_t inum = x.spatial();
        std::vector<T> colg(ck * inum);
        for (int n = 0; n < x.n(); ++n) {
            detail::im2col(gy.sample(n), out_ch_, gy.d(), gy.h(), gy.w(), k_.data(), s_.data(),
                           p_.data(), x.d(), x.h(), x.w(), colg.data());
            // dX = W * colg
            gemm(false, false, in_ch_, int(inum), int(ck), T(1), weight_.value.data(), int(ck),
                 colg.data(), int(inum), T(0), gx.sample(n), int(inum));
            // dW += x * colg^T
            gemm(false, true, in_ch_, int(ck), int(inum), T(1), x.sample(n), int(inum),
                 colg.data(), int(inum), T(1), weight_.grad.data(), int(ck));
            const size_t onum = gy.spatial();
            for (int c = 0; c < out_ch_; ++c) {
                const T* src = gy.sample(n) + size_t(c) * onum;
                T acc = T(0);
                for (size_t i = 0; i < onum; ++i) acc += src[i];
                bias_.grad[c] += acc;
            }
        }
        return gx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&weight_);
        out.push_back(&bias_);
    }

private:
    int in_ch_, out_ch_;
    std::array<int, 3> k_, s_, p_, op_;
    Param<T> weight_, bias_;
    Tensor<T> cached_input_;
};

template <typename T>
class GroupNorm : public Layer<T> {
public:
    GroupNorm(int groups, int channels, std::string name, double eps = 1e-5)
        : groups_(groups), channels_(channels), eps_(eps) {
        if (channels % groups != 0)
            throw validation_error("GroupNorm: channels (" + std::to_string(channels) +
                                   ") must be divisible by groups (" + std::to_string(groups) + ")");
        gamma_.name = name + ".weight";
        gamma_.dims = {channels};
        gamma_.value.assign(channels, T(1));
        gamma_.grad.assign(channels, T(0));
        beta_.name = name + ".bias";
        beta_.dims = {channels};
        beta_.value.assign(channels, T(0));
        beta_.grad.assign(channels, T(0));
    }

    Shape5 output_shape(const Shape5& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> y(x.shape);
        const int cpg = channels_ / groups_;
        const size_t sp = x.spatial();
        const size_t gsize = size_t(cpg) * sp;
        std::vector<T> invstd(size_t(x.n()) * groups_), means(size_t(x.n()) * groups_);
        for (int n = 0; n < x.n(); ++n) {
            for (int g = 0; g < groups_; ++g) {
                const T* src = x.sample(n) + size_t(g) * gsize;
                double mean = 0.0;
                for (size_t i = 0; i < gsize; ++i) mean += src[i];
                mean /= double(gsize);
                double var = 0.0;
                for (size_t i = 0; i < gsize; ++i) {
                    double d = src[i] - mean;
                    var += d * d;
                }
                var /= double(gsize);
                T istd = T(1.0 / std::sqrt(var + eps_));
                means[size_t(n) * groups_ + g] = T(mean);
                invstd[size_t(n) * groups_ + g] = istd;
                T* dst = y.sample(n) + size_t(g) * gsize;
                for (int cc = 0; cc < cpg; ++cc) {
                    int c = g * cpg + cc;
                    T gm = gamma_.value[c], bt = beta_.value[c];
                    const T* s2 = src + size_t(cc) * sp;
                    T* d2 = dst + size_t(cc) * sp;
                    for (size_t i = 0; i < sp; ++i)
                        d2[i] = (s2[i] - T(means[size_t(n) * groups_ + g])) * istd * gm + bt;
                }
            }
        }
        if (training) {
            cached_input_ = x;
            cached_invstd_ = std::move(invstd);
            cached_mean_ = std::move(means);
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        const Tensor<T>& x = cached_input_;
        Tensor<T> gx(x.shape);
        const int cpg = channels_ / groups_;
        const size_t sp = x.spatial();
        const size_t gsize = size_t(cpg) * sp;
        for (int n = 0; n < x.n(); ++n) {
            for (int g = 0; g < groups_; ++g) {
                T mean = cached_mean_[size_t(n) * groups_ + g];
                T istd = cached_invstd_[size_t(n) * groups_ + g];
                const T* xs = x.sample(n) + size_t(g) * gsize;
                const T* gys = gy.sample(n) + size_t(g) * gsize;
                T* gxs = gx.sample(n) + size_t(g) * gsize;

                // Accumulate per-channel param grads and group-level sums of
                // ghat and ghat*xhat.
                double sum_gh = 0.0, sum_ghx = 0.0;
                for (int cc = 0; cc < cpg; ++cc) {
                    int c = g * cpg + cc;
                    T gm = gamma_.value[c];
                    const T* xc = xs + size_t(cc) * sp;
                    const T* gc = gys + size_t(cc) * sp;
                    double gsum = 0.0, gxsum = 0.0;
                    for (size_t i = 0; i < sp; ++i) {
                        T xhat = (xc[i] - mean) * istd;
                        gsum += gc[i];
                        gxsum += double(gc[i]) * xhat;
                        sum_gh += double(gc[i]) * gm;
                        sum_ghx += double(gc[i]) * gm * xhat;
                    }
                    gamma_.grad[c] += T(gxsum);
                    beta_.grad[c] += T(gsum);
                }
                T mean_gh = T(sum_gh / double(gsize));
                T mean_ghx = T(sum_ghx / double(gsize));
                for (int cc = 0; cc < cpg; ++cc) {
                    int c = g * cpg + cc;
                    T gm = gamma_.value[c];
                    const T* xc = xs + size_t(cc) * sp;
                    const T* gc = gys + size_t(cc) * sp;
                    T* go = gxs + size_t(cc) * sp;
                    for (size_t i = 0; i < sp; ++i) {
                        T xhat = (xc[i] - mean) * istd;
                        go[i] = istd * (gc[i] * gm - mean_gh - xhat * mean_ghx);
                    }
                }
            }
        }
        return gx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&gamma_);
        out.push_back(&beta_);
    }

private:
    int groups_, channels_;
    double eps_;
    Param<T> gamma_, beta_;
    Tensor<T> cached_input_;
    std::vector<T> cached_invstd_, cached_mean_;
};

template <typename T>
class LeakyReLU : public Layer<T> {
public:
    explicit LeakyReLU(double slope) : slope_(T(slope)) {}

    Shape5 output_shape(const Shape5& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> y(x.shape);
        if (training) mask_.assign(x.numel(), 0);
        for (size_t i = 0; i < x.numel(); ++i) {
            bool pos = x.data[i] > T(0);
            y.data[i] = pos ? x.data[i] : slope_ * x.data[i];
            if (training) mask_[i] = pos;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        Tensor<T> gx(gy.shape);
        for (size_t i = 0; i < gy.numel(); ++i)
            gx.data[i] = mask_[i] ? gy.data[i] : slope_ * gy.data[i];
        return gx;
    }

private:
    T slope_;
    std::vector<uint8_t> mask_;
};

/// Softmax over the channel dimension.
template <typename T>
class Softmax : public Layer<T> {
public:
    Shape5 output_shape(const Shape5& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> y(x.shape);
        const int C = x.c();
        const size_t sp = x.spatial();
        for (int n = 0; n < x.n(); ++n) {
            const T* xs = x.sample(n);
            T* ys = y.sample(n);
            for (size_t i = 0; i < sp; ++i) {
                T mx = xs[i];
                for (int c = 1; c < C; ++c) mx = std::max(mx, xs[size_t(c) * sp + i]);
                T sum = T(0);
                for (int c = 0; c < C; ++c) {
                    T e = std::exp(xs[size_t(c) * sp + i] - mx);
                    ys[size_t(c) * sp + i] = e;
                    sum += e;
                }
                for (int c = 0; c < C; ++c) ys[size_t(c) * sp + i] /= sum;
            }
        }
        if (training) cached_output_ = y;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        const Tensor<T>& y = cached_output_;
        Tensor<T> gx(gy.shape);
        const int C = gy.c();
        const size_t sp = gy.spatial();
        for (int n = 0; n < gy.n(); ++n) {
            const T* ys = y.sample(n);
            const T* gs = gy.sample(n);
            T* go = gx.sample(n);
            for (size_t i = 0; i < sp; ++i) {
                T dot = T(0);
                for (int c = 0; c < C; ++c) dot += gs[size_t(c) * sp + i] * ys[size_t(c) * sp + i];
                for (int c = 0; c < C; ++c)
                    go[size_t(c) * sp + i] =
                        ys[size_t(c) * sp + i] * (gs[size_t(c) * sp + i] - dot);
            }
        }
        return gx;
    }

private:
    Tensor<T> cached_output_;
};

template <typename T>
class Sequential : public Layer<T> {
public:
    Sequential() = default;
    void add(LayerPtr<T> layer) { layers_.push_back(std::move(layer)); }
    size_t size() const { return layers_.size(); }

    Shape5 output_shape(const Shape5& in) const override {
        Shape5 s = in;
        for (const auto& l : layers_) s = l->output_shape(s);
        return s;
    }

    uint64_t macs(const Shape5& in) const override {
        Shape5 s = in;
        uint64_t total = 0;
        for (const auto& l : layers_) {
            total += l->macs(s);
            s = l->output_shape(s);
        }
        return total;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> cur = x;
        for (auto& l : layers_) cur = l->forward(cur, training);
        return cur;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        Tensor<T> cur = gy;
        for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
        return cur;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        for (auto& l : layers_) l->collect_params(out);
    }

private:
    std::vector<LayerPtr<T>> layers_;
};

/// y = concat(x, submodule(x)) along the channel dimension.
template <typename T>
class SkipConnection : public Layer<T> {
public:
    explicit SkipConnection(LayerPtr<T> sub) : sub_(std::move(sub)) {}

    Shape5 output_shape(const Shape5& in) const override {
        Shape5 s = sub_->output_shape(in);
        if (s[2] != in[2] || s[3] != in[3] || s[4] != in[4])
            throw validation_error("SkipConnection: submodule changed the spatial shape from " +
                                   shape_str(in) + " to " + shape_str(s) +
                                   "; input extents must be divisible by the stride product");
        Shape5 out = in;
        out[1] = in[1] + s[1];
        return out;
    }

    uint64_t macs(const Shape5& in) const override { return sub_->macs(in); }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> sub_out = sub_->forward(x, training);
        Shape5 os = output_shape(x.shape);
        Tensor<T> y(os);
        const size_t sp = x.spatial();
        const size_t direct = size_t(x.c()) * sp;
        const size_t subsz = size_t(sub_out.c()) * sp;
        for (int n = 0; n < x.n(); ++n) {
            std::copy(x.sample(n), x.sample(n) + direct, y.sample(n));
            std::copy(sub_out.sample(n), sub_out.sample(n) + subsz, y.sample(n) + direct);
        }
        direct_channels_ = x.c();
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        const size_t sp = gy.spatial();
        const size_t direct = size_t(direct_channels_) * sp;
        const int sub_c = gy.c() - direct_channels_;
        Tensor<T> gsub(gy.n(), sub_c, gy.d(), gy.h(), gy.w());
        for (int n = 0; n < gy.n(); ++n)
            std::copy(gy.sample(n) + direct, gy.sample(n) + direct + size_t(sub_c) * sp,
                      gsub.sample(n));
        Tensor<T> gx = sub_->backward(gsub);
        for (int n = 0; n < gy.n(); ++n) {
            const T* gdir = gy.sample(n);
            T* dst = gx.sample(n);
            for (size_t i = 0; i < direct; ++i) dst[i] += gdir[i];
        }
        return gx;
    }

    void collect_params(std::vector<Param<T>*>& out) override { sub_->collect_params(out); }

private:
    LayerPtr<T> sub_;
    int direct_channels_ = 0;
};

/// Identity-plus-conv-path residual unit: subunits chained convolutions
/// (first carries the stride) with norm and activation, plus a shortcut that
/// is the identity, a 1x1x1 conv (channel change only) or a strided conv.
template <typename T>
class ResidualUnit : public Layer<T> {
public:
    ResidualUnit(int in_ch, int out_ch, std::array<int, 3> stride, std::array<int, 3> kernel,
                 int subunits, int groups, double slope, bool last_conv_only,
                 SplitMix64& stream, const std::string& name) {
        int sch = in_ch;
        std::array<int, 3> sstride = stride;
        for (int su = 0; su < subunits; ++su) {
            bool conv_only = last_conv_only && su == subunits - 1;
            std::string uname = name + ".unit" + std::to_string(su);
            path_.add(std::make_unique<Conv3d<T>>(sch, out_ch, kernel, sstride, stream,
                                                  uname + ".conv"));
            if (!conv_only) {
                path_.add(std::make_unique<GroupNorm<T>>(groups, out_ch, uname + ".norm"));
                path_.add(std::make_unique<LeakyReLU<T>>(slope));
            }
            sch = out_ch;
            sstride = {1, 1, 1};
        }
        bool strided = stride[0] != 1 || stride[1] != 1 || stride[2] != 1;
        if (strided || in_ch != out_ch) {
            std::array<int, 3> rk = strided ? kernel : std::array<int, 3>{1, 1, 1};
            residual_ = std::make_unique<Conv3d<T>>(in_ch, out_ch, rk, stride, stream,
                                                    name + ".residual");
        }
    }

    Shape5 output_shape(const Shape5& in) const override { return path_.output_shape(in); }

    uint64_t macs(const Shape5& in) const override {
        uint64_t total = path_.macs(in);
        if (residual_) total += residual_->macs(in);
        return total;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> y = path_.forward(x, training);
        if (residual_) {
            Tensor<T> r = residual_->forward(x, training);
            for (size_t i = 0; i < y.numel(); ++i) y.data[i] += r.data[i];
        } else {
            for (size_t i = 0; i < y.numel(); ++i) y.data[i] += x.data[i];
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        Tensor<T> gx = path_.backward(gy);
        if (residual_) {
            Tensor<T> gr = residual_->backward(gy);
            for (size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gr.data[i];
        } else {
            for (size_t i = 0; i < gx.numel(); ++i) gx.data[i] += gy.data[i];
        }
        return gx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        path_.collect_params(out);
        if (residual_) residual_->collect_params(out);
    }

private:
    Sequential<T> path_;
    std::unique_ptr<Conv3d<T>> residual_;
};

/// Fixed (non-trainable) per-channel inverse centered FFT. Input packs K
/// complex channels as (re_1..re_K, im_1..im_K); the output uses the same
/// packing in image space. The backward pass is the forward centered FFT,
/// which is the adjoint of the unitary inverse transform.
template <typename T>
class IFFTBridge : public Layer<T> {
public:
    explicit IFFTBridge(int complex_channels) : k_(complex_channels) {}

    Shape5 output_shape(const Shape5& in) const override { return in; }

    Tensor<T> forward(const Tensor<T>& x, bool /*training*/) override {
        check_channels(x);
        return transform(x, /*inverse=*/true);
    }

    Tensor<T> backward(const Tensor<T>& gy) override { return transform(gy, /*inverse=*/false); }

private:
    void check_channels(const Tensor<T>& x) const {
        if (x.c() != 2 * k_)
            throw validation_error("IFFTBridge: expected " + std::to_string(2 * k_) +
                                   " channels, got " + std::to_string(x.c()));
    }

    Tensor<T> transform(const Tensor<T>& x, bool inverse) const {
        Tensor<T> y(x.shape);
        const size_t sp = x.spatial();
        const size_t plane = size_t(x.h()) * x.w();
        std::vector<std::complex<T>> in(plane), out(plane);
        for (int n = 0; n < x.n(); ++n) {
            for (int ch = 0; ch < k_; ++ch) {
                const T* re = x.sample(n) + size_t(ch) * sp;
                const T* im = x.sample(n) + size_t(k_ + ch) * sp;
                T* ore = y.sample(n) + size_t(ch) * sp;
                T* oim = y.sample(n) + size_t(k_ + ch) * sp;
                for (int d = 0; d < x.d(); ++d) {
                    const size_t off = size_t(d) * plane;
                    for (size_t i = 0; i < plane; ++i) in[i] = {re[off + i], im[off + i]};
                    if constexpr (std::is_same_v<T, float>) {
                        if (inverse)
                            ifft2c_slice_f(in.data(), out.data(), x.h(), x.w());
                        else
                            fft2c_slice_f(in.data(), out.data(), x.h(), x.w());
                    } else {
                        if (inverse)
                            ifft2c_slice_d(in.data(), out.data(), x.h(), x.w());
                        else
                            fft2c_slice_d(in.data(), out.data(), x.h(), x.w());
                    }
                    for (size_t i = 0; i < plane; ++i) {
                        ore[off + i] = out[i].real();
                        oim[off + i] = out[i].imag();
                    }
                }
            }
        }
        return y;
    }

    int k_;
};

/// Complex magnitude per channel pair: (re_1..re_K, im_1..im_K) -> K channels.
template <typename T>
class Magnitude : public Layer<T> {
public:
    explicit Magnitude(int complex_channels) : k_(complex_channels) {}

    Shape5 output_shape(const Shape5& in) const override {
        Shape5 out = in;
        out[1] = k_;
        return out;
    }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> y(output_shape(x.shape));
        const size_t sp = x.spatial();
        for (int n = 0; n < x.n(); ++n) {
            for (int ch = 0; ch < k_; ++ch) {
                const T* re = x.sample(n) + size_t(ch) * sp;
                const T* im = x.sample(n) + size_t(k_ + ch) * sp;
                T* m = y.sample(n) + size_t(ch) * sp;
                for (size_t i = 0; i < sp; ++i) m[i] = std::sqrt(re[i] * re[i] + im[i] * im[i]);
            }
        }
        if (training) {
            cached_input_ = x;
            cached_output_ = y;
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        const Tensor<T>& x = cached_input_;
        Tensor<T> gx(x.shape);
        const size_t sp = x.spatial();
        const T tiny = T(1e-20);
        for (int n = 0; n < x.n(); ++n) {
            for (int ch = 0; ch < k_; ++ch) {
                const T* re = x.sample(n) + size_t(ch) * sp;
                const T* im = x.sample(n) + size_t(k_ + ch) * sp;
                const T* m = cached_output_.sample(n) + size_t(ch) * sp;
                const T* g = gy.sample(n) + size_t(ch) * sp;
                T* gre = gx.sample(n) + size_t(ch) * sp;
                T* gim = gx.sample(n) + size_t(k_ + ch) * sp;
                for (size_t i = 0; i < sp; ++i) {
                    T denom = std::max(m[i], tiny);
                    gre[i] = g[i] * re[i] / denom;
                    gim[i] = g[i] * im[i] / denom;
                }
            }
        }
        return gx;
    }

private:
    int k_;
    Tensor<T> cached_input_, cached_output_;
};

/// Per-channel affine y_c = a_c * x_c + b_c (the native model's calibration
/// head before the softmax).
template <typename T>
class CalibrationHead : public Layer<T> {
public:
    CalibrationHead(int channels, const std::string& name) : channels_(channels) {
        gain_.name = name + ".gain";
        gain_.dims = {channels};
        gain_.value.assign(channels, T(1));
        gain_.grad.assign(channels, T(0));
        bias_.name = name + ".bias";
        bias_.dims = {channels};
        bias_.value.assign(channels, T(0));
        bias_.grad.assign(channels, T(0));
    }

    Shape5 output_shape(const Shape5& in) const override { return in; }

    uint64_t macs(const Shape5& in) const override { return shape_numel(in); }

    Tensor<T> forward(const Tensor<T>& x, bool training) override {
        Tensor<T> y(x.shape);
        const size_t sp = x.spatial();
        for (int n = 0; n < x.n(); ++n)
            for (int c = 0; c < channels_; ++c) {
                const T* src = x.sample(n) + size_t(c) * sp;
                T* dst = y.sample(n) + size_t(c) * sp;
                T a = gain_.value[c], b = bias_.value[c];
                for (size_t i = 0; i < sp; ++i) dst[i] = a * src[i] + b;
            }
        if (training) cached_input_ = x;
        return y;
    }

    Tensor<T> backward(const Tensor<T>& gy) override {
        const Tensor<T>& x = cached_input_;
        Tensor<T> gx(x.shape);
        const size_t sp = x.spatial();
        for (int n = 0; n < x.n(); ++n)
            for (int c = 0; c < channels_; ++c) {
                const T* g = gy.sample(n) + size_t(c) * sp;
                const T* src = x.sample(n) + size_t(c) * sp;
                T* dst = gx.sample(n) + size_t(c) * sp;
                T a = gain_.value[c];
                double ga = 0.0, gb = 0.0;
                for (size_t i = 0; i < sp; ++i) {
                    dst[i] = a * g[i];
                    ga += double(g[i]) * src[i];
                    gb += g[i];
                }
                gain_.grad[c] += T(ga);
                bias_.grad[c] += T(gb);
            }
        return gx;
    }

    void collect_params(std::vector<Param<T>*>& out) override {
        out.push_back(&gain_);
        out.push_back(&bias_);
    }

private:
    int channels_;
    Param<T> gain_, bias_;
    Tensor<T> cached_input_;
};

} // namespace kseg::nn
