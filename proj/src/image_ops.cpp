#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <memory>

#include "gtasr/tensor.hpp"
#include "parallel.hpp"

namespace gtasr {
GTASR_NS_BEGIN

namespace {

[[maybe_unused]] void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, const float* a, int lda, const float* b,
          int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, ta, tb, m, n, k, 1.0f, a, lda, b, ldb, beta, c, ldc);
}

[[maybe_unused]] void gemm(CBLAS_TRANSPOSE ta, CBLAS_TRANSPOSE tb, int m, int n, int k, const double* a, int lda, const double* b,
          int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, ta, tb, m, n, k, 1.0, a, lda, b, ldb, beta, c, ldc);
}

struct ConvGeometry {
    int batch, in_c, in_h, in_w;
    int out_c, kh, kw;
    int stride, pad;
    int out_h, out_w;

    int col_rows() const { return in_c * kh * kw; }
    int col_cols() const { return out_h * out_w; }
};

void require_nchw(const Tensor& t, const char* what) {
    if (t.rank() != 4) throw TensorError(std::string(what) + ": expected NCHW, got " + shape_str(t.shape()));
}

// Output columns [lo, hi) whose input column ox*stride - pad + kx lies inside the image.
void valid_range(const ConvGeometry& g, int kx, int& lo, int& hi) {
    const int off = kx - g.pad;
    lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
    hi = (g.in_w - 1 - off) < 0 ? 0 : (g.in_w - 1 - off) / g.stride + 1;
    hi = std::min(hi, g.out_w);
    lo = std::min(lo, hi);
}

void im2col(const ConvGeometry& g, const real* img, real* col) {
    const int plane = g.col_cols();
    for (int c = 0; c < g.in_c; ++c) {
        const real* src = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                real* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * plane;
                int lo, hi;
                valid_range(g, kx, lo, hi);
                const int off = kx - g.pad;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    real* dst = row + oy * g.out_w;
                    if (iy < 0 || iy >= g.in_h) {
                        std::fill(dst, dst + g.out_w, real(0));
                        continue;
                    }
                    std::fill(dst, dst + lo, real(0));
                    const real* line = src + iy * g.in_w;
                    if (g.stride == 1) {
                        std::copy(line + lo + off, line + hi + off, dst + lo);
                    } else {
                        for (int ox = lo; ox < hi; ++ox) dst[ox] = line[ox * g.stride + off];
                    }
                    std::fill(dst + hi, dst + g.out_w, real(0));
                }
            }
        }
    }
}

void col2im_add(const ConvGeometry& g, const real* col, real* img) {
    const int plane = g.col_cols();
    for (int c = 0; c < g.in_c; ++c) {
        real* dst = img + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.kh; ++ky) {
            for (int kx = 0; kx < g.kw; ++kx) {
                const real* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * plane;
                int lo, hi;
                valid_range(g, kx, lo, hi);
                const int off = kx - g.pad;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    const int iy = oy * g.stride - g.pad + ky;
                    if (iy < 0 || iy >= g.in_h) continue;
                    real* line = dst + iy * g.in_w;
                    const real* srow = row + oy * g.out_w;
                    for (int ox = lo; ox < hi; ++ox) line[ox * g.stride + off] += srow[ox];
                }
            }
        }
    }
}

// Scratch buffer without value-initialisation; every element is written before it is read.
std::unique_ptr<real[]> scratch(std::size_t n) { return std::unique_ptr<real[]>(new real[n]); }

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, int stride, int padding) {
    require_nchw(input, "conv2d input");
    require_nchw(kernel, "conv2d kernel");
    if (stride < 1 || padding < 0) throw TensorError("conv2d: invalid stride/padding");
    ConvGeometry g{};
    g.batch = static_cast<int>(input.dim(0));
    g.in_c = static_cast<int>(input.dim(1));
    g.in_h = static_cast<int>(input.dim(2));
    g.in_w = static_cast<int>(input.dim(3));
    g.out_c = static_cast<int>(kernel.dim(0));
    g.kh = static_cast<int>(kernel.dim(2));
    g.kw = static_cast<int>(kernel.dim(3));
    g.stride = stride;
    g.pad = padding;
    if (kernel.dim(1) != g.in_c) {
        throw TensorError("conv2d: input has " + std::to_string(g.in_c) + " channels, kernel expects " +
                          std::to_string(kernel.dim(1)));
    }
    if (g.kh > g.in_h + 2 * padding || g.kw > g.in_w + 2 * padding) {
        throw TensorError("conv2d: kernel larger than padded input");
    }
    g.out_h = (g.in_h + 2 * padding - g.kh) / stride + 1;
    g.out_w = (g.in_w + 2 * padding - g.kw) / stride + 1;

    const std::size_t in_plane = static_cast<std::size_t>(g.in_c) * g.in_h * g.in_w;
    const std::size_t out_plane = static_cast<std::size_t>(g.out_c) * g.out_h * g.out_w;
    const std::size_t col_size = static_cast<std::size_t>(g.col_rows()) * g.col_cols();
    std::vector<real> out(out_plane * g.batch);
    const real* x = input.data().data();
    const real* w = kernel.data().data();
    // Columns are kept for the kernel gradient when the kernel is trainable.
    std::shared_ptr<real[]> cols(new real[col_size * g.batch]);
    parallel::for_each_index(g.batch, [&](std::int64_t n) {
        real* col = cols.get() + n * col_size;
        im2col(g, x + n * in_plane, col);
        gemm(CblasNoTrans, CblasNoTrans, g.out_c, g.col_cols(), g.col_rows(), w, g.col_rows(), col, g.col_cols(),
             real(0), out.data() + n * out_plane, g.col_cols());
    });

    auto xi = input.impl();
    auto wi = kernel.impl();
    if (!wi->requires_grad) cols.reset();
    return detail::make_result(
        {g.batch, g.out_c, g.out_h, g.out_w}, std::move(out), {input, kernel}, "conv2d", [=](detail::TensorImpl*) {
            return [=](const std::vector<real>& grad_out) {
                const real* gout = grad_out.data();
                if (wi->requires_grad) {
                    real* gw = detail::grad_buffer(*wi);
                    for (int n = 0; n < g.batch; ++n) {
                        gemm(CblasNoTrans, CblasTrans, g.out_c, g.col_rows(), g.col_cols(), gout + n * out_plane,
                             g.col_cols(), cols.get() + n * col_size, g.col_cols(), real(1), gw, g.col_rows());
                    }
                }
                if (xi->requires_grad) {
                    real* gx = detail::grad_buffer(*xi);
                    parallel::for_each_index(g.batch, [&](std::int64_t n) {
                        auto col = scratch(col_size);
                        gemm(CblasTrans, CblasNoTrans, g.col_rows(), g.col_cols(), g.out_c, wi->data.data(),
                             g.col_rows(), gout + n * out_plane, g.col_cols(), real(0), col.get(), g.col_cols());
                        col2im_add(g, col.get(), gx + n * in_plane);
                    });
                }
            };
        });
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
    require_nchw(input, "add_channel_bias");
    const std::int64_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    if (bias.numel() != c) throw TensorError("add_channel_bias: bias size does not match channels");
    std::vector<real> out(input.data().begin(), input.data().end());
    const auto bd = bias.data();
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < hw; ++i) out[(b * c + ch) * hw + i] += bd[ch];
    auto xi = input.impl();
    auto bi = bias.impl();
    return detail::make_result(input.shape(), std::move(out), {input, bias}, "add_channel_bias",
                               [=](detail::TensorImpl*) {
                                   return [=](const std::vector<real>& g) {
                                       if (xi->requires_grad) detail::accumulate_grad(*xi, g);
                                       if (bi->requires_grad) {
                                           real* gb = detail::grad_buffer(*bi);
                                           for (std::int64_t b = 0; b < n; ++b)
                                               for (std::int64_t ch = 0; ch < c; ++ch) {
                                                   real acc = 0;
                                                   for (std::int64_t i = 0; i < hw; ++i) acc += g[(b * c + ch) * hw + i];
                                                   gb[ch] += acc;
                                               }
                                       }
                                   };
                               });
}

Tensor upsample_nearest(const Tensor& input, int factor) {
    require_nchw(input, "upsample_nearest");
    if (factor < 1) throw TensorError("upsample_nearest: factor must be >= 1");
    const std::int64_t nc = input.dim(0) * input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::int64_t oh = h * factor, ow = w * factor;
    const auto xd = input.data();
    std::vector<real> out(static_cast<std::size_t>(nc * oh * ow));
    for (std::int64_t p = 0; p < nc; ++p)
        for (std::int64_t y = 0; y < oh; ++y)
            for (std::int64_t x = 0; x < ow; ++x)
                out[(p * oh + y) * ow + x] = xd[(p * h + y / factor) * w + x / factor];
    auto xi = input.impl();
    return detail::make_result({input.dim(0), input.dim(1), oh, ow}, std::move(out), {input}, "upsample_nearest",
                               [=](detail::TensorImpl*) {
                                   return [=](const std::vector<real>& g) {
                                       real* gx = detail::grad_buffer(*xi);
                                       for (std::int64_t p = 0; p < nc; ++p)
                                           for (std::int64_t y = 0; y < oh; ++y)
                                               for (std::int64_t x = 0; x < ow; ++x)
                                                   gx[(p * h + y / factor) * w + x / factor] += g[(p * oh + y) * ow + x];
                                   };
                               });
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw TensorError("concat_channels: no inputs");
    for (const auto& p : parts) require_nchw(p, "concat_channels");
    const std::int64_t n = parts[0].dim(0), h = parts[0].dim(2), w = parts[0].dim(3);
    std::int64_t total_c = 0;
    for (const auto& p : parts) {
        if (p.dim(0) != n || p.dim(2) != h || p.dim(3) != w) {
            throw TensorError("concat_channels: mismatched shapes " + shape_str(parts[0].shape()) + " vs " +
                              shape_str(p.shape()));
        }
        total_c += p.dim(1);
    }
    const std::int64_t hw = h * w;
    std::vector<real> out(static_cast<std::size_t>(n * total_c * hw));
    std::vector<std::int64_t> offsets;
    std::int64_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::int64_t c = p.dim(1);
        const auto pd = p.data();
        for (std::int64_t b = 0; b < n; ++b)
            std::copy_n(pd.begin() + b * c * hw, c * hw, out.begin() + (b * total_c + off) * hw);
        off += c;
    }
    std::vector<std::shared_ptr<detail::TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl_ptr());
    return detail::make_result({n, total_c, h, w}, std::move(out), parts, "concat_channels", [=](detail::TensorImpl*) {
        return [=](const std::vector<real>& g) {
            for (std::size_t k = 0; k < impls.size(); ++k) {
                auto& pi = *impls[k];
                if (!pi.requires_grad) continue;
                const std::int64_t c = pi.shape[1];
                real* gp = detail::grad_buffer(pi);
                for (std::int64_t b = 0; b < n; ++b)
                    for (std::int64_t i = 0; i < c * hw; ++i) gp[b * c * hw + i] += g[(b * total_c + offsets[k]) * hw + i];
            }
        };
    });
}

Tensor channel_mean(const Tensor& input) {
    require_nchw(input, "channel_mean");
    const std::int64_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    const auto xd = input.data();
    std::vector<real> out(static_cast<std::size_t>(n * hw), real(0));
    for (std::int64_t b = 0; b < n; ++b)
        for (std::int64_t ch = 0; ch < c; ++ch)
            for (std::int64_t i = 0; i < hw; ++i) out[b * hw + i] += xd[(b * c + ch) * hw + i];
    for (auto& v : out) v /= static_cast<real>(c);
    auto xi = input.impl();
    return detail::make_result({n, 1, input.dim(2), input.dim(3)}, std::move(out), {input}, "channel_mean",
                               [=](detail::TensorImpl*) {
                                   return [=](const std::vector<real>& g) {
                                       real* gx = detail::grad_buffer(*xi);
                                       for (std::int64_t b = 0; b < n; ++b)
                                           for (std::int64_t ch = 0; ch < c; ++ch)
                                               for (std::int64_t i = 0; i < hw; ++i)
                                                   gx[(b * c + ch) * hw + i] += g[b * hw + i] / static_cast<real>(c);
                                   };
                               });
}

Tensor channel_normalize(const Tensor& input, real eps) {
    require_nchw(input, "channel_normalize");
    const std::int64_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
    const auto xd = input.data();
    std::vector<real> out(xd.size());
    std::vector<real> norms(static_cast<std::size_t>(n * hw));
    for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t i = 0; i < hw; ++i) {
            real ss = 0;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                const real v = xd[(b * c + ch) * hw + i];
                ss += v * v;
            }
            const real norm = std::sqrt(ss + eps);
            norms[b * hw + i] = norm;
            for (std::int64_t ch = 0; ch < c; ++ch) out[(b * c + ch) * hw + i] = xd[(b * c + ch) * hw + i] / norm;
        }
    }
    auto xi = input.impl();
    return detail::make_result(input.shape(), std::move(out), {input}, "channel_normalize", [=](detail::TensorImpl* o) {
        return [=](const std::vector<real>& g) {
            // d(x/r)/dx = (g - y * <g, y>) / r with y = x / r
            real* gx = detail::grad_buffer(*xi);
            for (std::int64_t b = 0; b < n; ++b) {
                for (std::int64_t i = 0; i < hw; ++i) {
                    real dot = 0;
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        const auto k = (b * c + ch) * hw + i;
                        dot += g[k] * o->data[k];
                    }
                    const real r = norms[b * hw + i];
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        const auto k = (b * c + ch) * hw + i;
                        gx[k] += (g[k] - o->data[k] * dot) / r;
                    }
                }
            }
        };
    });
}

GTASR_NS_END
}  // namespace gtasr
