#include "foodcal/nnblocks.hpp"

#include "foodcal/error.hpp"
#include "foodcal/rng.hpp"
#include "json_field.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

namespace foodcal::nn {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

Tensor4 silu_of(const Tensor4& pre) {
    Tensor4 out = pre;
    for (auto& v : out.v) v = silu(v);
    return out;
}

// dL/dpre given dL/dout for out = silu(pre).
Tensor4 silu_backward(const Tensor4& pre, const Tensor4& grad) {
    Tensor4 out = grad;
    for (std::size_t i = 0; i < out.v.size(); ++i) {
        const double s = sigmoid(pre.v[i]);
        out.v[i] *= s * (1.0 + pre.v[i] * (1.0 - s));
    }
    return out;
}

// Channels [from, from + count) of x.
Tensor4 channel_slice(const Tensor4& x, int from, int count) {
    Tensor4 out(x.n, count, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in)
        for (int c = 0; c < count; ++c)
            std::copy_n(x.v.begin() + x.offset(in, from + c, 0, 0), plane, out.v.begin() + out.offset(in, c, 0, 0));
    return out;
}

Tensor4 concat_channels(const std::vector<const Tensor4*>& parts) {
    int total = 0;
    for (auto* p : parts) total += p->c;
    const Tensor4& first = *parts.front();
    Tensor4 out(first.n, total, first.h, first.w);
    const std::size_t plane = static_cast<std::size_t>(first.h) * first.w;
    for (int in = 0; in < first.n; ++in) {
        int c0 = 0;
        for (auto* p : parts) {
            for (int c = 0; c < p->c; ++c)
                std::copy_n(p->v.begin() + p->offset(in, c, 0, 0), plane, out.v.begin() + out.offset(in, c0 + c, 0, 0));
            c0 += p->c;
        }
    }
    return out;
}

double coord_value(int i, int extent) { return extent > 1 ? 2.0 * i / (extent - 1) - 1.0 : 0.0; }

// Forward intermediates of CBAM for one tensor, reused by the backward pass.
struct CbamCache {
    std::vector<double> avg, mx;                    // (n, c)
    std::vector<std::size_t> max_pos;               // (n, c) spatial argmax
    std::vector<double> hid_avg, hid_max;           // (n, hidden) pre-activation
    std::vector<double> gate;                       // (n, c)
    Tensor4 gated;                                  // x' = gate * x
    Tensor4 pooled;                                 // (n, 2, h, w): mean, max over channels
    std::vector<int> max_chan;                      // (n, h*w) channel argmax
    Tensor4 spatial_pre;                            // (n, 1, h, w)
    Tensor4 spatial_gate;
    Tensor4 out;
};

void mlp_forward(const CbamParams& p, const double* v, double* hidden_pre, double* out) {
    for (int j = 0; j < p.hidden; ++j) {
        double s = p.b1[j];
        for (int c = 0; c < p.channels; ++c) s += p.w1[static_cast<std::size_t>(j) * p.channels + c] * v[c];
        hidden_pre[j] = s;
    }
    for (int c = 0; c < p.channels; ++c) {
        double s = p.b2[c];
        for (int j = 0; j < p.hidden; ++j) {
            s += p.w2[static_cast<std::size_t>(c) * p.hidden + j] * std::max(0.0, hidden_pre[j]);
        }
        out[c] = s;
    }
}

void check_cbam(const Tensor4& x, const CbamParams& p) {
    require(x.c == p.channels, "CBAM channel count does not match input");
    require(p.hidden >= 1 && p.w1.size() == static_cast<std::size_t>(p.hidden) * p.channels &&
                p.b1.size() == static_cast<std::size_t>(p.hidden) &&
                p.w2.size() == static_cast<std::size_t>(p.channels) * p.hidden &&
                p.b2.size() == static_cast<std::size_t>(p.channels),
            "CBAM MLP parameter sizes are inconsistent");
    require(p.spatial.c_in == 2 && p.spatial.c_out == 1, "CBAM spatial convolution must map 2 -> 1 channels");
}

std::vector<double> channel_gates(const Tensor4& x, const CbamParams& p, CbamCache* cache) {
    const int n = x.n, c = x.c;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    std::vector<double> avg(static_cast<std::size_t>(n) * c), mx(avg.size());
    std::vector<std::size_t> pos(avg.size());
    for (int in = 0; in < n; ++in) {
        for (int ic = 0; ic < c; ++ic) {
            const double* src = x.v.data() + x.offset(in, ic, 0, 0);
            double sum = 0.0, best = src[0];
            std::size_t arg = 0;
            for (std::size_t k = 0; k < plane; ++k) {
                sum += src[k];
                if (src[k] > best) {
                    best = src[k];
                    arg = k;
                }
            }
            const std::size_t idx = static_cast<std::size_t>(in) * c + ic;
            avg[idx] = sum / static_cast<double>(plane);
            mx[idx] = best;
            pos[idx] = arg;
        }
    }
    std::vector<double> gate(avg.size());
    std::vector<double> hid_avg(static_cast<std::size_t>(n) * p.hidden), hid_max(hid_avg.size());
    std::vector<double> o_avg(c), o_max(c);
    for (int in = 0; in < n; ++in) {
        const std::size_t base = static_cast<std::size_t>(in) * c;
        const std::size_t hbase = static_cast<std::size_t>(in) * p.hidden;
        mlp_forward(p, avg.data() + base, hid_avg.data() + hbase, o_avg.data());
        mlp_forward(p, mx.data() + base, hid_max.data() + hbase, o_max.data());
        for (int ic = 0; ic < c; ++ic) gate[base + ic] = sigmoid(o_avg[ic] + o_max[ic]);
    }
    if (cache) {
        cache->avg = std::move(avg);
        cache->mx = std::move(mx);
        cache->max_pos = std::move(pos);
        cache->hid_avg = std::move(hid_avg);
        cache->hid_max = std::move(hid_max);
        cache->gate = gate;
    }
    return gate;
}

Tensor4 channel_pool(const Tensor4& x, std::vector<int>* argmax) {
    Tensor4 pooled(x.n, 2, x.h, x.w);
    if (argmax) argmax->assign(static_cast<std::size_t>(x.n) * x.h * x.w, 0);
    for (int in = 0; in < x.n; ++in) {
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) {
                double sum = 0.0, best = x.at(in, 0, y, xx);
                int arg = 0;
                for (int ic = 0; ic < x.c; ++ic) {
                    const double v = x.at(in, ic, y, xx);
                    sum += v;
                    if (v > best) {
                        best = v;
                        arg = ic;
                    }
                }
                pooled.at(in, 0, y, xx) = sum / x.c;
                pooled.at(in, 1, y, xx) = best;
                if (argmax) (*argmax)[(static_cast<std::size_t>(in) * x.h + y) * x.w + xx] = arg;
            }
        }
    }
    return pooled;
}

Tensor4 cbam_forward(const Tensor4& x, const CbamParams& p, CbamCache* cache) {
    check_cbam(x, p);
    const auto gate = channel_gates(x, p, cache);
    Tensor4 gated = x;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (std::size_t idx = 0; idx < gate.size(); ++idx)
        for (std::size_t k = 0; k < plane; ++k) gated.v[idx * plane + k] *= gate[idx];

    std::vector<int> max_chan;
    Tensor4 pooled = channel_pool(gated, cache ? &max_chan : nullptr);
    Tensor4 pre = conv2d(pooled, p.spatial);
    Tensor4 sgate = pre;
    for (auto& v : sgate.v) v = sigmoid(v);

    Tensor4 out = gated;
    for (int in = 0; in < x.n; ++in)
        for (int ic = 0; ic < x.c; ++ic)
            for (std::size_t k = 0; k < plane; ++k) out.v[out.offset(in, ic, 0, 0) + k] *= sgate.v[in * plane + k];

    if (cache) {
        cache->gated = std::move(gated);
        cache->pooled = std::move(pooled);
        cache->max_chan = std::move(max_chan);
        cache->spatial_pre = std::move(pre);
        cache->spatial_gate = std::move(sgate);
        cache->out = out;
    }
    return out;
}

void check_c2f(const Tensor4& x, const C2fParams& p) {
    const auto& cfg = p.config;
    require(cfg.c_in >= 1 && cfg.c_out >= 1 && cfg.n >= 0, "invalid C2f channel configuration");
    require(x.c == cfg.c_in, "C2f input channels do not match configuration");
    const int hd = cfg.hidden();
    require(p.entry.c_in == cfg.c_in + (cfg.coord ? 2 : 0) && p.entry.c_out == 2 * hd && p.entry.k_h == 1 &&
                p.entry.k_w == 1,
            "C2f entry convolution has the wrong shape");
    require(static_cast<int>(p.blocks.size()) == cfg.n, "C2f bottleneck count mismatch");
    for (const auto& b : p.blocks) {
        require(b.a.c_in == hd && b.a.c_out == hd && b.b.c_in == hd && b.b.c_out == hd && b.a.k_h == 3 &&
                    b.b.k_h == 3 && b.a.padding == 1 && b.b.padding == 1 && b.a.stride == 1 && b.b.stride == 1,
                "C2f bottleneck convolution has the wrong shape");
    }
    if (cfg.attention) require(p.cbam.channels == cfg.concat_channels(), "C2f CBAM channels mismatch");
    require(p.exit.c_in == cfg.concat_channels() && p.exit.c_out == cfg.c_out && p.exit.k_h == 1 && p.exit.k_w == 1,
            "C2f exit convolution has the wrong shape");
}

struct C2fCache {
    Tensor4 entry_in, entry_pre, entry_out;
    std::vector<Tensor4> chain;  // chain[0] = second half, chain[i+1] = bottleneck i output
    std::vector<Tensor4> a_pre, a_out, b_pre;
    Tensor4 cat;
    CbamCache cbam;
    Tensor4 att;
    Tensor4 exit_pre;
};

Tensor4 c2f_forward(const Tensor4& x, const C2fParams& p, C2fCache& cache) {
    check_c2f(x, p);
    const auto& cfg = p.config;
    const int hd = cfg.hidden();
    cache.entry_in = cfg.coord ? add_coord_channels(x) : x;
    cache.entry_pre = conv2d(cache.entry_in, p.entry);
    cache.entry_out = silu_of(cache.entry_pre);
    const Tensor4 first = channel_slice(cache.entry_out, 0, hd);
    cache.chain.assign(1, channel_slice(cache.entry_out, hd, hd));
    cache.a_pre.clear();
    cache.a_out.clear();
    cache.b_pre.clear();
    for (const auto& blk : p.blocks) {
        const Tensor4& in = cache.chain.back();
        cache.a_pre.push_back(conv2d(in, blk.a));
        cache.a_out.push_back(silu_of(cache.a_pre.back()));
        cache.b_pre.push_back(conv2d(cache.a_out.back(), blk.b));
        Tensor4 out = silu_of(cache.b_pre.back());
        if (cfg.shortcut) add_into(out.v, in.v);
        cache.chain.push_back(std::move(out));
    }
    std::vector<const Tensor4*> parts{&first};
    for (const auto& t : cache.chain) parts.push_back(&t);
    cache.cat = concat_channels(parts);
    cache.att = cfg.attention ? cbam_forward(cache.cat, p.cbam, &cache.cbam) : cache.cat;
    cache.exit_pre = conv2d(cache.att, p.exit);
    return silu_of(cache.exit_pre);
}

void fill_uniform(Rng& rng, std::vector<double>& v, double lo, double hi) {
    for (auto& e : v) e = rng.uniform(lo, hi);
}

void randomize(Rng& rng, std::vector<std::span<double>> tensors, double scale) {
    for (auto t : tensors)
        for (auto& e : t) e = rng.uniform(-scale, scale);
}

}  // namespace

Tensor4::Tensor4(int n_, int c_, int h_, int w_, double fill) : n(n_), c(c_), h(h_), w(w_) {
    if (n < 1 || c < 1 || h < 1 || w < 1) throw Error(ErrorCode::ShapeMismatch, "tensor dimensions must be >= 1");
    v.assign(static_cast<std::size_t>(n) * c * h * w, fill);
}

ConvParams ConvParams::zeros(int c_out, int c_in, int k_h, int k_w, int stride, int padding) {
    if (c_out < 1 || c_in < 1 || k_h < 1 || k_w < 1 || stride < 1 || padding < 0) {
        throw Error(ErrorCode::ShapeMismatch, "invalid convolution configuration");
    }
    ConvParams p;
    p.c_out = c_out;
    p.c_in = c_in;
    p.k_h = k_h;
    p.k_w = k_w;
    p.stride = stride;
    p.padding = padding;
    p.weight.assign(static_cast<std::size_t>(c_out) * c_in * k_h * k_w, 0.0);
    p.bias.assign(static_cast<std::size_t>(c_out), 0.0);
    return p;
}

CbamParams CbamParams::zeros(int channels, int reduction) {
    if (channels < 1 || reduction < 1) throw Error(ErrorCode::ShapeMismatch, "invalid CBAM configuration");
    CbamParams p;
    p.channels = channels;
    p.hidden = std::max(1, channels / reduction);
    p.w1.assign(static_cast<std::size_t>(p.hidden) * channels, 0.0);
    p.b1.assign(static_cast<std::size_t>(p.hidden), 0.0);
    p.w2.assign(static_cast<std::size_t>(channels) * p.hidden, 0.0);
    p.b2.assign(static_cast<std::size_t>(channels), 0.0);
    p.spatial = ConvParams::zeros(1, 2, 7, 7, 1, 3);
    return p;
}

std::vector<std::span<double>> CbamParams::tensors() { return {w1, b1, w2, b2, spatial.weight, spatial.bias}; }

C2fParams C2fParams::zeros(const C2fConfig& config) {
    C2fParams p;
    p.config = config;
    const int hd = config.hidden();
    p.entry = ConvParams::zeros(2 * hd, config.c_in + (config.coord ? 2 : 0), 1, 1);
    for (int i = 0; i < config.n; ++i) {
        p.blocks.push_back({ConvParams::zeros(hd, hd, 3, 3, 1, 1), ConvParams::zeros(hd, hd, 3, 3, 1, 1)});
    }
    if (config.attention) p.cbam = CbamParams::zeros(config.concat_channels(), config.reduction);
    p.exit = ConvParams::zeros(config.c_out, config.concat_channels(), 1, 1);
    return p;
}

std::vector<std::span<double>> C2fParams::tensors() {
    std::vector<std::span<double>> out = entry.tensors();
    for (auto& b : blocks) {
        for (auto t : b.a.tensors()) out.push_back(t);
        for (auto t : b.b.tensors()) out.push_back(t);
    }
    if (config.attention) {
        for (auto t : cbam.tensors()) out.push_back(t);
    }
    for (auto t : exit.tensors()) out.push_back(t);
    return out;
}

C2fConfig c2f_config(int c_in, int c_out, int n) {
    C2fConfig c;
    c.c_in = c_in;
    c.c_out = c_out;
    c.n = n;
    c.coord = false;
    c.attention = false;
    return c;
}

C2fConfig c2f_cd_config(int c_in, int c_out, int n) {
    C2fConfig c = c2f_config(c_in, c_out, n);
    c.coord = true;
    c.attention = true;
    return c;
}

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double silu(double z) { return z * sigmoid(z); }

Tensor4 conv2d(const Tensor4& x, const ConvParams& p) {
    require(x.c == p.c_in, "convolution input channels " + std::to_string(x.c) + " != " + std::to_string(p.c_in));
    require(p.stride >= 1 && p.padding >= 0, "invalid stride or padding");
    require(p.weight.size() == static_cast<std::size_t>(p.c_out) * p.c_in * p.k_h * p.k_w &&
                p.bias.size() == static_cast<std::size_t>(p.c_out),
            "convolution parameter sizes are inconsistent");
    const int oh_num = x.h + 2 * p.padding - p.k_h;
    const int ow_num = x.w + 2 * p.padding - p.k_w;
    require(oh_num >= 0 && ow_num >= 0, "convolution output would be empty");
    const int oh = oh_num / p.stride + 1;
    const int ow = ow_num / p.stride + 1;
    Tensor4 out(x.n, p.c_out, oh, ow);
    for (int in = 0; in < x.n; ++in) {
        for (int o = 0; o < p.c_out; ++o) {
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox) {
                    double s = p.bias[o];
                    for (int i = 0; i < p.c_in; ++i) {
                        for (int ky = 0; ky < p.k_h; ++ky) {
                            const int iy = oy * p.stride - p.padding + ky;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < p.k_w; ++kx) {
                                const int ix = ox * p.stride - p.padding + kx;
                                if (ix < 0 || ix >= x.w) continue;
                                s += p.w_at(o, i, ky, kx) * x.at(in, i, iy, ix);
                            }
                        }
                    }
                    out.at(in, o, oy, ox) = s;
                }
            }
        }
    }
    return out;
}

Tensor4 add_coord_channels(const Tensor4& x) {
    Tensor4 out(x.n, x.c + 2, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in) {
        for (int ic = 0; ic < x.c; ++ic)
            std::copy_n(x.v.begin() + x.offset(in, ic, 0, 0), plane, out.v.begin() + out.offset(in, ic, 0, 0));
        for (int y = 0; y < x.h; ++y) {
            for (int xx = 0; xx < x.w; ++xx) {
                out.at(in, x.c, y, xx) = coord_value(xx, x.w);
                out.at(in, x.c + 1, y, xx) = coord_value(y, x.h);
            }
        }
    }
    return out;
}

Tensor4 coordconv(const Tensor4& x, const ConvParams& p) {
    require(p.c_in == x.c + 2, "coordconv expects c_in = input channels + 2");
    return conv2d(add_coord_channels(x), p);
}

std::vector<double> cbam_channel_attention(const Tensor4& x, const CbamParams& p) {
    check_cbam(x, p);
    return channel_gates(x, p, nullptr);
}

Tensor4 cbam_spatial_attention(const Tensor4& x, const CbamParams& p) {
    require(p.spatial.c_in == 2 && p.spatial.c_out == 1, "CBAM spatial convolution must map 2 -> 1 channels");
    Tensor4 g = conv2d(channel_pool(x, nullptr), p.spatial);
    for (auto& v : g.v) v = sigmoid(v);
    return g;
}

Tensor4 cbam(const Tensor4& x, const CbamParams& p) { return cbam_forward(x, p, nullptr); }

Tensor4 c2f(const Tensor4& x, const C2fParams& p) {
    C2fCache cache;
    return c2f_forward(x, p, cache);
}

ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out) {
    const Tensor4 probe = conv2d(x, p);
    require(probe.same_shape(grad_out), "gradient shape does not match convolution output");
    ConvGrads g{Tensor4(x.n, x.c, x.h, x.w), ConvParams::zeros(p.c_out, p.c_in, p.k_h, p.k_w, p.stride, p.padding)};
    for (int in = 0; in < x.n; ++in) {
        for (int o = 0; o < p.c_out; ++o) {
            for (int oy = 0; oy < grad_out.h; ++oy) {
                for (int ox = 0; ox < grad_out.w; ++ox) {
                    const double go = grad_out.at(in, o, oy, ox);
                    g.params.bias[o] += go;
                    for (int i = 0; i < p.c_in; ++i) {
                        for (int ky = 0; ky < p.k_h; ++ky) {
                            const int iy = oy * p.stride - p.padding + ky;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int kx = 0; kx < p.k_w; ++kx) {
                                const int ix = ox * p.stride - p.padding + kx;
                                if (ix < 0 || ix >= x.w) continue;
                                g.params.w_at(o, i, ky, kx) += go * x.at(in, i, iy, ix);
                                g.input.at(in, i, iy, ix) += go * p.w_at(o, i, ky, kx);
                            }
                        }
                    }
                }
            }
        }
    }
    return g;
}

ConvGrads coordconv_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out) {
    require(p.c_in == x.c + 2, "coordconv expects c_in = input channels + 2");
    ConvGrads full = conv2d_backward(add_coord_channels(x), p, grad_out);
    full.input = channel_slice(full.input, 0, x.c);
    return full;
}

CbamGrads cbam_backward(const Tensor4& x, const CbamParams& p, const Tensor4& grad_out) {
    CbamCache cache;
    cbam_forward(x, p, &cache);
    require(grad_out.same_shape(x), "gradient shape does not match CBAM output");
    const int n = x.n, c = x.c;
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;

    CbamGrads g{Tensor4(x.n, x.c, x.h, x.w), CbamParams::zeros(c, 1)};
    g.params.hidden = p.hidden;
    g.params.w1.assign(p.w1.size(), 0.0);
    g.params.b1.assign(p.b1.size(), 0.0);
    g.params.w2.assign(p.w2.size(), 0.0);
    g.params.b2.assign(p.b2.size(), 0.0);

    // y = a * x'
    Tensor4 d_gated(x.n, x.c, x.h, x.w);
    Tensor4 d_spatial_pre(x.n, 1, x.h, x.w);
    for (int in = 0; in < n; ++in) {
        for (std::size_t k = 0; k < plane; ++k) {
            const double a = cache.spatial_gate.v[in * plane + k];
            double da = 0.0;
            for (int ic = 0; ic < c; ++ic) {
                const std::size_t o = x.offset(in, ic, 0, 0) + k;
                d_gated.v[o] = grad_out.v[o] * a;
                da += grad_out.v[o] * cache.gated.v[o];
            }
            d_spatial_pre.v[in * plane + k] = da * a * (1.0 - a);
        }
    }
    ConvGrads sp = conv2d_backward(cache.pooled, p.spatial, d_spatial_pre);
    g.params.spatial = std::move(sp.params);
    for (int in = 0; in < n; ++in) {
        for (std::size_t k = 0; k < plane; ++k) {
            const double d_mean = sp.input.v[sp.input.offset(in, 0, 0, 0) + k] / c;
            const double d_max = sp.input.v[sp.input.offset(in, 1, 0, 0) + k];
            for (int ic = 0; ic < c; ++ic) d_gated.v[x.offset(in, ic, 0, 0) + k] += d_mean;
            const int arg = cache.max_chan[in * plane + k];
            d_gated.v[x.offset(in, arg, 0, 0) + k] += d_max;
        }
    }

    // x' = gate * x
    std::vector<double> d_vec(c), d_hidden(p.hidden);
    for (int in = 0; in < n; ++in) {
        const std::size_t base = static_cast<std::size_t>(in) * c;
        std::vector<double> dz(c);
        for (int ic = 0; ic < c; ++ic) {
            const double gate = cache.gate[base + ic];
            const std::size_t o = x.offset(in, ic, 0, 0);
            double dgate = 0.0;
            for (std::size_t k = 0; k < plane; ++k) {
                g.input.v[o + k] = d_gated.v[o + k] * gate;
                dgate += d_gated.v[o + k] * x.v[o + k];
            }
            dz[ic] = dgate * gate * (1.0 - gate);
        }
        // Both MLP branches receive dz.
        for (int branch = 0; branch < 2; ++branch) {
            const double* vin = (branch == 0 ? cache.avg.data() : cache.mx.data()) + base;
            const double* hpre = (branch == 0 ? cache.hid_avg.data() : cache.hid_max.data()) +
                                 static_cast<std::size_t>(in) * p.hidden;
            for (int ic = 0; ic < c; ++ic) g.params.b2[ic] += dz[ic];
            for (int j = 0; j < p.hidden; ++j) {
                const double r = std::max(0.0, hpre[j]);
                double dr = 0.0;
                for (int ic = 0; ic < c; ++ic) {
                    g.params.w2[static_cast<std::size_t>(ic) * p.hidden + j] += dz[ic] * r;
                    dr += p.w2[static_cast<std::size_t>(ic) * p.hidden + j] * dz[ic];
                }
                d_hidden[j] = hpre[j] > 0.0 ? dr : 0.0;
            }
            std::fill(d_vec.begin(), d_vec.end(), 0.0);
            for (int j = 0; j < p.hidden; ++j) {
                g.params.b1[j] += d_hidden[j];
                for (int ic = 0; ic < c; ++ic) {
                    g.params.w1[static_cast<std::size_t>(j) * c + ic] += d_hidden[j] * vin[ic];
                    d_vec[ic] += p.w1[static_cast<std::size_t>(j) * c + ic] * d_hidden[j];
                }
            }
            for (int ic = 0; ic < c; ++ic) {
                const std::size_t o = x.offset(in, ic, 0, 0);
                if (branch == 0) {
                    const double share = d_vec[ic] / static_cast<double>(plane);
                    for (std::size_t k = 0; k < plane; ++k) g.input.v[o + k] += share;
                } else {
                    g.input.v[o + cache.max_pos[base + ic]] += d_vec[ic];
                }
            }
        }
    }
    return g;
}

C2fGrads c2f_backward(const Tensor4& x, const C2fParams& p, const Tensor4& grad_out) {
    C2fCache cache;
    const Tensor4 y = c2f_forward(x, p, cache);
    require(grad_out.same_shape(y), "gradient shape does not match C2f output");
    const auto& cfg = p.config;
    const int hd = cfg.hidden();

    C2fGrads g{Tensor4(x.n, x.c, x.h, x.w), C2fParams::zeros(cfg)};

    ConvGrads ex = conv2d_backward(cache.att, p.exit, silu_backward(cache.exit_pre, grad_out));
    g.params.exit = std::move(ex.params);
    Tensor4 d_cat = std::move(ex.input);
    if (cfg.attention) {
        CbamGrads cb = cbam_backward(cache.cat, p.cbam, d_cat);
        g.params.cbam = std::move(cb.params);
        d_cat = std::move(cb.input);
    }

    // cat = [first, chain[0], chain[1], ..., chain[n]]
    Tensor4 d_entry_out(x.n, 2 * hd, x.h, x.w);
    const Tensor4 d_first = channel_slice(d_cat, 0, hd);
    Tensor4 d_chain = channel_slice(d_cat, hd * (1 + cfg.n), hd);
    for (int i = cfg.n - 1; i >= 0; --i) {
        const auto& blk = p.blocks[static_cast<std::size_t>(i)];
        ConvGrads gb = conv2d_backward(cache.a_out[i], blk.b, silu_backward(cache.b_pre[i], d_chain));
        ConvGrads ga = conv2d_backward(cache.chain[i], blk.a, silu_backward(cache.a_pre[i], gb.input));
        g.params.blocks[static_cast<std::size_t>(i)].a = std::move(ga.params);
        g.params.blocks[static_cast<std::size_t>(i)].b = std::move(gb.params);
        Tensor4 d_in = channel_slice(d_cat, hd * (1 + i), hd);
        add_into(d_in.v, ga.input.v);
        if (cfg.shortcut) add_into(d_in.v, d_chain.v);
        d_chain = std::move(d_in);
    }
    {
        std::vector<const Tensor4*> halves{&d_first, &d_chain};
        d_entry_out = concat_channels(halves);
    }
    ConvGrads en = conv2d_backward(cache.entry_in, p.entry, silu_backward(cache.entry_pre, d_entry_out));
    g.params.entry = std::move(en.params);
    g.input = cfg.coord ? channel_slice(en.input, 0, x.c) : std::move(en.input);
    return g;
}

std::string_view block_name(BlockKind kind) {
    switch (kind) {
        case BlockKind::Conv: return "conv";
        case BlockKind::CoordConv: return "coordconv";
        case BlockKind::Cbam: return "cbam";
        case BlockKind::C2fCd: return "c2fcd";
    }
    return "?";
}

BlockKind parse_block(std::string_view name) {
    if (name == "conv" || name == "conv2d") return BlockKind::Conv;
    if (name == "coordconv") return BlockKind::CoordConv;
    if (name == "cbam") return BlockKind::Cbam;
    if (name == "c2fcd" || name == "c2f_cd") return BlockKind::C2fCd;
    throw Error(ErrorCode::ParseError, "unknown block '" + std::string(name) + "' (conv|coordconv|cbam|c2fcd)");
}

namespace {

Tensor4 random_tensor(Rng& rng, int n, int c, int h, int w) {
    Tensor4 t(n, c, h, w);
    fill_uniform(rng, t.v, -1.0, 1.0);
    return t;
}

double sum_of(const Tensor4& t) {
    double s = 0.0;
    for (double v : t.v) s += v;
    return s;
}

// Compares analytic gradients against central differences of loss().
void compare(std::span<double> values, std::span<const double> analytic, const std::function<double()>& loss,
             GradcheckResult& result) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + kGradcheckStep;
        const double up = loss();
        values[i] = saved - kGradcheckStep;
        const double down = loss();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * kGradcheckStep);
        const double a = analytic[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), kGradcheckFloor});
        result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / denom);
        ++result.checked;
    }
}

template <typename Params, typename Forward, typename Grads>
GradcheckResult run_check(Tensor4 x, Params params, Forward forward, Grads grads) {
    GradcheckResult result;
    auto loss = [&] { return sum_of(forward(x, params)); };
    compare(x.v, grads.input.v, loss, result);
    auto values = params.tensors();
    auto analytic = grads.params.tensors();
    for (std::size_t t = 0; t < values.size(); ++t) compare(values[t], analytic[t], loss, result);
    return result;
}

}  // namespace

GradcheckResult gradcheck(BlockKind kind, std::uint64_t seed) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(kind)));
    switch (kind) {
        case BlockKind::Conv: {
            const int n = static_cast<int>(rng.uniform_int(1, 2));
            const int c_in = static_cast<int>(rng.uniform_int(1, 3));
            const int c_out = static_cast<int>(rng.uniform_int(1, 4));
            const int k = static_cast<int>(rng.uniform_int(1, 3));
            const int stride = static_cast<int>(rng.uniform_int(1, 2));
            const int pad = static_cast<int>(rng.uniform_int(0, 1));
            Tensor4 x = random_tensor(rng, n, c_in, static_cast<int>(rng.uniform_int(3, 6)),
                                      static_cast<int>(rng.uniform_int(3, 6)));
            ConvParams p = ConvParams::zeros(c_out, c_in, k, k, stride, pad);
            randomize(rng, p.tensors(), 0.5);
            Tensor4 ones = conv2d(x, p);
            std::fill(ones.v.begin(), ones.v.end(), 1.0);
            return run_check(x, p, [](const Tensor4& a, const ConvParams& b) { return conv2d(a, b); },
                             conv2d_backward(x, p, ones));
        }
        case BlockKind::CoordConv: {
            const int c = static_cast<int>(rng.uniform_int(1, 3));
            const int c_out = static_cast<int>(rng.uniform_int(1, 3));
            const int k = static_cast<int>(rng.uniform_int(1, 3));
            Tensor4 x = random_tensor(rng, 1, c, static_cast<int>(rng.uniform_int(3, 6)),
                                      static_cast<int>(rng.uniform_int(3, 6)));
            ConvParams p = ConvParams::zeros(c_out, c + 2, k, k, 1, k / 2);
            randomize(rng, p.tensors(), 0.5);
            Tensor4 ones = coordconv(x, p);
            std::fill(ones.v.begin(), ones.v.end(), 1.0);
            return run_check(x, p, [](const Tensor4& a, const ConvParams& b) { return coordconv(a, b); },
                             coordconv_backward(x, p, ones));
        }
        case BlockKind::Cbam: {
            const int c = static_cast<int>(rng.uniform_int(2, 8));
            const int reduction = static_cast<int>(rng.uniform_int(1, 4));
            Tensor4 x = random_tensor(rng, static_cast<int>(rng.uniform_int(1, 2)), c,
                                      static_cast<int>(rng.uniform_int(3, 6)), static_cast<int>(rng.uniform_int(3, 6)));
            CbamParams p = CbamParams::zeros(c, reduction);
            randomize(rng, p.tensors(), 0.5);
            Tensor4 ones(x.n, x.c, x.h, x.w, 1.0);
            return run_check(x, p, [](const Tensor4& a, const CbamParams& b) { return cbam(a, b); },
                             cbam_backward(x, p, ones));
        }
        case BlockKind::C2fCd: {
            C2fConfig cfg = c2f_cd_config(static_cast<int>(rng.uniform_int(1, 4)),
                                          2 * static_cast<int>(rng.uniform_int(1, 2)),
                                          static_cast<int>(rng.uniform_int(1, 2)));
            cfg.reduction = 2;
            Tensor4 x = random_tensor(rng, 1, cfg.c_in, static_cast<int>(rng.uniform_int(3, 5)),
                                      static_cast<int>(rng.uniform_int(3, 5)));
            C2fParams p = C2fParams::zeros(cfg);
            randomize(rng, p.tensors(), 0.5);
            Tensor4 probe = c2f(x, p);
            Tensor4 ones(probe.n, probe.c, probe.h, probe.w, 1.0);
            return run_check(x, p, [](const Tensor4& a, const C2fParams& b) { return c2f(a, b); },
                             c2f_backward(x, p, ones));
        }
    }
    return {};
}

std::uint64_t conv_flops(int c_in, int c_out, int k_h, int k_w, int out_h, int out_w) {
    return 2ull * static_cast<std::uint64_t>(k_h) * k_w * c_in * c_out * out_h * out_w;
}

std::uint64_t cbam_flops(int channels, int hidden, int h, int w) {
    const std::uint64_t elems = static_cast<std::uint64_t>(channels) * h * w;
    const std::uint64_t plane = static_cast<std::uint64_t>(h) * w;
    const std::uint64_t c = static_cast<std::uint64_t>(channels);
    const std::uint64_t hid = static_cast<std::uint64_t>(hidden);
    std::uint64_t total = 0;
    total += 2 * elems;                         // avg + max pooling over space
    total += 2 * (2 * c * hid + 2 * hid * c + hid);  // shared MLP on both descriptors, incl. ReLU
    total += c;                                 // branch sum
    total += c;                                 // sigmoid
    total += elems;                             // channel gating
    total += 2 * elems;                         // mean + max over channels
    total += conv_flops(2, 1, 7, 7, h, w);
    total += plane;                             // sigmoid
    total += elems;                             // spatial gating
    return total;
}

C2fFlops c2f_flops(const C2fConfig& cfg, int h, int w) {
    C2fFlops f;
    const int hd = cfg.hidden();
    const std::uint64_t plane = static_cast<std::uint64_t>(h) * w;
    f.convolution += conv_flops(cfg.c_in + (cfg.coord ? 2 : 0), 2 * hd, 1, 1, h, w);
    if (cfg.coord) f.coordinate = conv_flops(2, 2 * hd, 1, 1, h, w);
    f.elementwise += 2ull * hd * plane;  // SiLU
    for (int i = 0; i < cfg.n; ++i) {
        f.convolution += 2 * conv_flops(hd, hd, 3, 3, h, w);
        f.elementwise += 2ull * hd * plane;
        if (cfg.shortcut) f.elementwise += static_cast<std::uint64_t>(hd) * plane;
    }
    if (cfg.attention) {
        f.attention = cbam_flops(cfg.concat_channels(), std::max(1, cfg.concat_channels() / cfg.reduction), h, w);
    }
    f.convolution += conv_flops(cfg.concat_channels(), cfg.c_out, 1, 1, h, w);
    f.elementwise += static_cast<std::uint64_t>(cfg.c_out) * plane;
    return f;
}

nlohmann::ordered_json to_json(const ConvParams& p) {
    nlohmann::ordered_json j;
    j["c_out"] = p.c_out;
    j["c_in"] = p.c_in;
    j["k_h"] = p.k_h;
    j["k_w"] = p.k_w;
    j["stride"] = p.stride;
    j["padding"] = p.padding;
    j["weight"] = p.weight;
    j["bias"] = p.bias;
    return j;
}

nlohmann::ordered_json to_json(const CbamParams& p) {
    nlohmann::ordered_json j;
    j["channels"] = p.channels;
    j["hidden"] = p.hidden;
    j["w1"] = p.w1;
    j["b1"] = p.b1;
    j["w2"] = p.w2;
    j["b2"] = p.b2;
    j["spatial"] = to_json(p.spatial);
    return j;
}

nlohmann::ordered_json to_json(const C2fParams& p) {
    nlohmann::ordered_json j;
    const auto& c = p.config;
    j["config"] = {{"c_in", c.c_in},         {"c_out", c.c_out},         {"n", c.n},
                   {"shortcut", c.shortcut}, {"coord", c.coord},         {"attention", c.attention},
                   {"reduction", c.reduction}};
    j["entry"] = to_json(p.entry);
    auto blocks = nlohmann::ordered_json::array();
    for (const auto& b : p.blocks) blocks.push_back({{"a", to_json(b.a)}, {"b", to_json(b.b)}});
    j["bottlenecks"] = blocks;
    if (c.attention) j["cbam"] = to_json(p.cbam);
    j["exit"] = to_json(p.exit);
    return j;
}

using detail::get_field;

ConvParams conv_params_from_json(const nlohmann::json& j) {
    ConvParams p = ConvParams::zeros(get_field<int>(j, "c_out"), get_field<int>(j, "c_in"), get_field<int>(j, "k_h"),
                                     get_field<int>(j, "k_w"), get_field<int>(j, "stride"),
                                     get_field<int>(j, "padding"));
    p.weight = get_field<std::vector<double>>(j, "weight");
    p.bias = get_field<std::vector<double>>(j, "bias");
    require(p.weight.size() == static_cast<std::size_t>(p.c_out) * p.c_in * p.k_h * p.k_w &&
                p.bias.size() == static_cast<std::size_t>(p.c_out),
            "convolution parameter sizes are inconsistent");
    return p;
}

CbamParams cbam_params_from_json(const nlohmann::json& j) {
    CbamParams p;
    p.channels = get_field<int>(j, "channels");
    p.hidden = get_field<int>(j, "hidden");
    p.w1 = get_field<std::vector<double>>(j, "w1");
    p.b1 = get_field<std::vector<double>>(j, "b1");
    p.w2 = get_field<std::vector<double>>(j, "w2");
    p.b2 = get_field<std::vector<double>>(j, "b2");
    p.spatial = conv_params_from_json(get_field<nlohmann::json>(j, "spatial"));
    Tensor4 probe(1, p.channels, 1, 1);
    check_cbam(probe, p);
    return p;
}

C2fParams c2f_params_from_json(const nlohmann::json& j) {
    const auto cj = get_field<nlohmann::json>(j, "config");
    C2fConfig c;
    c.c_in = get_field<int>(cj, "c_in");
    c.c_out = get_field<int>(cj, "c_out");
    c.n = get_field<int>(cj, "n");
    c.shortcut = get_field<bool>(cj, "shortcut");
    c.coord = get_field<bool>(cj, "coord");
    c.attention = get_field<bool>(cj, "attention");
    c.reduction = get_field<int>(cj, "reduction");
    C2fParams p = C2fParams::zeros(c);
    p.entry = conv_params_from_json(get_field<nlohmann::json>(j, "entry"));
    const auto blocks = get_field<nlohmann::json>(j, "bottlenecks");
    require(blocks.is_array() && static_cast<int>(blocks.size()) == c.n, "bottleneck count mismatch");
    for (int i = 0; i < c.n; ++i) {
        p.blocks[static_cast<std::size_t>(i)].a = conv_params_from_json(get_field<nlohmann::json>(blocks[i], "a"));
        p.blocks[static_cast<std::size_t>(i)].b = conv_params_from_json(get_field<nlohmann::json>(blocks[i], "b"));
    }
    if (c.attention) p.cbam = cbam_params_from_json(get_field<nlohmann::json>(j, "cbam"));
    p.exit = conv_params_from_json(get_field<nlohmann::json>(j, "exit"));
    check_c2f(Tensor4(1, c.c_in, 1, 1), p);
    return p;
}

nlohmann::ordered_json block_document(BlockKind kind, const nlohmann::ordered_json& params) {
    nlohmann::ordered_json j;
    j["format"] = "foodcal.nnblock";
    j["version"] = kBlockFormatVersion;
    j["block"] = std::string(block_name(kind));
    j["params"] = params;
    return j;
}

}  // namespace foodcal::nn
