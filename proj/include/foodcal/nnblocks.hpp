#pragma once
// Reference (double precision, inference-only) forward passes for the detector
// head additions: coordinate convolution, CBAM attention and the C2f_CD block,
// together with hand-written backward passes used only by gradcheck.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace foodcal::nn {

struct Tensor4 {
    int n = 1, c = 1, h = 1, w = 1;
    std::vector<double> v;

    Tensor4() : v(1, 0.0) {}
    Tensor4(int n_, int c_, int h_, int w_, double fill = 0.0);

    std::size_t size() const { return v.size(); }
    std::size_t offset(int in, int ic, int y, int x) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x;
    }
    double& at(int in, int ic, int y, int x) { return v[offset(in, ic, y, x)]; }
    double at(int in, int ic, int y, int x) const { return v[offset(in, ic, y, x)]; }
    bool same_shape(const Tensor4& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
};

struct ConvParams {
    int c_out = 1, c_in = 1, k_h = 1, k_w = 1;
    int stride = 1;
    int padding = 0;
    std::vector<double> weight;  // (c_out, c_in, k_h, k_w) row-major
    std::vector<double> bias;    // (c_out)

    static ConvParams zeros(int c_out, int c_in, int k_h, int k_w, int stride = 1, int padding = 0);
    double& w_at(int o, int i, int ky, int kx) {
        return weight[((static_cast<std::size_t>(o) * c_in + i) * k_h + ky) * k_w + kx];
    }
    double w_at(int o, int i, int ky, int kx) const {
        return weight[((static_cast<std::size_t>(o) * c_in + i) * k_h + ky) * k_w + kx];
    }
    std::vector<std::span<double>> tensors() { return {weight, bias}; }
};

inline constexpr int kDefaultReduction = 16;

struct CbamParams {
    int channels = 1;
    int hidden = 1;
    std::vector<double> w1;  // (hidden, channels)
    std::vector<double> b1;  // (hidden)
    std::vector<double> w2;  // (channels, hidden)
    std::vector<double> b2;  // (channels)
    ConvParams spatial;      // 7x7, 2 -> 1, padding 3

    // All-zero parameters; hidden = max(1, channels / reduction).
    static CbamParams zeros(int channels, int reduction = kDefaultReduction);
    std::vector<std::span<double>> tensors();
};

struct C2fConfig {
    int c_in = 64;
    int c_out = 64;
    int n = 1;              // bottleneck count
    bool shortcut = true;   // residual add inside bottlenecks
    bool coord = true;      // entry convolution sees two coordinate channels
    bool attention = true;  // CBAM on the concatenation
    int reduction = kDefaultReduction;

    int hidden() const { return c_out / 2 > 0 ? c_out / 2 : 1; }
    int concat_channels() const { return (2 + n) * hidden(); }
};

struct Bottleneck {
    ConvParams a;  // 3x3, pad 1
    ConvParams b;  // 3x3, pad 1
};

struct C2fParams {
    C2fConfig config;
    ConvParams entry;  // 1x1: c_in (+2) -> 2*hidden
    std::vector<Bottleneck> blocks;
    CbamParams cbam;   // unused unless config.attention
    ConvParams exit;   // 1x1: concat -> c_out

    static C2fParams zeros(const C2fConfig& config);
    std::vector<std::span<double>> tensors();
};

// Plain C2f (YOLOv8) and the C2f_CD variant with coordinates and attention.
C2fConfig c2f_config(int c_in, int c_out, int n);
C2fConfig c2f_cd_config(int c_in, int c_out, int n);

// Cross-correlation with zero padding. Throws ShapeMismatch.
Tensor4 conv2d(const Tensor4& x, const ConvParams& p);
// Appends x- then y-coordinate channels in [-1, 1] (0 for a unit dimension).
Tensor4 add_coord_channels(const Tensor4& x);
Tensor4 coordconv(const Tensor4& x, const ConvParams& p);

double sigmoid(double z);
double silu(double z);

// One gate per (n, c), row-major.
std::vector<double> cbam_channel_attention(const Tensor4& x, const CbamParams& p);
// Tensor of shape (n, 1, h, w).
Tensor4 cbam_spatial_attention(const Tensor4& x, const CbamParams& p);
Tensor4 cbam(const Tensor4& x, const CbamParams& p);

Tensor4 c2f(const Tensor4& x, const C2fParams& p);

// --- backward passes (gradient of a scalar loss given dL/dy) ---

struct ConvGrads {
    Tensor4 input;
    ConvParams params;
};
ConvGrads conv2d_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out);
ConvGrads coordconv_backward(const Tensor4& x, const ConvParams& p, const Tensor4& grad_out);

struct CbamGrads {
    Tensor4 input;
    CbamParams params;
};
CbamGrads cbam_backward(const Tensor4& x, const CbamParams& p, const Tensor4& grad_out);

struct C2fGrads {
    Tensor4 input;
    C2fParams params;
};
C2fGrads c2f_backward(const Tensor4& x, const C2fParams& p, const Tensor4& grad_out);

// --- gradient check ---

enum class BlockKind { Conv, CoordConv, Cbam, C2fCd };

std::string_view block_name(BlockKind kind);
// Accepts conv|coordconv|cbam|c2fcd (and c2f_cd). Throws ParseError.
BlockKind parse_block(std::string_view name);

struct GradcheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;  // number of scalar derivatives compared
};

inline constexpr double kGradcheckStep = 1e-5;
// |analytic - numeric| / max(|analytic|, |numeric|, kGradcheckFloor)
inline constexpr double kGradcheckFloor = 1e-3;

// Random block, parameters and input drawn from `seed`; loss = sum of outputs.
// Compares analytic input and parameter gradients to central differences.
GradcheckResult gradcheck(BlockKind kind, std::uint64_t seed);

// --- FLOP accounting ---
// Convolution: 2*k_h*k_w*c_in*c_out*out_h*out_w. Pooling, sigmoid, activations,
// gating products and residual adds: 1 per element touched.

std::uint64_t conv_flops(int c_in, int c_out, int k_h, int k_w, int out_h, int out_w);

struct C2fFlops {
    std::uint64_t convolution = 0;
    std::uint64_t coordinate = 0;  // part of `convolution` due to the two coordinate channels
    std::uint64_t attention = 0;
    std::uint64_t elementwise = 0;
    std::uint64_t total() const { return convolution + attention + elementwise; }
};

std::uint64_t cbam_flops(int channels, int hidden, int h, int w);
C2fFlops c2f_flops(const C2fConfig& config, int h, int w);

// --- JSON layout ---
// {"format": "foodcal.nnblock", "version": 1, "block": <name>, "params": {...}}
// C2f params carry their own "config" object ahead of the tensors.
inline constexpr int kBlockFormatVersion = 1;

nlohmann::ordered_json to_json(const ConvParams& p);
nlohmann::ordered_json to_json(const CbamParams& p);
nlohmann::ordered_json to_json(const C2fParams& p);
ConvParams conv_params_from_json(const nlohmann::json& j);
CbamParams cbam_params_from_json(const nlohmann::json& j);
C2fParams c2f_params_from_json(const nlohmann::json& j);

nlohmann::ordered_json block_document(BlockKind kind, const nlohmann::ordered_json& params);

}  // namespace foodcal::nn
