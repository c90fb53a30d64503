#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "rbd/common.hpp"
#include "rbd/rng.hpp"
#include "rbd/signature.hpp"
#include "rbd/tensor.hpp"

namespace rbd {

// --- architecture -----------------------------------------------------------

struct model_config {
    int input_d = 64;  // Doppler rows
    int input_t = 48;  // time columns
    int input_channels = 1;
    std::vector<int> conv_depths{32, 64, 128};
    int kernel = 3;
    int fc_hidden = 128;
    int num_classes = 6;
    float leaky_slope = 0.01f;
    float dropout_p = 0.05f;

    void check() const {
        if (conv_depths.empty()) throw config_error("model: need at least one conv layer");
        if (kernel != 3) throw config_error("model: kernel must be 3");
        if (fc_hidden < 1 || num_classes < 2) throw config_error("model: bad head sizes");
        if (!(leaky_slope > 0.0f && leaky_slope < 1.0f))
            throw config_error("model: leaky_slope must be in (0,1)");
        if (!(dropout_p >= 0.0f && dropout_p < 1.0f))
            throw config_error("model: dropout_p must be in [0,1)");
        int div = 1 << conv_depths.size();
        if (input_d % div != 0 || input_t % div != 0)
            throw config_error("model: input " + std::to_string(input_d) + "x" +
                               std::to_string(input_t) + " not divisible by 2^" +
                               std::to_string(conv_depths.size()) + " for pooling");
    }

    int flatten_size() const {
        int div = 1 << conv_depths.size();
        return (input_d / div) * (input_t / div) * conv_depths.back();
    }
};

inline long param_count(const model_config& cfg) {
    cfg.check();
    long total = 0;
    int cin = cfg.input_channels;
    for (int cout : cfg.conv_depths) {
        total += static_cast<long>(cfg.kernel) * cfg.kernel * cin * cout + cout;
        cin = cout;
    }
    total += static_cast<long>(cfg.flatten_size()) * cfg.fc_hidden + cfg.fc_hidden;
    total += static_cast<long>(cfg.fc_hidden) * cfg.num_classes + cfg.num_classes;
    return total;
}

inline std::vector<long> param_count_per_layer(const model_config& cfg) {
    cfg.check();
    std::vector<long> counts;
    int cin = cfg.input_channels;
    for (int cout : cfg.conv_depths) {
        counts.push_back(static_cast<long>(cfg.kernel) * cfg.kernel * cin * cout + cout);
        cin = cout;
    }
    counts.push_back(static_cast<long>(cfg.flatten_size()) * cfg.fc_hidden + cfg.fc_hidden);
    counts.push_back(static_cast<long>(cfg.fc_hidden) * cfg.num_classes + cfg.num_classes);
    return counts;
}

// --- parameters and optimizer state ----------------------------------------

template <class T>
struct model {
    model_config cfg;
    std::vector<tensor<T>> conv_w;  // (K, K, Cin, Cout)
    std::vector<tensor<T>> conv_b;  // (Cout)
    tensor<T> fc1_w, fc1_b;         // (flatten, hidden), (hidden)
    tensor<T> fc2_w, fc2_b;         // (hidden, classes), (classes)

    std::vector<tensor<T>> adam_m, adam_v;
    long adam_t = 0;

    struct named_param {
        std::string name;
        tensor<T>* p;
    };

    std::vector<named_param> params() {
        std::vector<named_param> out;
        for (size_t i = 0; i < conv_w.size(); ++i) {
            out.push_back({"conv" + std::to_string(i + 1) + ".w", &conv_w[i]});
            out.push_back({"conv" + std::to_string(i + 1) + ".b", &conv_b[i]});
        }
        out.push_back({"fc1.w", &fc1_w});
        out.push_back({"fc1.b", &fc1_b});
        out.push_back({"fc2.w", &fc2_w});
        out.push_back({"fc2.b", &fc2_b});
        return out;
    }

    long allocated_params() {
        long n = 0;
        for (auto& np : params()) n += static_cast<long>(np.p->size());
        return n;
    }

    static model he_init(const model_config& cfg, std::uint64_t seed) {
        cfg.check();
        model m;
        m.cfg = cfg;
        rng r(rng::derive(seed, 0x4E49));  // init stream
        auto he_fill = [&](tensor<T>& t, int fan_in) {
            double stddev = std::sqrt(2.0 / fan_in);
            for (auto& x : t.v) x = static_cast<T>(stddev * r.gaussian());
        };
        int cin = cfg.input_channels;
        for (int cout : cfg.conv_depths) {
            tensor<T> w({cfg.kernel, cfg.kernel, cin, cout});
            he_fill(w, cfg.kernel * cfg.kernel * cin);
            m.conv_w.push_back(std::move(w));
            m.conv_b.emplace_back(tensor<T>({cout}));
            cin = cout;
        }
        m.fc1_w.reshape({cfg.flatten_size(), cfg.fc_hidden});
        he_fill(m.fc1_w, cfg.flatten_size());
        m.fc1_b.reshape({cfg.fc_hidden});
        m.fc2_w.reshape({cfg.fc_hidden, cfg.num_classes});
        he_fill(m.fc2_w, cfg.fc_hidden);
        m.fc2_b.reshape({cfg.num_classes});

        for (auto& np : m.params()) {
            tensor<T> zm = *np.p, zv = *np.p;
            zm.zero();
            zv.zero();
            m.adam_m.push_back(std::move(zm));
            m.adam_v.push_back(std::move(zv));
        }
        return m;
    }
};

// --- primitive ops ----------------------------------------------------------

namespace nnops {

// C(+)= A * B, row-major, inner loop contiguous over B columns
template <class T>
inline void gemm(const T* a, const T* b, T* c, int rows, int kk, int cols, bool accumulate) {
    for (int r = 0; r < rows; ++r) {
        T* crow = c + static_cast<size_t>(r) * cols;
        if (!accumulate)
            for (int j = 0; j < cols; ++j) crow[j] = T(0);
        const T* arow = a + static_cast<size_t>(r) * kk;
        for (int k = 0; k < kk; ++k) {
            T av = arow[k];
            const T* brow = b + static_cast<size_t>(k) * cols;
            for (int j = 0; j < cols; ++j) crow[j] += av * brow[j];
        }
    }
}

// C += A^T * B (A rows x kk walked row-wise, accumulating outer products)
template <class T>
inline void gemm_at_b_accum(const T* a, const T* b, T* c, int rows, int kk, int cols) {
    for (int r = 0; r < rows; ++r) {
        const T* arow = a + static_cast<size_t>(r) * kk;
        const T* brow = b + static_cast<size_t>(r) * cols;
        for (int k = 0; k < kk; ++k) {
            T av = arow[k];
            if (av == T(0)) continue;
            T* crow = c + static_cast<size_t>(k) * cols;
            for (int j = 0; j < cols; ++j) crow[j] += av * brow[j];
        }
    }
}

// patch rows ordered (kh, kw, cin) to match the (K,K,Cin,Cout) weight layout
template <class T>
inline void im2col(const T* in, int h, int w, int cin, T* patches) {
    const int kk = 9 * cin;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            T* row = patches + (static_cast<size_t>(i) * w + j) * kk;
            int idx = 0;
            for (int di = -1; di <= 1; ++di) {
                int si = i + di;
                for (int dj = -1; dj <= 1; ++dj) {
                    int sj = j + dj;
                    if (si < 0 || si >= h || sj < 0 || sj >= w) {
                        for (int c = 0; c < cin; ++c) row[idx++] = T(0);
                    } else {
                        const T* src = in + (static_cast<size_t>(si) * w + sj) * cin;
                        for (int c = 0; c < cin; ++c) row[idx++] = src[c];
                    }
                }
            }
        }
    }
}

template <class T>
inline void col2im_accum(const T* patches, int h, int w, int cin, T* din) {
    const int kk = 9 * cin;
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            const T* row = patches + (static_cast<size_t>(i) * w + j) * kk;
            int idx = 0;
            for (int di = -1; di <= 1; ++di) {
                int si = i + di;
                for (int dj = -1; dj <= 1; ++dj) {
                    int sj = j + dj;
                    if (si < 0 || si >= h || sj < 0 || sj >= w) {
                        idx += cin;
                    } else {
                        T* dst = din + (static_cast<size_t>(si) * w + sj) * cin;
                        for (int c = 0; c < cin; ++c) dst[c] += row[idx++];
                    }
                }
            }
        }
    }
}

template <class T>
struct workspace {
    std::vector<T> patches;   // im2col of the layer input
    std::vector<T> dpatches;  // gradient w.r.t. patches
    std::vector<T> wt;        // transposed weights

    void ensure(size_t patch_elems, size_t w_elems) {
        if (patches.size() < patch_elems) patches.resize(patch_elems);
        if (dpatches.size() < patch_elems) dpatches.resize(patch_elems);
        if (wt.size() < w_elems) wt.resize(w_elems);
    }
};

// 3x3 same-padding cross-correlation, stride 1
template <class T>
inline void conv2d_forward(const T* in, const T* w, const T* b, T* out, int h, int wth, int cin,
                           int cout, workspace<T>& ws) {
    const int rows = h * wth, kk = 9 * cin;
    ws.ensure(static_cast<size_t>(rows) * kk, static_cast<size_t>(kk) * cout);
    im2col(in, h, wth, cin, ws.patches.data());
    gemm(ws.patches.data(), w, out, rows, kk, cout, false);
    for (int r = 0; r < rows; ++r) {
        T* orow = out + static_cast<size_t>(r) * cout;
        for (int c = 0; c < cout; ++c) orow[c] += b[c];
    }
}

// accumulates dw/db; writes din when non-null (skipped for the input layer)
template <class T>
inline void conv2d_backward(const T* in, const T* w, const T* dout, T* din, T* dw, T* db, int h,
                            int wth, int cin, int cout, workspace<T>& ws) {
    const int rows = h * wth, kk = 9 * cin;
    ws.ensure(static_cast<size_t>(rows) * kk, static_cast<size_t>(kk) * cout);
    im2col(in, h, wth, cin, ws.patches.data());
    gemm_at_b_accum(ws.patches.data(), dout, dw, rows, kk, cout);
    for (int r = 0; r < rows; ++r) {
        const T* drow = dout + static_cast<size_t>(r) * cout;
        for (int c = 0; c < cout; ++c) db[c] += drow[c];
    }
    if (!din) return;
    for (int k = 0; k < kk; ++k)
        for (int c = 0; c < cout; ++c) ws.wt[static_cast<size_t>(c) * kk + k] = w[static_cast<size_t>(k) * cout + c];
    gemm(dout, ws.wt.data(), ws.dpatches.data(), rows, cout, kk, false);
    std::fill(din, din + static_cast<size_t>(rows) * cin, T(0));
    col2im_accum(ws.dpatches.data(), h, wth, cin, din);
}

template <class T>
inline void leaky_relu_forward(const T* x, T* y, size_t n, T slope) {
    for (size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : slope * x[i];
}

// backward from the forward OUTPUT: y > 0 iff x > 0; at x == 0 the
// subgradient is defined as the slope
template <class T>
inline void leaky_relu_backward(const T* y, const T* dy, T* dx, size_t n, T slope) {
    for (size_t i = 0; i < n; ++i) dx[i] = y[i] > T(0) ? dy[i] : slope * dy[i];
}

// 2x2 window, stride 2; ties resolve to the first element in row-major order
template <class T>
inline void maxpool2_forward(const T* in, T* out, int* argmax, int h, int w, int ch) {
    if (h % 2 != 0 || w % 2 != 0)
        throw shape_error("maxpool2: input dims must be even, got " + std::to_string(h) + "x" +
                          std::to_string(w));
    const int oh = h / 2, ow = w / 2;
    for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j)
            for (int c = 0; c < ch; ++c) {
                int best_idx = ((2 * i) * w + 2 * j) * ch + c;
                T best = in[best_idx];
                const int cand[3] = {((2 * i) * w + 2 * j + 1) * ch + c,
                                     ((2 * i + 1) * w + 2 * j) * ch + c,
                                     ((2 * i + 1) * w + 2 * j + 1) * ch + c};
                for (int idx : cand)
                    if (in[idx] > best) { best = in[idx]; best_idx = idx; }
                out[(static_cast<size_t>(i) * ow + j) * ch + c] = best;
                argmax[(static_cast<size_t>(i) * ow + j) * ch + c] = best_idx;
            }
}

template <class T>
inline void maxpool2_backward(const T* dout, const int* argmax, T* din, size_t out_n, size_t in_n) {
    std::fill(din, din + in_n, T(0));
    for (size_t i = 0; i < out_n; ++i) din[argmax[i]] += dout[i];
}

// inverted dropout; identity outside training
template <class T>
inline void dropout_forward(const T* x, T* y, std::uint8_t* mask, size_t n, T p, bool training,
                            std::uint64_t seed) {
    if (!training || p == T(0)) {
        if (y != x) std::copy(x, x + n, y);
        std::fill(mask, mask + n, std::uint8_t(1));
        return;
    }
    rng r(seed);
    T scale = T(1) / (T(1) - p);
    for (size_t i = 0; i < n; ++i) {
        bool keep = r.uniform() >= static_cast<double>(p);
        mask[i] = keep ? 1 : 0;
        y[i] = keep ? x[i] * scale : T(0);
    }
}

template <class T>
inline void dropout_backward(const T* dy, const std::uint8_t* mask, T* dx, size_t n, T p) {
    T scale = T(1) / (T(1) - p);
    for (size_t i = 0; i < n; ++i) dx[i] = mask[i] ? dy[i] * scale : T(0);
}

template <class T>
inline void dense_forward(const T* x, const T* w, const T* b, T* y, int in_n, int out_n) {
    for (int j = 0; j < out_n; ++j) y[j] = b[j];
    gemm(x, w, y, 1, in_n, out_n, true);
}

template <class T>
inline void dense_backward(const T* x, const T* w, const T* dy, T* dx, T* dw, T* db, int in_n,
                           int out_n) {
    for (int j = 0; j < out_n; ++j) db[j] += dy[j];
    gemm_at_b_accum(x, dy, dw, 1, in_n, out_n);
    if (!dx) return;
    for (int k = 0; k < in_n; ++k) {
        const T* wrow = w + static_cast<size_t>(k) * out_n;
        T s = T(0);
        for (int j = 0; j < out_n; ++j) s += wrow[j] * dy[j];
        dx[k] = s;
    }
}

// max-subtracted softmax; loss = -log p[label]; dlogits = (p - onehot) * scale
template <class T>
inline T softmax_xent(const T* logits, int n, int label, T* probs, T* dlogits, T grad_scale) {
    T m = logits[0];
    for (int i = 1; i < n; ++i) m = std::max(m, logits[i]);
    T sum = T(0);
    for (int i = 0; i < n; ++i) sum += (probs[i] = std::exp(logits[i] - m));
    for (int i = 0; i < n; ++i) probs[i] /= sum;
    if (dlogits)
        for (int i = 0; i < n; ++i)
            dlogits[i] = (probs[i] - (i == label ? T(1) : T(0))) * grad_scale;
    T p = std::max(probs[label], std::numeric_limits<T>::min());
    return -std::log(p);
}

}  // namespace nnops

// --- forward / backward over the whole network -------------------------------

template <class T>
struct forward_cache {
    // per conv block: input, activation output, pool argmax, dropout mask
    std::vector<tensor<T>> conv_in;
    std::vector<tensor<T>> conv_out;   // pre-activation scratch
    std::vector<tensor<T>> relu_out;
    std::vector<tensor<T>> pool_out;
    std::vector<std::vector<int>> pool_argmax;
    std::vector<std::vector<std::uint8_t>> drop_mask;
    std::vector<tensor<T>> block_out;  // post-dropout

    tensor<T> fc1_out, fc1_relu, fc1_dropped, logits;
    std::vector<std::uint8_t> fc1_mask;
    std::vector<T> probs;
    nnops::workspace<T> ws;
};

namespace detail {

template <class T>
inline void prepare_cache(const model_config& cfg, forward_cache<T>& cache) {
    const size_t layers = cfg.conv_depths.size();
    if (cache.conv_in.size() == layers) return;
    cache.conv_in.resize(layers);
    cache.conv_out.resize(layers);
    cache.relu_out.resize(layers);
    cache.pool_out.resize(layers);
    cache.pool_argmax.resize(layers);
    cache.drop_mask.resize(layers);
    cache.block_out.resize(layers);
    int h = cfg.input_d, w = cfg.input_t, cin = cfg.input_channels;
    for (size_t l = 0; l < layers; ++l) {
        int cout = cfg.conv_depths[l];
        cache.conv_in[l].reshape({h, w, cin});
        cache.conv_out[l].reshape({h, w, cout});
        cache.relu_out[l].reshape({h, w, cout});
        cache.pool_out[l].reshape({h / 2, w / 2, cout});
        cache.pool_argmax[l].assign(static_cast<size_t>(h / 2) * (w / 2) * cout, 0);
        cache.drop_mask[l].assign(static_cast<size_t>(h / 2) * (w / 2) * cout, 1);
        cache.block_out[l].reshape({h / 2, w / 2, cout});
        h /= 2;
        w /= 2;
        cin = cout;
    }
    cache.fc1_out.reshape({cfg.fc_hidden});
    cache.fc1_relu.reshape({cfg.fc_hidden});
    cache.fc1_dropped.reshape({cfg.fc_hidden});
    cache.fc1_mask.assign(cfg.fc_hidden, 1);
    cache.logits.reshape({cfg.num_classes});
    cache.probs.assign(cfg.num_classes, T(0));
}

}  // namespace detail

// single-sample forward pass; `input` is (D, T, channels) row-major
template <class T>
inline const tensor<T>& forward_sample(model<T>& m, const T* input, forward_cache<T>& cache,
                                       bool training, std::uint64_t dropout_seed) {
    const model_config& cfg = m.cfg;
    detail::prepare_cache(cfg, cache);
    const T slope = static_cast<T>(cfg.leaky_slope);
    const T p = static_cast<T>(cfg.dropout_p);

    std::copy(input, input + cache.conv_in[0].size(), cache.conv_in[0].data());
    int h = cfg.input_d, w = cfg.input_t, cin = cfg.input_channels;
    for (size_t l = 0; l < cfg.conv_depths.size(); ++l) {
        int cout = cfg.conv_depths[l];
        nnops::conv2d_forward(cache.conv_in[l].data(), m.conv_w[l].data(), m.conv_b[l].data(),
                              cache.conv_out[l].data(), h, w, cin, cout, cache.ws);
        nnops::leaky_relu_forward(cache.conv_out[l].data(), cache.relu_out[l].data(),
                                  cache.relu_out[l].size(), slope);
        nnops::maxpool2_forward(cache.relu_out[l].data(), cache.pool_out[l].data(),
                                cache.pool_argmax[l].data(), h, w, cout);
        nnops::dropout_forward(cache.pool_out[l].data(), cache.block_out[l].data(),
                               cache.drop_mask[l].data(), cache.block_out[l].size(), p, training,
                               rng::derive(dropout_seed, 0xD0, l));
        h /= 2;
        w /= 2;
        cin = cout;
        if (l + 1 < cfg.conv_depths.size())
            std::copy(cache.block_out[l].v.begin(), cache.block_out[l].v.end(),
                      cache.conv_in[l + 1].v.begin());
    }

    const tensor<T>& flat = cache.block_out.back();
    nnops::dense_forward(flat.data(), m.fc1_w.data(), m.fc1_b.data(), cache.fc1_out.data(),
                         cfg.flatten_size(), cfg.fc_hidden);
    nnops::leaky_relu_forward(cache.fc1_out.data(), cache.fc1_relu.data(), cache.fc1_relu.size(),
                              slope);
    nnops::dropout_forward(cache.fc1_relu.data(), cache.fc1_dropped.data(), cache.fc1_mask.data(),
                           cache.fc1_dropped.size(), p, training, rng::derive(dropout_seed, 0xD1));
    nnops::dense_forward(cache.fc1_dropped.data(), m.fc2_w.data(), m.fc2_b.data(),
                         cache.logits.data(), cfg.fc_hidden, cfg.num_classes);
    return cache.logits;
}

// gradient accumulator shaped like the parameter list
template <class T>
struct gradients {
    std::vector<tensor<T>> g;

    static gradients like(model<T>& m) {
        gradients out;
        for (auto& np : m.params()) {
            tensor<T> t = *np.p;
            t.zero();
            out.g.push_back(std::move(t));
        }
        return out;
    }
    void zero() {
        for (auto& t : g) t.zero();
    }
    void add(const gradients& o) {
        for (size_t i = 0; i < g.size(); ++i)
            for (size_t j = 0; j < g[i].size(); ++j) g[i].v[j] += o.g[i].v[j];
    }
};

// backward for one sample on top of forward_sample's cache;
// returns the cross-entropy loss; grad layout matches model::params()
template <class T>
inline T backward_sample(model<T>& m, forward_cache<T>& cache, int label, T grad_scale,
                         gradients<T>& grads) {
    const model_config& cfg = m.cfg;
    const T slope = static_cast<T>(cfg.leaky_slope);
    const T p = static_cast<T>(cfg.dropout_p);
    const size_t layers = cfg.conv_depths.size();
    const size_t conv_params = 2 * layers;

    tensor<T> dlogits({cfg.num_classes});
    T loss = nnops::softmax_xent(cache.logits.data(), cfg.num_classes, label, cache.probs.data(),
                                 dlogits.data(), grad_scale);

    tensor<T> d_fc1_dropped({cfg.fc_hidden});
    nnops::dense_backward(cache.fc1_dropped.data(), m.fc2_w.data(), dlogits.data(),
                          d_fc1_dropped.data(), grads.g[conv_params + 2].data(),
                          grads.g[conv_params + 3].data(), cfg.fc_hidden, cfg.num_classes);

    tensor<T> d_fc1_relu({cfg.fc_hidden}), d_fc1_out({cfg.fc_hidden});
    nnops::dropout_backward(d_fc1_dropped.data(), cache.fc1_mask.data(), d_fc1_relu.data(),
                            d_fc1_relu.size(), p);
    nnops::leaky_relu_backward(cache.fc1_relu.data(), d_fc1_relu.data(), d_fc1_out.data(),
                               d_fc1_out.size(), slope);

    // flatten is a reshape, so this is also the gradient at the last block's output
    tensor<T> d_upper({cfg.flatten_size()});
    nnops::dense_backward(cache.block_out.back().data(), m.fc1_w.data(), d_fc1_out.data(),
                          d_upper.data(), grads.g[conv_params].data(),
                          grads.g[conv_params + 1].data(), cfg.flatten_size(), cfg.fc_hidden);

    tensor<T> d_pool, d_relu, d_conv, d_in;
    for (size_t l = layers; l-- > 0;) {
        int cout = cfg.conv_depths[l];
        int h = cache.conv_in[l].dims[0], w = cache.conv_in[l].dims[1];
        int cin = cache.conv_in[l].dims[2];

        d_pool.reshape({h / 2, w / 2, cout});
        nnops::dropout_backward(d_upper.data(), cache.drop_mask[l].data(), d_pool.data(),
                                d_pool.size(), p);
        d_relu.reshape({h, w, cout});
        nnops::maxpool2_backward(d_pool.data(), cache.pool_argmax[l].data(), d_relu.data(),
                                 d_pool.size(), d_relu.size());
        d_conv.reshape({h, w, cout});
        nnops::leaky_relu_backward(cache.relu_out[l].data(), d_relu.data(), d_conv.data(),
                                   d_conv.size(), slope);
        bool need_din = l > 0;
        if (need_din) d_in.reshape({h, w, cin});
        nnops::conv2d_backward(cache.conv_in[l].data(), m.conv_w[l].data(), d_conv.data(),
                               need_din ? d_in.data() : nullptr, grads.g[2 * l].data(),
                               grads.g[2 * l + 1].data(), h, w, cin, cout, cache.ws);
        if (need_din) d_upper = std::move(d_in);
    }
    return loss;
}

// --- Adam --------------------------------------------------------------------

struct adam_params {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

template <class T>
inline void adam_step(model<T>& m, const gradients<T>& grads, const adam_params& hp = {}) {
    auto params = m.params();
    for (size_t i = 0; i < params.size(); ++i)
        for (T gv : grads.g[i].v)
            if (!std::isfinite(static_cast<double>(gv)))
                throw training_error("non-finite gradient in layer " + params[i].name);

    m.adam_t += 1;
    const T b1 = static_cast<T>(hp.beta1), b2 = static_cast<T>(hp.beta2);
    const T bc1 = T(1) - static_cast<T>(std::pow(hp.beta1, m.adam_t));
    const T bc2 = T(1) - static_cast<T>(std::pow(hp.beta2, m.adam_t));
    for (size_t i = 0; i < params.size(); ++i) {
        T* theta = params[i].p->data();
        T* mm = m.adam_m[i].data();
        T* vv = m.adam_v[i].data();
        const T* g = grads.g[i].data();
        const size_t n = params[i].p->size();
        for (size_t j = 0; j < n; ++j) {
            mm[j] = b1 * mm[j] + (T(1) - b1) * g[j];
            vv[j] = b2 * vv[j] + (T(1) - b2) * g[j] * g[j];
            T mhat = mm[j] / bc1;
            T vhat = vv[j] / bc2;
            theta[j] -= static_cast<T>(hp.lr) * mhat / (std::sqrt(vhat) + static_cast<T>(hp.eps));
        }
    }
}

// --- training loop ------------------------------------------------------------

struct train_options {
    int epochs = 10;
    int batch_size = 64;
    adam_params adam{};
    std::uint64_t seed = 1;
    int threads = 0;  // 0 = hardware concurrency
    std::function<void(int, const struct epoch_stats&)> on_epoch;  // progress hook
};

struct epoch_stats {
    double train_loss = 0;
    double val_loss = 0;
    double val_accuracy = 0;
};

namespace detail {

inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

// gradient accumulation is split into a fixed number of chunks so results
// are bit-identical regardless of how many worker threads run them
inline constexpr int kGradChunks = 8;

template <class T>
struct sample_matrix {
    int n = 0;
    size_t stride = 0;
    std::vector<T> values;
    std::vector<int> labels;
    const T* sample(int i) const { return values.data() + static_cast<size_t>(i) * stride; }
};

// one mini-batch of forward+backward+adam; returns summed loss
template <class T>
inline double train_batch(model<T>& m, const sample_matrix<T>& data, const std::vector<int>& order,
                          int begin, int end, std::uint64_t step_seed, const adam_params& hp,
                          int threads, std::vector<gradients<T>>& chunk_grads,
                          std::vector<forward_cache<T>>& caches) {
    const int batch = end - begin;
    const int chunk_size = (batch + kGradChunks - 1) / kGradChunks;
    std::vector<double> chunk_loss(kGradChunks, 0.0);

    auto run_chunk = [&](int chunk, int worker) {
        int lo = begin + chunk * chunk_size;
        int hi = std::min(end, lo + chunk_size);
        if (lo >= hi) return;
        auto& grads = chunk_grads[chunk];
        auto& cache = caches[worker];
        double loss = 0;
        for (int i = lo; i < hi; ++i) {
            int idx = order[i];
            std::uint64_t sample_seed = rng::derive(step_seed, 0x5A, static_cast<std::uint64_t>(i));
            forward_sample(m, data.sample(idx), cache, true, sample_seed);
            loss += static_cast<double>(
                backward_sample(m, cache, data.labels[idx], T(1) / static_cast<T>(batch), grads));
        }
        chunk_loss[chunk] = loss;
    };

    for (auto& g : chunk_grads) g.zero();
    if (threads <= 1) {
        for (int c = 0; c < kGradChunks; ++c) run_chunk(c, 0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (int c = t; c < kGradChunks; c += threads) run_chunk(c, t);
            });
        for (auto& th : pool) th.join();
    }

    for (int c = 1; c < kGradChunks; ++c) chunk_grads[0].add(chunk_grads[c]);
    adam_step(m, chunk_grads[0], hp);

    double total = 0;
    for (double l : chunk_loss) total += l;
    return total;
}

template <class T>
inline void eval_split(model<T>& m, const sample_matrix<T>& data, int threads, double& loss_out,
                       double& acc_out) {
    if (data.n == 0) {
        loss_out = 0;
        acc_out = 0;
        return;
    }
    const int chunk_size = (data.n + kGradChunks - 1) / kGradChunks;
    std::vector<double> chunk_loss(kGradChunks, 0.0);
    std::vector<long> chunk_correct(kGradChunks, 0);
    std::vector<forward_cache<T>> caches(std::max(1, threads));

    auto run_chunk = [&](int chunk, int worker) {
        int lo = chunk * chunk_size, hi = std::min(data.n, lo + chunk_size);
        auto& cache = caches[worker];
        for (int i = lo; i < hi; ++i) {
            const tensor<T>& logits = forward_sample(m, data.sample(i), cache, false, 0);
            chunk_loss[chunk] += static_cast<double>(
                nnops::softmax_xent(logits.data(), m.cfg.num_classes, data.labels[i],
                                    cache.probs.data(), static_cast<T*>(nullptr), T(0)));
            int best = 0;
            for (int c = 1; c < m.cfg.num_classes; ++c)
                if (cache.probs[c] > cache.probs[best]) best = c;
            chunk_correct[chunk] += (best == data.labels[i]) ? 1 : 0;
        }
    };
    if (threads <= 1) {
        for (int c = 0; c < kGradChunks; ++c) run_chunk(c, 0);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (int c = t; c < kGradChunks; c += threads) run_chunk(c, t);
            });
        for (auto& th : pool) th.join();
    }
    double loss = 0;
    long correct = 0;
    for (int c = 0; c < kGradChunks; ++c) {
        loss += chunk_loss[c];
        correct += chunk_correct[c];
    }
    loss_out = loss / data.n;
    acc_out = static_cast<double>(correct) / data.n;
}

}  // namespace detail

template <class T>
struct train_data {
    detail::sample_matrix<T> train;
    detail::sample_matrix<T> val;
};

// packs patterns into contiguous sample rows; all patterns must match cfg dims
template <class T>
inline detail::sample_matrix<T> pack_samples(const model_config& cfg,
                                             const std::vector<const doppler_pattern*>& patterns,
                                             const std::vector<int>& labels) {
    detail::sample_matrix<T> m;
    m.n = static_cast<int>(patterns.size());
    m.stride = static_cast<size_t>(cfg.input_d) * cfg.input_t * cfg.input_channels;
    m.values.resize(m.stride * m.n);
    m.labels = labels;
    for (int i = 0; i < m.n; ++i) {
        const doppler_pattern& p = *patterns[i];
        if (p.d != cfg.input_d || p.t != cfg.input_t)
            throw shape_error("sample " + std::to_string(i) + " is " + std::to_string(p.d) + "x" +
                              std::to_string(p.t) + ", model expects " +
                              std::to_string(cfg.input_d) + "x" + std::to_string(cfg.input_t));
        for (size_t j = 0; j < m.stride; ++j) m.values[m.stride * i + j] = static_cast<T>(p.values[j]);
    }
    return m;
}

// He init + shuffled mini-batches + Adam; deterministic for a fixed seed
// (fixed chunked gradient reduction, hash-derived per-sample dropout streams)
template <class T>
inline std::vector<epoch_stats> train(model<T>& m, const train_data<T>& data,
                                      const train_options& opts) {
    if (data.train.n == 0) throw dataset_error("training split is empty");
    std::vector<long> class_seen(m.cfg.num_classes, 0);
    for (int l : data.train.labels) {
        if (l < 0 || l >= m.cfg.num_classes)
            throw dataset_error("label " + std::to_string(l) + " outside 0.." +
                                std::to_string(m.cfg.num_classes - 1));
        class_seen[l] += 1;
    }
    for (int c = 0; c < m.cfg.num_classes; ++c)
        if (class_seen[c] == 0)
            throw dataset_error("class " + std::to_string(c) + " absent from training split");

    const int threads = detail::resolve_threads(opts.threads);
    std::vector<gradients<T>> chunk_grads;
    for (int c = 0; c < detail::kGradChunks; ++c) chunk_grads.push_back(gradients<T>::like(m));
    std::vector<forward_cache<T>> caches(std::max(1, threads));

    std::vector<int> order(data.train.n);
    for (int i = 0; i < data.train.n; ++i) order[i] = i;

    std::vector<epoch_stats> history;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        rng shuffle_rng(rng::derive(opts.seed, 0x5F, static_cast<std::uint64_t>(epoch)));
        for (int i = data.train.n - 1; i > 0; --i) {
            int j = static_cast<int>(shuffle_rng.uniform_int(static_cast<std::uint64_t>(i) + 1));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0;
        int batch_no = 0;
        for (int begin = 0; begin < data.train.n; begin += opts.batch_size, ++batch_no) {
            int end = std::min(data.train.n, begin + opts.batch_size);
            std::uint64_t step_seed =
                rng::derive(opts.seed, 0x57, static_cast<std::uint64_t>(epoch) * 1000003ull +
                                                 static_cast<std::uint64_t>(batch_no));
            loss_sum += detail::train_batch(m, data.train, order, begin, end, step_seed, opts.adam,
                                            threads, chunk_grads, caches);
        }

        epoch_stats st;
        st.train_loss = loss_sum / data.train.n;
        detail::eval_split(m, data.val, threads, st.val_loss, st.val_accuracy);
        history.push_back(st);
        if (!std::isfinite(st.train_loss))
            throw training_error("training diverged at epoch " + std::to_string(epoch + 1));
        if (opts.on_epoch) opts.on_epoch(epoch, st);
    }
    return history;
}

// --- prediction ----------------------------------------------------------------

struct prediction {
    behavior label = behavior::other;
    std::vector<double> probabilities;
};

template <class T>
inline prediction predict(model<T>& m, const doppler_pattern& pattern, forward_cache<T>& cache) {
    if (pattern.d != m.cfg.input_d || pattern.t != m.cfg.input_t ||
        m.cfg.input_channels != 1)
        throw shape_error("pattern " + std::to_string(pattern.d) + "x" + std::to_string(pattern.t) +
                          " does not match model input " + std::to_string(m.cfg.input_d) + "x" +
                          std::to_string(m.cfg.input_t));
    std::vector<T> input(pattern.values.size());
    for (size_t i = 0; i < input.size(); ++i) input[i] = static_cast<T>(pattern.values[i]);
    const tensor<T>& logits = forward_sample(m, input.data(), cache, false, 0);
    nnops::softmax_xent(logits.data(), m.cfg.num_classes, 0, cache.probs.data(),
                        static_cast<T*>(nullptr), T(0));
    prediction out;
    out.probabilities.assign(cache.probs.begin(), cache.probs.end());
    int best = 0;
    for (int c = 1; c < m.cfg.num_classes; ++c)
        if (out.probabilities[c] > out.probabilities[best]) best = c;
    out.label = static_cast<behavior>(best);
    return out;
}

template <class T>
inline prediction predict(model<T>& m, const doppler_pattern& pattern) {
    forward_cache<T> cache;
    return predict(m, pattern, cache);
}

// --- model file (RBNN) -----------------------------------------------------------
//
// little-endian: magic "RBNN", version u32, config (input dims u32 x3,
// conv layer count u32 + depths, kernel u32, fc_hidden u32, num_classes u32,
// leaky_slope f32, dropout_p f32), then each parameter tensor as
// rank u32, dims u32 x rank, f32 values, in model::params() order.

namespace detail {

struct byte_writer {
    std::ofstream f;
    size_t offset = 0;
    explicit byte_writer(const std::string& path) : f(path, std::ios::binary) {
        if (!f) throw format_error("cannot open for writing: " + path);
    }
    void write(const void* p, size_t n) {
        f.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        offset += n;
    }
    void u32(std::uint32_t v) { write(&v, 4); }
    void f32(float v) { write(&v, 4); }
};

struct byte_reader {
    std::ifstream f;
    size_t offset = 0;
    std::string path;
    explicit byte_reader(const std::string& p) : f(p, std::ios::binary), path(p) {
        if (!f) throw format_error("cannot open: " + p);
    }
    void read(void* p, size_t n) {
        f.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (f.gcount() != static_cast<std::streamsize>(n))
            throw format_error(path + ": truncated at byte offset " + std::to_string(offset));
        offset += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        read(&v, 4);
        return v;
    }
    float f32() {
        float v;
        read(&v, 4);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v;
        read(&v, 8);
        return v;
    }
    void expect_eof() {
        char c;
        f.read(&c, 1);
        if (!f.eof())
            throw format_error(path + ": trailing bytes at offset " + std::to_string(offset));
    }
};

}  // namespace detail

inline constexpr std::uint32_t kModelFormatVersion = 1;

inline void save_model(model<float>& m, const std::string& path) {
    detail::byte_writer w(path);
    w.write("RBNN", 4);
    w.u32(kModelFormatVersion);
    w.u32(static_cast<std::uint32_t>(m.cfg.input_d));
    w.u32(static_cast<std::uint32_t>(m.cfg.input_t));
    w.u32(static_cast<std::uint32_t>(m.cfg.input_channels));
    w.u32(static_cast<std::uint32_t>(m.cfg.conv_depths.size()));
    for (int d : m.cfg.conv_depths) w.u32(static_cast<std::uint32_t>(d));
    w.u32(static_cast<std::uint32_t>(m.cfg.kernel));
    w.u32(static_cast<std::uint32_t>(m.cfg.fc_hidden));
    w.u32(static_cast<std::uint32_t>(m.cfg.num_classes));
    w.f32(m.cfg.leaky_slope);
    w.f32(m.cfg.dropout_p);
    for (auto& np : m.params()) {
        w.u32(static_cast<std::uint32_t>(np.p->rank));
        for (int i = 0; i < np.p->rank; ++i) w.u32(static_cast<std::uint32_t>(np.p->dims[i]));
        w.write(np.p->data(), np.p->size() * sizeof(float));
    }
    if (!w.f) throw format_error("short write: " + path);
}

inline model<float> load_model(const std::string& path) {
    detail::byte_reader r(path);
    char magic[4];
    r.read(magic, 4);
    if (std::memcmp(magic, "RBNN", 4) != 0)
        throw format_error(path + ": bad magic at byte offset 0");
    std::uint32_t version = r.u32();
    if (version != kModelFormatVersion)
        throw format_error(path + ": unsupported version " + std::to_string(version));
    model_config cfg;
    cfg.input_d = static_cast<int>(r.u32());
    cfg.input_t = static_cast<int>(r.u32());
    cfg.input_channels = static_cast<int>(r.u32());
    cfg.conv_depths.resize(r.u32());
    for (auto& d : cfg.conv_depths) d = static_cast<int>(r.u32());
    cfg.kernel = static_cast<int>(r.u32());
    cfg.fc_hidden = static_cast<int>(r.u32());
    cfg.num_classes = static_cast<int>(r.u32());
    cfg.leaky_slope = r.f32();
    cfg.dropout_p = r.f32();

    model<float> m = model<float>::he_init(cfg, 0);
    for (auto& np : m.params()) {
        std::uint32_t rank = r.u32();
        if (static_cast<int>(rank) != np.p->rank)
            throw format_error(path + ": " + np.name + " rank mismatch at byte offset " +
                               std::to_string(r.offset));
        for (int i = 0; i < np.p->rank; ++i) {
            std::uint32_t d = r.u32();
            if (static_cast<int>(d) != np.p->dims[i])
                throw format_error(path + ": " + np.name + " dim mismatch at byte offset " +
                                   std::to_string(r.offset));
        }
        r.read(np.p->data(), np.p->size() * sizeof(float));
    }
    r.expect_eof();
    return m;
}

}  // namespace rbd
