#include "cryosamu/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <unordered_set>

namespace cryosamu {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<float> value) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

Tensor wrap(std::shared_ptr<TensorNode> n) {
    Tensor t;
    t.node() = std::move(n);
    return t;
}

/// Attach graph edges when any parent needs gradients.
void record(const std::shared_ptr<TensorNode>& out,
            std::initializer_list<std::shared_ptr<TensorNode>> parents,
            std::function<void(TensorNode&)> fn) {
    bool needs = false;
    for (const auto& p : parents)
        if (p && p->requires_grad) needs = true;
    if (!needs) return;
    out->requires_grad = true;
    for (const auto& p : parents)
        if (p) out->parents.push_back(p);
    out->backward_fn = std::move(fn);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw config_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                           " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), 0.0f, requires_grad);
}

Tensor Tensor::full(Shape shape, float fill, bool requires_grad) {
    int64_t n = shape_numel(shape);
    auto node = make_node(std::move(shape), std::vector<float>(size_t(n), fill));
    node->requires_grad = requires_grad;
    return wrap(std::move(node));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
    if (shape_numel(shape) != int64_t(data.size()))
        throw config_error("tensor data length does not match shape " + shape_str(shape));
    auto node = make_node(std::move(shape), std::move(data));
    node->requires_grad = requires_grad;
    return wrap(std::move(node));
}

float Tensor::item() const {
    if (numel() != 1) throw config_error("item() requires a scalar tensor");
    return node_->value[0];
}

void Tensor::backward() const {
    if (numel() != 1) throw config_error("backward() requires a scalar root");

    // Iterative post-order DFS; process nodes in reverse topological order.
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->parents.size()) {
            TensorNode* p = n->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    for (TensorNode* n : order) n->ensure_grad();
    node_->grad[0] = 1.0f;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const int64_t n = a.numel();
    std::vector<float> out(static_cast<size_t>(n));
    const float* pa = a.data().data();
    const float* pb = b.data().data();
#pragma omp parallel for schedule(static) if (n > 1 << 16)
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = pa[i] + pb[i];

    auto node = make_node(a.shape(), std::move(out));
    auto an = a.node(), bn = b.node();
    record(node, {an, bn}, [an, bn](TensorNode& self) {
        const int64_t n = self.numel();
        if (an->requires_grad) {
            an->ensure_grad();
            for (int64_t i = 0; i < n; ++i) an->grad[size_t(i)] += self.grad[size_t(i)];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (int64_t i = 0; i < n; ++i) bn->grad[size_t(i)] += self.grad[size_t(i)];
        }
    });
    return wrap(std::move(node));
}

Tensor mul_scalar(const Tensor& a, double s) {
    const int64_t n = a.numel();
    std::vector<float> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = float(a.data()[size_t(i)] * s);
    auto node = make_node(a.shape(), std::move(out));
    auto an = a.node();
    record(node, {an}, [an, s](TensorNode& self) {
        an->ensure_grad();
        for (int64_t i = 0; i < self.numel(); ++i)
            an->grad[size_t(i)] += float(self.grad[size_t(i)] * s);
    });
    return wrap(std::move(node));
}

Tensor silu(const Tensor& x) {
    const int64_t n = x.numel();
    std::vector<float> out(static_cast<size_t>(n));
    const float* px = x.data().data();
#pragma omp parallel for schedule(static) if (n > 1 << 16)
    for (int64_t i = 0; i < n; ++i) {
        const double v = px[i];
        out[size_t(i)] = float(v / (1.0 + std::exp(-v)));
    }
    auto node = make_node(x.shape(), std::move(out));
    auto xn = x.node();
    record(node, {xn}, [xn](TensorNode& self) {
        xn->ensure_grad();
        const int64_t n = self.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double v = xn->value[size_t(i)];
            const double sig = 1.0 / (1.0 + std::exp(-v));
            xn->grad[size_t(i)] += float(self.grad[size_t(i)] * sig * (1.0 + v * (1.0 - sig)));
        }
    });
    return wrap(std::move(node));
}

Tensor dropout(const Tensor& x, double p, uint64_t seed) {
    if (p < 0.0 || p >= 1.0) throw config_error("dropout p must be in [0,1)");
    if (p == 0.0) return x;

    const int64_t n = x.numel();
    auto mask = std::make_shared<std::vector<float>>(size_t(n));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const float keep_scale = float(1.0 / (1.0 - p));
    for (int64_t i = 0; i < n; ++i)
        (*mask)[size_t(i)] = uni(rng) < p ? 0.0f : keep_scale;

    std::vector<float> out(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = x.data()[size_t(i)] * (*mask)[size_t(i)];
    auto node = make_node(x.shape(), std::move(out));
    auto xn = x.node();
    record(node, {xn}, [xn, mask](TensorNode& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < self.numel(); ++i)
            xn->grad[size_t(i)] += self.grad[size_t(i)] * (*mask)[size_t(i)];
    });
    return wrap(std::move(node));
}

namespace {

struct ConvDims {
    int64_t B, Cin, D, H, W, Cout, kd, kh, kw, od, oh, ow;
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride,
                   int64_t pad) {
    if (x.ndim() != 5 || w.ndim() != 5)
        throw config_error("conv3d expects 5-D input and weight");
    ConvDims d;
    d.B = x.dim(0);
    d.Cin = x.dim(1);
    d.D = x.dim(2);
    d.H = x.dim(3);
    d.W = x.dim(4);
    d.Cout = w.dim(0);
    d.kd = w.dim(2);
    d.kh = w.dim(3);
    d.kw = w.dim(4);
    if (w.dim(1) != d.Cin)
        throw config_error("conv3d: weight expects " + std::to_string(w.dim(1)) +
                           " input channels, input has " + std::to_string(d.Cin));
    if (bias.defined() && bias.numel() != d.Cout)
        throw config_error("conv3d: bias length does not match output channels");
    if (stride < 1 || pad < 0) throw config_error("conv3d: invalid stride/pad");
    d.od = (d.D + 2 * pad - d.kd) / stride + 1;
    d.oh = (d.H + 2 * pad - d.kh) / stride + 1;
    d.ow = (d.W + 2 * pad - d.kw) / stride + 1;
    if (d.od < 1 || d.oh < 1 || d.ow < 1)
        throw config_error("conv3d: kernel larger than padded input");
    return d;
}

void conv3d_forward_kernel(const float* x, const float* w, const float* bias, float* y,
                           const ConvDims& d, int64_t stride, int64_t pad) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < d.B; ++b) {
        for (int64_t oc = 0; oc < d.Cout; ++oc) {
            const float bv = bias ? bias[oc] : 0.0f;
            for (int64_t oz = 0; oz < d.od; ++oz) {
                for (int64_t oy = 0; oy < d.oh; ++oy) {
                    float* yrow = y + (((b * d.Cout + oc) * d.od + oz) * d.oh + oy) * d.ow;
                    for (int64_t ox = 0; ox < d.ow; ++ox) yrow[ox] = bv;
                    for (int64_t ic = 0; ic < d.Cin; ++ic) {
                        for (int64_t kz = 0; kz < d.kd; ++kz) {
                            const int64_t iz = oz * stride + kz - pad;
                            if (iz < 0 || iz >= d.D) continue;
                            for (int64_t ky = 0; ky < d.kh; ++ky) {
                                const int64_t iy = oy * stride + ky - pad;
                                if (iy < 0 || iy >= d.H) continue;
                                const float* xrow =
                                    x + (((b * d.Cin + ic) * d.D + iz) * d.H + iy) * d.W;
                                const float* wrow =
                                    w + (((oc * d.Cin + ic) * d.kd + kz) * d.kh + ky) * d.kw;
                                if (stride == 1) {
                                    for (int64_t kx = 0; kx < d.kw; ++kx) {
                                        const float wv = wrow[kx];
                                        const int64_t x0 = std::max<int64_t>(0, pad - kx);
                                        const int64_t x1 =
                                            std::min(d.ow, d.W + pad - kx);
                                        const float* xs = xrow + kx - pad;
                                        for (int64_t ox = x0; ox < x1; ++ox)
                                            yrow[ox] += wv * xs[ox];
                                    }
                                } else {
                                    for (int64_t ox = 0; ox < d.ow; ++ox) {
                                        float acc = 0.0f;
                                        for (int64_t kx = 0; kx < d.kw; ++kx) {
                                            const int64_t ix = ox * stride + kx - pad;
                                            if (ix < 0 || ix >= d.W) continue;
                                            acc += wrow[kx] * xrow[ix];
                                        }
                                        yrow[ox] += acc;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride, int64_t pad) {
    const ConvDims d = conv_dims(x, w, bias, stride, pad);
    std::vector<float> out(size_t(d.B * d.Cout * d.od * d.oh * d.ow), 0.0f);
    conv3d_forward_kernel(x.data().data(), w.data().data(),
                          bias.defined() ? bias.data().data() : nullptr, out.data(), d, stride,
                          pad);
    auto node = make_node({d.B, d.Cout, d.od, d.oh, d.ow}, std::move(out));

    auto xn = x.node(), wn = w.node();
    auto bn = bias.defined() ? bias.node() : nullptr;
    record(node, {xn, wn, bn}, [xn, wn, bn, d, stride, pad](TensorNode& self) {
        const float* dy = self.grad.data();
        // d/d bias
        if (bn && bn->requires_grad) {
            bn->ensure_grad();
            const int64_t spatial = d.od * d.oh * d.ow;
#pragma omp parallel for schedule(static)
            for (int64_t oc = 0; oc < d.Cout; ++oc) {
                double acc = 0.0;
                for (int64_t b = 0; b < d.B; ++b) {
                    const float* p = dy + (b * d.Cout + oc) * spatial;
                    for (int64_t i = 0; i < spatial; ++i) acc += p[i];
                }
                bn->grad[size_t(oc)] += float(acc);
            }
        }
        // d/d weight
        if (wn->requires_grad) {
            wn->ensure_grad();
            const float* xv = xn->value.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t oc = 0; oc < d.Cout; ++oc) {
                for (int64_t ic = 0; ic < d.Cin; ++ic) {
                    for (int64_t kz = 0; kz < d.kd; ++kz)
                        for (int64_t ky = 0; ky < d.kh; ++ky)
                            for (int64_t kx = 0; kx < d.kw; ++kx) {
                                double acc = 0.0;
                                for (int64_t b = 0; b < d.B; ++b)
                                    for (int64_t oz = 0; oz < d.od; ++oz) {
                                        const int64_t iz = oz * stride + kz - pad;
                                        if (iz < 0 || iz >= d.D) continue;
                                        for (int64_t oy = 0; oy < d.oh; ++oy) {
                                            const int64_t iy = oy * stride + ky - pad;
                                            if (iy < 0 || iy >= d.H) continue;
                                            const float* dyrow =
                                                dy + (((b * d.Cout + oc) * d.od + oz) * d.oh + oy) *
                                                         d.ow;
                                            const float* xrow =
                                                xv +
                                                (((b * d.Cin + ic) * d.D + iz) * d.H + iy) * d.W;
                                            for (int64_t ox = 0; ox < d.ow; ++ox) {
                                                const int64_t ix = ox * stride + kx - pad;
                                                if (ix < 0 || ix >= d.W) continue;
                                                acc += double(dyrow[ox]) * double(xrow[ix]);
                                            }
                                        }
                                    }
                                wn->grad[size_t(
                                    (((oc * d.Cin + ic) * d.kd + kz) * d.kh + ky) * d.kw + kx)] +=
                                    float(acc);
                            }
                }
            }
        }
        // d/d input (gather per input element)
        if (xn->requires_grad) {
            xn->ensure_grad();
            const float* wv = wn->value.data();
#pragma omp parallel for collapse(2) schedule(static)
            for (int64_t b = 0; b < d.B; ++b) {
                for (int64_t ic = 0; ic < d.Cin; ++ic) {
                    for (int64_t iz = 0; iz < d.D; ++iz)
                        for (int64_t iy = 0; iy < d.H; ++iy)
                            for (int64_t ix = 0; ix < d.W; ++ix) {
                                double acc = 0.0;
                                for (int64_t oc = 0; oc < d.Cout; ++oc)
                                    for (int64_t kz = 0; kz < d.kd; ++kz) {
                                        const int64_t num_z = iz + pad - kz;
                                        if (num_z < 0 || num_z % stride) continue;
                                        const int64_t oz = num_z / stride;
                                        if (oz >= d.od) continue;
                                        for (int64_t ky = 0; ky < d.kh; ++ky) {
                                            const int64_t num_y = iy + pad - ky;
                                            if (num_y < 0 || num_y % stride) continue;
                                            const int64_t oy = num_y / stride;
                                            if (oy >= d.oh) continue;
                                            for (int64_t kx = 0; kx < d.kw; ++kx) {
                                                const int64_t num_x = ix + pad - kx;
                                                if (num_x < 0 || num_x % stride) continue;
                                                const int64_t ox = num_x / stride;
                                                if (ox >= d.ow) continue;
                                                acc += double(
                                                           dy[(((b * d.Cout + oc) * d.od + oz) *
                                                                   d.oh +
                                                               oy) *
                                                                  d.ow +
                                                              ox]) *
                                                       double(wv[(((oc * d.Cin + ic) * d.kd + kz) *
                                                                      d.kh +
                                                                  ky) *
                                                                     d.kw +
                                                                 kx]);
                                            }
                                        }
                                    }
                                xn->grad[size_t((((b * d.Cin + ic) * d.D + iz) * d.H + iy) * d.W +
                                                ix)] += float(acc);
                            }
                }
            }
        }
    });
    return wrap(std::move(node));
}

Tensor group_norm(const Tensor& x, int64_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    if (x.ndim() < 2) throw config_error("group_norm expects (B, C, ...)");
    const int64_t B = x.dim(0), C = x.dim(1);
    if (groups < 1 || C % groups != 0)
        throw config_error("group_norm: channels " + std::to_string(C) +
                           " not divisible by groups " + std::to_string(groups));
    if (gamma.numel() != C || beta.numel() != C)
        throw config_error("group_norm: affine parameters must have C entries");

    const int64_t spatial = x.numel() / (B * C);
    const int64_t cpg = C / groups;
    const int64_t group_elems = cpg * spatial;

    auto mean = std::make_shared<std::vector<double>>(size_t(B * groups));
    auto inv_std = std::make_shared<std::vector<double>>(size_t(B * groups));
    std::vector<float> out(static_cast<size_t>(x.numel()));

    const float* xv = x.data().data();
    const float* gv = gamma.data().data();
    const float* bv = beta.data().data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < B; ++b) {
        for (int64_t g = 0; g < groups; ++g) {
            const int64_t base = (b * C + g * cpg) * spatial;
            double sum = 0.0, sq = 0.0;
            for (int64_t i = 0; i < group_elems; ++i) {
                const double v = xv[base + i];
                sum += v;
                sq += v * v;
            }
            const double mu = sum / double(group_elems);
            const double var = std::max(0.0, sq / double(group_elems) - mu * mu);
            const double inv = 1.0 / std::sqrt(var + eps);
            (*mean)[size_t(b * groups + g)] = mu;
            (*inv_std)[size_t(b * groups + g)] = inv;
            for (int64_t c = 0; c < cpg; ++c) {
                const int64_t ch = g * cpg + c;
                const int64_t cbase = (b * C + ch) * spatial;
                for (int64_t i = 0; i < spatial; ++i) {
                    const double xhat = (xv[cbase + i] - mu) * inv;
                    out[size_t(cbase + i)] = float(gv[ch] * xhat + bv[ch]);
                }
            }
        }
    }

    auto node = make_node(x.shape(), std::move(out));
    auto xn = x.node(), gn = gamma.node(), bn = beta.node();
    record(node, {xn, gn, bn},
           [xn, gn, bn, mean, inv_std, B, C, groups, cpg, spatial, group_elems](TensorNode& self) {
               const float* dy = self.grad.data();
               const float* xv = xn->value.data();
               const float* gv = gn->value.data();
               if (gn->requires_grad || bn->requires_grad) {
                   gn->ensure_grad();
                   bn->ensure_grad();
#pragma omp parallel for schedule(static)
                   for (int64_t ch = 0; ch < C; ++ch) {
                       const int64_t g = ch / cpg;
                       double dg = 0.0, db = 0.0;
                       for (int64_t b = 0; b < B; ++b) {
                           const double mu = (*mean)[size_t(b * groups + g)];
                           const double inv = (*inv_std)[size_t(b * groups + g)];
                           const int64_t cbase = (b * C + ch) * spatial;
                           for (int64_t i = 0; i < spatial; ++i) {
                               const double xhat = (xv[cbase + i] - mu) * inv;
                               dg += double(dy[cbase + i]) * xhat;
                               db += double(dy[cbase + i]);
                           }
                       }
                       gn->grad[size_t(ch)] += float(dg);
                       bn->grad[size_t(ch)] += float(db);
                   }
               }
               if (xn->requires_grad) {
                   xn->ensure_grad();
#pragma omp parallel for collapse(2) schedule(static)
                   for (int64_t b = 0; b < B; ++b) {
                       for (int64_t g = 0; g < groups; ++g) {
                           const double mu = (*mean)[size_t(b * groups + g)];
                           const double inv = (*inv_std)[size_t(b * groups + g)];
                           double sum_h = 0.0, sum_hx = 0.0;
                           for (int64_t c = 0; c < cpg; ++c) {
                               const int64_t ch = g * cpg + c;
                               const int64_t cbase = (b * C + ch) * spatial;
                               for (int64_t i = 0; i < spatial; ++i) {
                                   const double h = double(dy[cbase + i]) * gv[ch];
                                   const double xhat = (xv[cbase + i] - mu) * inv;
                                   sum_h += h;
                                   sum_hx += h * xhat;
                               }
                           }
                           const double n = double(group_elems);
                           for (int64_t c = 0; c < cpg; ++c) {
                               const int64_t ch = g * cpg + c;
                               const int64_t cbase = (b * C + ch) * spatial;
                               for (int64_t i = 0; i < spatial; ++i) {
                                   const double h = double(dy[cbase + i]) * gv[ch];
                                   const double xhat = (xv[cbase + i] - mu) * inv;
                                   xn->grad[size_t(cbase + i)] +=
                                       float(inv * (h - (sum_h + xhat * sum_hx) / n));
                               }
                           }
                       }
                   }
               }
           });
    return wrap(std::move(node));
}

Tensor softmax_lastdim(const Tensor& x) {
    const int64_t cols = x.shape().back();
    const int64_t rows = x.numel() / cols;
    std::vector<float> out(static_cast<size_t>(x.numel()));
    const float* xv = x.data().data();
#pragma omp parallel for schedule(static) if (rows > 8)
    for (int64_t r = 0; r < rows; ++r) {
        const float* in = xv + r * cols;
        float* o = out.data() + r * cols;
        double mx = in[0];
        for (int64_t c = 1; c < cols; ++c) mx = std::max(mx, double(in[c]));
        double denom = 0.0;
        for (int64_t c = 0; c < cols; ++c) denom += std::exp(double(in[c]) - mx);
        for (int64_t c = 0; c < cols; ++c)
            o[c] = float(std::exp(double(in[c]) - mx) / denom);
    }
    auto node = make_node(x.shape(), std::move(out));
    auto xn = x.node();
    record(node, {xn}, [xn, rows, cols](TensorNode& self) {
        xn->ensure_grad();
        const float* y = self.value.data();
        const float* dy = self.grad.data();
#pragma omp parallel for schedule(static) if (rows > 8)
        for (int64_t r = 0; r < rows; ++r) {
            const float* yr = y + r * cols;
            const float* dyr = dy + r * cols;
            double dot = 0.0;
            for (int64_t c = 0; c < cols; ++c) dot += double(dyr[c]) * yr[c];
            for (int64_t c = 0; c < cols; ++c)
                xn->grad[size_t(r * cols + c)] += float(yr[c] * (double(dyr[c]) - dot));
        }
    });
    return wrap(std::move(node));
}

namespace {

/// C[b] (+)= op_a(A[b]) * op_b(B[b]) for row-major (M,K)x(K,N).
void bmm_kernel(const float* A, bool ta, const float* B, bool tb, float* C, int64_t batch,
                int64_t M, int64_t N, int64_t K, bool accumulate) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < batch; ++b) {
        for (int64_t m = 0; m < M; ++m) {
            const float* Ab = A + b * M * K;
            const float* Bb = B + b * K * N;
            float* Cb = C + b * M * N;
            for (int64_t n = 0; n < N; ++n) {
                double acc = accumulate ? Cb[m * N + n] : 0.0;
                for (int64_t k = 0; k < K; ++k) {
                    const float av = ta ? Ab[k * M + m] : Ab[m * K + k];
                    const float bv = tb ? Bb[n * K + k] : Bb[k * N + n];
                    acc += double(av) * double(bv);
                }
                Cb[m * N + n] = float(acc);
            }
        }
    }
}

}  // namespace

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    if (a.ndim() != 3 || b.ndim() != 3) throw config_error("bmm expects 3-D tensors");
    const int64_t batch = a.dim(0);
    if (b.dim(0) != batch) throw config_error("bmm: batch mismatch");
    const int64_t M = trans_a ? a.dim(2) : a.dim(1);
    const int64_t Ka = trans_a ? a.dim(1) : a.dim(2);
    const int64_t Kb = trans_b ? b.dim(2) : b.dim(1);
    const int64_t N = trans_b ? b.dim(1) : b.dim(2);
    if (Ka != Kb)
        throw config_error("bmm: inner dims " + std::to_string(Ka) + " vs " + std::to_string(Kb));

    std::vector<float> out(static_cast<size_t>(batch * M * N));
    bmm_kernel(a.data().data(), trans_a, b.data().data(), trans_b, out.data(), batch, M, N, Ka,
               false);
    auto node = make_node({batch, M, N}, std::move(out));
    auto an = a.node(), bn = b.node();
    record(node, {an, bn}, [an, bn, trans_a, trans_b, batch, M, N, Ka](TensorNode& self) {
        const float* dC = self.grad.data();
        if (an->requires_grad) {
            an->ensure_grad();
            std::vector<float> tmp(an->value.size(), 0.0f);
            // dA = dC . opB^T  (for A stored transposed, dA^T = opB . dC^T)
            if (!trans_a)
                bmm_kernel(dC, false, bn->value.data(), !trans_b, tmp.data(), batch, M, Ka, N,
                           false);
            else
                bmm_kernel(bn->value.data(), trans_b, dC, true, tmp.data(), batch, Ka, M, N,
                           false);
            for (size_t i = 0; i < tmp.size(); ++i) an->grad[i] += tmp[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            std::vector<float> tmp(bn->value.size(), 0.0f);
            if (!trans_b)
                bmm_kernel(an->value.data(), !trans_a, dC, false, tmp.data(), batch, Ka, N, M,
                           false);
            else
                bmm_kernel(dC, true, an->value.data(), trans_a, tmp.data(), batch, N, Ka, M,
                           false);
            for (size_t i = 0; i < tmp.size(); ++i) bn->grad[i] += tmp[i];
        }
    });
    return wrap(std::move(node));
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel())
        throw config_error("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                           shape_str(shape));
    auto node = make_node(std::move(shape), x.data());
    auto xn = x.node();
    record(node, {xn}, [xn](TensorNode& self) {
        xn->ensure_grad();
        for (int64_t i = 0; i < self.numel(); ++i) xn->grad[size_t(i)] += self.grad[size_t(i)];
    });
    return wrap(std::move(node));
}

namespace {

std::vector<int64_t> strides_of(const Shape& s) {
    std::vector<int64_t> st(s.size());
    int64_t acc = 1;
    for (int i = int(s.size()) - 1; i >= 0; --i) {
        st[size_t(i)] = acc;
        acc *= s[size_t(i)];
    }
    return st;
}

void permute_copy(const float* src, const Shape& in_shape, const std::vector<int>& axes,
                  float* dst, bool add_to_dst_at_src_order) {
    const int nd = int(in_shape.size());
    Shape out_shape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) out_shape[size_t(i)] = in_shape[size_t(axes[size_t(i)])];
    const auto in_strides = strides_of(in_shape);
    const auto out_strides = strides_of(out_shape);
    const int64_t n = shape_numel(in_shape);

#pragma omp parallel for schedule(static) if (n > 1 << 16)
    for (int64_t o = 0; o < n; ++o) {
        int64_t rem = o;
        int64_t src_idx = 0;
        for (int i = 0; i < nd; ++i) {
            const int64_t coord = rem / out_strides[size_t(i)];
            rem %= out_strides[size_t(i)];
            src_idx += coord * in_strides[size_t(axes[size_t(i)])];
        }
        if (add_to_dst_at_src_order)
            dst[src_idx] += src[o];
        else
            dst[o] = src[src_idx];
    }
}

}  // namespace

Tensor permute(const Tensor& x, const std::vector<int>& axes) {
    const int nd = x.ndim();
    if (int(axes.size()) != nd) throw config_error("permute: axes rank mismatch");
    std::vector<bool> seen(size_t(nd), false);
    for (int a : axes) {
        if (a < 0 || a >= nd || seen[size_t(a)]) throw config_error("permute: invalid axes");
        seen[size_t(a)] = true;
    }
    Shape out_shape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) out_shape[size_t(i)] = x.dim(axes[size_t(i)]);

    std::vector<float> out(static_cast<size_t>(x.numel()));
    permute_copy(x.data().data(), x.shape(), axes, out.data(), false);
    auto node = make_node(std::move(out_shape), std::move(out));
    auto xn = x.node();
    Shape in_shape = x.shape();
    record(node, {xn}, [xn, axes, in_shape](TensorNode& self) {
        xn->ensure_grad();
        permute_copy(self.grad.data(), in_shape, axes, xn->grad.data(), true);
    });
    return wrap(std::move(node));
}

Tensor narrow(const Tensor& x, int dim, int64_t start, int64_t len) {
    const int nd = x.ndim();
    if (dim < 0 || dim >= nd) throw config_error("narrow: bad dim");
    if (start < 0 || len < 1 || start + len > x.dim(dim))
        throw config_error("narrow: range out of bounds");

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < dim; ++i) outer *= x.dim(i);
    for (int i = dim + 1; i < nd; ++i) inner *= x.dim(i);
    const int64_t n_dim = x.dim(dim);

    Shape out_shape = x.shape();
    out_shape[size_t(dim)] = len;
    std::vector<float> out(static_cast<size_t>(outer * len * inner));
    const float* xv = x.data().data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy(xv + (o * n_dim + start) * inner, xv + (o * n_dim + start + len) * inner,
                  out.begin() + o * len * inner);

    auto node = make_node(std::move(out_shape), std::move(out));
    auto xn = x.node();
    record(node, {xn}, [xn, outer, inner, n_dim, start, len](TensorNode& self) {
        xn->ensure_grad();
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < len * inner; ++i)
                xn->grad[size_t((o * n_dim + start) * inner + i)] +=
                    self.grad[size_t(o * len * inner + i)];
    });
    return wrap(std::move(node));
}

Tensor concat(const Tensor& a, const Tensor& b, int dim) {
    const int nd = a.ndim();
    if (b.ndim() != nd || dim < 0 || dim >= nd) throw config_error("concat: rank/dim mismatch");
    for (int i = 0; i < nd; ++i)
        if (i != dim && a.dim(i) != b.dim(i))
            throw config_error("concat: shapes differ outside dim " + std::to_string(dim));

    int64_t outer = 1, inner = 1;
    for (int i = 0; i < dim; ++i) outer *= a.dim(i);
    for (int i = dim + 1; i < nd; ++i) inner *= a.dim(i);
    const int64_t na = a.dim(dim), nb = b.dim(dim);

    Shape out_shape = a.shape();
    out_shape[size_t(dim)] = na + nb;
    std::vector<float> out(static_cast<size_t>(outer * (na + nb) * inner));
    const float* av = a.data().data();
    const float* bv = b.data().data();
    for (int64_t o = 0; o < outer; ++o) {
        std::copy(av + o * na * inner, av + (o + 1) * na * inner,
                  out.begin() + o * (na + nb) * inner);
        std::copy(bv + o * nb * inner, bv + (o + 1) * nb * inner,
                  out.begin() + (o * (na + nb) + na) * inner);
    }

    auto node = make_node(std::move(out_shape), std::move(out));
    auto an = a.node(), bn = b.node();
    record(node, {an, bn}, [an, bn, outer, inner, na, nb](TensorNode& self) {
        for (int64_t o = 0; o < outer; ++o) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (int64_t i = 0; i < na * inner; ++i)
                    an->grad[size_t(o * na * inner + i)] +=
                        self.grad[size_t(o * (na + nb) * inner + i)];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (int64_t i = 0; i < nb * inner; ++i)
                    bn->grad[size_t(o * nb * inner + i)] +=
                        self.grad[size_t((o * (na + nb) + na) * inner + i)];
            }
        }
    });
    return wrap(std::move(node));
}

Tensor upsample_nearest2(const Tensor& x) {
    if (x.ndim() != 5) throw config_error("upsample_nearest2 expects (B,C,D,H,W)");
    const int64_t B = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    Shape out_shape = {B, C, 2 * D, 2 * H, 2 * W};
    std::vector<float> out(static_cast<size_t>(shape_numel(out_shape)));
    const float* xv = x.data().data();
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bc = 0; bc < B * C; ++bc) {
        for (int64_t z = 0; z < 2 * D; ++z) {
            for (int64_t y = 0; y < 2 * H; ++y)
                for (int64_t xw = 0; xw < 2 * W; ++xw)
                    out[size_t(((bc * 2 * D + z) * 2 * H + y) * 2 * W + xw)] =
                        xv[((bc * D + z / 2) * H + y / 2) * W + xw / 2];
        }
    }
    auto node = make_node(std::move(out_shape), std::move(out));
    auto xn = x.node();
    record(node, {xn}, [xn, B, C, D, H, W](TensorNode& self) {
        xn->ensure_grad();
        const float* dy = self.grad.data();
#pragma omp parallel for schedule(static)
        for (int64_t bc = 0; bc < B * C; ++bc)
            for (int64_t z = 0; z < 2 * D; ++z)
                for (int64_t y = 0; y < 2 * H; ++y)
                    for (int64_t xw = 0; xw < 2 * W; ++xw)
                        xn->grad[size_t(((bc * D + z / 2) * H + y / 2) * W + xw / 2)] +=
                            dy[((bc * 2 * D + z) * 2 * H + y) * 2 * W + xw];
    });
    return wrap(std::move(node));
}

Tensor mean_all(const Tensor& x) {
    const int64_t n = x.numel();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += x.data()[size_t(i)];
    auto node = make_node({1}, {float(acc / double(n))});
    auto xn = x.node();
    record(node, {xn}, [xn, n](TensorNode& self) {
        xn->ensure_grad();
        const float g = self.grad[0] / float(n);
        for (int64_t i = 0; i < n; ++i) xn->grad[size_t(i)] += g;
    });
    return wrap(std::move(node));
}

Tensor smooth_l1(const Tensor& x, const Tensor& y, std::vector<float>* per_element) {
    check_same_shape(x, y, "smooth_l1");
    const int64_t n = x.numel();
    const float* px = x.data().data();
    const float* py = y.data().data();
    if (per_element) per_element->resize(size_t(n));
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = double(px[i]) - double(py[i]);
        const double a = std::abs(d);
        const double e = a < 1.0 ? 0.5 * d * d : a - 0.5;
        if (per_element) (*per_element)[size_t(i)] = float(e);
        acc += e;
    }
    auto node = make_node({1}, {float(acc / double(n))});
    auto xn = x.node(), yn = y.node();
    record(node, {xn, yn}, [xn, yn, n](TensorNode& self) {
        const double g = double(self.grad[0]) / double(n);
        for (int64_t i = 0; i < n; ++i) {
            const double d = double(xn->value[size_t(i)]) - double(yn->value[size_t(i)]);
            const double dd = std::abs(d) < 1.0 ? d : (d > 0 ? 1.0 : -1.0);
            if (xn->requires_grad) {
                xn->ensure_grad();
                xn->grad[size_t(i)] += float(g * dd);
            }
            if (yn->requires_grad) {
                yn->ensure_grad();
                yn->grad[size_t(i)] -= float(g * dd);
            }
        }
    });
    return wrap(std::move(node));
}

}  // namespace cryosamu
