#include "threshnet/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "threshnet/error.hpp"

namespace threshnet {

namespace {

size_t ParamCount(const Op& o) {
  if (const auto* c = std::get_if<op::Conv>(&o)) {
    const size_t w = static_cast<size_t>(c->out_channels) * c->in_channels * c->kernel_h *
                     c->kernel_w;
    return c->has_bias ? w + static_cast<size_t>(c->out_channels) : w;
  }
  if (const auto* b = std::get_if<op::BatchNorm>(&o)) return 2 * static_cast<size_t>(b->channels);
  if (const auto* f = std::get_if<op::FullyConnected>(&o)) {
    const size_t w = static_cast<size_t>(f->out_features) * f->in_features;
    return f->has_bias ? w + static_cast<size_t>(f->out_features) : w;
  }
  return 0;
}

}  // namespace

ModelInstance::ModelInstance(NetworkGraph graph, std::uint64_t seed)
    : graph_(std::move(graph)), seed_(seed) {
  const size_t n = graph_.size();
  params_.resize(n);
  running_mean_.resize(n);
  running_var_.resize(n);
  std::mt19937_64 rng(seed);
  for (const auto& node : graph_.nodes()) {
    auto& p = params_[static_cast<size_t>(node.id)];
    p.assign(ParamCount(node.op), 0.0);
    size_t weights = 0;
    double fan_in = 1.0;
    if (const auto* c = std::get_if<op::Conv>(&node.op)) {
      weights = static_cast<size_t>(c->out_channels) * c->in_channels * c->kernel_h * c->kernel_w;
      fan_in = static_cast<double>(c->in_channels) * c->kernel_h * c->kernel_w;
    } else if (const auto* f = std::get_if<op::FullyConnected>(&node.op)) {
      weights = static_cast<size_t>(f->out_features) * f->in_features;
      fan_in = f->in_features;
    } else if (const auto* b = std::get_if<op::BatchNorm>(&node.op)) {
      const auto ch = static_cast<size_t>(b->channels);
      std::fill(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(ch), 1.0);
      running_mean_[static_cast<size_t>(node.id)].assign(ch, 0.0);
      running_var_[static_cast<size_t>(node.id)].assign(ch, 1.0);
    }
    if (weights > 0) {
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (size_t k = 0; k < weights; ++k) p[k] = dist(rng);
    }
  }
}

std::int64_t ModelInstance::TrainableCount() const {
  std::int64_t total = 0;
  for (const auto& p : params_) total += static_cast<std::int64_t>(p.size());
  return total;
}

int LogitsNode(const NetworkGraph& g) {
  if (g.size() == 0) throw Error(ErrorKind::kExecution, "empty graph");
  const Node& last = g.nodes().back();
  if (std::holds_alternative<op::Softmax>(last.op)) return last.inputs.front();
  return last.id;
}

// ---------------------------------------------------------------------------
// Kernels. All tensors are NCHW.

namespace {

struct ConvGeom {
  int n, cin, h, w, cout, oh, ow, kh, kw, stride, pad;
};

ConvGeom Geometry(const Tensor& x, const op::Conv& c, const Shape& out) {
  return {x.dim(0),        c.in_channels, x.dim(2),  x.dim(3), c.out_channels, out.height,
          out.width,       c.kernel_h,    c.kernel_w, c.stride, c.pad};
}

// Range of output columns whose input column ow*stride - pad + k lies in [0, w).
inline void ValidRange(int k, int pad, int stride, int in, int out, int& lo, int& hi) {
  // ow*stride >= pad - k  and  ow*stride <= in - 1 + pad - k
  const int a = pad - k;
  lo = a <= 0 ? 0 : (a + stride - 1) / stride;
  const int b = in - 1 + pad - k;
  hi = b < 0 ? -1 : std::min(out - 1, b / stride);
}

Tensor ConvForward(const Tensor& x, const op::Conv& c, const Shape& out,
                   const std::vector<double>& p) {
  const ConvGeom g = Geometry(x, c, out);
  Tensor y({g.n, g.cout, g.oh, g.ow});
  const double* wt = p.data();
  const size_t wsize = static_cast<size_t>(g.cout) * g.cin * g.kh * g.kw;
  for (int n = 0; n < g.n; ++n) {
    for (int oc = 0; oc < g.cout; ++oc) {
      double* yp = &y.at(n, oc, 0, 0);
      if (c.has_bias) std::fill(yp, yp + static_cast<size_t>(g.oh) * g.ow, p[wsize + oc]);
      for (int ic = 0; ic < g.cin; ++ic) {
        const double* xp = &x.at(n, ic, 0, 0);
        for (int ki = 0; ki < g.kh; ++ki) {
          int oh_lo, oh_hi;
          ValidRange(ki, g.pad, g.stride, g.h, g.oh, oh_lo, oh_hi);
          for (int kj = 0; kj < g.kw; ++kj) {
            const double wv = wt[((static_cast<size_t>(oc) * g.cin + ic) * g.kh + ki) * g.kw + kj];
            int ow_lo, ow_hi;
            ValidRange(kj, g.pad, g.stride, g.w, g.ow, ow_lo, ow_hi);
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const double* xr = xp + static_cast<size_t>(oh * g.stride - g.pad + ki) * g.w;
              double* yr = yp + static_cast<size_t>(oh) * g.ow;
              if (g.stride == 1) {
                const double* xs = xr - g.pad + kj;
                for (int ow = ow_lo; ow <= ow_hi; ++ow) yr[ow] += wv * xs[ow];
              } else {
                for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                  yr[ow] += wv * xr[ow * g.stride - g.pad + kj];
                }
              }
            }
          }
        }
      }
    }
  }
  return y;
}

void ConvBackward(const Tensor& x, const Tensor& dy, const op::Conv& c, const Shape& out,
                  const std::vector<double>& p, Tensor* dx, std::vector<double>& dp) {
  const ConvGeom g = Geometry(x, c, out);
  const double* wt = p.data();
  const size_t wsize = static_cast<size_t>(g.cout) * g.cin * g.kh * g.kw;
  for (int n = 0; n < g.n; ++n) {
    for (int oc = 0; oc < g.cout; ++oc) {
      const double* dyp = &dy.at(n, oc, 0, 0);
      if (c.has_bias) {
        double s = 0.0;
        for (size_t k = 0; k < static_cast<size_t>(g.oh) * g.ow; ++k) s += dyp[k];
        dp[wsize + oc] += s;
      }
      for (int ic = 0; ic < g.cin; ++ic) {
        const double* xp = &x.at(n, ic, 0, 0);
        double* dxp = dx ? &dx->at(n, ic, 0, 0) : nullptr;
        for (int ki = 0; ki < g.kh; ++ki) {
          int oh_lo, oh_hi;
          ValidRange(ki, g.pad, g.stride, g.h, g.oh, oh_lo, oh_hi);
          for (int kj = 0; kj < g.kw; ++kj) {
            const size_t widx = ((static_cast<size_t>(oc) * g.cin + ic) * g.kh + ki) * g.kw + kj;
            const double wv = wt[widx];
            int ow_lo, ow_hi;
            ValidRange(kj, g.pad, g.stride, g.w, g.ow, ow_lo, ow_hi);
            double dw = 0.0;
            for (int oh = oh_lo; oh <= oh_hi; ++oh) {
              const size_t row = static_cast<size_t>(oh * g.stride - g.pad + ki) * g.w;
              const double* dyr = dyp + static_cast<size_t>(oh) * g.ow;
              for (int ow = ow_lo; ow <= ow_hi; ++ow) {
                const size_t xi = row + static_cast<size_t>(ow * g.stride - g.pad + kj);
                dw += dyr[ow] * xp[xi];
                if (dxp) dxp[xi] += dyr[ow] * wv;
              }
            }
            dp[widx] += dw;
          }
        }
      }
    }
  }
}

struct BnCache {
  std::vector<double> mean;
  std::vector<double> inv_std;
  std::vector<double> batch_var;  // biased
};

Tensor BatchNormForward(const Tensor& x, const std::vector<double>& p,
                        const std::vector<double>& rmean, const std::vector<double>& rvar,
                        bool training, BnCache& cache) {
  const int n = x.dim(0), ch = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  const double count = static_cast<double>(plane) * n;
  cache.mean.assign(static_cast<size_t>(ch), 0.0);
  cache.inv_std.assign(static_cast<size_t>(ch), 0.0);
  cache.batch_var.assign(static_cast<size_t>(ch), 0.0);
  Tensor y(x.shape());
  for (int c = 0; c < ch; ++c) {
    double mean, var;
    if (training) {
      double s = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* xp = &x.at(b, c, 0, 0);
        for (size_t k = 0; k < plane; ++k) s += xp[k];
      }
      mean = s / count;
      double v = 0.0;
      for (int b = 0; b < n; ++b) {
        const double* xp = &x.at(b, c, 0, 0);
        for (size_t k = 0; k < plane; ++k) v += (xp[k] - mean) * (xp[k] - mean);
      }
      var = v / count;
    } else {
      mean = rmean[static_cast<size_t>(c)];
      var = rvar[static_cast<size_t>(c)];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEpsilon);
    cache.mean[static_cast<size_t>(c)] = mean;
    cache.inv_std[static_cast<size_t>(c)] = inv_std;
    cache.batch_var[static_cast<size_t>(c)] = var;
    const double scale = p[static_cast<size_t>(c)];
    const double shift = p[static_cast<size_t>(ch + c)];
    for (int b = 0; b < n; ++b) {
      const double* xp = &x.at(b, c, 0, 0);
      double* yp = &y.at(b, c, 0, 0);
      for (size_t k = 0; k < plane; ++k) yp[k] = scale * (xp[k] - mean) * inv_std + shift;
    }
  }
  return y;
}

void BatchNormBackward(const Tensor& x, const Tensor& dy, const std::vector<double>& p,
                       const BnCache& cache, bool training, Tensor& dx,
                       std::vector<double>& dp) {
  const int n = x.dim(0), ch = x.dim(1);
  const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
  const double count = static_cast<double>(plane) * n;
  for (int c = 0; c < ch; ++c) {
    const double mean = cache.mean[static_cast<size_t>(c)];
    const double inv_std = cache.inv_std[static_cast<size_t>(c)];
    const double scale = p[static_cast<size_t>(c)];
    double dscale = 0.0, dshift = 0.0;
    for (int b = 0; b < n; ++b) {
      const double* xp = &x.at(b, c, 0, 0);
      const double* dyp = &dy.at(b, c, 0, 0);
      for (size_t k = 0; k < plane; ++k) {
        dshift += dyp[k];
        dscale += dyp[k] * (xp[k] - mean) * inv_std;
      }
    }
    dp[static_cast<size_t>(c)] += dscale;
    dp[static_cast<size_t>(ch + c)] += dshift;
    for (int b = 0; b < n; ++b) {
      const double* xp = &x.at(b, c, 0, 0);
      const double* dyp = &dy.at(b, c, 0, 0);
      double* dxp = &dx.at(b, c, 0, 0);
      for (size_t k = 0; k < plane; ++k) {
        if (training) {
          const double xhat = (xp[k] - mean) * inv_std;
          dxp[k] += scale * inv_std / count * (count * dyp[k] - dshift - xhat * dscale);
        } else {
          dxp[k] += scale * inv_std * dyp[k];
        }
      }
    }
  }
}

Tensor MaxPoolForward(const Tensor& x, const op::MaxPool& mp, const Shape& out,
                      std::vector<std::int64_t>& argmax) {
  const int n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, ch, out.height, out.width});
  argmax.assign(y.size(), -1);
  size_t o = 0;
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < ch; ++c) {
      const size_t base = (static_cast<size_t>(b) * ch + c) * h * w;
      for (int oh = 0; oh < out.height; ++oh) {
        for (int ow = 0; ow < out.width; ++ow, ++o) {
          double best = -std::numeric_limits<double>::infinity();
          std::int64_t best_idx = -1;
          for (int ki = 0; ki < mp.kernel; ++ki) {
            const int ih = oh * mp.stride - mp.pad + ki;
            if (ih < 0 || ih >= h) continue;
            for (int kj = 0; kj < mp.kernel; ++kj) {
              const int iw = ow * mp.stride - mp.pad + kj;
              if (iw < 0 || iw >= w) continue;
              const size_t idx = base + static_cast<size_t>(ih) * w + iw;
              // Strict comparison keeps the first maximum on ties.
              if (x[idx] > best) {
                best = x[idx];
                best_idx = static_cast<std::int64_t>(idx);
              }
            }
          }
          y[o] = best_idx >= 0 ? best : 0.0;
          argmax[o] = best_idx;
        }
      }
    }
  }
  return y;
}

Tensor AvgPoolForward(const Tensor& x, const op::AvgPool& ap, const Shape& out) {
  const int n = x.dim(0), ch = x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor y({n, ch, out.height, out.width});
  const double inv = 1.0 / (static_cast<double>(ap.kernel) * ap.kernel);
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < ch; ++c) {
      for (int oh = 0; oh < out.height; ++oh) {
        for (int ow = 0; ow < out.width; ++ow) {
          double s = 0.0;
          for (int ki = 0; ki < ap.kernel; ++ki) {
            const int ih = oh * ap.stride - ap.pad + ki;
            if (ih < 0 || ih >= h) continue;
            for (int kj = 0; kj < ap.kernel; ++kj) {
              const int iw = ow * ap.stride - ap.pad + kj;
              if (iw < 0 || iw >= w) continue;
              s += x.at(b, c, ih, iw);
            }
          }
          y.at(b, c, oh, ow) = s * inv;
        }
      }
    }
  }
  return y;
}

void AvgPoolBackward(const Tensor& dy, const op::AvgPool& ap, Tensor& dx) {
  const int n = dx.dim(0), ch = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
  const double inv = 1.0 / (static_cast<double>(ap.kernel) * ap.kernel);
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < ch; ++c) {
      for (int oh = 0; oh < dy.dim(2); ++oh) {
        for (int ow = 0; ow < dy.dim(3); ++ow) {
          const double g = dy.at(b, c, oh, ow) * inv;
          for (int ki = 0; ki < ap.kernel; ++ki) {
            const int ih = oh * ap.stride - ap.pad + ki;
            if (ih < 0 || ih >= h) continue;
            for (int kj = 0; kj < ap.kernel; ++kj) {
              const int iw = ow * ap.stride - ap.pad + kj;
              if (iw < 0 || iw >= w) continue;
              dx.at(b, c, ih, iw) += g;
            }
          }
        }
      }
    }
  }
}

Tensor FullyConnectedForward(const Tensor& x, const op::FullyConnected& f,
                             const std::vector<double>& p) {
  const int n = x.dim(0);
  Tensor y({n, f.out_features, 1, 1});
  const size_t wsize = static_cast<size_t>(f.out_features) * f.in_features;
  for (int b = 0; b < n; ++b) {
    const double* xp = x.data() + static_cast<size_t>(b) * f.in_features;
    for (int o = 0; o < f.out_features; ++o) {
      const double* wr = p.data() + static_cast<size_t>(o) * f.in_features;
      double s = f.has_bias ? p[wsize + o] : 0.0;
      for (int i = 0; i < f.in_features; ++i) s += wr[i] * xp[i];
      y[static_cast<size_t>(b) * f.out_features + o] = s;
    }
  }
  return y;
}

// Forward pass state kept for backward.
struct Trace {
  std::vector<Tensor> outputs;
  std::vector<BnCache> bn;
  std::vector<std::vector<std::int64_t>> argmax;
};

void CheckInput(const NetworkGraph& g, const Tensor& input) {
  if (g.size() == 0) throw Error(ErrorKind::kExecution, "empty graph");
  const Node& in = g.node(0);
  if (!std::holds_alternative<op::Input>(in.op)) {
    throw Error(ErrorKind::kExecution, "graph does not start with an input", 0);
  }
  for (const auto& n : g.nodes()) {
    if (n.id > 0 && std::holds_alternative<op::Input>(n.op)) {
      throw Error(ErrorKind::kExecution, "multiple input nodes are not supported", n.id);
    }
  }
  const Shape& s = in.output_shape;
  if (input.rank() != 4 || input.dim(0) < 1 || input.dim(1) != s.channels ||
      input.dim(2) != s.height || input.dim(3) != s.width) {
    throw Error(ErrorKind::kExecution,
                "input " + input.ShapeString() + " does not match expected (N, " +
                    std::to_string(s.channels) + ", " + std::to_string(s.height) + ", " +
                    std::to_string(s.width) + ")",
                0);
  }
}

// Runs nodes up to and including `last`. With `keep_all` false, tensors are
// released as soon as their final consumer has run.
void RunForward(const ModelInstance& model, const Tensor& input, bool training,
                int last, bool keep_all, Trace& t) {
  const NetworkGraph& g = model.graph();
  CheckInput(g, input);
  const size_t count = g.size();
  t.outputs.assign(count, Tensor());
  t.bn.assign(count, BnCache());
  t.argmax.assign(count, {});
  std::vector<int> last_use(count, -1);
  for (const auto& n : g.nodes()) {
    for (int in : n.inputs) last_use[static_cast<size_t>(in)] = n.id;
  }
  const int batch = input.dim(0);
  for (const auto& n : g.nodes()) {
    if (n.id > last) break;
    const auto id = static_cast<size_t>(n.id);
    auto in = [&](size_t slot = 0) -> const Tensor& {
      return t.outputs[static_cast<size_t>(n.inputs[slot])];
    };
    Tensor y = std::visit(
        [&](const auto& o) -> Tensor {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, op::Input>) {
            return input;
          } else if constexpr (std::is_same_v<T, op::Conv>) {
            return ConvForward(in(), o, n.output_shape, model.params(n.id));
          } else if constexpr (std::is_same_v<T, op::BatchNorm>) {
            return BatchNormForward(in(), model.params(n.id), model.running_mean(n.id),
                                    model.running_var(n.id), training, t.bn[id]);
          } else if constexpr (std::is_same_v<T, op::Relu>) {
            Tensor r = in();
            for (double& v : r.values()) v = v > 0.0 ? v : 0.0;
            return r;
          } else if constexpr (std::is_same_v<T, op::MaxPool>) {
            return MaxPoolForward(in(), o, n.output_shape, t.argmax[id]);
          } else if constexpr (std::is_same_v<T, op::AvgPool>) {
            return AvgPoolForward(in(), o, n.output_shape);
          } else if constexpr (std::is_same_v<T, op::GlobalAvgPool>) {
            const Tensor& x = in();
            Tensor r({batch, x.dim(1), 1, 1});
            const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
            for (size_t k = 0; k < r.size(); ++k) {
              double s = 0.0;
              const double* xp = x.data() + k * plane;
              for (size_t j = 0; j < plane; ++j) s += xp[j];
              r[k] = s / static_cast<double>(plane);
            }
            return r;
          } else if constexpr (std::is_same_v<T, op::Concat>) {
            Tensor r({batch, n.output_shape.channels, n.output_shape.height,
                      n.output_shape.width});
            const size_t plane = static_cast<size_t>(n.output_shape.height) *
                                 n.output_shape.width;
            for (int b = 0; b < batch; ++b) {
              int offset = 0;
              for (size_t s = 0; s < n.inputs.size(); ++s) {
                const Tensor& x = in(s);
                const size_t len = static_cast<size_t>(x.dim(1)) * plane;
                std::copy_n(&x.at(b, 0, 0, 0), len, &r.at(b, offset, 0, 0));
                offset += x.dim(1);
              }
            }
            return r;
          } else if constexpr (std::is_same_v<T, op::FullyConnected>) {
            return FullyConnectedForward(in(), o, model.params(n.id));
          } else {
            // Softmax over the flattened features of each sample.
            const Tensor& x = in();
            Tensor r = x;
            const size_t f = x.size() / static_cast<size_t>(batch);
            for (int b = 0; b < batch; ++b) {
              double* p = r.data() + static_cast<size_t>(b) * f;
              const double mx = *std::max_element(p, p + f);
              double s = 0.0;
              for (size_t k = 0; k < f; ++k) s += (p[k] = std::exp(p[k] - mx));
              for (size_t k = 0; k < f; ++k) p[k] /= s;
            }
            return r;
          }
        },
        n.op);
    if (!y.AllFinite()) {
      throw Error(ErrorKind::kExecution, "non-finite activation in " + n.name, n.id);
    }
    t.outputs[id] = std::move(y);
    if (!keep_all) {
      for (int src : n.inputs) {
        if (last_use[static_cast<size_t>(src)] == n.id) {
          t.outputs[static_cast<size_t>(src)] = Tensor();
        }
      }
    }
  }
}

Tensor AsLogits(const NetworkGraph& g, const Tensor& t) {
  const Node& n = g.node(LogitsNode(g));
  if (std::holds_alternative<op::FullyConnected>(n.op) ||
      (n.output_shape.height == 1 && n.output_shape.width == 1)) {
    return t.Reshaped({t.dim(0), n.output_shape.channels});
  }
  return t;
}

void UpdateRunningStats(ModelInstance& model, const Trace& t) {
  for (const auto& n : model.graph().nodes()) {
    if (!std::holds_alternative<op::BatchNorm>(n.op)) continue;
    const BnCache& c = t.bn[static_cast<size_t>(n.id)];
    if (c.mean.empty()) continue;
    const Tensor& x = t.outputs[static_cast<size_t>(n.inputs.front())];
    const double count = static_cast<double>(x.size()) / x.dim(1);
    const double unbias = count > 1.0 ? count / (count - 1.0) : 1.0;
    auto& rm = model.running_mean(n.id);
    auto& rv = model.running_var(n.id);
    const double m = model.momentum();
    for (size_t c2 = 0; c2 < rm.size(); ++c2) {
      rm[c2] = (1.0 - m) * rm[c2] + m * c.mean[c2];
      rv[c2] = (1.0 - m) * rv[c2] + m * c.batch_var[c2] * unbias;
    }
  }
}

}  // namespace

Tensor Forward(const ModelInstance& model, const Tensor& input) {
  Trace t;
  const int logits = LogitsNode(model.graph());
  RunForward(model, input, false, logits, false, t);
  return AsLogits(model.graph(), t.outputs[static_cast<size_t>(logits)]);
}

Tensor Forward(ModelInstance& model, const Tensor& input, bool training) {
  if (!training) return Forward(static_cast<const ModelInstance&>(model), input);
  Trace t;
  const int logits = LogitsNode(model.graph());
  RunForward(model, input, true, logits, true, t);
  UpdateRunningStats(model, t);
  return AsLogits(model.graph(), t.outputs[static_cast<size_t>(logits)]);
}

Tensor Softmax(const Tensor& logits) {
  if (logits.rank() != 2) throw Error(ErrorKind::kExecution, "softmax needs rank-2 logits");
  Tensor p = logits;
  const int n = logits.dim(0), c = logits.dim(1);
  for (int b = 0; b < n; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < c; ++k) mx = std::max(mx, p.at(b, k));
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += (p.at(b, k) = std::exp(p.at(b, k) - mx));
    for (int k = 0; k < c; ++k) p.at(b, k) /= s;
  }
  return p;
}

namespace {

void CheckLabels(const Tensor& logits, const std::vector<int>& labels) {
  if (logits.rank() != 2) throw Error(ErrorKind::kExecution, "loss needs rank-2 logits");
  if (static_cast<int>(labels.size()) != logits.dim(0)) {
    throw Error(ErrorKind::kInvalidLabel, "label count does not match batch");
  }
  for (int l : labels) {
    if (l < 0 || l >= logits.dim(1)) {
      throw Error(ErrorKind::kInvalidLabel,
                  "label " + std::to_string(l) + " outside 0.." +
                      std::to_string(logits.dim(1) - 1));
    }
  }
}

// log-sum-exp form; stable for large logits.
double CrossEntropyUnchecked(const Tensor& logits, const std::vector<int>& labels) {
  const int n = logits.dim(0), c = logits.dim(1);
  double total = 0.0;
  for (int b = 0; b < n; ++b) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < c; ++k) mx = std::max(mx, logits.at(b, k));
    double s = 0.0;
    for (int k = 0; k < c; ++k) s += std::exp(logits.at(b, k) - mx);
    total += std::log(s) + mx - logits.at(b, labels[static_cast<size_t>(b)]);
  }
  return total / n;
}

}  // namespace

double CrossEntropy(const Tensor& logits, const std::vector<int>& labels) {
  CheckLabels(logits, labels);
  return CrossEntropyUnchecked(logits, labels);
}

double ComputeLoss(const ModelInstance& model, const Tensor& input,
                   const std::vector<int>& labels, bool training) {
  Trace t;
  const int logits = LogitsNode(model.graph());
  RunForward(model, input, training, logits, false, t);
  return CrossEntropy(AsLogits(model.graph(), t.outputs[static_cast<size_t>(logits)]),
                      labels);
}

LossAndGrad ComputeLossAndGrad(ModelInstance& model, const Tensor& input,
                               const std::vector<int>& labels,
                               const ExecutionOptions& options) {
  const NetworkGraph& g = model.graph();
  const int logits_node = LogitsNode(g);
  Trace t;
  RunForward(model, input, options.training, logits_node, true, t);
  const Tensor logits = AsLogits(g, t.outputs[static_cast<size_t>(logits_node)]);
  CheckLabels(logits, labels);

  LossAndGrad result;
  result.loss = CrossEntropyUnchecked(logits, labels);
  result.gradients.resize(g.size());
  for (const auto& n : g.nodes()) {
    result.gradients[static_cast<size_t>(n.id)].assign(model.params(n.id).size(), 0.0);
  }

  std::vector<Tensor> grad(g.size());
  {
    const Tensor p = Softmax(logits);
    const int batch = logits.dim(0), classes = logits.dim(1);
    Tensor d = t.outputs[static_cast<size_t>(logits_node)];
    for (int b = 0; b < batch; ++b) {
      for (int k = 0; k < classes; ++k) {
        const double onehot = labels[static_cast<size_t>(b)] == k ? 1.0 : 0.0;
        d[static_cast<size_t>(b) * classes + k] = (p.at(b, k) - onehot) / batch;
      }
    }
    grad[static_cast<size_t>(logits_node)] = std::move(d);
  }

  auto grad_of = [&](int id) -> Tensor& {
    Tensor& gt = grad[static_cast<size_t>(id)];
    if (gt.size() == 0) gt = Tensor(t.outputs[static_cast<size_t>(id)].shape());
    return gt;
  };

  for (int id = logits_node; id >= 0; --id) {
    const Node& n = g.node(id);
    Tensor& dy = grad[static_cast<size_t>(id)];
    if (dy.size() == 0 || std::holds_alternative<op::Input>(n.op)) continue;
    auto& dp = result.gradients[static_cast<size_t>(id)];
    const Tensor& x = t.outputs[static_cast<size_t>(n.inputs.front())];
    std::visit(
        [&](const auto& o) {
          using T = std::decay_t<decltype(o)>;
          if constexpr (std::is_same_v<T, op::Conv>) {
            const bool needs_dx = !std::holds_alternative<op::Input>(g.node(n.inputs[0]).op);
            ConvBackward(x, dy, o, n.output_shape, model.params(id),
                         needs_dx ? &grad_of(n.inputs[0]) : nullptr, dp);
            if (options.fault.node_id == id) {
              const size_t w = static_cast<size_t>(o.out_channels) * o.in_channels *
                               o.kernel_h * o.kernel_w;
              for (size_t k = 0; k < w; ++k) dp[k] *= options.fault.weight_grad_scale;
            }
          } else if constexpr (std::is_same_v<T, op::BatchNorm>) {
            BatchNormBackward(x, dy, model.params(id), t.bn[static_cast<size_t>(id)],
                              options.training, grad_of(n.inputs[0]), dp);
          } else if constexpr (std::is_same_v<T, op::Relu>) {
            Tensor& dx = grad_of(n.inputs[0]);
            const Tensor& y = t.outputs[static_cast<size_t>(id)];
            for (size_t k = 0; k < dy.size(); ++k) {
              if (y[k] > 0.0) dx[k] += dy[k];
            }
          } else if constexpr (std::is_same_v<T, op::MaxPool>) {
            Tensor& dx = grad_of(n.inputs[0]);
            const auto& am = t.argmax[static_cast<size_t>(id)];
            for (size_t k = 0; k < dy.size(); ++k) {
              if (am[k] >= 0) dx[static_cast<size_t>(am[k])] += dy[k];
            }
          } else if constexpr (std::is_same_v<T, op::AvgPool>) {
            AvgPoolBackward(dy, o, grad_of(n.inputs[0]));
          } else if constexpr (std::is_same_v<T, op::GlobalAvgPool>) {
            Tensor& dx = grad_of(n.inputs[0]);
            const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
            for (size_t k = 0; k < dy.size(); ++k) {
              const double gv = dy[k] / static_cast<double>(plane);
              double* dxp = dx.data() + k * plane;
              for (size_t j = 0; j < plane; ++j) dxp[j] += gv;
            }
          } else if constexpr (std::is_same_v<T, op::Concat>) {
            const int batch = dy.dim(0);
            const size_t plane = static_cast<size_t>(dy.dim(2)) * dy.dim(3);
            int offset = 0;
            for (int src : n.inputs) {
              Tensor& dx = grad_of(src);
              const size_t len = static_cast<size_t>(dx.dim(1)) * plane;
              for (int b = 0; b < batch; ++b) {
                const double* from = &dy.at(b, offset, 0, 0);
                double* to = &dx.at(b, 0, 0, 0);
                for (size_t k = 0; k < len; ++k) to[k] += from[k];
              }
              offset += dx.dim(1);
            }
          } else if constexpr (std::is_same_v<T, op::FullyConnected>) {
            Tensor& dx = grad_of(n.inputs[0]);
            const auto& p = model.params(id);
            const int batch = dy.dim(0);
            const size_t wsize = static_cast<size_t>(o.out_features) * o.in_features;
            for (int b = 0; b < batch; ++b) {
              const double* xp = x.data() + static_cast<size_t>(b) * o.in_features;
              double* dxp = dx.data() + static_cast<size_t>(b) * o.in_features;
              for (int out = 0; out < o.out_features; ++out) {
                const double gv = dy[static_cast<size_t>(b) * o.out_features + out];
                if (o.has_bias) dp[wsize + out] += gv;
                const double* wr = p.data() + static_cast<size_t>(out) * o.in_features;
                double* dwr = dp.data() + static_cast<size_t>(out) * o.in_features;
                for (int i = 0; i < o.in_features; ++i) {
                  dwr[i] += gv * xp[i];
                  dxp[i] += gv * wr[i];
                }
              }
            }
          } else if constexpr (std::is_same_v<T, op::Softmax>) {
            // Softmax nodes past the logits are never reached; an interior
            // softmax is differentiated through its Jacobian.
            Tensor& dx = grad_of(n.inputs[0]);
            const Tensor& y = t.outputs[static_cast<size_t>(id)];
            const int batch = dy.dim(0);
            const size_t f = dy.size() / static_cast<size_t>(batch);
            for (int b = 0; b < batch; ++b) {
              const size_t off = static_cast<size_t>(b) * f;
              double dot = 0.0;
              for (size_t k = 0; k < f; ++k) dot += dy[off + k] * y[off + k];
              for (size_t k = 0; k < f; ++k) dx[off + k] += y[off + k] * (dy[off + k] - dot);
            }
          }
        },
        n.op);
    // Free the gradient once propagated.
    dy = Tensor();
  }

  if (options.training && options.update_running_stats) UpdateRunningStats(model, t);
  return result;
}

}  // namespace threshnet
