#include "vaf/nncore.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "vaf/error.hpp"

namespace vaf::nn {
namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Column buffer for one sample: rows (ci, ky, kx), columns (y, x).
void im2col3x3(const double* src, int channels, int h, int w, double* col) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < channels; ++ci) {
    const double* plane = src + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + ((ci * 3 + ky) * 3 + kx) * hw;
        const int dx = kx - 1;
        for (int y = 0; y < h; ++y) {
          double* dst = row + static_cast<std::size_t>(y) * w;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* s = plane + static_cast<std::size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          std::fill(dst, dst + x0, 0.0);
          std::memcpy(dst + x0, s + x0 + dx, sizeof(double) * (x1 - x0));
          std::fill(dst + x1, dst + w, 0.0);
        }
      }
    }
  }
}

void col2im3x3(const double* col, int channels, int h, int w, double* dst_sample) {
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int ci = 0; ci < channels; ++ci) {
    double* plane = dst_sample + ci * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + ((ci * 3 + ky) * 3 + kx) * hw;
        const int dx = kx - 1;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const double* s = row + static_cast<std::size_t>(y) * w;
          double* d = plane + static_cast<std::size_t>(sy) * w;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          for (int x = x0; x < x1; ++x) d[x + dx] += s[x];
        }
      }
    }
  }
}

}  // namespace

std::string Shape4::str() const {
  return "(" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + ")";
}

Tensor4::Tensor4(Shape4 shape, double fill) : shape_(shape) {
  require(shape.n >= 1 && shape.c >= 1 && shape.h >= 1 && shape.w >= 1,
          "tensor dimensions must be >= 1, got " + shape.str());
  values_.assign(shape.numel(), fill);
}

Tensor4::Tensor4(Shape4 shape, std::vector<double> values)
    : shape_(shape), values_(values.begin(), values.end()) {
  require(shape.n >= 1 && shape.c >= 1 && shape.h >= 1 && shape.w >= 1,
          "tensor dimensions must be >= 1, got " + shape.str());
  require(values_.size() == shape.numel(), "value buffer does not match shape " + shape.str());
}

void Tensor4::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

Tensor4& Tensor4::operator+=(const Tensor4& other) {
  require(shape_ == other.shape_, "tensor add: " + shape_.str() + " vs " + other.shape_.str());
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

Tensor4 slice_batch(const Tensor4& t, int begin, int count) {
  const Shape4 s = t.shape();
  require(begin >= 0 && count >= 1 && begin + count <= s.n, "batch slice out of range");
  Tensor4 out(Shape4{count, s.c, s.h, s.w});
  std::memcpy(out.data(), t.sample(begin), sizeof(double) * out.size());
  return out;
}

Tensor4 stack_batch(const std::vector<const Tensor4*>& parts) {
  require(!parts.empty(), "stack_batch needs at least one tensor");
  Shape4 s = parts.front()->shape();
  int n = 0;
  for (const Tensor4* p : parts) {
    const Shape4& ps = p->shape();
    require(ps.c == s.c && ps.h == s.h && ps.w == s.w, "stack_batch: shapes differ");
    n += ps.n;
  }
  s.n = n;
  Tensor4 out(s);
  double* dst = out.data();
  for (const Tensor4* p : parts) {
    std::memcpy(dst, p->data(), sizeof(double) * p->size());
    dst += p->size();
  }
  return out;
}

Parameter& ParamStore::add(const std::string& name, Shape4 shape) {
  require(!params_.count(name), "duplicate parameter name " + name);
  auto [it, ok] = params_.emplace(name, Parameter{Tensor4(shape), Tensor4(shape)});
  return it->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw DomainError("unknown parameter " + name);
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw DomainError("unknown parameter " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

// ---- conv3x3 ---------------------------------------------------------------

Tensor4 conv3x3_forward(const Tensor4& x, const Tensor4& weight, const Tensor4& bias) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  require(ws.h == 3 && ws.w == 3, "conv3x3 weight must be (Cout, Cin, 3, 3)");
  require(ws.c == xs.c, "conv3x3 channel mismatch: input " + xs.str() + ", weight " + ws.str());
  require(bias.size() == static_cast<std::size_t>(ws.n), "conv3x3 bias size mismatch");
  const int cout = ws.n;
  const int k = xs.c * 9;
  const int hw = xs.h * xs.w;
  Tensor4 y(Shape4{xs.n, cout, xs.h, xs.w});
  AlignedBuffer col(static_cast<std::size_t>(k) * hw);
  CMapR wm(weight.data(), cout, k);
  Eigen::Map<const Eigen::VectorXd> b(bias.data(), cout);
  for (int n = 0; n < xs.n; ++n) {
    im2col3x3(x.sample(n), xs.c, xs.h, xs.w, col.data());
    MapR out(y.sample(n), cout, hw);
    out.noalias() = wm * CMapR(col.data(), k, hw);
    out.colwise() += b;
  }
  return y;
}

Tensor4 conv3x3_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dy,
                         Tensor4& dweight, Tensor4& dbias, bool need_dx) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  require(dy.shape() == (Shape4{xs.n, ws.n, xs.h, xs.w}), "conv3x3 backward: dy shape");
  require(dweight.shape() == ws, "conv3x3 backward: dweight shape");
  const int cout = ws.n;
  const int k = xs.c * 9;
  const int hw = xs.h * xs.w;
  AlignedBuffer col(static_cast<std::size_t>(k) * hw);
  AlignedBuffer dcol(need_dx ? col.size() : 0);
  MapR dw(dweight.data(), cout, k);
  Eigen::Map<Eigen::VectorXd> db(dbias.data(), cout);
  CMapR wm(weight.data(), cout, k);
  Tensor4 dx = need_dx ? Tensor4(xs) : Tensor4();
  for (int n = 0; n < xs.n; ++n) {
    CMapR g(dy.sample(n), cout, hw);
    im2col3x3(x.sample(n), xs.c, xs.h, xs.w, col.data());
    dw.noalias() += g * CMapR(col.data(), k, hw).transpose();
    db += g.rowwise().sum();
    if (need_dx) {
      MapR dc(dcol.data(), k, hw);
      dc.noalias() = wm.transpose() * g;
      col2im3x3(dcol.data(), xs.c, xs.h, xs.w, dx.sample(n));
    }
  }
  return dx;
}

// ---- conv1x1 ---------------------------------------------------------------

Tensor4 conv1x1_forward(const Tensor4& x, const Tensor4& weight, const Tensor4& bias) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  require(ws.h == 1 && ws.w == 1 && ws.c == xs.c, "conv1x1 weight/input mismatch");
  require(bias.size() == static_cast<std::size_t>(ws.n), "conv1x1 bias size mismatch");
  const int hw = xs.h * xs.w;
  Tensor4 y(Shape4{xs.n, ws.n, xs.h, xs.w});
  CMapR wm(weight.data(), ws.n, ws.c);
  Eigen::Map<const Eigen::VectorXd> b(bias.data(), ws.n);
  for (int n = 0; n < xs.n; ++n) {
    MapR out(y.sample(n), ws.n, hw);
    out.noalias() = wm * CMapR(x.sample(n), xs.c, hw);
    out.colwise() += b;
  }
  return y;
}

Tensor4 conv1x1_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dy,
                         Tensor4& dweight, Tensor4& dbias) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  require(dy.shape() == (Shape4{xs.n, ws.n, xs.h, xs.w}), "conv1x1 backward: dy shape");
  const int hw = xs.h * xs.w;
  MapR dw(dweight.data(), ws.n, ws.c);
  Eigen::Map<Eigen::VectorXd> db(dbias.data(), ws.n);
  CMapR wm(weight.data(), ws.n, ws.c);
  Tensor4 dx(xs);
  for (int n = 0; n < xs.n; ++n) {
    CMapR g(dy.sample(n), ws.n, hw);
    CMapR xin(x.sample(n), xs.c, hw);
    dw.noalias() += g * xin.transpose();
    db += g.rowwise().sum();
    MapR(dx.sample(n), xs.c, hw).noalias() = wm.transpose() * g;
  }
  return dx;
}

// ---- relu ------------------------------------------------------------------

Tensor4 relu_forward(const Tensor4& x) {
  Tensor4 y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor4 relu_backward(const Tensor4& y, const Tensor4& dy) {
  require(y.shape() == dy.shape(), "relu backward shape mismatch");
  Tensor4 dx(dy.shape());
  const double* yv = y.data();
  const double* g = dy.data();
  double* d = dx.data();
  for (std::size_t i = 0; i < dx.size(); ++i) d[i] = yv[i] > 0.0 ? g[i] : 0.0;
  return dx;
}

// ---- maxpool ---------------------------------------------------------------

Tensor4 maxpool2x2_forward(const Tensor4& x, PoolIndices& indices) {
  const Shape4 s = x.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "maxpool2x2 needs even H and W, got " + s.str());
  const int oh = s.h / 2;
  const int ow = s.w / 2;
  Tensor4 y(Shape4{s.n, s.c, oh, ow});
  indices.argmax.assign(y.size(), 0);
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double* p = x.plane(n, c);
      double* q = y.plane(n, c);
      for (int yy = 0; yy < oh; ++yy) {
        for (int xx = 0; xx < ow; ++xx, ++o) {
          const int base = 2 * yy * s.w + 2 * xx;
          const int cand[4] = {base, base + 1, base + s.w, base + s.w + 1};
          int best = cand[0];
          for (int k = 1; k < 4; ++k) {
            if (p[cand[k]] > p[best]) best = cand[k];
          }
          q[yy * ow + xx] = p[best];
          indices.argmax[o] = best;
        }
      }
    }
  }
  return y;
}

Tensor4 maxpool2x2_backward(const Tensor4& dy, const PoolIndices& indices, const Shape4& input) {
  const Shape4 s = dy.shape();
  require(s.n == input.n && s.c == input.c && s.h * 2 == input.h && s.w * 2 == input.w,
          "maxpool backward shape mismatch");
  require(indices.argmax.size() == dy.size(), "maxpool backward: stale indices");
  Tensor4 dx(input);
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      double* d = dx.plane(n, c);
      const double* g = dy.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i, ++o) d[indices.argmax[o]] += g[i];
    }
  }
  return dx;
}

// ---- upconv2x2 -------------------------------------------------------------

Tensor4 upconv2x2_forward(const Tensor4& x, const Tensor4& weight, const Tensor4& bias) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  require(ws.n == xs.c && ws.h == 2 && ws.w == 2,
          "upconv2x2 weight must be (Cin, Cout, 2, 2); input " + xs.str() + ", weight " + ws.str());
  require(bias.size() == static_cast<std::size_t>(ws.c), "upconv2x2 bias size mismatch");
  const int cout = ws.c;
  const int hw = xs.h * xs.w;
  const int ow = 2 * xs.w;
  Tensor4 y(Shape4{xs.n, cout, 2 * xs.h, ow});
  MatR tmp(4 * cout, hw);
  CMapR wm(weight.data(), xs.c, 4 * cout);
  for (int n = 0; n < xs.n; ++n) {
    tmp.noalias() = wm.transpose() * CMapR(x.sample(n), xs.c, hw);
    for (int co = 0; co < cout; ++co) {
      double* out = y.plane(n, co);
      const double b = bias.data()[co];
      for (int tap = 0; tap < 4; ++tap) {
        const int dy = tap / 2;
        const int dx = tap % 2;
        const double* t = tmp.data() + static_cast<std::size_t>(co * 4 + tap) * hw;
        for (int yy = 0; yy < xs.h; ++yy) {
          double* row = out + static_cast<std::size_t>(2 * yy + dy) * ow + dx;
          const double* trow = t + static_cast<std::size_t>(yy) * xs.w;
          for (int xx = 0; xx < xs.w; ++xx) row[2 * xx] = trow[xx] + b;
        }
      }
    }
  }
  return y;
}

Tensor4 upconv2x2_backward(const Tensor4& x, const Tensor4& weight, const Tensor4& dy,
                           Tensor4& dweight, Tensor4& dbias) {
  const Shape4 xs = x.shape();
  const Shape4 ws = weight.shape();
  const int cout = ws.c;
  require(dy.shape() == (Shape4{xs.n, cout, 2 * xs.h, 2 * xs.w}), "upconv2x2 backward: dy shape");
  const int hw = xs.h * xs.w;
  const int ow = 2 * xs.w;
  MatR dtmp(4 * cout, hw);
  MapR dw(dweight.data(), xs.c, 4 * cout);
  CMapR wm(weight.data(), xs.c, 4 * cout);
  Tensor4 dx(xs);
  for (int n = 0; n < xs.n; ++n) {
    for (int co = 0; co < cout; ++co) {
      const double* g = dy.plane(n, co);
      double bsum = 0.0;
      for (int tap = 0; tap < 4; ++tap) {
        const int ty = tap / 2;
        const int tx = tap % 2;
        double* t = dtmp.data() + static_cast<std::size_t>(co * 4 + tap) * hw;
        for (int yy = 0; yy < xs.h; ++yy) {
          const double* row = g + static_cast<std::size_t>(2 * yy + ty) * ow + tx;
          double* trow = t + static_cast<std::size_t>(yy) * xs.w;
          for (int xx = 0; xx < xs.w; ++xx) {
            trow[xx] = row[2 * xx];
            bsum += row[2 * xx];
          }
        }
      }
      dbias.data()[co] += bsum;
    }
    CMapR xin(x.sample(n), xs.c, hw);
    dw.noalias() += xin * dtmp.transpose();
    MapR(dx.sample(n), xs.c, hw).noalias() = wm * dtmp;
  }
  return dx;
}

// ---- concat ----------------------------------------------------------------

Tensor4 concat_channels(const std::vector<const Tensor4*>& parts) {
  require(!parts.empty(), "concat_channels needs at least one tensor");
  Shape4 s = parts.front()->shape();
  int channels = 0;
  for (const Tensor4* p : parts) {
    const Shape4& ps = p->shape();
    require(ps.n == s.n && ps.h == s.h && ps.w == s.w,
            "concat_channels spatial mismatch: " + ps.str() + " vs " + s.str());
    channels += ps.c;
  }
  s.c = channels;
  Tensor4 out(s);
  for (int n = 0; n < s.n; ++n) {
    double* dst = out.sample(n);
    for (const Tensor4* p : parts) {
      const std::size_t len = p->shape().sample();
      std::memcpy(dst, p->sample(n), sizeof(double) * len);
      dst += len;
    }
  }
  return out;
}

std::vector<Tensor4> split_channels(const Tensor4& dy, const std::vector<int>& channels) {
  const Shape4 s = dy.shape();
  int total = 0;
  for (int c : channels) total += c;
  require(total == s.c, "split_channels: channel counts do not sum to " + std::to_string(s.c));
  std::vector<Tensor4> out;
  out.reserve(channels.size());
  for (int c : channels) out.emplace_back(Shape4{s.n, c, s.h, s.w});
  for (int n = 0; n < s.n; ++n) {
    const double* src = dy.sample(n);
    for (auto& part : out) {
      const std::size_t len = part.shape().sample();
      std::memcpy(part.sample(n), src, sizeof(double) * len);
      src += len;
    }
  }
  return out;
}

// ---- batchnorm -------------------------------------------------------------

Tensor4 batchnorm_forward(const Tensor4& x, const Tensor4& gamma, const Tensor4& beta, Mode mode,
                          Tensor4& running_mean, Tensor4& running_var, BatchNormCache& cache) {
  const Shape4 s = x.shape();
  const auto channels = static_cast<std::size_t>(s.c);
  require(gamma.size() == channels && beta.size() == channels &&
              running_mean.size() == channels && running_var.size() == channels,
          "batchnorm parameter size mismatch for input " + s.str());
  const std::size_t m = static_cast<std::size_t>(s.n) * s.plane();
  cache.mode = mode;
  cache.mean.assign(channels, 0.0);
  cache.inv_std.assign(channels, 0.0);
  if (mode == Mode::kTrain) {
    if (m < 2) throw DomainError("batchnorm train mode needs N*H*W >= 2 per channel");
    for (int c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) sum += p[i];
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (int n = 0; n < s.n; ++n) {
        const double* p = x.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) sq += (p[i] - mu) * (p[i] - mu);
      }
      const double var = sq / static_cast<double>(m);
      cache.mean[c] = mu;
      cache.inv_std[c] = 1.0 / std::sqrt(var + kBatchNormEpsilon);
      const double unbiased = sq / static_cast<double>(m - 1);
      running_mean.data()[c] =
          (1.0 - kBatchNormMomentum) * running_mean.data()[c] + kBatchNormMomentum * mu;
      running_var.data()[c] =
          (1.0 - kBatchNormMomentum) * running_var.data()[c] + kBatchNormMomentum * unbiased;
    }
  } else {
    for (int c = 0; c < s.c; ++c) {
      cache.mean[c] = running_mean.data()[c];
      cache.inv_std[c] = 1.0 / std::sqrt(running_var.data()[c] + kBatchNormEpsilon);
    }
  }
  Tensor4 y(s);
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const double scale = gamma.data()[c] * cache.inv_std[c];
      const double shift = beta.data()[c] - scale * cache.mean[c];
      const double* p = x.plane(n, c);
      double* q = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) q[i] = scale * p[i] + shift;
    }
  }
  return y;
}

Tensor4 batchnorm_backward(const Tensor4& x, const Tensor4& gamma, const Tensor4& dy,
                           const BatchNormCache& cache, Tensor4& dgamma, Tensor4& dbeta) {
  const Shape4 s = x.shape();
  require(dy.shape() == s, "batchnorm backward shape mismatch");
  const double m = static_cast<double>(s.n) * static_cast<double>(s.plane());
  Tensor4 dx(s);
  for (int c = 0; c < s.c; ++c) {
    const double mu = cache.mean[c];
    const double is = cache.inv_std[c];
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int n = 0; n < s.n; ++n) {
      const double* p = x.plane(n, c);
      const double* g = dy.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_dy += g[i];
        sum_dy_xhat += g[i] * (p[i] - mu) * is;
      }
    }
    dgamma.data()[c] += sum_dy_xhat;
    dbeta.data()[c] += sum_dy;
    const double gm = gamma.data()[c];
    for (int n = 0; n < s.n; ++n) {
      const double* p = x.plane(n, c);
      const double* g = dy.plane(n, c);
      double* d = dx.plane(n, c);
      if (cache.mode == Mode::kTrain) {
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const double xhat = (p[i] - mu) * is;
          d[i] = gm * is * (g[i] - sum_dy / m - xhat * sum_dy_xhat / m);
        }
      } else {
        for (std::size_t i = 0; i < s.plane(); ++i) d[i] = gm * is * g[i];
      }
    }
  }
  return dx;
}

// ---- loss ------------------------------------------------------------------

LossResult mse_loss(const Tensor4& prediction, const Tensor4& target) {
  require(prediction.shape() == target.shape(),
          "mse_loss shape mismatch: " + prediction.shape().str() + " vs " + target.shape().str());
  const double batch = prediction.shape().n;
  LossResult r;
  r.grad = Tensor4(prediction.shape());
  double sum = 0.0;
  const double* p = prediction.data();
  const double* t = target.data();
  double* g = r.grad.data();
  for (std::size_t i = 0; i < prediction.size(); ++i) {
    const double d = t[i] - p[i];
    sum += d * d;
    g[i] = -2.0 * d / batch;
  }
  r.value = sum / batch;
  return r;
}

// ---- adam ------------------------------------------------------------------

void adam_step(ParamStore& params, AdamState& state) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (auto& [name, p] : params) {
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.shape() != p.value.shape()) m = Tensor4(p.value.shape());
    if (v.shape() != p.value.shape()) v = Tensor4(p.value.shape());
    double* w = p.value.data();
    const double* g = p.grad.data();
    double* mv = m.data();
    double* vv = v.data();
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      mv[i] = state.beta1 * mv[i] + (1.0 - state.beta1) * g[i];
      vv[i] = state.beta2 * vv[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double mhat = mv[i] / c1;
      const double vhat = vv[i] / c2;
      w[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

// ---- gradient check --------------------------------------------------------

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) noexcept {
  return seed ^ (value + 0x9E3779B97F4A7C15ull + (seed << 6) + (seed >> 2));
}

std::uint64_t relu_region_hash(std::uint64_t seed, const Tensor4& activated) {
  std::uint64_t word = 0;
  int bits = 0;
  for (double v : activated.values()) {
    word = (word << 1) | (v > 0.0 ? 1u : 0u);
    if (++bits == 64) {
      seed = hash_combine(seed, word);
      word = 0;
      bits = 0;
    }
  }
  return hash_combine(seed, word);
}

std::uint64_t pool_region_hash(std::uint64_t seed, const PoolIndices& indices) {
  for (std::int32_t i : indices.argmax) seed = hash_combine(seed, static_cast<std::uint64_t>(i));
  return seed;
}

GradCheckReport grad_check(const std::function<GradCheckEval()>& evaluate,
                           const std::vector<GradCheckTarget>& targets, double step,
                           double abs_floor) {
  GradCheckReport report;
  const std::uint64_t base_region = evaluate().region;
  for (const auto& target : targets) {
    require(target.value && target.analytic && target.value->shape() == target.analytic->shape(),
            "grad_check target " + target.name + " has mismatched analytic gradient");
    auto vals = target.value->values();
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const double saved = vals[i];
      vals[i] = saved + step;
      const GradCheckEval plus = evaluate();
      vals[i] = saved - step;
      const GradCheckEval minus = evaluate();
      vals[i] = saved;
      if (plus.region != base_region || minus.region != base_region) {
        ++report.skipped;
        continue;
      }
      const double numeric = (plus.loss - minus.loss) / (2.0 * step);
      const double analytic = target.analytic->values()[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      ++report.checked;
      if (rel > report.max_relative_error) {
        report.max_relative_error = rel;
        report.worst = target.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

}  // namespace vaf::nn
