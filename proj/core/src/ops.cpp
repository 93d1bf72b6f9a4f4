#include "schn/ops.hpp"

#include <Eigen/Core>
#include <cmath>
#include <string>

#include "schn/errors.hpp"

namespace schn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_rank4(const Tensor<T>& t, const char* what) {
  if (t.rank() != 4) {
    throw ConfigError(std::string(what) + " must be rank 4 (NCHW), got " + to_string(t.shape()));
  }
}

struct ConvGeometry {
  std::int64_t channels, height, width, kh, kw, pad, out_h, out_w;
  std::int64_t rows() const { return channels * kh * kw; }
  std::int64_t cols() const { return out_h * out_w; }
};

// cols[(c*kh + i)*kw + j][oy*out_w + ox] = img[c][oy - pad + i][ox - pad + j] (zero outside).
template <typename T>
void im2col(const T* img, const ConvGeometry& g, T* cols) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const T* plane = img + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy - g.pad + i;
          T* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= g.height) {
            std::fill(dst, dst + g.out_w, T(0));
            continue;
          }
          const T* src = plane + iy * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox - g.pad + j;
            dst[ox] = (ix < 0 || ix >= g.width) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* img) {
  for (std::int64_t c = 0; c < g.channels; ++c) {
    T* plane = img + c * g.height * g.width;
    for (std::int64_t i = 0; i < g.kh; ++i) {
      for (std::int64_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * g.cols();
        for (std::int64_t oy = 0; oy < g.out_h; ++oy) {
          const std::int64_t iy = oy - g.pad + i;
          if (iy < 0 || iy >= g.height) continue;
          const T* src = row + oy * g.out_w;
          T* dst = plane + iy * g.width;
          for (std::int64_t ox = 0; ox < g.out_w; ++ox) {
            const std::int64_t ix = ox - g.pad + j;
            if (ix >= 0 && ix < g.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int padding) {
  require_rank4(input, "conv2d input");
  require_rank4(weight, "conv2d weight");
  if (padding < 0) throw ConfigError("conv2d padding must be non-negative");
  const std::int64_t n = input.dim(0), cin = input.dim(1), h = input.dim(2), w = input.dim(3);
  const std::int64_t cout = weight.dim(0);
  if (weight.dim(1) != cin) {
    throw ConfigError("conv2d channel mismatch: input " + to_string(input.shape()) + " weight " +
                      to_string(weight.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
    throw ConfigError("conv2d bias shape " + to_string(bias.shape()) + " does not match " +
                      std::to_string(cout) + " output channels");
  }
  ConvGeometry g{cin, h, w, weight.dim(2), weight.dim(3), padding, 0, 0};
  g.out_h = h + 2 * padding - g.kh + 1;
  g.out_w = w + 2 * padding - g.kw + 1;
  if (g.out_h < 1 || g.out_w < 1) throw ConfigError("conv2d kernel larger than padded input");

  const std::int64_t in_plane = cin * h * w;
  const std::int64_t out_plane = cout * g.cols();
  std::vector<T> out(static_cast<std::size_t>(n * out_plane));
  std::vector<T> cols(static_cast<std::size_t>(g.rows() * g.cols()));
  ConstMatMap<T> wmat(weight.data().data(), cout, g.rows());
  for (std::int64_t b = 0; b < n; ++b) {
    im2col(input.data().data() + b * in_plane, g, cols.data());
    MatMap<T> omat(out.data() + b * out_plane, cout, g.cols());
    omat.noalias() = wmat * ConstMatMap<T>(cols.data(), g.rows(), g.cols());
    if (bias.defined()) {
      for (std::int64_t c = 0; c < cout; ++c) omat.row(c).array() += bias.data()[c];
    }
  }

  auto backward = [g, n, cout, in_plane, out_plane](detail::Node<T>& self) {
    auto& in = *self.parents[0];
    auto& wt = *self.parents[1];
    auto* bs = self.parents[2].get();
    std::vector<T> cols(static_cast<std::size_t>(g.rows() * g.cols()));
    ConstMatMap<T> wmat(wt.data.data(), cout, g.rows());
    for (std::int64_t b = 0; b < n; ++b) {
      ConstMatMap<T> gout(self.grad.data() + b * out_plane, cout, g.cols());
      if (bs && bs->requires_grad) {
        auto gb = bs->grad_buffer();
        for (std::int64_t c = 0; c < cout; ++c) gb[c] += gout.row(c).sum();
      }
      if (wt.requires_grad) {
        im2col(in.data.data() + b * in_plane, g, cols.data());
        MatMap<T> gw(wt.grad_buffer().data(), cout, g.rows());
        gw.noalias() += gout * ConstMatMap<T>(cols.data(), g.rows(), g.cols()).transpose();
      }
      if (in.requires_grad) {
        MatMap<T> gcols(cols.data(), g.rows(), g.cols());
        gcols.noalias() = wmat.transpose() * gout;
        col2im_add(cols.data(), g, in.grad_buffer().data() + b * in_plane);
      }
    }
  };
  return Tensor<T>::make_result({n, cout, g.out_h, g.out_w}, std::move(out), "conv2d",
                                {input, weight, bias}, std::move(backward));
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  if (!(slope > T(0) && slope < T(1))) {
    throw ConfigError("leaky_relu slope must lie in (0,1), got " + std::to_string(slope));
  }
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] >= T(0) ? in[i] : slope * in[i];
  auto backward = [slope](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    auto g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] += p.data[i] >= T(0) ? self.grad[i] : slope * self.grad[i];
    }
  };
  return Tensor<T>::make_result(x.shape(), std::move(out), "leaky_relu", {x}, std::move(backward));
}

namespace {

// Index of in[n, c*r*r + i*r + j, h, w] for out[n, c, h*r+i, w*r+j], enumerated in output order.
template <typename Fn>
void for_each_shuffle(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w,
                      std::int64_t r, Fn&& fn) {
  const std::int64_t oh = h * r, ow = w * r;
  std::size_t out_idx = 0;
  for (std::int64_t b = 0; b < n; ++b)
    for (std::int64_t ch = 0; ch < c; ++ch)
      for (std::int64_t y = 0; y < oh; ++y)
        for (std::int64_t xx = 0; xx < ow; ++xx, ++out_idx) {
          const std::int64_t ic = ch * r * r + (y % r) * r + (xx % r);
          const std::size_t in_idx =
              static_cast<std::size_t>(((b * c * r * r + ic) * h + y / r) * w + xx / r);
          fn(out_idx, in_idx);
        }
}

}  // namespace

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  require_rank4(x, "pixel_shuffle input");
  if (r < 1) throw ConfigError("pixel_shuffle factor must be >= 1");
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  if (x.dim(1) % rr != 0) {
    throw ConfigError("pixel_shuffle: channel count " + std::to_string(x.dim(1)) +
                      " not divisible by " + std::to_string(rr));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1) / rr, h = x.dim(2), w = x.dim(3);
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for_each_shuffle(n, c, h, w, r, [&](std::size_t o, std::size_t i) { out[o] = in[i]; });
  auto backward = [n, c, h, w, r](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for_each_shuffle(n, c, h, w, r, [&](std::size_t o, std::size_t i) { g[i] += self.grad[o]; });
  };
  return Tensor<T>::make_result({n, c, h * r, w * r}, std::move(out), "pixel_shuffle", {x},
                                std::move(backward));
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int r) {
  require_rank4(x, "pixel_unshuffle input");
  if (r < 1) throw ConfigError("pixel_unshuffle factor must be >= 1");
  if (x.dim(2) % r != 0 || x.dim(3) % r != 0) {
    throw ConfigError("pixel_unshuffle: spatial size " + to_string(x.shape()) +
                      " not divisible by " + std::to_string(r));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2) / r, w = x.dim(3) / r;
  std::vector<T> out(x.numel());
  const auto in = x.data();
  for_each_shuffle(n, c, h, w, r, [&](std::size_t o, std::size_t i) { out[i] = in[o]; });
  auto backward = [n, c, h, w, r](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for_each_shuffle(n, c, h, w, r, [&](std::size_t o, std::size_t i) { g[o] += self.grad[i]; });
  };
  const std::int64_t rr = static_cast<std::int64_t>(r) * r;
  return Tensor<T>::make_result({n, c * rr, h, w}, std::move(out), "pixel_unshuffle", {x},
                                std::move(backward));
}

namespace {

// Bilinear footprint of one sample point. Corner order: (xT,yT), (xT+1,yT),
// (xT,yT+1), (xT+1,yT+1). Out-of-image corners carry index -1.
template <typename T>
struct Footprint {
  std::int64_t index[4];
  T weight[4];
  T fx, fy;
  bool any;
};

template <typename T>
Footprint<T> footprint(T x, T y, std::int64_t h, std::int64_t w) {
  Footprint<T> f{};
  for (auto& i : f.index) i = -1;
  // Every corner lies outside once the point is a full pixel beyond the border.
  if (!(x > T(-1) && x < T(w) && y > T(-1) && y < T(h))) {
    f.any = false;
    return f;
  }
  const T xt = std::floor(x), yt = std::floor(y);
  const auto x0 = static_cast<std::int64_t>(xt), y0 = static_cast<std::int64_t>(yt);
  f.fx = x - xt;
  f.fy = y - yt;
  const T ax = xt + T(1) - x, ay = yt + T(1) - y;
  f.weight[0] = ax * ay;
  f.weight[1] = f.fx * ay;
  f.weight[2] = ax * f.fy;
  f.weight[3] = f.fx * f.fy;
  const std::int64_t xs[4] = {x0, x0 + 1, x0, x0 + 1};
  const std::int64_t ys[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (xs[k] >= 0 && xs[k] < w && ys[k] >= 0 && ys[k] < h) f.index[k] = ys[k] * w + xs[k];
  }
  f.any = true;
  return f;
}

}  // namespace

template <typename T>
Tensor<T> grid_sample_offsets(const Tensor<T>& feat, const Tensor<T>& offsets) {
  require_rank4(feat, "grid_sample_offsets feat");
  require_rank4(offsets, "grid_sample_offsets offsets");
  const std::int64_t n = feat.dim(0), c = feat.dim(1), h = feat.dim(2), w = feat.dim(3);
  if (offsets.dim(0) != n || offsets.dim(1) != 2 || offsets.dim(2) != h || offsets.dim(3) != w) {
    throw ConfigError("grid_sample_offsets: offsets " + to_string(offsets.shape()) +
                      " incompatible with feat " + to_string(feat.shape()));
  }
  const std::int64_t hw = h * w;
  std::vector<T> out(feat.numel(), T(0));
  const auto fd = feat.data();
  const auto od = offsets.data();
  for (std::int64_t b = 0; b < n; ++b) {
    const T* ox = od.data() + b * 2 * hw;
    const T* oy = ox + hw;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t xx = 0; xx < w; ++xx) {
        const std::int64_t p = y * w + xx;
        const auto f = footprint<T>(T(xx) + ox[p], T(y) + oy[p], h, w);
        if (!f.any) continue;
        for (std::int64_t ch = 0; ch < c; ++ch) {
          const T* plane = fd.data() + (b * c + ch) * hw;
          T acc = T(0);
          for (int k = 0; k < 4; ++k) {
            if (f.index[k] >= 0) acc += f.weight[k] * plane[f.index[k]];
          }
          out[static_cast<std::size_t>((b * c + ch) * hw + p)] = acc;
        }
      }
    }
  }

  auto backward = [n, c, h, w, hw](detail::Node<T>& self) {
    auto& fnode = *self.parents[0];
    auto& onode = *self.parents[1];
    T* gf = fnode.requires_grad ? fnode.grad_buffer().data() : nullptr;
    T* go = onode.requires_grad ? onode.grad_buffer().data() : nullptr;
    for (std::int64_t b = 0; b < n; ++b) {
      const T* ox = onode.data.data() + b * 2 * hw;
      const T* oy = ox + hw;
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xx = 0; xx < w; ++xx) {
          const std::int64_t p = y * w + xx;
          const auto f = footprint<T>(T(xx) + ox[p], T(y) + oy[p], h, w);
          if (!f.any) continue;
          T dx = T(0), dy = T(0);
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const std::int64_t base = (b * c + ch) * hw;
            const T g = self.grad[static_cast<std::size_t>(base + p)];
            const T* plane = fnode.data.data() + base;
            T v[4];
            for (int k = 0; k < 4; ++k) v[k] = f.index[k] >= 0 ? plane[f.index[k]] : T(0);
            if (gf) {
              for (int k = 0; k < 4; ++k) {
                if (f.index[k] >= 0) gf[base + f.index[k]] += f.weight[k] * g;
              }
            }
            dx += g * ((T(1) - f.fy) * (v[1] - v[0]) + f.fy * (v[3] - v[2]));
            dy += g * ((T(1) - f.fx) * (v[2] - v[0]) + f.fx * (v[3] - v[1]));
          }
          if (go) {
            go[b * 2 * hw + p] += dx;
            go[b * 2 * hw + hw + p] += dy;
          }
        }
      }
    }
  };
  return Tensor<T>::make_result(feat.shape(), std::move(out), "grid_sample_offsets",
                                {feat, offsets}, std::move(backward));
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> xs) {
  if (xs.empty()) throw ConfigError("concat_channels needs at least one input");
  for (const auto& x : xs) require_rank4(x, "concat_channels input");
  const std::int64_t n = xs[0].dim(0), h = xs[0].dim(2), w = xs[0].dim(3);
  std::int64_t total = 0;
  std::vector<std::int64_t> channels;
  for (const auto& x : xs) {
    if (x.dim(0) != n || x.dim(2) != h || x.dim(3) != w) {
      throw ConfigError("concat_channels: " + to_string(x.shape()) + " does not match " +
                        to_string(xs[0].shape()));
    }
    channels.push_back(x.dim(1));
    total += x.dim(1);
  }
  const std::int64_t hw = h * w;
  std::vector<T> out(static_cast<std::size_t>(n * total * hw));
  for (std::int64_t b = 0; b < n; ++b) {
    std::int64_t c0 = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const T* src = xs[k].data().data() + b * channels[k] * hw;
      std::copy(src, src + channels[k] * hw, out.data() + (b * total + c0) * hw);
      c0 += channels[k];
    }
  }
  auto backward = [n, total, hw, channels](detail::Node<T>& self) {
    std::int64_t c0 = 0;
    for (std::size_t k = 0; k < channels.size(); ++k) {
      auto& p = *self.parents[k];
      if (p.requires_grad) {
        auto g = p.grad_buffer();
        for (std::int64_t b = 0; b < n; ++b) {
          const T* src = self.grad.data() + (b * total + c0) * hw;
          T* dst = g.data() + b * channels[k] * hw;
          for (std::int64_t i = 0; i < channels[k] * hw; ++i) dst[i] += src[i];
        }
      }
      c0 += channels[k];
    }
  };
  return Tensor<T>::make_result({n, total, h, w}, std::move(out), "concat_channels",
                                std::vector<Tensor<T>>(xs.begin(), xs.end()), std::move(backward));
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, std::int64_t begin, std::int64_t count) {
  require_rank4(x, "slice_channels input");
  const std::int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (begin < 0 || count < 0 || begin + count > c) {
    throw ConfigError("slice_channels: range [" + std::to_string(begin) + "," +
                      std::to_string(begin + count) + ") outside " + std::to_string(c) +
                      " channels");
  }
  std::vector<T> out(static_cast<std::size_t>(n * count * hw));
  for (std::int64_t b = 0; b < n; ++b) {
    const T* src = x.data().data() + (b * c + begin) * hw;
    std::copy(src, src + count * hw, out.data() + b * count * hw);
  }
  auto backward = [n, c, hw, begin, count](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::int64_t b = 0; b < n; ++b) {
      const T* src = self.grad.data() + b * count * hw;
      T* dst = g.data() + (b * c + begin) * hw;
      for (std::int64_t i = 0; i < count * hw; ++i) dst[i] += src[i];
    }
  };
  return Tensor<T>::make_result({n, count, x.dim(2), x.dim(3)}, std::move(out), "slice_channels",
                                {x}, std::move(backward));
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("add: shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  auto backward = [](detail::Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  };
  return Tensor<T>::make_result(a.shape(), std::move(out), "add", {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ConfigError("mul: shape " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  auto backward = [](detail::Node<T>& self) {
    for (int k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      const auto& other = self.parents[1 - k]->data;
      auto g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * other[i];
    }
  };
  return Tensor<T>::make_result(a.shape(), std::move(out), "mul", {a, b}, std::move(backward));
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = factor * x.data()[i];
  auto backward = [factor](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  };
  return Tensor<T>::make_result(x.shape(), std::move(out), "scale", {x}, std::move(backward));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  auto backward = [](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  };
  return Tensor<T>::make_result({}, {acc}, "sum", {x}, std::move(backward));
}

template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ConfigError("l1_loss: shape " + to_string(pred.shape()) + " vs " +
                      to_string(target.shape()));
  }
  const auto count = pred.numel();
  if (count == 0) throw ConfigError("l1_loss on empty tensors");
  T acc = T(0);
  for (std::size_t i = 0; i < count; ++i) acc += std::abs(pred.data()[i] - target.data()[i]);
  auto backward = [count](detail::Node<T>& self) {
    const auto& p = self.parents[0]->data;
    const auto& t = self.parents[1]->data;
    const T g = self.grad[0] / static_cast<T>(count);
    for (int k = 0; k < 2; ++k) {
      auto& node = *self.parents[k];
      if (!node.requires_grad) continue;
      auto buf = node.grad_buffer();
      const T sgn_scale = k == 0 ? g : -g;
      for (std::size_t i = 0; i < count; ++i) {
        const T d = p[i] - t[i];
        const T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        buf[i] += sgn_scale * s;
      }
    }
  };
  return Tensor<T>::make_result({}, {acc / static_cast<T>(count)}, "l1_loss", {pred, target},
                                std::move(backward));
}

#define SCHN_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);   \
  template Tensor<T> leaky_relu<T>(const Tensor<T>&, T);                                     \
  template Tensor<T> pixel_shuffle<T>(const Tensor<T>&, int);                                \
  template Tensor<T> pixel_unshuffle<T>(const Tensor<T>&, int);                              \
  template Tensor<T> grid_sample_offsets<T>(const Tensor<T>&, const Tensor<T>&);             \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                         \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::int64_t, std::int64_t);        \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                             \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                          \
  template Tensor<T> sum<T>(const Tensor<T>&);                                               \
  template Tensor<T> l1_loss<T>(const Tensor<T>&, const Tensor<T>&);

SCHN_INSTANTIATE_OPS(float)
SCHN_INSTANTIATE_OPS(double)

#undef SCHN_INSTANTIATE_OPS

}  // namespace schn
