#include "kfbf/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>

#include "kfbf/autodiff/bspline.hpp"
#include "kfbf/error.hpp"

namespace kfbf::ad {
namespace {

using detail::Node;
using Inputs = std::span<Node* const>;

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

template <typename F>
Tensor unary(Tape& tape, const Tensor& x, F&& value, BackwardFn backward) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = value(in[i]);
  return tape.record(x.shape(), std::move(out), {x}, std::move(backward));
}

}  // namespace

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + a.shape().str() + " x " +
                         b.shape().str());
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  // 4x8 register blocks. Each output still sums over p in order from 0.0, so
  // finite results match the plain loop below bit for bit.
  constexpr std::size_t R = 4, C = 8;
  const std::size_t m4 = m - m % R, n8 = n - n % C;
  for (std::size_t i = 0; i < m4; i += R) {
    const double* a0 = pa + i * k;
    for (std::size_t j = 0; j < n8; j += C) {
      double acc[R][C] = {};
      for (std::size_t p = 0; p < k; ++p) {
        const double av[R] = {a0[p], a0[k + p], a0[2 * k + p], a0[3 * k + p]};
        if (av[0] == 0.0 && av[1] == 0.0 && av[2] == 0.0 && av[3] == 0.0) continue;
        const double* bp = pb + p * n + j;
        for (std::size_t r = 0; r < R; ++r)
          for (std::size_t t = 0; t < C; ++t) acc[r][t] += av[r] * bp[t];
      }
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t t = 0; t < C; ++t) out[(i + r) * n + j + t] = acc[r][t];
    }
    for (std::size_t r = 0; r < R; ++r) {
      double* row = out.data() + (i + r) * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = a0[r * k + p];
        if (av == 0.0) continue;
        for (std::size_t j = n8; j < n; ++j) row[j] += av * pb[p * n + j];
      }
    }
  }
  for (std::size_t i = m4; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  return tape.record({m, n}, std::move(out), {a, b}, [m, k, n](const Node& o, Inputs in) {
    const double* g = o.grad.data();
    Node& na = *in[0];
    Node& nb = *in[1];
    if (na.requires_grad) {
      double* ga = na.ensure_grad().data();
      const double* pb = nb.data.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = pb + p * n;
          const double* grow = g + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      double* gb = nb.ensure_grad().data();
      const double* pa = na.data.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = pa[i * k + p];
          if (av == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
}

Tensor transpose(Tape& tape, const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return tape.record({n, m}, std::move(out), {x}, [m, n](const Node& o, Inputs in) {
    auto gx = in[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += o.grad[j * m + i];
  });
}

Tensor reshape(Tape& tape, const Tensor& x, Shape shape) {
  if (shape.size() != x.size()) {
    throw DimensionError("reshape: " + x.shape().str() + " cannot become " + shape.str());
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return tape.record(shape, std::move(out), {x}, [](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [](const Node& o, Inputs in) {
    for (Node* n : in) {
      if (!n->requires_grad) continue;
      auto g = n->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [](const Node& o, Inputs in) {
    if (in[0]->requires_grad) {
      auto g = in[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (in[1]->requires_grad) {
      auto g = in[1]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [](const Node& o, Inputs in) {
    Node& na = *in[0];
    Node& nb = *in[1];
    if (na.requires_grad) {
      auto g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * nb.data[i];
    }
    if (nb.requires_grad) {
      auto g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * na.data[i];
    }
  });
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  return tape.record(a.shape(), std::move(out), {a, b}, [](const Node& o, Inputs in) {
    Node& na = *in[0];
    Node& nb = *in[1];
    if (na.requires_grad) {
      auto g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / nb.data[i];
    }
    if (nb.requires_grad) {
      auto g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i] * o.data[i] / nb.data[i];
    }
  });
}

Tensor add_row_broadcast(Tape& tape, const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row_broadcast: bias " + bias.shape().str() +
                         " does not fit rows of " + x.shape().str());
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.data()[j];
  return tape.record(x.shape(), std::move(out), {x, bias}, [m, n](const Node& o, Inputs in) {
    if (in[0]->requires_grad) {
      auto g = in[0]->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (in[1]->requires_grad) {
      auto g = in[1]->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
    }
  });
}

Tensor outer_sum(Tape& tape, const Tensor& col, const Tensor& row) {
  if (col.cols() != 1 || row.rows() != 1) {
    throw DimensionError("outer_sum: expected mx1 and 1xn, got " + col.shape().str() + " and " +
                         row.shape().str());
  }
  const std::size_t m = col.rows(), n = row.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = col.data()[i] + row.data()[j];
  return tape.record({m, n}, std::move(out), {col, row}, [m, n](const Node& o, Inputs in) {
    if (in[0]->requires_grad) {
      auto g = in[0]->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[i] += o.grad[i * n + j];
    }
    if (in[1]->requires_grad) {
      auto g = in[1]->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += o.grad[i * n + j];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& x, double factor) {
  return unary(tape, x, [factor](double v) { return v * factor; },
               [factor](const Node& o, Inputs in) {
                 auto g = in[0]->ensure_grad();
                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * o.grad[i];
               });
}

Tensor add_scalar(Tape& tape, const Tensor& x, double value) {
  return unary(tape, x, [value](double v) { return v + value; }, [](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
  });
}

Tensor square(Tape& tape, const Tensor& x) {
  return unary(tape, x, [](double v) { return v * v; }, [](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * in[0]->data[i] * o.grad[i];
  });
}

Tensor log(Tape& tape, const Tensor& x) {
  for (double v : x.data()) {
    if (!(v > 0.0)) throw NumericError("log: non-positive or NaN input " + std::to_string(v));
  }
  return unary(tape, x, [](double v) { return std::log(v); }, [](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] / in[0]->data[i];
  });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary(tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](const Node& o, Inputs in) {
                 auto g = in[0]->ensure_grad();
                 for (std::size_t i = 0; i < g.size(); ++i)
                   if (in[0]->data[i] > 0.0) g[i] += o.grad[i];
               });
}

Tensor leaky_relu(Tape& tape, const Tensor& x, double slope) {
  return unary(tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
               [slope](const Node& o, Inputs in) {
                 auto g = in[0]->ensure_grad();
                 for (std::size_t i = 0; i < g.size(); ++i)
                   g[i] += (in[0]->data[i] > 0.0 ? 1.0 : slope) * o.grad[i];
               });
}

namespace {
double sigmoid(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}
}  // namespace

Tensor silu(Tape& tape, const Tensor& x) {
  return unary(tape, x, [](double v) { return v * sigmoid(v); }, [](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = in[0]->data[i];
      const double s = sigmoid(v);
      g[i] += o.grad[i] * s * (1.0 + v * (1.0 - s));
    }
  });
}

Tensor softmax_rows(Tape& tape, const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = in[i * n + j];
      if (!std::isfinite(v)) throw NumericError("softmax_rows: non-finite input");
      mx = std::max(mx, v);
    }
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      out[i * n + j] = std::exp(in[i * n + j] - mx);
      total += out[i * n + j];
    }
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return tape.record(x.shape(), std::move(out), {x}, [m, n](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += o.grad[i * n + j] * o.data[i * n + j];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += o.data[i * n + j] * (o.grad[i * n + j] - dot);
    }
  });
}

Tensor layernorm_rows(Tape& tape, const Tensor& x, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (n == 0) throw ContractError("layernorm_rows: rows must be non-empty");
  std::vector<double> out(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  const auto in = x.data();
  for (std::size_t i = 0; i < m; ++i) {
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += in[i * n + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double d = in[i * n + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double r = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = r;
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = (in[i * n + j] - mean) * r;
  }
  return tape.record(x.shape(), std::move(out), {x}, [m, n, inv_std](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    const double nn = static_cast<double>(n);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_g = 0.0, mean_gy = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        mean_g += o.grad[i * n + j];
        mean_gy += o.grad[i * n + j] * o.data[i * n + j];
      }
      mean_g /= nn;
      mean_gy /= nn;
      const double r = (*inv_std)[i];
      for (std::size_t j = 0; j < n; ++j)
        g[i * n + j] += r * (o.grad[i * n + j] - mean_g - o.data[i * n + j] * mean_gy);
    }
  });
}

Tensor concat_columns(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_columns: no inputs");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> offsets;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_columns: row mismatch " + parts.front().shape().str() +
                           " vs " + p.shape().str());
    }
    offsets.push_back(n);
    n += p.cols();
  }
  std::vector<double> out(m * n);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const std::size_t w = parts[k].cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[k].data().begin() + static_cast<std::ptrdiff_t>(i * w), w,
                  out.begin() + static_cast<std::ptrdiff_t>(i * n + offsets[k]));
  }
  return tape.record({m, n}, std::move(out), parts, [m, n, offsets](const Node& o, Inputs in) {
    for (std::size_t k = 0; k < in.size(); ++k) {
      if (!in[k]->requires_grad) continue;
      const std::size_t w = in[k]->shape.cols;
      auto g = in[k]->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) g[i * w + j] += o.grad[i * n + offsets[k] + j];
    }
  });
}

Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + parts.front().shape().str() +
                           " vs " + p.shape().str());
    }
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return tape.record({m, n}, std::move(out), parts, [](const Node& o, Inputs in) {
    std::size_t offset = 0;
    for (Node* node : in) {
      const std::size_t len = node->data.size();
      if (node->requires_grad) {
        auto g = node->ensure_grad();
        for (std::size_t i = 0; i < len; ++i) g[i] += o.grad[offset + i];
      }
      offset += len;
    }
  });
}

Tensor slice(Tape& tape, const Tensor& x, std::size_t r0, std::size_t r1, std::size_t c0,
             std::size_t c1) {
  if (r0 > r1 || r1 > x.rows() || c0 > c1 || c1 > x.cols()) {
    throw DimensionError("slice: block [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                         ") outside " + x.shape().str());
  }
  const std::size_t n = x.cols(), h = r1 - r0, w = c1 - c0;
  std::vector<double> out(h * w);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x.data()[(r0 + i) * n + c0 + j];
  return tape.record({h, w}, std::move(out), {x}, [r0, c0, n, h, w](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) g[(r0 + i) * n + c0 + j] += o.grad[i * w + j];
  });
}

Tensor slice_columns(Tape& tape, const Tensor& x, std::size_t c0, std::size_t c1) {
  return slice(tape, x, 0, x.rows(), c0, c1);
}

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t r0, std::size_t r1) {
  return slice(tape, x, r0, r1, 0, x.cols());
}

Tensor reduce_sum(Tape& tape, const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  return tape.record({1, 1}, {total}, {x}, [](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (auto& v : g) v += o.grad[0];
  });
}

Tensor reduce_mean(Tape& tape, const Tensor& x) {
  if (x.size() == 0) throw ContractError("reduce_mean: empty tensor");
  return scale(tape, reduce_sum(tape, x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_rows(Tape& tape, const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += x.data()[i * n + j];
  return tape.record({m, 1}, std::move(out), {x}, [m, n](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += o.grad[i];
  });
}

Tensor diag(Tape& tape, const Tensor& x) {
  if (x.rows() != x.cols()) throw DimensionError("diag: non-square input " + x.shape().str());
  const std::size_t n = x.rows();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.data()[i * n + i];
  return tape.record({n, 1}, std::move(out), {x}, [n](const Node& o, Inputs in) {
    auto g = in[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i) g[i * n + i] += o.grad[i];
  });
}

SplineGrid SplineGrid::uniform(double lo, double hi, std::size_t basis_count, int degree) {
  if (!(lo < hi)) throw ContractError("spline grid requires lo < hi");
  if (degree < 1) throw ContractError("spline degree must be >= 1");
  if (basis_count <= static_cast<std::size_t>(degree)) {
    throw ContractError("spline basis count must exceed the degree");
  }
  const std::size_t intervals = basis_count - static_cast<std::size_t>(degree);
  const double step = (hi - lo) / static_cast<double>(intervals);
  SplineGrid grid;
  grid.degree = degree;
  grid.lo = lo;
  grid.hi = hi;
  const std::size_t knot_count = basis_count + static_cast<std::size_t>(degree) + 1;
  grid.knots.resize(knot_count);
  for (std::size_t j = 0; j < knot_count; ++j) {
    grid.knots[j] = lo + (static_cast<double>(j) - degree) * step;
  }
  grid.knots[static_cast<std::size_t>(degree)] = lo;
  grid.knots[static_cast<std::size_t>(degree) + intervals] = hi;
  return grid;
}

namespace {

// Per input entry only a window of `w` consecutive basis functions can be
// nonzero: degree + 1 of them on grids padded past [lo, hi], all of them
// otherwise.
struct KanCache {
  std::size_t w = 0;
  std::vector<std::uint32_t> first;  // R x F_in, index of the window's first basis
  std::vector<double> basis;         // R x F_in x w
  std::vector<double> dbasis;        // same layout, zero where clamped; empty without grads
  std::vector<double> act;           // silu(x), R x F_in
  std::vector<double> dact;          // silu'(x)
};

// Forward accumulation; W > 0 fixes the window length at compile time.
struct KanForward {
  const KanCache* cache;
  const double* beta;
  const double* gamma;
  const double* coef;
  std::size_t fin, fout, pc;

  template <std::size_t W>
  void run(double* out, std::size_t rows) const {
    const std::size_t w = W > 0 ? W : cache->w;
    const std::size_t width = fin * pc;
    for (std::size_t r = 0; r < rows; ++r) {
      const double* a = cache->act.data() + r * fin;
      const double* b = cache->basis.data() + r * fin * w;
      const std::uint32_t* f0 = cache->first.data() + r * fin;
      for (std::size_t j = 0; j < fout; ++j) {
        const double* bj = beta + j * fin;
        const double* gj = gamma + j * fin;
        const double* cj = coef + j * width;
        double acc = 0.0;
        for (std::size_t i = 0; i < fin; ++i) {
          const double* c = cj + i * pc + f0[i];
          const double* bi = b + i * w;
          double spline = 0.0;
          if constexpr (W > 0) {
            for (std::size_t q = 0; q < W; ++q) spline += c[q] * bi[q];
          } else {
            for (std::size_t q = 0; q < w; ++q) spline += c[q] * bi[q];
          }
          acc += bj[i] * a[i] + gj[i] * spline;
        }
        out[r * fout + j] = acc;
      }
    }
  }
};

}  // namespace

Tensor kan_layer(Tape& tape, const Tensor& x, const Tensor& beta, const Tensor& gamma,
                 const Tensor& coef, const SplineGrid& grid) {
  const std::size_t rows = x.rows(), fin = x.cols(), fout = beta.rows();
  const std::size_t pc = grid.basis_count();
  if (beta.cols() != fin || gamma.shape() != beta.shape() || coef.rows() != fout ||
      coef.cols() != fin * pc) {
    throw DimensionError("kan_layer: input " + x.shape().str() + ", beta " + beta.shape().str() +
                         ", gamma " + gamma.shape().str() + ", coef " + coef.shape().str() +
                         " with " + std::to_string(pc) + " basis functions");
  }

  const auto deg = static_cast<std::size_t>(grid.degree);
  const std::size_t m = grid.knots.size();
  const bool local = m >= 2 * deg + 2 && grid.knots[deg] <= grid.lo && grid.hi <= grid.knots[m - 1 - deg];
  const bool grads = tape.recording() && (x.requires_grad() || beta.requires_grad() ||
                                          gamma.requires_grad() || coef.requires_grad());

  auto cache = std::make_shared<KanCache>();
  const std::size_t w = local ? deg + 1 : pc;
  cache->w = w;
  cache->first.assign(rows * fin, 0);
  cache->basis.resize(rows * fin * w);
  if (grads) cache->dbasis.resize(rows * fin * w);
  cache->act.resize(rows * fin);
  cache->dact.resize(rows * fin);
  std::vector<double> scratch(m);
  const auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < fin; ++i) {
      const std::size_t e = r * fin + i;
      const double v = xd[e];
      const double sg = sigmoid(v);
      cache->act[e] = v * sg;
      cache->dact[e] = sg * (1.0 + v * (1.0 - sg));
      std::span<double> values(cache->basis.data() + e * w, w);
      std::span<double> derivs;
      if (grads) derivs = std::span<double>(cache->dbasis.data() + e * w, w);
      const double clamped = std::clamp(v, grid.lo, grid.hi);
      if (local) {
        cache->first[e] =
            static_cast<std::uint32_t>(bspline_local_basis(clamped, grid.knots, grid.degree, values, derivs));
      } else if (grads) {
        bspline_basis_with_derivative(clamped, grid.knots, grid.degree, values, derivs, scratch);
      } else {
        const auto full = bspline_basis(clamped, grid.knots, grid.degree);
        std::copy(full.begin(), full.end(), values.begin());
      }
      if (grads && (v < grid.lo || v > grid.hi)) std::fill(derivs.begin(), derivs.end(), 0.0);
    }
  }

  std::vector<double> out(rows * fout, 0.0);
  KanForward f{cache.get(), beta.data().data(), gamma.data().data(), coef.data().data(), fin, fout, pc};
  if (w == 4) {
    f.run<4>(out.data(), rows);  // cubic splines
  } else {
    f.run<0>(out.data(), rows);
  }
  const std::size_t width = fin * pc;

  return tape.record(
      {rows, fout}, std::move(out), {x, beta, gamma, coef},
      [rows, fin, fout, pc, width, cache](const Node& o, Inputs in) {
        Node& nx = *in[0];
        Node& nbeta = *in[1];
        Node& ngamma = *in[2];
        Node& ncoef = *in[3];
        const double* g = o.grad.data();
        const std::size_t w = cache->w;
        const double* bd = nbeta.data.data();
        const double* gd = ngamma.data.data();
        const double* cd = ncoef.data.data();
        double* gb = nbeta.requires_grad ? nbeta.ensure_grad().data() : nullptr;
        double* gg = ngamma.requires_grad ? ngamma.ensure_grad().data() : nullptr;
        double* gc = ncoef.requires_grad ? ncoef.ensure_grad().data() : nullptr;
        double* gx = nx.requires_grad ? nx.ensure_grad().data() : nullptr;

        for (std::size_t r = 0; r < rows; ++r) {
          const double* a = cache->act.data() + r * fin;
          const double* da = cache->dact.data() + r * fin;
          const double* b = cache->basis.data() + r * fin * w;
          const double* db = cache->dbasis.data() + r * fin * w;
          const std::uint32_t* f0 = cache->first.data() + r * fin;
          for (std::size_t j = 0; j < fout; ++j) {
            const double gv = g[r * fout + j];
            if (gv == 0.0) continue;
            const double* cj = cd + j * width;
            for (std::size_t i = 0; i < fin; ++i) {
              const std::size_t ji = j * fin + i;
              const std::size_t off = i * pc + f0[i];
              const double* bi = b + i * w;
              if (gb) gb[ji] += gv * a[i];
              if (gg) {
                double spline = 0.0;
                for (std::size_t q = 0; q < w; ++q) spline += cj[off + q] * bi[q];
                gg[ji] += gv * spline;
              }
              if (gc) {
                double* gcj = gc + j * width + off;
                const double s = gv * gd[ji];
                for (std::size_t q = 0; q < w; ++q) gcj[q] += s * bi[q];
              }
              if (gx) {
                const double* dbi = db + i * w;
                double ds = 0.0;
                for (std::size_t q = 0; q < w; ++q) ds += cj[off + q] * dbi[q];
                gx[r * fin + i] += gv * (bd[ji] * da[i] + gd[ji] * ds);
              }
            }
          }
        }
      });
}

Tensor scale_blocks_to_budget(Tape& tape, const Tensor& x, std::size_t block_rows,
                              double p_max) {
  if (block_rows == 0 || x.rows() % block_rows != 0) {
    throw DimensionError("scale_blocks_to_budget: " + x.shape().str() +
                         " is not a whole number of " + std::to_string(block_rows) +
                         "-row blocks");
  }
  if (!(p_max > 0.0)) throw ContractError("scale_blocks_to_budget: p_max must be positive");
  const std::size_t blocks = x.rows() / block_rows;
  const std::size_t len = block_rows * x.cols();
  auto power = std::make_shared<std::vector<double>>(blocks);
  std::vector<double> out(x.data().begin(), x.data().end());
  for (std::size_t b = 0; b < blocks; ++b) {
    double s = 0.0;
    for (std::size_t q = 0; q < len; ++q) s += out[b * len + q] * out[b * len + q];
    (*power)[b] = s;
    if (s > p_max) {
      const double f = std::sqrt(p_max / s);
      for (std::size_t q = 0; q < len; ++q) out[b * len + q] *= f;
    }
  }
  return tape.record(x.shape(), std::move(out), {x},
                     [blocks, len, p_max, power](const Node& o, Inputs in) {
                       auto gx = in[0]->ensure_grad();
                       const auto& xd = in[0]->data;
                       for (std::size_t b = 0; b < blocks; ++b) {
                         const double s = (*power)[b];
                         const std::size_t base = b * len;
                         if (s <= p_max) {
                           for (std::size_t q = 0; q < len; ++q) gx[base + q] += o.grad[base + q];
                           continue;
                         }
                         const double f = std::sqrt(p_max / s);
                         double gdotx = 0.0;
                         for (std::size_t q = 0; q < len; ++q)
                           gdotx += o.grad[base + q] * xd[base + q];
                         for (std::size_t q = 0; q < len; ++q)
                           gx[base + q] += f * o.grad[base + q] - f * gdotx / s * xd[base + q];
                       }
                     });
}

}  // namespace kfbf::ad
