#include "dclp/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dclp/error.hpp"

namespace dclp::ops {

namespace {

Graph& graph_of(const Var& v) {
    if (!v.valid()) throw ContractError("operation on an unbound Var");
    return *v.graph();
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + " expects a matrix, got " + shape_string(t.shape));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw ShapeError(std::string(op) + " operands " + shape_string(a.shape) + " and " + shape_string(b.shape));
    }
}

// C[m x n] += A[m x k] * B[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a[i * k + t];
            if (av == 0.0) continue;
            const double* brow = b + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m x k] += A[m x n] * B[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double* brow = b + t * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
            c[i * k + t] += acc;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = a[i * k + t];
            if (av == 0.0) continue;
            double* crow = c + t * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rank() != 2 || bv.rank() != 2 || av.shape[1] != bv.shape[0]) {
        throw ShapeError("matmul " + shape_string(av.shape) + " x " + shape_string(bv.shape));
    }
    const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
    Tensor out(Shape{m, n});
    gemm_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    return graph_of(a).record(std::move(out), {a, b},
                              [ia = a.id(), ib = b.id(), m, k, n](Graph& g, std::size_t self) {
                                  const auto& dc = g.grad(self);
                                  if (g.needs_grad(ia)) {
                                      gemm_nt(dc.data(), g.value(ib).data.data(), g.grad(ia).data(), m, n, k);
                                  }
                                  if (g.needs_grad(ib)) {
                                      gemm_tn(g.value(ia).data.data(), dc.data(), g.grad(ib).data(), m, k, n);
                                  }
                              });
}

Var transpose(Var a) {
    const Tensor& av = a.value();
    require_matrix(av, "transpose");
    const std::size_t m = av.shape[0], n = av.shape[1];
    Tensor out(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[j * m + i] = av.data[i * n + j];
    return graph_of(a).record(std::move(out), {a}, [ia = a.id(), m, n](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        auto& dx = g.grad(ia);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += dy[j * m + i];
    });
}

Var add(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape(av, bv, "add");
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] + bv.data[i];
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        for (std::size_t id : {ia, ib}) {
            if (!g.needs_grad(id)) continue;
            auto& dx = g.grad(id);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
    });
}

Var sub(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape(av, bv, "sub");
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] - bv.data[i];
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        if (g.needs_grad(ia)) {
            auto& dx = g.grad(ia);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
        if (g.needs_grad(ib)) {
            auto& dx = g.grad(ib);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] -= dy[i];
        }
    });
}

Var mul(Var a, Var b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_same_shape(av, bv, "mul");
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] * bv.data[i];
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id(), ib = b.id()](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        if (g.needs_grad(ia)) {
            const auto& bv = g.value(ib).data;
            auto& dx = g.grad(ia);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * bv[i];
        }
        if (g.needs_grad(ib)) {
            const auto& av = g.value(ia).data;
            auto& dx = g.grad(ib);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * av[i];
        }
    });
}

Var scale(Var a, double c) {
    const Tensor& av = a.value();
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] * c;
    return graph_of(a).record(std::move(out), {a}, [ia = a.id(), c](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        auto& dx = g.grad(ia);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += c * dy[i];
    });
}

Var scale_by(Var a, Var s) {
    const Tensor& av = a.value();
    if (s.size() != 1) throw ShapeError("scale_by expects a one-element scale, got " + shape_string(s.shape()));
    const double c = s.value().data[0];
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = av.data[i] * c;
    return graph_of(a).record(std::move(out), {a, s}, [ia = a.id(), is = s.id()](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        const double c = g.value(is).data[0];
        if (g.needs_grad(ia)) {
            auto& dx = g.grad(ia);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += c * dy[i];
        }
        if (g.needs_grad(is)) {
            const auto& av = g.value(ia).data;
            double acc = 0.0;
            for (std::size_t i = 0; i < dy.size(); ++i) acc += av[i] * dy[i];
            g.grad(is)[0] += acc;
        }
    });
}

Var exp(Var a) {
    const Tensor& av = a.value();
    Tensor out(av.shape);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = std::exp(av.data[i]);
    return graph_of(a).record(std::move(out), {a}, [ia = a.id()](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        const auto& y = g.value(self).data;
        auto& dx = g.grad(ia);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * y[i];
    });
}

Var add_row(Var x, Var b) {
    const Tensor& xv = x.value();
    const Tensor& bv = b.value();
    const std::size_t n = xv.cols();
    if (bv.size() != n) {
        throw ShapeError("add_row bias " + shape_string(bv.shape) + " for rows of " + shape_string(xv.shape));
    }
    const std::size_t m = xv.rows();
    Tensor out = Tensor(xv.shape, xv.data);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += bv.data[j];
    return graph_of(x).record(std::move(out), {x, b}, [ix = x.id(), ib = b.id(), m, n](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        if (g.needs_grad(ix)) {
            auto& dx = g.grad(ix);
            for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
        }
        if (g.needs_grad(ib)) {
            auto& db = g.grad(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) db[j] += dy[i * n + j];
        }
    });
}

Var affine(Var x, Var weight, Var bias) { return add_row(matmul(x, weight), bias); }

Var sum(Var a) {
    const Tensor& av = a.value();
    double acc = 0.0;
    for (double v : av.data) acc += v;
    return graph_of(a).record(Tensor::scalar(acc), {a}, [ia = a.id()](Graph& g, std::size_t self) {
        const double dy = g.grad(self)[0];
        for (double& d : g.grad(ia)) d += dy;
    });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Var softmax_rows(Var x) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = xv.data.data() + i * n;
        double* o = out.data.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (o[j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) o[j] /= z;
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id(), m, n](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        const auto& y = g.value(self).data;
        auto& dx = g.grad(ix);
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += y[i * n + j] * (dy[i * n + j] - dot);
        }
    });
}

Var cross_entropy_rows(Var logits, std::span<const std::size_t> targets) {
    const Tensor& xv = logits.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (targets.size() != m) {
        throw ShapeError("cross_entropy_rows: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(m) + " rows");
    }
    std::vector<double> probs(m * n);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        if (targets[i] >= n) throw ShapeError("cross_entropy_rows: target " + std::to_string(targets[i]) + " >= " +
                                              std::to_string(n));
        const double* row = xv.data.data() + i * n;
        const double mx = *std::max_element(row, row + n);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) z += (probs[i * n + j] = std::exp(row[j] - mx));
        for (std::size_t j = 0; j < n; ++j) probs[i * n + j] /= z;
        total += (std::log(z) + mx) - row[targets[i]];
    }
    std::vector<std::size_t> tgt(targets.begin(), targets.end());
    return graph_of(logits).record(
        Tensor::scalar(total / static_cast<double>(m)), {logits},
        [ix = logits.id(), m, n, probs = std::move(probs), tgt = std::move(tgt)](Graph& g, std::size_t self) {
            const double dy = g.grad(self)[0] / static_cast<double>(m);
            auto& dx = g.grad(ix);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += dy * probs[i * n + j];
                dx[i * n + tgt[i]] -= dy;
            }
        });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), d = xv.cols();
    if (gain.size() != d || bias.size() != d) {
        throw ShapeError("layer_norm gain/bias " + shape_string(gain.shape()) + "/" + shape_string(bias.shape()) +
                         " for rows of width " + std::to_string(d));
    }
    if (!(eps > 0.0)) throw ConfigError("layer_norm eps must be positive");
    const auto& gv = gain.value().data;
    const auto& bv = bias.value().data;
    std::vector<double> xhat(m * d);
    std::vector<double> inv_std(m);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = xv.data.data() + i * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += row[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<double>(d);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j) {
            xhat[i * d + j] = (row[j] - mu) * inv_std[i];
            out.data[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
        }
    }
    return graph_of(x).record(
        std::move(out), {x, gain, bias},
        [ix = x.id(), ig = gain.id(), ib = bias.id(), m, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            Graph& g, std::size_t self) {
            const auto& dy = g.grad(self);
            if (g.needs_grad(ig)) {
                auto& dg = g.grad(ig);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < d; ++j) dg[j] += dy[i * d + j] * xhat[i * d + j];
            }
            if (g.needs_grad(ib)) {
                auto& db = g.grad(ib);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < d; ++j) db[j] += dy[i * d + j];
            }
            if (g.needs_grad(ix)) {
                const auto& gv = g.value(ig).data;
                auto& dx = g.grad(ix);
                const double inv_d = 1.0 / static_cast<double>(d);
                for (std::size_t i = 0; i < m; ++i) {
                    double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = dy[i * d + j] * gv[j];
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat[i * d + j];
                    }
                    mean_dxhat *= inv_d;
                    mean_dxhat_xhat *= inv_d;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = dy[i * d + j] * gv[j];
                        dx[i * d + j] += inv_std[i] * (dxh - mean_dxhat - xhat[i * d + j] * mean_dxhat_xhat);
                    }
                }
            }
        });
}

Var gelu(Var x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = xv.data[i];
        out.data[i] = v * 0.5 * std::erfc(-v / std::numbers::sqrt2);
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id()](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        const auto& xv = g.value(ix).data;
        auto& dx = g.grad(ix);
        const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
        for (std::size_t i = 0; i < dy.size(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * std::erfc(-v / std::numbers::sqrt2);
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
            dx[i] += dy[i] * (cdf + v * pdf);
        }
    });
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;
    const Tensor& xv = x.value();
    const double keep_scale = 1.0 / (1.0 - rate);
    std::vector<double> mask(xv.size());
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
        out.data[i] = xv.data[i] * mask[i];
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id(), mask = std::move(mask)](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        auto& dx = g.grad(ix);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * mask[i];
    });
}

Var l2_normalize_rows(Var x) {
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    std::vector<double> norms(m);
    Tensor out(xv.shape);
    for (std::size_t i = 0; i < m; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < n; ++j) ss += xv.data[i * n + j] * xv.data[i * n + j];
        norms[i] = std::sqrt(ss);
        if (!(norms[i] >= kMinNorm)) {
            throw DegenerateVectorError("row " + std::to_string(i) + " has norm " + std::to_string(norms[i]));
        }
        for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] = xv.data[i * n + j] / norms[i];
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id(), m, n, norms = std::move(norms)](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        const auto& y = g.value(self).data;
        auto& dx = g.grad(ix);
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += y[i * n + j] * dy[i * n + j];
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += (dy[i * n + j] - y[i * n + j] * dot) / norms[i];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows of nothing");
    const std::size_t n = parts.front().cols();
    std::size_t total = 0;
    for (const Var& p : parts) {
        if (p.cols() != n) throw ShapeError("concat_rows width mismatch: " + shape_string(p.shape()));
        total += p.rows();
    }
    Tensor out(Shape{total, n});
    std::vector<std::size_t> ids, offsets;
    std::size_t offset = 0;
    for (const Var& p : parts) {
        const auto& d = p.value().data;
        std::copy(d.begin(), d.end(), out.data.begin() + static_cast<std::ptrdiff_t>(offset));
        ids.push_back(p.id());
        offsets.push_back(offset);
        offset += d.size();
    }
    return graph_of(parts.front())
        .record(std::move(out), parts, [ids = std::move(ids), offsets = std::move(offsets)](Graph& g, std::size_t self) {
            const auto& dy = g.grad(self);
            for (std::size_t p = 0; p < ids.size(); ++p) {
                if (!g.needs_grad(ids[p])) continue;
                auto& dx = g.grad(ids[p]);
                for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dy[offsets[p] + i];
            }
        });
}

Var concat_cols(Var a, Var b) {
    const std::size_t m = a.rows();
    if (b.rows() != m) throw ShapeError("concat_cols " + shape_string(a.shape()) + " | " + shape_string(b.shape()));
    const std::size_t na = a.cols(), nb = b.cols();
    const auto& av = a.value().data;
    const auto& bv = b.value().data;
    Tensor out(Shape{m, na + nb});
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(i * na), na, out.data.begin() + static_cast<std::ptrdiff_t>(i * (na + nb)));
        std::copy_n(bv.begin() + static_cast<std::ptrdiff_t>(i * nb), nb,
                    out.data.begin() + static_cast<std::ptrdiff_t>(i * (na + nb) + na));
    }
    return graph_of(a).record(std::move(out), {a, b}, [ia = a.id(), ib = b.id(), m, na, nb](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        const std::size_t w = na + nb;
        if (g.needs_grad(ia)) {
            auto& dx = g.grad(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < na; ++j) dx[i * na + j] += dy[i * w + j];
        }
        if (g.needs_grad(ib)) {
            auto& dx = g.grad(ib);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < nb; ++j) dx[i * nb + j] += dy[i * w + na + j];
        }
    });
}

Var slice_rows(Var x, std::size_t start, std::size_t count) {
    const std::size_t m = x.rows(), n = x.cols();
    if (count == 0 || start + count > m) {
        throw ShapeError("slice_rows [" + std::to_string(start) + ", +" + std::to_string(count) + ") of " +
                         shape_string(x.shape()));
    }
    const auto& xv = x.value().data;
    Tensor out(Shape{count, n});
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(start * n), count * n, out.data.begin());
    return graph_of(x).record(std::move(out), {x}, [ix = x.id(), start, n](Graph& g, std::size_t self) {
        const auto& dy = g.grad(self);
        auto& dx = g.grad(ix);
        for (std::size_t i = 0; i < dy.size(); ++i) dx[start * n + i] += dy[i];
    });
}

Var mean_rows(Var x, std::size_t count) {
    const std::size_t m = x.rows(), n = x.cols();
    if (count > m) throw ShapeError("mean_rows over " + std::to_string(count) + " of " + std::to_string(m) + " rows");
    const auto& xv = x.value().data;
    Tensor out(Shape{1, n});
    if (count > 0) {
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < n; ++j) out.data[j] += xv[i * n + j];
        for (double& v : out.data) v /= static_cast<double>(count);
    }
    return graph_of(x).record(std::move(out), {x}, [ix = x.id(), count, n](Graph& g, std::size_t self) {
        if (count == 0) return;
        const auto& dy = g.grad(self);
        auto& dx = g.grad(ix);
        const double w = 1.0 / static_cast<double>(count);
        for (std::size_t i = 0; i < count; ++i)
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += w * dy[j];
    });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
    const std::size_t v = table.rows(), n = table.cols();
    const auto& tv = table.value().data;
    Tensor out(Shape{ids.size(), n});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] >= v) throw ShapeError("gather_rows id " + std::to_string(ids[i]) + " >= " + std::to_string(v));
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(ids[i] * n), n, out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    std::vector<std::size_t> rows(ids.begin(), ids.end());
    return graph_of(table).record(std::move(out), {table},
                                  [it = table.id(), n, rows = std::move(rows)](Graph& g, std::size_t self) {
                                      const auto& dy = g.grad(self);
                                      auto& dt = g.grad(it);
                                      for (std::size_t i = 0; i < rows.size(); ++i)
                                          for (std::size_t j = 0; j < n; ++j) dt[rows[i] * n + j] += dy[i * n + j];
                                  });
}

Var relative_bias(Var table, std::size_t seq_len, std::size_t max_distance) {
    if (max_distance < 1) throw ConfigError("max_relative_distance must be >= 1");
    const std::size_t heads = table.rows(), width = table.cols();
    if (width != 2 * max_distance + 1) {
        throw ShapeError("relative bias table " + shape_string(table.shape()) + " for distance " +
                         std::to_string(max_distance));
    }
    const auto k = static_cast<std::ptrdiff_t>(max_distance);
    std::vector<std::size_t> index(seq_len * seq_len);
    for (std::size_t i = 0; i < seq_len; ++i) {
        for (std::size_t j = 0; j < seq_len; ++j) {
            const std::ptrdiff_t rel = std::clamp(static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(i), -k, k);
            index[i * seq_len + j] = static_cast<std::size_t>(rel + k);
        }
    }
    const auto& tv = table.value().data;
    const std::size_t ll = seq_len * seq_len;
    Tensor out(Shape{heads, ll});
    for (std::size_t h = 0; h < heads; ++h)
        for (std::size_t p = 0; p < ll; ++p) out.data[h * ll + p] = tv[h * width + index[p]];
    return graph_of(table).record(std::move(out), {table},
                                  [it = table.id(), heads, width, ll, index = std::move(index)](Graph& g, std::size_t self) {
                                      const auto& dy = g.grad(self);
                                      auto& dt = g.grad(it);
                                      for (std::size_t h = 0; h < heads; ++h)
                                          for (std::size_t p = 0; p < ll; ++p) dt[h * width + index[p]] += dy[h * ll + p];
                                  });
}

Tensor attention_probabilities(const Tensor& q, const Tensor& k, const Tensor* bias, std::size_t heads,
                               std::size_t valid_len) {
    require_matrix(q, "attention");
    require_same_shape(q, k, "attention");
    const std::size_t len = q.shape[0], d = q.shape[1];
    if (heads == 0 || d % heads != 0) {
        throw ShapeError("attention width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    }
    if (valid_len > len) throw ShapeError("attention valid length exceeds sequence length");
    if (bias && bias->size() != heads * len * len) {
        throw ShapeError("attention bias " + shape_string(bias->shape) + " for " + std::to_string(heads) + " heads, L=" +
                         std::to_string(len));
    }
    const std::size_t dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor probs(Shape{heads, len * len});
    if (valid_len == 0) return probs;
    std::vector<double> logits(valid_len);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < len; ++i) {
            const double* qi = q.data.data() + i * d + h * dh;
            for (std::size_t j = 0; j < valid_len; ++j) {
                const double* kj = k.data.data() + j * d + h * dh;
                double s = 0.0;
                for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
                logits[j] = s * scale + (bias ? bias->data[h * len * len + i * len + j] : 0.0);
            }
            const double mx = *std::max_element(logits.begin(), logits.end());
            double z = 0.0;
            double* p = probs.data.data() + h * len * len + i * len;
            for (std::size_t j = 0; j < valid_len; ++j) z += (p[j] = std::exp(logits[j] - mx));
            for (std::size_t j = 0; j < valid_len; ++j) p[j] /= z;
        }
    }
    return probs;
}

Var attention(Var q, Var k, Var v, std::size_t heads, std::optional<Var> bias, std::size_t valid_len) {
    const Tensor& qv = q.value();
    require_same_shape(qv, v.value(), "attention");
    Tensor probs = attention_probabilities(qv, k.value(), bias ? &bias->value() : nullptr, heads, valid_len);
    const std::size_t len = qv.shape[0], d = qv.shape[1], dh = d / heads;
    const auto& vv = v.value().data;
    Tensor out(qv.shape);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < len; ++i) {
            const double* p = probs.data.data() + h * len * len + i * len;
            double* o = out.data.data() + i * d + h * dh;
            for (std::size_t j = 0; j < valid_len; ++j) {
                const double* vj = vv.data() + j * d + h * dh;
                for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * vj[c];
            }
        }
    }
    std::vector<Var> inputs{q, k, v};
    if (bias) inputs.push_back(*bias);
    const std::size_t ib = bias ? bias->id() : 0;
    const bool has_bias = bias.has_value();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    return graph_of(q).record(
        std::move(out), inputs,
        [iq = q.id(), ik = k.id(), iv = v.id(), ib, has_bias, heads, len, d, dh, valid_len, scale,
         probs = std::move(probs.data)](Graph& g, std::size_t self) {
            const auto& dout = g.grad(self);
            const auto& qv = g.value(iq).data;
            const auto& kv = g.value(ik).data;
            const auto& vv = g.value(iv).data;
            std::vector<double>* dq = g.needs_grad(iq) ? &g.grad(iq) : nullptr;
            std::vector<double>* dk = g.needs_grad(ik) ? &g.grad(ik) : nullptr;
            std::vector<double>* dv = g.needs_grad(iv) ? &g.grad(iv) : nullptr;
            std::vector<double>* dbias = has_bias && g.needs_grad(ib) ? &g.grad(ib) : nullptr;
            std::vector<double> dp(valid_len), ds(valid_len);
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t i = 0; i < len; ++i) {
                    const double* p = probs.data() + h * len * len + i * len;
                    const double* doi = dout.data() + i * d + h * dh;
                    double weighted = 0.0;
                    for (std::size_t j = 0; j < valid_len; ++j) {
                        const double* vj = vv.data() + j * d + h * dh;
                        double acc = 0.0;
                        for (std::size_t c = 0; c < dh; ++c) acc += doi[c] * vj[c];
                        dp[j] = acc;
                        weighted += acc * p[j];
                        if (dv) {
                            double* dvj = dv->data() + j * d + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) dvj[c] += p[j] * doi[c];
                        }
                    }
                    for (std::size_t j = 0; j < valid_len; ++j) ds[j] = p[j] * (dp[j] - weighted);
                    if (dbias) {
                        double* db = dbias->data() + h * len * len + i * len;
                        for (std::size_t j = 0; j < valid_len; ++j) db[j] += ds[j];
                    }
                    const double* qi = qv.data() + i * d + h * dh;
                    for (std::size_t j = 0; j < valid_len; ++j) {
                        const double s = ds[j] * scale;
                        if (s == 0.0) continue;
                        const double* kj = kv.data() + j * d + h * dh;
                        if (dq) {
                            double* dqi = dq->data() + i * d + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) dqi[c] += s * kj[c];
                        }
                        if (dk) {
                            double* dkj = dk->data() + j * d + h * dh;
                            for (std::size_t c = 0; c < dh; ++c) dkj[c] += s * qi[c];
                        }
                    }
                }
            }
        });
}

}  // namespace dclp::ops
