#include "lsa/autograd.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

namespace lsa::ad {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;


Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> fn) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool req = false;
    for (const auto& p : parents) req = req || (p && p->requires_grad);
    if (req) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(fn);
    }
    return n;
}

void check_rank(const Var& x, std::size_t r, const char* op) {
    if (x->value.rank() != r) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(r) + ", got " + shape_str(x->value.shape()));
    }
}

struct ConvGeom {
    std::size_t B, Cin, H, W, Cout, k, Ho, Wo;
    int stride, pad;
};

void im2col(const double* img, const ConvGeom& g, double* col) {
    const std::size_t hw = g.Ho * g.Wo;
    for (std::size_t c = 0; c < g.Cin; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                double* row = col + ((c * g.k + ky) * g.k + kx) * hw;
                for (std::size_t oy = 0; oy < g.Ho; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
                    for (std::size_t ox = 0; ox < g.Wo; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
                        const bool in = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.H) && ix < static_cast<long>(g.W);
                        row[oy * g.Wo + ox] = in ? img[(c * g.H + static_cast<std::size_t>(iy)) * g.W + static_cast<std::size_t>(ix)] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_add(const double* col, const ConvGeom& g, double* img) {
    const std::size_t hw = g.Ho * g.Wo;
    for (std::size_t c = 0; c < g.Cin; ++c) {
        for (std::size_t ky = 0; ky < g.k; ++ky) {
            for (std::size_t kx = 0; kx < g.k; ++kx) {
                const double* row = col + ((c * g.k + ky) * g.k + kx) * hw;
                for (std::size_t oy = 0; oy < g.Ho; ++oy) {
                    const long iy = static_cast<long>(oy) * g.stride - g.pad + static_cast<long>(ky);
                    if (iy < 0 || iy >= static_cast<long>(g.H)) continue;
                    for (std::size_t ox = 0; ox < g.Wo; ++ox) {
                        const long ix = static_cast<long>(ox) * g.stride - g.pad + static_cast<long>(kx);
                        if (ix < 0 || ix >= static_cast<long>(g.W)) continue;
                        img[(c * g.H + static_cast<std::size_t>(iy)) * g.W + static_cast<std::size_t>(ix)] += row[oy * g.Wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

void Node::accumulate(const Tensor& g) {
    if (grad.empty()) {
        grad = g;
    } else {
        grad += g;
    }
}

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor::zeros_like(value);
    return grad;
}

Var constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    return n;
}

Var leaf(Tensor t, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->requires_grad = requires_grad;
    return n;
}

void backward(const Var& root) {
    if (root->value.numel() != 1) throw ShapeError("backward: root must be scalar, got " + shape_str(root->value.shape()));
    if (!root->requires_grad) return;

    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    // iterative post-order DFS
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx++].get();
            if (p && p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->accumulate(Tensor(root->value.shape(), 1.0));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "add");
    return make_node(a->value + b->value, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) b->accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "sub");
    return make_node(a->value - b->value, {a, b}, [a, b](Node& n) {
        if (a->requires_grad) a->accumulate(n.grad);
        if (b->requires_grad) b->accumulate(n.grad * -1.0);
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad) {
            Tensor& g = a->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            Tensor& g = b->grad_buffer();
            for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * a->value[i];
        }
    });
}

Var scale(const Var& a, double s) {
    return make_node(a->value * s, {a}, [a, s](Node& n) { a->grad_buffer().add_scaled(n.grad, s); });
}

Var axpby(double sa, const Var& a, double sb, const Var& b) {
    require_same_shape(a->value, b->value, "axpby");
    Tensor out = a->value * sa;
    out.add_scaled(b->value, sb);
    return make_node(std::move(out), {a, b}, [sa, a, sb, b](Node& n) {
        if (a->requires_grad) a->grad_buffer().add_scaled(n.grad, sa);
        if (b->requires_grad) b->grad_buffer().add_scaled(n.grad, sb);
    });
}

Var silu(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.values()) v = v / (1.0 + std::exp(-v));
    return make_node(std::move(out), {x}, [x](Node& n) {
        Tensor& g = x->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double v = x->value[i];
            const double s = 1.0 / (1.0 + std::exp(-v));
            g[i] += n.grad[i] * s * (1.0 + v * (1.0 - s));
        }
    });
}

Var tanh(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.values()) v = std::tanh(v);
    return make_node(out, {x}, [x](Node& n) {
        Tensor& g = x->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double t = n.value[i];
            g[i] += n.grad[i] * (1.0 - t * t);
        }
    });
}

Var sigmoid(const Var& x) {
    Tensor out = x->value;
    for (auto& v : out.values()) v = 1.0 / (1.0 + std::exp(-v));
    return make_node(std::move(out), {x}, [x](Node& n) {
        Tensor& g = x->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) {
            const double s = n.value[i];
            g[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    check_rank(x, 4, "conv2d input");
    check_rank(w, 4, "conv2d weight");
    const auto& xs = x->value.shape();
    const auto& ws = w->value.shape();
    if (ws[1] != xs[1] || ws[2] != ws[3]) {
        throw ShapeError("conv2d: weight " + shape_str(ws) + " incompatible with input " + shape_str(xs));
    }
    if (b && (b->value.rank() != 1 || b->value.dim(0) != ws[0])) throw ShapeError("conv2d: bad bias shape");
    ConvGeom g{};
    g.B = xs[0];
    g.Cin = xs[1];
    g.H = xs[2];
    g.W = xs[3];
    g.Cout = ws[0];
    g.k = ws[2];
    g.stride = stride;
    g.pad = pad;
    const long ho = (static_cast<long>(g.H) + 2 * pad - static_cast<long>(g.k)) / stride + 1;
    const long wo = (static_cast<long>(g.W) + 2 * pad - static_cast<long>(g.k)) / stride + 1;
    if (ho <= 0 || wo <= 0) throw ShapeError("conv2d: empty output");
    g.Ho = static_cast<std::size_t>(ho);
    g.Wo = static_cast<std::size_t>(wo);

    const std::size_t K = g.Cin * g.k * g.k;
    const std::size_t hw = g.Ho * g.Wo;
    Tensor out({g.B, g.Cout, g.Ho, g.Wo});
    std::vector<double> col(K * hw);
    CMapMat wm(w->value.data(), static_cast<long>(g.Cout), static_cast<long>(K));
    for (std::size_t bi = 0; bi < g.B; ++bi) {
        im2col(x->value.data() + bi * g.Cin * g.H * g.W, g, col.data());
        MapMat om(out.data() + bi * g.Cout * hw, static_cast<long>(g.Cout), static_cast<long>(hw));
        om.noalias() = wm * CMapMat(col.data(), static_cast<long>(K), static_cast<long>(hw));
        if (b) {
            for (std::size_t c = 0; c < g.Cout; ++c) om.row(static_cast<long>(c)).array() += b->value[c];
        }
    }
    return make_node(std::move(out), {x, w, b}, [x, w, b, g, K, hw](Node& n) {
        std::vector<double> col(K * hw);
        CMapMat wm(w->value.data(), static_cast<long>(g.Cout), static_cast<long>(K));
        double* gx = x->requires_grad ? x->grad_buffer().data() : nullptr;
        double* gw = w->requires_grad ? w->grad_buffer().data() : nullptr;
        double* gb = (b && b->requires_grad) ? b->grad_buffer().data() : nullptr;
        for (std::size_t bi = 0; bi < g.B; ++bi) {
            CMapMat go(n.grad.data() + bi * g.Cout * hw, static_cast<long>(g.Cout), static_cast<long>(hw));
            if (gw) {
                im2col(x->value.data() + bi * g.Cin * g.H * g.W, g, col.data());
                MapMat(gw, static_cast<long>(g.Cout), static_cast<long>(K)).noalias() +=
                    go * CMapMat(col.data(), static_cast<long>(K), static_cast<long>(hw)).transpose();
            }
            if (gb) {
                for (std::size_t c = 0; c < g.Cout; ++c) gb[c] += go.row(static_cast<long>(c)).sum();
            }
            if (gx) {
                MapMat cm(col.data(), static_cast<long>(K), static_cast<long>(hw));
                cm.noalias() = wm.transpose() * go;
                col2im_add(col.data(), g, gx + bi * g.Cin * g.H * g.W);
            }
        }
    });
}

Var upsample2x(const Var& x) {
    check_rank(x, 4, "upsample2x");
    const auto s = x->value.shape();
    const std::size_t planes = s[0] * s[1], H = s[2], W = s[3];
    Tensor out({s[0], s[1], 2 * H, 2 * W});
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = x->value.data() + p * H * W;
        double* dst = out.data() + p * 4 * H * W;
        for (std::size_t y = 0; y < 2 * H; ++y)
            for (std::size_t xx = 0; xx < 2 * W; ++xx) dst[y * 2 * W + xx] = src[(y / 2) * W + xx / 2];
    }
    return make_node(std::move(out), {x}, [x, planes, H, W](Node& n) {
        double* g = x->grad_buffer().data();
        for (std::size_t p = 0; p < planes; ++p) {
            const double* src = n.grad.data() + p * 4 * H * W;
            double* dst = g + p * H * W;
            for (std::size_t y = 0; y < 2 * H; ++y)
                for (std::size_t xx = 0; xx < 2 * W; ++xx) dst[(y / 2) * W + xx / 2] += src[y * 2 * W + xx];
        }
    });
}

Var concat_channels(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_channels: no inputs");
    const auto s0 = xs[0]->value.shape();
    if (s0.size() != 4) throw ShapeError("concat_channels: expected rank 4");
    std::size_t C = 0;
    for (const auto& v : xs) {
        const auto& s = v->value.shape();
        if (s.size() != 4 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3]) {
            throw ShapeError("concat_channels: incompatible " + shape_str(s) + " vs " + shape_str(s0));
        }
        C += s[1];
    }
    const std::size_t B = s0[0], plane = s0[2] * s0[3];
    Tensor out({B, C, s0[2], s0[3]});
    std::size_t coff = 0;
    for (const auto& v : xs) {
        const std::size_t ci = v->value.dim(1);
        for (std::size_t b = 0; b < B; ++b) {
            std::copy_n(v->value.data() + b * ci * plane, ci * plane, out.data() + (b * C + coff) * plane);
        }
        coff += ci;
    }
    return make_node(std::move(out), xs, [xs, B, C, plane](Node& n) {
        std::size_t off = 0;
        for (const auto& v : xs) {
            const std::size_t ci = v->value.dim(1);
            if (v->requires_grad) {
                double* g = v->grad_buffer().data();
                for (std::size_t b = 0; b < B; ++b) {
                    const double* src = n.grad.data() + (b * C + off) * plane;
                    for (std::size_t i = 0; i < ci * plane; ++i) g[b * ci * plane + i] += src[i];
                }
            }
            off += ci;
        }
    });
}

Var film(const Var& x, const Var& gamma, const Var& beta) {
    check_rank(x, 4, "film");
    const auto& s = x->value.shape();
    const std::size_t B = s[0], C = s[1], plane = s[2] * s[3];
    if (gamma->value.numel() != C || beta->value.numel() != C) throw ShapeError("film: modulation size must equal channels");
    Tensor out = x->value;
    for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
            const double sc = 1.0 + gamma->value[c], sh = beta->value[c];
            double* p = out.data() + (b * C + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) p[i] = p[i] * sc + sh;
        }
    return make_node(std::move(out), {x, gamma, beta}, [x, gamma, beta, B, C, plane](Node& n) {
        double* gx = x->requires_grad ? x->grad_buffer().data() : nullptr;
        double* gg = gamma->requires_grad ? gamma->grad_buffer().data() : nullptr;
        double* gb = beta->requires_grad ? beta->grad_buffer().data() : nullptr;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t c = 0; c < C; ++c) {
                const double sc = 1.0 + gamma->value[c];
                const double* go = n.grad.data() + (b * C + c) * plane;
                const double* xv = x->value.data() + (b * C + c) * plane;
                double sg = 0.0, sx = 0.0;
                for (std::size_t i = 0; i < plane; ++i) {
                    sg += go[i];
                    sx += go[i] * xv[i];
                    if (gx) gx[(b * C + c) * plane + i] += go[i] * sc;
                }
                if (gg) gg[c] += sx;
                if (gb) gb[c] += sg;
            }
    });
}

Var temporal_conv(const Var& x, const Var& w) {
    check_rank(x, 4, "temporal_conv");
    check_rank(w, 2, "temporal_conv weight");
    const auto& s = x->value.shape();
    const std::size_t N = s[0], C = s[1], plane = s[2] * s[3], K = w->value.dim(1);
    if (w->value.dim(0) != C || K % 2 == 0) throw ShapeError("temporal_conv: weight must be [C, odd K]");
    const long half = static_cast<long>(K / 2);
    Tensor out(s);
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k) {
            const long m = static_cast<long>(n) + static_cast<long>(k) - half;
            if (m < 0 || m >= static_cast<long>(N)) continue;
            for (std::size_t c = 0; c < C; ++c) {
                const double wk = w->value[c * K + k];
                const double* src = x->value.data() + (static_cast<std::size_t>(m) * C + c) * plane;
                double* dst = out.data() + (n * C + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) dst[i] += wk * src[i];
            }
        }
    return make_node(std::move(out), {x, w}, [x, w, N, C, plane, K, half](Node& n) {
        double* gx = x->requires_grad ? x->grad_buffer().data() : nullptr;
        double* gw = w->requires_grad ? w->grad_buffer().data() : nullptr;
        for (std::size_t t = 0; t < N; ++t)
            for (std::size_t k = 0; k < K; ++k) {
                const long m = static_cast<long>(t) + static_cast<long>(k) - half;
                if (m < 0 || m >= static_cast<long>(N)) continue;
                for (std::size_t c = 0; c < C; ++c) {
                    const double* go = n.grad.data() + (t * C + c) * plane;
                    const double* xv = x->value.data() + (static_cast<std::size_t>(m) * C + c) * plane;
                    const double wk = w->value[c * K + k];
                    double acc = 0.0;
                    for (std::size_t i = 0; i < plane; ++i) {
                        acc += go[i] * xv[i];
                        if (gx) gx[(static_cast<std::size_t>(m) * C + c) * plane + i] += wk * go[i];
                    }
                    if (gw) gw[c * K + k] += acc;
                }
            }
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    check_rank(x, 2, "linear input");
    check_rank(w, 2, "linear weight");
    const std::size_t M = x->value.dim(0), in = x->value.dim(1), outd = w->value.dim(0);
    if (w->value.dim(1) != in) throw ShapeError("linear: weight " + shape_str(w->value.shape()) + " vs input " + shape_str(x->value.shape()));
    if (b && b->value.numel() != outd) throw ShapeError("linear: bad bias size");
    Tensor out({M, outd});
    MapMat om(out.data(), static_cast<long>(M), static_cast<long>(outd));
    om.noalias() = CMapMat(x->value.data(), static_cast<long>(M), static_cast<long>(in)) *
                   CMapMat(w->value.data(), static_cast<long>(outd), static_cast<long>(in)).transpose();
    if (b) {
        for (std::size_t r = 0; r < M; ++r)
            for (std::size_t c = 0; c < outd; ++c) out[r * outd + c] += b->value[c];
    }
    return make_node(std::move(out), {x, w, b}, [x, w, b, M, in, outd](Node& n) {
        CMapMat go(n.grad.data(), static_cast<long>(M), static_cast<long>(outd));
        if (x->requires_grad) {
            MapMat(x->grad_buffer().data(), static_cast<long>(M), static_cast<long>(in)).noalias() +=
                go * CMapMat(w->value.data(), static_cast<long>(outd), static_cast<long>(in));
        }
        if (w->requires_grad) {
            MapMat(w->grad_buffer().data(), static_cast<long>(outd), static_cast<long>(in)).noalias() +=
                go.transpose() * CMapMat(x->value.data(), static_cast<long>(M), static_cast<long>(in));
        }
        if (b && b->requires_grad) {
            double* gb = b->grad_buffer().data();
            for (std::size_t r = 0; r < M; ++r)
                for (std::size_t c = 0; c < outd; ++c) gb[c] += n.grad[r * outd + c];
        }
    });
}

Var patchify(const Var& x, std::size_t p) {
    check_rank(x, 4, "patchify");
    const auto& s = x->value.shape();
    const std::size_t N = s[0], C = s[1], H = s[2], W = s[3];
    if (p == 0 || H % p || W % p) throw ShapeError("patchify: patch size must divide frame dims " + shape_str(s));
    const std::size_t gh = H / p, gw = W / p, D = C * p * p;
    Tensor out({N * gh * gw, D});
    auto index = [=](std::size_t n, std::size_t u, std::size_t v, std::size_t c, std::size_t dy, std::size_t dx) {
        return std::pair{((n * gh + u) * gw + v) * D + (c * p + dy) * p + dx, ((n * C + c) * H + u * p + dy) * W + v * p + dx};
    };
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t u = 0; u < gh; ++u)
            for (std::size_t v = 0; v < gw; ++v)
                for (std::size_t c = 0; c < C; ++c)
                    for (std::size_t dy = 0; dy < p; ++dy)
                        for (std::size_t dx = 0; dx < p; ++dx) {
                            auto [o, i] = index(n, u, v, c, dy, dx);
                            out[o] = x->value[i];
                        }
    return make_node(std::move(out), {x}, [x, N, gh, gw, C, p, index](Node& n) {
        Tensor& g = x->grad_buffer();
        for (std::size_t f = 0; f < N; ++f)
            for (std::size_t u = 0; u < gh; ++u)
                for (std::size_t v = 0; v < gw; ++v)
                    for (std::size_t c = 0; c < C; ++c)
                        for (std::size_t dy = 0; dy < p; ++dy)
                            for (std::size_t dx = 0; dx < p; ++dx) {
                                auto [o, i] = index(f, u, v, c, dy, dx);
                                g[i] += n.grad[o];
                            }
    });
}

Var reshape(const Var& x, Shape shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make_node(std::move(out), {x}, [x](Node& n) {
        Tensor& g = x->grad_buffer();
        for (std::size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var mean_rows(const Var& x) {
    check_rank(x, 2, "mean_rows");
    const std::size_t M = x->value.dim(0), D = x->value.dim(1);
    Tensor out({D});
    for (std::size_t r = 0; r < M; ++r)
        for (std::size_t c = 0; c < D; ++c) out[c] += x->value[r * D + c];
    out *= 1.0 / static_cast<double>(M);
    return make_node(std::move(out), {x}, [x, M, D](Node& n) {
        Tensor& g = x->grad_buffer();
        const double s = 1.0 / static_cast<double>(M);
        for (std::size_t r = 0; r < M; ++r)
            for (std::size_t c = 0; c < D; ++c) g[r * D + c] += n.grad[c] * s;
    });
}

Var weighted_sq_mean(const Var& a, const Tensor& target, const Tensor& weights) {
    require_same_shape(a->value, target, "weighted_sq_mean target");
    require_same_shape(a->value, weights, "weighted_sq_mean weights");
    const std::size_t M = a->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const double d = a->value[i] - target[i];
        acc += weights[i] * d * d;
    }
    return make_node(Tensor({1}, acc / static_cast<double>(M)), {a}, [a, target, weights, M](Node& n) {
        Tensor& g = a->grad_buffer();
        const double s = 2.0 * n.grad[0] / static_cast<double>(M);
        for (std::size_t i = 0; i < M; ++i) g[i] += s * weights[i] * (a->value[i] - target[i]);
    });
}

Var sq_mean(const Var& a, const Tensor& target) {
    require_same_shape(a->value, target, "sq_mean");
    const std::size_t M = a->value.numel();
    double acc = 0.0;
    for (std::size_t i = 0; i < M; ++i) {
        const double d = a->value[i] - target[i];
        acc += d * d;
    }
    return make_node(Tensor({1}, acc / static_cast<double>(M)), {a}, [a, target, M](Node& n) {
        Tensor& g = a->grad_buffer();
        const double s = 2.0 * n.grad[0] / static_cast<double>(M);
        for (std::size_t i = 0; i < M; ++i) g[i] += s * (a->value[i] - target[i]);
    });
}

Var combine(const std::vector<Var>& terms, const std::vector<double>& coeffs) {
    if (terms.size() != coeffs.size()) throw ShapeError("combine: terms/coeffs length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < terms.size(); ++i) {
        if (terms[i]->value.numel() != 1) throw ShapeError("combine: terms must be scalars");
        acc += coeffs[i] * terms[i]->value[0];
    }
    return make_node(Tensor({1}, acc), terms, [terms, coeffs](Node& n) {
        for (std::size_t i = 0; i < terms.size(); ++i) {
            if (terms[i]->requires_grad) terms[i]->accumulate(Tensor({1}, coeffs[i] * n.grad[0]));
        }
    });
}

}  // namespace lsa::ad
