#include "nexus/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <thread>

namespace nexus {

int thread_count() {
    static const int cached = [] {
        const char* env = std::getenv("NEXUS_THREADS");
        if (env == nullptr) return 1;
        const long v = std::strtol(env, nullptr, 10);
        return static_cast<int>(std::clamp(v, 1L, 64L));
    }();
    return cached;
}

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

// Splits [0, n) into contiguous chunks, one per worker. Output rows are
// disjoint, so results do not depend on the thread count.
template <typename F>
void parallel_rows(std::size_t n, std::size_t min_chunk, F body) {
    const int t = thread_count();
    if (t <= 1 || n < 2 * min_chunk) {
        body(std::size_t{0}, n);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(t, std::max<std::size_t>(1, n / min_chunk));
    std::vector<std::thread> pool;
    pool.reserve(workers);
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t b = w * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b >= e) break;
        pool.emplace_back([=, &body] { body(b, e); });
    }
    for (auto& th : pool) th.join();
}

void check_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + t.shape_str());
    }
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(op) + ": shapes disagree, lhs " + a.shape_str() + " rhs " +
                         b.shape_str());
    }
}

}  // namespace

namespace kernels {

void mm_nn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    parallel_rows(m, 64, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            double* orow = op + i * n;
            if (!accumulate) std::memset(orow, 0, n * sizeof(double));
            const double* arow = ap + i * k;
            for (std::size_t kk = 0; kk < k; ++kk) {
                const double av = arow[kk];
                if (av == 0.0) continue;
                const double* brow = bp + kk * n;
                for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
            }
        }
    });
}

void mm_nt(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    parallel_rows(m, 64, [&](std::size_t i0, std::size_t i1) {
        for (std::size_t i = i0; i < i1; ++i) {
            const double* arow = ap + i * k;
            double* orow = op + i * n;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = bp + j * k;
                double s = 0.0;
                for (std::size_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
                orow[j] = accumulate ? orow[j] + s : s;
            }
        }
    });
}

void mm_tn(Tensor& out, const Tensor& a, const Tensor& b, bool accumulate) {
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    const double* ap = a.data();
    const double* bp = b.data();
    double* op = out.data();
    if (!accumulate) std::memset(op, 0, k * n * sizeof(double));
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = ap + i * k;
        const double* brow = bp + i * n;
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            if (av == 0.0) continue;
            double* orow = op + kk * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
}

}  // namespace kernels

Var Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> backprop) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = needs_grad;
    if (needs_grad) node.backprop = std::move(backprop);
    nodes_.push_back(std::move(node));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buffer(std::uint32_t i) {
    Node& node = nodes_[i];
    if (node.grad.empty()) node.grad = Tensor::zeros(node.value.shape());
    return node.grad;
}

const Tensor& Tape::grad(Var v) { return grad_buffer(v.index); }

Var Tape::leaf(Tensor value) { return push(std::move(value), true, {}); }

Var Tape::constant(Tensor value) { return push(std::move(value), false, {}); }

void Tape::backward(Var root) {
    const Tensor& r = value(root);
    if (r.size() != 1) throw ShapeError("backward: root must be scalar, got " + r.shape_str());
    r.assert_finite("backward root");
    for (Node& node : nodes_) node.grad = Tensor();
    grad_buffer(root.index).fill(1.0);
    for (std::uint32_t i = root.index + 1; i-- > 0;) {
        Node& node = nodes_[i];
        if (node.backprop && !node.grad.empty()) node.backprop(*this);
    }
}

Var Tape::matmul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_2d(av, "matmul");
    check_2d(bv, "matmul");
    if (av.cols() != bv.rows()) {
        throw ShapeError("matmul: inner dimensions disagree, lhs " + av.shape_str() + " rhs " +
                         bv.shape_str());
    }
    Tensor out = Tensor::zeros({av.rows(), bv.cols()});
    kernels::mm_nn(out, av, bv, false);
    const std::uint32_t ai = a.index, bi = b.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(b), [ai, bi, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        // dA = G . B^T, dB = A^T . G
        if (t.nodes_[ai].needs_grad) kernels::mm_nt(t.grad_buffer(ai), g, t.nodes_[bi].value, true);
        if (t.nodes_[bi].needs_grad) kernels::mm_tn(t.grad_buffer(bi), t.nodes_[ai].value, g, true);
    });
}

Var Tape::transpose(Var a) {
    const Tensor& av = value(a);
    check_2d(av, "transpose");
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out = Tensor::zeros({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = av.at(i, j);
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        Tensor& da = t.grad_buffer(ai);
        const std::size_t m2 = da.rows(), n2 = da.cols();
        for (std::size_t i = 0; i < m2; ++i)
            for (std::size_t j = 0; j < n2; ++j) da.at(i, j) += g.at(j, i);
    });
}

Var Tape::add(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_same_shape(av, bv, "add");
    Tensor out = av;
    const double* bp = bv.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bp[i];
    const std::uint32_t ai = a.index, bi = b.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(b), [ai, bi, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        for (std::uint32_t p : {ai, bi}) {
            if (!t.nodes_[p].needs_grad) continue;
            Tensor& d = t.grad_buffer(p);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
    });
}

Var Tape::sub(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_same_shape(av, bv, "sub");
    Tensor out = av;
    const double* bp = bv.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bp[i];
    const std::uint32_t ai = a.index, bi = b.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(b), [ai, bi, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        if (t.nodes_[ai].needs_grad) {
            Tensor& d = t.grad_buffer(ai);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (t.nodes_[bi].needs_grad) {
            Tensor& d = t.grad_buffer(bi);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] -= g[i];
        }
    });
}

Var Tape::mul(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_same_shape(av, bv, "mul");
    Tensor out = av;
    const double* bp = bv.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
    const std::uint32_t ai = a.index, bi = b.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(b), [ai, bi, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        if (t.nodes_[ai].needs_grad) {
            Tensor& d = t.grad_buffer(ai);
            const Tensor& other = t.nodes_[bi].value;
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
        }
        if (t.nodes_[bi].needs_grad) {
            Tensor& d = t.grad_buffer(bi);
            const Tensor& other = t.nodes_[ai].value;
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * other[i];
        }
    });
}

Var Tape::scale(Var a, double c) {
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c;
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi, c](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * g[i];
    });
}

Var Tape::add_rowvec(Var a, Var v) {
    const Tensor& av = value(a);
    const Tensor& vv = value(v);
    check_2d(av, "add_rowvec");
    if (vv.rank() != 2 || vv.rows() != 1 || vv.cols() != av.cols()) {
        throw ShapeError("add_rowvec: matrix " + av.shape_str() + " incompatible with row " +
                         vv.shape_str());
    }
    Tensor out = av;
    const std::size_t m = av.rows(), n = av.cols();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += vv[j];
    const std::uint32_t ai = a.index, vi = v.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(v), [ai, vi, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const std::size_t m2 = g.rows(), n2 = g.cols();
        if (t.nodes_[ai].needs_grad) {
            Tensor& d = t.grad_buffer(ai);
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (t.nodes_[vi].needs_grad) {
            Tensor& d = t.grad_buffer(vi);
            for (std::size_t i = 0; i < m2; ++i)
                for (std::size_t j = 0; j < n2; ++j) d[j] += g.at(i, j);
        }
    });
}

Var Tape::concat_cols(Var a, Var b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    check_2d(av, "concat_cols");
    check_2d(bv, "concat_cols");
    if (av.rows() != bv.rows()) {
        throw ShapeError("concat_cols: row counts disagree, lhs " + av.shape_str() + " rhs " +
                         bv.shape_str());
    }
    const std::size_t m = av.rows(), na = av.cols(), nb = bv.cols();
    Tensor out = Tensor::zeros({m, na + nb});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < na; ++j) out.at(i, j) = av.at(i, j);
        for (std::size_t j = 0; j < nb; ++j) out.at(i, na + j) = bv.at(i, j);
    }
    const std::uint32_t ai = a.index, bi = b.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(b), [ai, bi, oi, na, nb](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const std::size_t m2 = g.rows();
        if (t.nodes_[ai].needs_grad) {
            Tensor& d = t.grad_buffer(ai);
            for (std::size_t i = 0; i < m2; ++i)
                for (std::size_t j = 0; j < na; ++j) d.at(i, j) += g.at(i, j);
        }
        if (t.nodes_[bi].needs_grad) {
            Tensor& d = t.grad_buffer(bi);
            for (std::size_t i = 0; i < m2; ++i)
                for (std::size_t j = 0; j < nb; ++j) d.at(i, j) += g.at(i, na + j);
        }
    });
}

Var Tape::slice_cols(Var a, std::size_t j0, std::size_t j1) {
    const Tensor& av = value(a);
    check_2d(av, "slice_cols");
    if (j0 >= j1 || j1 > av.cols()) {
        throw ShapeError("slice_cols: range [" + std::to_string(j0) + ", " + std::to_string(j1) +
                         ") invalid for " + av.shape_str());
    }
    const std::size_t m = av.rows(), n = j1 - j0;
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, j0 + j);
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi, j0, n](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        Tensor& d = t.grad_buffer(ai);
        const std::size_t m2 = g.rows();
        for (std::size_t i = 0; i < m2; ++i)
            for (std::size_t j = 0; j < n; ++j) d.at(i, j0 + j) += g.at(i, j);
    });
}

Var Tape::reshape(Var a, std::vector<std::size_t> shape) {
    Tensor out = value(a).reshaped(std::move(shape));
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    });
}

Var Tape::gelu(Var a) {
    const Tensor& av = value(a);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(kGeluScale * (x + kGeluCubic * x * x * x)));
    }
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& x = t.nodes_[ai].value;
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) {
            const double xi = x[i];
            const double u = kGeluScale * (xi + kGeluCubic * xi * xi * xi);
            const double th = std::tanh(u);
            const double sech2 = 1.0 - th * th;
            const double local = 0.5 * (1.0 + th) +
                                 0.5 * xi * sech2 * kGeluScale * (1.0 + 3.0 * kGeluCubic * xi * xi);
            d[i] += local * g[i];
        }
    });
}

Var Tape::relu(Var a) {
    const Tensor& av = value(a);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& x = t.nodes_[ai].value;
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (x[i] > 0.0) d[i] += g[i];
        }
    });
}

Var Tape::abs(Var a) {
    const Tensor& av = value(a);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& x = t.nodes_[ai].value;
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) {
            if (x[i] > 0.0) {
                d[i] += g[i];
            } else if (x[i] < 0.0) {
                d[i] -= g[i];
            }
        }
    });
}

Var Tape::exp(Var a) {
    const Tensor& av = value(a);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& y = t.nodes_[oi].value;
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += y[i] * g[i];
    });
}

Var Tape::elu_plus_one(Var a) {
    const Tensor& av = value(a);
    Tensor out = av;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = out[i] > 0.0 ? out[i] + 1.0 : std::exp(out[i]);
    }
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& x = t.nodes_[ai].value;
        const Tensor& y = t.nodes_[oi].value;
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += (x[i] > 0.0 ? 1.0 : y[i]) * g[i];
    });
}

Var Tape::softmax_rows(Var a) {
    const Tensor& av = value(a);
    check_2d(av, "softmax_rows");
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mx = av.at(i, 0);
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av.at(i, j));
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double e = std::exp(av.at(i, j) - mx);
            out.at(i, j) = e;
            s += e;
        }
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) /= s;
    }
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& y = t.nodes_[oi].value;
        Tensor& d = t.grad_buffer(ai);
        const std::size_t m2 = y.rows(), n2 = y.cols();
        for (std::size_t i = 0; i < m2; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n2; ++j) dot += g.at(i, j) * y.at(i, j);
            for (std::size_t j = 0; j < n2; ++j) d.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
        }
    });
}

Var Tape::normalize_rows(Var a) {
    const Tensor& av = value(a);
    check_2d(av, "normalize_rows");
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double ss = 0.0;
        for (std::size_t j = 0; j < n; ++j) ss += av.at(i, j) * av.at(i, j);
        if (ss == 0.0) {
            throw DomainError("normalize_rows: all-zero row " + std::to_string(i));
        }
        const double inv = 1.0 / std::sqrt(ss);
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, j) * inv;
    }
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a), [ai, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& x = t.nodes_[ai].value;
        const Tensor& y = t.nodes_[oi].value;
        Tensor& d = t.grad_buffer(ai);
        const std::size_t m2 = x.rows(), n2 = x.cols();
        for (std::size_t i = 0; i < m2; ++i) {
            double ss = 0.0, gy = 0.0;
            for (std::size_t j = 0; j < n2; ++j) {
                ss += x.at(i, j) * x.at(i, j);
                gy += g.at(i, j) * y.at(i, j);
            }
            const double inv = 1.0 / std::sqrt(ss);
            for (std::size_t j = 0; j < n2; ++j) {
                d.at(i, j) += inv * (g.at(i, j) - y.at(i, j) * gy);
            }
        }
    });
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    const Tensor& xv = value(x);
    const Tensor& gv = value(gain);
    const Tensor& bv = value(bias);
    check_2d(xv, "layer_norm");
    const std::size_t m = xv.rows(), n = xv.cols();
    if (n == 0) throw ShapeError("layer_norm: empty feature dimension");
    if (gv.size() != n || bv.size() != n) {
        throw ShapeError("layer_norm: gain " + gv.shape_str() + " / bias " + bv.shape_str() +
                         " do not match width " + std::to_string(n));
    }
    if (eps < 0.0) throw DomainError("layer_norm: eps must be >= 0");
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += xv.at(i, j);
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double c = xv.at(i, j) - mean;
            var += c * c;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < n; ++j) {
            out.at(i, j) = (xv.at(i, j) - mean) * inv * gv[j] + bv[j];
        }
    }
    const std::uint32_t xi = x.index, gi = gain.index, bi = bias.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(x) || needs(gain) || needs(bias), [xi, gi, bi, oi,
                                                                         eps](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& xv2 = t.nodes_[xi].value;
        const Tensor& gv2 = t.nodes_[gi].value;
        const std::size_t m2 = xv2.rows(), n2 = xv2.cols();
        const double dn = static_cast<double>(n2);
        for (std::size_t i = 0; i < m2; ++i) {
            double mean = 0.0;
            for (std::size_t j = 0; j < n2; ++j) mean += xv2.at(i, j);
            mean /= dn;
            double var = 0.0;
            for (std::size_t j = 0; j < n2; ++j) {
                const double c = xv2.at(i, j) - mean;
                var += c * c;
            }
            var /= dn;
            const double inv = 1.0 / std::sqrt(var + eps);
            // dxhat, and its row means against xhat
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < n2; ++j) {
                const double xhat = (xv2.at(i, j) - mean) * inv;
                const double dxhat = g.at(i, j) * gv2[j];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xhat;
            }
            mean_dxhat /= dn;
            mean_dxhat_xhat /= dn;
            if (t.nodes_[xi].needs_grad) {
                Tensor& dx = t.grad_buffer(xi);
                for (std::size_t j = 0; j < n2; ++j) {
                    const double xhat = (xv2.at(i, j) - mean) * inv;
                    const double dxhat = g.at(i, j) * gv2[j];
                    dx.at(i, j) += inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
                }
            }
            if (t.nodes_[gi].needs_grad) {
                Tensor& dg = t.grad_buffer(gi);
                for (std::size_t j = 0; j < n2; ++j) {
                    const double xhat = (xv2.at(i, j) - mean) * inv;
                    dg[j] += g.at(i, j) * xhat;
                }
            }
            if (t.nodes_[bi].needs_grad) {
                Tensor& db = t.grad_buffer(bi);
                for (std::size_t j = 0; j < n2; ++j) db[j] += g.at(i, j);
            }
        }
    });
}

Var Tape::div_rows(Var a, Var denom) {
    const Tensor& av = value(a);
    const Tensor& dv = value(denom);
    check_2d(av, "div_rows");
    if (dv.rank() != 2 || dv.cols() != 1 || dv.rows() != av.rows()) {
        throw ShapeError("div_rows: matrix " + av.shape_str() + " incompatible with denom " +
                         dv.shape_str());
    }
    const std::size_t m = av.rows(), n = av.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double d = dv[i];
        if (d == 0.0) throw DomainError("div_rows: zero denominator at row " + std::to_string(i));
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, j) / d;
    }
    const std::uint32_t ai = a.index, di = denom.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(std::move(out), needs(a) || needs(denom), [ai, di, oi](Tape& t) {
        const Tensor& g = t.nodes_[oi].grad;
        const Tensor& y = t.nodes_[oi].value;
        const Tensor& dv2 = t.nodes_[di].value;
        const std::size_t m2 = y.rows(), n2 = y.cols();
        if (t.nodes_[ai].needs_grad) {
            Tensor& da = t.grad_buffer(ai);
            for (std::size_t i = 0; i < m2; ++i)
                for (std::size_t j = 0; j < n2; ++j) da.at(i, j) += g.at(i, j) / dv2[i];
        }
        if (t.nodes_[di].needs_grad) {
            Tensor& dd = t.grad_buffer(di);
            for (std::size_t i = 0; i < m2; ++i) {
                double s = 0.0;
                for (std::size_t j = 0; j < n2; ++j) s += g.at(i, j) * y.at(i, j);
                dd[i] -= s / dv2[i];
            }
        }
    });
}

Var Tape::sum(Var a) {
    const Tensor& av = value(a);
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += av[i];
    const std::uint32_t ai = a.index;
    const std::uint32_t oi = static_cast<std::uint32_t>(nodes_.size());
    return push(Tensor::from({1, 1}, {s}), needs(a), [ai, oi](Tape& t) {
        const double g = t.nodes_[oi].grad[0];
        Tensor& d = t.grad_buffer(ai);
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += g;
    });
}

Var Tape::mean(Var a) {
    const std::size_t n = value(a).size();
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

}  // namespace nexus
