#include "linklearn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "linklearn/errors.hpp"

namespace linklearn::ops {
namespace {

using RowMat = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMat = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

void require_same_tape(Var a, Var b) {
    if (a.tape != b.tape) throw StateError("operands recorded on different tapes");
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(std::string(op) + " expects a matrix, got " + shape_str(t.shape));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape != b.shape) {
        throw DimensionError(std::string(op) + " shapes differ: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
}

}  // namespace

Var matmul(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    require_rank2(A, "matmul");
    require_rank2(B, "matmul");
    const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    if (B.shape[0] != k) {
        throw DimensionError("matmul inner dimensions differ: " + shape_str(A.shape) + " x " + shape_str(B.shape));
    }
    Tensor C = Tensor::zeros({m, n});
    RowMat(C.data.data(), m, n).noalias() = ConstRowMat(A.data.data(), m, k) * ConstRowMat(B.data.data(), k, n);
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(C), {ia, ib}, [=](Tape& t, const std::vector<double>& g) {
        const ConstRowMat G(g.data(), m, n);
        if (t.requires_grad(ia)) {
            RowMat(t.grad(ia).data(), m, k).noalias() += G * ConstRowMat(t.value(ib).data.data(), k, n).transpose();
        }
        if (t.requires_grad(ib)) {
            RowMat(t.grad(ib).data(), k, n).noalias() += ConstRowMat(t.value(ia).data.data(), m, k).transpose() * G;
        }
    });
}

Var add(Var a, Var b) {
    require_same_tape(a, b);
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += B.data[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape& t, const std::vector<double>& g) {
        for (auto id : {ia, ib}) {
            if (!t.requires_grad(id)) continue;
            auto& gx = t.grad(id);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
    });
}

Var mul(Var a, Var b) {
    require_same_tape(a, b);
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= B.data[i];
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape& t, const std::vector<double>& g) {
        const Tensor& Av = t.value(ia);
        const Tensor& Bv = t.value(ib);
        if (t.requires_grad(ia)) {
            auto& ga = t.grad(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * Bv.data[i];
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad(ib);
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * Av.data[i];
        }
    });
}

Var scale(Var x, double factor) {
    Tensor out = x.value();
    for (auto& v : out.data) v *= factor;
    const std::size_t ix = x.id;
    return x.tape->record(std::move(out), {ix}, [=](Tape& t, const std::vector<double>& g) {
        auto& gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
    });
}

Var add_bias(Var x, Var bias) {
    require_same_tape(x, bias);
    const Tensor& X = x.value();
    const Tensor& b = bias.value();
    const std::size_t c = X.cols();
    if (b.numel() != c) {
        throw DimensionError("bias " + shape_str(b.shape) + " does not match last dimension of " + shape_str(X.shape));
    }
    Tensor out = X;
    const std::size_t rows = X.rows();
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] += b.data[j];
    }
    const std::size_t ix = x.id, ibias = bias.id;
    return x.tape->record(std::move(out), {ix, ibias}, [=](Tape& t, const std::vector<double>& g) {
        if (t.requires_grad(ix)) {
            auto& gx = t.grad(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        }
        if (t.requires_grad(ibias)) {
            auto& gb = t.grad(ibias);
            for (std::size_t r = 0; r < rows; ++r) {
                for (std::size_t j = 0; j < c; ++j) gb[j] += g[r * c + j];
            }
        }
    });
}

Var scale_by(Var x, Var v, std::size_t index) {
    require_same_tape(x, v);
    if (index >= v.value().numel()) {
        throw IndexError("scale_by index " + std::to_string(index) + " outside " + shape_str(v.value().shape));
    }
    const double factor = v.value().data[index];
    Tensor out = x.value();
    for (auto& e : out.data) e *= factor;
    const std::size_t ix = x.id, iv = v.id;
    return x.tape->record(std::move(out), {ix, iv}, [=](Tape& t, const std::vector<double>& g) {
        if (t.requires_grad(ix)) {
            auto& gx = t.grad(ix);
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += factor * g[i];
        }
        if (t.requires_grad(iv)) {
            const Tensor& X = t.value(ix);
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * X.data[i];
            t.grad(iv)[index] += acc;
        }
    });
}

Var relu(Var x) {
    Tensor out = x.value();
    for (auto& v : out.data) v = v > 0.0 ? v : 0.0;
    const std::size_t ix = x.id;
    return x.tape->record(std::move(out), {ix}, [=](Tape& t, const std::vector<double>& g) {
        const Tensor& X = t.value(ix);
        auto& gx = t.grad(ix);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (X.data[i] > 0.0) gx[i] += g[i];
        }
    });
}

Var gelu(Var x) {
    Tensor out = x.value();
    for (auto& v : out.data) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
    const std::size_t ix = x.id;
    return x.tape->record(std::move(out), {ix}, [=](Tape& t, const std::vector<double>& g) {
        const Tensor& X = t.value(ix);
        auto& gx = t.grad(ix);
        const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double z = X.data[i];
            const double cdf = 0.5 * (1.0 + std::erf(z * std::numbers::sqrt2 / 2.0));
            const double pdf = inv_sqrt_2pi * std::exp(-0.5 * z * z);
            gx[i] += g[i] * (cdf + z * pdf);
        }
    });
}

Var layernorm(Var x, Var gain, Var bias, double eps) {
    require_same_tape(x, gain);
    require_same_tape(x, bias);
    if (!(eps > 0.0)) throw ConfigError("layernorm eps must be positive");
    const Tensor& X = x.value();
    const std::size_t d = X.cols();
    if (gain.value().numel() != d || bias.value().numel() != d) {
        throw DimensionError("layernorm gain/bias " + shape_str(gain.value().shape) + "/" +
                             shape_str(bias.value().shape) + " vs input " + shape_str(X.shape));
    }
    const std::size_t rows = X.rows();
    const Tensor& G = gain.value();
    const Tensor& Bv = bias.value();
    std::vector<double> xhat(X.numel());
    std::vector<double> inv_std(rows);
    Tensor out = Tensor::zeros(X.shape);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = &X.data[r * d];
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(d);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[r] = inv;
        for (std::size_t j = 0; j < d; ++j) {
            const double xh = (row[j] - mean) * inv;
            xhat[r * d + j] = xh;
            out.data[r * d + j] = G.data[j] * xh + Bv.data[j];
        }
    }
    const std::size_t ix = x.id, ig = gain.id, ib = bias.id;
    return x.tape->record(
        std::move(out), {ix, ig, ib},
        [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const std::vector<double>& g) {
            const Tensor& Gv = t.value(ig);
            if (t.requires_grad(ix)) {
                auto& gx = t.grad(ix);
                const double dd = static_cast<double>(d);
                for (std::size_t r = 0; r < rows; ++r) {
                    double sum_dxh = 0.0, sum_dxh_xh = 0.0;
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[r * d + j] * Gv.data[j];
                        sum_dxh += dxh;
                        sum_dxh_xh += dxh * xhat[r * d + j];
                    }
                    for (std::size_t j = 0; j < d; ++j) {
                        const double dxh = g[r * d + j] * Gv.data[j];
                        gx[r * d + j] += inv_std[r] / dd * (dd * dxh - sum_dxh - xhat[r * d + j] * sum_dxh_xh);
                    }
                }
            }
            if (t.requires_grad(ig)) {
                auto& gg = t.grad(ig);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
                }
            }
            if (t.requires_grad(ib)) {
                auto& gb = t.grad(ib);
                for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
                }
            }
        });
}

Var concat_cols(Var a, Var b) {
    require_same_tape(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rows() != B.rows()) {
        throw DimensionError("concat_cols row counts differ: " + shape_str(A.shape) + " vs " + shape_str(B.shape));
    }
    const std::size_t r = A.rows(), ca = A.cols(), cb = B.cols();
    Tensor out = Tensor::zeros({r, ca + cb});
    for (std::size_t i = 0; i < r; ++i) {
        std::copy_n(&A.data[i * ca], ca, &out.data[i * (ca + cb)]);
        std::copy_n(&B.data[i * cb], cb, &out.data[i * (ca + cb) + ca]);
    }
    const std::size_t ia = a.id, ib = b.id;
    return a.tape->record(std::move(out), {ia, ib}, [=](Tape& t, const std::vector<double>& g) {
        if (t.requires_grad(ia)) {
            auto& ga = t.grad(ia);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * (ca + cb) + j];
            }
        }
        if (t.requires_grad(ib)) {
            auto& gb = t.grad(ib);
            for (std::size_t i = 0; i < r; ++i) {
                for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
        }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().data) s += v;
    const std::size_t ix = x.id;
    return x.tape->record(Tensor::scalar(s), {ix}, [=](Tape& t, const std::vector<double>& g) {
        auto& gx = t.grad(ix);
        for (auto& v : gx) v += g[0];
    });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
    const Tensor& L = logits.value();
    require_rank2(L, "softmax_cross_entropy");
    const std::size_t batch = L.shape[0], classes = L.shape[1];
    if (labels.size() != batch) {
        throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(batch) + " rows");
    }
    std::vector<double> probs(L.numel());
    double loss = 0.0;
    for (std::size_t i = 0; i < batch; ++i) {
        if (labels[i] >= classes) {
            throw LabelError("label " + std::to_string(labels[i]) + " at index " + std::to_string(i) +
                             " outside [0, " + std::to_string(classes) + ")");
        }
        const double* row = &L.data[i * classes];
        const double mx = *std::max_element(row, row + classes);
        double z = 0.0;
        for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
        const double log_z = mx + std::log(z);
        for (std::size_t j = 0; j < classes; ++j) probs[i * classes + j] = std::exp(row[j] - log_z);
        loss += log_z - row[labels[i]];
    }
    loss /= static_cast<double>(batch);
    std::vector<std::size_t> lab(labels.begin(), labels.end());
    const std::size_t il = logits.id;
    return logits.tape->record(
        Tensor::scalar(loss), {il},
        [=, probs = std::move(probs), lab = std::move(lab)](Tape& t, const std::vector<double>& g) {
            auto& gl = t.grad(il);
            const double s = g[0] / static_cast<double>(batch);
            for (std::size_t i = 0; i < batch; ++i) {
                for (std::size_t j = 0; j < classes; ++j) {
                    const double target = (j == lab[i]) ? 1.0 : 0.0;
                    gl[i * classes + j] += s * (probs[i * classes + j] - target);
                }
            }
        });
}

Var weighted_sq_diff(Var theta, const Tensor& anchor, const Tensor& fi) {
    const Tensor& T = theta.value();
    if (anchor.shape != T.shape || fi.shape != T.shape) {
        throw StateError("anchor " + shape_str(anchor.shape) + " / importance " + shape_str(fi.shape) +
                         " do not match parameter " + shape_str(T.shape));
    }
    double s = 0.0;
    for (std::size_t j = 0; j < T.numel(); ++j) {
        const double d = anchor.data[j] - T.data[j];
        s += fi.data[j] * d * d;
    }
    const std::size_t it = theta.id;
    return theta.tape->record(Tensor::scalar(s), {it}, [=](Tape& t, const std::vector<double>& g) {
        const Tensor& Tv = t.value(it);
        auto& gt = t.grad(it);
        for (std::size_t j = 0; j < gt.size(); ++j) gt[j] += g[0] * 2.0 * fi.data[j] * (Tv.data[j] - anchor.data[j]);
    });
}

namespace {

struct AttentionDims {
    std::size_t batch, tokens, d, heads, dh;
};

AttentionDims attention_dims(const Tensor& q, const Tensor& k, std::size_t batch, std::size_t heads) {
    require_rank2(q, "attention");
    require_same_shape(q, k, "attention");
    if (batch == 0 || q.shape[0] % batch != 0) {
        throw DimensionError("attention: " + std::to_string(q.shape[0]) + " rows not divisible by batch " +
                             std::to_string(batch));
    }
    const std::size_t d = q.shape[1];
    if (heads == 0 || d % heads != 0) {
        throw DimensionError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) +
                             " heads");
    }
    return {batch, q.shape[0] / batch, d, heads, d / heads};
}

// P[((b * heads + h) * tokens + i) * tokens + j]
std::vector<double> compute_probs(const Tensor& Q, const Tensor& K, const AttentionDims& a) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(a.dh));
    std::vector<double> P(a.batch * a.heads * a.tokens * a.tokens);
    std::vector<double> row(a.tokens);
    for (std::size_t b = 0; b < a.batch; ++b) {
        for (std::size_t h = 0; h < a.heads; ++h) {
            for (std::size_t i = 0; i < a.tokens; ++i) {
                const double* qi = &Q.data[(b * a.tokens + i) * a.d + h * a.dh];
                double mx = -INFINITY;
                for (std::size_t j = 0; j < a.tokens; ++j) {
                    const double* kj = &K.data[(b * a.tokens + j) * a.d + h * a.dh];
                    double s = 0.0;
                    for (std::size_t c = 0; c < a.dh; ++c) s += qi[c] * kj[c];
                    row[j] = s * scale;
                    mx = std::max(mx, row[j]);
                }
                double z = 0.0;
                for (std::size_t j = 0; j < a.tokens; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    z += row[j];
                }
                double* p = &P[((b * a.heads + h) * a.tokens + i) * a.tokens];
                for (std::size_t j = 0; j < a.tokens; ++j) p[j] = row[j] / z;
            }
        }
    }
    return P;
}

}  // namespace

Tensor attention_probs(const Tensor& q, const Tensor& k, std::size_t batch, std::size_t heads) {
    const auto a = attention_dims(q, k, batch, heads);
    return Tensor({a.batch * a.heads * a.tokens, a.tokens}, compute_probs(q, k, a));
}

Var attention(Var q, Var k, Var v, std::size_t batch, std::size_t heads) {
    require_same_tape(q, k);
    require_same_tape(q, v);
    const Tensor& Q = q.value();
    const Tensor& K = k.value();
    const Tensor& V = v.value();
    require_same_shape(Q, V, "attention");
    const auto a = attention_dims(Q, K, batch, heads);
    std::vector<double> P = compute_probs(Q, K, a);

    Tensor out = Tensor::zeros(Q.shape);
    for (std::size_t b = 0; b < a.batch; ++b) {
        for (std::size_t h = 0; h < a.heads; ++h) {
            for (std::size_t i = 0; i < a.tokens; ++i) {
                const double* p = &P[((b * a.heads + h) * a.tokens + i) * a.tokens];
                double* o = &out.data[(b * a.tokens + i) * a.d + h * a.dh];
                for (std::size_t j = 0; j < a.tokens; ++j) {
                    const double* vj = &V.data[(b * a.tokens + j) * a.d + h * a.dh];
                    for (std::size_t c = 0; c < a.dh; ++c) o[c] += p[j] * vj[c];
                }
            }
        }
    }

    const std::size_t iq = q.id, ik = k.id, iv = v.id;
    return q.tape->record(
        std::move(out), {iq, ik, iv}, [=, P = std::move(P)](Tape& t, const std::vector<double>& g) {
            const Tensor& Qv = t.value(iq);
            const Tensor& Kv = t.value(ik);
            const Tensor& Vv = t.value(iv);
            const bool need_q = t.requires_grad(iq), need_k = t.requires_grad(ik), need_v = t.requires_grad(iv);
            const double scale = 1.0 / std::sqrt(static_cast<double>(a.dh));
            std::vector<double> dp(a.tokens), ds(a.tokens);
            for (std::size_t b = 0; b < a.batch; ++b) {
                for (std::size_t h = 0; h < a.heads; ++h) {
                    for (std::size_t i = 0; i < a.tokens; ++i) {
                        const double* p = &P[((b * a.heads + h) * a.tokens + i) * a.tokens];
                        const double* go = &g[(b * a.tokens + i) * a.d + h * a.dh];
                        double dot = 0.0;
                        for (std::size_t j = 0; j < a.tokens; ++j) {
                            const double* vj = &Vv.data[(b * a.tokens + j) * a.d + h * a.dh];
                            double s = 0.0;
                            for (std::size_t c = 0; c < a.dh; ++c) s += go[c] * vj[c];
                            dp[j] = s;
                            dot += p[j] * s;
                        }
                        for (std::size_t j = 0; j < a.tokens; ++j) ds[j] = p[j] * (dp[j] - dot) * scale;
                        if (need_v) {
                            auto& gv = t.grad(iv);
                            for (std::size_t j = 0; j < a.tokens; ++j) {
                                double* gvj = &gv[(b * a.tokens + j) * a.d + h * a.dh];
                                for (std::size_t c = 0; c < a.dh; ++c) gvj[c] += p[j] * go[c];
                            }
                        }
                        if (need_q) {
                            auto& gq = t.grad(iq);
                            double* gqi = &gq[(b * a.tokens + i) * a.d + h * a.dh];
                            for (std::size_t j = 0; j < a.tokens; ++j) {
                                const double* kj = &Kv.data[(b * a.tokens + j) * a.d + h * a.dh];
                                for (std::size_t c = 0; c < a.dh; ++c) gqi[c] += ds[j] * kj[c];
                            }
                        }
                        if (need_k) {
                            auto& gk = t.grad(ik);
                            const double* qi = &Qv.data[(b * a.tokens + i) * a.d + h * a.dh];
                            for (std::size_t j = 0; j < a.tokens; ++j) {
                                double* gkj = &gk[(b * a.tokens + j) * a.d + h * a.dh];
                                for (std::size_t c = 0; c < a.dh; ++c) gkj[c] += ds[j] * qi[c];
                            }
                        }
                    }
                }
            }
        });
}

Var assemble_tokens(Var patch_tokens, Var cls, Var pos, std::size_t batch) {
    require_same_tape(patch_tokens, cls);
    require_same_tape(patch_tokens, pos);
    const Tensor& X = patch_tokens.value();
    const Tensor& C = cls.value();
    const Tensor& Pos = pos.value();
    require_rank2(X, "assemble_tokens");
    const std::size_t d = X.shape[1];
    if (batch == 0 || X.shape[0] % batch != 0) throw DimensionError("assemble_tokens: rows not divisible by batch");
    const std::size_t patches = X.shape[0] / batch;
    const std::size_t tokens = patches + 1;
    if (C.numel() != d) throw DimensionError("classification token " + shape_str(C.shape) + " vs width " + std::to_string(d));
    if (Pos.rows() != tokens || Pos.cols() != d) {
        throw DimensionError("positional embeddings " + shape_str(Pos.shape) + " vs " + std::to_string(tokens) + "x" +
                             std::to_string(d));
    }
    Tensor out = Tensor::zeros({batch * tokens, d});
    for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t j = 0; j < d; ++j) out.data[(b * tokens) * d + j] = C.data[j] + Pos.data[j];
        for (std::size_t p = 0; p < patches; ++p) {
            for (std::size_t j = 0; j < d; ++j) {
                out.data[(b * tokens + 1 + p) * d + j] = X.data[(b * patches + p) * d + j] + Pos.data[(1 + p) * d + j];
            }
        }
    }
    const std::size_t ix = patch_tokens.id, ic = cls.id, ip = pos.id;
    return patch_tokens.tape->record(std::move(out), {ix, ic, ip}, [=](Tape& t, const std::vector<double>& g) {
        if (t.requires_grad(ix)) {
            auto& gx = t.grad(ix);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t p = 0; p < patches; ++p) {
                    for (std::size_t j = 0; j < d; ++j) gx[(b * patches + p) * d + j] += g[(b * tokens + 1 + p) * d + j];
                }
            }
        }
        if (t.requires_grad(ic)) {
            auto& gc = t.grad(ic);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t j = 0; j < d; ++j) gc[j] += g[(b * tokens) * d + j];
            }
        }
        if (t.requires_grad(ip)) {
            auto& gp = t.grad(ip);
            for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t r = 0; r < tokens; ++r) {
                    for (std::size_t j = 0; j < d; ++j) gp[r * d + j] += g[(b * tokens + r) * d + j];
                }
            }
        }
    });
}

Var select_rows(Var x, std::size_t stride, std::size_t offset) {
    const Tensor& X = x.value();
    require_rank2(X, "select_rows");
    if (stride == 0 || X.shape[0] % stride != 0 || offset >= stride) {
        throw DimensionError("select_rows: stride " + std::to_string(stride) + " offset " + std::to_string(offset) +
                             " invalid for " + shape_str(X.shape));
    }
    const std::size_t n = X.shape[0] / stride, d = X.shape[1];
    Tensor out = Tensor::zeros({n, d});
    for (std::size_t i = 0; i < n; ++i) std::copy_n(&X.data[(i * stride + offset) * d], d, &out.data[i * d]);
    const std::size_t ix = x.id;
    return x.tape->record(std::move(out), {ix}, [=](Tape& t, const std::vector<double>& g) {
        auto& gx = t.grad(ix);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) gx[(i * stride + offset) * d + j] += g[i * d + j];
        }
    });
}

}  // namespace linklearn::ops
