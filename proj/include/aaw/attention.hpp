// Copyright 2026 The aaw-seg Authors
// Licensed under the Apache License, Version 2.0;
// see http://www.apache.org/licenses/LICENSE-2.0 for details.

#pragma once

#include "aaw/ops.hpp"
#include "aaw/tensor.hpp"

namespace aaw {

namespace detail {

inline double elu1_scalar(double v) { return v > 0.0 ? v + 1.0 : std::exp(v); }
inline double elu1_grad(double v) { return v > 0.0 ? 1.0 : std::exp(v); }

}  // namespace detail

/// Kernelized linear attention over spatial tokens, O(N) in token count:
///   y_i = phi(q_i)^T (sum_j phi(k_j) v_j^T) / max(phi(q_i)^T sum_j phi(k_j), eps)
/// with phi(u) = elu(u)+1 > 0. The denominator floor keeps the single-token
/// case exact (weights normalize to 1) while guarding near-zero sums.
/// q, k, v share shape (n, c, h, w); tokens are the h*w positions per head.
inline TensorPtr linear_attention_core(const TensorPtr& q, const TensorPtr& k,
                                       const TensorPtr& v, int heads, double eps) {
    if (!q->same_shape(*k) || !q->same_shape(*v))
        throw std::invalid_argument("linear_attention_core: q/k/v shape mismatch");
    if (heads < 1 || q->c % heads != 0)
        throw std::invalid_argument("linear_attention_core: heads=" + std::to_string(heads) +
                                    " must divide channels " + std::to_string(q->c));
    if (eps <= 0.0) throw std::invalid_argument("linear_attention_core: eps must be positive");

    const int n = q->n, c = q->c, N = q->h * q->w, d = c / heads;
    auto y = tensor_like(*q);

    // Token-major views: element (b, hd, i, a) lives at channel hd*d+a,
    // spatial index i. Work buffers are per (batch, head).
    std::vector<double> S(static_cast<std::size_t>(d) * d), z(d);
    for (int b = 0; b < n; ++b) {
        for (int hd = 0; hd < heads; ++hd) {
            std::fill(S.begin(), S.end(), 0.0);
            std::fill(z.begin(), z.end(), 0.0);
            const std::size_t base = (static_cast<std::size_t>(b) * c + hd * d) *
                                     static_cast<std::size_t>(N);
            for (int i = 0; i < N; ++i) {
                for (int a = 0; a < d; ++a) {
                    const double kp = detail::elu1_scalar(k->data[base + static_cast<std::size_t>(a) * N + i]);
                    z[a] += kp;
                    const double* vrow = &v->data[base + i];
                    for (int e = 0; e < d; ++e)
                        S[static_cast<std::size_t>(a) * d + e] += kp * vrow[static_cast<std::size_t>(e) * N];
                }
            }
            for (int i = 0; i < N; ++i) {
                double dot = 0.0;
                for (int a = 0; a < d; ++a)
                    dot += detail::elu1_scalar(q->data[base + static_cast<std::size_t>(a) * N + i]) * z[a];
                const double den = std::max(dot, eps);
                for (int e = 0; e < d; ++e) {
                    double num = 0.0;
                    for (int a = 0; a < d; ++a)
                        num += detail::elu1_scalar(q->data[base + static_cast<std::size_t>(a) * N + i]) *
                               S[static_cast<std::size_t>(a) * d + e];
                    y->data[base + static_cast<std::size_t>(e) * N + i] = num / den;
                }
            }
        }
    }
    // Aggregation cost: S and num are N*d^2 MACs each, z and den N*d each.
    add_flops(static_cast<std::uint64_t>(n) * heads *
              (4ull * N * d * d + 4ull * N * d));

    y->requires_grad = q->requires_grad || k->requires_grad || v->requires_grad;
    if (y->requires_grad) {
        y->parents = {q, k, v};
        TensorPtr qp = q, kp = k, vp = v;
        y->backward_fn = [qp, kp, vp, heads, eps, n, c, N, d](Tensor4& self) {
            std::vector<double> S(static_cast<std::size_t>(d) * d), z(d);
            std::vector<double> dS(static_cast<std::size_t>(d) * d), dz(d);
            std::vector<double> Qp(static_cast<std::size_t>(N) * d), Kp(static_cast<std::size_t>(N) * d);
            for (int b = 0; b < n; ++b) {
                for (int hd = 0; hd < heads; ++hd) {
                    const std::size_t base = (static_cast<std::size_t>(b) * c + hd * d) *
                                             static_cast<std::size_t>(N);
                    std::fill(S.begin(), S.end(), 0.0);
                    std::fill(z.begin(), z.end(), 0.0);
                    std::fill(dS.begin(), dS.end(), 0.0);
                    std::fill(dz.begin(), dz.end(), 0.0);
                    for (int i = 0; i < N; ++i)
                        for (int a = 0; a < d; ++a) {
                            Qp[static_cast<std::size_t>(i) * d + a] =
                                detail::elu1_scalar(qp->data[base + static_cast<std::size_t>(a) * N + i]);
                            Kp[static_cast<std::size_t>(i) * d + a] =
                                detail::elu1_scalar(kp->data[base + static_cast<std::size_t>(a) * N + i]);
                        }
                    for (int i = 0; i < N; ++i)
                        for (int a = 0; a < d; ++a) {
                            const double kv = Kp[static_cast<std::size_t>(i) * d + a];
                            z[a] += kv;
                            for (int e = 0; e < d; ++e)
                                S[static_cast<std::size_t>(a) * d + e] +=
                                    kv * vp->data[base + static_cast<std::size_t>(e) * N + i];
                        }
                    for (int i = 0; i < N; ++i) {
                        double dot = 0.0;
                        for (int a = 0; a < d; ++a) dot += Qp[static_cast<std::size_t>(i) * d + a] * z[a];
                        const double den = std::max(dot, eps);
                        // ddot collects the denominator path; zero when floored.
                        double ddot = 0.0;
                        if (dot > eps) {
                            for (int e = 0; e < d; ++e) {
                                const double gy = self.grad[base + static_cast<std::size_t>(e) * N + i];
                                const double yv = self.data[base + static_cast<std::size_t>(e) * N + i];
                                ddot -= gy * yv / den;
                            }
                        }
                        for (int a = 0; a < d; ++a) {
                            double dQ = ddot * z[a];
                            const double qa = Qp[static_cast<std::size_t>(i) * d + a];
                            for (int e = 0; e < d; ++e) {
                                const double dnum = self.grad[base + static_cast<std::size_t>(e) * N + i] / den;
                                dQ += dnum * S[static_cast<std::size_t>(a) * d + e];
                                dS[static_cast<std::size_t>(a) * d + e] += qa * dnum;
                            }
                            dz[a] += qa * ddot;
                            if (qp->requires_grad)
                                qp->grad[base + static_cast<std::size_t>(a) * N + i] +=
                                    dQ * detail::elu1_grad(qp->data[base + static_cast<std::size_t>(a) * N + i]);
                        }
                    }
                    for (int i = 0; i < N; ++i)
                        for (int a = 0; a < d; ++a) {
                            double dK = dz[a];
                            for (int e = 0; e < d; ++e) {
                                dK += dS[static_cast<std::size_t>(a) * d + e] *
                                      vp->data[base + static_cast<std::size_t>(e) * N + i];
                            }
                            if (kp->requires_grad)
                                kp->grad[base + static_cast<std::size_t>(a) * N + i] +=
                                    dK * detail::elu1_grad(kp->data[base + static_cast<std::size_t>(a) * N + i]);
                        }
                    if (vp->requires_grad)
                        for (int i = 0; i < N; ++i)
                            for (int e = 0; e < d; ++e) {
                                double dV = 0.0;
                                for (int a = 0; a < d; ++a)
                                    dV += Kp[static_cast<std::size_t>(i) * d + a] *
                                          dS[static_cast<std::size_t>(a) * d + e];
                                vp->grad[base + static_cast<std::size_t>(e) * N + i] += dV;
                            }
                }
            }
        };
    }
    return y;
}

/// Projection weights for one linear-attention unit: 1x1 q/k/v projections,
/// a 1x1 output mix applied after the residual, head count, and the
/// denominator floor.
struct LinearAttnParams {
    TensorPtr wq, wk, wv, wo;  // each (c, c, 1, 1)
    int heads = 2;
    double eps = 1e-6;
};

/// Full linear-attention unit: project, attend, residual, 1x1 mix.
inline TensorPtr linear_attention(const TensorPtr& x, const LinearAttnParams& p) {
    auto q = conv2d(x, p.wq, nullptr, 1, 0);
    auto k = conv2d(x, p.wk, nullptr, 1, 0);
    auto v = conv2d(x, p.wv, nullptr, 1, 0);
    auto attn = linear_attention_core(q, k, v, p.heads, p.eps);
    return conv2d(add(x, attn), p.wo, nullptr, 1, 0);
}

}  // namespace aaw
