#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fad/spectral.hpp"
#include "fad/tensor.hpp"

// Reverse-mode differentiation over the operation set used by the training
// loops. The tape is define-by-run: every op computes its value eagerly and
// records a closure that scatters the output gradient into its parents.
// Node ids grow monotonically, so walking ids in reverse is a reverse
// topological traversal that visits each node exactly once.
//
// Complex-valued nodes (spectra) carry complex gradients g with the
// convention Re(g) = dL/dRe(z) and Im(g) = dL/dIm(z) for the real loss L.

namespace fad {

class Tape {
  public:
    using NodeId = int;

    NodeId leaf(Tensor value, bool requires_grad) {
        return push_real(std::move(value), requires_grad, {});
    }

    NodeId constant(Tensor value) { return push_real(std::move(value), false, {}); }

    const Tensor& value(NodeId id) const { return nodes_[id].real; }
    const CTensor& cvalue(NodeId id) const { return nodes_[id].cplx; }

    // Gradient of the last backward() target w.r.t. node id; zeros if the
    // loss does not depend on it.
    Tensor grad(NodeId id) const {
        const Node& n = nodes_[id];
        if (n.grad_alloc) return n.grad;
        return Tensor(n.real.shape, 0.0);
    }

    std::size_t size() const { return nodes_.size(); }

    // ---- operations ----

    NodeId add(NodeId a, NodeId b) {
        Tensor out = fad::add(nodes_[a].real, nodes_[b].real);
        return push_real(std::move(out), needs(a) || needs(b), [a, b](Tape& t, NodeId self) {
            const Tensor& g = t.nodes_[self].grad;
            if (t.needs(a)) t.accumulate(a, g);
            if (t.needs(b)) t.accumulate(b, g);
        });
    }

    NodeId scale(NodeId x, double s) {
        Tensor out = fad::scale(nodes_[x].real, s);
        return push_real(std::move(out), needs(x), [x, s](Tape& t, NodeId self) {
            if (!t.needs(x)) return;
            Tensor g = t.nodes_[self].grad;
            for (double& v : g.values) v *= s;
            t.accumulate(x, g);
        });
    }

    NodeId sum(NodeId x) {
        double total = 0.0;
        for (double v : nodes_[x].real.values) total += v;
        Tensor out({1});
        out.values[0] = total;
        return push_real(std::move(out), needs(x), [x](Tape& t, NodeId self) {
            if (!t.needs(x)) return;
            Tensor g(t.nodes_[x].real.shape, t.nodes_[self].grad.values[0]);
            t.accumulate(x, g);
        });
    }

    // Cross-correlation with same padding; weights is an {out, in, k, k}
    // node, bias an optional {out} node (-1 when absent).
    NodeId conv2d(NodeId x, NodeId weights, NodeId bias = -1) {
        const Tensor& xv = nodes_[x].real;
        const Tensor& wv = nodes_[weights].real;
        if (wv.rank() != 4)
            throw ShapeError("tape conv2d: weights must be out x in x k x k, got " +
                             detail::shape_str(wv.shape));
        ConvKernelSet ks;
        ks.out_channels = wv.dim(0);
        ks.in_channels = wv.dim(1);
        ks.k = wv.dim(2);
        ks.weights = wv.values;
        if (bias >= 0) ks.bias = nodes_[bias].real.values;
        Tensor out = conv2d_same(xv, ks);
        const bool rg = needs(x) || needs(weights) || (bias >= 0 && needs(bias));
        return push_real(std::move(out), rg, [x, weights, bias](Tape& t, NodeId self) {
            t.conv2d_backward(self, x, weights, bias);
        });
    }

    NodeId relu(NodeId x) {
        Tensor out = nodes_[x].real;
        for (double& v : out.values) v = v > 0.0 ? v : 0.0;
        return push_real(std::move(out), needs(x), [x](Tape& t, NodeId self) {
            if (!t.needs(x)) return;
            Tensor g = t.nodes_[self].grad;
            const Tensor& xv = t.nodes_[x].real;
            for (std::size_t i = 0; i < g.values.size(); ++i)
                if (xv.values[i] <= 0.0) g.values[i] = 0.0;
            t.accumulate(x, g);
        });
    }

    NodeId avg_pool2(NodeId x) {
        const Tensor& xv = nodes_[x].real;
        const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
        if (h % 2 || w % 2)
            throw ShapeError("tape avg_pool2: spatial size must be even, got " +
                             detail::shape_str(xv.shape));
        Tensor out({c, h / 2, w / 2});
        for (std::size_t ch = 0; ch < c; ++ch)
            for (std::size_t i = 0; i < h / 2; ++i)
                for (std::size_t j = 0; j < w / 2; ++j)
                    out.at(ch, i, j) =
                        0.25 * (xv.at(ch, 2 * i, 2 * j) + xv.at(ch, 2 * i, 2 * j + 1) +
                                xv.at(ch, 2 * i + 1, 2 * j) + xv.at(ch, 2 * i + 1, 2 * j + 1));
        return push_real(std::move(out), needs(x), [x](Tape& t, NodeId self) {
            if (!t.needs(x)) return;
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& xv = t.nodes_[x].real;
            Tensor gx(xv.shape, 0.0);
            const std::size_t c = xv.dim(0), h = xv.dim(1), w = xv.dim(2);
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t i = 0; i < h / 2; ++i)
                    for (std::size_t j = 0; j < w / 2; ++j) {
                        const double gv = 0.25 * g.at(ch, i, j);
                        gx.at(ch, 2 * i, 2 * j) += gv;
                        gx.at(ch, 2 * i, 2 * j + 1) += gv;
                        gx.at(ch, 2 * i + 1, 2 * j) += gv;
                        gx.at(ch, 2 * i + 1, 2 * j + 1) += gv;
                    }
            t.accumulate(x, gx);
        });
    }

    NodeId flatten(NodeId x) {
        Tensor out;
        out.shape = {nodes_[x].real.size()};
        out.values = nodes_[x].real.values;
        return push_real(std::move(out), needs(x), [x](Tape& t, NodeId self) {
            if (!t.needs(x)) return;
            Tensor g;
            g.shape = t.nodes_[x].real.shape;
            g.values = t.nodes_[self].grad.values;
            t.accumulate(x, g);
        });
    }

    NodeId l2_normalize(NodeId x) {
        const Tensor& xv = nodes_[x].real;
        double norm = 0.0;
        for (double v : xv.values) norm += v * v;
        norm = std::sqrt(norm);
        Tensor out = xv;
        if (norm > 0.0)
            for (double& v : out.values) v /= norm;
        return push_real(std::move(out), needs(x), [x, norm](Tape& t, NodeId self) {
            if (!t.needs(x) || norm == 0.0) return;
            const Tensor& g = t.nodes_[self].grad;
            const Tensor& y = t.nodes_[self].real;
            double gy = 0.0;
            for (std::size_t i = 0; i < g.values.size(); ++i) gy += g.values[i] * y.values[i];
            Tensor gx(y.shape, 0.0);
            for (std::size_t i = 0; i < g.values.size(); ++i)
                gx.values[i] = (g.values[i] - gy * y.values[i]) / norm;
            t.accumulate(x, gx);
        });
    }

    // Elementwise mean of same-shape nodes (class centroid before
    // renormalization).
    NodeId mean(const std::vector<NodeId>& xs) {
        if (xs.empty()) throw std::invalid_argument("tape mean: no inputs");
        Tensor out(nodes_[xs[0]].real.shape, 0.0);
        for (NodeId id : xs) {
            const Tensor& v = nodes_[id].real;
            if (!v.same_shape(out))
                throw ShapeError("tape mean: mismatched input shapes");
            for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += v.values[i];
        }
        const double inv = 1.0 / static_cast<double>(xs.size());
        for (double& v : out.values) v *= inv;
        bool rg = false;
        for (NodeId id : xs) rg = rg || needs(id);
        return push_real(std::move(out), rg, [xs, inv](Tape& t, NodeId self) {
            Tensor g = t.nodes_[self].grad;
            for (double& v : g.values) v *= inv;
            for (NodeId id : xs)
                if (t.needs(id)) t.accumulate(id, g);
        });
    }

    // Cosine similarity of two vectors; returns a 1-element node.
    NodeId cosine(NodeId a, NodeId b) {
        const Tensor& av = nodes_[a].real;
        const Tensor& bv = nodes_[b].real;
        if (!av.same_shape(bv))
            throw ShapeError("tape cosine: shape " + detail::shape_str(av.shape) + " != " +
                             detail::shape_str(bv.shape));
        double dot = 0.0, ra = 0.0, rb = 0.0;
        for (std::size_t i = 0; i < av.values.size(); ++i) {
            dot += av.values[i] * bv.values[i];
            ra += av.values[i] * av.values[i];
            rb += bv.values[i] * bv.values[i];
        }
        ra = std::sqrt(ra);
        rb = std::sqrt(rb);
        const double c = (ra > 0.0 && rb > 0.0) ? dot / (ra * rb) : 0.0;
        Tensor out({1});
        out.values[0] = c;
        return push_real(std::move(out), needs(a) || needs(b),
                         [a, b, c, ra, rb](Tape& t, NodeId self) {
                             if (ra == 0.0 || rb == 0.0) return;
                             const double g = t.nodes_[self].grad.values[0];
                             const Tensor& av = t.nodes_[a].real;
                             const Tensor& bv = t.nodes_[b].real;
                             if (t.needs(a)) {
                                 Tensor ga(av.shape, 0.0);
                                 for (std::size_t i = 0; i < av.values.size(); ++i)
                                     ga.values[i] = g * (bv.values[i] / (ra * rb) -
                                                         c * av.values[i] / (ra * ra));
                                 t.accumulate(a, ga);
                             }
                             if (t.needs(b)) {
                                 Tensor gb(bv.shape, 0.0);
                                 for (std::size_t i = 0; i < bv.values.size(); ++i)
                                     gb.values[i] = g * (av.values[i] / (ra * rb) -
                                                         c * bv.values[i] / (rb * rb));
                                 t.accumulate(b, gb);
                             }
                         });
    }

    // Concatenation of 1D nodes into one vector (logit row assembly).
    NodeId concat(const std::vector<NodeId>& xs) {
        std::size_t total = 0;
        for (NodeId id : xs) total += nodes_[id].real.size();
        Tensor out({total});
        std::size_t off = 0;
        bool rg = false;
        for (NodeId id : xs) {
            const Tensor& v = nodes_[id].real;
            std::copy(v.values.begin(), v.values.end(), out.values.begin() + off);
            off += v.size();
            rg = rg || needs(id);
        }
        return push_real(std::move(out), rg, [xs](Tape& t, NodeId self) {
            const Tensor& g = t.nodes_[self].grad;
            std::size_t off = 0;
            for (NodeId id : xs) {
                const std::size_t n = t.nodes_[id].real.size();
                if (t.needs(id)) {
                    Tensor gi({n});
                    std::copy(g.values.begin() + off, g.values.begin() + off + n,
                              gi.values.begin());
                    t.accumulate(id, gi);
                }
                off += n;
            }
        });
    }

    // y = W x + b with W {m, n}, x {n}, b {m} (the throwaway pretraining head).
    NodeId linear(NodeId x, NodeId w, NodeId b) {
        const Tensor& xv = nodes_[x].real;
        const Tensor& wv = nodes_[w].real;
        const Tensor& bv = nodes_[b].real;
        const std::size_t m = wv.dim(0), n = wv.dim(1);
        if (xv.size() != n || bv.size() != m)
            throw ShapeError("tape linear: W " + detail::shape_str(wv.shape) + " vs x " +
                             detail::shape_str(xv.shape));
        Tensor out({m});
        for (std::size_t i = 0; i < m; ++i) {
            double acc = bv.values[i];
            for (std::size_t j = 0; j < n; ++j) acc += wv.at(i, j) * xv.values[j];
            out.values[i] = acc;
        }
        return push_real(std::move(out), needs(x) || needs(w) || needs(b),
                         [x, w, b, m, n](Tape& t, NodeId self) {
                             const Tensor& g = t.nodes_[self].grad;
                             const Tensor& xv = t.nodes_[x].real;
                             const Tensor& wv = t.nodes_[w].real;
                             if (t.needs(w)) {
                                 Tensor gw(wv.shape, 0.0);
                                 for (std::size_t i = 0; i < m; ++i)
                                     for (std::size_t j = 0; j < n; ++j)
                                         gw.at(i, j) = g.values[i] * xv.values[j];
                                 t.accumulate(w, gw);
                             }
                             if (t.needs(b)) {
                                 Tensor gb({m});
                                 gb.values = g.values;
                                 t.accumulate(b, gb);
                             }
                             if (t.needs(x)) {
                                 Tensor gx({n});
                                 for (std::size_t j = 0; j < n; ++j) {
                                     double acc = 0.0;
                                     for (std::size_t i = 0; i < m; ++i)
                                         acc += wv.at(i, j) * g.values[i];
                                     gx.values[j] = acc;
                                 }
                                 t.accumulate(x, gx);
                             }
                         });
    }

    // Mean softmax cross-entropy over per-query logit rows.
    NodeId cross_entropy(const std::vector<NodeId>& rows, const std::vector<int>& labels) {
        if (rows.size() != labels.size() || rows.empty())
            throw std::invalid_argument("tape cross_entropy: rows/labels mismatch");
        double loss = 0.0;
        bool rg = false;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const Tensor& row = nodes_[rows[r]].real;
            if (labels[r] < 0 || static_cast<std::size_t>(labels[r]) >= row.size())
                throw std::invalid_argument("tape cross_entropy: label out of range");
            double mx = row.values[0];
            for (double v : row.values) mx = std::max(mx, v);
            double lse = 0.0;
            for (double v : row.values) lse += std::exp(v - mx);
            lse = mx + std::log(lse);
            loss += lse - row.values[labels[r]];
            rg = rg || needs(rows[r]);
        }
        loss /= static_cast<double>(rows.size());
        Tensor out({1});
        out.values[0] = loss;
        return push_real(std::move(out), rg, [rows, labels](Tape& t, NodeId self) {
            const double g = t.nodes_[self].grad.values[0] / static_cast<double>(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                if (!t.needs(rows[r])) continue;
                const Tensor& row = t.nodes_[rows[r]].real;
                double mx = row.values[0];
                for (double v : row.values) mx = std::max(mx, v);
                double z = 0.0;
                for (double v : row.values) z += std::exp(v - mx);
                Tensor gr(row.shape, 0.0);
                for (std::size_t j = 0; j < row.size(); ++j)
                    gr.values[j] = g * std::exp(row.values[j] - mx) / z;
                gr.values[labels[r]] -= g;
                t.accumulate(rows[r], gr);
            }
        });
    }

    // ---- spectral ops (complex nodes) ----

    NodeId dft2(NodeId x) {
        CTensor out = fad::dft2(nodes_[x].real);
        return push_cplx(std::move(out), needs(x), [x](Tape& t, NodeId self) {
            if (!t.needs(x)) return;
            // Adjoint of the shifted forward transform: unshift, then the
            // conjugate-exponent unnormalized sum; keep the real part.
            const CTensor& g = t.nodes_[self].cgrad;
            const std::size_t c = g.dim(0), h = g.dim(1), w = g.dim(2);
            Tensor gx({c, h, w});
            std::vector<std::complex<double>> work(h * w);
            for (std::size_t ch = 0; ch < c; ++ch) {
                detail::shift_plane(&g.values[ch * h * w], work.data(), h, w, /*inverse=*/true);
                detail::dft_rows(work, h, w, -1);
                detail::dft_cols(work, h, w, -1);
                for (std::size_t i = 0; i < h * w; ++i) gx.values[ch * h * w + i] = work[i].real();
            }
            t.accumulate(x, gx);
        });
    }

    NodeId apply_mask(NodeId f, std::shared_ptr<const BandMask> mask) {
        CTensor out = fad::apply_mask(nodes_[f].cplx, *mask);
        return push_cplx(std::move(out), needs(f), [f, mask](Tape& t, NodeId self) {
            if (!t.needs(f)) return;
            CTensor g = t.nodes_[self].cgrad;
            const std::size_t hw = mask->height * mask->width;
            for (std::size_t ch = 0; ch < g.dim(0); ++ch) {
                std::complex<double>* plane = &g.values[ch * hw];
                for (std::size_t i = 0; i < hw; ++i)
                    if (!mask->values[i]) plane[i] = {0.0, 0.0};
            }
            t.caccumulate(f, g);
        });
    }

    NodeId idft2(NodeId f) {
        Idft2Result r = fad::idft2(nodes_[f].cplx);
        if (r.imag_residual > 1e-9)
            throw std::runtime_error("tape idft2: imaginary residual " +
                                     std::to_string(r.imag_residual) + " exceeds 1e-9");
        return push_real(std::move(r.real), needs(f), [f](Tape& t, NodeId self) {
            if (!t.needs(f)) return;
            // Adjoint: unnormalized forward transform of the gradient, scaled
            // by 1/(W*H), then shifted back to centered layout.
            const Tensor& g = t.nodes_[self].grad;
            const std::size_t c = g.dim(0), h = g.dim(1), w = g.dim(2);
            CTensor gf({c, h, w});
            const double norm = 1.0 / (static_cast<double>(w) * static_cast<double>(h));
            std::vector<std::complex<double>> work(h * w);
            for (std::size_t ch = 0; ch < c; ++ch) {
                for (std::size_t i = 0; i < h * w; ++i)
                    work[i] = {g.values[ch * h * w + i], 0.0};
                detail::dft_rows(work, h, w, +1);
                detail::dft_cols(work, h, w, +1);
                for (auto& z : work) z *= norm;
                detail::shift_plane(work.data(), &gf.values[ch * h * w], h, w,
                                    /*inverse=*/false);
            }
            t.caccumulate(f, gf);
        });
    }

    // ---- backward driver ----

    void backward(NodeId loss) {
        Node& ln = nodes_[loss];
        if (ln.is_complex || ln.real.size() != 1)
            throw std::invalid_argument("backward: loss must be a real scalar node");
        if (!ln.requires_grad) return;
        ensure_grad(loss);
        ln.grad.values[0] = 1.0;
        for (NodeId id = loss; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.requires_grad || !n.grad_alloc || !n.backward) continue;
            n.backward(*this, id);
        }
    }

  private:
    struct Node {
        Tensor real;
        CTensor cplx;
        bool is_complex = false;
        bool requires_grad = false;
        bool grad_alloc = false;
        Tensor grad;
        CTensor cgrad;
        std::function<void(Tape&, NodeId)> backward;
    };

    bool needs(NodeId id) const { return nodes_[id].requires_grad; }

    void ensure_grad(NodeId id) {
        Node& n = nodes_[id];
        if (n.grad_alloc) return;
        if (n.is_complex)
            n.cgrad = CTensor(n.cplx.shape);
        else
            n.grad = Tensor(n.real.shape, 0.0);
        n.grad_alloc = true;
    }

    void accumulate(NodeId id, const Tensor& g) {
        ensure_grad(id);
        Node& n = nodes_[id];
        for (std::size_t i = 0; i < g.values.size(); ++i) n.grad.values[i] += g.values[i];
    }

    void caccumulate(NodeId id, const CTensor& g) {
        ensure_grad(id);
        Node& n = nodes_[id];
        for (std::size_t i = 0; i < g.values.size(); ++i) n.cgrad.values[i] += g.values[i];
    }

    NodeId push_real(Tensor value, bool requires_grad,
                     std::function<void(Tape&, NodeId)> backward) {
        Node n;
        n.real = std::move(value);
        n.requires_grad = requires_grad;
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    NodeId push_cplx(CTensor value, bool requires_grad,
                     std::function<void(Tape&, NodeId)> backward) {
        Node n;
        n.cplx = std::move(value);
        n.is_complex = true;
        n.requires_grad = requires_grad;
        n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return static_cast<NodeId>(nodes_.size()) - 1;
    }

    void conv2d_backward(NodeId self, NodeId x, NodeId weights, NodeId bias) {
        const Tensor& g = nodes_[self].grad;
        const Tensor& xv = nodes_[x].real;
        const Tensor& wv = nodes_[weights].real;
        const std::size_t out_c = wv.dim(0), in_c = wv.dim(1), k = wv.dim(2);
        const std::size_t h = xv.dim(1), w = xv.dim(2);
        const long pad = static_cast<long>((k - 1) / 2);

        if (needs(weights)) {
            Tensor gw(wv.shape, 0.0);
            for (std::size_t o = 0; o < out_c; ++o)
                for (std::size_t c = 0; c < in_c; ++c)
                    for (std::size_t p = 0; p < k; ++p)
                        for (std::size_t q = 0; q < k; ++q) {
                            double acc = 0.0;
                            for (std::size_t i = 0; i < h; ++i) {
                                const long ii = static_cast<long>(i) + static_cast<long>(p) - pad;
                                if (ii < 0 || ii >= static_cast<long>(h)) continue;
                                const double* grow = &g.values[(o * h + i) * w];
                                const double* xrow = &xv.values[(c * h + ii) * w];
                                const long off = static_cast<long>(q) - pad;
                                const std::size_t j0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
                                const std::size_t j1 = off > 0 ? w - static_cast<std::size_t>(off) : w;
                                for (std::size_t j = j0; j < j1; ++j)
                                    acc += grow[j] * xrow[static_cast<long>(j) + off];
                            }
                            gw.values[((o * in_c + c) * k + p) * k + q] = acc;
                        }
            accumulate(weights, gw);
        }
        if (bias >= 0 && needs(bias)) {
            Tensor gb({out_c});
            for (std::size_t o = 0; o < out_c; ++o) {
                double acc = 0.0;
                const double* plane = &g.values[(o * h) * w];
                for (std::size_t i = 0; i < h * w; ++i) acc += plane[i];
                gb.values[o] = acc;
            }
            accumulate(bias, gb);
        }
        if (needs(x)) {
            Tensor gx(xv.shape, 0.0);
            for (std::size_t o = 0; o < out_c; ++o)
                for (std::size_t c = 0; c < in_c; ++c) {
                    const double* wk = &wv.values[((o * in_c + c) * k) * k];
                    for (std::size_t p = 0; p < k; ++p)
                        for (std::size_t q = 0; q < k; ++q) {
                            const double wgt = wk[p * k + q];
                            if (wgt == 0.0) continue;
                            // x[c, i+p-pad, j+q-pad] contributes to y[o, i, j]
                            for (std::size_t i = 0; i < h; ++i) {
                                const long ii = static_cast<long>(i) + static_cast<long>(p) - pad;
                                if (ii < 0 || ii >= static_cast<long>(h)) continue;
                                const double* grow = &g.values[(o * h + i) * w];
                                double* xrow = &gx.values[(c * h + ii) * w];
                                const long off = static_cast<long>(q) - pad;
                                const std::size_t j0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
                                const std::size_t j1 = off > 0 ? w - static_cast<std::size_t>(off) : w;
                                for (std::size_t j = j0; j < j1; ++j)
                                    xrow[static_cast<long>(j) + off] += wgt * grow[j];
                            }
                        }
                }
            accumulate(x, gx);
        }
    }

    std::vector<Node> nodes_;
};

}  // namespace fad
