#ifndef DGGCN_AUTODIFF_HPP
#define DGGCN_AUTODIFF_HPP

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Tape records every operation as a node holding its value and a closure
// that pushes the output gradient to the parents. Node ids are assigned in
// creation order, so the node list is topologically sorted and backward() is
// a single reverse sweep. Nodes whose parents are all constants record no
// closure and are skipped during the sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "error.hpp"
#include "tensor.hpp"

namespace dggcn {

class Tape;

/// Handle to a node on a Tape.
class Var {
public:
    Var() = default;

    const Tensor& value() const;
    std::size_t id() const noexcept { return id_; }
    Tape* tape() const noexcept { return tape_; }
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor&)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var constant(Tensor value) {
        check_finite("constant", value);
        nodes_.push_back(Node{std::move(value), {}, false});
        return Var(this, nodes_.size() - 1);
    }

    /// Registers a trainable leaf. Registering the same tensor twice returns the same node.
    Var parameter(const Tensor& p) {
        if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var(this, it->second);
        check_finite("parameter", p);
        nodes_.push_back(Node{p, {}, true});
        param_ids_.emplace(&p, nodes_.size() - 1);
        return Var(this, nodes_.size() - 1);
    }

    Var record(std::string_view op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
        return record(op, std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                      std::move(fn));
    }

    Var record(std::string_view op, Tensor value, std::span<const Var> parents, BackwardFn fn) {
        check_finite(op, value);
        bool rg = false;
        for (const Var& p : parents) {
            if (p.tape() != this) throw Error(std::string(op) + ": operand from a different tape");
            rg = rg || nodes_[p.id()].requires_grad;
        }
        nodes_.push_back(Node{std::move(value), rg ? std::move(fn) : BackwardFn{}, rg});
        return Var(this, nodes_.size() - 1);
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Zero-initialized gradient accumulator of a node; valid only while backward() runs.
    Tensor& grad(std::size_t id) {
        Tensor& g = grads_[id];
        if (g.empty() && !nodes_[id].value.empty()) {
            g = Tensor(nodes_[id].value.rows(), nodes_[id].value.cols());
        }
        return g;
    }

    /// Like grad(), but a first contribution gets an uninitialized buffer and `fresh`
    /// set, and must then overwrite every element instead of adding.
    Tensor& grad_for_write(std::size_t id, bool& fresh) {
        Tensor& g = grads_[id];
        fresh = g.empty();
        if (fresh && !nodes_[id].value.empty()) {
            g = Tensor::uninitialized(nodes_[id].value.rows(), nodes_[id].value.cols());
        }
        return g;
    }

    /// Gradients of a scalar loss with respect to `params`, aligned with the input order.
    /// Parameters that were never registered, or that the loss does not depend on, get zeros.
    std::vector<Tensor> backward(Var loss, std::span<const Tensor* const> params) {
        if (loss.tape() != this) throw Error("backward: loss belongs to a different tape");
        const Tensor& lv = nodes_[loss.id()].value;
        if (lv.size() != 1) {
            throw ShapeError("backward requires a scalar loss, got shape " + lv.shape_string());
        }
        grads_.assign(nodes_.size(), Tensor{});
        grads_[loss.id()] = Tensor::scalar(1.0);
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            Node& n = nodes_[i];
            if (!n.backward || grads_[i].empty()) continue;
            n.backward(*this, grads_[i]);
        }
        std::vector<Tensor> out;
        out.reserve(params.size());
        for (const Tensor* p : params) {
            auto it = param_ids_.find(p);
            if (it != param_ids_.end() && !grads_[it->second].empty()) {
                out.push_back(std::move(grads_[it->second]));
            } else {
                out.emplace_back(p->rows(), p->cols());
            }
        }
        grads_.clear();
        return out;
    }

private:
    struct Node {
        Tensor value;
        BackwardFn backward;
        bool requires_grad = false;
    };

    static void check_finite(std::string_view op, const Tensor& t) {
        const Eigen::Map<const Eigen::ArrayXd> a(t.data().data(), static_cast<Eigen::Index>(t.size()));
        // x * 0 is 0 for finite x and NaN otherwise; unlike allFinite() the sum vectorizes.
        if (!((a * 0.0).sum() == 0.0)) {
            throw NumericError(std::string(op) + " produced non-finite values (shape " +
                               t.shape_string() + ")");
        }
    }

    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::unordered_map<const Tensor*, std::size_t> param_ids_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const RowMat> mat(const Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}
inline Eigen::Map<RowMat> mat(Tensor& t) {
    return {t.data().data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols())};
}

inline void require_same_tape(const Var& a, const Var& b, std::string_view op) {
    if (a.tape() == nullptr || a.tape() != b.tape()) {
        throw Error(std::string(op) + ": operands must live on the same tape");
    }
}

[[noreturn]] inline void shape_mismatch(std::string_view op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                     b.shape_string());
}

/// Adds `expr` into the gradient of node `id`, assigning on the first contribution.
template <class Expr>
void accumulate(Tape& t, std::size_t id, const Expr& expr) {
    bool fresh = false;
    auto g = mat(t.grad_for_write(id, fresh));
    if (fresh) {
        g.noalias() = expr;
    } else {
        g.noalias() += expr;
    }
}

} // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    detail::require_same_tape(a, b, "matmul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.rows()) detail::shape_mismatch("matmul", av, bv);
    Tensor out = av.cols() > 0 ? Tensor::uninitialized(av.rows(), bv.cols()) : Tensor(av.rows(), bv.cols());
    if (!out.empty() && av.cols() > 0) detail::mat(out).noalias() = detail::mat(av) * detail::mat(bv);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record("matmul", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) detail::accumulate(t, ia, detail::mat(g) * detail::mat(t.value(ib)).transpose());
        if (t.requires_grad(ib)) detail::accumulate(t, ib, detail::mat(t.value(ia)).transpose() * detail::mat(g));
    });
}

/// Elementwise sum. `b` may have the same shape as `a` or be a 1 x cols row broadcast over rows.
inline Var add(const Var& a, const Var& b) {
    detail::require_same_tape(a, b, "add");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const bool row_bcast = bv.rows() == 1 && bv.cols() == av.cols() && av.rows() != 1;
    if (!av.same_shape(bv) && !row_bcast) detail::shape_mismatch("add", av, bv);
    Tensor out = av;
    if (row_bcast) {
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) row[c] += bv[c];
        }
    } else {
        detail::mat(out) += detail::mat(bv);
    }
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record("add", std::move(out), {a, b}, [ia, ib, row_bcast](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) detail::accumulate(t, ia, detail::mat(g));
        if (t.requires_grad(ib)) {
            if (row_bcast) {
                detail::accumulate(t, ib, detail::mat(g).colwise().sum());
            } else {
                detail::accumulate(t, ib, detail::mat(g));
            }
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_tape(a, b, "sub");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (!av.same_shape(bv)) detail::shape_mismatch("sub", av, bv);
    Tensor out = av;
    detail::mat(out) -= detail::mat(bv);
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record("sub", std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
        if (t.requires_grad(ia)) detail::accumulate(t, ia, detail::mat(g));
        if (t.requires_grad(ib)) detail::accumulate(t, ib, -detail::mat(g));
    });
}

/// Elementwise product. `b` may match `a`, be a 1 x cols row, or be a rows x 1 column
/// (per-row scale factor).
inline Var mul(const Var& a, const Var& b) {
    detail::require_same_tape(a, b, "mul");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    enum class Mode { Same, Row, Col };
    Mode mode;
    if (av.same_shape(bv)) {
        mode = Mode::Same;
    } else if (bv.rows() == 1 && bv.cols() == av.cols()) {
        mode = Mode::Row;
    } else if (bv.cols() == 1 && bv.rows() == av.rows()) {
        mode = Mode::Col;
    } else {
        detail::shape_mismatch("mul", av, bv);
    }
    Tensor out = av;
    switch (mode) {
    case Mode::Same:
        detail::mat(out).array() *= detail::mat(bv).array();
        break;
    case Mode::Row:
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) row[c] *= bv[c];
        }
        break;
    case Mode::Col:
        for (std::size_t r = 0; r < out.rows(); ++r) {
            const double s = bv[r];
            for (double& x : out.row(r)) x *= s;
        }
        break;
    }
    const std::size_t ia = a.id(), ib = b.id();
    return a.tape()->record("mul", std::move(out), {a, b}, [ia, ib, mode](Tape& t, const Tensor& g) {
        const auto ga = detail::mat(g).array();
        const auto av = detail::mat(t.value(ia)).array();
        const Tensor& bv = t.value(ib);
        const auto bm = detail::mat(bv).array();
        if (t.requires_grad(ia)) {
            switch (mode) {
            case Mode::Same: detail::accumulate(t, ia, (ga * bm).matrix()); break;
            case Mode::Row: detail::accumulate(t, ia, (ga.rowwise() * bm.row(0)).matrix()); break;
            case Mode::Col: detail::accumulate(t, ia, (ga.colwise() * bm.col(0)).matrix()); break;
            }
        }
        if (t.requires_grad(ib)) {
            switch (mode) {
            case Mode::Same: detail::accumulate(t, ib, (ga * av).matrix()); break;
            case Mode::Row: detail::accumulate(t, ib, (ga * av).matrix().colwise().sum()); break;
            case Mode::Col: detail::accumulate(t, ib, (ga * av).matrix().rowwise().sum()); break;
            }
        }
    });
}

inline Var scale(const Var& a, double s) {
    Tensor out = a.value();
    detail::mat(out) *= s;
    const std::size_t ia = a.id();
    return a.tape()->record("scale", std::move(out), {a}, [ia, s](Tape& t, const Tensor& g) {
        detail::accumulate(t, ia, s * detail::mat(g));
    });
}

inline Var square(const Var& a) {
    Tensor out = a.value();
    detail::mat(out).array() *= detail::mat(out).array();
    const std::size_t ia = a.id();
    return a.tape()->record("square", std::move(out), {a}, [ia](Tape& t, const Tensor& g) {
        detail::accumulate(t, ia, (2.0 * detail::mat(g).array() * detail::mat(t.value(ia)).array()).matrix());
    });
}

/// Shifted softplus ln(0.5 e^x + 0.5) of a single value, evaluated as
/// max(x, 0) + log1p(exp(-|x|)) - ln 2 so that large |x| neither overflows nor cancels.
inline double ssp(double x) noexcept {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))) - std::log(2.0);
}

/// Elementwise shifted softplus. The derivative is the logistic sigmoid.
inline Var ssp(const Var& a) {
    const Tensor& av = a.value();
    Tensor out = Tensor::uninitialized(av.rows(), av.cols());
    Tensor deriv = Tensor::uninitialized(av.rows(), av.cols());
    constexpr double ln2 = 0.69314718055994530942;
    // Blocks small enough to stay in L1 so the four passes below read memory once.
    constexpr std::size_t block = 512;
    const std::size_t n = av.size();
    for (std::size_t begin = 0; begin < n; begin += block) {
        const auto len = static_cast<Eigen::Index>(std::min(block, n - begin));
        const Eigen::Map<const Eigen::ArrayXd> x(av.data().data() + begin, len);
        Eigen::Map<Eigen::ArrayXd> e(deriv.data().data() + begin, len);
        Eigen::Map<Eigen::ArrayXd> y(out.data().data() + begin, len);
        e = (-x.abs()).exp();
        // e lies in (0, 1], so log(1 + e) carries full absolute precision here and,
        // unlike log1p, vectorizes.
        y = x.max(0.0) + (1.0 + e).log() - ln2;
        // d/dx = sigmoid(x), from the same exp(-|x|).
        e = (x >= 0.0).select(1.0, e) / (1.0 + e);
    }
    const std::size_t ia = a.id();
    return a.tape()->record("ssp", std::move(out), {a},
                            [ia, d = std::move(deriv)](Tape& t, const Tensor& g) {
                                detail::accumulate(t, ia, (detail::mat(g).array() * detail::mat(d).array()).matrix());
                            });
}

inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const std::size_t ia = a.id();
    return a.tape()->record("sum", Tensor::scalar(s), {a}, [ia](Tape& t, const Tensor& g) {
        const Tensor& av = t.value(ia);
        detail::accumulate(t, ia, detail::RowMat::Constant(static_cast<Eigen::Index>(av.rows()),
                                                           static_cast<Eigen::Index>(av.cols()), g[0]));
    });
}

inline Var mean(const Var& a) {
    const std::size_t n = a.value().size();
    if (n == 0) throw ShapeError("mean of an empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(n));
}

/// Stacks tensors with equal column counts vertically.
inline Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows of zero tensors");
    Tape* tape = parts.front().tape();
    const std::size_t cols = parts.front().cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        if (p.tape() != tape) throw Error("concat_rows: operands must live on the same tape");
        if (p.cols() != cols) detail::shape_mismatch("concat_rows", parts.front().value(), p.value());
        rows += p.rows();
    }
    Tensor out = Tensor::uninitialized(rows, cols);
    std::vector<std::size_t> ids;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const auto src = p.value().data();
        std::copy(src.begin(), src.end(), out.data().begin() + static_cast<std::ptrdiff_t>(off * cols));
        off += p.rows();
        ids.push_back(p.id());
    }
    return tape->record("concat_rows", std::move(out), parts,
                        [ids = std::move(ids), cols](Tape& t, const Tensor& g) {
                            std::size_t off = 0;
                            for (std::size_t id : ids) {
                                const std::size_t r = t.value(id).rows();
                                if (t.requires_grad(id)) {
                                    detail::accumulate(t, id, detail::mat(g).middleRows(static_cast<Eigen::Index>(off),
                                                                                        static_cast<Eigen::Index>(r)));
                                }
                                off += r;
                            }
                        });
}

/// out[r] = a[indices[r]].
inline Var gather_rows(const Var& a, std::span<const std::size_t> indices) {
    const Tensor& av = a.value();
    const std::size_t cols = av.cols();
    Tensor out = Tensor::uninitialized(indices.size(), cols);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const std::size_t src = indices[r];
        if (src >= av.rows()) {
            throw ShapeError("gather_rows: index " + std::to_string(src) + " out of range for " +
                             av.shape_string());
        }
        const auto in = av.row(src);
        std::copy(in.begin(), in.end(), out.row(r).begin());
    }
    const std::size_t ia = a.id();
    return a.tape()->record(
        "gather_rows", std::move(out), {a},
        [ia, idx = std::vector<std::size_t>(indices.begin(), indices.end())](Tape& t, const Tensor& g) {
            Tensor& ga = t.grad(ia);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                auto dst = ga.row(idx[r]);
                const auto src = g.row(r);
                for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
            }
        });
}

/// out[segments[r]] += messages[r] for a result with `num_segments` rows.
inline Var segment_sum(const Var& messages, std::span<const std::size_t> segments,
                       std::size_t num_segments) {
    const Tensor& mv = messages.value();
    if (segments.size() != mv.rows()) {
        throw ShapeError("segment_sum: " + std::to_string(segments.size()) + " segment ids for " +
                         mv.shape_string() + " messages");
    }
    Tensor out(num_segments, mv.cols());
    for (std::size_t r = 0; r < segments.size(); ++r) {
        const std::size_t s = segments[r];
        if (s >= num_segments) {
            throw ShapeError("segment_sum: segment " + std::to_string(s) + " out of range [0, " +
                             std::to_string(num_segments) + ")");
        }
        auto dst = out.row(s);
        const auto src = mv.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
    const std::size_t im = messages.id();
    return messages.tape()->record(
        "segment_sum", std::move(out), {messages},
        [im, seg = std::vector<std::size_t>(segments.begin(), segments.end())](Tape& t, const Tensor& g) {
            // Each message row receives exactly one gradient row.
            bool fresh = false;
            Tensor& gm = t.grad_for_write(im, fresh);
            for (std::size_t r = 0; r < seg.size(); ++r) {
                auto dst = gm.row(r);
                const auto src = g.row(seg[r]);
                if (fresh) {
                    std::copy(src.begin(), src.end(), dst.begin());
                } else {
                    for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
                }
            }
        });
}

/// x W (+ b when `bias` is non-null, a 1 x out row added to every row).
inline Var dense(const Var& x, const Var& weight, const Var* bias = nullptr) {
    if (!bias) return matmul(x, weight);
    detail::require_same_tape(x, weight, "dense");
    detail::require_same_tape(x, *bias, "dense");
    const Tensor& xv = x.value();
    const Tensor& wv = weight.value();
    const Tensor& bv = bias->value();
    if (xv.cols() != wv.rows()) detail::shape_mismatch("dense", xv, wv);
    if (bv.rows() != 1 || bv.cols() != wv.cols()) detail::shape_mismatch("dense bias", wv, bv);
    Tensor out = Tensor::uninitialized(xv.rows(), wv.cols());
    if (!out.empty()) {
        auto o = detail::mat(out);
        if (xv.cols() > 0) {
            o.noalias() = detail::mat(xv) * detail::mat(wv);
        } else {
            o.setZero();
        }
        o.rowwise() += detail::mat(bv).row(0);
    }
    const std::size_t ix = x.id(), iw = weight.id(), ib = bias->id();
    const Var parents[] = {x, weight, *bias};
    return x.tape()->record("dense", std::move(out), parents, [ix, iw, ib](Tape& t, const Tensor& g) {
        if (t.requires_grad(ix)) detail::accumulate(t, ix, detail::mat(g) * detail::mat(t.value(iw)).transpose());
        if (t.requires_grad(iw)) detail::accumulate(t, iw, detail::mat(t.value(ix)).transpose() * detail::mat(g));
        if (t.requires_grad(ib)) detail::accumulate(t, ib, detail::mat(g).colwise().sum());
    });
}

} // namespace dggcn

#endif // DGGCN_AUTODIFF_HPP
