#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "bnnlab/autodiff/primitives.hpp"
#include "bnnlab/autodiff/tape.hpp"
#include "bnnlab/norm/batch_norm.hpp"
#include "bnnlab/norm/center_scale.hpp"

namespace bnnlab::ad {

// ---------------------------------------------------------------------------
// Layer-level ops

inline Var linear(Tape& t, Var x, Var w) {
    return t.record(OpKind::Linear, linear_forward(t.value(x), t.value(w)),
                    [x, w](Tape& tp, const Matrix& g) {
                        auto grads = linear_backward(tp.value(x), tp.value(w), g);
                        tp.accumulate(x, std::move(grads.dx));
                        tp.accumulate(w, std::move(grads.dw));
                    });
}

/// x + row, broadcasting a 1 x K row over the batch.
inline Var add_row(Tape& t, Var x, Var row) {
    return t.record(OpKind::AddRow, add_row_forward(t.value(x), t.value(row)),
                    [x, row](Tape& tp, const Matrix& g) {
                        tp.accumulate(x, g);
                        tp.accumulate(row, column_sum(g));
                    });
}

inline Var sign_ste(Tape& t, Var x, SteMode mode = SteMode::Clipped) {
    return t.record(OpKind::SignSte, sign_forward(t.value(x)),
                    [x, mode](Tape& tp, const Matrix& g) {
                        tp.accumulate(x, sign_backward_ste(tp.value(x), g, mode));
                    });
}

inline Var relu(Tape& t, Var x) {
    return t.record(OpKind::Relu, relu_forward(t.value(x)), [x](Tape& tp, const Matrix& g) {
        tp.accumulate(x, relu_backward(tp.value(x), g));
    });
}

struct BatchNormResult {
    Var z;
    norm::BatchStats stats;
};

/// Fused batch norm whose backward is the closed-form three-term expression.
inline BatchNormResult batch_norm(Tape& t, Var s, Var gamma, Var beta,
                                  const norm::NormalizerConfig& cfg, norm::Mode mode,
                                  const norm::RunningStats* running = nullptr) {
    norm::BNForward fwd =
        norm::bn_forward(t.value(s), {t.value(gamma), t.value(beta)}, cfg, mode, running);
    norm::BatchStats stats = fwd.stats;
    Var z = t.record(
        OpKind::BatchNorm, std::move(fwd.z),
        [s, gamma, beta, mode, shat = std::move(fwd.shat), st = std::move(fwd.stats)](
            Tape& tp, const Matrix& g) {
            const norm::BNParams params{tp.value(gamma), tp.value(beta)};
            if (mode == norm::Mode::Train) {
                tp.accumulate(s, norm::bn_backward_closed(shat, g, params, st));
            } else {
                Matrix ds = g;
                for (std::size_t b = 0; b < ds.rows(); ++b) {
                    for (std::size_t k = 0; k < ds.cols(); ++k) {
                        ds(b, k) *= params.gamma(0, k) / st.stddev[k];
                    }
                }
                tp.accumulate(s, std::move(ds));
            }
            auto pg = norm::bn_param_grads(shat, g);
            tp.accumulate(gamma, std::move(pg.dgamma));
            tp.accumulate(beta, std::move(pg.dbeta));
        });
    return {z, std::move(stats)};
}

struct CenterScaleResult {
    Var z;
    std::vector<double> mean;
};

inline CenterScaleResult center_scale(Tape& t, Var s, double c, norm::Mode mode,
                                      const std::vector<double>* running_mean = nullptr) {
    auto fwd = norm::center_scale_forward(t.value(s), c, mode, running_mean);
    Var z = t.record(OpKind::CenterScale, std::move(fwd.z), [s, c, mode](Tape& tp, const Matrix& g) {
        if (mode == norm::Mode::Train) {
            tp.accumulate(s, norm::center_scale_backward(g, c));
        } else {
            tp.accumulate(s, c * g);
        }
    });
    return {z, std::move(fwd.mean)};
}

/// Mean cross-entropy of softmax(logits) against integer labels; a 1 x 1 node.
inline Var softmax_cross_entropy(Tape& t, Var logits, std::vector<int> labels) {
    const double loss = softmax_cross_entropy_forward(t.value(logits), labels);
    return t.record(OpKind::SoftmaxCrossEntropy, Matrix(1, 1, loss),
                    [logits, labels = std::move(labels)](Tape& tp, const Matrix& g) {
                        tp.accumulate(logits,
                                      g(0, 0) * softmax_cross_entropy_backward(tp.value(logits), labels));
                    });
}

/// sum(x .* weights) as a 1 x 1 node; used to reduce a graph output to a scalar.
inline Var weighted_sum(Tape& t, Var x, Matrix weights) {
    require_same_shape(t.value(x), weights, "weighted_sum");
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        total += t.value(x)[i] * weights[i];
    }
    return t.record(OpKind::WeightedSum, Matrix(1, 1, total),
                    [x, w = std::move(weights)](Tape& tp, const Matrix& g) {
                        tp.accumulate(x, g(0, 0) * w);
                    });
}

// ---------------------------------------------------------------------------
// Elementary ops, enough to compose batch norm from scratch.

namespace detail {

inline void check_row(const Matrix& x, const Matrix& row, const char* op) {
    if (row.rows() != 1 || row.cols() != x.cols()) {
        throw ShapeError(std::string(op) + ": " + x.shape_string() + " with " + row.shape_string());
    }
}

template <class F>
Matrix broadcast_row(const Matrix& x, const Matrix& row, F&& f) {
    Matrix out(x.rows(), x.cols());
    for (std::size_t b = 0; b < x.rows(); ++b) {
        for (std::size_t k = 0; k < x.cols(); ++k) {
            out(b, k) = f(x(b, k), row(0, k));
        }
    }
    return out;
}

}  // namespace detail

inline Var sub_row(Tape& t, Var x, Var row) {
    detail::check_row(t.value(x), t.value(row), "sub_row");
    return t.record(OpKind::SubRow,
                    detail::broadcast_row(t.value(x), t.value(row),
                                          [](double a, double r) { return a - r; }),
                    [x, row](Tape& tp, const Matrix& g) {
                        tp.accumulate(x, g);
                        tp.accumulate(row, -1.0 * column_sum(g));
                    });
}

inline Var mul_row(Tape& t, Var x, Var row) {
    detail::check_row(t.value(x), t.value(row), "mul_row");
    return t.record(OpKind::MulRow,
                    detail::broadcast_row(t.value(x), t.value(row),
                                          [](double a, double r) { return a * r; }),
                    [x, row](Tape& tp, const Matrix& g) {
                        const Matrix& xv = tp.value(x);
                        const Matrix& rv = tp.value(row);
                        tp.accumulate(x, detail::broadcast_row(g, rv, [](double gi, double r) {
                                          return gi * r;
                                      }));
                        tp.accumulate(row, column_sum(hadamard(g, xv)));
                    });
}

inline Var div_row(Tape& t, Var x, Var row) {
    detail::check_row(t.value(x), t.value(row), "div_row");
    return t.record(OpKind::DivRow,
                    detail::broadcast_row(t.value(x), t.value(row),
                                          [](double a, double r) { return a / r; }),
                    [x, row](Tape& tp, const Matrix& g) {
                        const Matrix& xv = tp.value(x);
                        const Matrix& rv = tp.value(row);
                        tp.accumulate(x, detail::broadcast_row(g, rv, [](double gi, double r) {
                                          return gi / r;
                                      }));
                        Matrix dr(1, rv.cols());
                        for (std::size_t b = 0; b < xv.rows(); ++b) {
                            for (std::size_t k = 0; k < xv.cols(); ++k) {
                                dr(0, k) -= g(b, k) * xv(b, k) / (rv(0, k) * rv(0, k));
                            }
                        }
                        tp.accumulate(row, std::move(dr));
                    });
}

inline Var column_mean(Tape& t, Var x) {
    return t.record(OpKind::ColumnMean, bnnlab::column_mean(t.value(x)),
                    [x](Tape& tp, const Matrix& g) {
                        const Matrix& xv = tp.value(x);
                        const double inv = 1.0 / static_cast<double>(xv.rows());
                        Matrix dx(xv.rows(), xv.cols());
                        for (std::size_t b = 0; b < xv.rows(); ++b) {
                            for (std::size_t k = 0; k < xv.cols(); ++k) {
                                dx(b, k) = g(0, k) * inv;
                            }
                        }
                        tp.accumulate(x, std::move(dx));
                    });
}

inline Var square(Tape& t, Var x) {
    return t.record(OpKind::Square, map(t.value(x), [](double v) { return v * v; }),
                    [x](Tape& tp, const Matrix& g) {
                        tp.accumulate(x, zip(tp.value(x), g,
                                             [](double v, double gi) { return 2.0 * v * gi; }));
                    });
}

inline Var sqrt(Tape& t, Var x) {
    return t.record(OpKind::Sqrt, map(t.value(x), [](double v) { return std::sqrt(v); }),
                    [x](Tape& tp, const Matrix& g) {
                        tp.accumulate(x, zip(tp.value(x), g, [](double v, double gi) {
                                          return gi / (2.0 * std::sqrt(v));
                                      }));
                    });
}

inline Var add_scalar(Tape& t, Var x, double c) {
    return t.record(OpKind::AddScalar, map(t.value(x), [c](double v) { return v + c; }),
                    [x](Tape& tp, const Matrix& g) { tp.accumulate(x, g); });
}

/// Batch norm assembled from elementary ops; an independent route to the fused op.
inline Var batch_norm_composed(Tape& t, Var s, Var gamma, Var beta, double epsilon) {
    Var mean = column_mean(t, s);
    Var centered = sub_row(t, s, mean);
    Var var = column_mean(t, square(t, centered));
    Var stddev = sqrt(t, add_scalar(t, var, epsilon));
    Var shat = div_row(t, centered, stddev);
    return add_row(t, mul_row(t, shat, gamma), beta);
}

}  // namespace bnnlab::ad
