#include "puf/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace puf::nn {

Mat mm(const Mat& a, const Mat& b) {
    assert(a.cols == b.rows);
    Mat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.d.data() + static_cast<std::size_t>(i) * a.cols;
        double* crow = c.d.data() + static_cast<std::size_t>(i) * c.cols;
        for (int k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = b.d.data() + static_cast<std::size_t>(k) * b.cols;
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Mat mm_t1(const Mat& a, const Mat& b) {
    assert(a.rows == b.rows);
    Mat c(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.d.data() + static_cast<std::size_t>(k) * a.cols;
        const double* brow = b.d.data() + static_cast<std::size_t>(k) * b.cols;
        for (int i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c.d.data() + static_cast<std::size_t>(i) * c.cols;
            for (int j = 0; j < b.cols; ++j) crow[j] += av * brow[j];
        }
    }
    return c;
}

Mat mm_t2(const Mat& a, const Mat& b) {
    assert(a.cols == b.cols);
    Mat c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.d.data() + static_cast<std::size_t>(i) * a.cols;
        double* crow = c.d.data() + static_cast<std::size_t>(i) * c.cols;
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.d.data() + static_cast<std::size_t>(j) * b.cols;
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
    return c;
}

Ref Tape::push(Mat val, bool needs_grad, std::function<void(Node&)> back) {
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.val = std::move(val);
    n.grad = Mat(n.val.rows, n.val.cols);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    return &n;
}

Ref Tape::leaf(const Mat& v, bool needs_grad) { return push(v, needs_grad, nullptr); }

Ref Tape::scalar(double v) {
    Mat m(1, 1);
    m.d[0] = v;
    return leaf(m, false);
}

Ref Tape::add(Ref a, Ref b) {
    assert(a->val.same_shape(b->val));
    Mat out = a->val;
    for (std::size_t i = 0; i < out.size(); ++i) out.d[i] += b->val.d[i];
    return push(std::move(out), a->needs_grad || b->needs_grad, [a, b](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            a->grad.d[i] += n.grad.d[i];
            b->grad.d[i] += n.grad.d[i];
        }
    });
}

Ref Tape::sub(Ref a, Ref b) {
    assert(a->val.same_shape(b->val));
    Mat out = a->val;
    for (std::size_t i = 0; i < out.size(); ++i) out.d[i] -= b->val.d[i];
    return push(std::move(out), a->needs_grad || b->needs_grad, [a, b](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            a->grad.d[i] += n.grad.d[i];
            b->grad.d[i] -= n.grad.d[i];
        }
    });
}

Ref Tape::mul(Ref a, Ref b) {
    assert(a->val.same_shape(b->val));
    Mat out = a->val;
    for (std::size_t i = 0; i < out.size(); ++i) out.d[i] *= b->val.d[i];
    return push(std::move(out), a->needs_grad || b->needs_grad, [a, b](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            a->grad.d[i] += n.grad.d[i] * b->val.d[i];
            b->grad.d[i] += n.grad.d[i] * a->val.d[i];
        }
    });
}

Ref Tape::scale(Ref a, double k) {
    Mat out = a->val;
    for (auto& v : out.d) v *= k;
    return push(std::move(out), a->needs_grad, [a, k](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) a->grad.d[i] += n.grad.d[i] * k;
    });
}

Ref Tape::add_rowvec(Ref a, Ref v) {
    assert(v->val.rows == 1 && v->val.cols == a->val.cols);
    Mat out = a->val;
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) += v->val.at(0, j);
    return push(std::move(out), a->needs_grad || v->needs_grad, [a, v](Node& n) {
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) {
                a->grad.at(i, j) += n.grad.at(i, j);
                v->grad.at(0, j) += n.grad.at(i, j);
            }
    });
}

Ref Tape::matmul(Ref a, Ref b) {
    Mat out = mm(a->val, b->val);
    return push(std::move(out), a->needs_grad || b->needs_grad, [a, b](Node& n) {
        Mat da = mm_t2(n.grad, b->val);
        Mat db = mm_t1(a->val, n.grad);
        for (std::size_t i = 0; i < da.size(); ++i) a->grad.d[i] += da.d[i];
        for (std::size_t i = 0; i < db.size(); ++i) b->grad.d[i] += db.d[i];
    });
}

Ref Tape::transpose(Ref a) {
    Mat out(a->val.cols, a->val.rows);
    for (int i = 0; i < a->val.rows; ++i)
        for (int j = 0; j < a->val.cols; ++j) out.at(j, i) = a->val.at(i, j);
    return push(std::move(out), a->needs_grad, [a](Node& n) {
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j) a->grad.at(j, i) += n.grad.at(i, j);
    });
}

Ref Tape::relu(Ref a) {
    Mat out = a->val;
    for (auto& v : out.d) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), a->needs_grad, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (a->val.d[i] > 0.0) a->grad.d[i] += n.grad.d[i];
    });
}

Ref Tape::softplus(Ref a) {
    Mat out = a->val;
    for (auto& v : out.d) v = v > 30.0 ? v : std::log1p(std::exp(v));
    return push(std::move(out), a->needs_grad, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-a->val.d[i]));
            a->grad.d[i] += n.grad.d[i] * s;
        }
    });
}

Ref Tape::softmax_rows(Ref a) {
    Mat out = a->val;
    for (int i = 0; i < out.rows; ++i) {
        double mx = out.at(i, 0);
        for (int j = 1; j < out.cols; ++j) mx = std::max(mx, out.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < out.cols; ++j) {
            out.at(i, j) = std::exp(out.at(i, j) - mx);
            sum += out.at(i, j);
        }
        for (int j = 0; j < out.cols; ++j) out.at(i, j) /= sum;
    }
    return push(std::move(out), a->needs_grad, [a](Node& n) {
        for (int i = 0; i < n.grad.rows; ++i) {
            double dot = 0.0;
            for (int j = 0; j < n.grad.cols; ++j) dot += n.grad.at(i, j) * n.val.at(i, j);
            for (int j = 0; j < n.grad.cols; ++j)
                a->grad.at(i, j) += n.val.at(i, j) * (n.grad.at(i, j) - dot);
        }
    });
}

Ref Tape::layer_norm_rows(Ref a, Ref gain, Ref bias) {
    const int R = a->val.rows, C = a->val.cols;
    assert(gain->val.cols == C && bias->val.cols == C);
    constexpr double kEps = 1e-5;
    Mat out(R, C);
    auto mean_std = std::make_shared<std::vector<std::pair<double, double>>>(
        static_cast<std::size_t>(R));
    for (int i = 0; i < R; ++i) {
        double mu = 0.0;
        for (int j = 0; j < C; ++j) mu += a->val.at(i, j);
        mu /= C;
        double var = 0.0;
        for (int j = 0; j < C; ++j) {
            double dlt = a->val.at(i, j) - mu;
            var += dlt * dlt;
        }
        var /= C;
        double sd = std::sqrt(var + kEps);
        (*mean_std)[static_cast<std::size_t>(i)] = {mu, sd};
        for (int j = 0; j < C; ++j)
            out.at(i, j) = (a->val.at(i, j) - mu) / sd * gain->val.at(0, j) +
                           bias->val.at(0, j);
    }
    bool ng = a->needs_grad || gain->needs_grad || bias->needs_grad;
    return push(std::move(out), ng, [a, gain, bias, mean_std](Node& n) {
        const int R = n.grad.rows, C = n.grad.cols;
        for (int i = 0; i < R; ++i) {
            auto [mu, sd] = (*mean_std)[static_cast<std::size_t>(i)];
            double sum_dy_g = 0.0, sum_dy_g_xhat = 0.0;
            for (int j = 0; j < C; ++j) {
                double xhat = (a->val.at(i, j) - mu) / sd;
                double dyg = n.grad.at(i, j) * gain->val.at(0, j);
                sum_dy_g += dyg;
                sum_dy_g_xhat += dyg * xhat;
                gain->grad.at(0, j) += n.grad.at(i, j) * xhat;
                bias->grad.at(0, j) += n.grad.at(i, j);
            }
            for (int j = 0; j < C; ++j) {
                double xhat = (a->val.at(i, j) - mu) / sd;
                double dyg = n.grad.at(i, j) * gain->val.at(0, j);
                a->grad.at(i, j) +=
                    (dyg - sum_dy_g / C - xhat * sum_dy_g_xhat / C) / sd;
            }
        }
    });
}

Ref Tape::mean_rows(Ref a) {
    const int R = a->val.rows, C = a->val.cols;
    Mat out(1, C);
    for (int i = 0; i < R; ++i)
        for (int j = 0; j < C; ++j) out.at(0, j) += a->val.at(i, j) / R;
    return push(std::move(out), a->needs_grad, [a, R](Node& n) {
        for (int i = 0; i < R; ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                a->grad.at(i, j) += n.grad.at(0, j) / R;
    });
}

Ref Tape::row_range(Ref a, int r0, int nrows) {
    assert(r0 >= 0 && r0 + nrows <= a->val.rows);
    Mat out(nrows, a->val.cols);
    for (int i = 0; i < nrows; ++i)
        for (int j = 0; j < out.cols; ++j) out.at(i, j) = a->val.at(r0 + i, j);
    return push(std::move(out), a->needs_grad, [a, r0](Node& n) {
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                a->grad.at(r0 + i, j) += n.grad.at(i, j);
    });
}

Ref Tape::col_range(Ref a, int c0, int ncols) {
    assert(c0 >= 0 && c0 + ncols <= a->val.cols);
    Mat out(a->val.rows, ncols);
    for (int i = 0; i < out.rows; ++i)
        for (int j = 0; j < ncols; ++j) out.at(i, j) = a->val.at(i, c0 + j);
    return push(std::move(out), a->needs_grad, [a, c0](Node& n) {
        for (int i = 0; i < n.grad.rows; ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                a->grad.at(i, c0 + j) += n.grad.at(i, j);
    });
}

Ref Tape::concat_rows(const std::vector<Ref>& parts) {
    assert(!parts.empty());
    int rows = 0;
    const int cols = parts[0]->val.cols;
    bool ng = false;
    for (Ref p : parts) {
        assert(p->val.cols == cols);
        rows += p->val.rows;
        ng = ng || p->needs_grad;
    }
    Mat out(rows, cols);
    int r = 0;
    for (Ref p : parts) {
        for (int i = 0; i < p->val.rows; ++i)
            for (int j = 0; j < cols; ++j) out.at(r + i, j) = p->val.at(i, j);
        r += p->val.rows;
    }
    auto parts_copy = parts;
    return push(std::move(out), ng, [parts_copy](Node& n) {
        int r = 0;
        for (Ref p : parts_copy) {
            for (int i = 0; i < p->val.rows; ++i)
                for (int j = 0; j < p->val.cols; ++j)
                    p->grad.at(i, j) += n.grad.at(r + i, j);
            r += p->val.rows;
        }
    });
}

Ref Tape::concat_cols(const std::vector<Ref>& parts) {
    assert(!parts.empty());
    int cols = 0;
    const int rows = parts[0]->val.rows;
    bool ng = false;
    for (Ref p : parts) {
        assert(p->val.rows == rows);
        cols += p->val.cols;
        ng = ng || p->needs_grad;
    }
    Mat out(rows, cols);
    int c = 0;
    for (Ref p : parts) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p->val.cols; ++j) out.at(i, c + j) = p->val.at(i, j);
        c += p->val.cols;
    }
    auto parts_copy = parts;
    return push(std::move(out), ng, [parts_copy](Node& n) {
        int c = 0;
        for (Ref p : parts_copy) {
            for (int i = 0; i < p->val.rows; ++i)
                for (int j = 0; j < p->val.cols; ++j)
                    p->grad.at(i, j) += n.grad.at(i, c + j);
            c += p->val.cols;
        }
    });
}

Ref Tape::gather_rows(Ref table, const std::vector<int>& idx) {
    Mat out(static_cast<int>(idx.size()), table->val.cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
        assert(idx[i] >= 0 && idx[i] < table->val.rows);
        for (int j = 0; j < out.cols; ++j)
            out.at(static_cast<int>(i), j) = table->val.at(idx[i], j);
    }
    return push(std::move(out), table->needs_grad, [table, idx](Node& n) {
        for (std::size_t i = 0; i < idx.size(); ++i)
            for (int j = 0; j < n.grad.cols; ++j)
                table->grad.at(idx[i], j) += n.grad.at(static_cast<int>(i), j);
    });
}

Ref Tape::l2_normalize_flat(Ref a) {
    double norm2 = 0.0;
    for (double v : a->val.d) norm2 += v * v;
    double norm = std::sqrt(std::max(norm2, 1e-30));
    Mat out = a->val;
    for (auto& v : out.d) v /= norm;
    return push(std::move(out), a->needs_grad, [a, norm](Node& n) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n.grad.size(); ++i) dot += n.grad.d[i] * n.val.d[i];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            a->grad.d[i] += (n.grad.d[i] - n.val.d[i] * dot) / norm;
    });
}

Ref Tape::cosine_flat(Ref a, Ref b) {
    Ref na = l2_normalize_flat(a);
    Ref nb = l2_normalize_flat(b);
    return sum_all(mul(na, nb));
}

Ref Tape::ce_rows(Ref logits, const std::vector<int>& targets,
                  const std::vector<double>* weights) {
    const int R = logits->val.rows, C = logits->val.cols;
    assert(static_cast<int>(targets.size()) == R);
    double total = 0.0;
    for (int i = 0; i < R; ++i) {
        double w = weights ? (*weights)[static_cast<std::size_t>(i)] : 1.0;
        double mx = logits->val.at(i, 0);
        for (int j = 1; j < C; ++j) mx = std::max(mx, logits->val.at(i, j));
        double lse = 0.0;
        for (int j = 0; j < C; ++j) lse += std::exp(logits->val.at(i, j) - mx);
        lse = std::log(lse) + mx;
        total += w * (lse - logits->val.at(i, targets[static_cast<std::size_t>(i)]));
    }
    Mat out(1, 1);
    out.d[0] = total;
    std::vector<double> wcopy;
    if (weights) wcopy = *weights;
    return push(std::move(out), logits->needs_grad,
                [logits, targets, wcopy, has_w = weights != nullptr](Node& n) {
                    const int R = logits->val.rows, C = logits->val.cols;
                    const double g = n.grad.d[0];
                    for (int i = 0; i < R; ++i) {
                        double w = has_w ? wcopy[static_cast<std::size_t>(i)] : 1.0;
                        double mx = logits->val.at(i, 0);
                        for (int j = 1; j < C; ++j)
                            mx = std::max(mx, logits->val.at(i, j));
                        double sum = 0.0;
                        for (int j = 0; j < C; ++j)
                            sum += std::exp(logits->val.at(i, j) - mx);
                        for (int j = 0; j < C; ++j) {
                            double p = std::exp(logits->val.at(i, j) - mx) / sum;
                            double delta =
                                j == targets[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                            logits->grad.at(i, j) += g * w * (p - delta);
                        }
                    }
                });
}

Ref Tape::sum_all(Ref a) {
    Mat out(1, 1);
    for (double v : a->val.d) out.d[0] += v;
    return push(std::move(out), a->needs_grad, [a](Node& n) {
        for (std::size_t i = 0; i < a->grad.size(); ++i) a->grad.d[i] += n.grad.d[0];
    });
}

Ref Tape::weighted_sum(const std::vector<Ref>& scalars, const std::vector<double>& w) {
    assert(scalars.size() == w.size());
    Mat out(1, 1);
    bool ng = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        assert(scalars[i]->val.size() == 1);
        out.d[0] += scalars[i]->val.d[0] * w[i];
        ng = ng || scalars[i]->needs_grad;
    }
    auto sc = scalars;
    auto wc = w;
    return push(std::move(out), ng, [sc, wc](Node& n) {
        for (std::size_t i = 0; i < sc.size(); ++i)
            sc[i]->grad.d[0] += n.grad.d[0] * wc[i];
    });
}

void Tape::backward(Ref loss) {
    if (loss->val.size() != 1) throw std::runtime_error("backward needs a scalar loss");
    loss->grad.d[0] = 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->back && it->needs_grad) it->back(*it);
    }
}

}  // namespace puf::nn
