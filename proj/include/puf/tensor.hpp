#pragma once

#include <cassert>
#include <deque>
#include <functional>
#include <stdexcept>
#include <vector>

namespace puf::nn {

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return d[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return d[static_cast<std::size_t>(r) * cols + c]; }
    std::size_t size() const { return d.size(); }
    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
};

Mat mm(const Mat& a, const Mat& b);      // a * b
Mat mm_t1(const Mat& a, const Mat& b);   // a^T * b
Mat mm_t2(const Mat& a, const Mat& b);   // a * b^T

/// One node in the reverse-mode tape.
struct Node {
    Mat val;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Node&)> back;  // accumulates into parent grads
};

using Ref = Node*;

/// Reverse-mode autodiff over dense double matrices. Nodes live for the
/// lifetime of the tape; build the graph forward, then call backward on a
/// 1x1 loss node.
class Tape {
public:
    Ref leaf(const Mat& v, bool needs_grad);
    Ref constant(Mat v) { return leaf(v, false); }
    Ref scalar(double v);

    Ref add(Ref a, Ref b);
    Ref sub(Ref a, Ref b);
    Ref mul(Ref a, Ref b);  // elementwise
    Ref scale(Ref a, double k);
    Ref add_rowvec(Ref a, Ref v);  // v is 1 x cols, broadcast over rows
    Ref matmul(Ref a, Ref b);
    Ref transpose(Ref a);
    Ref relu(Ref a);
    Ref softplus(Ref a);
    Ref softmax_rows(Ref a);
    Ref layer_norm_rows(Ref a, Ref gain, Ref bias);  // gain/bias 1 x cols
    Ref mean_rows(Ref a);                            // -> 1 x cols
    Ref row_range(Ref a, int r0, int n);
    Ref col_range(Ref a, int c0, int n);
    Ref concat_rows(const std::vector<Ref>& parts);
    Ref concat_cols(const std::vector<Ref>& parts);
    Ref gather_rows(Ref table, const std::vector<int>& idx);
    Ref l2_normalize_flat(Ref a);  // whole matrix normalized to unit L2 norm
    Ref cosine_flat(Ref a, Ref b);
    /// Sum over rows of (logsumexp(row) - row[target]); optional row weights.
    Ref ce_rows(Ref logits, const std::vector<int>& targets,
                const std::vector<double>* weights = nullptr);
    Ref sum_all(Ref a);
    Ref weighted_sum(const std::vector<Ref>& scalars, const std::vector<double>& w);

    void backward(Ref loss);

    std::size_t node_count() const { return nodes_.size(); }

private:
    Ref push(Mat val, bool needs_grad, std::function<void(Node&)> back);
    std::deque<Node> nodes_;
};

}  // namespace puf::nn
