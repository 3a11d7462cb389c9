#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "puf/tensor.hpp"

using namespace puf::nn;

namespace {

Mat randmat(std::mt19937_64& rng, int r, int c, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Mat m(r, c);
    for (auto& v : m.d) v = d(rng);
    return m;
}

// Central finite difference of a scalar-valued graph builder with respect to
// one input matrix; compares against the analytic gradient.
void check_grad(const std::vector<Mat>& inputs,
                const std::function<Ref(Tape&, std::vector<Ref>&)>& build,
                double tol = 1e-6) {
    std::vector<Mat> work = inputs;
    auto eval = [&](const std::vector<Mat>& vals) {
        Tape tape;
        std::vector<Ref> leaves;
        for (const auto& m : vals) leaves.push_back(tape.leaf(m, true));
        return build(tape, leaves)->val.d[0];
    };
    Tape tape;
    std::vector<Ref> leaves;
    for (const auto& m : work) leaves.push_back(tape.leaf(m, true));
    Ref loss = build(tape, leaves);
    tape.backward(loss);
    const double h = 1e-6;
    for (std::size_t mi = 0; mi < work.size(); ++mi) {
        for (std::size_t k = 0; k < work[mi].size(); ++k) {
            std::vector<Mat> plus = work, minus = work;
            plus[mi].d[k] += h;
            minus[mi].d[k] -= h;
            double fd = (eval(plus) - eval(minus)) / (2 * h);
            double an = leaves[mi]->grad.d[k];
            double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
            CHECK(std::abs(fd - an) / denom < tol);
        }
    }
}

}  // namespace

TEST_CASE("matmul values") {
    Mat a(2, 3), b(3, 2);
    for (std::size_t i = 0; i < a.size(); ++i) a.d[i] = static_cast<double>(i + 1);
    for (std::size_t i = 0; i < b.size(); ++i) b.d[i] = static_cast<double>(i);
    Mat c = mm(a, b);
    // [[1,2,3],[4,5,6]] * [[0,1],[2,3],[4,5]] = [[16,22],[34,49]]
    CHECK(c.at(0, 0) == 16);
    CHECK(c.at(0, 1) == 22);
    CHECK(c.at(1, 0) == 34);
    CHECK(c.at(1, 1) == 49);
    Mat c2 = mm_t1(a, a);  // a^T a is 3x3 symmetric
    CHECK(c2.rows == 3);
    CHECK(c2.at(0, 1) == c2.at(1, 0));
    Mat c3 = mm_t2(a, a);  // a a^T is 2x2
    CHECK(c3.rows == 2);
    CHECK(c3.at(0, 0) == doctest::Approx(14.0));
}

TEST_CASE("softmax rows sum to one") {
    std::mt19937_64 rng(1);
    Tape tape;
    Ref x = tape.leaf(randmat(rng, 4, 6), false);
    Ref s = tape.softmax_rows(x);
    for (int i = 0; i < 4; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 6; ++j) {
            sum += s->val.at(i, j);
            CHECK(s->val.at(i, j) >= 0.0);
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("gradients of elementwise and broadcast ops") {
    std::mt19937_64 rng(2);
    check_grad({randmat(rng, 3, 4), randmat(rng, 3, 4)},
               [](Tape& t, std::vector<Ref>& in) {
                   return t.sum_all(t.mul(t.add(in[0], in[1]), t.sub(in[0], in[1])));
               });
    check_grad({randmat(rng, 3, 4), randmat(rng, 1, 4)},
               [](Tape& t, std::vector<Ref>& in) {
                   return t.sum_all(t.relu(t.add_rowvec(in[0], in[1])));
               });
    check_grad({randmat(rng, 2, 5)}, [](Tape& t, std::vector<Ref>& in) {
        return t.sum_all(t.softplus(t.scale(in[0], 1.7)));
    });
}

TEST_CASE("gradients of matmul chain") {
    std::mt19937_64 rng(3);
    check_grad({randmat(rng, 3, 4), randmat(rng, 4, 5), randmat(rng, 5, 2)},
               [](Tape& t, std::vector<Ref>& in) {
                   return t.sum_all(
                       t.matmul(t.matmul(in[0], in[1]), t.relu(in[2])));
               });
}

TEST_CASE("gradients of softmax, layernorm, ce") {
    std::mt19937_64 rng(4);
    check_grad({randmat(rng, 3, 5)}, [](Tape& t, std::vector<Ref>& in) {
        Ref p = t.softmax_rows(in[0]);
        return t.sum_all(t.mul(p, p));
    });
    check_grad({randmat(rng, 4, 6), randmat(rng, 1, 6), randmat(rng, 1, 6)},
               [](Tape& t, std::vector<Ref>& in) {
                   Ref y = t.layer_norm_rows(in[0], in[1], in[2]);
                   return t.sum_all(t.mul(y, y));
               },
               1e-5);
    check_grad({randmat(rng, 4, 7)}, [](Tape& t, std::vector<Ref>& in) {
        return t.ce_rows(in[0], {2, 0, 6, 3});
    });
}

TEST_CASE("gradients of slicing and concatenation") {
    std::mt19937_64 rng(5);
    check_grad({randmat(rng, 5, 6)}, [](Tape& t, std::vector<Ref>& in) {
        Ref a = t.row_range(in[0], 1, 3);  // 3x6
        Ref b = t.col_range(in[0], 2, 2);  // 5x2
        Ref left = t.sum_all(t.mul(a, a));
        Ref right = t.sum_all(t.mean_rows(t.matmul(t.transpose(b), b)));
        return t.add(left, right);
    });
    check_grad({randmat(rng, 2, 3), randmat(rng, 4, 3)},
               [](Tape& t, std::vector<Ref>& in) {
                   Ref c = t.concat_rows({in[0], in[1]});
                   return t.sum_all(t.mul(c, c));
               });
    check_grad({randmat(rng, 6, 4)}, [](Tape& t, std::vector<Ref>& in) {
        Ref g = t.gather_rows(in[0], {5, 0, 0, 3});
        return t.sum_all(t.mul(g, g));
    });
}

TEST_CASE("gradients of normalization and cosine") {
    std::mt19937_64 rng(6);
    check_grad(
        {randmat(rng, 3, 4)},
        [](Tape& t, std::vector<Ref>& in) {
            Ref n = t.l2_normalize_flat(in[0]);
            return t.sum_all(t.mul(n, t.scale(n, 0.5)));
        },
        1e-5);
    check_grad(
        {randmat(rng, 3, 4), randmat(rng, 3, 4)},
        [](Tape& t, std::vector<Ref>& in) { return t.cosine_flat(in[0], in[1]); },
        1e-5);
}

TEST_CASE("gradient of attention-like composite") {
    std::mt19937_64 rng(7);
    check_grad({randmat(rng, 4, 6, 0.5), randmat(rng, 6, 6, 0.5),
                randmat(rng, 6, 6, 0.5), randmat(rng, 6, 6, 0.5)},
               [](Tape& t, std::vector<Ref>& in) {
                   Ref q = t.matmul(in[0], in[1]);
                   Ref k = t.matmul(in[0], in[2]);
                   Ref v = t.matmul(in[0], in[3]);
                   Ref s = t.softmax_rows(t.scale(t.matmul(q, t.transpose(k)), 0.4));
                   return t.sum_all(t.mul(t.matmul(s, v), t.matmul(s, v)));
               },
               1e-5);
}

TEST_CASE("weighted sum and backward requires scalar") {
    Tape tape;
    Ref a = tape.scalar(2.0);
    Ref b = tape.scalar(3.0);
    Ref w = tape.weighted_sum({a, b}, {0.5, 2.0});
    CHECK(w->val.d[0] == doctest::Approx(7.0));
}
