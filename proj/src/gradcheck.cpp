#include "aesq/gradcheck.hpp"

#include "aesq/model.hpp"
#include "aesq/train.hpp"

#include <algorithm>

namespace aesq {

namespace {

// Max fd error of `f` over `trials` random instances.
template <typename MakeCase>
double sweep(int trials, MakeCase make_case) {
    double worst = 0.0;
    for (int t = 0; t < trials; ++t) worst = std::max(worst, make_case(t));
    return worst;
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed) {
    Rng rng(seed);
    const double h = 1e-5;
    const int trials = 20;
    std::vector<GradCheckRow> rows;

    auto mat = [&](Eigen::Index r, Eigen::Index c) { return rng.normal_mat(r, c, 1.0); };

    rows.push_back({"matmul", sweep(trials, [&](int) {
                        Tensor a(mat(3, 4), true), b(mat(4, 2), true);
                        return finite_diff_check(
                            [&] { return sum(square(matmul(a, b))); }, {a, b}, h);
                    })});
    rows.push_back({"softmax", sweep(trials, [&](int) {
                        Tensor x(mat(2, 6), true);
                        return finite_diff_check([&] { return sum(square(softmax(x))); }, {x}, h);
                    })});
    rows.push_back({"layer_norm", sweep(trials, [&](int) {
                        Tensor x(mat(3, 5), true);
                        Tensor g(Mat(mat(1, 5).array() + 2.0), true);
                        Tensor b(mat(1, 5), true);
                        return finite_diff_check(
                            [&] { return sum(square(layer_norm(x, g, b))); }, {x, g, b}, h);
                    })});
    rows.push_back({"gelu", sweep(trials, [&](int) {
                        Tensor x(mat(2, 5), true);
                        return finite_diff_check([&] { return sum(square(gelu(x))); }, {x}, h);
                    })});
    rows.push_back({"mean_rows", sweep(trials, [&](int) {
                        Tensor x(mat(4, 3), true);
                        return finite_diff_check([&] { return sum(square(mean_rows(x))); }, {x}, h);
                    })});
    rows.push_back({"prefix_sum", sweep(trials, [&](int) {
                        Tensor x(mat(2, 8), true);
                        return finite_diff_check(
                            [&] { return sum(square(prefix_sum_cols(x))); }, {x}, h);
                    })});
    rows.push_back({"attention", sweep(trials, [&](int) {
                        const int hq = 8, hv = 6;
                        AttentionParams p;
                        p.wq = Tensor(rng.normal_mat(hq, hq, 0.3), true);
                        p.bq = Tensor(rng.normal_mat(1, hq, 0.1), true);
                        p.wk = Tensor(rng.normal_mat(hv, hq, 0.3), true);
                        p.bk = Tensor(rng.normal_mat(1, hq, 0.1), true);
                        p.wv = Tensor(rng.normal_mat(hv, hq, 0.3), true);
                        p.bv = Tensor(rng.normal_mat(1, hq, 0.1), true);
                        p.wo = Tensor(rng.normal_mat(hq, hq, 0.3), true);
                        p.bo = Tensor(rng.normal_mat(1, hq, 0.1), true);
                        Tensor q(mat(3, hq), true);
                        Tensor kv(mat(5, hv));
                        // bk shifts every key's score equally, and softmax is
                        // invariant to a per-query constant shift, so its true
                        // gradient is identically zero; an fd quotient there is
                        // pure roundoff. Assert the zero instead of fd-checking.
                        Tensor loss = sum(square(attention(q, kv, p, 2)));
                        Tape::active().backward(loss);
                        const double bk_grad =
                            p.bk.has_grad() ? p.bk.grad().cwiseAbs().maxCoeff() : 0.0;
                        for (Tensor* t : {&q, &p.wq, &p.bq, &p.wk, &p.bk, &p.wv,
                                          &p.bv, &p.wo, &p.bo})
                            t->zero_grad();
                        Tape::active().clear();
                        double err = finite_diff_check(
                            [&] { return sum(square(attention(q, kv, p, 2))); },
                            {q, p.wq, p.bq, p.wk, p.wv, p.bv, p.wo, p.bo}, h);
                        return std::max(err, bk_grad > 1e-12 ? 1.0 : 0.0);
                    })});
    rows.push_back({"emd_loss", sweep(trials, [&](int) {
                        Eigen::VectorXd t(10);
                        for (int i = 0; i < 10; ++i) t(i) = rng.uniform(1e-3, 1.0);
                        t /= t.sum();
                        Tensor logits(mat(1, 10), true);
                        ScoreDistribution target{t};
                        return finite_diff_check(
                            [&] { return emd_loss_t(softmax(logits), target); }, {logits}, h);
                    })});

    {
        // Full model loss; h=1e-4 keeps the fd quotient above roundoff on
        // the near-zero score gradients of a fresh init.
        ModelConfig cfg;
        cfg.m = 2;
        cfg.h_q = 8;
        cfg.h_v = 12;
        cfg.num_blocks = 2;
        cfg.num_heads = 2;
        cfg.ffn_mult = 2;
        cfg.k = 5;
        cfg.n_p = 4;
        cfg.seed = seed;
        Model model = init_model(cfg);
        ImageEmbeddings ev{rng.normal_mat(1 + cfg.n_p, cfg.h_v, 1.0)};
        ScoreDistribution target = dos_from_mos(3.2, cfg.k, 1.0);
        std::vector<Tensor> params;
        for (auto& [name, p] : model.named_parameters()) params.push_back(p);
        rows.push_back({"full_model", finite_diff_check(
                                          [&] { return emd_loss_t(model_predict(model, ev), target); },
                                          params, 1e-4)});
    }
    return rows;
}

}  // namespace aesq
