#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <vector>

namespace aesq {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

namespace detail {

struct TensorNode {
    Mat value;
    Mat grad;  // zero-size until the first accumulation
    bool requires_grad = false;
    bool on_tape = false;  // somewhere downstream of a requires_grad leaf

    bool needs_grad() const { return requires_grad || on_tape; }
    void accumulate(const Mat& g);
};

using NodePtr = std::shared_ptr<TensorNode>;

}  // namespace detail

// Dense real matrix participating in reverse-mode differentiation.
// Scalars are 1x1, vectors are 1xH rows. Copies share the underlying node.
class Tensor {
public:
    Tensor() : node_(std::make_shared<detail::TensorNode>()) {}
    explicit Tensor(Mat value, bool requires_grad = false);
    Tensor(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad = false);

    static Tensor zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad = false);
    static Tensor scalar(double v);

    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    Eigen::Index size() const { return node_->value.size(); }
    bool is_scalar() const { return rows() == 1 && cols() == 1; }

    const Mat& value() const { return node_->value; }
    // In-place mutation (optimizer updates, finite-difference probes).
    Mat& raw_value() { return node_->value; }

    bool requires_grad() const { return node_->requires_grad; }
    bool has_grad() const { return node_->grad.size() > 0; }
    const Mat& grad() const { return node_->grad; }
    void zero_grad();

    double item() const;

    detail::NodePtr node() const { return node_; }

private:
    detail::NodePtr node_;
};

// Wengert list of executed differentiable ops, one per thread.
class Tape {
public:
    static Tape& active();

    void record(std::vector<detail::NodePtr> inputs, detail::NodePtr output,
                std::function<void()> backward_fn);
    // Reverse sweep from a scalar root; accumulates into every reachable
    // needs-grad tensor exactly once per call.
    void backward(const Tensor& root);
    void clear();
    std::size_t size() const { return entries_.size(); }

    // Test hook: scales every backward contribution, corrupting gradients.
    void inject_fault(double scale) { fault_scale_ = scale; }
    double fault_scale() const { return fault_scale_; }

private:
    struct Entry {
        std::vector<detail::NodePtr> inputs;
        detail::NodePtr output;
        std::function<void()> backward_fn;
    };
    std::vector<Entry> entries_;
    double fault_scale_ = 1.0;
};

// ---- differentiable ops ----

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// Adds a 1xC row vector to every row of x.
Tensor add_rowvec(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double c);
Tensor square(const Tensor& x);
// Elementwise sqrt(x + shift); shift keeps the derivative finite at 0.
Tensor sqrt_shifted(const Tensor& x, double shift);
Tensor softmax(const Tensor& x, int axis = 1);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);
Tensor gelu(const Tensor& x);
Tensor mean_rows(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index n);
Tensor concat_cols(const std::vector<Tensor>& parts);
// Running prefix sum along each row (CDF of a distribution row).
Tensor prefix_sum_cols(const Tensor& x);

// ---- verification ----

// Central-difference check of backward() for a scalar-valued function of
// `params`. Returns the max relative error, denominator max(|a|,|b|,1e-8).
double finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double h = 1e-5);

// ---- rng ----

// Seeded stream; distributions are constructed per call so the emitted
// sequence is a pure function of the engine state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal(double mean = 0.0, double sd = 1.0);
    double uniform(double lo = 0.0, double hi = 1.0);
    std::uint64_t integer(std::uint64_t n);  // uniform on [0, n)
    bool bernoulli(double p);

    Mat normal_mat(Eigen::Index rows, Eigen::Index cols, double sd);

    std::string serialize() const;
    void deserialize(const std::string& state);

private:
    std::mt19937_64 engine_;
};

}  // namespace aesq
