#include "aesq/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace aesq {

namespace detail {

void TensorNode::accumulate(const Mat& g) {
    if (!needs_grad()) return;
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    grad += g;
}

}  // namespace detail

using detail::NodePtr;

Tensor::Tensor(Mat value, bool requires_grad) : node_(std::make_shared<detail::TensorNode>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
    const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
    const Eigen::Index c = r > 0 ? static_cast<Eigen::Index>(rows.begin()->size()) : 0;
    Mat m(r, c);
    Eigen::Index i = 0;
    for (const auto& row : rows) {
        if (static_cast<Eigen::Index>(row.size()) != c)
            throw std::invalid_argument("Tensor: ragged initializer list");
        Eigen::Index j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    node_->value = std::move(m);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Eigen::Index rows, Eigen::Index cols, bool requires_grad) {
    return Tensor(Mat::Zero(rows, cols), requires_grad);
}

Tensor Tensor::scalar(double v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m));
}

void Tensor::zero_grad() { node_->grad.resize(0, 0); }

double Tensor::item() const {
    if (!is_scalar()) throw std::invalid_argument("Tensor::item: tensor is not scalar");
    return node_->value(0, 0);
}

// ---- tape ----

Tape& Tape::active() {
    thread_local Tape tape;
    return tape;
}

void Tape::record(std::vector<NodePtr> inputs, NodePtr output, std::function<void()> backward_fn) {
    bool needed = false;
    for (const auto& in : inputs) needed = needed || in->needs_grad();
    if (!needed) return;
    output->on_tape = true;
    entries_.push_back({std::move(inputs), std::move(output), std::move(backward_fn)});
}

void Tape::backward(const Tensor& root) {
    if (!root.is_scalar())
        throw std::invalid_argument("Tape::backward: root must be a scalar tensor");
    if (!root.node()->on_tape)
        throw std::invalid_argument("Tape::backward: root is not on the tape");

    std::unordered_set<detail::TensorNode*> reachable;
    reachable.insert(root.node().get());
    root.node()->accumulate(Mat::Ones(1, 1));

    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (!reachable.count(it->output.get())) continue;
        if (it->output->grad.size() == 0) continue;  // no signal flowed here
        it->backward_fn();
        for (const auto& in : it->inputs)
            if (in->needs_grad()) reachable.insert(in.get());
    }
}

void Tape::clear() { entries_.clear(); }

// Records a binary/unary op. The backward closure captures node pointers and
// reads output->grad at sweep time.
namespace {

void record_op(std::vector<NodePtr> inputs, const Tensor& out, std::function<void(const Mat&)> fn) {
    NodePtr out_node = out.node();
    Tape::active().record(std::move(inputs), out_node, [out_node, fn = std::move(fn)]() {
        if (Tape::active().fault_scale() != 1.0)
            fn(Mat(Tape::active().fault_scale() * out_node->grad));
        else
            fn(out_node->grad);
    });
}

void check_finite(const Mat& m, const char* op) {
    if (!m.allFinite()) throw std::runtime_error(std::string(op) + ": non-finite output");
}

std::string shape_str(const Tensor& t) {
    return std::to_string(t.rows()) + "x" + std::to_string(t.cols());
}

}  // namespace

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a) + " * " +
                                    shape_str(b));
    Tensor out(Mat(a.value() * b.value()));
    NodePtr an = a.node(), bn = b.node();
    record_op({an, bn}, out, [an, bn](const Mat& g) {
        an->accumulate(g * bn->value.transpose());
        bn->accumulate(an->value.transpose() * g);
    });
    return out;
}

Tensor transpose(const Tensor& x) {
    Tensor out(Mat(x.value().transpose()));
    NodePtr xn = x.node();
    record_op({xn}, out, [xn](const Mat& g) { xn->accumulate(g.transpose()); });
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("add: shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
    Tensor out(Mat(a.value() + b.value()));
    NodePtr an = a.node(), bn = b.node();
    record_op({an, bn}, out, [an, bn](const Mat& g) {
        an->accumulate(g);
        bn->accumulate(g);
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("sub: shape mismatch: " + shape_str(a) + " vs " + shape_str(b));
    Tensor out(Mat(a.value() - b.value()));
    NodePtr an = a.node(), bn = b.node();
    record_op({an, bn}, out, [an, bn](const Mat& g) {
        an->accumulate(g);
        bn->accumulate(-g);
    });
    return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& bias) {
    if (bias.rows() != 1 || bias.cols() != x.cols())
        throw std::invalid_argument("add_rowvec: bias must be 1x" + std::to_string(x.cols()) +
                                    ", got " + shape_str(bias));
    Tensor out(Mat(x.value().rowwise() + bias.value().row(0)));
    NodePtr xn = x.node(), bn = bias.node();
    record_op({xn, bn}, out, [xn, bn](const Mat& g) {
        xn->accumulate(g);
        bn->accumulate(g.colwise().sum());
    });
    return out;
}

Tensor scale(const Tensor& x, double c) {
    Tensor out(Mat(c * x.value()));
    NodePtr xn = x.node();
    record_op({xn}, out, [xn, c](const Mat& g) { xn->accumulate(c * g); });
    return out;
}

Tensor square(const Tensor& x) {
    Tensor out(Mat(x.value().cwiseProduct(x.value())));
    NodePtr xn = x.node();
    record_op({xn}, out,
              [xn](const Mat& g) { xn->accumulate(2.0 * g.cwiseProduct(xn->value)); });
    return out;
}

Tensor sqrt_shifted(const Tensor& x, double shift) {
    Mat v = (x.value().array() + shift).sqrt();
    check_finite(v, "sqrt_shifted");
    Tensor out(std::move(v));
    NodePtr xn = x.node(), on = out.node();
    record_op({xn}, out, [xn, on](const Mat& g) {
        xn->accumulate((g.array() * 0.5 / on->value.array()).matrix());
    });
    return out;
}

Tensor softmax(const Tensor& x, int axis) {
    if (axis != 0 && axis != 1)
        throw std::invalid_argument("softmax: axis must be 0 or 1, got " + std::to_string(axis));
    if (axis == 0) return transpose(softmax(transpose(x), 1));

    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::ArrayXd row = x.value().row(i).array();
        row -= row.maxCoeff();
        Eigen::ArrayXd e = row.exp();
        y.row(i) = (e / e.sum()).matrix();
    }
    Tensor out(std::move(y));
    NodePtr xn = x.node(), on = out.node();
    record_op({xn}, out, [xn, on](const Mat& g) {
        Mat dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const auto yi = on->value.row(i).array();
            const auto gi = g.row(i).array();
            dx.row(i) = (yi * (gi - (gi * yi).sum())).matrix();
        }
        xn->accumulate(dx);
    });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("layer_norm: eps must be > 0");
    if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 || bias.cols() != x.cols())
        throw std::invalid_argument("layer_norm: gain/bias must be 1x" + std::to_string(x.cols()));

    const Eigen::Index H = x.cols();
    Mat xhat(x.rows(), H);
    Eigen::VectorXd inv_sd(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const auto row = x.value().row(i).array();
        const double mu = row.mean();
        const double var = (row - mu).square().mean();
        inv_sd(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = ((row - mu) * inv_sd(i)).matrix();
    }
    Mat y = (xhat.array().rowwise() * gain.value().row(0).array()).rowwise() +
            bias.value().row(0).array();
    Tensor out(std::move(y));
    NodePtr xn = x.node(), gn = gain.node(), bn = bias.node();
    record_op({xn, gn, bn}, out, [xn, gn, bn, xhat, inv_sd](const Mat& g) {
        bn->accumulate(g.colwise().sum());
        gn->accumulate(g.cwiseProduct(xhat).colwise().sum());
        Mat dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            const Eigen::ArrayXd gh =
                (g.row(i).array() * gn->value.row(0).array()).transpose();
            const Eigen::ArrayXd xh = xhat.row(i).array().transpose();
            const double m1 = gh.mean();
            const double m2 = (gh * xh).mean();
            dx.row(i) = ((gh - m1 - xh * m2) * inv_sd(i)).transpose().matrix();
        }
        xn->accumulate(dx);
    });
    return out;
}

namespace {
constexpr double kInvSqrt2 = 0.7071067811865476;
constexpr double kInvSqrt2Pi = 0.3989422804014327;
}  // namespace

Tensor gelu(const Tensor& x) {
    // x * Phi(x), exact erf form.
    Mat y = x.value().unaryExpr(
        [](double v) { return v * 0.5 * std::erfc(-v * kInvSqrt2); });
    Tensor out(std::move(y));
    NodePtr xn = x.node();
    record_op({xn}, out, [xn](const Mat& g) {
        Mat d = xn->value.unaryExpr([](double v) {
            const double cdf = 0.5 * std::erfc(-v * kInvSqrt2);
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            return cdf + v * pdf;
        });
        xn->accumulate(g.cwiseProduct(d));
    });
    return out;
}

Tensor mean_rows(const Tensor& x) {
    if (x.rows() < 1) throw std::invalid_argument("mean_rows: empty input");
    Tensor out(Mat(x.value().colwise().mean()));
    NodePtr xn = x.node();
    const double inv_m = 1.0 / static_cast<double>(x.rows());
    record_op({xn}, out, [xn, inv_m](const Mat& g) {
        xn->accumulate(Mat((inv_m * g).replicate(xn->value.rows(), 1)));
    });
    return out;
}

Tensor sum(const Tensor& x) {
    Tensor out = Tensor::scalar(x.value().sum());
    NodePtr xn = x.node();
    record_op({xn}, out, [xn](const Mat& g) {
        xn->accumulate(Mat::Constant(xn->value.rows(), xn->value.cols(), g(0, 0)));
    });
    return out;
}

Tensor slice_cols(const Tensor& x, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || n < 1 || start + n > x.cols())
        throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + ", " +
                                    std::to_string(start + n) + ") out of bounds for " +
                                    shape_str(x));
    Tensor out(Mat(x.value().middleCols(start, n)));
    NodePtr xn = x.node();
    record_op({xn}, out, [xn, start, n](const Mat& g) {
        Mat full = Mat::Zero(xn->value.rows(), xn->value.cols());
        full.middleCols(start, n) = g;
        xn->accumulate(full);
    });
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        if (p.rows() != parts[0].rows())
            throw std::invalid_argument("concat_cols: row counts disagree");
        total += p.cols();
    }
    Mat y(parts[0].rows(), total);
    Eigen::Index off = 0;
    std::vector<NodePtr> nodes;
    for (const auto& p : parts) {
        y.middleCols(off, p.cols()) = p.value();
        nodes.push_back(p.node());
        off += p.cols();
    }
    Tensor out(std::move(y));
    record_op(nodes, out, [nodes](const Mat& g) {
        Eigen::Index off = 0;
        for (const auto& n : nodes) {
            n->accumulate(g.middleCols(off, n->value.cols()));
            off += n->value.cols();
        }
    });
    return out;
}

Tensor prefix_sum_cols(const Tensor& x) {
    Mat y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            acc += x.value()(i, j);
            y(i, j) = acc;
        }
    }
    Tensor out(std::move(y));
    NodePtr xn = x.node();
    record_op({xn}, out, [xn](const Mat& g) {
        Mat dx(g.rows(), g.cols());
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
            double acc = 0.0;
            for (Eigen::Index j = g.cols() - 1; j >= 0; --j) {
                acc += g(i, j);
                dx(i, j) = acc;
            }
        }
        xn->accumulate(dx);
    });
    return out;
}

// ---- verification ----

double finite_diff_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                         double h) {
    if (h <= 0.0) throw std::invalid_argument("finite_diff_check: h must be > 0");

    auto eval = [&]() {
        Tape::active().clear();
        Tensor loss = f();
        double v = loss.item();
        if (!std::isfinite(v))
            throw std::runtime_error("finite_diff_check: non-finite function value");
        return v;
    };

    // Analytic gradients via one backward pass.
    Tape::active().clear();
    std::vector<Tensor> ps = params;
    for (auto& p : ps) p.zero_grad();
    Tensor loss = f();
    if (!std::isfinite(loss.item()))
        throw std::runtime_error("finite_diff_check: non-finite function value");
    Tape::active().backward(loss);
    std::vector<Mat> analytic;
    for (const auto& p : ps)
        analytic.push_back(p.has_grad() ? p.grad() : Mat::Zero(p.rows(), p.cols()));
    Tape::active().clear();

    double max_rel = 0.0;
    for (std::size_t k = 0; k < ps.size(); ++k) {
        Mat& v = ps[k].raw_value();
        for (Eigen::Index i = 0; i < v.rows(); ++i) {
            for (Eigen::Index j = 0; j < v.cols(); ++j) {
                const double orig = v(i, j);
                v(i, j) = orig + h;
                const double fp = eval();
                v(i, j) = orig - h;
                const double fm = eval();
                v(i, j) = orig;
                const double num = (fp - fm) / (2.0 * h);
                const double ana = analytic[k](i, j);
                const double denom = std::max({std::abs(num), std::abs(ana), 1e-8});
                max_rel = std::max(max_rel, std::abs(num - ana) / denom);
            }
        }
    }
    Tape::active().clear();
    return max_rel;
}

// ---- rng ----

double Rng::normal(double mean, double sd) {
    std::normal_distribution<double> d(mean, sd);
    return d(engine_);
}

double Rng::uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
}

std::uint64_t Rng::integer(std::uint64_t n) {
    std::uniform_int_distribution<std::uint64_t> d(0, n - 1);
    return d(engine_);
}

bool Rng::bernoulli(double p) { return uniform(0.0, 1.0) < p; }

Mat Rng::normal_mat(Eigen::Index rows, Eigen::Index cols, double sd) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = normal(0.0, sd);
    return m;
}

std::string Rng::serialize() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
}

void Rng::deserialize(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
    if (is.fail()) throw std::invalid_argument("Rng::deserialize: malformed engine state");
}

}  // namespace aesq
