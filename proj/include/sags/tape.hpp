#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "sags/errors.hpp"

namespace sags::ad {

struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape over dense matrix operations.  One backward pass per
// forward recording; gradients accumulate in 64-bit.
class Tape {
  public:
    Var leaf(const Eigen::MatrixXd& v) { return push(v, {}, nullptr, true); }
    Var constant(const Eigen::MatrixXd& v) { return push(v, {}, nullptr, false); }
    Var scalar(double v) { return constant(Eigen::MatrixXd::Constant(1, 1, v)); }

    const Eigen::MatrixXd& value(Var v) const { return node(v).value; }
    const Eigen::MatrixXd& grad(Var v) const;
    bool requires_grad(Var v) const { return node(v).requires_grad; }
    bool grad_ready(Var v) const { return node(v).grad_ready; }
    size_t size() const { return nodes_.size(); }

    // elementwise
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    Var scale(Var a, double k);
    Var add_const(Var a, double k);
    Var exp(Var a);
    Var log(Var a);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var abs(Var a);
    Var square(Var a);
    Var cwise_max(Var a, double floor);

    // linear algebra
    Var matmul(Var a, Var b);     // A * B
    Var matmul_nt(Var a, Var b);  // A * B^T
    Var matmul_tn(Var a, Var b);  // A^T * B

    // row-wise softmax
    Var softmax_rows(Var a);

    // reductions (1x1 results)
    Var sum(Var a);
    Var mean(Var a);

    // shape
    Var rows(Var a, int r0, int n);
    Var cols(Var a, int c0, int n);
    Var concat_rows(const std::vector<Var>& parts);

    // broadcast: alpha/beta are 1 x C, gamma is 1 x 1
    Var row_broadcast_mul(Var x, Var alpha);
    Var row_broadcast_add(Var x, Var beta);
    Var scale_by(Var x, Var gamma);

    // Custom op support.  The closure receives the tape and the node's own id;
    // it reads grad(self) and accumulates into grad_ref(parent).
    Var make_node(Eigen::MatrixXd value, const std::vector<Var>& parents,
                  std::function<void(Tape&, int)> backward);
    Eigen::MatrixXd& grad_ref(Var v);

    // Seeds the scalar loss node with 1 and runs the chain rule in reverse.
    void backward(Var loss);

  private:
    struct Node {
        Eigen::MatrixXd value;
        Eigen::MatrixXd grad;
        std::function<void(Tape&, int)> backward;
        bool requires_grad = false;
        bool grad_ready = false;
    };

    Var push(Eigen::MatrixXd v, const std::vector<Var>& parents,
             std::function<void(Tape&, int)> bw, bool force_requires = false);
    const Node& node(Var v) const;
    Node& node(Var v);

    std::vector<Node> nodes_;
    bool ran_backward_ = false;
};

struct GradcheckReport {
    double max_rel_err = 0;
    double max_abs_err = 0;
    int checked = 0;
    bool pass = false;
};

// fn(point, grad_out): returns the scalar value at point; when grad_out is
// non-null it must also fill the analytic gradient.  Compared against central
// finite differences coordinate by coordinate.
GradcheckReport gradcheck(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fn,
    const Eigen::VectorXd& point, double eps, double tol);

}  // namespace sags::ad
