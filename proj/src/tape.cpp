#include "sags/tape.hpp"

#include <cmath>

namespace sags::ad {

const Tape::Node& Tape::node(Var v) const {
    if (!v.valid() || static_cast<size_t>(v.id) >= nodes_.size())
        throw InputError("tape: invalid node handle");
    return nodes_[static_cast<size_t>(v.id)];
}

Tape::Node& Tape::node(Var v) { return const_cast<Node&>(static_cast<const Tape*>(this)->node(v)); }

const Eigen::MatrixXd& Tape::grad(Var v) const {
    const Node& n = node(v);
    if (!n.grad_ready) throw InputError("tape: gradient not available (run backward first)");
    return n.grad;
}

Eigen::MatrixXd& Tape::grad_ref(Var v) {
    Node& n = node(v);
    if (!n.grad_ready) {
        n.grad = Eigen::MatrixXd::Zero(n.value.rows(), n.value.cols());
        n.grad_ready = true;
    }
    return n.grad;
}

Var Tape::push(Eigen::MatrixXd v, const std::vector<Var>& parents,
               std::function<void(Tape&, int)> bw, bool force_requires) {
    Node n;
    n.value = std::move(v);
    n.requires_grad = force_requires;
    for (Var p : parents)
        if (node(p).requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward = std::move(bw);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::make_node(Eigen::MatrixXd value, const std::vector<Var>& parents,
                    std::function<void(Tape&, int)> backward) {
    return push(std::move(value), parents, std::move(backward));
}

void Tape::backward(Var loss) {
    if (ran_backward_) throw InputError("tape: double backward is unsupported");
    const Node& l = node(loss);
    if (l.value.rows() != 1 || l.value.cols() != 1)
        throw InputError("tape: backward requires a scalar loss node");
    ran_backward_ = true;
    grad_ref(loss)(0, 0) = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (!n.requires_grad || !n.grad_ready || !n.backward) continue;
        n.backward(*this, id);
    }
}

namespace {
void check_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InputError(std::string("tape: shape mismatch in ") + op);
}
}  // namespace

Var Tape::add(Var a, Var b) {
    check_same_shape(value(a), value(b), "add");
    return make_node(value(a) + value(b), {a, b}, [a, b](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(a)) t.grad_ref(a) += g;
        if (t.requires_grad(b)) t.grad_ref(b) += g;
    });
}

Var Tape::sub(Var a, Var b) {
    check_same_shape(value(a), value(b), "sub");
    return make_node(value(a) - value(b), {a, b}, [a, b](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(a)) t.grad_ref(a) += g;
        if (t.requires_grad(b)) t.grad_ref(b) -= g;
    });
}

Var Tape::mul(Var a, Var b) {
    check_same_shape(value(a), value(b), "mul");
    return make_node(value(a).cwiseProduct(value(b)), {a, b}, [a, b](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(a)) t.grad_ref(a) += g.cwiseProduct(t.value(b));
        if (t.requires_grad(b)) t.grad_ref(b) += g.cwiseProduct(t.value(a));
    });
}

Var Tape::div(Var a, Var b) {
    check_same_shape(value(a), value(b), "div");
    return make_node(value(a).cwiseQuotient(value(b)), {a, b}, [a, b](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        const Eigen::MatrixXd& vb = t.value(b);
        if (t.requires_grad(a)) t.grad_ref(a) += g.cwiseQuotient(vb);
        if (t.requires_grad(b))
            t.grad_ref(b) -=
                g.cwiseProduct(t.value(a)).cwiseQuotient(vb.cwiseProduct(vb));
    });
}

Var Tape::scale(Var a, double k) {
    return make_node(value(a) * k, {a}, [a, k](Tape& t, int self) {
        if (t.requires_grad(a)) t.grad_ref(a) += t.grad(Var{self}) * k;
    });
}

Var Tape::add_const(Var a, double k) {
    return make_node((value(a).array() + k).matrix(), {a}, [a](Tape& t, int self) {
        if (t.requires_grad(a)) t.grad_ref(a) += t.grad(Var{self});
    });
}

Var Tape::exp(Var a) {
    Eigen::MatrixXd v = value(a).array().exp().matrix();
    Var out = make_node(v, {a}, nullptr);
    node(out).backward = [a, out](Tape& t, int self) {
        if (t.requires_grad(a))
            t.grad_ref(a) += t.grad(Var{self}).cwiseProduct(t.value(out));
    };
    return out;
}

Var Tape::log(Var a) {
    return make_node(value(a).array().log().matrix(), {a}, [a](Tape& t, int self) {
        if (t.requires_grad(a))
            t.grad_ref(a) += t.grad(Var{self}).cwiseQuotient(t.value(a));
    });
}

Var Tape::sigmoid(Var a) {
    Eigen::MatrixXd v = (1.0 / (1.0 + (-value(a).array()).exp())).matrix();
    Var out = make_node(v, {a}, nullptr);
    node(out).backward = [a, out](Tape& t, int self) {
        if (!t.requires_grad(a)) return;
        const Eigen::ArrayXXd s = t.value(out).array();
        t.grad_ref(a) += (t.grad(Var{self}).array() * s * (1 - s)).matrix();
    };
    return out;
}

Var Tape::tanh(Var a) {
    Eigen::MatrixXd v = value(a).array().tanh().matrix();
    Var out = make_node(v, {a}, nullptr);
    node(out).backward = [a, out](Tape& t, int self) {
        if (!t.requires_grad(a)) return;
        const Eigen::ArrayXXd y = t.value(out).array();
        t.grad_ref(a) += (t.grad(Var{self}).array() * (1 - y * y)).matrix();
    };
    return out;
}

Var Tape::abs(Var a) {
    return make_node(value(a).cwiseAbs(), {a}, [a](Tape& t, int self) {
        if (!t.requires_grad(a)) return;
        t.grad_ref(a) +=
            t.grad(Var{self}).cwiseProduct(t.value(a).array().sign().matrix());
    });
}

Var Tape::square(Var a) {
    return make_node(value(a).array().square().matrix(), {a}, [a](Tape& t, int self) {
        if (t.requires_grad(a))
            t.grad_ref(a) += 2.0 * t.grad(Var{self}).cwiseProduct(t.value(a));
    });
}

Var Tape::cwise_max(Var a, double floor) {
    return make_node(value(a).cwiseMax(floor), {a, }, [a, floor](Tape& t, int self) {
        if (!t.requires_grad(a)) return;
        const Eigen::MatrixXd& g = t.grad(Var{self});
        const Eigen::MatrixXd& v = t.value(a);
        Eigen::MatrixXd& ga = t.grad_ref(a);
        for (Eigen::Index i = 0; i < v.rows(); ++i)
            for (Eigen::Index j = 0; j < v.cols(); ++j)
                if (v(i, j) > floor) ga(i, j) += g(i, j);
    });
}

Var Tape::matmul(Var a, Var b) {
    if (value(a).cols() != value(b).rows()) throw InputError("tape: matmul shape mismatch");
    return make_node(value(a) * value(b), {a, b}, [a, b](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(a)) t.grad_ref(a) += g * t.value(b).transpose();
        if (t.requires_grad(b)) t.grad_ref(b) += t.value(a).transpose() * g;
    });
}

Var Tape::matmul_nt(Var a, Var b) {
    if (value(a).cols() != value(b).cols()) throw InputError("tape: matmul_nt shape mismatch");
    return make_node(value(a) * value(b).transpose(), {a, b}, [a, b](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(a)) t.grad_ref(a) += g * t.value(b);
        if (t.requires_grad(b)) t.grad_ref(b) += g.transpose() * t.value(a);
    });
}

Var Tape::matmul_tn(Var a, Var b) {
    if (value(a).rows() != value(b).rows()) throw InputError("tape: matmul_tn shape mismatch");
    return make_node(value(a).transpose() * value(b), {a, b}, [a, b](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(a)) t.grad_ref(a) += t.value(b) * g.transpose();
        if (t.requires_grad(b)) t.grad_ref(b) += t.value(a) * g;
    });
}

Var Tape::softmax_rows(Var a) {
    const Eigen::MatrixXd& x = value(a);
    Eigen::MatrixXd y(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::ArrayXd row = x.row(i).array();
        row -= row.maxCoeff();
        Eigen::ArrayXd e = row.exp();
        y.row(i) = (e / e.sum()).matrix().transpose();
    }
    Var out = make_node(y, {a}, nullptr);
    node(out).backward = [a, out](Tape& t, int self) {
        if (!t.requires_grad(a)) return;
        const Eigen::MatrixXd& yv = t.value(out);
        const Eigen::MatrixXd& g = t.grad(Var{self});
        Eigen::MatrixXd& ga = t.grad_ref(a);
        for (Eigen::Index i = 0; i < yv.rows(); ++i) {
            double dot = yv.row(i).dot(g.row(i));
            ga.row(i) += (yv.row(i).array() * (g.row(i).array() - dot)).matrix();
        }
    };
    return out;
}

Var Tape::sum(Var a) {
    return make_node(Eigen::MatrixXd::Constant(1, 1, value(a).sum()), {a},
                     [a](Tape& t, int self) {
                         if (!t.requires_grad(a)) return;
                         t.grad_ref(a).array() += t.grad(Var{self})(0, 0);
                     });
}

Var Tape::mean(Var a) {
    const double inv = 1.0 / static_cast<double>(value(a).size());
    return make_node(Eigen::MatrixXd::Constant(1, 1, value(a).sum() * inv), {a},
                     [a, inv](Tape& t, int self) {
                         if (!t.requires_grad(a)) return;
                         t.grad_ref(a).array() += t.grad(Var{self})(0, 0) * inv;
                     });
}

Var Tape::rows(Var a, int r0, int n) {
    if (r0 < 0 || r0 + n > value(a).rows()) throw InputError("tape: rows slice out of range");
    return make_node(value(a).middleRows(r0, n), {a}, [a, r0, n](Tape& t, int self) {
        if (t.requires_grad(a)) t.grad_ref(a).middleRows(r0, n) += t.grad(Var{self});
    });
}

Var Tape::cols(Var a, int c0, int n) {
    if (c0 < 0 || c0 + n > value(a).cols()) throw InputError("tape: cols slice out of range");
    return make_node(value(a).middleCols(c0, n), {a}, [a, c0, n](Tape& t, int self) {
        if (t.requires_grad(a)) t.grad_ref(a).middleCols(c0, n) += t.grad(Var{self});
    });
}

Var Tape::concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw InputError("tape: concat_rows needs at least one part");
    Eigen::Index total = 0;
    const Eigen::Index cols_n = value(parts[0]).cols();
    for (Var p : parts) {
        if (value(p).cols() != cols_n) throw InputError("tape: concat_rows column mismatch");
        total += value(p).rows();
    }
    Eigen::MatrixXd v(total, cols_n);
    Eigen::Index at = 0;
    for (Var p : parts) {
        v.middleRows(at, value(p).rows()) = value(p);
        at += value(p).rows();
    }
    std::vector<Var> ps = parts;
    return make_node(v, parts, [ps](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        Eigen::Index at = 0;
        for (Var p : ps) {
            Eigen::Index n = t.value(p).rows();
            if (t.requires_grad(p)) t.grad_ref(p) += g.middleRows(at, n);
            at += n;
        }
    });
}

Var Tape::row_broadcast_mul(Var x, Var alpha) {
    if (value(alpha).rows() != 1 || value(alpha).cols() != value(x).cols())
        throw InputError("tape: row_broadcast_mul expects a 1 x C multiplier");
    Eigen::MatrixXd v = value(x).array().rowwise() * value(alpha).row(0).array();
    return make_node(v, {x, alpha}, [x, alpha](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(x))
            t.grad_ref(x) += (g.array().rowwise() * t.value(alpha).row(0).array()).matrix();
        if (t.requires_grad(alpha))
            t.grad_ref(alpha) += g.cwiseProduct(t.value(x)).colwise().sum();
    });
}

Var Tape::row_broadcast_add(Var x, Var beta) {
    if (value(beta).rows() != 1 || value(beta).cols() != value(x).cols())
        throw InputError("tape: row_broadcast_add expects a 1 x C shift");
    Eigen::MatrixXd v = value(x).array().rowwise() + value(beta).row(0).array();
    return make_node(v, {x, beta}, [x, beta](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(x)) t.grad_ref(x) += g;
        if (t.requires_grad(beta)) t.grad_ref(beta) += g.colwise().sum();
    });
}

Var Tape::scale_by(Var x, Var gamma) {
    if (value(gamma).size() != 1) throw InputError("tape: scale_by expects a 1 x 1 gate");
    return make_node(value(x) * value(gamma)(0, 0), {x, gamma}, [x, gamma](Tape& t, int self) {
        const Eigen::MatrixXd& g = t.grad(Var{self});
        if (t.requires_grad(x)) t.grad_ref(x) += g * t.value(gamma)(0, 0);
        if (t.requires_grad(gamma))
            t.grad_ref(gamma)(0, 0) += g.cwiseProduct(t.value(x)).sum();
    });
}

GradcheckReport gradcheck(
    const std::function<double(const Eigen::VectorXd&, Eigen::VectorXd*)>& fn,
    const Eigen::VectorXd& point, double eps, double tol) {
    Eigen::VectorXd analytic(point.size());
    double f0 = fn(point, &analytic);
    if (!std::isfinite(f0) || !analytic.allFinite())
        throw NumericalAbort("gradcheck: non-finite output at the evaluation point");

    GradcheckReport rep;
    for (Eigen::Index i = 0; i < point.size(); ++i) {
        Eigen::VectorXd p = point;
        p(i) += eps;
        double fp = fn(p, nullptr);
        p(i) = point(i) - eps;
        double fm = fn(p, nullptr);
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw NumericalAbort("gradcheck: non-finite output during finite differencing");
        double fd = (fp - fm) / (2 * eps);
        double abs_err = std::abs(fd - analytic(i));
        double denom = std::max({std::abs(fd), std::abs(analytic(i)), 1e-8});
        rep.max_abs_err = std::max(rep.max_abs_err, abs_err);
        rep.max_rel_err = std::max(rep.max_rel_err, abs_err / denom);
        ++rep.checked;
    }
    rep.pass = rep.max_rel_err <= tol;
    return rep;
}

}  // namespace sags::ad
