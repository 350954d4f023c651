#pragma once

#include "gpccopf/grid.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace gpccopf {

// Per-element injections in p.u.; vectors align with case.gens / loads / res_units.
struct InjectionSet {
    Eigen::VectorXd p_g;
    Eigen::VectorXd p_l, q_l;
    Eigen::VectorXd p_rs, q_rs;
};

struct BranchFlow {
    double p = 0, q = 0, s = 0;
};

struct PfSolution {
    Eigen::VectorXd v, theta;
    Eigen::VectorXd p, q;  // net bus injections
    std::vector<BranchFlow> flows;
    int iterations = 0;
    double max_mismatch = 0;
};

class PfError : public std::runtime_error {
public:
    enum class Kind { NonConvergence, SingularJacobian, Unbalanced, Singular };
    PfError(Kind k, const std::string& what, double last = 0) : std::runtime_error(what), kind_(k), last_(last) {}
    Kind kind() const { return kind_; }
    double last_mismatch() const { return last_; }

private:
    Kind kind_;
    double last_;
};

// Reference point of the case (p_ref everywhere, q = gamma * p).
InjectionSet reference_injections(const GridCase& c);

// Specified net active / reactive injections per bus (gens + RES - loads).
// Reactive generation is left out; it is an unknown of the power flow.
Eigen::VectorXd bus_p_spec(const GridCase& c, const InjectionSet& inj);
Eigen::VectorXd bus_q_spec(const GridCase& c, const InjectionSet& inj);

// Voltage setpoints per bus (1 at PQ buses).
Eigen::VectorXd bus_v_set(const GridCase& c);

// Newton-Raphson equations in the reduced unknowns [theta_nonslack, v_pq].
class PfEquations {
public:
    PfEquations(const GridCase& c, const InjectionSet& inj);

    int size() const { return static_cast<int>(theta_idx_.size() + v_idx_.size()); }
    Eigen::VectorXd initial() const;
    void unpack(const Eigen::VectorXd& x, Eigen::VectorXd& v, Eigen::VectorXd& theta) const;
    Eigen::VectorXd mismatch(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const;

private:
    const GridCase& c_;
    Eigen::MatrixXcd Y_;
    Eigen::VectorXd p_spec_, q_spec_, v_set_;
    std::vector<int> theta_idx_, v_idx_;
};

// Complex power injections S = V conj(Y V).
void bus_injections(const Eigen::MatrixXcd& Y, const Eigen::VectorXd& v, const Eigen::VectorXd& theta,
                    Eigen::VectorXd& p, Eigen::VectorXd& q);

PfSolution solve_ac_pf(const GridCase& c, const InjectionSet& inj, double tol = 1e-8, int max_iter = 30);

// Lossless DC angles for per-bus injections p (must sum to zero).
Eigen::VectorXd solve_dc_pf(const GridCase& c, const Eigen::VectorXd& p);
// DC active flow per branch, (theta_k - theta_j) / x.
Eigen::VectorXd dc_branch_flows(const GridCase& c, const Eigen::VectorXd& theta);

// From-end flows of the series branch model.
std::vector<BranchFlow> branch_flows(const GridCase& c, const Eigen::VectorXd& v, const Eigen::VectorXd& theta);

// Generator outputs implied by a converged state; the slack unit absorbs the
// active residual and every unit at a bus shares its reactive residual equally.
Eigen::VectorXd gen_p(const GridCase& c, const InjectionSet& inj, const PfSolution& s);
Eigen::VectorXd gen_q(const GridCase& c, const InjectionSet& inj, const PfSolution& s);

}  // namespace gpccopf
