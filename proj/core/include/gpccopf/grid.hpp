#pragma once

#include <Eigen/Dense>

#include <complex>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace gpccopf {

enum class BusKind { Slack, PV, PQ };

struct Bus {
    int id = 0;
    BusKind kind = BusKind::PQ;
    double v_min = 0.9, v_max = 1.1;
    double g_shunt = 0.0, b_shunt = 0.0;  // p.u.
};

struct Branch {
    int from = 0, to = 0;
    double r = 0.0, x = 0.0;
    double s_max = 0.0;  // p.u.
};

// All powers per-unit, costs in $/pu^2, $/pu, $.
struct Gen {
    int bus = 0;
    double p_min = 0, p_max = 0, q_min = 0, q_max = 0;
    double v_set = 1.0;
    double c2 = 0, c1 = 0, c0 = 0;
    double p_ref = 0;  // reference dispatch used by the sampler
};

// Loads and renewable units share one shape.
struct Injector {
    int bus = 0;
    double p_ref = 0;
    double gamma = 0;
};
using Load = Injector;
using Res = Injector;

class CaseError : public std::runtime_error {
public:
    enum class Kind { Malformed, NoSlack, DanglingBranch, DuplicateBus, Invalid, ZeroImpedance };
    CaseError(Kind k, const std::string& what) : std::runtime_error(what), kind_(k) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct GridCase {
    double base_mva = 100.0;
    std::vector<Bus> buses;
    std::vector<Branch> branches;
    std::vector<Gen> gens;
    std::vector<Load> loads;
    std::vector<Res> res_units;

    // dense index of a bus id; throws on unknown id
    int index_of(int bus_id) const;
    int slack_index() const { return slack_; }
    int slack_gen() const { return slack_gen_; }
    int m() const { return static_cast<int>(buses.size()); }
    int n_gen() const { return static_cast<int>(gens.size()); }

    // gens that are not at the slack bus, in case order
    const std::vector<int>& controllable_gens() const { return ctrl_gens_; }

    // validates invariants and builds the index; called by parse_case
    void finalize();

private:
    std::unordered_map<int, int> index_;
    int slack_ = -1;
    int slack_gen_ = -1;
    std::vector<int> ctrl_gens_;
};

GridCase parse_case(const std::string& text);
GridCase load_case(const std::string& path);
std::string serialize_case(const GridCase& c);

Eigen::MatrixXcd admittance_matrix(const GridCase& c);

// series admittance of one branch
std::complex<double> branch_admittance(const Branch& br);

bool is_connected(const GridCase& c);

}  // namespace gpccopf
