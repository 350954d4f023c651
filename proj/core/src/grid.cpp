#include "gpccopf/grid.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <queue>
#include <sstream>

namespace gpccopf {

using json = nlohmann::json;

namespace {

BusKind parse_kind(const std::string& s) {
    if (s == "slack") return BusKind::Slack;
    if (s == "pv") return BusKind::PV;
    if (s == "pq") return BusKind::PQ;
    throw CaseError(CaseError::Kind::Malformed, "unknown bus kind '" + s + "'");
}

const char* kind_name(BusKind k) {
    switch (k) {
        case BusKind::Slack: return "slack";
        case BusKind::PV: return "pv";
        default: return "pq";
    }
}

template <class T>
T field(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end()) throw CaseError(CaseError::Kind::Malformed, std::string("missing field '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception& e) {
        throw CaseError(CaseError::Kind::Malformed, std::string("bad field '") + key + "': " + e.what());
    }
}

}  // namespace

int GridCase::index_of(int bus_id) const {
    auto it = index_.find(bus_id);
    if (it == index_.end()) throw CaseError(CaseError::Kind::DanglingBranch, "unknown bus id " + std::to_string(bus_id));
    return it->second;
}

void GridCase::finalize() {
    index_.clear();
    slack_ = -1;
    for (int i = 0; i < m(); ++i) {
        const Bus& b = buses[i];
        if (!index_.emplace(b.id, i).second)
            throw CaseError(CaseError::Kind::DuplicateBus, "duplicate bus id " + std::to_string(b.id));
        if (b.kind == BusKind::Slack) {
            if (slack_ >= 0) throw CaseError(CaseError::Kind::Invalid, "more than one slack bus");
            slack_ = i;
        }
        if (!(b.v_min > 0 && b.v_min <= b.v_max))
            throw CaseError(CaseError::Kind::Invalid, "bad voltage limits at bus " + std::to_string(b.id));
    }
    if (slack_ < 0) throw CaseError(CaseError::Kind::NoSlack, "no slack bus");
    if (!(base_mva > 0)) throw CaseError(CaseError::Kind::Invalid, "base_mva must be positive");

    for (const Branch& br : branches) {
        if (!index_.count(br.from) || !index_.count(br.to))
            throw CaseError(CaseError::Kind::DanglingBranch,
                            "branch " + std::to_string(br.from) + "-" + std::to_string(br.to) + " references a missing bus");
        if (br.r < 0) throw CaseError(CaseError::Kind::Invalid, "negative branch resistance");
        if (br.r == 0 && br.x == 0) throw CaseError(CaseError::Kind::ZeroImpedance, "zero-impedance branch");
        if (!(br.s_max > 0)) throw CaseError(CaseError::Kind::Invalid, "branch s_max must be positive");
    }

    slack_gen_ = -1;
    ctrl_gens_.clear();
    for (int g = 0; g < n_gen(); ++g) {
        const Gen& gen = gens[g];
        int bi = index_of(gen.bus);
        if (gen.p_min > gen.p_max || gen.q_min > gen.q_max)
            throw CaseError(CaseError::Kind::Invalid, "generator limits out of order at bus " + std::to_string(gen.bus));
        if (gen.c2 < 0 || gen.c1 < 0 || gen.c0 < 0)
            throw CaseError(CaseError::Kind::Invalid, "negative cost coefficient at bus " + std::to_string(gen.bus));
        if (bi == slack_) {
            if (slack_gen_ >= 0) throw CaseError(CaseError::Kind::Invalid, "more than one generator at the slack bus");
            slack_gen_ = g;
        } else {
            ctrl_gens_.push_back(g);
        }
    }
    if (slack_gen_ < 0) throw CaseError(CaseError::Kind::NoSlack, "slack bus has no generator");

    for (const auto* group : {&loads, &res_units})
        for (const Injector& inj : *group) {
            index_of(inj.bus);
            if (inj.gamma < 0) throw CaseError(CaseError::Kind::Invalid, "negative gamma at bus " + std::to_string(inj.bus));
        }

    if (!is_connected(*this)) throw CaseError(CaseError::Kind::Invalid, "grid is not connected");
}

GridCase parse_case(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw CaseError(CaseError::Kind::Malformed, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw CaseError(CaseError::Kind::Malformed, "case root must be an object");

    GridCase c;
    c.base_mva = field<double>(j, "base_mva");
    const double base = c.base_mva;

    for (const json& b : field<json>(j, "buses")) {
        Bus bus;
        bus.id = field<int>(b, "id");
        bus.kind = parse_kind(field<std::string>(b, "kind"));
        bus.v_min = field<double>(b, "v_min");
        bus.v_max = field<double>(b, "v_max");
        bus.g_shunt = field<double>(b, "g_shunt");
        bus.b_shunt = field<double>(b, "b_shunt");
        c.buses.push_back(bus);
    }
    for (const json& b : field<json>(j, "branches")) {
        Branch br;
        br.from = field<int>(b, "from");
        br.to = field<int>(b, "to");
        br.r = field<double>(b, "r");
        br.x = field<double>(b, "x");
        br.s_max = field<double>(b, "s_max_mva") / base;
        c.branches.push_back(br);
    }
    for (const json& g : field<json>(j, "gens")) {
        Gen gen;
        gen.bus = field<int>(g, "bus");
        gen.p_min = field<double>(g, "p_min_mw") / base;
        gen.p_max = field<double>(g, "p_max_mw") / base;
        gen.q_min = field<double>(g, "q_min_mvar") / base;
        gen.q_max = field<double>(g, "q_max_mvar") / base;
        gen.v_set = field<double>(g, "v_set");
        gen.c2 = field<double>(g, "c2") * base * base;
        gen.c1 = field<double>(g, "c1") * base;
        gen.c0 = field<double>(g, "c0");
        // optional; midpoint of the active range otherwise
        gen.p_ref = g.contains("p_ref_mw") ? g["p_ref_mw"].get<double>() / base : 0.5 * (gen.p_min + gen.p_max);
        c.gens.push_back(gen);
    }
    auto read_inj = [&](const char* key, std::vector<Injector>& out) {
        if (!j.contains(key)) return;
        for (const json& l : j[key]) {
            Injector inj;
            inj.bus = field<int>(l, "bus");
            inj.p_ref = field<double>(l, "p_ref_mw") / base;
            inj.gamma = field<double>(l, "gamma");
            out.push_back(inj);
        }
    };
    if (!j.contains("loads")) throw CaseError(CaseError::Kind::Malformed, "missing field 'loads'");
    read_inj("loads", c.loads);
    read_inj("res", c.res_units);

    c.finalize();
    return c;
}

GridCase load_case(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CaseError(CaseError::Kind::Malformed, "cannot open case file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_case(ss.str());
}

std::string serialize_case(const GridCase& c) {
    const double base = c.base_mva;
    json j;
    j["base_mva"] = base;
    j["buses"] = json::array();
    for (const Bus& b : c.buses)
        j["buses"].push_back({{"id", b.id}, {"kind", kind_name(b.kind)}, {"v_min", b.v_min}, {"v_max", b.v_max},
                              {"g_shunt", b.g_shunt}, {"b_shunt", b.b_shunt}});
    j["branches"] = json::array();
    for (const Branch& br : c.branches)
        j["branches"].push_back({{"from", br.from}, {"to", br.to}, {"r", br.r}, {"x", br.x}, {"s_max_mva", br.s_max * base}});
    j["gens"] = json::array();
    for (const Gen& g : c.gens)
        j["gens"].push_back({{"bus", g.bus},
                             {"p_min_mw", g.p_min * base},
                             {"p_max_mw", g.p_max * base},
                             {"q_min_mvar", g.q_min * base},
                             {"q_max_mvar", g.q_max * base},
                             {"v_set", g.v_set},
                             {"c2", g.c2 / (base * base)},
                             {"c1", g.c1 / base},
                             {"c0", g.c0},
                             {"p_ref_mw", g.p_ref * base}});
    auto dump_inj = [&](const std::vector<Injector>& v) {
        json a = json::array();
        for (const Injector& i : v) a.push_back({{"bus", i.bus}, {"p_ref_mw", i.p_ref * base}, {"gamma", i.gamma}});
        return a;
    };
    j["loads"] = dump_inj(c.loads);
    j["res"] = dump_inj(c.res_units);
    return j.dump(1);
}

std::complex<double> branch_admittance(const Branch& br) {
    if (br.r == 0 && br.x == 0) throw CaseError(CaseError::Kind::ZeroImpedance, "zero-impedance branch");
    return 1.0 / std::complex<double>(br.r, br.x);
}

Eigen::MatrixXcd admittance_matrix(const GridCase& c) {
    const int m = c.m();
    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(m, m);
    for (const Branch& br : c.branches) {
        const std::complex<double> y = branch_admittance(br);
        const int k = c.index_of(br.from), j = c.index_of(br.to);
        Y(k, j) -= y;
        Y(j, k) -= y;
        Y(k, k) += y;
        Y(j, j) += y;
    }
    for (int k = 0; k < m; ++k) Y(k, k) += std::complex<double>(c.buses[k].g_shunt, c.buses[k].b_shunt);
    return Y;
}

bool is_connected(const GridCase& c) {
    const int m = c.m();
    if (m == 0) return false;
    std::vector<std::vector<int>> adj(m);
    std::unordered_map<int, int> idx;
    for (int i = 0; i < m; ++i) idx[c.buses[i].id] = i;
    for (const Branch& br : c.branches) {
        auto f = idx.find(br.from), t = idx.find(br.to);
        if (f == idx.end() || t == idx.end()) return false;
        adj[f->second].push_back(t->second);
        adj[t->second].push_back(f->second);
    }
    std::vector<char> seen(m, 0);
    std::queue<int> q;
    q.push(0);
    seen[0] = 1;
    int count = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : adj[u])
            if (!seen[v]) {
                seen[v] = 1;
                ++count;
                q.push(v);
            }
    }
    return count == m;
}

}  // namespace gpccopf
