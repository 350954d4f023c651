#include "common.hpp"

#include "gpccopf/grid.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

using namespace gpccopf;
using nlohmann::json;

namespace {

CaseError::Kind parse_error_kind(const std::string& text) {
    try {
        parse_case(text);
    } catch (const CaseError& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no CaseError";
    return CaseError::Kind::Invalid;
}

json two_bus() { return json::parse(two_bus_json()); }

}  // namespace

TEST(Grid, MinimalTwoBusCase) {
    const GridCase c = parse_case(two_bus_json());
    EXPECT_EQ(c.m(), 2);
    EXPECT_EQ(c.branches.size(), 1u);
    EXPECT_EQ(c.n_gen(), 1);
    EXPECT_EQ(c.slack_index(), 0);
    EXPECT_DOUBLE_EQ(c.loads[0].p_ref, 0.1);  // MW to p.u.
}

TEST(Grid, DistinctErrorKinds) {
    json j = two_bus();
    j["buses"][0]["kind"] = "pv";
    EXPECT_EQ(parse_error_kind(j.dump()), CaseError::Kind::NoSlack);

    j = two_bus();
    j["branches"][0]["to"] = 7;
    EXPECT_EQ(parse_error_kind(j.dump()), CaseError::Kind::DanglingBranch);

    j = two_bus();
    j["buses"][1]["id"] = 1;
    EXPECT_EQ(parse_error_kind(j.dump()), CaseError::Kind::DuplicateBus);

    EXPECT_EQ(parse_error_kind("{\"base_mva\": "), CaseError::Kind::Malformed);
}

TEST(Grid, NoSlackMessage) {
    json j = two_bus();
    j["buses"][0]["kind"] = "pq";
    try {
        parse_case(j.dump());
        FAIL();
    } catch (const CaseError& e) {
        EXPECT_NE(std::string(e.what()).find("no slack bus"), std::string::npos);
    }
}

TEST(Grid, LimitPairsValidated) {
    json j = two_bus();
    j["buses"][1]["v_min"] = 1.2;
    EXPECT_THROW(parse_case(j.dump()), CaseError);
    j = two_bus();
    j["gens"][0]["c2"] = -1;
    EXPECT_THROW(parse_case(j.dump()), CaseError);
}

TEST(Grid, Ieee9Roster) {
    // 3 generators, 3 loads and two renewable units
    const GridCase& c = ieee9();
    EXPECT_EQ(c.m(), 9);
    EXPECT_EQ(c.n_gen(), 3);
    EXPECT_EQ(c.loads.size(), 3u);
    EXPECT_EQ(c.res_units.size(), 2u);
}

TEST(Grid, BranchAdmittanceSubstitution) {
    Branch br;
    br.r = 0;
    br.x = 0.1;
    const auto y = branch_admittance(br);
    EXPECT_NEAR(y.real(), 0.0, 1e-15);
    EXPECT_NEAR(y.imag(), -10.0, 1e-12);
    const GridCase c = parse_case(two_bus_json(0.0, 0.1));
    const auto Y = admittance_matrix(c);
    EXPECT_NEAR(Y(0, 1).imag(), 10.0, 1e-12);
    EXPECT_NEAR(Y(0, 0).imag(), -10.0, 1e-12);
}

TEST(Grid, ZeroImpedanceRejected) {
    json j = two_bus();
    j["branches"][0]["x"] = 0.0;
    j["branches"][0]["r"] = 0.0;
    try {
        admittance_matrix(parse_case(j.dump()));
        FAIL();
    } catch (const CaseError& e) {
        EXPECT_EQ(e.kind(), CaseError::Kind::ZeroImpedance);
    }
}

TEST(Grid, ThreeBusRingRowsSumToZero) {
    json j = two_bus();
    j["buses"].push_back({{"id", 3}, {"kind", "pq"}, {"v_min", 0.9}, {"v_max", 1.1}, {"g_shunt", 0}, {"b_shunt", 0}});
    j["branches"].push_back({{"from", 2}, {"to", 3}, {"r", 0.01}, {"x", 0.2}, {"s_max_mva", 100}});
    j["branches"].push_back({{"from", 3}, {"to", 1}, {"r", 0.02}, {"x", 0.15}, {"s_max_mva", 100}});
    const auto Y = admittance_matrix(parse_case(j.dump()));
    for (int k = 0; k < 3; ++k) EXPECT_LT(std::abs(Y.row(k).sum()), 1e-12);
}

class BundledCase : public ::testing::TestWithParam<const char*> {};

TEST_P(BundledCase, AdmittanceInvariants) {
    const GridCase c = load_case(case_path(GetParam()));
    const auto Y = admittance_matrix(c);
    EXPECT_LT((Y - Y.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    for (int k = 0; k < c.m(); ++k) {
        const std::complex<double> shunt(c.buses[k].g_shunt, c.buses[k].b_shunt);
        EXPECT_LT(std::abs(Y.row(k).sum() - shunt), 1e-9 * std::max(1.0, Y.row(k).cwiseAbs().maxCoeff()));
    }
}

TEST_P(BundledCase, ConnectedAndRoundTrips) {
    const GridCase c = load_case(case_path(GetParam()));
    EXPECT_TRUE(is_connected(c));
    const GridCase d = parse_case(serialize_case(c));
    EXPECT_EQ(serialize_case(d), serialize_case(c));
    ASSERT_EQ(d.m(), c.m());
    for (int k = 0; k < c.m(); ++k) EXPECT_EQ(d.buses[k].v_max, c.buses[k].v_max);
    for (size_t b = 0; b < c.branches.size(); ++b) EXPECT_EQ(d.branches[b].s_max, c.branches[b].s_max);
    for (int g = 0; g < c.n_gen(); ++g) {
        EXPECT_EQ(d.gens[g].c2, c.gens[g].c2);
        EXPECT_EQ(d.gens[g].p_max, c.gens[g].p_max);
    }
}

INSTANTIATE_TEST_SUITE_P(Cases, BundledCase, ::testing::Values("ieee9", "ieee39", "ieee118"));
