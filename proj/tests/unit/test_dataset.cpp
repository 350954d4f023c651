#include "common.hpp"

#include "gpccopf/dataset.hpp"
#include "gpccopf/powerflow.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

using namespace gpccopf;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

SamplingParams zero_variance() {
    SamplingParams p;
    p.sigma_eta_corr = p.sigma_eta_unc = p.sigma_nu_corr = p.sigma_nu_unc = 0;
    return p;
}

SampleSet toy_set(int n, const MatrixXd& A, const VectorXd& b, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    SampleSet s;
    s.X.resize(n, A.cols());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < A.cols(); ++j) s.X(i, j) = z(rng);
    s.Y = (s.X * A.transpose()).rowwise() + b.transpose();
    for (int j = 0; j < A.cols(); ++j) s.input_schema.push_back("x" + std::to_string(j));
    for (int j = 0; j < A.rows(); ++j) s.output_schema.push_back("y" + std::to_string(j));
    return s;
}

}  // namespace

TEST(Sampling, DegenerateLogNormal) {
    const GridCase& c = ieee9();
    const SamplingParams p = zero_variance();
    for (const InjectionSet& inj : sample_injections(c, p, 20)) {
        for (size_t i = 0; i < c.loads.size(); ++i) {
            EXPECT_NEAR(inj.p_l[i], std::exp(p.mu_eta_corr + p.mu_eta_unc) * c.loads[i].p_ref, 1e-15);
            EXPECT_EQ(inj.q_l[i], c.loads[i].gamma * inj.p_l[i]);
        }
        for (size_t i = 0; i < c.res_units.size(); ++i) {
            EXPECT_NEAR(inj.p_rs[i], std::exp(p.mu_nu_corr + p.mu_nu_unc) * c.res_units[i].p_ref, 1e-14);
            EXPECT_EQ(inj.q_rs[i], c.res_units[i].gamma * inj.p_rs[i]);
        }
    }
}

TEST(Sampling, SameSeedIdentical) {
    const GridCase& c = ieee9();
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const auto a = sample_operating_points(c, p, 50), b = sample_operating_points(c, p, 50);
    ASSERT_EQ(a.size(), b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a[i].p_l, b[i].p_l);
        EXPECT_EQ(a[i].p_rs, b[i].p_rs);
        EXPECT_EQ(a[i].p_g, b[i].p_g);
    }
}

TEST(Sampling, LogMultiplierMean) {
    const GridCase& c = ieee9();
    const SamplingParams p;
    const int n = 10000;
    const auto s = sample_injections(c, p, n);
    const double sd = std::sqrt(p.sigma_eta_corr * p.sigma_eta_corr + p.sigma_eta_unc * p.sigma_eta_unc);
    for (size_t i = 0; i < c.loads.size(); ++i) {
        double m = 0;
        for (const InjectionSet& inj : s) m += std::log(inj.p_l[i] / c.loads[i].p_ref);
        m /= n;
        EXPECT_LT(std::abs(m - (p.mu_eta_corr + p.mu_eta_unc)), 3 * sd / std::sqrt(n));
    }
}

TEST(Sampling, CorrelatedFactorSharedAcrossLoads) {
    // with no local noise every load carries the same multiplier
    const GridCase& c = ieee9();
    SamplingParams p;
    p.sigma_eta_unc = 0;
    for (const InjectionSet& inj : sample_injections(c, p, 10)) {
        const double eta = inj.p_l[0] / c.loads[0].p_ref;
        for (size_t i = 1; i < c.loads.size(); ++i) EXPECT_NEAR(inj.p_l[i] / c.loads[i].p_ref, eta, 1e-12);
    }
}

TEST(Generation, DefaultLossFactor) {
    // total losses of 1.39 %
    EXPECT_DOUBLE_EQ(SamplingParams{}.rho, 1.0139);
}

TEST(Generation, BalanceIdentityAndPsiRange) {
    // draws that cannot be balanced within the limits are rejected; most must succeed
    const GridCase& c = ieee9();
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const auto inj = sample_injections(c, p, 1000);
    int ok = 0;
    for (size_t i = 0; i < inj.size(); ++i) {
        VectorXd psi;
        VectorXd pg;
        try {
            pg = sample_generation(c, inj[i].p_l, inj[i].p_rs, p, i, &psi);
        } catch (const DatasetError&) {
            continue;
        }
        ++ok;
        EXPECT_NEAR(pg.sum() + inj[i].p_rs.sum(), p.rho * inj[i].p_l.sum(), 1e-12);
        EXPECT_GE(psi.minCoeff(), p.psi_lo);
        EXPECT_LE(psi.maxCoeff(), p.psi_hi);
    }
    EXPECT_GE(ok, 900);
}

TEST(Generation, SingleGeneratorTakesRemainder) {
    const GridCase c = parse_case(two_bus_json());
    const SamplingParams p;
    const VectorXd pl = VectorXd::Constant(1, 0.3), prs(0);
    for (std::uint64_t i = 0; i < 5; ++i)
        EXPECT_NEAR(sample_generation(c, pl, prs, p, i)[0], p.rho * 0.3, 1e-15);
}

TEST(Generation, InfeasibleSample) {
    const GridCase& c = ieee9();
    const VectorXd pl = VectorXd::Constant(3, 0.1), prs = VectorXd::Constant(2, 5.0);
    try {
        sample_generation(c, pl, prs, SamplingParams{}, 0);
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_EQ(e.kind(), DatasetError::Kind::InfeasibleSample);
        EXPECT_NE(std::string(e.what()).find("infeasible sample"), std::string::npos);
    }
}

TEST(BuildDataset, Ieee9Schema) {
    const GridCase& c = ieee9();
    const auto in = input_schema(c), out = output_schema(c);
    EXPECT_EQ(in.size(), 7u);  // 2 non-slack p_g + 3 p_l + 2 p_rs
    EXPECT_EQ(in.front(), "pg_2");
    EXPECT_EQ(in.back(), "prs_6");
    // 6 non-generator voltages + 3 q_g + 9 branch flows
    EXPECT_EQ(out.size(), 18u);
    EXPECT_EQ(out.front(), "v_4");
    EXPECT_EQ(out.back(), "s_" + std::to_string(c.branches.back().from) + "_" + std::to_string(c.branches.back().to));
}

TEST(BuildDataset, ZeroVarianceRowsIdentical) {
    const GridCase& c = ieee9();
    SamplingParams p = zero_variance();
    p.psi_lo = 1.0;
    p.psi_hi = std::nextafter(1.0, 2.0);
    const SampleSet s = generate_dataset(c, p, 10);
    for (int i = 1; i < s.rows(); ++i) EXPECT_LT((s.Y.row(i) - s.Y.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BuildDataset, FiniteAndConsistent) {
    const GridCase& c = ieee9();
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const SampleSet s = generate_dataset(c, p, 40);
    EXPECT_EQ(s.X.cols(), static_cast<long>(s.input_schema.size()));
    EXPECT_EQ(s.Y.cols(), static_cast<long>(s.output_schema.size()));
    EXPECT_TRUE(s.X.allFinite());
    EXPECT_TRUE(s.Y.allFinite());
    const SampleSet t = generate_dataset(c, p, 40);
    EXPECT_EQ(s.X, t.X);
    EXPECT_EQ(s.Y, t.Y);
}

TEST(BuildDataset, UnstableWhenMostDiverge) {
    const GridCase& c = ieee9();
    auto inj = sample_operating_points(c, SamplingParams{}, 10);
    for (auto& s : inj) {
        s.p_l *= 50;
        s.q_l *= 50;
    }
    try {
        build_dataset(c, inj);
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_EQ(e.kind(), DatasetError::Kind::Unstable);
    }
}

TEST(LinearSurrogate, ExactRecovery) {
    const MatrixXd A = MatrixXd::Constant(1, 1, 2.0);
    const VectorXd b = VectorXd::Constant(1, 1.0);
    const SampleSet s = toy_set(20, A, b, 1);
    const LinearSurrogate lin = fit_linear_surrogate(s);
    EXPECT_NEAR(lin.A(0, 0), 2.0, 1e-10);
    EXPECT_NEAR(lin.b[0], 1.0, 1e-10);
    const SampleSet r = residual_dataset(s, lin);
    EXPECT_LT(r.Y.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LinearSurrogate, NormalEquations) {
    std::mt19937_64 rng(9);
    std::normal_distribution<double> z;
    SampleSet s = toy_set(40, MatrixXd::Random(3, 4), VectorXd::Random(3), 2);
    for (int i = 0; i < s.Y.size(); ++i) s.Y.data()[i] += 0.1 * z(rng);
    const LinearSurrogate lin = fit_linear_surrogate(s);
    const MatrixXd R = s.Y - lin.predict_rows(s.X);
    EXPECT_LT((s.X.transpose() * R).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT(R.colwise().sum().cwiseAbs().maxCoeff(), 1e-8);
}

TEST(LinearSurrogate, RankDeficientRejected) {
    SampleSet s = toy_set(10, MatrixXd::Random(1, 2), VectorXd::Random(1), 3);
    s.X.col(1) = 2 * s.X.col(0);
    EXPECT_THROW(fit_linear_surrogate(s), DatasetError);
}

TEST(LinearSurrogate, DcVoltageRowsConstant) {
    const GridCase& c = ieee9();
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const auto inj = sample_operating_points(c, p, 30);
    const LinearSurrogate lin = fit_linear_surrogate(build_dc_dataset(c, inj));
    for (size_t j = 0; j < lin.output_schema.size(); ++j)
        if (lin.output_schema[j].rfind("v_", 0) == 0) {
            EXPECT_EQ(lin.A.row(j).cwiseAbs().maxCoeff(), 0.0);
            EXPECT_EQ(lin.b[j], 1.0);
        }
}

TEST(Residual, ReconstructionExactAndFlowVarianceShrinks) {
    const GridCase& c = ieee9();
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const auto inj = sample_operating_points(c, p, 60);
    const SampleSet ac = build_dataset(c, inj);
    const LinearSurrogate lin = fit_linear_surrogate(build_dc_dataset(c, inj));
    const SampleSet r = residual_dataset(ac, lin);
    EXPECT_EQ((lin.predict_rows(ac.X) + r.Y - ac.Y).cwiseAbs().maxCoeff(), 0.0);
    auto var = [](const VectorXd& v) { return (v.array() - v.mean()).square().sum() / (v.size() - 1); };
    for (size_t j = 0; j < ac.output_schema.size(); ++j)
        if (ac.output_schema[j].rfind("s_", 0) == 0)
            EXPECT_LT(var(r.Y.col(j)), var(ac.Y.col(j))) << ac.output_schema[j];
}

TEST(Residual, SchemaMismatch) {
    SampleSet s = toy_set(10, MatrixXd::Random(1, 2), VectorXd::Random(1), 4);
    LinearSurrogate lin = fit_linear_surrogate(s);
    lin.output_schema = {"other"};
    EXPECT_THROW(residual_dataset(s, lin), DatasetError);
}

TEST(Standardize, DirectFormulaAndRoundTrip) {
    SampleSet s;
    s.input_schema = {"a"};
    s.output_schema = {"b"};
    s.X = MatrixXd{{1}, {2}, {3}};
    s.Y = MatrixXd{{10}, {0}, {-4}};
    const auto [z, sc] = standardize(s);
    EXPECT_NEAR(z.X(0, 0), -1, 1e-15);
    EXPECT_NEAR(z.X(1, 0), 0, 1e-15);
    EXPECT_NEAR(z.X(2, 0), 1, 1e-15);
    EXPECT_LT(std::abs(z.Y.mean()), 1e-9);
    const SampleSet back = unstandardize(z, sc);
    EXPECT_LT((back.X - s.X).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((back.Y - s.Y).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Standardize, Ieee9Invariants) {
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const SampleSet z = standardize(generate_dataset(ieee9(), p, 30)).first;
    for (const MatrixXd* M : {&z.X, &z.Y})
        for (int j = 0; j < M->cols(); ++j) {
            const VectorXd col = M->col(j);
            EXPECT_LT(std::abs(col.mean()), 1e-9);
            EXPECT_LT(std::abs(std::sqrt((col.array() - col.mean()).square().sum() / (col.size() - 1)) - 1), 1e-9);
        }
}

TEST(Standardize, ConstantColumnNamed) {
    SampleSet s;
    s.input_schema = {"pl_5"};
    s.output_schema = {"v_4"};
    s.X = MatrixXd{{1}, {2}};
    s.Y = MatrixXd{{1}, {1}};
    try {
        standardize(s);
        FAIL();
    } catch (const DatasetError& e) {
        EXPECT_EQ(std::string(e.what()), "constant column v_4");
    }
}

TEST(Csv, RoundTripBitExact) {
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const SampleSet s = generate_dataset(ieee9(), p, 15);
    const std::string path = (std::filesystem::temp_directory_path() / "gpccopf_csv_roundtrip.csv").string();
    write_csv(s, path);
    const SampleSet t = read_csv(path);
    EXPECT_EQ(t.input_schema, s.input_schema);
    EXPECT_EQ(t.output_schema, s.output_schema);
    EXPECT_EQ(t.X, s.X);
    EXPECT_EQ(t.Y, s.Y);
    std::filesystem::remove(path);
}

TEST(Csv, ScalerSidecarRoundTrip) {
    SamplingParams p;
    p.mu_nu_unc = -0.2;
    const SampleSet s = generate_dataset(ieee9(), p, 15);
    const Scaler sc = standardize(s).second;
    const Scaler back = scaler_from_json(scaler_to_json(sc, s));
    EXPECT_EQ(back.x_mean, sc.x_mean);
    EXPECT_EQ(back.y_std, sc.y_std);
}
