#pragma once

#include "common.hpp"

#include "gpccopf/ccopf.hpp"
#include "gpccopf/dataset.hpp"
#include "gpccopf/gp.hpp"
#include "gpccopf/powerflow.hpp"

// Trained IEEE-9 surrogates shared by the optimisation and validation suites.
struct Ieee9Models {
    gpccopf::SampleSet ac, dc;
    gpccopf::GpModel full, resid;
    gpccopf::LinearSurrogate lin;
    gpccopf::Forecast forecast;
    gpccopf::UncertaintySpec u;
};

inline gpccopf::SamplingParams ieee9_params() {
    gpccopf::SamplingParams p;
    p.mu_nu_unc = -0.2;
    p.seed = 1;
    return p;
}

inline const Ieee9Models& ieee9_models() {
    static const Ieee9Models m = [] {
        using namespace gpccopf;
        const GridCase& c = ieee9();
        std::vector<InjectionSet> kept;
        for (const InjectionSet& inj : sample_operating_points(c, ieee9_params(), 75)) {
            try {
                solve_ac_pf(c, inj);
                kept.push_back(inj);
            } catch (const PfError&) {
            }
        }
        Ieee9Models r;
        r.ac = build_dataset(c, kept);
        r.dc = build_dc_dataset(c, kept);
        GpConfig g;
        g.restarts = 3;
        g.seed = 1;
        r.full = train(r.ac, g);
        r.lin = fit_linear_surrogate(r.dc);
        r.resid = train(residual_dataset(r.ac, r.lin), g);
        r.forecast = reference_forecast(c);
        r.u = default_uncertainty(r.forecast);
        return r;
    }();
    return m;
}
