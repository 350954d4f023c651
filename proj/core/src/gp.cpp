#include "gpccopf/gp.hpp"

#include "gpccopf/rng.hpp"
#include "json_util.hpp"
#include "optim.hpp"

#include <cmath>
#include <limits>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// keeps the noise variance away from zero during optimisation
constexpr double kNoiseFloor = 1e-9;
constexpr double kLogBound = 25.0;

Hyperparams floored(const VectorXd& theta) {
    Hyperparams h = Hyperparams::from_log(theta);
    h.sigma_z2 += kNoiseFloor;
    return h;
}

}  // namespace

double clamp_variance(double var, double scale) {
    if (var >= 0) return var;
    if (var >= -1e-10 * std::max(1.0, scale)) return 0.0;
    throw GpError("negative predictive variance " + std::to_string(var));
}

void OutputPosterior::predict(const VectorXd& x, double& mu, double& var) const {
    const VectorXd k = kernel_vector(basis, x, hyp.lambda, hyp.sigma_f2);
    mu = mean_offset + k.dot(weights);
    var = clamp_variance(hyp.sigma_f2 - quad(k), hyp.sigma_f2);
}

double OutputPosterior::quad(const VectorXd& k) const {
    const VectorXd t = chol_a.triangularView<Eigen::Lower>().solve(k);
    double q = t.squaredNorm();
    if (chol_b.size()) q -= chol_b.triangularView<Eigen::Lower>().solve(t).squaredNorm();
    return q;
}

VectorXd OutputPosterior::apply(const VectorXd& k) const {
    VectorXd t = chol_a.triangularView<Eigen::Lower>().solve(k);
    if (chol_b.size()) {
        const auto B = chol_b.triangularView<Eigen::Lower>();
        t -= B.transpose().solve(B.solve(t));
    }
    return chol_a.triangularView<Eigen::Lower>().transpose().solve(t);
}

MatrixXd OutputPosterior::quad(const MatrixXd& J) const {
    const MatrixXd T = chol_a.triangularView<Eigen::Lower>().solve(J);
    MatrixXd q = T.transpose() * T;
    if (chol_b.size()) {
        const MatrixXd U = chol_b.triangularView<Eigen::Lower>().solve(T);
        q -= U.transpose() * U;
    }
    return q;
}

double OutputPosterior::trace_with(const MatrixXd& Q) const {
    const auto A = chol_a.triangularView<Eigen::Lower>();
    const MatrixXd T = A.solve(Q);
    const MatrixXd S = A.solve(T.transpose());  // A^-1 Q A^-T
    double tr = S.trace();
    if (chol_b.size()) {
        const auto B = chol_b.triangularView<Eigen::Lower>();
        const MatrixXd W = B.solve(S);
        tr -= B.solve(W.transpose()).trace();
    }
    return tr;
}

MatrixXd OutputPosterior::var_matrix() const {
    const int n = static_cast<int>(chol_a.rows());
    MatrixXd M(n, n);
    for (int i = 0; i < n; ++i) M.col(i) = apply(VectorXd::Unit(n, i));
    return 0.5 * (M + M.transpose());
}

GpOutput make_output(const MatrixXd& Xs, const VectorXd& ys, const Hyperparams& h) {
    MatrixXd K = kernel_matrix(Xs, Xs, h.lambda, h.sigma_f2);
    K.diagonal().array() += h.sigma_z2;
    Eigen::LLT<MatrixXd> llt;
    cholesky_jitter(K, llt);
    GpOutput o;
    o.hyp = h;
    o.L = llt.matrixL();
    o.beta = llt.solve(ys);
    const double logdet = 2.0 * o.L.diagonal().array().log().sum();
    o.nll = 0.5 * ys.dot(o.beta) + 0.5 * logdet + 0.5 * ys.size() * std::log(2.0 * M_PI);
    return o;
}

GpOutput fit_output(const MatrixXd& Xs, const VectorXd& ys, const GpConfig& cfg, std::uint64_t stream) {
    const int d = static_cast<int>(Xs.cols());
    auto eng = substream(cfg.seed, StreamTag::Training, stream);
    std::uniform_real_distribution<double> ud(cfg.init_lo, cfg.init_hi);

    detail::Objective nll = [&](const VectorXd& th, double& v, VectorXd& g) {
        if (th.cwiseAbs().maxCoeff() > kLogBound) return false;
        const Hyperparams h = floored(th);
        try {
            LmlResult r = log_marginal_likelihood(Xs, ys, h);
            v = -r.value;
            g = -r.grad;
            g[d + 1] *= (h.sigma_z2 - kNoiseFloor) / h.sigma_z2;
            return true;
        } catch (const GpError&) {
            return false;
        }
    };

    double best = std::numeric_limits<double>::infinity();
    VectorXd best_th;
    for (int r = 0; r < std::max(1, cfg.restarts); ++r) {
        VectorXd th(d + 2);
        for (int i = 0; i < d + 2; ++i) th[i] = ud(eng);
        const double v = detail::minimize_lbfgs(nll, th, cfg.max_iters);
        if (v < best) {
            best = v;
            best_th = th;
        }
    }
    if (!std::isfinite(best)) throw GpError("all restarts failed to produce a PD kernel matrix");
    return make_output(Xs, ys, floored(best_th));
}

GpModel train(const SampleSet& set, const GpConfig& cfg) {
    if (set.rows() < 2) throw GpError("training needs at least two samples");
    SampleSet s = set;
    if (!s.scaler) s = standardize(set).first;
    GpModel m;
    m.input_schema = s.input_schema;
    m.output_schema = s.output_schema;
    m.scaler = *s.scaler;
    m.X = s.X;
    for (int j = 0; j < s.Y.cols(); ++j) m.outputs.push_back(fit_output(s.X, s.Y.col(j), cfg, j));
    return m;
}

GpModel build_model(const SampleSet& set, const std::vector<Hyperparams>& hyps) {
    SampleSet s = set;
    if (!s.scaler) s = standardize(set).first;
    GpModel m;
    m.input_schema = s.input_schema;
    m.output_schema = s.output_schema;
    m.scaler = *s.scaler;
    m.X = s.X;
    for (int j = 0; j < s.Y.cols(); ++j) m.outputs.push_back(make_output(s.X, s.Y.col(j), hyps.at(j)));
    return m;
}

void GpModel::predict(const VectorXd& x, VectorXd& mu, VectorXd& var) const {
    const VectorXd xs = (x - scaler.x_mean).cwiseQuotient(scaler.x_std);
    mu.resize(n_y());
    var.resize(n_y());
    for (int j = 0; j < n_y(); ++j) {
        const GpOutput& o = outputs[j];
        const VectorXd k = kernel_vector(X, xs, o.hyp.lambda, o.hyp.sigma_f2);
        const VectorXd tau = o.L.triangularView<Eigen::Lower>().solve(k);
        const double vs = clamp_variance(o.hyp.sigma_f2 - tau.squaredNorm(), o.hyp.sigma_f2);
        const double sy = scaler.y_std[j];
        mu[j] = scaler.y_mean[j] + sy * k.dot(o.beta);
        var[j] = sy * sy * vs;
    }
}

MatrixXd GpModel::predict_mean_rows(const MatrixXd& Xphys) const {
    MatrixXd out(Xphys.rows(), n_y());
    VectorXd mu, var;
    for (int i = 0; i < Xphys.rows(); ++i) {
        const VectorXd xs = (Xphys.row(i).transpose() - scaler.x_mean).cwiseQuotient(scaler.x_std);
        for (int j = 0; j < n_y(); ++j) {
            const GpOutput& o = outputs[j];
            out(i, j) = scaler.y_mean[j] + scaler.y_std[j] * kernel_vector(X, xs, o.hyp.lambda, o.hyp.sigma_f2).dot(o.beta);
        }
    }
    return out;
}

std::vector<OutputPosterior> GpModel::posteriors() const {
    const MatrixXd Xp = (X.array().rowwise() * scaler.x_std.transpose().array()).rowwise() +
                        scaler.x_mean.transpose().array();
    const VectorXd sx2 = scaler.x_std.array().square();
    std::vector<OutputPosterior> out;
    for (int j = 0; j < n_y(); ++j) {
        const GpOutput& o = outputs[j];
        const double sy = scaler.y_std[j];
        OutputPosterior p;
        p.hyp.lambda = o.hyp.lambda.cwiseProduct(sx2);
        p.hyp.sigma_f2 = sy * sy * o.hyp.sigma_f2;
        p.hyp.sigma_z2 = sy * sy * o.hyp.sigma_z2;
        p.basis = Xp;
        p.weights = o.beta / sy;
        p.chol_a = sy * o.L;
        p.mean_offset = scaler.y_mean[j];
        out.push_back(std::move(p));
    }
    return out;
}

std::string model_to_json(const GpModel& m) {
    using detail::json;
    json j;
    j["format"] = "gpccopf-model-v1";
    j["kind"] = "full";
    j["input_schema"] = m.input_schema;
    j["output_schema"] = m.output_schema;
    j["scaler"] = detail::scaler(m.scaler);
    j["X"] = detail::mat(m.X);
    j["outputs"] = json::array();
    for (const GpOutput& o : m.outputs) {
        json jo = detail::hyp(o.hyp);
        jo["beta"] = detail::vec(o.beta);
        jo["nll"] = o.nll;
        j["outputs"].push_back(jo);
    }
    return j.dump(1);
}

GpModel model_from_json(const std::string& text) {
    using detail::json;
    json j = json::parse(text);
    if (j.value("format", "") != "gpccopf-model-v1" || j.value("kind", "") != "full")
        throw GpError("not a gpccopf-model-v1 full GP model");
    GpModel m;
    m.input_schema = j.at("input_schema").get<std::vector<std::string>>();
    m.output_schema = j.at("output_schema").get<std::vector<std::string>>();
    m.scaler = detail::scaler(j.at("scaler"));
    m.X = detail::mat(j.at("X"));
    for (const json& jo : j.at("outputs")) {
        GpOutput o;
        o.hyp = detail::hyp(jo);
        MatrixXd K = kernel_matrix(m.X, m.X, o.hyp.lambda, o.hyp.sigma_f2);
        K.diagonal().array() += o.hyp.sigma_z2;
        Eigen::LLT<MatrixXd> llt;
        cholesky_jitter(K, llt);
        o.L = llt.matrixL();
        o.beta = detail::vec(jo.at("beta"));
        o.nll = jo.at("nll").get<double>();
        m.outputs.push_back(std::move(o));
    }
    return m;
}

}  // namespace gpccopf
