#include "gpccopf/sparse_gp.hpp"

#include "gpccopf/rng.hpp"
#include "json_util.hpp"
#include "optim.hpp"

#include <cmath>
#include <limits>

namespace gpccopf {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kNoiseFloor = 1e-9;
constexpr double kRelJitter = 1e-8;
constexpr double kLogBound = 25.0;

MatrixXd inducing_gram(const MatrixXd& Z, const Hyperparams& h) {
    MatrixXd Kmm = kernel_matrix(Z, Z, h.lambda, h.sigma_f2);
    Kmm.diagonal().array() += kRelJitter * h.sigma_f2;
    return Kmm;
}

}  // namespace

ElboResult elbo(const MatrixXd& X, const VectorXd& y, const MatrixXd& Z, const Hyperparams& h) {
    const int n = static_cast<int>(X.rows()), m = static_cast<int>(Z.rows()), d = static_cast<int>(X.cols());
    const double s2 = h.sigma_z2;

    const MatrixXd Kmm = inducing_gram(Z, h);
    const MatrixXd Knm = kernel_matrix(X, Z, h.lambda, h.sigma_f2);
    Eigen::LLT<MatrixXd> lm;
    cholesky_jitter(Kmm, lm);
    const MatrixXd PKmn = lm.solve(Knm.transpose());  // K_mm^-1 K_mn
    MatrixXd Sigma = Knm * PKmn;
    const double trQ = Sigma.trace();
    Sigma.diagonal().array() += s2;
    Eigen::LLT<MatrixXd> ls;
    cholesky_jitter(Sigma, ls);
    const VectorXd alpha = ls.solve(y);
    const MatrixXd Ls = ls.matrixL();
    const double logdet = 2.0 * Ls.diagonal().array().log().sum();
    const double trK = n * h.sigma_f2;

    ElboResult r;
    r.value = -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI) - (trK - trQ) / (2.0 * s2);

    const MatrixXd Si = ls.solve(MatrixXd::Identity(n, n));
    MatrixXd G = 0.5 * (alpha * alpha.transpose() - Si);
    const double dF_ds2 = G.trace() + (trK - trQ) / (2.0 * s2 * s2);
    G.diagonal().array() += 1.0 / (2.0 * s2);

    const MatrixXd GKP = G * PKmn.transpose();  // G K_nm P
    const MatrixXd dKnm = 2.0 * GKP;            // dF/dK_nm
    const MatrixXd dKmm = -PKmn * GKP;          // dF/dK_mm = -P K_mn G K_nm P
    const MatrixXd Wn = dKnm.cwiseProduct(Knm);
    const MatrixXd Wm = dKmm.cwiseProduct(Kmm);

    r.grad_theta.resize(d + 2);
    r.grad_Z = MatrixXd::Zero(m, d);
    for (int dd = 0; dd < d; ++dd) {
        const double il = 1.0 / h.lambda[dd];
        double g = 0;
        for (int j = 0; j < m; ++j) {
            double gz = 0;
            for (int i = 0; i < n; ++i) {
                const double t = X(i, dd) - Z(j, dd);
                g += Wn(i, j) * t * t;
                gz += Wn(i, j) * t;
            }
            for (int l = 0; l < m; ++l) {
                const double t = Z(l, dd) - Z(j, dd);
                g += Wm(j, l) * t * t;
                gz += 2.0 * Wm(j, l) * t;
            }
            r.grad_Z(j, dd) = gz * il;
        }
        r.grad_theta[dd] = g * 0.5 * il;
    }
    r.grad_theta[d] = Wn.sum() + Wm.sum() - trK / (2.0 * s2);
    r.grad_theta[d + 1] = s2 * dF_ds2;
    return r;
}

MatrixXd kmeans_centers(const MatrixXd& X, int k, std::uint64_t seed, int iters) {
    const int n = static_cast<int>(X.rows());
    if (k > n) throw GpError("more inducing points than samples");
    if (k == n) return X;
    auto eng = substream(seed, StreamTag::Training, 0xC0FFEE);
    // k-means++ seeding
    MatrixXd C(k, X.cols());
    std::uniform_int_distribution<int> pick(0, n - 1);
    C.row(0) = X.row(pick(eng));
    VectorXd dist = (X.rowwise() - C.row(0)).rowwise().squaredNorm();
    for (int c = 1; c < k; ++c) {
        std::discrete_distribution<int> dd(dist.data(), dist.data() + n);
        C.row(c) = X.row(dd(eng));
        dist = dist.cwiseMin((X.rowwise() - C.row(c)).rowwise().squaredNorm());
    }
    std::vector<int> assign(n, -1);
    for (int it = 0; it < iters; ++it) {
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best;
            (C.rowwise() - X.row(i)).rowwise().squaredNorm().minCoeff(&best);
            if (best != assign[i]) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed) break;
        MatrixXd S = MatrixXd::Zero(k, X.cols());
        VectorXd cnt = VectorXd::Zero(k);
        for (int i = 0; i < n; ++i) {
            S.row(assign[i]) += X.row(i);
            cnt[assign[i]] += 1;
        }
        for (int c = 0; c < k; ++c)
            if (cnt[c] > 0) C.row(c) = S.row(c) / cnt[c];
    }
    return C;
}

// Wt^T Wt = L^-T (I - B^-1) L^-1 from the eigenpairs of B; one dense product per prediction
// and no cancellation between the two quadratic terms.
namespace {

MatrixXd variance_factor(const MatrixXd& Lm, const MatrixXd& LB) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(LB * LB.transpose());
    const VectorXd d = (1.0 - es.eigenvalues().array().inverse()).max(0.0).sqrt();
    const MatrixXd UtLi = Lm.transpose().triangularView<Eigen::Upper>().solve(es.eigenvectors()).transpose();
    return d.asDiagonal() * UtLi;
}

}  // namespace

SparseOutput make_sparse_output(const MatrixXd& Xs, const VectorXd& ys, const MatrixXd& Z, const Hyperparams& h) {
    SparseOutput o;
    o.hyp = h;
    o.Z = Z;
    const MatrixXd Kmm = inducing_gram(Z, h);
    Eigen::LLT<MatrixXd> lm;
    cholesky_jitter(Kmm, lm);
    o.Lm = lm.matrixL();
    const MatrixXd Knm = kernel_matrix(Xs, Z, h.lambda, h.sigma_f2);
    const MatrixXd C = o.Lm.triangularView<Eigen::Lower>().solve(Knm.transpose());  // L^-1 K_mn
    MatrixXd B = C * C.transpose() / h.sigma_z2;
    B.diagonal().array() += 1.0;
    Eigen::LLT<MatrixXd> lb(B);
    if (lb.info() != Eigen::Success) throw GpError("non-PD inducing system");
    o.LB = lb.matrixL();
    // w = s^-2 L^-T B^-1 C y
    const VectorXd t = lb.solve(C * ys) / h.sigma_z2;
    o.w = o.Lm.transpose().triangularView<Eigen::Upper>().solve(t);
    o.mu_m = Kmm * o.w;
    o.A_m = o.Lm * lb.solve(o.Lm.transpose());
    o.Wt = variance_factor(o.Lm, o.LB);
    o.elbo = elbo(Xs, ys, Z, h).value;
    return o;
}

SparseGpModel train_sparse(const SampleSet& set, const SparseConfig& cfg) {
    SampleSet s = set;
    if (!s.scaler) s = standardize(set).first;
    const int n = s.rows(), d = static_cast<int>(s.X.cols()), m = cfg.m_m;
    if (m < 1 || m > n) throw GpError("m_m must lie in [1, m_s]");

    SparseGpModel model;
    model.input_schema = s.input_schema;
    model.output_schema = s.output_schema;
    model.scaler = *s.scaler;

    const MatrixXd Z0 = cfg.inducing ? *cfg.inducing : kmeans_centers(s.X, m, cfg.gp.seed);
    if (Z0.rows() != m || Z0.cols() != d) throw GpError("inducing input shape mismatch");
    const bool fix_theta = !cfg.fixed_hyper.empty();

    for (int j = 0; j < s.Y.cols(); ++j) {
        const VectorXd y = s.Y.col(j);
        if (fix_theta && cfg.pin_inducing) {
            model.outputs.push_back(make_sparse_output(s.X, y, Z0, cfg.fixed_hyper.at(j)));
            continue;
        }
        const int nt = fix_theta ? 0 : d + 2;
        const int nz = cfg.pin_inducing ? 0 : m * d;
        auto unpack = [&](const VectorXd& p, Hyperparams& h, MatrixXd& Z) {
            if (fix_theta) {
                h = cfg.fixed_hyper.at(j);
            } else {
                h = Hyperparams::from_log(p.head(d + 2));
                h.sigma_z2 += kNoiseFloor;
            }
            Z = Z0;
            if (nz) Z = Eigen::Map<const MatrixXd>(p.data() + nt, m, d);
        };
        detail::Objective obj = [&](const VectorXd& p, double& v, VectorXd& g) {
            if (nt && p.head(nt).cwiseAbs().maxCoeff() > kLogBound) return false;
            Hyperparams h;
            MatrixXd Z;
            unpack(p, h, Z);
            try {
                ElboResult r = elbo(s.X, y, Z, h);
                v = -r.value;
                g.resize(nt + nz);
                if (nt) {
                    g.head(nt) = -r.grad_theta;
                    g[d + 1] *= (h.sigma_z2 - kNoiseFloor) / h.sigma_z2;
                }
                if (nz) g.tail(nz) = -Eigen::Map<const VectorXd>(r.grad_Z.data(), nz);
                return true;
            } catch (const GpError&) {
                return false;
            }
        };

        auto eng = substream(cfg.gp.seed, StreamTag::Training, 1000 + j);
        std::uniform_real_distribution<double> ud(cfg.gp.init_lo, cfg.gp.init_hi);
        double best = std::numeric_limits<double>::infinity();
        VectorXd best_p;
        const int restarts = fix_theta ? 1 : std::max(1, cfg.gp.restarts);
        for (int r = 0; r < restarts; ++r) {
            VectorXd p(nt + nz);
            for (int i = 0; i < nt; ++i) p[i] = ud(eng);
            if (nz) p.tail(nz) = Eigen::Map<const VectorXd>(Z0.data(), nz);
            const double v = detail::minimize_lbfgs(obj, p, cfg.gp.max_iters);
            if (v < best) {
                best = v;
                best_p = p;
            }
        }
        if (!std::isfinite(best)) throw GpError("sparse training failed for output " + s.output_schema[j]);
        Hyperparams h;
        MatrixXd Z;
        unpack(best_p, h, Z);
        model.outputs.push_back(make_sparse_output(s.X, y, Z, h));
    }
    return model;
}

void SparseGpModel::predict(const VectorXd& x, VectorXd& mu, VectorXd& var) const {
    const VectorXd xs = (x - scaler.x_mean).cwiseQuotient(scaler.x_std);
    mu.resize(n_y());
    var.resize(n_y());
    for (int j = 0; j < n_y(); ++j) {
        const SparseOutput& o = outputs[j];
        const VectorXd k = kernel_vector(o.Z, xs, o.hyp.lambda, o.hyp.sigma_f2);
        const double vs = clamp_variance(o.hyp.sigma_f2 - (o.Wt * k).squaredNorm(), o.hyp.sigma_f2);
        const double sy = scaler.y_std[j];
        mu[j] = scaler.y_mean[j] + sy * k.dot(o.w);
        var[j] = sy * sy * vs;
    }
}

MatrixXd SparseGpModel::predict_mean_rows(const MatrixXd& Xphys) const {
    MatrixXd out(Xphys.rows(), n_y());
    for (int i = 0; i < Xphys.rows(); ++i) {
        const VectorXd xs = (Xphys.row(i).transpose() - scaler.x_mean).cwiseQuotient(scaler.x_std);
        for (int j = 0; j < n_y(); ++j) {
            const SparseOutput& o = outputs[j];
            out(i, j) = scaler.y_mean[j] + scaler.y_std[j] * kernel_vector(o.Z, xs, o.hyp.lambda, o.hyp.sigma_f2).dot(o.w);
        }
    }
    return out;
}

std::vector<OutputPosterior> SparseGpModel::posteriors() const {
    const VectorXd sx2 = scaler.x_std.array().square();
    std::vector<OutputPosterior> out;
    for (int j = 0; j < n_y(); ++j) {
        const SparseOutput& o = outputs[j];
        const double sy = scaler.y_std[j];
        OutputPosterior p;
        p.hyp.lambda = o.hyp.lambda.cwiseProduct(sx2);
        p.hyp.sigma_f2 = sy * sy * o.hyp.sigma_f2;
        p.hyp.sigma_z2 = sy * sy * o.hyp.sigma_z2;
        p.basis = (o.Z.array().rowwise() * scaler.x_std.transpose().array()).rowwise() + scaler.x_mean.transpose().array();
        p.weights = o.w / sy;
        // M = L^-T (I - B^-1) L^-1 in physical units
        p.chol_a = sy * o.Lm;
        p.chol_b = o.LB;
        p.mean_offset = scaler.y_mean[j];
        out.push_back(std::move(p));
    }
    return out;
}

std::string sparse_model_to_json(const SparseGpModel& m) {
    using detail::json;
    json j;
    j["format"] = "gpccopf-model-v1";
    j["kind"] = "sparse";
    j["input_schema"] = m.input_schema;
    j["output_schema"] = m.output_schema;
    j["scaler"] = detail::scaler(m.scaler);
    j["outputs"] = json::array();
    for (const SparseOutput& o : m.outputs) {
        json jo = detail::hyp(o.hyp);
        jo["Z"] = detail::mat(o.Z);
        jo["w"] = detail::vec(o.w);
        jo["LB"] = detail::mat(o.LB);
        jo["elbo"] = o.elbo;
        j["outputs"].push_back(jo);
    }
    return j.dump(1);
}

SparseGpModel sparse_model_from_json(const std::string& text) {
    using detail::json;
    json j = json::parse(text);
    if (j.value("format", "") != "gpccopf-model-v1" || j.value("kind", "") != "sparse")
        throw GpError("not a gpccopf-model-v1 sparse GP model");
    SparseGpModel m;
    m.input_schema = j.at("input_schema").get<std::vector<std::string>>();
    m.output_schema = j.at("output_schema").get<std::vector<std::string>>();
    m.scaler = detail::scaler(j.at("scaler"));
    for (const json& jo : j.at("outputs")) {
        SparseOutput o;
        o.hyp = detail::hyp(jo);
        o.Z = detail::mat(jo.at("Z"));
        o.w = detail::vec(jo.at("w"));
        o.LB = detail::mat(jo.at("LB"));
        o.elbo = jo.at("elbo").get<double>();
        const MatrixXd Kmm = inducing_gram(o.Z, o.hyp);
        Eigen::LLT<MatrixXd> lm;
        cholesky_jitter(Kmm, lm);
        o.Lm = lm.matrixL();
        o.mu_m = Kmm * o.w;
        const MatrixXd BiLt = (o.LB * o.LB.transpose()).llt().solve(o.Lm.transpose());
        o.A_m = o.Lm * BiLt;
        o.Wt = variance_factor(o.Lm, o.LB);
        m.outputs.push_back(std::move(o));
    }
    return m;
}

}  // namespace gpccopf
