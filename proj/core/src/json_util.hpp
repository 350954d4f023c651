#pragma once

#include "gpccopf/dataset.hpp"
#include "gpccopf/kernel.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <vector>

namespace gpccopf::detail {

using json = nlohmann::json;

inline json vec(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Eigen::VectorXd vec(const json& j) {
    auto s = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(s.data(), s.size());
}

inline json mat(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (int i = 0; i < m.rows(); ++i) a.push_back(vec(Eigen::VectorXd(m.row(i).transpose())));
    return a;
}

inline Eigen::MatrixXd mat(const json& j) {
    const int r = static_cast<int>(j.size());
    const int c = r ? static_cast<int>(j[0].size()) : 0;
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) m.row(i) = vec(j[i]).transpose();
    return m;
}

inline json hyp(const Hyperparams& h) {
    return {{"lambda", vec(h.lambda)}, {"sigma_f2", h.sigma_f2}, {"sigma_z2", h.sigma_z2}};
}

inline Hyperparams hyp(const json& j) {
    Hyperparams h;
    h.lambda = vec(j.at("lambda"));
    h.sigma_f2 = j.at("sigma_f2").get<double>();
    h.sigma_z2 = j.at("sigma_z2").get<double>();
    return h;
}

inline json scaler(const Scaler& s) {
    return {{"x_mean", vec(s.x_mean)}, {"x_std", vec(s.x_std)}, {"y_mean", vec(s.y_mean)}, {"y_std", vec(s.y_std)}};
}

inline Scaler scaler(const json& j) {
    Scaler s;
    s.x_mean = vec(j.at("x_mean"));
    s.x_std = vec(j.at("x_std"));
    s.y_mean = vec(j.at("y_mean"));
    s.y_std = vec(j.at("y_std"));
    return s;
}

}  // namespace gpccopf::detail
