#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zinbsf/core/model.hpp"
#include "zinbsf/errors.hpp"
#include "zinbsf/inference/sampler.hpp"

namespace zinbsf {

/// Column layout of a flattened parameter draw:
///   beta1[<cov>]..., beta2[<cov>]..., theta (NB only), sigma_w, delta[1..q] (spatial only)
struct ParameterLayout {
  std::vector<std::string> covariate_names;
  bool has_theta = true;
  int q = 0; // 0 means non-spatial

  Eigen::Index p() const { return static_cast<Eigen::Index>(covariate_names.size()); }
  bool spatial() const { return q > 0; }
  Eigen::Index beta1_offset() const { return 0; }
  Eigen::Index beta2_offset() const { return p(); }
  Eigen::Index theta_index() const { return 2 * p(); }
  Eigen::Index sigma_w_index() const { return 2 * p() + (has_theta ? 1 : 0); }
  Eigen::Index delta_offset() const { return sigma_w_index() + 1; }
  Eigen::Index size() const { return 2 * p() + (has_theta ? 1 : 0) + (spatial() ? 1 + q : 0); }

  static ParameterLayout make(const ModelSpec& spec, const Dataset& d, const MoranBasis* basis) {
    ParameterLayout l;
    l.covariate_names = d.covariate_names;
    l.has_theta = spec.has_theta();
    l.q = spec.spatial && basis ? basis->q() : 0;
    return l;
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& c : covariate_names) out.push_back("beta1[" + c + "]");
    for (const auto& c : covariate_names) out.push_back("beta2[" + c + "]");
    if (has_theta) out.emplace_back("theta");
    if (spatial()) {
      out.emplace_back("sigma_w");
      for (int j = 1; j <= q; ++j) out.push_back("delta[" + std::to_string(j) + "]");
    }
    return out;
  }

  /// Inverse of names(); throws when the list is not in canonical order.
  static ParameterLayout from_names(const std::vector<std::string>& names) {
    ParameterLayout l;
    std::size_t i = 0;
    auto inner = [](const std::string& s, const std::string& prefix) -> std::optional<std::string> {
      if (s.size() > prefix.size() + 1 && s.compare(0, prefix.size() + 1, prefix + "[") == 0 && s.back() == ']')
        return s.substr(prefix.size() + 1, s.size() - prefix.size() - 2);
      return std::nullopt;
    };
    while (i < names.size()) {
      auto c = inner(names[i], "beta1");
      if (!c) break;
      l.covariate_names.push_back(*c);
      ++i;
    }
    for (std::size_t k = 0; k < l.covariate_names.size(); ++k, ++i)
      if (i >= names.size() || inner(names[i], "beta2") != l.covariate_names[k])
        throw InputError("parameter names are not in canonical layout (beta2 block)");
    l.has_theta = i < names.size() && names[i] == "theta";
    if (l.has_theta) ++i;
    if (i < names.size()) {
      if (names[i] != "sigma_w") throw InputError("unexpected parameter name '" + names[i] + "'");
      ++i;
      for (; i < names.size(); ++i) {
        if (names[i] != "delta[" + std::to_string(l.q + 1) + "]")
          throw InputError("unexpected parameter name '" + names[i] + "'");
        ++l.q;
      }
      if (l.q == 0) throw InputError("sigma_w present without delta coefficients");
    }
    if (l.covariate_names.empty()) throw InputError("no coefficient columns in parameter names");
    return l;
  }

  Eigen::VectorXd flatten(const ParameterState& s) const {
    Eigen::VectorXd v(size());
    v.segment(beta1_offset(), p()) = s.beta1;
    v.segment(beta2_offset(), p()) = s.beta2;
    if (has_theta) v[theta_index()] = s.theta;
    if (spatial()) {
      v[sigma_w_index()] = s.sigma_w;
      v.segment(delta_offset(), q) = s.delta;
    }
    return v;
  }

  /// Parameters of a flattened draw; z is left empty.
  template <typename Row>
  ParameterState unflatten(const Row& v) const {
    ParameterState s;
    s.beta1 = v.segment(beta1_offset(), p()).transpose();
    s.beta2 = v.segment(beta2_offset(), p()).transpose();
    s.theta = has_theta ? v[theta_index()] : 1.0;
    if (spatial()) {
      s.sigma_w = v[sigma_w_index()];
      s.delta = v.segment(delta_offset(), q).transpose();
    } else {
      s.delta = Eigen::VectorXd(0);
    }
    return s;
  }
};

/// Flattened draws, one matrix (n_draws x n_params) per chain.
struct DrawTable {
  std::vector<std::string> names;
  std::vector<Eigen::MatrixXd> chains;

  std::size_t n_chains() const { return chains.size(); }
  Eigen::Index n_params() const { return static_cast<Eigen::Index>(names.size()); }
  Eigen::Index total_draws() const {
    Eigen::Index n = 0;
    for (const auto& c : chains) n += c.rows();
    return n;
  }

  /// All chains stacked in chain order.
  Eigen::MatrixXd pooled() const {
    Eigen::MatrixXd out(total_draws(), n_params());
    Eigen::Index r = 0;
    for (const auto& c : chains) {
      out.middleRows(r, c.rows()) = c;
      r += c.rows();
    }
    return out;
  }
};

inline DrawTable make_draw_table(const std::vector<PosteriorSamples>& chains, const ParameterLayout& layout) {
  DrawTable t;
  t.names = layout.names();
  for (const auto& c : chains) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(c.draws.size()), layout.size());
    for (std::size_t s = 0; s < c.draws.size(); ++s) m.row(static_cast<Eigen::Index>(s)) = layout.flatten(c.draws[s]).transpose();
    t.chains.push_back(std::move(m));
  }
  return t;
}

/// Pointwise log-likelihood of all chains stacked in chain order.
inline Eigen::MatrixXd stack_pointwise(const std::vector<PosteriorSamples>& chains) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& c : chains) {
    rows += c.pointwise_loglik.rows();
    cols = c.pointwise_loglik.cols();
  }
  Eigen::MatrixXd out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    out.middleRows(r, c.pointwise_loglik.rows()) = c.pointwise_loglik;
    r += c.pointwise_loglik.rows();
  }
  return out;
}

} // namespace zinbsf
