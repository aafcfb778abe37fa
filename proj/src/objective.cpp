#include "recg/objective.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>

namespace recg {

void GenLossConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw Error(ErrorCode::InvalidConfig, "alpha must be > 0");
  }
  if (!(tau > 0.0) || !std::isfinite(tau)) throw Error(ErrorCode::InvalidConfig, "tau must be > 0");
  if (beta_rule == BetaRule::Manual && !(manual_beta && *manual_beta > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "manual beta rule needs manual_beta > 0");
  }
}

namespace {

// Each norm is floored at sqrt(eps), so |a||b| never drops below eps.
const double kNormFloor = std::sqrt(kCosineEps);

struct Normed {
  DVec u;
  double denom = 1.0;
  bool floored = false;
};

Normed normalize(std::span<const double> e) {
  Normed n;
  const double len = norm(e);
  n.floored = len <= kNormFloor;
  n.denom = n.floored ? kNormFloor : len;
  n.u.resize(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) n.u[i] = e[i] / n.denom;
  return n;
}

/// Chain rule from d/du to d/de for u = e / max(|e|, floor).
void unnormalize_grad(const Normed& n, const DVec& du, DVec& de) {
  if (n.floored) {
    for (std::size_t i = 0; i < du.size(); ++i) de[i] += du[i] / n.denom;
    return;
  }
  const double proj = dot(n.u, du);
  for (std::size_t i = 0; i < du.size(); ++i) de[i] += (du[i] - proj * n.u[i]) / n.denom;
}

double dotp(const DVec& a, const DVec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void axpy(double a, const DVec& x, DVec& y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void check_set(const LabeledSet& set) {
  if (set.rows.size() != set.domain.size()) {
    throw Error(ErrorCode::CountMismatch, "labels and rows misaligned");
  }
  for (std::size_t i = 1; i < set.rows.size(); ++i) {
    if (set.rows[i].size() != set.rows[0].size()) {
      throw Error(ErrorCode::DimensionMismatch, "embeddings have different lengths");
    }
  }
}

}  // namespace

double cosine(std::span<const double> a, std::span<const double> b) {
  const auto na = normalize(a);
  const auto nb = normalize(b);
  if (na.u.size() != nb.u.size()) throw Error(ErrorCode::DimensionMismatch, "cosine length mismatch");
  return dotp(na.u, nb.u);
}

std::vector<DVec> domain_centers(const std::vector<std::vector<DVec>>& groups) {
  std::vector<DVec> centers;
  centers.reserve(groups.size());
  for (std::size_t d = 0; d < groups.size(); ++d) {
    const auto& g = groups[d];
    if (g.empty()) throw Error(ErrorCode::EmptyGroup, "domain " + std::to_string(d) + " has no items");
    DVec c(g[0].size(), 0.0);
    for (const auto& e : g) {
      if (e.size() != c.size()) throw Error(ErrorCode::DimensionMismatch, "ragged embeddings");
      for (std::size_t i = 0; i < c.size(); ++i) c[i] += e[i];
    }
    for (auto& v : c) v /= double(g.size());
    centers.push_back(std::move(c));
  }
  return centers;
}

double inter_compactness(const LabeledSet& set, const GenLossConfig& cfg, std::vector<DVec>* grad,
                         InterDetail* detail) {
  check_set(set);
  const std::size_t D = set.n_domains;
  if (D < 2) throw Error(ErrorCode::TooFewDomains, "inter-domain loss needs at least 2 domains");
  const std::size_t n = set.rows.size();
  const std::size_t dim = set.rows[0].size();
  const bool own = cfg.inter_mode == InterMode::IncludeOwn;

  std::vector<std::vector<DVec>> groups(D);
  for (std::size_t i = 0; i < n; ++i) groups[set.domain[i]].push_back(set.rows[i]);
  const auto centers = domain_centers(groups);

  std::vector<Normed> nc(D);
  for (std::size_t d = 0; d < D; ++d) nc[d] = normalize(centers[d]);

  if (grad && grad->size() != n) grad->assign(n, DVec(dim, 0.0));
  std::vector<DVec> dcu(D, DVec(dim, 0.0));  // dL/d(normalized center)
  if (detail) detail->q.assign(n, DVec(D, 0.0));

  double loss = 0.0;
  DVec z(D), logq(D), q(D), du(dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ni = normalize(set.rows[i]);
    const std::size_t di = set.domain[i];
    double zmax = -INFINITY;
    for (std::size_t d = 0; d < D; ++d) {
      if (!own && d == di) continue;
      z[d] = dotp(ni.u, nc[d].u) / cfg.tau;
      zmax = std::max(zmax, z[d]);
    }
    double zsum = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      if (!own && d == di) continue;
      zsum += std::exp(z[d] - zmax);
    }
    const double lse = zmax + std::log(zsum);
    double a = 0.0;  // sum over d != d_i of (log q + 1) q
    for (std::size_t d = 0; d < D; ++d) {
      if (!own && d == di) continue;
      logq[d] = z[d] - lse;
      q[d] = std::exp(logq[d]);
      if (detail) detail->q[i][d] = q[d];
      if (d == di) continue;
      loss += q[d] * logq[d];
      a += (logq[d] + 1.0) * q[d];
    }
    if (!grad) continue;
    std::fill(du.begin(), du.end(), 0.0);
    for (std::size_t d = 0; d < D; ++d) {
      if (!own && d == di) continue;
      const double gz = (d != di ? (logq[d] + 1.0) * q[d] : 0.0) - q[d] * a;
      const double gc = gz / cfg.tau;
      if (gc == 0.0) continue;
      axpy(gc, nc[d].u, du);
      axpy(gc, ni.u, dcu[d]);
    }
    unnormalize_grad(ni, du, (*grad)[i]);
  }

  if (grad) {
    for (std::size_t d = 0; d < D; ++d) {
      DVec dc(dim, 0.0);
      unnormalize_grad(nc[d], dcu[d], dc);
      const double inv = 1.0 / double(groups[d].size());
      for (std::size_t i = 0; i < n; ++i) {
        if (set.domain[i] == d) axpy(inv, dc, (*grad)[i]);
      }
    }
  }
  return loss;
}

double intra_diversity(const LabeledSet& set, const GenLossConfig& cfg, std::vector<DVec>* grad,
                       IntraDetail* detail) {
  check_set(set);
  const std::size_t n = set.rows.size();
  if (n == 0) return 0.0;
  const std::size_t dim = set.rows[0].size();
  std::vector<std::vector<std::size_t>> members(set.n_domains);
  for (std::size_t i = 0; i < n; ++i) members[set.domain[i]].push_back(i);

  std::vector<Normed> nu(n);
  for (std::size_t i = 0; i < n; ++i) nu[i] = normalize(set.rows[i]);
  std::vector<DVec> du;
  if (grad) {
    du.assign(n, DVec(dim, 0.0));
    if (grad->size() != n) grad->assign(n, DVec(dim, 0.0));
  }
  if (detail) {
    detail->row_entropy.assign(n, 0.0);
    if (detail->keep_rows) detail->p.assign(n, DVec());
    detail->skipped_domains = 0;
  }

  double loss = 0.0;
  for (const auto& m : members) {
    if (m.empty()) continue;
    if (!cfg.include_self_pairs && m.size() < 2) {
      if (detail) ++detail->skipped_domains;
      continue;
    }
    const auto sz = static_cast<Eigen::Index>(m.size());
    const double w = 1.0 / double(m.size());
    Eigen::MatrixXd u(sz, static_cast<Eigen::Index>(dim));
    for (Eigen::Index a = 0; a < sz; ++a)
      for (std::size_t c = 0; c < dim; ++c) u(a, c) = nu[m[a]].u[c];
    Eigen::MatrixXd z = (u * u.transpose()) / cfg.tau;
    if (!cfg.include_self_pairs) z.diagonal().setConstant(-INFINITY);
    // Row-wise log-softmax; excluded self pairs get P = 0 and a dummy log P
    // of 0 so that P log P stays 0 there.
    const Eigen::VectorXd zmax = z.rowwise().maxCoeff();
    const Eigen::VectorXd lse =
        zmax.array() + (z.colwise() - zmax).array().exp().rowwise().sum().log();
    z.colwise() -= lse;
    const Eigen::MatrixXd p = z.array().exp().matrix();
    if (!cfg.include_self_pairs) z.diagonal().setZero();
    const Eigen::VectorXd h = -(p.array() * z.array()).rowwise().sum();
    loss += w * h.sum();
    if (detail) {
      for (Eigen::Index a = 0; a < sz; ++a) {
        detail->row_entropy[m[a]] = h(a);
        if (detail->keep_rows) {
          detail->p[m[a]].resize(m.size());
          for (Eigen::Index b = 0; b < sz; ++b) detail->p[m[a]][b] = p(a, b);
        }
      }
    }
    if (!grad) continue;
    // dL/dz = -P (log P + H), scaled by the domain weight and 1/tau.
    const Eigen::MatrixXd g = (-(w / cfg.tau) * (p.array() * (z.colwise() + h).array())).matrix();
    const Eigen::MatrixXd dut = (g + g.transpose()) * u;
    for (Eigen::Index a = 0; a < sz; ++a)
      for (std::size_t c = 0; c < dim; ++c) du[m[a]][c] += dut(a, c);
  }
  if (grad) {
    for (std::size_t i = 0; i < n; ++i) unnormalize_grad(nu[i], du[i], (*grad)[i]);
  }
  return loss;
}

double bpr_pair_loss(double x) {
  // -log sigmoid(x) = log(1 + exp(-x))
  return x >= 0.0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

double bpr_pair_grad(double x) {
  // -sigmoid(-x)
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return -e / (1.0 + e);
  }
  return -1.0 / (1.0 + std::exp(x));
}

double bpr_loss(const std::vector<DVec>& users, const std::vector<DVec>& pos,
                const std::vector<DVec>& neg) {
  if (users.size() != pos.size() || users.size() != neg.size()) {
    throw Error(ErrorCode::CountMismatch, "BPR triples are not aligned");
  }
  double loss = 0.0;
  for (std::size_t k = 0; k < users.size(); ++k) {
    loss += bpr_pair_loss(dot(users[k], pos[k]) - dot(users[k], neg[k]));
  }
  return loss;
}

double compute_beta(const GenLossConfig& cfg, std::size_t n_items, std::size_t n_domains) {
  if (cfg.beta_rule == BetaRule::Manual) return *cfg.manual_beta;
  if (n_domains == 0) throw Error(ErrorCode::TooFewDomains, "beta needs at least one domain");
  const double d = double(n_domains);
  return cfg.alpha * double(n_items) / (d * d * d);
}

LossTerms combine(double rec, double intra, double inter, const GenLossConfig& cfg,
                  std::size_t n_items, std::size_t n_domains) {
  cfg.validate();
  if (!std::isfinite(rec)) throw Error(ErrorCode::NonFinite, "L_rec is not finite");
  if (!std::isfinite(intra)) throw Error(ErrorCode::NonFinite, "L_intra is not finite");
  if (!std::isfinite(inter)) throw Error(ErrorCode::NonFinite, "L_inter is not finite");
  LossTerms t;
  t.rec = rec;
  t.intra = intra;
  t.inter = inter;
  t.beta = compute_beta(cfg, n_items, n_domains);
  t.gen = (cfg.use_intra ? -cfg.alpha * intra : 0.0) + (cfg.use_inter ? t.beta * inter : 0.0);
  t.total = rec + t.gen;
  return t;
}

std::string loss_log_header() { return "step,L_rec,L_intra,L_inter,beta,L_total\n"; }

std::string loss_log_row(std::size_t step, const LossTerms& t) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", step, t.rec, t.intra, t.inter,
                t.beta, t.total);
  return buf;
}

}  // namespace recg
