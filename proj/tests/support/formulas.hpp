#pragma once

// Literal, loop-by-loop evaluations of the estimator formulas, written
// directly from their displayed form with no algebraic simplification.

#include <cmath>
#include <cstddef>
#include <random>
#include <vector>

#include "support/oracles.hpp"

namespace formulas {

using Vec = std::vector<double>;

struct Calibration {
  Vec beta;
  Vec a;
  std::vector<Vec> r;  // r_i = (D_i - beta^T psi_i) psi_i
};

// psi(delta) = (1, delta, ..., delta^degree)
inline Vec psi(double delta, int degree) {
  Vec out(static_cast<std::size_t>(degree + 1), 1.0);
  for (int j = 1; j <= degree; ++j) out[static_cast<std::size_t>(j)] = out[static_cast<std::size_t>(j - 1)] * delta;
  return out;
}

inline Calibration calibrate(const Vec& d, const Vec& delta_exp, const Vec& delta_obs, int degree) {
  const std::size_t p = static_cast<std::size_t>(degree + 1), n = d.size(), nn = delta_obs.size();
  std::vector<Vec> g(p, Vec(p, 0.0));
  Vec m(p, 0.0), bar(p, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec v = psi(delta_exp[i], degree);
    for (std::size_t a = 0; a < p; ++a) {
      m[a] += d[i] * v[a] / static_cast<double>(n);
      for (std::size_t b = 0; b < p; ++b) g[a][b] += v[a] * v[b] / static_cast<double>(n);
    }
  }
  for (std::size_t i = 0; i < nn; ++i) {
    const Vec v = psi(delta_obs[i], degree);
    for (std::size_t a = 0; a < p; ++a) bar[a] += v[a] / static_cast<double>(nn);
  }
  Calibration c;
  c.beta = oracle::solve(g, m);
  c.a = oracle::solve(g, bar);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec v = psi(delta_exp[i], degree);
    double fit = 0.0;
    for (std::size_t a = 0; a < p; ++a) fit += c.beta[a] * v[a];
    Vec ri(p);
    for (std::size_t a = 0; a < p; ++a) ri[a] = (d[i] - fit) * v[a];
    c.r.push_back(ri);
  }
  return c;
}

inline double variance_tau_bar(const Calibration& c, const Vec& preds, double tau_bar) {
  const double n = static_cast<double>(c.r.size());
  const double nn = static_cast<double>(preds.size());
  double first = 0.0;
  for (const auto& ri : c.r) {
    double ar = 0.0;
    for (std::size_t a = 0; a < ri.size(); ++a) ar += c.a[a] * ri[a];
    first += ar * ar;  // a^T r r^T a
  }
  first /= n * n;
  double second = 0.0;
  for (double v : preds) second += (v - tau_bar) * (v - tau_bar);
  return first + second / (nn * nn);
}

inline double aipsw(const Vec& d, const Vec& mu_e, const Vec& q_e, const Vec& mu_o) {
  const double n = static_cast<double>(d.size()), nn = static_cast<double>(mu_o.size());
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) a += (n / nn) * (d[i] - mu_e[i]) * q_e[i];
  for (double v : mu_o) b += v;
  return a / n + b / nn;
}

inline double aipsw_var(const Vec& d, const Vec& mu_e, const Vec& q_e, const Vec& mu_o, double tau) {
  const double nn = static_cast<double>(mu_o.size());
  double s = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) s += q_e[i] * q_e[i] * (d[i] - mu_e[i]) * (d[i] - mu_e[i]);
  for (double v : mu_o) s += (v - tau) * (v - tau);
  return s / (nn * nn);
}

struct CollabTables {
  Vec d, mu_e, q_e, g_e, k_e, mu_o, q_o, k_o;
};

inline double collab(const CollabTables& t) {
  const double n = static_cast<double>(t.d.size()), nn = static_cast<double>(t.mu_o.size());
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < t.d.size(); ++i) {
    a += (n / nn) * ((t.d[i] - t.mu_e[i]) * t.g_e[i] +
                     t.q_e[i] / (1.0 + t.q_e[i]) * (t.mu_e[i] - t.k_e[i]));
  }
  for (std::size_t i = 0; i < t.mu_o.size(); ++i) {
    b += (t.q_o[i] * t.mu_o[i] + t.k_o[i]) / (1.0 + t.q_o[i]);
  }
  return a / n + b / nn;
}

inline double collab_var(const CollabTables& t, double tau) {
  const double nn = static_cast<double>(t.mu_o.size());
  double s = 0.0;
  for (std::size_t i = 0; i < t.d.size(); ++i) {
    const double e = t.g_e[i] * (t.d[i] - t.mu_e[i]) + t.q_e[i] / (1.0 + t.q_e[i]) * (t.mu_e[i] - t.k_e[i]);
    s += e * e;
  }
  for (std::size_t i = 0; i < t.mu_o.size(); ++i) {
    const double o = (t.q_o[i] * t.mu_o[i] + t.k_o[i]) / (1.0 + t.q_o[i]) - tau;
    s += o * o;
  }
  return s / (nn * nn);
}

/// Deterministic random 20-row-style fixture: n experimental and m observational rows.
inline CollabTables random_tables(std::size_t n, std::size_t m, unsigned seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> pos(0.2, 30.0);
  CollabTables t;
  for (std::size_t i = 0; i < n; ++i) {
    t.d.push_back(1.0 + z(gen));
    t.mu_e.push_back(0.8 + 0.5 * z(gen));
    t.q_e.push_back(pos(gen));
    t.g_e.push_back(pos(gen));
    t.k_e.push_back(0.7 + 0.3 * z(gen));
  }
  for (std::size_t i = 0; i < m; ++i) {
    t.mu_o.push_back(1.2 + 0.5 * z(gen));
    t.q_o.push_back(pos(gen));
    t.k_o.push_back(1.1 + 0.3 * z(gen));
  }
  return t;
}

}  // namespace formulas
