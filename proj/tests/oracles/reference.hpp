#pragma once

// Independent reference implementations used as test oracles. Plain loops
// only; nothing here calls into the kernels or the library's numerics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include "kff/fusion.hpp"
#include "kff/model.hpp"
#include "kff/objective.hpp"

namespace oracle {

using Vec = std::vector<double>;

inline Vec to_vec(const kff::Vector& v) { return v.values(); }

struct Stats {
  Vec mean;
  Vec std;
};

inline Stats two_pass_stats(const std::vector<Vec>& rows) {
  const std::size_t n = rows.size();
  const std::size_t d = rows.front().size();
  Stats s{Vec(d, 0.0), Vec(d, 0.0)};
  for (const Vec& r : rows)
    for (std::size_t k = 0; k < d; ++k) s.mean[k] += r[k];
  for (double& m : s.mean) m /= static_cast<double>(n);
  for (const Vec& r : rows)
    for (std::size_t k = 0; k < d; ++k) s.std[k] += (r[k] - s.mean[k]) * (r[k] - s.mean[k]);
  for (double& v : s.std) v = std::sqrt(v / static_cast<double>(n));
  return s;
}

inline double cosine_distance(const Vec& a, const Vec& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ab += a[k] * b[k];
    aa += a[k] * a[k];
    bb += b[k] * b[k];
  }
  double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  c = std::clamp(c, -1.0, 1.0);
  return 1.0 - c;
}

// Agglomerative single linkage: repeatedly merge the two clusters whose
// closest members are nearest, until `groups` clusters remain. Returned
// clusters are sorted member lists ordered by their smallest member.
inline std::vector<std::vector<std::size_t>> single_linkage(const std::vector<Vec>& keys, std::size_t groups) {
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < keys.size(); ++i) clusters.push_back({i});
  while (clusters.size() > groups) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < clusters.size(); ++i) {
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        double link = std::numeric_limits<double>::infinity();
        for (std::size_t a : clusters[i])
          for (std::size_t b : clusters[j]) link = std::min(link, cosine_distance(keys[a], keys[b]));
        if (link < best) {
          best = link;
          bi = i;
          bj = j;
        }
      }
    }
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    std::sort(clusters[bi].begin(), clusters[bi].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  std::sort(clusters.begin(), clusters.end());
  return clusters;
}

inline std::vector<std::vector<std::size_t>> partition_of(const kff::MstClustering& c) {
  std::vector<std::vector<std::size_t>> out(c.num_groups);
  for (std::size_t i = 0; i < c.group_of.size(); ++i) out[c.group_of[i]].push_back(i);
  std::sort(out.begin(), out.end());
  return out;
}

struct ClassEntry {
  Vec key;
  Vec prompt;
  std::uint64_t created_at;
};

struct DomainEntry {
  Vec mean;
  Vec std;
  Vec prompt;
  std::uint64_t created_at;
};

inline double entropy(const Vec& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return h;
}

inline void normalize_sum(Vec& key) {
  double s = 0.0;
  for (double v : key) s += v;
  for (double& v : key) v /= s;
}

// Class pool update, one sample at a time in batch order.
inline std::vector<ClassEntry> algorithm1(std::vector<ClassEntry> pool, std::size_t capacity,
                                          const std::vector<kff::ClassUpdateRecord>& batch, double gamma_h,
                                          double alpha_c, std::uint64_t batch_index) {
  std::vector<bool> moved(pool.size(), false);
  for (const kff::ClassUpdateRecord& r : batch) {
    const Vec y_hat = to_vec(r.prediction);
    if (entropy(y_hat) > gamma_h) continue;
    if (!r.outcome.weights) {
      pool.push_back({to_vec(r.pseudo_label), to_vec(r.learned_prompt), batch_index});
      continue;
    }
    for (const kff::CandidateWeight& c : *r.outcome.weights) {
      ClassEntry& e = pool[c.index];
      const double a = alpha_c * c.weight;
      for (std::size_t k = 0; k < e.key.size(); ++k) e.key[k] = a * y_hat[k] + (1.0 - a) * e.key[k];
      for (std::size_t k = 0; k < e.prompt.size(); ++k)
        e.prompt[k] = c.weight * r.learned_prompt[k] + (1.0 - c.weight) * e.prompt[k];
      moved[c.index] = true;
    }
  }
  for (std::size_t i = 0; i < moved.size(); ++i)
    if (moved[i]) normalize_sum(pool[i].key);

  if (pool.size() <= capacity) return pool;
  std::vector<Vec> keys;
  for (const ClassEntry& e : pool) keys.push_back(e.key);
  std::vector<ClassEntry> merged;
  for (const std::vector<std::size_t>& group : single_linkage(keys, capacity)) {
    if (group.size() == 1) {
      merged.push_back(pool[group[0]]);
      continue;
    }
    ClassEntry m{Vec(pool[0].key.size(), 0.0), Vec(pool[0].prompt.size(), 0.0), pool[group[0]].created_at};
    for (std::size_t i : group) {
      for (std::size_t k = 0; k < m.key.size(); ++k) m.key[k] += pool[i].key[k];
      for (std::size_t k = 0; k < m.prompt.size(); ++k) m.prompt[k] += pool[i].prompt[k];
      m.created_at = std::min(m.created_at, pool[i].created_at);
    }
    for (double& v : m.key) v /= static_cast<double>(group.size());
    for (double& v : m.prompt) v /= static_cast<double>(group.size());
    normalize_sum(m.key);
    merged.push_back(m);
  }
  return merged;
}

// Domain pool update for one batch.
inline std::vector<DomainEntry> algorithm2(std::vector<DomainEntry> pool, std::size_t capacity,
                                           const kff::DomainUpdateRecord& r, double alpha_d,
                                           std::uint64_t batch_index) {
  const Vec mean = to_vec(r.batch_key.mean);
  const Vec std = to_vec(r.batch_key.std);
  if (r.outcome.weights) {
    for (const kff::CandidateWeight& c : *r.outcome.weights) {
      DomainEntry& e = pool[c.index];
      const double a = alpha_d * c.weight;
      for (std::size_t k = 0; k < e.mean.size(); ++k) e.mean[k] = a * mean[k] + (1.0 - a) * e.mean[k];
      for (std::size_t k = 0; k < e.std.size(); ++k) e.std[k] = a * std[k] + (1.0 - a) * e.std[k];
      for (std::size_t k = 0; k < e.prompt.size(); ++k)
        e.prompt[k] = c.weight * r.learned_prompt[k] + (1.0 - c.weight) * e.prompt[k];
    }
    return pool;
  }
  pool.push_back({mean, std, to_vec(r.learned_prompt), batch_index});
  if (pool.size() <= capacity) return pool;

  double best = std::numeric_limits<double>::infinity();
  std::size_t bi = 0, bj = 1;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < pool[i].mean.size(); ++k) {
        d2 += (pool[i].mean[k] - pool[j].mean[k]) * (pool[i].mean[k] - pool[j].mean[k]);
        d2 += (pool[i].std[k] - pool[j].std[k]) * (pool[i].std[k] - pool[j].std[k]);
      }
      if (std::sqrt(d2) < best) {
        best = std::sqrt(d2);
        bi = i;
        bj = j;
      }
    }
  }
  DomainEntry& keep = pool[bi];
  const DomainEntry& drop = pool[bj];
  for (std::size_t k = 0; k < keep.mean.size(); ++k) {
    keep.mean[k] = (keep.mean[k] + drop.mean[k]) / 2.0;
    keep.std[k] = (keep.std[k] + drop.std[k]) / 2.0;
  }
  for (std::size_t k = 0; k < keep.prompt.size(); ++k) keep.prompt[k] = (keep.prompt[k] + drop.prompt[k]) / 2.0;
  keep.created_at = std::min(keep.created_at, drop.created_at);
  pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(bj));
  return pool;
}

struct Loss {
  double domain;
  double entropy;
  double total;
};

// Straight-line forward pass and objective.
inline Loss loss(const kff::ToyModel& model, const std::vector<kff::Vector>& batch, const kff::Vector& p_d,
                 const std::vector<kff::Vector>& p_t, const kff::SourceStats& source, const kff::LossWeights& w) {
  const kff::Matrix& A = model.extractor();
  const kff::Matrix& W = model.head();
  std::vector<Vec> feats;
  double ent = 0.0;
  for (std::size_t t = 0; t < batch.size(); ++t) {
    Vec x(A.cols());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = batch[t][i] + w.prompt_scale * (p_d[i] + p_t[t][i]);
    Vec z(A.rows(), 0.0);
    for (std::size_t r = 0; r < A.rows(); ++r)
      for (std::size_t i = 0; i < A.cols(); ++i) z[r] += A(r, i) * x[i];
    Vec l(W.rows(), 0.0);
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < W.rows(); ++c) {
      l[c] = model.bias()[c];
      for (std::size_t r = 0; r < W.cols(); ++r) l[c] += W(c, r) * z[r];
      peak = std::max(peak, l[c]);
    }
    double s = 0.0;
    for (double& v : l) s += (v = std::exp(v - peak));
    for (double& v : l) v /= s;
    ent += entropy(l);
    feats.push_back(z);
  }
  const Stats st = two_pass_stats(feats);
  double dm = 0.0, ds = 0.0;
  for (std::size_t k = 0; k < st.mean.size(); ++k) {
    dm += (source.mean[k] - st.mean[k]) * (source.mean[k] - st.mean[k]);
    ds += (source.std[k] - st.std[k]) * (source.std[k] - st.std[k]);
  }
  Loss out;
  out.domain = std::sqrt(dm) + w.alpha_std * std::sqrt(ds);
  out.entropy = ent / static_cast<double>(batch.size());
  out.total = out.domain + w.a * out.entropy;
  return out;
}

// AdamW with decoupled decay, bias-corrected moments; `grads[s]` is the
// gradient seen at step s + 1.
inline Vec adamw(Vec p, const std::vector<Vec>& grads, double lr, double b1, double b2, double eps, double wd) {
  Vec m(p.size(), 0.0), v(p.size(), 0.0);
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const double t = static_cast<double>(s + 1);
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] -= lr * wd * p[k];
      m[k] = b1 * m[k] + (1.0 - b1) * grads[s][k];
      v[k] = b2 * v[k] + (1.0 - b2) * grads[s][k] * grads[s][k];
      const double m_hat = m[k] / (1.0 - std::pow(b1, t));
      const double v_hat = v[k] / (1.0 - std::pow(b2, t));
      p[k] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
  return p;
}

}  // namespace oracle
