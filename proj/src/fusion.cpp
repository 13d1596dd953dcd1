#include "kff/fusion.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "kff/kernels.hpp"

namespace kff {

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

template <typename Pool, typename Record>
void check_version(const Pool& pool, const Record& outcome, const char* what) {
  if (outcome.pool_version != pool.version()) {
    throw ConsistencyError(std::string(what) + ": fission outcome is from pool version " +
                           std::to_string(outcome.pool_version) + ", pool is at " +
                           std::to_string(pool.version()));
  }
  if (outcome.weights) {
    for (const CandidateWeight& c : *outcome.weights) {
      if (c.index >= pool.size()) throw ConsistencyError(std::string(what) + ": stale candidate index");
    }
  }
}

}  // namespace

void renormalize(Vector& key) {
  double total = 0.0;
  for (double v : key) total += v;
  if (total <= 0.0) throw DomainError("renormalize: key has no mass");
  for (double& v : key) v /= total;
}

std::vector<MstEdge> minimum_spanning_tree(std::span<const Vector> keys) {
  const std::size_t n = keys.size();
  std::vector<MstEdge> edges;
  edges.reserve(n * (n - (n > 0 ? 1 : 0)) / 2);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      edges.push_back({i, j, 1.0 - cosine_sim(keys[i].span(), keys[j].span())});
    }
  }
  std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
    if (x.distance != y.distance) return x.distance < y.distance;
    if (x.a != y.a) return x.a < y.a;
    return x.b < y.b;
  });
  DisjointSets sets(n);
  std::vector<MstEdge> tree;
  tree.reserve(n > 0 ? n - 1 : 0);
  for (const MstEdge& e : edges) {
    if (sets.unite(e.a, e.b)) {
      tree.push_back(e);
      if (tree.size() + 1 == n) break;
    }
  }
  return tree;
}

MstClustering single_linkage(std::span<const Vector> keys, std::size_t groups) {
  const std::size_t n = keys.size();
  if (groups == 0 || groups > n) throw DomainError("single_linkage: group count out of range");
  const std::vector<MstEdge> tree = minimum_spanning_tree(keys);
  // The tree is sorted ascending; keeping the n - groups lightest edges is
  // the same as removing the groups - 1 heaviest.
  DisjointSets sets(n);
  for (std::size_t e = 0; e < n - groups; ++e) sets.unite(tree[e].a, tree[e].b);

  MstClustering out;
  out.group_of.assign(n, 0);
  std::vector<std::size_t> id_of_root(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t root = sets.find(i);
    if (id_of_root[root] == n) id_of_root[root] = out.num_groups++;
    out.group_of[i] = id_of_root[root];
  }
  return out;
}

MstClustering mst_compact(ClassPromptPool& pool) {
  if (pool.size() <= pool.capacity()) throw DomainError("mst_compact: pool is not over capacity");
  std::vector<Vector> keys;
  keys.reserve(pool.size());
  for (const ClassPromptEntry& e : pool.entries()) keys.push_back(e.key);
  MstClustering clustering = single_linkage(keys, pool.capacity());

  std::vector<std::vector<std::size_t>> members(clustering.num_groups);
  for (std::size_t i = 0; i < pool.size(); ++i) members[clustering.group_of[i]].push_back(i);

  std::vector<ClassPromptEntry>& entries = pool.mutable_entries();
  std::vector<ClassPromptEntry> merged;
  merged.reserve(clustering.num_groups);
  for (const std::vector<std::size_t>& group : members) {
    if (group.size() == 1) {
      merged.push_back(std::move(entries[group.front()]));
      continue;
    }
    ClassPromptEntry out{Vector(entries[group.front()].key.size()),
                         Vector(entries[group.front()].prompt.size()),
                         entries[group.front()].created_at};
    for (std::size_t i : group) {
      for (std::size_t k = 0; k < out.key.size(); ++k) out.key[k] += entries[i].key[k];
      for (std::size_t k = 0; k < out.prompt.size(); ++k) out.prompt[k] += entries[i].prompt[k];
      out.created_at = std::min(out.created_at, entries[i].created_at);
    }
    const double count = static_cast<double>(group.size());
    for (double& v : out.key) v /= count;
    for (double& v : out.prompt) v /= count;
    renormalize(out.key);
    merged.push_back(std::move(out));
  }
  entries = std::move(merged);
  pool.bump_version();
  return clustering;
}

ClassUpdateSummary update_class_pool(ClassPromptPool& pool, std::span<const ClassUpdateRecord> records,
                                     const ClassFusionParams& params, std::uint64_t batch_index) {
  if (!(params.gamma_h >= 0.0)) throw ConfigError("update_class_pool: gamma_h must be >= 0");
  if (!(params.alpha_c >= 0.0 && params.alpha_c <= 1.0)) {
    throw ConfigError("update_class_pool: alpha_c must lie in [0, 1]");
  }
  for (const ClassUpdateRecord& r : records) {
    check_version(pool, r.outcome, "update_class_pool");
    require_same_dim(r.learned_prompt.size(), pool.prompt_dim(), "update_class_pool: prompt");
  }

  ClassUpdateSummary summary;
  std::vector<ClassPromptEntry>& entries = pool.mutable_entries();
  std::vector<bool> touched(entries.size(), false);
  std::vector<const ClassUpdateRecord*> fissions;

  if (params.mode == ClassUpdateMode::kSequential) {
    for (const ClassUpdateRecord& r : records) {
      if (entropy(r.prediction.span()) > params.gamma_h) {
        ++summary.gated;
        continue;
      }
      if (r.outcome.fissioned()) {
        entries.push_back({r.pseudo_label, r.learned_prompt, batch_index});
        ++summary.appended;
        continue;
      }
      for (const CandidateWeight& c : *r.outcome.weights) {
        ClassPromptEntry& e = entries[c.index];
        kernels::blend(e.key.span(), params.alpha_c * c.weight, r.prediction.span());
        kernels::blend(e.prompt.span(), c.weight, r.learned_prompt.span());
        touched[c.index] = true;
        ++summary.blended;
      }
    }
  } else {
    // Every entry moves by the mean over all b samples; samples that are
    // gated, fissioned, or not matched to the entry contribute w = 0.
    const std::size_t existing = entries.size();
    const double inv_b = records.empty() ? 0.0 : 1.0 / static_cast<double>(records.size());
    std::vector<Vector> key_delta(existing, Vector(existing ? entries[0].key.size() : 0));
    std::vector<Vector> prompt_delta(existing, Vector(pool.prompt_dim()));
    for (const ClassUpdateRecord& r : records) {
      if (entropy(r.prediction.span()) > params.gamma_h) {
        ++summary.gated;
        continue;
      }
      if (r.outcome.fissioned()) {
        fissions.push_back(&r);
        continue;
      }
      for (const CandidateWeight& c : *r.outcome.weights) {
        const ClassPromptEntry& e = entries[c.index];
        const double ak = params.alpha_c * c.weight;
        for (std::size_t k = 0; k < e.key.size(); ++k) {
          key_delta[c.index][k] += ak * (r.prediction[k] - e.key[k]);
        }
        for (std::size_t k = 0; k < e.prompt.size(); ++k) {
          prompt_delta[c.index][k] += c.weight * (r.learned_prompt[k] - e.prompt[k]);
        }
        touched[c.index] = true;
        ++summary.blended;
      }
    }
    for (std::size_t i = 0; i < existing; ++i) {
      if (!touched[i]) continue;
      kernels::add_scaled(entries[i].key.span(), inv_b, key_delta[i].span());
      kernels::add_scaled(entries[i].prompt.span(), inv_b, prompt_delta[i].span());
    }
    for (const ClassUpdateRecord* r : fissions) {
      entries.push_back({r->pseudo_label, r->learned_prompt, batch_index});
      ++summary.appended;
    }
  }

  for (std::size_t i = 0; i < touched.size(); ++i) {
    if (touched[i]) renormalize(entries[i].key);
  }
  if (summary.appended > 0 || summary.blended > 0) pool.bump_version();
  if (pool.size() > pool.capacity()) summary.compaction = mst_compact(pool);
  return summary;
}

std::pair<std::size_t, std::size_t> fuse_nearest_pair(DomainPromptPool& pool) {
  if (pool.size() < 2) throw DomainError("fuse_nearest_pair: need at least two entries");
  std::vector<DomainPromptEntry>& entries = pool.mutable_entries();
  std::size_t best_i = 0;
  std::size_t best_j = 1;
  double best = stats_distance(entries[0].key, entries[1].key);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    for (std::size_t j = i + 1; j < entries.size(); ++j) {
      const double d = stats_distance(entries[i].key, entries[j].key);
      if (d < best) {
        best = d;
        best_i = i;
        best_j = j;
      }
    }
  }
  DomainPromptEntry& keep = entries[best_i];
  const DomainPromptEntry& drop = entries[best_j];
  for (std::size_t k = 0; k < keep.key.mean.size(); ++k) {
    keep.key.mean[k] = (keep.key.mean[k] + drop.key.mean[k]) / 2.0;
    keep.key.std[k] = (keep.key.std[k] + drop.key.std[k]) / 2.0;
  }
  for (std::size_t k = 0; k < keep.prompt.size(); ++k) {
    keep.prompt[k] = (keep.prompt[k] + drop.prompt[k]) / 2.0;
  }
  keep.created_at = std::min(keep.created_at, drop.created_at);
  entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(best_j));
  pool.bump_version();
  return {best_i, best_j};
}

DomainUpdateSummary update_domain_pool(DomainPromptPool& pool, const DomainUpdateRecord& record,
                                       double alpha_d, std::uint64_t batch_index) {
  if (!(alpha_d >= 0.0 && alpha_d <= 1.0)) throw ConfigError("update_domain_pool: alpha_d must lie in [0, 1]");
  check_version(pool, record.outcome, "update_domain_pool");
  require_same_dim(record.learned_prompt.size(), pool.prompt_dim(), "update_domain_pool: prompt");

  DomainUpdateSummary summary;
  if (record.outcome.fissioned()) {
    pool.mutable_entries().push_back({record.batch_key, record.learned_prompt, batch_index});
    pool.bump_version();
    summary.appended = true;
    if (pool.size() > pool.capacity()) summary.fused = fuse_nearest_pair(pool);
    return summary;
  }
  std::vector<DomainPromptEntry>& entries = pool.mutable_entries();
  for (const CandidateWeight& c : *record.outcome.weights) {
    DomainPromptEntry& e = entries[c.index];
    require_same_dim(e.key.dim(), record.batch_key.dim(), "update_domain_pool: key");
    const double ak = alpha_d * c.weight;
    kernels::blend(e.key.mean.span(), ak, record.batch_key.mean.span());
    kernels::blend(e.key.std.span(), ak, record.batch_key.std.span());
    kernels::blend(e.prompt.span(), c.weight, record.learned_prompt.span());
    ++summary.blended;
  }
  if (summary.blended > 0) pool.bump_version();
  return summary;
}

}  // namespace kff
