#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include "rwt/binary_io.hpp"
#include "rwt/error.hpp"
#include "rwt/rng.hpp"
#include "rwt/types.hpp"

namespace rwt {

using Centroid = std::array<float, kDescriptorDim>;

struct VocabNode {
  std::int32_t parent = -1;
  std::vector<std::uint32_t> children;
  Centroid centroid{};
  float weight = 0.0F;  // idf, leaves only
  bool is_leaf = false;
  std::optional<std::uint32_t> word_id;
};

/// Sparse word -> tf-idf weight, L1-normalized. Iteration order is ascending word id.
using BowVector = std::map<std::uint32_t, double>;

struct VocabParams {
  std::uint32_t branching = 10;
  std::uint32_t depth = 5;
  std::uint64_t seed = 42;
  int max_lloyd_iters = 50;
  double min_centroid_shift = 1e-6;
};

inline double squared_distance(const Centroid& c, const float* x) {
  double s = 0.0;
  for (std::size_t k = 0; k < kDescriptorDim; ++k) {
    const double d = static_cast<double>(c[k]) - x[k];
    s += d * d;
  }
  return s;
}

/// Hierarchical k-means vocabulary with idf-weighted leaves. Node 0 is the root; nodes are stored
/// in breadth-first order.
class VocabTree {
 public:
  VocabTree() = default;
  VocabTree(std::uint32_t branching, std::uint32_t depth, std::vector<VocabNode> nodes)
      : branching_(branching), depth_(depth), nodes_(std::move(nodes)) {
    index_words();
  }

  std::uint32_t branching() const { return branching_; }
  std::uint32_t depth() const { return depth_; }
  std::size_t word_count() const { return word_nodes_.size(); }
  const std::vector<VocabNode>& nodes() const { return nodes_; }
  const VocabNode& word_node(std::uint32_t word) const { return nodes_[word_nodes_.at(word)]; }
  float word_weight(std::uint32_t word) const { return word_node(word).weight; }
  bool empty() const { return nodes_.empty(); }

  /// Greedy descent: nearest child centroid at every level, lower index on ties.
  std::uint32_t word_of(const float* x) const {
    std::uint32_t node = 0;
    while (!nodes_[node].is_leaf) {
      const auto& children = nodes_[node].children;
      std::uint32_t best = children.front();
      double best_d = std::numeric_limits<double>::infinity();
      for (std::uint32_t c : children) {
        const double d = squared_distance(nodes_[c].centroid, x);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      node = best;
    }
    return *nodes_[node].word_id;
  }

  std::uint32_t word_of(const HierarchicalDescriptor& d) const { return word_of(d.values.data()); }

  void set_word_weight(std::uint32_t word, float w) { nodes_[word_nodes_.at(word)].weight = w; }

 private:
  void index_words() {
    word_nodes_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].is_leaf) {
        if (!nodes_[i].word_id || *nodes_[i].word_id != word_nodes_.size()) {
          throw Error(Errc::Corrupt, "leaf word ids are not consecutive in breadth-first order");
        }
        word_nodes_.push_back(static_cast<std::uint32_t>(i));
      }
    }
  }

  std::uint32_t branching_ = 0;
  std::uint32_t depth_ = 0;
  std::vector<VocabNode> nodes_;
  std::vector<std::uint32_t> word_nodes_;
};

namespace detail {

struct KmeansOutcome {
  std::vector<Centroid> centroids;
  std::vector<std::vector<std::size_t>> members;
};

// k-means++ seeding then Lloyd iterations. Final memberships are computed against the returned
// centroids, so every member is nearest to its own centroid. Empty clusters are dropped.
inline KmeansOutcome kmeans(const std::vector<const float*>& data, const std::vector<std::size_t>& idx,
                            std::uint32_t k, const VocabParams& params, Rng& rng) {
  const std::size_t n = idx.size();
  std::vector<Centroid> centers;
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  const auto add_center = [&](std::size_t member) {
    Centroid c;
    std::copy(data[idx[member]], data[idx[member]] + kDescriptorDim, c.begin());
    centers.push_back(c);
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(centers.back(), data[idx[i]]));
    }
  };
  add_center(rng.index(n));
  while (centers.size() < k) {
    double total = 0.0;
    for (double d : nearest) total += d;
    if (total <= 0.0) break;  // all remaining points coincide with a center
    const double target = rng.uniform() * total;
    double acc = 0.0;
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      acc += nearest[i];
      if (acc > target && nearest[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (nearest[pick] <= 0.0) break;
    add_center(pick);
  }

  std::vector<std::uint32_t> assign(n, 0);
  const auto assign_all = [&]() {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::uint32_t c = 0; c < centers.size(); ++c) {
        const double d = squared_distance(centers[c], data[idx[i]]);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      changed = changed || assign[i] != best;
      assign[i] = best;
    }
    return changed;
  };

  assign_all();
  for (int it = 0; it < params.max_lloyd_iters; ++it) {
    std::vector<std::array<double, kDescriptorDim>> sums(centers.size());
    std::vector<std::size_t> counts(centers.size(), 0);
    for (auto& s : sums) s.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const float* x = data[idx[i]];
      auto& s = sums[assign[i]];
      for (std::size_t d = 0; d < kDescriptorDim; ++d) s[d] += x[d];
      ++counts[assign[i]];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] == 0) continue;
      Centroid next;
      double shift = 0.0;
      for (std::size_t d = 0; d < kDescriptorDim; ++d) {
        next[d] = static_cast<float>(sums[c][d] / static_cast<double>(counts[c]));
        const double delta = static_cast<double>(next[d]) - centers[c][d];
        shift += delta * delta;
      }
      max_shift = std::max(max_shift, std::sqrt(shift));
      centers[c] = next;
    }
    const bool changed = assign_all();
    if (!changed || max_shift < params.min_centroid_shift) break;
  }

  KmeansOutcome out;
  std::vector<std::vector<std::size_t>> groups(centers.size());
  for (std::size_t i = 0; i < n; ++i) groups[assign[i]].push_back(idx[i]);
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (groups[c].empty()) continue;
    out.centroids.push_back(centers[c]);
    out.members.push_back(std::move(groups[c]));
  }
  return out;
}

}  // namespace detail

/// Trains the vocabulary over a set of documents (one descriptor set per frame). Leaf weights are
/// idf = ln(N_docs / docs containing the word).
inline VocabTree train_vocabulary(std::span<const std::vector<HierarchicalDescriptor>> documents,
                                  const VocabParams& params = {}) {
  if (params.branching < 2 || params.depth < 1) {
    throw Error(Errc::ConfigError, "vocabulary needs branching >= 2 and depth >= 1");
  }
  std::vector<const float*> data;
  for (const auto& doc : documents) {
    for (const auto& d : doc) data.push_back(d.values.data());
  }
  if (data.empty()) throw Error(Errc::InsufficientData, "training corpus is empty");

  Rng rng(params.seed);
  std::vector<VocabNode> nodes(1);
  struct Pending {
    std::uint32_t node;
    std::uint32_t level;
    std::vector<std::size_t> members;
  };
  std::deque<Pending> queue;
  {
    std::vector<std::size_t> all(data.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    queue.push_back({0, 0, std::move(all)});
  }
  while (!queue.empty()) {
    Pending job = std::move(queue.front());
    queue.pop_front();
    if (job.level >= params.depth || job.members.size() <= 1) {
      nodes[job.node].is_leaf = true;
      continue;
    }
    auto km = detail::kmeans(data, job.members, params.branching, params, rng);
    if (km.centroids.size() <= 1) {
      nodes[job.node].is_leaf = true;
      continue;
    }
    for (std::size_t c = 0; c < km.centroids.size(); ++c) {
      const auto child = static_cast<std::uint32_t>(nodes.size());
      VocabNode node;
      node.parent = static_cast<std::int32_t>(job.node);
      node.centroid = km.centroids[c];
      nodes.push_back(node);
      nodes[job.node].children.push_back(child);
      queue.push_back({child, job.level + 1, std::move(km.members[c])});
    }
  }
  std::uint32_t next_word = 0;
  for (auto& node : nodes) {
    if (node.is_leaf) node.word_id = next_word++;
  }
  VocabTree tree(params.branching, params.depth, std::move(nodes));

  std::vector<std::size_t> doc_freq(tree.word_count(), 0);
  for (const auto& doc : documents) {
    std::set<std::uint32_t> seen;
    for (const auto& d : doc) seen.insert(tree.word_of(d));
    for (auto w : seen) ++doc_freq[w];
  }
  const double n_docs = static_cast<double>(documents.size());
  for (std::uint32_t w = 0; w < tree.word_count(); ++w) {
    const double idf = doc_freq[w] > 0 ? std::log(n_docs / static_cast<double>(doc_freq[w])) : 0.0;
    tree.set_word_weight(w, static_cast<float>(idf));
  }
  return tree;
}

/// Quantizes descriptors to words and returns the L1-normalized tf-idf vector. Zero-weight words
/// are omitted.
inline BowVector transform(std::span<const HierarchicalDescriptor> descriptors, const VocabTree& tree) {
  BowVector bow;
  if (descriptors.empty() || tree.empty()) return bow;
  std::map<std::uint32_t, std::size_t> counts;
  for (const auto& d : descriptors) ++counts[tree.word_of(d)];
  const double total = static_cast<double>(descriptors.size());
  double norm = 0.0;
  for (const auto& [word, count] : counts) {
    const double w = static_cast<double>(count) / total * tree.word_weight(word);
    if (w > 0.0) {
      bow[word] = w;
      norm += w;
    }
  }
  if (norm <= 0.0) return {};
  for (auto& [word, w] : bow) w /= norm;
  return bow;
}

/// L1 score: 1 - 0.5 * sum |a_w - b_w|, in [0, 1].
inline double similarity(const BowVector& a, const BowVector& b) {
  if (a.empty() || b.empty()) return 0.0;
  double l1 = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      l1 += std::abs(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      l1 += std::abs(ib->second);
      ++ib;
    } else {
      l1 += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return std::clamp(1.0 - 0.5 * l1, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// RWTV binary format: magic, version, k, L, node count, word count, dim, then breadth-first nodes
// {parent i32, is_leaf u8, word_id u32, weight f32, centroid f32[dim]}, then CRC32 of all
// preceding bytes. Little-endian.

inline constexpr std::uint32_t kVocabVersion = 1;
inline constexpr std::uint32_t kNoWord = 0xFFFFFFFFU;

inline std::vector<std::uint8_t> serialize_vocab(const VocabTree& tree) {
  binary::Writer w;
  w.bytes("RWTV", 4);
  w.u32(kVocabVersion);
  w.u32(tree.branching());
  w.u32(tree.depth());
  w.u32(static_cast<std::uint32_t>(tree.nodes().size()));
  w.u32(static_cast<std::uint32_t>(tree.word_count()));
  w.u32(static_cast<std::uint32_t>(kDescriptorDim));
  for (const auto& node : tree.nodes()) {
    w.i32(node.parent);
    w.u8(node.is_leaf ? 1 : 0);
    w.u32(node.word_id ? *node.word_id : kNoWord);
    w.f32(node.weight);
    for (float c : node.centroid) w.f32(c);
  }
  const auto& buf = w.buffer();
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  w.u32(crc);
  return w.buffer();
}

inline VocabTree deserialize_vocab(const std::vector<std::uint8_t>& bytes) {
  constexpr std::size_t kHeader = 28;
  if (bytes.size() >= 4 && !std::equal(bytes.begin(), bytes.begin() + 4, "RWTV")) {
    throw Error(Errc::BadMagic, "not an RWTV vocabulary file");
  }
  if (bytes.size() < kHeader + 4) throw Error(Errc::Corrupt, "vocabulary file truncated");
  binary::Reader r(bytes, Errc::Corrupt, "vocabulary");
  r.u32();  // magic
  const std::uint32_t version = r.u32();
  if (version != kVocabVersion) {
    throw Error(Errc::VersionMismatch, "vocabulary version " + std::to_string(version));
  }
  const std::size_t payload = bytes.size() - 4;
  std::uint32_t stored_crc = 0;
  for (int i = 0; i < 4; ++i) stored_crc |= static_cast<std::uint32_t>(bytes[payload + i]) << (8 * i);
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(payload)));
  if (crc != stored_crc) throw Error(Errc::Corrupt, "vocabulary checksum mismatch");

  const std::uint32_t k = r.u32();
  const std::uint32_t depth = r.u32();
  const std::uint32_t node_count = r.u32();
  const std::uint32_t word_count = r.u32();
  const std::uint32_t dim = r.u32();
  if (dim != kDescriptorDim) throw Error(Errc::Corrupt, "vocabulary dimension " + std::to_string(dim));
  constexpr std::size_t kNodeBytes = 4 + 1 + 4 + 4 + 4 * kDescriptorDim;
  if (payload - kHeader != static_cast<std::size_t>(node_count) * kNodeBytes || node_count == 0) {
    throw Error(Errc::Corrupt, "vocabulary node table size mismatch");
  }
  std::vector<VocabNode> nodes(node_count);
  for (std::uint32_t i = 0; i < node_count; ++i) {
    auto& node = nodes[i];
    node.parent = r.i32();
    node.is_leaf = r.u8() != 0;
    const std::uint32_t word = r.u32();
    if (word != kNoWord) node.word_id = word;
    node.weight = r.f32();
    for (float& c : node.centroid) c = r.f32();
    if (i == 0 ? node.parent != -1 : (node.parent < 0 || static_cast<std::uint32_t>(node.parent) >= i)) {
      throw Error(Errc::Corrupt, "node " + std::to_string(i) + " has an invalid parent");
    }
    if (i > 0) nodes[static_cast<std::size_t>(node.parent)].children.push_back(i);
  }
  for (const auto& node : nodes) {
    if (node.is_leaf != node.children.empty()) throw Error(Errc::Corrupt, "leaf flag inconsistent");
  }
  VocabTree tree(k, depth, std::move(nodes));
  if (tree.word_count() != word_count) throw Error(Errc::Corrupt, "word count mismatch");
  return tree;
}

inline void save_vocab(const VocabTree& tree, const std::filesystem::path& path) {
  binary::write_file(path, serialize_vocab(tree));
}

inline VocabTree load_vocab(const std::filesystem::path& path) {
  return deserialize_vocab(binary::read_file(path));
}

}  // namespace rwt
