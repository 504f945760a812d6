#pragma once

#include <algorithm>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kwext/io.hpp"
#include "kwext/types.hpp"

namespace kwext {

// Sparse representation of the per-node mask: `allowed` holds exactly the
// ids whose mask value is 0; every other id is implicitly -inf.
struct SuffixSet {
  std::vector<TokenId> allowed;  // sorted ascending

  bool contains(TokenId id) const {
    return std::binary_search(allowed.begin(), allowed.end(), id);
  }
  double mask(TokenId id) const { return contains(id) ? 0.0 : kNegInf; }
};

// Prefix tree over tokenized keywords. A keyword ends with an explicit EOS
// edge: a node is terminal iff it has an EOS child. Children are kept sorted
// by token id, so iteration order and serialization are deterministic.
class Trie {
 public:
  static constexpr std::uint32_t kFormatVersion = 1;
  static constexpr std::uint32_t kRootIndex = 0;

  explicit Trie(std::uint32_t vocab_size = 0) : vocab_size_(vocab_size) {
    nodes_.emplace_back();  // root
  }

  std::uint32_t vocab_size() const { return vocab_size_; }
  std::size_t keyword_count() const { return keyword_count_; }
  bool empty() const { return keyword_count_ == 0; }
  std::size_t node_count() const { return nodes_.size(); }

  // Inserts one keyword; duplicates are tolerated and do not change the count.
  void insert(std::span<const TokenId> keyword_ids) {
    if (keyword_ids.empty()) throw DataError("empty keyword");
    for (TokenId id : keyword_ids)
      if (id == kBos || id == kEos) throw DataError("reserved token in keyword");
    std::uint32_t node = kRootIndex;
    for (TokenId id : keyword_ids) node = child_or_create(node, id);
    auto [eos_node, created] = child_or_create_report(node, kEos);
    (void)eos_node;
    if (created) ++keyword_count_;
  }

  static Trie build(const std::vector<TokenSeq>& keywords, std::uint32_t vocab_size) {
    Trie t(vocab_size);
    for (std::size_t i = 0; i < keywords.size(); ++i) {
      try {
        t.insert(keywords[i]);
      } catch (const DataError& e) {
        throw DataError("keyword " + std::to_string(i + 1) + ": " + e.what());
      }
    }
    return t;
  }

  // Node index for a prefix, or nullopt if the prefix is not a path.
  std::optional<std::uint32_t> find(std::span<const TokenId> prefix) const {
    std::uint32_t node = kRootIndex;
    for (TokenId id : prefix) {
      auto next = child(node, id);
      if (!next) return std::nullopt;
      node = *next;
    }
    return node;
  }

  std::optional<std::uint32_t> child(std::uint32_t node, TokenId id) const {
    const auto& ch = nodes_[node].children;
    auto it = std::lower_bound(ch.begin(), ch.end(), id,
                               [](const Edge& e, TokenId v) { return e.token < v; });
    if (it == ch.end() || it->token != id) return std::nullopt;
    return it->node;
  }

  struct Edge {
    TokenId token;
    std::uint32_t node;
  };

  const std::vector<Edge>& children(std::uint32_t node) const { return nodes_[node].children; }

  // Allowed next tokens after `prefix`. A non-path prefix yields an empty set.
  SuffixSet suffixes(std::span<const TokenId> prefix) const {
    SuffixSet s;
    auto node = find(prefix);
    if (!node) return s;
    for (const Edge& e : nodes_[*node].children) s.allowed.push_back(e.token);
    return s;
  }

  bool contains(std::span<const TokenId> keyword_ids) const {
    auto node = find(keyword_ids);
    return node && child(*node, kEos).has_value();
  }

  // All inserted keywords, in lexicographic token-id order.
  std::vector<TokenSeq> enumerate() const {
    std::vector<TokenSeq> out;
    TokenSeq path;
    enumerate_rec(kRootIndex, path, out);
    return out;
  }

  // Binary format: magic "TRIE", version u32, vocab size u32, then preorder
  // node records (child count u32, then per child: token id u32, subtree
  // offset u64). All integers little-endian; offsets are absolute.
  std::vector<std::uint8_t> serialize() const {
    // First pass: preorder byte offset of every node record.
    std::vector<std::uint64_t> offset(nodes_.size(), 0);
    std::uint64_t cursor = 4 + 4 + 4;  // magic + version + vocab size
    std::vector<std::uint32_t> order;
    order.reserve(nodes_.size());
    preorder(kRootIndex, [&](std::uint32_t n) {
      order.push_back(n);
      offset[n] = cursor;
      cursor += 4 + nodes_[n].children.size() * (4 + 8);
    });
    std::vector<std::uint8_t> bytes;
    bytes.reserve(cursor);
    bytes.insert(bytes.end(), {'T', 'R', 'I', 'E'});
    io::put_u32(bytes, kFormatVersion);
    io::put_u32(bytes, vocab_size_);
    for (std::uint32_t n : order) {
      io::put_u32(bytes, static_cast<std::uint32_t>(nodes_[n].children.size()));
      for (const Edge& e : nodes_[n].children) {
        io::put_u32(bytes, e.token);
        io::put_u64(bytes, offset[e.node]);
      }
    }
    return bytes;
  }

  static Trie deserialize(std::span<const std::uint8_t> bytes) {
    io::Reader r(bytes);
    char magic[4];
    r.take(magic, 4);
    if (std::memcmp(magic, "TRIE", 4) != 0)
      throw DataError("trie deserialize: bad magic at offset 0");
    std::uint32_t version = r.u32();
    if (version != kFormatVersion)
      throw DataError("trie deserialize: unsupported format version " + std::to_string(version) +
                      " at offset 4");
    Trie t(r.u32());
    t.nodes_.clear();
    t.read_node(bytes, r.pos(), 0);
    t.keyword_count_ = t.count_terminals(kRootIndex);
    return t;
  }

  void save(const std::string& path) const {
    auto bytes = serialize();
    io::write_file(path, bytes);
  }

  static Trie load(const std::string& path) {
    auto bytes = io::read_file(path);
    return deserialize(bytes);
  }

 private:
  struct Node {
    std::vector<Edge> children;
  };

  std::uint32_t child_or_create(std::uint32_t node, TokenId id) {
    return child_or_create_report(node, id).first;
  }

  std::pair<std::uint32_t, bool> child_or_create_report(std::uint32_t node, TokenId id) {
    auto& ch = nodes_[node].children;
    auto it = std::lower_bound(ch.begin(), ch.end(), id,
                               [](const Edge& e, TokenId v) { return e.token < v; });
    if (it != ch.end() && it->token == id) return {it->node, false};
    std::uint32_t fresh = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    // nodes_ may have reallocated; recompute the iterator.
    auto& ch2 = nodes_[node].children;
    auto it2 = std::lower_bound(ch2.begin(), ch2.end(), id,
                                [](const Edge& e, TokenId v) { return e.token < v; });
    ch2.insert(it2, Edge{id, fresh});
    return {fresh, true};
  }

  void enumerate_rec(std::uint32_t node, TokenSeq& path, std::vector<TokenSeq>& out) const {
    for (const Edge& e : nodes_[node].children) {
      if (e.token == kEos) {
        out.push_back(path);
        continue;
      }
      path.push_back(e.token);
      enumerate_rec(e.node, path, out);
      path.pop_back();
    }
  }

  template <typename Fn>
  void preorder(std::uint32_t node, Fn&& fn) const {
    fn(node);
    for (const Edge& e : nodes_[node].children) preorder(e.node, fn);
  }

  std::size_t count_terminals(std::uint32_t node) const {
    std::size_t n = 0;
    for (const Edge& e : nodes_[node].children) {
      if (e.token == kEos) ++n;
      n += count_terminals(e.node);
    }
    return n;
  }

  // Reads the node record at `at`, appending into nodes_; returns its index.
  std::uint32_t read_node(std::span<const std::uint8_t> bytes, std::uint64_t at, int depth) {
    if (depth > 4096) throw DataError("trie deserialize: nesting too deep");
    io::Reader r(bytes);
    r.seek(at);
    std::uint32_t count = r.u32();
    std::uint32_t self = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_[self].children.reserve(count);
    TokenId prev = 0;
    bool first = true;
    for (std::uint32_t i = 0; i < count; ++i) {
      r.seek(at + 4 + static_cast<std::uint64_t>(i) * 12);
      TokenId tok = r.u32();
      std::uint64_t off = r.u64();
      if (!first && tok <= prev)
        throw DataError("trie deserialize: children out of order at offset " +
                        std::to_string(at));
      first = false;
      prev = tok;
      if (off <= at || off >= bytes.size())
        throw DataError("trie deserialize: bad subtree offset at offset " + std::to_string(at));
      std::uint32_t child_index = read_node(bytes, off, depth + 1);
      nodes_[self].children.push_back(Edge{tok, child_index});
    }
    return self;
  }

  std::vector<Node> nodes_;
  std::uint32_t vocab_size_ = 0;
  std::size_t keyword_count_ = 0;
};

}  // namespace kwext
