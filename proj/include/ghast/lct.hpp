#pragma once

#include <cstdint>
#include <vector>

namespace ghast {

// Link-cut tree over a growing forest (no cuts). Supports adding a delta to
// every node on the root->v path and reading one node's value, both in
// amortized O(log n). This is the dual of point-update/subtree-sum: keeping a
// weighted block set S, "add block x with weight w to S" becomes a path add on
// root->x, and "total weight of S inside the subtree of b" becomes a point
// read at b.
class LinkCutTree {
 public:
  using Handle = std::uint32_t;  // 1-based; 0 is the null sentinel

  LinkCutTree() : n_(1) {}

  Handle make_node(std::int64_t initial = 0) {
    n_.push_back(Node{});
    n_.back().val = initial;
    return static_cast<Handle>(n_.size() - 1);
  }

  std::size_t size() const { return n_.size() - 1; }

  // child must be a fresh node (no parent, no preferred children).
  void link(Handle child, Handle parent) { n_[child].p = parent; }

  void path_add(Handle v, std::int64_t delta) {
    access(v);
    n_[v].val += delta;
    if (n_[v].l) apply(n_[v].l, delta);
  }

  std::int64_t value(Handle v) {
    access(v);
    return n_[v].val;
  }

 private:
  struct Node {
    Handle l = 0, r = 0, p = 0;
    std::int64_t val = 0;
    std::int64_t lazy = 0;
  };
  std::vector<Node> n_;

  bool is_splay_root(Handle x) const {
    Handle p = n_[x].p;
    return p == 0 || (n_[p].l != x && n_[p].r != x);
  }

  void apply(Handle x, std::int64_t delta) {
    n_[x].val += delta;
    n_[x].lazy += delta;
  }

  void push(Handle x) {
    if (n_[x].lazy == 0) return;
    if (n_[x].l) apply(n_[x].l, n_[x].lazy);
    if (n_[x].r) apply(n_[x].r, n_[x].lazy);
    n_[x].lazy = 0;
  }

  void rotate(Handle x) {
    Handle p = n_[x].p;
    Handle g = n_[p].p;
    bool left = n_[p].l == x;
    Handle b = left ? n_[x].r : n_[x].l;
    if (!is_splay_root(p)) {
      if (n_[g].l == p)
        n_[g].l = x;
      else
        n_[g].r = x;
    }
    n_[x].p = g;
    if (left) {
      n_[x].r = p;
      n_[p].l = b;
    } else {
      n_[x].l = p;
      n_[p].r = b;
    }
    n_[p].p = x;
    if (b) n_[b].p = p;
  }

  void splay(Handle x) {
    // Push pending tags down from the splay root to x first.
    push_path(x);
    while (!is_splay_root(x)) {
      Handle p = n_[x].p;
      if (!is_splay_root(p)) {
        Handle g = n_[p].p;
        if ((n_[g].l == p) == (n_[p].l == x))
          rotate(p);
        else
          rotate(x);
      }
      rotate(x);
    }
  }

  void push_path(Handle x) {
    stack_.clear();
    Handle cur = x;
    while (!is_splay_root(cur)) {
      stack_.push_back(cur);
      cur = n_[cur].p;
    }
    push(cur);
    for (auto it = stack_.rbegin(); it != stack_.rend(); ++it) push(*it);
  }

  void access(Handle v) {
    Handle last = 0;
    for (Handle cur = v; cur; cur = n_[cur].p) {
      splay(cur);
      n_[cur].r = last;
      last = cur;
    }
    splay(v);
  }

  std::vector<Handle> stack_;
};

}  // namespace ghast
