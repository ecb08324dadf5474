#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "plt/errors.hpp"
#include "plt/tensor.hpp"

namespace plt {

/// Append-only per-layer key/value store. Used as the shared cache written by
/// loop 1 and as the full private cache of a loop that keeps its own.
class SharedKVCache {
 public:
  SharedKVCache() = default;
  SharedKVCache(std::size_t layers, std::size_t width) : width_(width), layers_(layers) {}

  std::size_t layers() const { return layers_.size(); }
  std::size_t width() const { return width_; }

  /// Entry count; equal across layers once every layer of a pass has appended.
  std::size_t size() const { return layers_.empty() ? 0 : layers_.front().positions.size(); }
  std::size_t size(std::size_t layer) const { return layers_.at(layer).positions.size(); }

  void append(std::size_t layer, int position, std::span<const double> k, std::span<const double> v) {
    auto& l = layers_.at(layer);
    if (k.size() != width_ || v.size() != width_) throw DimensionError("kv cache: row width mismatch");
    if (!l.positions.empty() && position <= l.positions.back()) {
      throw std::invalid_argument("kv cache: positions must increase");
    }
    l.positions.push_back(position);
    l.k.insert(l.k.end(), k.begin(), k.end());
    l.v.insert(l.v.end(), v.begin(), v.end());
  }

  Tensor keys(std::size_t layer) const {
    const auto& l = layers_.at(layer);
    return Tensor({l.positions.size(), width_}, l.k);
  }
  Tensor values(std::size_t layer) const {
    const auto& l = layers_.at(layer);
    return Tensor({l.positions.size(), width_}, l.v);
  }
  const std::vector<int>& positions(std::size_t layer) const { return layers_.at(layer).positions; }

  std::span<const double> key_row(std::size_t layer, std::size_t i) const {
    return std::span<const double>(layers_.at(layer).k).subspan(i * width_, width_);
  }
  std::span<const double> value_row(std::size_t layer, std::size_t i) const {
    return std::span<const double>(layers_.at(layer).v).subspan(i * width_, width_);
  }

 private:
  struct Layer {
    std::vector<int> positions;
    std::vector<double> k;
    std::vector<double> v;
  };
  std::size_t width_ = 0;
  std::vector<Layer> layers_;
};

/// Fixed-capacity ring of the most recent (position, K, V) rows.
class KVRing {
 public:
  KVRing() = default;
  KVRing(std::size_t capacity, std::size_t width)
      : capacity_(capacity), width_(width), positions_(capacity, 0), k_(capacity * width), v_(capacity * width) {}

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return count_; }

  void push(int position, std::span<const double> k, std::span<const double> v) {
    if (capacity_ == 0) return;
    if (k.size() != width_ || v.size() != width_) throw DimensionError("kv ring: row width mismatch");
    if (count_ > 0 && position <= newest_position()) {
      throw std::invalid_argument("kv ring: positions must increase");
    }
    const std::size_t slot = (head_ + count_) % capacity_;
    const std::size_t dst = count_ < capacity_ ? slot : head_;
    positions_[dst] = position;
    std::copy(k.begin(), k.end(), k_.begin() + static_cast<std::ptrdiff_t>(dst * width_));
    std::copy(v.begin(), v.end(), v_.begin() + static_cast<std::ptrdiff_t>(dst * width_));
    if (count_ < capacity_) {
      ++count_;
    } else {
      head_ = (head_ + 1) % capacity_;
    }
  }

  int newest_position() const { return positions_[(head_ + count_ - 1) % capacity_]; }

  /// Stored positions, oldest first.
  std::vector<int> positions() const {
    std::vector<int> out(count_);
    for (std::size_t i = 0; i < count_; ++i) out[i] = positions_[(head_ + i) % capacity_];
    return out;
  }
  Tensor keys() const { return gather(k_); }
  Tensor values() const { return gather(v_); }

 private:
  Tensor gather(const std::vector<double>& buf) const {
    std::vector<double> out(count_ * width_);
    for (std::size_t i = 0; i < count_; ++i) {
      const std::size_t slot = (head_ + i) % capacity_;
      std::copy_n(buf.begin() + static_cast<std::ptrdiff_t>(slot * width_), width_,
                  out.begin() + static_cast<std::ptrdiff_t>(i * width_));
    }
    return Tensor({count_, width_}, std::move(out));
  }

  std::size_t capacity_ = 0;
  std::size_t width_ = 0;
  std::size_t head_ = 0;
  std::size_t count_ = 0;
  std::vector<int> positions_;
  std::vector<double> k_;
  std::vector<double> v_;
};

/// Sliding-window caches for the non-first loops: one ring of capacity w per
/// (layer, loop), loop in [2, L].
class WindowKVCache {
 public:
  WindowKVCache() = default;
  WindowKVCache(std::size_t layers, int loops, std::size_t window, std::size_t width)
      : loops_(loops), window_(window) {
    const std::size_t extra = loops > 1 ? static_cast<std::size_t>(loops - 1) : 0;
    rings_.assign(layers * extra, KVRing(window, width));
  }

  std::size_t window() const { return window_; }
  int loops() const { return loops_; }

  KVRing& ring(std::size_t layer, int loop) { return rings_.at(index(layer, loop)); }
  const KVRing& ring(std::size_t layer, int loop) const { return rings_.at(index(layer, loop)); }

  void append(std::size_t layer, int loop, int position, std::span<const double> k,
              std::span<const double> v) {
    ring(layer, loop).push(position, k, v);
  }

  /// Entries across every non-first loop of one layer.
  std::size_t size(std::size_t layer) const {
    std::size_t n = 0;
    for (int loop = 2; loop <= loops_; ++loop) n += ring(layer, loop).size();
    return n;
  }

 private:
  std::size_t index(std::size_t layer, int loop) const {
    if (loop < 2 || loop > loops_) {
      throw InvalidLoopError("window cache: loop " + std::to_string(loop) + " outside [2, " +
                             std::to_string(loops_) + "]");
    }
    return layer * static_cast<std::size_t>(loops_ - 1) + static_cast<std::size_t>(loop - 2);
  }

  int loops_ = 1;
  std::size_t window_ = 0;
  std::vector<KVRing> rings_;
};

}  // namespace plt
