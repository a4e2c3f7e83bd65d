#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <span>
#include <vector>

#include "eigenopt/gridworld.hpp"
#include "eigenopt/options.hpp"

namespace eigenopt {

/// Column index into a QTable: 0..3 are primitive actions, kNumActions + i is option i.
using Column = int;

constexpr Column option_column(int option_index) { return kNumActions + option_index; }
constexpr bool is_primitive(Column c) { return c < kNumActions; }

inline constexpr std::array<Column, kNumActions> kPrimitiveColumns{0, 1, 2, 3};

/// Joint action/option value table Q(s, .) over A followed by discovered
/// options. Zero-initialised; option columns are append-only.
class QTable {
 public:
  explicit QTable(int num_states = 0) : num_states_(num_states), values_(static_cast<std::size_t>(num_states) * kNumActions, 0.0) {}

  int num_states() const { return num_states_; }
  int num_columns() const { return kNumActions + static_cast<int>(option_ids_.size()); }
  int num_options() const { return static_cast<int>(option_ids_.size()); }
  const std::vector<int>& option_ids() const { return option_ids_; }

  double operator()(State s, Column c) const { return values_[index(s, c)]; }
  double& operator()(State s, Column c) { return values_[index(s, c)]; }

  /// Appends a zero column for `option_id`; returns its column index.
  Column add_option_column(int option_id) {
    const int old_width = num_columns();
    std::vector<double> widened(static_cast<std::size_t>(num_states_) * (old_width + 1), 0.0);
    for (int s = 0; s < num_states_; ++s)
      std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(s) * old_width, old_width,
                  widened.begin() + static_cast<std::ptrdiff_t>(s) * (old_width + 1));
    values_ = std::move(widened);
    option_ids_.push_back(option_id);
    return old_width;
  }

  double max_over(State s, std::span<const Column> columns) const {
    double best = -std::numeric_limits<double>::infinity();
    for (Column c : columns) best = std::max(best, (*this)(s, c));
    return best;
  }

  /// FNV-1a over the raw value bytes and option ids.
  std::uint64_t hash() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&](const void* data, std::size_t len) {
      const auto* p = static_cast<const unsigned char*>(data);
      for (std::size_t i = 0; i < len; ++i) h = (h ^ p[i]) * 1099511628211ull;
    };
    mix(values_.data(), values_.size() * sizeof(double));
    mix(option_ids_.data(), option_ids_.size() * sizeof(int));
    return h;
  }

  const std::vector<double>& raw() const { return values_; }
  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  std::size_t index(State s, Column c) const {
    return static_cast<std::size_t>(s) * static_cast<std::size_t>(num_columns()) + static_cast<std::size_t>(c);
  }

  int num_states_;
  std::vector<double> values_;
  std::vector<int> option_ids_;
};

/// Fixed or growing option set with per-state lookup tables.
class OptionSet {
 public:
  OptionSet() = default;
  OptionSet(int num_states, std::vector<OptionDef> options) : num_states_(num_states) {
    available_.assign(static_cast<std::size_t>(num_states), {0, 1, 2, 3});
    consistent_.assign(static_cast<std::size_t>(num_states) * kNumActions, {});
    for (OptionDef& o : options) add(std::move(o));
  }
  explicit OptionSet(int num_states) : OptionSet(num_states, {}) {}

  void add(OptionDef o) {
    const int index = static_cast<int>(options_.size());
    for (State s = 0; s < num_states_; ++s) {
      if (!o.can_start(s)) continue;
      available_[s].push_back(option_column(index));
      consistent_[static_cast<std::size_t>(s) * kNumActions + to_index(o.act(s))].push_back(index);
    }
    options_.push_back(std::move(o));
  }

  int size() const { return static_cast<int>(options_.size()); }
  bool empty() const { return options_.empty(); }
  const OptionDef& operator[](int i) const { return options_[static_cast<std::size_t>(i)]; }
  const std::vector<OptionDef>& options() const { return options_; }

  /// A followed by the columns of options whose initiation set contains s.
  std::span<const Column> available(State s) const { return available_[s]; }

  /// Indices of options o with s in I_o and pi_o(s) = a.
  std::span<const int> consistent(State s, Action a) const {
    return consistent_[static_cast<std::size_t>(s) * kNumActions + to_index(a)];
  }

 private:
  int num_states_ = 0;
  std::vector<OptionDef> options_;
  std::vector<std::vector<Column>> available_;
  std::vector<std::vector<int>> consistent_;
};

}  // namespace eigenopt
